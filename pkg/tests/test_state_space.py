import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affine_kit.state_space import (
    CanonicalOrthantPlane,
    FullSpace,
    HalfLine,
    Parabola,
    TransformPoint,
    space_from_config,
)

ALL_SPACES = [
    FullSpace(dim=2),
    HalfLine(),
    CanonicalOrthantPlane(1, 1),
    CanonicalOrthantPlane(2, 0),
    Parabola(),
]


def brute_force_support(space, u, n=200001, radius=50.0):
    """Independent oracle: maximize Re<u, x> over a dense sample of D."""
    if isinstance(space, Parabola):
        y = np.linspace(-radius, radius, n)
        pts = np.column_stack([y, y * y])
    elif isinstance(space, HalfLine):
        pts = np.linspace(0, radius, n).reshape(-1, 1)
    elif isinstance(space, CanonicalOrthantPlane):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-radius, radius, size=(n, space.dim))
        pts[:, : space.m] = np.abs(pts[:, : space.m])
    else:
        rng = np.random.default_rng(0)
        pts = rng.uniform(-radius, radius, size=(n, space.dim))
    return float(np.max(pts @ np.asarray(u, dtype=complex).real))


class TestContains:
    def test_full_space_contains_everything(self):
        assert FullSpace(dim=2).contains([3.0, -4.0])

    def test_parabola_point(self):
        assert Parabola().contains([2.0, 4.0])
        assert not Parabola().contains([2.0, 4.1])

    def test_orthant_rejects_negative_constrained_coord(self):
        assert not CanonicalOrthantPlane(1, 1).contains([-1.0, 0.0])
        assert CanonicalOrthantPlane(1, 1).contains([0.0, -7.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            FullSpace(dim=2).contains([1.0])


class TestSupport:
    def test_orthant_mixed(self):
        # maximize -x1 over x1 >= 0 (sup 0) with imaginary second component
        space = CanonicalOrthantPlane(1, 1)
        assert space.support([-1.0, 2.0j]) == 0.0
        assert space.support([0.5, 0.0]) == math.inf
        assert space.support([-1.0, 1e-9]) == math.inf

    def test_parabola_maximum_of_quadratic(self):
        # sup of y - y^2 is 1/4, attained at y = 1/2
        space = Parabola()
        assert space.support([1.0, -1.0]) == pytest.approx(0.25, abs=1e-15)
        oracle = brute_force_support(space, [1.0, -1.0], radius=5.0)
        assert oracle <= 0.25 + 1e-6
        assert oracle == pytest.approx(0.25, abs=1e-6)

    def test_parabola_unbounded_directions(self):
        space = Parabola()
        assert space.support([0.0, 1.0]) == math.inf
        assert space.support([1.0, 0.0]) == math.inf
        assert space.support([0.0, 0.0]) == 0.0

    @pytest.mark.parametrize("space", ALL_SPACES)
    def test_purely_imaginary_has_level_zero(self, space):
        rng = np.random.default_rng(5)
        for _ in range(10):
            u = 1j * rng.standard_normal(space.dim)
            assert space.support(u) == 0.0

    @pytest.mark.parametrize("space", ALL_SPACES)
    def test_support_dominates_sampled_inner_products(self, space):
        rng = np.random.default_rng(7)
        for _ in range(25):
            u = rng.standard_normal(space.dim) + 1j * rng.standard_normal(space.dim)
            lvl = space.support(u)
            if lvl < math.inf:
                assert brute_force_support(space, u, n=20001) <= lvl + 1e-6

    @given(lam=st.floats(min_value=0.01, max_value=100.0))
    @settings(deadline=None, max_examples=40)
    def test_positive_homogeneity(self, lam):
        space = Parabola()
        for u in ([1.0, -1.0], [0.5 + 1j, -0.25 + 2j], [0.0, 0.0], [1j, 1j]):
            lvl = space.support(u)
            if lvl < math.inf:
                assert space.support(lam * np.asarray(u, dtype=complex)) == pytest.approx(
                    lam * lvl, rel=1e-12, abs=1e-12)


class TestAffineBasis:
    @pytest.mark.parametrize("space", ALL_SPACES)
    def test_points_lie_in_space_and_affinely_span(self, space):
        basis = space.affine_basis()
        assert basis.shape == (space.dim + 1, space.dim)
        for x in basis:
            assert space.contains(x)
        diffs = basis[1:] - basis[0]
        assert np.linalg.matrix_rank(diffs) == space.dim

    def test_full_space_1d(self):
        basis = FullSpace(dim=1).affine_basis()
        assert sorted(b[0] for b in basis) == [0.0, 1.0]

    def test_parabola_basis(self):
        assert np.array_equal(Parabola().affine_basis(),
                              [[0.0, 0.0], [1.0, 1.0], [-1.0, 1.0]])


class TestSamplingAndConfig:
    @pytest.mark.parametrize("space", ALL_SPACES)
    def test_samples_lie_in_space(self, space):
        for x in space.sample_points(50):
            assert space.contains(x)

    def test_transform_point_levels(self):
        tp = TransformPoint.of(Parabola(), [1.0, -1.0])
        assert tp.in_U and tp.in_Uk(0.25) and not tp.in_Uk(0.2)
        assert not TransformPoint.of(Parabola(), [0.0, 1.0]).in_U

    def test_space_from_config_round_trip(self):
        assert space_from_config({"kind": "full", "d": 3}).dim == 3
        assert isinstance(space_from_config({"kind": "parabola"}), Parabola)
        s = space_from_config({"kind": "orthant_plane", "m": 1, "n": 2})
        assert (s.m, s.n, s.dim) == (1, 2, 3)
        with pytest.raises(ValueError):
            space_from_config({"kind": "dodecahedron"})

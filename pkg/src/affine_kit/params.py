"""Admissible parameter tuples and their Levy-Khintchine evaluators.

An affine process on D is specified by the tuple
(a, alpha^i, b, beta^i, c, gamma^i, m, mu^i): the state-dependent
characteristics are affine in the state,

    A(x) = a + sum_i x_i alpha^i        (diffusion, PSD on D)
    B(x) = b + sum_i x_i beta^i         (drift)
    C(x) = c + sum_i x_i gamma^i        (killing rate, >= 0 on D)
    nu(x, .) = m + sum_i x_i mu^i       (jump measure, >= 0 on D)

and the exponents driving the Riccati system are

    F(u)   = <u, a u>/2 + <b, u> - c + int (e^<xi,u> - 1 - <h(xi), u>) m(dxi)
    R_i(u) = <u, alpha^i u>/2 + <beta^i, u> - gamma^i + same integral vs mu^i

with truncation h(xi) = xi * 1{|xi| <= 1}.  Jump measures are finite atomic
(finite activity), so every integral is an exact finite sum and simulation
can place jumps exactly.

Sign convention: C(x) is the instantaneous killing rate and must be
nonnegative on D; equivalently F(0) = -c and R(0) = -gamma, so that the
small-time total-mass derivative F(0) + <x, R(0)> = -C(x) <= 0.  The
validation report always records this convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .state_space import StateSpace

__all__ = [
    "LevyMeasure",
    "AffineParams",
    "AdmissibilityError",
    "jump_integral",
    "ValidationReport",
    "Violation",
]

# tolerances used by validate()
_PSD_TOL = 1e-10       # minimum eigenvalue of A(x) may not drop below -this
_KILL_TOL = 1e-12      # killing rate may not drop below -this
_WEIGHT_TOL = 1e-12    # merged jump weights may not drop below -this


class AdmissibilityError(ValueError):
    """Raised when evaluating characteristics at a state where they are invalid."""


@dataclass(frozen=True)
class LevyMeasure:
    """Finite atomic measure on R^d \\ {0}: weights (k,), locations (k, d).

    Weights may be signed when the measure plays the state-coefficient role
    mu^i; the base measure m must be nonnegative (enforced by AffineParams).
    """

    weights: np.ndarray
    locations: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        loc = np.asarray(self.locations, dtype=float)
        if loc.ndim == 1:
            loc = loc.reshape(len(w), -1) if len(w) else loc.reshape(0, 1)
        if w.shape[0] != loc.shape[0]:
            raise ValueError("weights and locations must have the same length")
        if loc.shape[0] and np.any(np.all(loc == 0.0, axis=1)):
            raise ValueError("jump locations must be nonzero vectors")
        w.flags.writeable = False
        loc.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locations", loc)

    @classmethod
    def empty(cls, dim: int) -> "LevyMeasure":
        return cls(np.zeros(0), np.zeros((0, dim)))

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple], dim: int | None = None) -> "LevyMeasure":
        """Build from [(weight, location), ...]; location may be a scalar for d=1."""
        if not atoms:
            return cls.empty(dim or 1)
        ws = np.array([float(w) for w, _ in atoms])
        locs = np.array([np.atleast_1d(np.asarray(xi, dtype=float)) for _, xi in atoms])
        return cls(ws, locs)

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def truncated_mean(self) -> np.ndarray:
        """int h(xi) measure(dxi) with h(xi) = xi * 1{|xi| <= 1}."""
        if not len(self):
            return np.zeros(self.dim)
        small = np.linalg.norm(self.locations, axis=1) <= 1.0
        return (self.weights[small, None] * self.locations[small]).sum(axis=0)


def jump_integral(measure: LevyMeasure, u) -> complex:
    """int (e^<xi,u> - 1 - <h(xi), u>) measure(dxi), exact for atomic measures.

    Entire in u; always converges because the measure has finitely many atoms.
    """
    if not len(measure):
        return 0.0 + 0.0j
    u = np.asarray(u, dtype=complex)
    z = measure.locations @ u
    small = np.linalg.norm(measure.locations, axis=1) <= 1.0
    terms = np.exp(z) - 1.0 - np.where(small, z, 0.0)
    return complex(measure.weights @ terms)


def _merge_atoms(weights: np.ndarray, locations: np.ndarray):
    """Sum weights of coinciding locations; result sorted by location."""
    if locations.shape[0] == 0:
        return weights, locations
    uniq, inverse = np.unique(locations, axis=0, return_inverse=True)
    merged = np.zeros(uniq.shape[0])
    np.add.at(merged, inverse, weights)
    return merged, uniq


@dataclass(frozen=True)
class Violation:
    kind: str            # "diffusion_not_psd" | "negative_jump_weight" | "negative_killing_rate"
    x: np.ndarray        # witness state
    value: float         # offending quantity (min eigenvalue, weight, rate)
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: list
    checked_points: int
    notes: tuple

    def __str__(self) -> str:
        head = "valid" if self.valid else f"INVALID ({len(self.violations)} violations)"
        lines = [f"parameter validation: {head} over {self.checked_points} states"]
        for v in self.violations[:5]:
            lines.append(f"  - {v.kind} at x={np.round(v.x, 6)}: {v.detail}")
        if len(self.violations) > 5:
            lines.append(f"  - ... and {len(self.violations) - 5} more")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


@dataclass(frozen=True)
class AffineParams:
    """Parameter tuple of an affine process on `space`.

    Shapes: a (d,d) symmetric; alpha (d,d,d) with alpha[i] symmetric;
    b (d,); beta (d,d) with beta[i] the i-th coefficient vector; c scalar;
    gamma (d,); m_measure the base jump measure; mu_measures a tuple of d
    signed per-coordinate jump measures.
    """

    space: StateSpace
    a: np.ndarray
    alpha: np.ndarray
    b: np.ndarray
    beta: np.ndarray
    c: float
    gamma: np.ndarray
    m_measure: LevyMeasure
    mu_measures: tuple

    def __post_init__(self):
        d = self.space.dim
        a = np.asarray(self.a, dtype=float).reshape(d, d)
        alpha = np.asarray(self.alpha, dtype=float).reshape(d, d, d)
        b = np.asarray(self.b, dtype=float).reshape(d)
        beta = np.asarray(self.beta, dtype=float).reshape(d, d)
        gamma = np.asarray(self.gamma, dtype=float).reshape(d)
        for name, mat in [("a", a)] + [(f"alpha[{i}]", alpha[i]) for i in range(d)]:
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
        if np.any(self.m_measure.weights < 0.0):
            raise ValueError("base jump measure m must have nonnegative weights")
        if len(self.mu_measures) != d:
            raise ValueError(f"expected {d} per-coordinate jump measures")
        for arr in (a, alpha, b, beta, gamma):
            arr.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "mu_measures", tuple(self.mu_measures))

    @classmethod
    def zeros(cls, space: StateSpace) -> "AffineParams":
        """All-zero parameters on `space` (the constant dead-calm process)."""
        d = space.dim
        return cls(
            space=space,
            a=np.zeros((d, d)),
            alpha=np.zeros((d, d, d)),
            b=np.zeros(d),
            beta=np.zeros((d, d)),
            c=0.0,
            gamma=np.zeros(d),
            m_measure=LevyMeasure.empty(d),
            mu_measures=tuple(LevyMeasure.empty(d) for _ in range(d)),
        )

    def with_(self, **kwargs) -> "AffineParams":
        return replace(self, **kwargs)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def has_jumps(self) -> bool:
        return len(self.m_measure) > 0 or any(len(m) > 0 for m in self.mu_measures)

    @property
    def has_killing(self) -> bool:
        return self.c != 0.0 or np.any(self.gamma != 0.0)

    # -- state-dependent characteristics --------------------------------

    def _merged_jump_atoms(self, x: np.ndarray):
        parts_w = [self.m_measure.weights]
        parts_loc = [self.m_measure.locations]
        for xi, mu in zip(x, self.mu_measures):
            if len(mu):
                parts_w.append(xi * mu.weights)
                parts_loc.append(mu.locations)
        w = np.concatenate(parts_w) if parts_w else np.zeros(0)
        loc = np.vstack(parts_loc) if parts_loc else np.zeros((0, self.dim))
        return _merge_atoms(w, loc)

    def characteristics_at(self, x, check: bool = True):
        """(A(x), B(x), C(x), nu(x, .)) at a state x of D.

        Raises AdmissibilityError when x is outside D or the merged jump
        measure picks up a negative weight; pass check=False to inspect
        characteristics at arbitrary states (used by validate()).
        """
        x = np.asarray(x, dtype=float).reshape(self.dim)
        if check and not self.space.contains(x):
            raise AdmissibilityError(f"state {x} is not in the state space")
        A = self.a + np.tensordot(x, self.alpha, axes=1)
        B = self.b + x @ self.beta
        C = self.c + float(self.gamma @ x)
        w, loc = self._merged_jump_atoms(x)
        if check and w.size and w.min() < -_WEIGHT_TOL * max(1.0, np.abs(w).max()):
            raise AdmissibilityError(
                f"merged jump measure at x={x} has negative weight {w.min():.3e}"
            )
        keep = w != 0.0
        return A, B, C, LevyMeasure(w[keep], loc[keep]) if w.size else LevyMeasure.empty(self.dim)

    # -- Levy-Khintchine exponents ---------------------------------------

    def F_eval(self, u) -> complex:
        """Constant part of the exponent: <u,au>/2 + <b,u> - c + jump integral of m."""
        u = np.asarray(u, dtype=complex).reshape(self.dim)
        return complex(0.5 * (u @ self.a @ u) + self.b @ u - self.c
                       + jump_integral(self.m_measure, u))

    def R_eval(self, u) -> np.ndarray:
        """State-coefficient part: component i uses (alpha^i, beta^i, gamma^i, mu^i)."""
        u = np.asarray(u, dtype=complex).reshape(self.dim)
        out = np.empty(self.dim, dtype=complex)
        for i in range(self.dim):
            out[i] = (0.5 * (u @ self.alpha[i] @ u) + self.beta[i] @ u - self.gamma[i]
                      + jump_integral(self.mu_measures[i], u))
        return out

    def killing_rate(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(self.dim)
        return self.c + float(self.gamma @ x)

    # -- validation -------------------------------------------------------

    def validate(self, samples: int = 64, box_radius: float = 5.0) -> ValidationReport:
        """Desk-scale admissibility check on affine_basis plus Halton samples of D.

        Violations are report entries, never exceptions: A(x) must be PSD
        (min eigenvalue >= -1e-10), merged jump weights nonnegative, and the
        killing rate c + <gamma, x> >= -1e-12 at every checked state.
        """
        pts = [np.asarray(p, dtype=float) for p in self.space.affine_basis()]
        if samples > 0:
            pts.extend(self.space.sample_points(samples, radius=box_radius))
        violations = []
        for x in pts:
            A = self.a + np.tensordot(x, self.alpha, axes=1)
            lam_min = float(np.linalg.eigvalsh(A)[0])
            if lam_min < -_PSD_TOL:
                violations.append(Violation(
                    "diffusion_not_psd", x, lam_min,
                    f"min eigenvalue of A(x) is {lam_min:.3e}"))
            C = self.c + float(self.gamma @ x)
            if C < -_KILL_TOL:
                violations.append(Violation(
                    "negative_killing_rate", x, C,
                    f"killing rate c + <gamma,x> is {C:.3e}"))
            w, _ = self._merged_jump_atoms(x)
            if w.size and w.min() < -_WEIGHT_TOL:
                violations.append(Violation(
                    "negative_jump_weight", x, float(w.min()),
                    f"merged jump weight {w.min():.3e}"))
        notes = (
            "killing rate convention: C(x) = c + <gamma, x> is required to be "
            "nonnegative on D (equivalently F(0) = -c, R(0) = -gamma); the "
            "opposite sign for C(x) is rejected by this check",
        )
        return ValidationReport(
            valid=not violations,
            violations=violations,
            checked_points=len(pts),
            notes=notes,
        )

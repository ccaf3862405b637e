"""Path simulation and Monte Carlo verifiers for affine processes.

The general scheme is Euler-Maruyama with per-step jump thinning and an
exponential killing clock:

  * drift B(X) - int h(xi) nu(X, dxi), so that uncompensated jumps combined
    with this drift reproduce the exponents' truncation convention;
  * diffusion through the PSD square root of A(X);
  * jump counts per step drawn from the frozen-rate Poisson law by inverse
    CDF (thinning against the per-step mass bound), atoms by categorical
    inverse CDF;
  * killing by a single Exp(1) clock matched against the accumulated hazard
    int C(X_s) ds along the discrete path (inverse CDF, exact given the path).

Orthant-constrained coordinates use full truncation: coefficients are
evaluated at the clamped state and the stored state is projected back onto
the constraint, so paths never leave the state space.  The parabola is a
curve with no tube around it, so it is never simulated by Euler; use the
exact sampler, which maps Brownian increments through w -> (w, w^2).

Randomness: every path has its own counter-based substream (Philox keyed by
the seed, counter block set by the path index), so ensembles are
deterministic, order-independent and safe to generate in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .params import AffineParams
from .state_space import CanonicalOrthantPlane, HalfLine, Parabola
from .transform import BlowUpError, evaluate

__all__ = [
    "PathSample",
    "Ensemble",
    "McEstimate",
    "simulate",
    "simulate_ensemble",
    "simulate_parabola_exact",
    "simulate_parabola_ensemble",
    "mc_char_fn",
    "martingale_L_test",
    "stopped_ensemble",
    "characteristics_check",
    "CharacteristicsReport",
]

_JUMPS_PER_STEP_CAP = 3  # overflow probability O((rate*dt)^4) per step


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with its standard error."""

    value: complex
    std_error: float
    n_paths: int

    def consistent_with(self, target, n_se: float = 3.0, tol: float = 0.0) -> bool:
        return abs(self.value - target) <= max(n_se * self.std_error, tol)


@dataclass(frozen=True)
class PathSample:
    """One discretized trajectory.

    states[i] is valid for i < alive_until; from alive_until on the path sits
    in the cemetery (rows are NaN).  alive_until is math.inf when the path is
    never killed.  jump_marks lists (time index, jump vector) pairs.
    """

    times: np.ndarray
    states: np.ndarray
    alive_until: float
    jump_marks: list

    def alive_at(self, i: int) -> bool:
        return i < self.alive_until


@dataclass(frozen=True)
class Ensemble:
    """A set of paths on a common grid, stored as (n_paths, n_times, d).

    alive_until holds per-path first-dead indices (n_times if never killed).
    stop_radius is set by stopped_ensemble and consumed by the martingale
    test.
    """

    times: np.ndarray
    states: np.ndarray
    alive_until: np.ndarray
    x0: np.ndarray
    stop_radius: float | None = None

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def time_index(self, t: float) -> int:
        idx = np.nonzero(np.isclose(self.times, t, rtol=1e-12, atol=1e-12))[0]
        if not len(idx):
            raise ValueError(f"t={t} is not on the simulation grid")
        return int(idx[0])

    def path(self, i: int, jump_marks: list | None = None) -> PathSample:
        au = self.alive_until[i]
        return PathSample(
            times=self.times,
            states=self.states[i],
            alive_until=math.inf if au >= len(self.times) else float(au),
            jump_marks=list(jump_marks or []),
        )


def _path_rng(seed: int, idx: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, idx, 0]))


def _orthant_mask(space) -> np.ndarray | None:
    if isinstance(space, HalfLine):
        return np.array([True])
    if isinstance(space, CanonicalOrthantPlane):
        return np.arange(space.dim) < space.m
    return None


def _psd_sqrt(mats: np.ndarray) -> np.ndarray:
    """Batched symmetric PSD square root; tiny negative eigenvalues clamp to 0."""
    w, v = np.linalg.eigh(mats)
    w = np.sqrt(np.maximum(w, 0.0))
    return np.einsum("...ij,...j,...kj->...ik", v, w, v)


def simulate_ensemble(p: AffineParams, x0, T: float, n_steps: int, seed: int,
                      n_paths: int, record_jumps: bool = False):
    """Euler-Maruyama ensemble of n_paths trajectories over [0, T].

    Deterministic in (params, x0, T, n_steps, seed); path i depends only on
    (seed, i).  Returns the Ensemble, plus the recorded jump marks of path 0
    when record_jumps is set.
    """
    if isinstance(p.space, Parabola):
        raise ValueError(
            "the parabola is a curve and cannot be simulated by Euler; "
            "use simulate_parabola_exact")
    x0 = np.asarray(x0, dtype=float).reshape(p.dim)
    if not p.space.contains(x0):
        raise ValueError(f"x0={x0} is not in the state space")
    if T <= 0 or n_steps < 1:
        raise ValueError("need T > 0 and n_steps >= 1")
    report = p.validate(samples=32)
    if not report.valid:
        raise ValueError(f"parameters failed validation:\n{report}")

    d = p.dim
    dt = T / n_steps
    times = np.linspace(0.0, T, n_steps + 1)
    has_jumps = p.has_jumps
    has_killing = p.has_killing

    # fixed per-path draw order: normals, then jump uniforms, then the clock
    normals = np.empty((n_paths, n_steps, d))
    if has_jumps:
        jump_u = np.empty((n_paths, n_steps, 1 + _JUMPS_PER_STEP_CAP))
    kill_clock = np.empty(n_paths) if has_killing else None
    for i in range(n_paths):
        rng = _path_rng(seed, i)
        normals[i] = rng.standard_normal((n_steps, d))
        if has_jumps:
            jump_u[i] = rng.random((n_steps, 1 + _JUMPS_PER_STEP_CAP))
        if has_killing:
            kill_clock[i] = rng.standard_exponential()

    # affine pieces, precomputed: B(x) = b + x @ beta etc.
    constant_diffusion = not p.alpha.any()
    if constant_diffusion:
        sqrt_a = _psd_sqrt(p.a)
    if has_jumps:
        # union atom list with affine weights w(x) = W0 + x @ W1
        locs = [p.m_measure.locations] + [m.locations for m in p.mu_measures]
        all_locs = np.vstack([l for l in locs if l.size] or [np.zeros((0, d))])
        atom_locs = np.unique(all_locs, axis=0) if all_locs.size else all_locs
        k_atoms = atom_locs.shape[0]
        W0 = np.zeros(k_atoms)
        W1 = np.zeros((d, k_atoms))

        def _accumulate(target, measure):
            for w, loc in zip(measure.weights, measure.locations):
                j = np.nonzero(np.all(atom_locs == loc, axis=1))[0][0]
                target[j] += w

        _accumulate(W0, p.m_measure)
        for i, mu in enumerate(p.mu_measures):
            _accumulate(W1[i], mu)
        # truncation compensation int h dnu(x) = hm0 + x @ hm1
        hm0 = p.m_measure.truncated_mean()
        hm1 = np.vstack([m.truncated_mean() for m in p.mu_measures])

    orth = _orthant_mask(p.space)
    states = np.empty((n_paths, n_steps + 1, d))
    states[:, 0, :] = x0
    alive_until = np.full(n_paths, n_steps + 1, dtype=np.int64)
    hazard = np.zeros(n_paths)
    jump_marks: list = []
    X = np.broadcast_to(x0, (n_paths, d)).copy()
    alive = np.ones(n_paths, dtype=bool)
    sqdt = math.sqrt(dt)

    for step in range(n_steps):
        if has_killing:
            rate = np.maximum(p.c + X @ p.gamma, 0.0)
            hazard += rate * dt
            dying = alive & (hazard >= kill_clock)
            alive_until[dying] = step + 1
            alive &= ~dying

        drift = p.b + X @ p.beta
        if has_jumps:
            drift = drift - (hm0 + X @ hm1)
        if constant_diffusion:
            noise = normals[:, step, :] @ sqrt_a.T
        else:
            A = p.a + np.einsum("pi,ijk->pjk", X, p.alpha)
            noise = np.einsum("pjk,pk->pj", _psd_sqrt(A), normals[:, step, :])
        X_new = X + drift * dt + sqdt * noise

        if has_jumps:
            w = np.maximum(W0 + X @ W1, 0.0)          # (n_paths, k_atoms)
            lam = w.sum(axis=1) * dt
            # Poisson count by inverse CDF from one uniform per (path, step)
            u_cnt = jump_u[:, step, 0]
            pk = np.exp(-lam)
            cdf = pk.copy()
            counts = np.zeros(n_paths, dtype=np.int64)
            for j in range(1, _JUMPS_PER_STEP_CAP + 1):
                more = u_cnt > cdf
                if not more.any():
                    break
                counts[more] = j
                pk = pk * lam / j
                cdf = cdf + pk
            atom_cdf = np.cumsum(w, axis=1)
            for j in range(_JUMPS_PER_STEP_CAP):
                hit = counts > j
                if not hit.any():
                    break
                v = jump_u[hit, step, 1 + j] * atom_cdf[hit, -1]
                idx = (v[:, None] <= atom_cdf[hit]).argmax(axis=1)
                X_new[hit] += atom_locs[idx]
                if record_jumps and hit[0] and alive[0]:
                    v0 = jump_u[0, step, 1 + j] * atom_cdf[0, -1]
                    i0 = int((v0 <= atom_cdf[0]).argmax())
                    jump_marks.append((step + 1, atom_locs[i0].copy()))

        if orth is not None:
            X_new[:, orth] = np.maximum(X_new[:, orth], 0.0)
        X = np.where(alive[:, None], X_new, X)
        states[:, step + 1, :] = np.where(alive[:, None], X, np.nan)

    ens = Ensemble(times=times, states=states, alive_until=alive_until, x0=x0)
    return (ens, jump_marks) if record_jumps else ens


def simulate(p: AffineParams, x0, T: float, n_steps: int, seed: int) -> PathSample:
    """Single Euler-Maruyama path (path 0 of the ensemble with this seed)."""
    ens, marks = simulate_ensemble(p, x0, T, n_steps, seed, n_paths=1,
                                   record_jumps=True)
    return ens.path(0, jump_marks=marks)


def simulate_parabola_ensemble(x0, times, seed: int, n_paths: int) -> Ensemble:
    """Exact sampler for the parabola-supported process: (w, w^2) on the grid.

    No discretization error: Brownian increments are drawn per grid interval
    and the second coordinate is the exact square of the first.
    """
    x0 = np.asarray(x0, dtype=float).reshape(2)
    if not Parabola().contains(x0):
        raise ValueError(f"x0={x0} does not lie on the parabola")
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or (len(times) > 1 and np.any(np.diff(times) <= 0)):
        raise ValueError("times must be an increasing grid starting at 0")
    n_incr = len(times) - 1
    sq = np.sqrt(np.diff(times)) if n_incr else np.zeros(0)
    states = np.empty((n_paths, len(times), 2))
    for i in range(n_paths):
        z = _path_rng(seed, i).standard_normal(n_incr)
        w = x0[0] + np.concatenate([[0.0], np.cumsum(sq * z)])
        states[i, :, 0] = w
        states[i, :, 1] = w * w
    return Ensemble(times=times, states=states,
                    alive_until=np.full(n_paths, len(times), dtype=np.int64),
                    x0=x0)


def simulate_parabola_exact(x0, times, seed: int) -> PathSample:
    return simulate_parabola_ensemble(x0, times, seed, n_paths=1).path(0)


def _alive_at(ens: Ensemble, index: int) -> np.ndarray:
    return index < ens.alive_until


def _complex_mean_se(vals: np.ndarray) -> McEstimate:
    n = len(vals)
    if n < 2:
        raise ValueError("need at least 2 paths for a standard error")
    mean = vals.mean()
    var = vals.real.var(ddof=1) + vals.imag.var(ddof=1)
    return McEstimate(complex(mean), float(np.sqrt(var / n)), n)


def mc_char_fn(ens: Ensemble, t: float, u) -> McEstimate:
    """Monte Carlo estimate of E[exp(<u, X_t>); alive] over the ensemble.

    Killed paths contribute 0 (functions vanish at the cemetery).
    """
    u = np.asarray(u, dtype=complex).reshape(ens.dim)
    i = ens.time_index(t)
    alive = _alive_at(ens, i)
    vals = np.zeros(ens.n_paths, dtype=complex)
    vals[alive] = np.exp(ens.states[alive, i, :] @ u)
    return _complex_mean_se(vals)


def martingale_L_test(p: AffineParams, ens: Ensemble, delta: float, n: int, u,
                      tol: float = 1e-10) -> McEstimate:
    """Sample mean of the exponential compensated functional

        L(n) = exp(<u, X_{n delta} - X_0>
                   - sum_{j<=n} (phi(delta,u) + <psi(delta,u) - u, X_{(j-1) delta}>)),

    whose expectation is exactly 1.  phi and psi come from the Riccati
    integrator at horizon delta.  If the ensemble carries a stop radius r,
    each path is capped at its first delta-grid index with |X - X0| >= r
    (discrete optional stopping: the expectation is still exactly 1).
    delta must be a multiple of the grid spacing.
    """
    u = np.asarray(u, dtype=complex).reshape(ens.dim)
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return McEstimate(1.0 + 0.0j, 0.0, ens.n_paths)
    dts = np.diff(ens.times)
    dt = dts[0]
    if not np.allclose(dts, dt, rtol=1e-9, atol=1e-12):
        raise ValueError("martingale test requires a uniform time grid")
    stride = delta / dt
    if not np.isclose(stride, round(stride), rtol=1e-9, atol=1e-12):
        raise ValueError(f"delta={delta} is not aligned with the grid spacing {dt}")
    stride = int(round(stride))
    if n * stride > len(ens.times) - 1:
        raise ValueError("n * delta exceeds the simulated horizon")

    r = evaluate(p, delta, u, tol=tol)
    if not r.ok:
        raise BlowUpError(r.blow_up_time if r.blow_up_time is not None else delta,
                          "transform unavailable at the martingale step size")
    phi, rho = r.phi, r.rho

    sub = ens.states[:, :: stride, :][:, : n + 1, :]        # (paths, n+1, d)
    alive_sub = (np.arange(n + 1) * stride) < ens.alive_until[:, None]
    x0 = sub[:, 0, :]

    # per-path cap from the stop radius, evaluated on this delta-grid
    if ens.stop_radius is not None and math.isfinite(ens.stop_radius):
        with np.errstate(invalid="ignore"):
            exceeded = np.linalg.norm(sub - x0[:, None, :], axis=2) >= ens.stop_radius
        exceeded &= alive_sub
        any_exc = exceeded.any(axis=1)
        n_eff = np.where(any_exc, exceeded.argmax(axis=1), n)
    else:
        n_eff = np.full(ens.n_paths, n, dtype=np.int64)

    # compensator partial sums S_k = sum_{j<=k} (phi + <rho, X_{(j-1)delta}>)
    incr = phi + (sub[:, :-1, :] @ rho)                     # (paths, n)
    S = np.concatenate([np.zeros((ens.n_paths, 1), dtype=complex),
                        np.nancumsum(incr, axis=1)], axis=1)
    rows = np.arange(ens.n_paths)
    x_end = sub[rows, n_eff, :]
    ok_alive = alive_sub[rows, n_eff]
    vals = np.zeros(ens.n_paths, dtype=complex)
    vals[ok_alive] = np.exp((x_end[ok_alive] - x0[ok_alive]) @ u
                            - S[rows[ok_alive], n_eff[ok_alive]])
    return _complex_mean_se(vals)


def stopped_ensemble(ens: Ensemble, r: float) -> Ensemble:
    """Freeze each path at its first grid index with |X_t - X_0| >= r.

    Records the radius so the martingale test applies discrete optional
    stopping on its own delta-grid.  r = inf returns the ensemble unchanged
    (no path ever exits); r = 0 freezes everything at t = 0.
    """
    if r < 0:
        raise ValueError("stop radius must be nonnegative")
    if not math.isfinite(r):
        return replace(ens, stop_radius=r)
    with np.errstate(invalid="ignore"):
        exceeded = np.linalg.norm(ens.states - ens.states[:, :1, :], axis=2) >= r
    exceeded &= ~np.isnan(ens.states).any(axis=2)
    any_exc = exceeded.any(axis=1)
    first = np.where(any_exc, exceeded.argmax(axis=1), len(ens.times) - 1)
    idx = np.minimum(np.arange(len(ens.times))[None, :], first[:, None])
    frozen = np.take_along_axis(ens.states, idx[:, :, None], axis=1)
    return Ensemble(times=ens.times, states=frozen, alive_until=ens.alive_until,
                    x0=ens.x0, stop_radius=r)


@dataclass(frozen=True)
class CharacteristicsReport:
    """Realized quadratic covariation and drift against their model integrals."""

    per_path_rel_error: np.ndarray   # Frobenius error of QV vs int A(X)ds, per path
    mean_rel_error: float            # average of the above
    ensemble_rel_error: float        # error of the ensemble means
    drift_residual_mean: np.ndarray  # mean of X_T - X_0 - int B(X)ds
    drift_residual_se: np.ndarray
    max_drift_z: float               # largest |mean|/SE across components

    @property
    def drift_consistent(self) -> bool:
        return self.max_drift_z <= 3.0


def characteristics_check(ens: Ensemble, p: AffineParams) -> CharacteristicsReport:
    """Compare realized sum (dX)(dX)^T with int A(X_s)ds path by path.

    Only meaningful for killing-free pure diffusions; jump or killing
    parameters are rejected.
    """
    if p.has_jumps:
        raise ValueError("characteristics check requires a jump-free process")
    if p.has_killing:
        raise ValueError("characteristics check requires zero killing")
    dts = np.diff(ens.times)
    dX = np.diff(ens.states, axis=1)
    qv = np.einsum("pti,ptj->pij", dX, dX)
    # int of the affine map s -> A(X_s) reduces to the time-integral of X
    int_x = np.einsum("pti,t->pi", ens.states[:, :-1, :], dts)
    T = ens.times[-1] - ens.times[0]
    a_int = T * p.a + np.einsum("pi,ijk->pjk", int_x, p.alpha)

    diff_norm = np.linalg.norm(qv - a_int, axis=(1, 2))
    ref_norm = np.maximum(np.linalg.norm(a_int, axis=(1, 2)), 1e-300)
    per_path = diff_norm / ref_norm
    qv_mean, ai_mean = qv.mean(axis=0), a_int.mean(axis=0)
    ens_err = float(np.linalg.norm(qv_mean - ai_mean)
                    / max(np.linalg.norm(ai_mean), 1e-300))

    b_int = T * p.b + int_x @ p.beta
    resid = ens.states[:, -1, :] - ens.states[:, 0, :] - b_int
    mean = resid.mean(axis=0)
    se = resid.std(axis=0, ddof=1) / math.sqrt(ens.n_paths)
    z = np.abs(mean) / np.maximum(se, 1e-300)
    return CharacteristicsReport(
        per_path_rel_error=per_path,
        mean_rel_error=float(per_path.mean()),
        ensemble_rel_error=ens_err,
        drift_residual_mean=mean,
        drift_residual_se=se,
        max_drift_z=float(z.max()),
    )

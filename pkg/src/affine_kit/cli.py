"""Batch front end: JSON configs in, CSV/JSON reports out.

    affine-kit transform --config cfg.json --out outdir [--seed N] [--tol X]
    affine-kit simulate  --config cfg.json --out outdir [--seed N] [--tol X]
    affine-kit verify    --config cfg.json --out outdir [--seed N] [--tol X]

Exit status: 0 all requested checks pass, 1 a check failed, 2 the config
does not parse, 3 the config fails semantic validation (unresolvable
preset, grid point outside the transform domain, invalid parameters, ...).

Reports are reproducible byte for byte for a fixed config and seed; the
only run-dependent value is isolated in the single "generated_at" key.
Thread count for grid sweeps is taken from AFFINE_KIT_THREADS (default 1);
there are no other environment knobs.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import presets
from .params import AffineParams, LevyMeasure
from .simulate import (
    characteristics_check,
    martingale_L_test,
    mc_char_fn,
    simulate_ensemble,
    simulate_parabola_ensemble,
    stopped_ensemble,
)
from .state_space import CanonicalOrthantPlane, HalfLine, Parabola, space_from_config
from .transform import (
    TransformError,
    boundedness_probe,
    char_fn,
    cp_limit_check,
    evaluate_grid,
    fd_regularity,
    semiflow_residual,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_PARSE_ERROR = 2
EXIT_VALIDATION_ERROR = 3

ALL_SUITES = ("semiflow", "regularity", "bounded", "cp_limit",
              "levy_structure", "affine_mc", "martingale", "characteristics")


class ConfigParseError(Exception):
    pass


class ConfigValidationError(Exception):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("AFFINE_KIT_THREADS", "1")))
    except ValueError:
        return 1


def _tmap(fn, items):
    n = _threads()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _parse_complex_vector(entry, d: int) -> np.ndarray:
    """JSON encoding of u: each component a number or a [re, im] pair."""
    if not isinstance(entry, (list, tuple)) or len(entry) != d:
        raise ConfigParseError(f"u entry {entry!r} is not a length-{d} vector")
    out = np.empty(d, dtype=complex)
    for i, c in enumerate(entry):
        if isinstance(c, (int, float)):
            out[i] = complex(c)
        elif isinstance(c, (list, tuple)) and len(c) == 2:
            out[i] = complex(float(c[0]), float(c[1]))
        else:
            raise ConfigParseError(f"component {c!r} is neither a number nor [re, im]")
    return out


def _measure_from_json(entries, d: int) -> LevyMeasure:
    atoms = []
    for e in entries:
        atoms.append((float(e["w"]), np.asarray(e["xi"], dtype=float).reshape(d)))
    return LevyMeasure.from_atoms(atoms, dim=d) if atoms else LevyMeasure.empty(d)


def _params_from_json(space, spec: dict) -> AffineParams:
    d = space.dim
    base = AffineParams.zeros(space)
    kw = {}
    if "a" in spec:
        kw["a"] = np.asarray(spec["a"], dtype=float)
    if "alpha" in spec:
        kw["alpha"] = np.asarray(spec["alpha"], dtype=float)
    if "b" in spec:
        kw["b"] = np.asarray(spec["b"], dtype=float)
    if "beta" in spec:
        kw["beta"] = np.asarray(spec["beta"], dtype=float)
    if "c" in spec:
        kw["c"] = float(spec["c"])
    if "gamma" in spec:
        kw["gamma"] = np.asarray(spec["gamma"], dtype=float)
    if "m" in spec:
        kw["m_measure"] = _measure_from_json(spec["m"], d)
    if "mu" in spec:
        mus = spec["mu"]
        if len(mus) != d:
            raise ConfigParseError(f"'mu' must list {d} measures")
        kw["mu_measures"] = tuple(_measure_from_json(m, d) for m in mus)
    return base.with_(**kw)


@dataclass
class RunConfig:
    task: str
    params: AffineParams
    preset: str | None
    verify_suite: tuple
    t_grid: np.ndarray
    u_grid: list
    x_grid: list
    n_paths: int
    n_steps: int
    horizon: float
    seed: int
    ode_tol: float
    tolerances: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def space(self):
        return self.params.space


def load_config(path: str, seed_override=None, tol_override=None) -> RunConfig:
    """Parse and semantically validate a run config.

    Raises ConfigParseError for malformed input and ConfigValidationError
    when the input parses but names an impossible run (u outside U, x
    outside D, inadmissible parameters).
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigParseError(f"cannot read config {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigParseError("config must be a JSON object")

    task = raw.get("task")
    if task not in ("transform", "simulate", "verify"):
        raise ConfigParseError(f"task must be transform|simulate|verify, got {task!r}")

    preset = raw.get("preset")
    if preset is not None:
        if preset not in presets.PRESET_NAMES:
            raise ConfigParseError(
                f"unknown preset {preset!r}; known: {presets.PRESET_NAMES}")
        params = presets.get(preset)
    else:
        if "space" not in raw or "params" not in raw:
            raise ConfigParseError("config needs either 'preset' or 'space' + 'params'")
        try:
            space = space_from_config(raw["space"])
            params = _params_from_json(space, raw["params"])
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigParseError(f"bad space/params spec: {e}") from e

    suite = raw.get("verify_suite", list(ALL_SUITES))
    if not isinstance(suite, list) or any(s not in ALL_SUITES for s in suite):
        raise ConfigParseError(f"verify_suite entries must be among {ALL_SUITES}")

    grids = raw.get("grids", {})
    d = params.dim
    t_grid = np.asarray(grids.get("t", [0.05, 0.1, 0.2, 0.4]), dtype=float)
    if t_grid.ndim != 1 or np.any(t_grid < 0):
        raise ConfigParseError("grids.t must be a list of nonnegative times")
    u_grid = [_parse_complex_vector(e, d) for e in grids.get("u", _default_u_grid(d))]
    x_default = [params.space.affine_basis()[-1].tolist()]
    x_grid = [np.asarray(x, dtype=float).reshape(d) for x in grids.get("x", x_default)]

    mc = raw.get("mc", {})
    seed = int(mc.get("seed", 0)) if seed_override is None else int(seed_override)
    tols = raw.get("tolerances", {})
    ode_tol = float(tols.get("ode", 1e-10)) if tol_override is None else float(tol_override)
    cfg = RunConfig(
        task=task,
        params=params,
        preset=preset,
        verify_suite=tuple(suite),
        t_grid=t_grid,
        u_grid=u_grid,
        x_grid=x_grid,
        n_paths=int(mc.get("paths", 10000)),
        n_steps=int(mc.get("steps", 400)),
        horizon=float(mc.get("T", max(float(t_grid.max(initial=0.0)), 0.5))),
        seed=seed,
        ode_tol=ode_tol,
        tolerances=tols,
        raw=raw,
    )
    _validate_config(cfg)
    return cfg


def _default_u_grid(d: int) -> list:
    # points of the imaginary unit sphere: always inside U
    out = []
    for i in range(d):
        e = [0.0] * d
        e[i] = [0.0, 1.0]
        out.append(e)
    out.append([[0.0, -1.0 / math.sqrt(d)]] * d)
    return out


def _validate_config(cfg: RunConfig) -> None:
    for u in cfg.u_grid:
        lvl = cfg.space.support(u)
        if not lvl < math.inf:
            raise ConfigValidationError(
                f"grid point u={u} lies outside the transform domain: support(u)=inf")
    for x in cfg.x_grid:
        if not cfg.space.contains(x):
            raise ConfigValidationError(f"grid point x={x} is not in the state space")
    report = cfg.params.validate(samples=64)
    if not report.valid:
        raise ConfigValidationError(f"parameters are not admissible:\n{report}")
    if cfg.n_paths < 2 or cfg.n_steps < 1 or cfg.horizon <= 0:
        raise ConfigValidationError("mc settings must satisfy paths>=2, steps>=1, T>0")


# ---------------------------------------------------------------------------
# task: transform


def _complex_cols(prefix: str, d: int):
    return [f"re_{prefix}{i+1}" for i in range(d)] + [f"im_{prefix}{i+1}" for i in range(d)]


def run_transform(cfg: RunConfig, out_dir: str) -> int:
    d = cfg.params.dim
    header = (["t"] + _complex_cols("u", d) + ["re_phi", "im_phi"]
              + _complex_cols("psi", d) + ["status"])
    rows = []
    results = _tmap(lambda u: evaluate_grid(cfg.params, u, cfg.t_grid, cfg.ode_tol),
                    cfg.u_grid)
    for u, res in zip(cfg.u_grid, results):
        for r in res:
            rows.append([f"{r.t:.12g}"]
                        + [f"{v:.12g}" for v in u.real] + [f"{v:.12g}" for v in u.imag]
                        + [f"{r.phi.real:.12g}", f"{r.phi.imag:.12g}"]
                        + [f"{v:.12g}" for v in r.psi.real]
                        + [f"{v:.12g}" for v in r.psi.imag]
                        + [r.status])
    path = os.path.join(out_dir, "transform.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# task: simulate


def _build_ensemble(cfg: RunConfig, x0, T: float, n_steps: int, n_paths: int,
                    seed: int):
    if isinstance(cfg.space, Parabola):
        times = np.linspace(0.0, T, n_steps + 1)
        return simulate_parabola_ensemble(x0, times, seed, n_paths)
    return simulate_ensemble(cfg.params, x0, T, n_steps, seed, n_paths)


def run_simulate(cfg: RunConfig, out_dir: str) -> int:
    x0 = cfg.x_grid[0]
    ens = _build_ensemble(cfg, x0, cfg.horizon, cfg.n_steps, cfg.n_paths, cfg.seed)
    path = os.path.join(out_dir, "paths.csv")
    d = ens.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "t"] + [f"x_{i+1}" for i in range(d)] + ["alive"])
        for i in range(ens.n_paths):
            au = ens.alive_until[i]
            for j, t in enumerate(ens.times):
                alive = int(j < au)
                vals = ens.states[i, j, :]
                w.writerow([i, f"{t:.12g}"]
                           + [(f"{v:.12g}" if np.isfinite(v) else "nan") for v in vals]
                           + [alive])
    print(f"wrote {path} ({ens.n_paths} paths x {len(ens.times)} times)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# task: verify


def _check(name: str, prop: str, statistic: float, threshold: float, ok: bool,
           **detail) -> dict:
    entry = {
        "check": name,
        "property": prop,
        "statistic": float(statistic),
        "threshold": float(threshold),
        "pass": bool(ok),
    }
    if detail:
        entry["detail"] = detail
    return entry


def _rng_u_in_domain(cfg: RunConfig, rng: np.random.Generator) -> np.ndarray:
    """Random transform-domain point for the configured space."""
    d = cfg.params.dim
    y = rng.uniform(-1.5, 1.5, size=d)
    space = cfg.space
    re = np.zeros(d)
    if isinstance(space, Parabola):
        re = np.array([rng.uniform(-1.0, 1.0), -rng.uniform(0.2, 1.5)])
    elif isinstance(space, HalfLine):
        re[0] = -rng.uniform(0.0, 1.5)
    elif isinstance(space, CanonicalOrthantPlane) and space.m:
        re[: space.m] = -rng.uniform(0.0, 1.5, size=space.m)
    return re + 1j * y


def _suite_semiflow(cfg: RunConfig) -> list:
    n_triples = int(cfg.tolerances.get("semiflow_triples", 100))
    thr = float(cfg.tolerances.get("semiflow", 1e-7))
    rng = np.random.default_rng(cfg.seed)
    triples = [(rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3), _rng_u_in_domain(cfg, rng))
               for _ in range(n_triples)]
    residuals = _tmap(lambda ts: semiflow_residual(cfg.params, ts[0], ts[1], ts[2],
                                                   cfg.ode_tol), triples)
    worst = float(np.max(residuals))
    return [_check("semiflow", "transform composition law phi(t+s,u) = phi(t,u) + "
                   "phi(s,psi(t,u)), psi(t+s,u) = psi(s,psi(t,u))",
                   worst, thr, worst <= thr, triples=n_triples)]


def _suite_regularity(cfg: RunConfig) -> list:
    thr_rel = float(cfg.tolerances.get("regularity_rel", 1e-4))
    thr_order = float(cfg.tolerances.get("regularity_order", 0.9))
    h_list = cfg.tolerances.get("regularity_h", [1e-2, 1e-3, 1e-4])
    out = []
    for u in cfg.u_grid[:3]:
        probe = fd_regularity(cfg.params, u, h_list, cfg.ode_tol)
        ok = probe.rel_error_est <= thr_rel and probe.observed_order >= thr_order
        out.append(_check(
            "regularity",
            "existence of the transform's time derivatives at t=0+ "
            "(difference quotients recover F and R)",
            probe.rel_error_est, thr_rel, ok,
            observed_order=(None if math.isinf(probe.observed_order)
                            else probe.observed_order),
            u=[[c.real, c.imag] for c in u]))
    return out


def _suite_bounded(cfg: RunConfig) -> list:
    thr = float(cfg.tolerances.get("bounded_variation", 0.10))
    t_list = cfg.tolerances.get("bounded_t", [1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    d = cfg.params.dim
    rng = np.random.default_rng(cfg.seed + 1)
    z = rng.standard_normal((20, d))
    grid = [1j * row / max(np.linalg.norm(row), 1e-12) for row in z]
    table = boundedness_probe(cfg.params, grid, t_list, cfg.ode_tol)
    tail = table.sup[-3:]
    variation = float((tail.max() - tail.min()) / max(tail.min(), 1e-300))
    ok = variation <= thr and not table.divergence_suspected
    return [_check("bounded", "small-time boundedness of |phi(t,u)|/t + "
                   "|psi(t,u)-u|/t on a compact u-grid",
                   variation, thr, ok, sup_by_t=list(map(float, table.sup)))]


def _suite_cp_limit(cfg: RunConfig) -> list:
    thr_corr = float(cfg.tolerances.get("cp_corr", 0.99))
    t_list = cfg.tolerances.get("cp_t", [0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001])
    out = []
    pairs = [(x, u) for x in cfg.x_grid[:3] for u in cfg.u_grid[:3]][:3]
    for x, u in pairs:
        table = cp_limit_check(cfg.params, x, u, t_list, cfg.ode_tol)
        err = np.maximum(table.errors, 1e-15)
        corr = float(np.corrcoef(np.log(table.t), np.log(err))[0, 1])
        slope_c = float(np.max(err / table.t))
        ok = corr >= thr_corr
        out.append(_check(
            "cp_limit",
            "small-time limit of the centered transform difference quotient "
            "towards (F(u)+c) + <x, R(u)+gamma>, with linear error decay",
            corr, thr_corr, ok,
            fitted_linear_constant=slope_c,
            x=list(map(float, x)), u=[[c.real, c.imag] for c in u]))
    return out


def _suite_levy_structure(cfg: RunConfig) -> list:
    p = cfg.params
    report = p.validate(samples=64)
    out = [_check("levy_structure", "admissibility of the state-affine "
                  "characteristics (PSD diffusion, nonnegative jump weights, "
                  "nonnegative killing rate)",
                  float(len(report.violations)), 0.0, report.valid,
                  checked_points=report.checked_points, notes=list(report.notes))]
    # real part of the exponent is maximal at the origin of the imaginary axis
    rng = np.random.default_rng(cfg.seed + 2)
    ys = rng.standard_normal((100, p.dim)) * 2.0
    worst = -math.inf
    for x in p.space.affine_basis():
        base = (p.F_eval(np.zeros(p.dim)) + x @ p.R_eval(np.zeros(p.dim))).real
        for y in ys:
            val = (p.F_eval(1j * y) + x @ p.R_eval(1j * y)).real
            worst = max(worst, val - base)
    thr = 1e-12
    out.append(_check("levy_structure",
                      "Re(F(iy) + <x, R(iy)>) is maximized at y = 0",
                      worst, thr, worst <= thr))
    return out


def _suite_affine_mc(cfg: RunConfig) -> list:
    x0 = cfg.x_grid[0]
    T = float(cfg.t_grid.max(initial=0.0)) or cfg.horizon
    dt = T / cfg.n_steps
    for t in cfg.t_grid:
        if t > 0 and not np.isclose(t / dt, round(t / dt), rtol=1e-9, atol=1e-9):
            raise ConfigValidationError(
                f"t={t} does not land on the simulation grid (T={T}, steps={cfg.n_steps})")
    ens = _build_ensemble(cfg, x0, T, cfg.n_steps, cfg.n_paths, cfg.seed)
    out = []
    for t in cfg.t_grid:
        if t <= 0:
            continue
        for u in cfg.u_grid[:3]:
            est = mc_char_fn(ens, float(t), u)
            ref = char_fn(cfg.params, x0, float(t), u, cfg.ode_tol)
            gap = abs(est.value - ref)
            thr = 3.0 * est.std_error
            out.append(_check(
                "affine_mc",
                "exponential-affine dependence of the Fourier-Laplace transform "
                "on the initial state (Monte Carlo vs Riccati)",
                gap, thr, gap <= thr,
                t=float(t), u=[[c.real, c.imag] for c in u],
                std_error=est.std_error))
    return out


def _suite_martingale(cfg: RunConfig) -> list:
    pairs = cfg.tolerances.get("martingale_pairs", [[0.1, 5], [0.05, 10]])
    tol = float(cfg.tolerances.get("martingale_tol", 0.0))
    radius = float(cfg.tolerances.get("martingale_stop_radius", 1.0))
    x0 = cfg.x_grid[0]
    out = []
    for delta, n in pairs:
        delta, n = float(delta), int(n)
        ens = _build_ensemble(cfg, x0, delta * n, n, cfg.n_paths, cfg.seed)
        for label, e in (("unstopped", ens), ("stopped", stopped_ensemble(ens, radius))):
            for u in cfg.u_grid[:3]:
                est = martingale_L_test(cfg.params, e, delta, n, u, cfg.ode_tol)
                gap = abs(est.value - 1.0)
                thr = max(3.0 * est.std_error, tol)
                out.append(_check(
                    "martingale",
                    "unit mean of the exponential compensated functional "
                    "L(n, delta, u), stopped and unstopped",
                    gap, thr, gap <= thr,
                    delta=delta, n=n, mode=label,
                    u=[[c.real, c.imag] for c in u]))
    return out


def _suite_characteristics(cfg: RunConfig) -> list:
    thr = float(cfg.tolerances.get("characteristics_rel", 0.05))
    if cfg.params.has_jumps or cfg.params.has_killing:
        return [_check("characteristics",
                       "realized quadratic covariation vs int A(X_s) ds "
                       "(diffusion-only check)",
                       math.nan, thr, False,
                       skipped="process has jumps or killing; check not applicable")]
    x0 = cfg.x_grid[0]
    ens = _build_ensemble(cfg, x0, cfg.horizon, cfg.n_steps, cfg.n_paths, cfg.seed)
    rep = characteristics_check(ens, cfg.params)
    out = [_check("characteristics",
                  "realized quadratic covariation matches int A(X_s) ds in "
                  "ensemble mean",
                  rep.ensemble_rel_error, thr, rep.ensemble_rel_error <= thr),
           _check("characteristics",
                  "drift residual X_T - X_0 - int B(X_s) ds is centered",
                  rep.max_drift_z, 3.0, rep.max_drift_z <= 3.0)]
    return out


_SUITES = {
    "semiflow": _suite_semiflow,
    "regularity": _suite_regularity,
    "bounded": _suite_bounded,
    "cp_limit": _suite_cp_limit,
    "levy_structure": _suite_levy_structure,
    "affine_mc": _suite_affine_mc,
    "martingale": _suite_martingale,
    "characteristics": _suite_characteristics,
}


def run_verify(cfg: RunConfig, out_dir: str) -> int:
    checks = []
    for name in cfg.verify_suite:
        try:
            checks.extend(_SUITES[name](cfg))
        except TransformError as e:
            checks.append(_check(name, "verifier aborted by transform failure",
                                 math.nan, math.nan, False, error=str(e)))
    all_pass = all(c["pass"] for c in checks)
    report = {
        "task": "verify",
        "preset": cfg.preset,
        "seed": cfg.seed,
        "ode_tol": cfg.ode_tol,
        "suites": list(cfg.verify_suite),
        "checks": checks,
        "all_pass": all_pass,
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    for c in checks:
        state = "PASS" if c["pass"] else "FAIL"
        print(f"[{state}] {c['check']}: statistic={c['statistic']:.4g} "
              f"threshold={c['threshold']:.4g}")
    print(f"wrote {path}")
    return EXIT_OK if all_pass else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="affine-kit",
        description="Affine process transforms, simulation and verification")
    parser.add_argument("task", choices=["transform", "simulate", "verify"])
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override mc.seed")
    parser.add_argument("--tol", type=float, default=None, help="override tolerances.ode")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, seed_override=args.seed, tol_override=args.tol)
    except ConfigParseError as e:
        print(f"config parse error: {e}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except ConfigValidationError as e:
        print(f"config validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION_ERROR

    if cfg.task != args.task:
        print(f"config task {cfg.task!r} does not match command {args.task!r}",
              file=sys.stderr)
        return EXIT_VALIDATION_ERROR

    os.makedirs(args.out, exist_ok=True)
    try:
        if args.task == "transform":
            return run_transform(cfg, args.out)
        if args.task == "simulate":
            return run_simulate(cfg, args.out)
        return run_verify(cfg, args.out)
    except ConfigValidationError as e:
        print(f"config validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION_ERROR


if __name__ == "__main__":
    sys.exit(main())

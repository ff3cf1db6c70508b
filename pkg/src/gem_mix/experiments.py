"""Config-driven experiment runners.

Each runner takes an :class:`ExperimentSpec`, writes ``<name>.csv``,
``<name>.svg`` and a ``<name>.json`` sidecar into the output directory, and
returns the summary that went into the sidecar. Every artifact is a pure
function of the spec and its master seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from . import plotting
from . import rng as _rng
from .bounds import (
    CertificateError,
    bound_report,
    contraction_radius,
    predicted_iterations,
    verify_gs_empirical,
)
from .em import Trajectory, gradient_moments, run_gradient_em, stochastic_em_run
from .empirical import loglog_slope, scaling_study
from .mixture import MixtureConfig, center_means, sample as draw_sample, separation_stats

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

KINDS = (
    "convergence",
    "region-probe",
    "verify-gs",
    "deviation-scaling",
    "rademacher-scaling",
    "stochastic",
    "bounds",
)


class SpecError(ValueError):
    """Invalid experiment specification."""


# ---------------------------------------------------------------------------
# model generation


def _arc_points(M: int, theta: float) -> np.ndarray:
    ang = theta * np.arange(M)
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def _ratio(points: np.ndarray) -> tuple[float, float]:
    diff = points[:, None] - points[None]
    dist = np.sqrt((diff**2).sum(-1))[np.triu_indices(len(points), 1)]
    return float(dist.min()), float(dist.max())


def arc_layout(
    M: int,
    d: int,
    r_min: float,
    ratio: float,
    weights: Sequence[float] | None = None,
) -> MixtureConfig:
    """Centred means on a planar arc with ``R_min = r_min`` and ``R_max / R_min = ratio``.

    The ``M`` points are equally spaced on a circular arc whose opening angle
    is solved so that the distance ratio is hit; ``ratio = M - 1`` degenerates
    to equally spaced points on a line. The plane is spanned by the first two
    coordinates.
    """
    w = np.full(M, 1.0 / M) if weights is None else np.asarray(weights, dtype=float)
    if M == 1:
        return MixtureConfig(w, np.zeros((1, d)))
    if M == 2:
        if abs(ratio - 1.0) > 1e-6:
            raise SpecError("two components always have R_max/R_min = 1")
        pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    elif abs(ratio - (M - 1)) <= 1e-9:
        pts = np.stack([np.arange(M, dtype=float), np.zeros(M)], axis=1)
    else:
        if d < 2:
            raise SpecError("an arc layout needs d >= 2")

        def gap(theta: float) -> float:
            lo, hi = _ratio(_arc_points(M, theta))
            return hi / lo - ratio

        lo_t, hi_t = 1e-6, 2 * math.pi / M
        if gap(lo_t) * gap(hi_t) > 0:
            raise SpecError(f"ratio {ratio} not reachable with {M} points on an arc")
        pts = _arc_points(M, brentq(gap, lo_t, hi_t, xtol=1e-14))
    if d == 1:
        if np.any(np.abs(pts[:, 1]) > 0):
            raise SpecError("layout needs d >= 2")
        pts = pts[:, :1]
    lo, hi = _ratio(pts)
    means = np.zeros((M, d))
    means[:, : pts.shape[1]] = pts * (r_min / lo)
    config = center_means(MixtureConfig(w, means))
    stats = separation_stats(config)
    if abs(stats.r_min - r_min) > 1e-6 or abs(stats.r_max / stats.r_min - ratio) > 1e-6:
        raise SpecError("generator missed the requested separation")
    return config


def build_model(model: Mapping[str, Any], *, r_min: float | None = None, d: int | None = None) -> MixtureConfig:
    """Explicit mixture or generator spec -> centred MixtureConfig.

    ``r_min`` and ``d`` override the generator's values (used by SNR and
    dimension sweeps).
    """
    if "means" in model:
        extra = set(model) - {"weights", "means", "dim", "center"}
        if extra:
            raise SpecError(f"unknown model keys {sorted(extra)}")
        cfg = MixtureConfig.from_dict({k: v for k, v in model.items() if k != "center"})
        return center_means(cfg) if model.get("center", True) else cfg
    allowed = {"M", "d", "layout", "r_min", "ratio", "weights"}
    extra = set(model) - allowed
    if extra:
        raise SpecError(f"unknown model keys {sorted(extra)}")
    try:
        M = int(model["M"])
        dim = int(d if d is not None else model["d"])
    except KeyError as exc:
        raise SpecError(f"generator spec missing {exc}") from None
    layout = model.get("layout", "arc")
    if layout != "arc":
        raise SpecError(f"unknown layout {layout!r}")
    rm = float(r_min if r_min is not None else model.get("r_min", 5.0))
    default_ratio = 1.0 if M == 2 else min(1.5, M - 1)
    try:
        return arc_layout(M, dim, rm, float(model.get("ratio", default_ratio)), model.get("weights"))
    except ValueError as exc:
        raise SpecError(str(exc)) from None


# ---------------------------------------------------------------------------
# specs


@dataclass
class ExperimentSpec:
    kind: str
    model: dict[str, Any] = field(default_factory=lambda: {"M": 3, "d": 2, "r_min": 5.0, "ratio": 1.5})
    trials: int = 10
    n: int = 12000
    snr_grid: list[float] = field(default_factory=lambda: [5.0])
    seed: int = 0
    out_dir: str = "out"
    name: str | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SpecError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1 or self.n < 1:
            raise SpecError("trials and n must be positive")
        if not self.snr_grid:
            raise SpecError("snr_grid must not be empty")
        self.snr_grid = [float(s) for s in self.snr_grid]
        if self.name is None:
            self.name = self.kind

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise SpecError(f"unknown spec keys {sorted(extra)}")
        if "kind" not in data:
            raise SpecError("spec needs a kind")
        return cls(**dict(data))

    def model_config(self, r_min: float | None = None, d: int | None = None) -> MixtureConfig:
        return build_model(self.model, r_min=r_min, d=d)


def read_spec_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix == ".toml":
            return tomllib.loads(text)
        if path.suffix == ".json":
            return json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise SpecError(f"cannot parse {path}: {exc}") from None
    raise SpecError(f"unsupported spec format {path.suffix}")


def load_spec(path: str | Path, **overrides: Any) -> ExperimentSpec:
    data = read_spec_file(path)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentSpec.from_dict(data)


# ---------------------------------------------------------------------------
# shared plumbing


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_sidecar(path: Path, spec: ExperimentSpec, summary: dict[str, Any]) -> Path:
    payload = {"spec": asdict(spec), "summary": summary}
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def _outputs(spec: ExperimentSpec, out_dir: str | Path | None) -> tuple[Path, Path, Path]:
    out = Path(out_dir if out_dir is not None else spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / f"{spec.name}.csv", out / f"{spec.name}.svg", out / f"{spec.name}.json"


def fit_log_slope(errors: np.ndarray, plateau_factor: float = 2.0, max_window: int | None = None) -> tuple[float, int]:
    """Per-iteration slope of ``log err`` over the transient phase.

    The window runs from ``t = 0`` to the first iterate within
    ``plateau_factor`` of the terminal error (at least one step).
    Returns ``(slope, window_end)``.
    """
    errors = np.maximum(np.asarray(errors, dtype=float), 1e-300)
    plateau = errors[-1]
    below = np.flatnonzero(errors <= plateau_factor * plateau)
    end = int(below[0]) if below.size else len(errors) - 1
    end = max(end, 1)
    if max_window is not None:
        end = min(end, max_window)
    t = np.arange(end + 1)
    return float(np.polyfit(t, np.log(errors[: end + 1]), 1)[0]), end


def _padded(err: np.ndarray, length: int) -> np.ndarray:
    if len(err) >= length:
        return err[:length]
    return np.concatenate([err, np.full(length - len(err), err[-1])])


def region_radius_for(config: MixtureConfig) -> tuple[float, str]:
    """Certified radius when the theory gives one, else the limiting ``R_min / 2``."""
    stats = separation_stats(config)
    try:
        return contraction_radius(stats, config.components, config.pi_min, "solved"), "solved"
    except CertificateError:
        return stats.r_min / 2, "r_min/2"


# ---------------------------------------------------------------------------
# runners


def run_convergence(
    spec: ExperimentSpec,
    out_dir: str | Path | None = None,
    *,
    against_best_fixed_point: bool = False,
    threads: int = 1,
) -> dict[str, Any]:
    """Sample gradient EM from a perturbed truth for every SNR in the grid.

    Each trial draws ``n`` points and starts every centre at distance ``a/2``
    from its truth in a uniform random direction. Errors are measured
    against the truth, or with ``against_best_fixed_point`` against the
    sample-EM fixed point reached from a truth-initialised run.
    """
    csv_path, svg_path, json_path = _outputs(spec, out_dir)
    p = spec.params
    max_iters = int(p.get("max_iters", 100))
    tol = float(p.get("tol", 0.0))
    configs = [spec.model_config(r_min=r) for r in spec.snr_grid]  # fail before any run

    def trial(job: tuple[int, int]) -> dict[str, Any]:
        j, k = job
        config = configs[j]
        a, _ = region_radius_for(config)
        ts = _rng.derive_seed(spec.seed, _rng.TRIALS, j, k)
        smp = draw_sample(config, spec.n, ts)
        dirs = _rng.random_unit_vectors(_rng.generator(ts, _rng.INIT), config.components, config.dim)
        init = config.means + 0.5 * a * dirs
        ref = None
        if against_best_fixed_point:
            ref = run_gradient_em("sample", config, config.means, sample=smp, max_iters=5000, tol=1e-12).means
        tr = run_gradient_em("sample", config, init, sample=smp, max_iters=max_iters, tol=tol, reference=ref)
        err = _padded(tr.err_total, max_iters + 1)
        slope, end = fit_log_slope(err)
        return {"err": err, "slope": slope, "window": end, "status": tr.status}

    jobs = [(j, k) for j in range(len(configs)) for k in range(spec.trials)]
    results = _rng.parallel_map(trial, jobs, threads)

    rows, curves, per_snr = [], {}, {}
    for j, snr in enumerate(spec.snr_grid):
        res = [r for (jj, _), r in zip(jobs, results) if jj == j]
        logs = np.log(np.maximum(np.array([r["err"] for r in res]), 1e-300))
        mean, sd = logs.mean(0), logs.std(0)
        curves[snr] = (mean, sd)
        rows.extend((snr, t, mean[t], sd[t]) for t in range(len(mean)))
        slopes = np.array([r["slope"] for r in res])
        a, a_source = region_radius_for(configs[j])
        per_snr[str(snr)] = {
            "median_slope": float(np.median(slopes)),
            "contraction_factor": float(math.exp(np.median(slopes))),
            "slopes": slopes,
            "fit_windows": [r["window"] for r in res],
            "statuses": [r["status"] for r in res],
            "decay_25": float(np.exp(mean[0] - mean[min(25, len(mean) - 1)])),
            "radius_a": a,
            "radius_source": a_source,
        }
    _write_csv(csv_path, ["snr", "t", "mean_log_err", "sd_log_err"], rows)
    plotting.convergence_curves(curves, svg_path)
    summary = {
        "reference": "best_fixed_point" if against_best_fixed_point else "truth",
        "per_snr": per_snr,
        "max_iters": max_iters,
    }
    _write_sidecar(json_path, spec, summary)
    return summary


def run_region_probe(spec: ExperimentSpec, out_dir: str | Path | None = None, *, threads: int = 1) -> dict[str, Any]:
    """Start centres 2 and 3 at ``mid -/+ eps`` along the line joining their truths.

    Centre 1 starts at its truth plus a ``0.01 R_min`` perturbation. Final
    errors are reported relative to ``R_min``. ``params.plot = "paths"`` draws
    iterate paths of the first trial instead of the error curve.
    """
    csv_path, svg_path, json_path = _outputs(spec, out_dir)
    p = spec.params
    eps_grid = [float(e) for e in p.get("eps_grid", [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5])]
    max_iters = int(p.get("max_iters", 1000))
    tol = float(p.get("tol", 1e-8))
    config = spec.model_config(r_min=spec.snr_grid[0])
    if config.components < 3:
        raise SpecError("region probe needs at least three components")
    r_min = separation_stats(config).r_min
    mu = config.means
    axis = (mu[2] - mu[1]) / np.linalg.norm(mu[2] - mu[1])
    mid = 0.5 * (mu[1] + mu[2])

    def trial(job: tuple[int, int]) -> tuple[float, np.ndarray, str]:
        e_idx, k = job
        ts = _rng.derive_seed(spec.seed, _rng.TRIALS, k)
        smp = draw_sample(config, spec.n, ts)
        init = mu.copy()
        init[0] = mu[0] + 0.01 * r_min * _rng.random_unit_vectors(_rng.generator(ts, _rng.INIT), 1, config.dim)[0]
        offset = eps_grid[e_idx] * r_min * axis
        init[1], init[2] = mid - offset, mid + offset
        tr = run_gradient_em("sample", config, init, sample=smp, max_iters=max_iters, tol=tol)
        return float(np.linalg.norm(tr.means - mu)) / r_min, tr.iterates, tr.status

    jobs = [(e, k) for e in range(len(eps_grid)) for k in range(spec.trials)]
    results = _rng.parallel_map(trial, jobs, threads)
    errors = np.array([r[0] for r in results]).reshape(len(eps_grid), spec.trials)
    statuses = [r[2] for r in results]
    rows = [(eps_grid[e], k, errors[e, k], statuses[e * spec.trials + k]) for e in range(len(eps_grid)) for k in range(spec.trials)]
    _write_csv(csv_path, ["eps_over_rmin", "trial", "final_err_over_rmin", "status"], rows)
    if p.get("plot", "error") == "paths":
        paths = {eps_grid[e]: results[e * spec.trials][1] for e in range(len(eps_grid))}
        plotting.region_paths(paths, mu, svg_path)
    else:
        plotting.region_error(eps_grid, errors, svg_path)
    summary = {
        "eps_grid": eps_grid,
        "eps_grid_note": "offsets as fractions of R_min; geometric grid plus 0 and 1/2",
        "median_final_err_over_rmin": np.median(errors, axis=1),
        "final_err_over_rmin": errors,
        "r_min": r_min,
    }
    _write_sidecar(json_path, spec, summary)
    return summary


def run_bounds(
    spec: ExperimentSpec,
    out_dir: str | Path | None = None,
    *,
    threads: int = 1,
    echo: Callable[[str], None] | None = print,
) -> dict[str, Any]:
    """Evaluate the closed-form constants for each SNR and cross-check with a population run.

    The companion run starts at distance ``a/2`` from the truth and counts the
    iterations until the error falls below ``max(tol, 4 * noise)``, where
    ``noise`` is the Monte-Carlo error of one step.
    """
    csv_path, _, json_path = _outputs(spec, out_dir)
    p = spec.params
    mode = p.get("constant_mode", "explicit")
    tol = float(p.get("tol", 1e-2))
    mc = int(p.get("mc_samples", 1_000_000))
    reports = []
    rows = []
    for j, snr in enumerate(spec.snr_grid):
        config = spec.model_config(r_min=snr)
        rep = bound_report(config, spec.n, constant_mode=mode, c_a=float(p.get("c_a", 1.0)),
                           c_eps=float(p.get("c_eps", 1.0)), delta=float(p.get("delta", 0.05)))
        entry: dict[str, Any] = {"report": rep.to_dict(), "predicted": None, "measured": None}
        if rep.contractive:
            ts = _rng.derive_seed(spec.seed, _rng.TRIALS, j)
            dirs = _rng.random_unit_vectors(_rng.generator(ts, _rng.INIT), config.components, config.dim)
            init = config.means + 0.5 * rep.radius_a * dirs
            tr = run_gradient_em("population", config, init, max_iters=int(p.get("max_iters", 50)),
                                 tol=1e-12, mc_samples=mc, seed=ts, threads=threads)
            step = 2.0 / (config.pi_min + config.pi_max)
            se = gradient_moments(
                draw_sample(config, mc, ts, stream=_rng.MEGA).points, config.weights, config.means
            ).std_err
            target = max(tol, 4 * step * float(np.sqrt((se**2).sum())))
            hit = np.flatnonzero(tr.err_total <= target)
            entry["measured"] = int(hit[0]) if hit.size else None
            entry["predicted"] = predicted_iterations(rep.zeta, float(tr.err_total[0]), target)
            entry["target"] = target
        reports.append(entry)
        rows.append((
            config.components, separation_stats(config).r_min,
            rep.gamma if rep.gamma is not None else "", rep.zeta if rep.zeta is not None else "",
            rep.radius_a if rep.radius_a is not None else "", entry["predicted"] if entry["predicted"] is not None else "",
            entry["measured"] if entry["measured"] is not None else "", rep.message,
        ))
    header = ["M", "r_min", "gamma", "zeta", "radius_a", "predicted_iters", "measured_iters", "status"]
    _write_csv(csv_path, header, rows)
    if echo is not None:
        echo(format_table(header, rows))
    summary = {"entries": reports}
    _write_sidecar(json_path, spec, summary)
    return summary


def format_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    def cell(v: Any) -> str:
        if isinstance(v, (float, np.floating)):
            return f"{v:.4g}"
        return str(v)

    cells = [[cell(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines)


def run_verify_gs(spec: ExperimentSpec, out_dir: str | Path | None = None, *, threads: int = 1) -> dict[str, Any]:
    """Empirical gradient-stability certificate for each separation in the grid."""
    csv_path, svg_path, json_path = _outputs(spec, out_dir)
    mc = int(spec.params.get("mc_samples", 1_000_000))
    configs = [spec.model_config(r_min=r) for r in spec.snr_grid]

    def one(j: int):
        config = configs[j]
        stats = separation_stats(config)
        a = contraction_radius(stats, config.components, config.pi_min, "solved")
        return verify_gs_empirical(config, radius_a=a, mc_samples=mc, seed=_rng.derive_seed(spec.seed, _rng.TRIALS, j))

    reps = _rng.parallel_map(one, range(len(configs)), threads)
    rows = [(r, rep.radius_a, rep.gamma_hat, rep.std_err, rep.gamma_bound, rep.passed)
            for r, rep in zip(spec.snr_grid, reps)]
    _write_csv(csv_path, ["r_min", "radius_a", "gamma_hat", "std_err", "gamma_bound", "passed"], rows)
    plotting.semilogy_lines(
        spec.snr_grid,
        {"measured": [max(rep.gamma_hat, 1e-300) for rep in reps], "bound": [rep.gamma_bound for rep in reps]},
        svg_path, r"$R_{min}$", r"$\gamma$",
    )
    summary = {"passed": all(rep.passed for rep in reps), "gamma_hat": [rep.gamma_hat for rep in reps]}
    _write_sidecar(json_path, spec, summary)
    return summary


def _scaling(spec: ExperimentSpec, quantity: str, out_dir, threads: int) -> dict[str, Any]:
    csv_path, svg_path, json_path = _outputs(spec, out_dir)
    p = spec.params
    n_grid = [int(v) for v in p.get("n_grid", [2000, 8000, 32000])]
    d_grid = [int(v) for v in p.get("d_grid", [spec.model.get("d", 2)])]
    frac = float(p.get("region_fraction", 0.2))

    def make(d: int) -> MixtureConfig:
        return spec.model_config(r_min=spec.snr_grid[0], d=d)

    res = scaling_study(
        quantity, n_grid, d_grid, make,
        lambda c: frac * separation_stats(c).r_min,
        component=int(p.get("component", 0)),
        seeds=spec.trials,
        seed=spec.seed,
        multistarts=int(p.get("multistarts", 16)),
        iters=int(p.get("iters", 200)),
        replications=int(p.get("replications", 1)),
        reference=p.get("reference", "quadrature" if max(d_grid) <= 3 else "mc"),
        coupled=bool(p.get("coupled", quantity == "rademacher" and len(d_grid) > 1)),
        threads=threads,
    )
    res.to_csv(csv_path)
    plotting.loglog_lines(
        {f"d={d}": (n_grid, [res.medians[(n, d)] for n in n_grid]) for d in d_grid},
        svg_path, "n", f"median {quantity}", reference_slope=-0.5,
    )
    summary = {"slopes": res.slopes, "medians": {f"{n},{d}": v for (n, d), v in res.medians.items()}}
    _write_sidecar(json_path, spec, summary)
    return summary


def run_deviation_scaling(spec: ExperimentSpec, out_dir=None, *, threads: int = 1) -> dict[str, Any]:
    return _scaling(spec, "deviation", out_dir, threads)


def run_rademacher_scaling(spec: ExperimentSpec, out_dir=None, *, threads: int = 1) -> dict[str, Any]:
    return _scaling(spec, "rademacher", out_dir, threads)


def terminal_errors(
    config: MixtureConfig,
    n_grid: Sequence[int],
    seeds: int,
    seed: int = 0,
    *,
    max_iters: int = 500,
    threads: int = 1,
) -> dict[int, np.ndarray]:
    """Final ``||mu^T - mu*||`` of truth-initialised sample EM per ``n`` and seed."""

    def one(job: tuple[int, int]) -> float:
        ni, s = job
        smp = draw_sample(config, n_grid[ni], _rng.derive_seed(seed, _rng.TRIALS, ni, s))
        tr = run_gradient_em("sample", config, config.means, sample=smp, max_iters=max_iters, tol=1e-10)
        return float(tr.err_total[-1])

    jobs = [(ni, s) for ni in range(len(n_grid)) for s in range(seeds)]
    vals = np.array(_rng.parallel_map(one, jobs, threads)).reshape(len(n_grid), seeds)
    return {n: vals[i] for i, n in enumerate(n_grid)}


def run_stochastic(spec: ExperimentSpec, out_dir: str | Path | None = None, *, threads: int = 1) -> dict[str, Any]:
    """Projected stochastic gradient EM on fresh draws, averaged over ``trials`` seeds.

    Fits the log-log slope of the mean squared error over
    ``params.fit_range`` (default ``[100, 10000]``).
    """
    csv_path, svg_path, json_path = _outputs(spec, out_dir)
    p = spec.params
    config = spec.model_config(r_min=spec.snr_grid[0])
    max_iters = int(p.get("max_iters", 10_000))
    batch = int(p.get("batch", 1))
    init_offset = float(p.get("init_offset", 1.0))
    if "projection_radius" in p:
        radius = float(p["projection_radius"])
    elif config.components > 1:
        radius = 0.5 * region_radius_for(config)[0]
    else:
        radius = 5.0 * init_offset

    def one(k: int) -> np.ndarray:
        ts = _rng.derive_seed(spec.seed, _rng.TRIALS, k)
        dirs = _rng.random_unit_vectors(_rng.generator(ts, _rng.INIT), config.components, config.dim)
        init = config.means + init_offset * dirs
        tr = stochastic_em_run(config, init, projection_radius=radius, batch=batch, max_iters=max_iters,
                               step_constant=p.get("step_constant"), seed=ts)
        return tr.err_total**2

    sq = np.array(_rng.parallel_map(one, range(spec.trials), threads))
    mean_sq = sq.mean(0)
    lo, hi = (int(v) for v in p.get("fit_range", [100, 10_000]))
    hi = min(hi, max_iters)
    ts_fit = np.unique(np.geomspace(lo, hi, 40).astype(int))
    slope = loglog_slope(ts_fit, mean_sq[ts_fit])
    t_all = np.arange(1, max_iters + 1)
    keep = np.unique(np.geomspace(1, max_iters, 200).astype(int))
    _write_csv(csv_path, ["t", "mean_sq_err"], [(int(t), mean_sq[t]) for t in keep])
    plotting.loglog_lines({"mean squared error": (t_all[keep - 1], mean_sq[keep])}, svg_path,
                          "iteration t", r"$E\|\mu^t-\mu^*\|^2$", reference_slope=-1.0)
    summary = {"slope": slope, "fit_range": [lo, hi], "projection_radius": radius}
    _write_sidecar(json_path, spec, summary)
    return summary


RUNNERS: dict[str, Callable[..., dict[str, Any]]] = {
    "convergence": run_convergence,
    "region-probe": run_region_probe,
    "verify-gs": run_verify_gs,
    "deviation-scaling": run_deviation_scaling,
    "rademacher-scaling": run_rademacher_scaling,
    "stochastic": run_stochastic,
    "bounds": run_bounds,
}


def run_experiment(spec: ExperimentSpec, out_dir=None, *, threads: int = 1, against_best_fixed_point: bool = False,
                   echo: Callable[[str], None] | None = print) -> dict[str, Any]:
    if spec.kind == "convergence":
        return run_convergence(spec, out_dir, against_best_fixed_point=against_best_fixed_point, threads=threads)
    if spec.kind == "bounds":
        return run_bounds(spec, out_dir, threads=threads, echo=echo)
    return RUNNERS[spec.kind](spec, out_dir, threads=threads)


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_suite(
    suite: Mapping[str, Any],
    out_dir: str | Path,
    *,
    seed: int | None = None,
    threads: int = 1,
    against_best_fixed_point: bool = False,
    echo: Callable[[str], None] | None = None,
) -> dict[str, Any]:
    """Run every entry of ``suite["experiments"]`` and write ``manifest.json``.

    A failing experiment is recorded in the manifest and the suite carries on.
    Top-level keys other than ``experiments`` act as defaults for each entry.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    defaults = {k: v for k, v in suite.items() if k != "experiments"}
    entries = []
    for idx, raw in enumerate(suite.get("experiments", [])):
        data = {**defaults, **raw}
        if seed is not None:
            data["seed"] = seed
        data.pop("out_dir", None)
        entry: dict[str, Any] = {"index": idx, "name": data.get("name", data.get("kind")), "kind": data.get("kind")}
        try:
            spec = ExperimentSpec.from_dict(data)
            entry["name"] = spec.name
            run_experiment(spec, out, threads=threads, against_best_fixed_point=against_best_fixed_point, echo=echo)
            entry["status"] = "ok"
        except Exception as exc:  # recorded, not raised: the suite continues
            log.exception("experiment %s failed", entry["name"])
            entry["status"] = "failed"
            entry["error"] = f"{type(exc).__name__}: {exc}"
        arts = []
        for suffix in (".csv", ".svg", ".json"):
            path = out / f"{entry['name']}{suffix}"
            if entry["status"] == "ok" and path.exists():
                arts.append({"path": path.name, "sha256": sha256(path)})
        entry["artifacts"] = arts
        entries.append(entry)
    manifest = {"experiments": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest

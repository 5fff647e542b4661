# experiments.py

"""
Initial data, the nu-sweep convergence experiment, rate fitting and result files.

One incompressible reference run per seed (from P v0) is compared with one compressible
run per (nu, seed). Rows are independent jobs on a bounded thread pool; finished rows go
through a queue to a single writer thread that appends them to sweep.csv, so an
interrupted sweep loses at most the runs in flight and a rerun skips finished rows.
"""

import csv
import json
import logging
import math
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, NamedTuple, Optional, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy.stats import linregress

from compressible_solver import (
    CompressibleSolver, MONITOR_CEILING, continuation_monitor, rescale_config,
)
from errors import (
    ConfigError, CriticalFlowError, DegenerateFitError, InitialDataError, OutputError,
)
from functionals import (
    check_smallness, check_theorem_bound, compute_XYZWV, inputs_from_perturbation,
    perturbation_fields,
)
from helmholtz import project_P, project_Q
from incompressible_solver import IncompressibleSolver, compute_M, taylor_green
from littlewood_paley import besov_norm, build_partition
from setting_module import (
    cns_config_from, flag, grid_from, ins_config_from, number_list, output_root, worker_threads,
)
from spectral_core import SpectralField, transform, truncate
from trajectory import layer_levels

log = logging.getLogger(__name__)

# --- CONFIGURATION ---
INIT_KINDS = ("taylor-green", "random-band", "random-band-plus-density")
A_SCALINGS = ("fixed", "inverse-nu")
NOISE_FLOOR = 1e-8
CSV_COLUMNS = ["nu", "seed", "E", "Xd", "Yd", "Zd", "Wd", "Vd", "flag", "wall_s"]
REFERENCE_SLOPE = -0.5
DEGENERATE_NOTE = "degenerate: E below noise floor"

# rng stream ids, one per random ingredient
STREAM_V, STREAM_Q, STREAM_A = 0, 1, 2


@dataclass(frozen=True)
class InitSpec:
    """Initial-data recipe.

    taylor-green: v0 = Taylor-Green vortex of amplitude v_amplitude plus a random
    potential part with ||Q v0||_{B^{d/2-1}} = q_amplitude; a0 random with
    ||a0||_{B^{d/2}} = a_amplitude. random-band: v0 random (not projected) with
    ||v0||_{B^{d/2-1}} = v_amplitude, a0 = 0. random-band-plus-density: the same v0
    plus a random a0.
    """

    kind: str = "taylor-green"
    v_amplitude: float = 1.0
    q_amplitude: float = 0.0
    a_amplitude: float = 0.0
    band: Tuple[int, int] = (0, 2)
    a_scaling: str = "fixed"

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ConfigError(f"init.kind must be one of {INIT_KINDS}, got {self.kind!r}")
        if self.a_scaling not in A_SCALINGS:
            raise ConfigError(f"a_scaling must be one of {A_SCALINGS}, got {self.a_scaling!r}")
        if len(self.band) != 2 or self.band[0] > self.band[1]:
            raise ConfigError(f"init.band must be [j_lo, j_hi] with j_lo <= j_hi, got {self.band}")
        if min(self.v_amplitude, self.q_amplitude, self.a_amplitude) < 0:
            raise ConfigError("initial amplitudes must be non-negative")

    def a_target(self, nu):
        return self.a_amplitude / nu if self.a_scaling == "inverse-nu" else self.a_amplitude


def _random_band(partition, rng, components, band, target, s):
    """Random field on blocks band[0]..band[1], rescaled to ||f||_{B^s} = target."""
    grid = partition.grid
    j_lo, j_hi = band
    if j_lo < partition.j_min or j_hi > partition.j_max:
        raise InitialDataError(
            f"band [{j_lo}, {j_hi}] outside the partition range [{partition.j_min}, {partition.j_max}]"
        )
    noise = rng.standard_normal((components,) + grid.shape)
    multiplier = sum(partition.block_weight(j) for j in range(j_lo, j_hi + 1))
    field_ = truncate(transform(grid, noise))
    field_ = field_.with_coeffs(field_.coeffs * multiplier)
    if target == 0.0:
        return SpectralField.zeros(grid, components)
    return _rescale(partition, field_, target, s)


def _rescale(partition, f, target, s):
    measured = besov_norm(partition, f, s).value
    if measured == 0.0:
        raise InitialDataError(f"cannot reach ||f||_B^{s:g} = {target}: the band carries no modes")
    return f * (target / measured)


def generate_initial_data(spec, partition, seed, nu=1.0):
    """(a0, v0), deterministic in (spec, grid, seed, nu); mean(a0) = 0."""
    grid = partition.grid
    s = grid.dim / 2.0 - 1.0

    def rng(stream):
        return np.random.default_rng([int(seed), stream])

    a_target = spec.a_target(nu)
    if spec.kind == "taylor-green":
        v0 = taylor_green(grid, spec.v_amplitude)
        if spec.q_amplitude > 0:
            potential = project_Q(_random_band(partition, rng(STREAM_Q), grid.dim, spec.band, 1.0, s))
            v0 = v0 + _rescale(partition, potential, spec.q_amplitude, s)
    else:
        v0 = _random_band(partition, rng(STREAM_V), grid.dim, spec.band, spec.v_amplitude, s)

    if spec.kind == "random-band":
        a0 = SpectralField.zeros(grid)
    else:
        a0 = _random_band(partition, rng(STREAM_A), 1, spec.band, a_target, s + 1)
    return a0.without_mean(), v0


def init_spec_from(settings, a_scaling="fixed"):
    band = settings["init.band"]
    if not isinstance(band, list) or len(band) != 2:
        raise ConfigError(f"init.band must be a two-element list, got {band!r}")
    return InitSpec(
        kind=str(settings["init.kind"]),
        v_amplitude=float(settings["init.v_amplitude"]),
        q_amplitude=float(settings["init.q_amplitude"]),
        a_amplitude=float(settings["init.a_amplitude"]),
        band=(int(band[0]), int(band[1])),
        a_scaling=a_scaling,
    )


# --- SWEEP ---

@dataclass(frozen=True)
class ExperimentConfig:
    settings: dict
    nu_values: Tuple[float, ...]
    seeds: Tuple[int, ...]
    init: InitSpec
    output_dir: Path
    noise_floor: float = NOISE_FLOOR
    constant_C: float = 1.0
    ceiling: float = MONITOR_CEILING
    resolve_layer: bool = True

    def __post_init__(self):
        mu = float(self.settings["mu"])
        nus = list(self.nu_values)
        if any(b <= a for a, b in zip(nus, nus[1:])):
            raise ConfigError(f"nu_values must be strictly increasing, got {nus}")
        if any(nu < mu for nu in nus):
            raise ConfigError(f"every nu must be >= mu = {mu}, got {nus}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {list(self.seeds)}")
        if len(nus) < 2:
            log.warning("a single nu value gives rows but no rate fit")

    @property
    def mu(self):
        return float(self.settings["mu"])

    def normalised(self):
        """The same experiment with mu = 1: lengths / mu, horizon mu t_end, nu / mu."""
        if self.mu == 1.0:
            return self
        _, _, t_end, length = rescale_config(self.mu, 0.0, float(self.settings["t_end"]),
                                             float(self.settings["grid.length"]))
        settings = dict(self.settings, mu=1.0, t_end=t_end)
        settings["grid.length"] = length
        log.info("rescaling sweep to mu = 1 (length %g, t_end %g)", length, t_end)
        return replace(self, settings=settings,
                       nu_values=tuple(nu / self.mu for nu in self.nu_values))

    def with_layer_grading(self, grid):
        """Grade the first step of every run so the fastest viscous layer, rate
        max(nu) |xi|_max^2, is sampled before the regular save interval takes over."""
        k2_max = float(np.max(grid.k2[grid.dealias_mask]))
        levels = layer_levels(float(self.settings["dt"]), max(self.nu_values) * k2_max)
        if levels:
            log.info("grading the first step over %d halvings", levels)
        return replace(self, settings=dict(self.settings, grading=levels))


def experiment_config_from(settings):
    out = settings["sweep.output_dir"]
    return ExperimentConfig(
        settings=settings,
        nu_values=tuple(number_list(settings, "sweep.nu_values")),
        seeds=tuple(number_list(settings, "sweep.seeds", int)),
        init=init_spec_from(settings, str(settings["sweep.a_scaling"])),
        output_dir=Path(out) if out else output_root() / "sweep",
        noise_floor=float(settings["sweep.noise_floor"]),
        constant_C=float(settings["sweep.constant_C"]),
        ceiling=float(settings["sweep.ceiling"]),
        resolve_layer=flag(settings, "sweep.resolve_layer"),
    )


@dataclass
class RowResult:
    nu: float
    seed: int
    E: float
    Xd: float
    Yd: float
    Zd: float
    Wd: float
    Vd: float
    flag: str = ""
    wall_s: float = 0.0
    failed: bool = False
    theorem_C: Optional[float] = None
    smallness_ratio: Optional[float] = None

    @property
    def key(self):
        return (float(self.nu), int(self.seed))

    def csv_row(self):
        values = [self.nu, self.seed, self.E, self.Xd, self.Yd, self.Zd, self.Wd, self.Vd]
        return [repr(float(v)) if i != 1 else str(int(v)) for i, v in enumerate(values)] + [
            self.flag, f"{self.wall_s:.3f}"]


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r2: float
    slope_stderr: float
    seeds: int


@dataclass
class SweepResult:
    rows: List[RowResult] = field(default_factory=list)
    fit: Optional[RateFit] = None
    note: str = ""

    @property
    def failed_rows(self):
        return [r for r in self.rows if r.failed]

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: r.key)


def read_sweep_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for record in csv.DictReader(f):
            flag = record["flag"]
            rows.append(RowResult(
                float(record["nu"]), int(record["seed"]),
                *(float(record[c]) for c in ("E", "Xd", "Yd", "Zd", "Wd", "Vd")),
                flag=flag, wall_s=float(record["wall_s"]), failed=flag.startswith("error"),
            ))
    return rows


class _RowWriter:
    """Single writer thread appending finished rows to sweep.csv."""

    def __init__(self, path):
        self.path = Path(path)
        self.queue = queue.Queue()
        self.thread = threading.Thread(target=self._loop, daemon=True)

    def __enter__(self):
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        self.handle = open(self.path, "a", encoding="utf-8", newline="")
        self.writer = csv.writer(self.handle)
        if fresh:
            self.writer.writerow(CSV_COLUMNS)
            self.handle.flush()
        self.thread.start()
        return self

    def put(self, row):
        self.queue.put(row)

    def _loop(self):
        while True:
            row = self.queue.get()
            if row is None:
                break
            self.writer.writerow(row.csv_row())
            self.handle.flush()

    def __exit__(self, *exc):
        self.queue.put(None)
        self.thread.join()
        self.handle.close()
        return False


def _failed_row(nu, seed, error, wall):
    nan = math.nan
    return RowResult(nu, seed, nan, nan, nan, nan, nan, nan,
                     flag=f"error: {type(error).__name__}: {error}", wall_s=wall, failed=True)


def _run_row(cfg, partition, nu, label_nu, seed, reference):
    """One compressible run compared with the seed's incompressible reference."""
    started = time.perf_counter()
    try:
        ins_traj, M = reference.result()
        settings = cfg.settings
        lam = nu - 2.0 * float(settings["mu"])
        solver = CompressibleSolver(cns_config_from(settings, partition.grid, lam=lam))
        a0, v0 = generate_initial_data(cfg.init, partition, seed, label_nu)
        traj = solver.run(a0, v0)
        pert = perturbation_fields(traj, ins_traj)
        report = compute_XYZWV(pert, partition, nu, float(settings["mu"]), blocks=False)
        monitor = continuation_monitor(traj, partition, ceiling=cfg.ceiling)
        inputs = inputs_from_perturbation(pert, partition, M, float(settings["mu"]), nu)
        smallness = check_smallness(inputs, cfg.constant_C, report)
        bound = check_theorem_bound(report, inputs, cfg.constant_C)
    except CriticalFlowError as e:
        log.warning("row nu=%g seed=%d failed: %s", label_nu, seed, e)
        return _failed_row(label_nu, seed, e, time.perf_counter() - started)

    flag = "; ".join(monitor.reasons)
    if flag:
        log.warning("row nu=%g seed=%d flagged: %s", label_nu, seed, flag)
    row = RowResult(label_nu, seed, report.error, report.Xd, report.Yd, report.Zd,
                    report.Wd, report.Vd, flag=flag, wall_s=time.perf_counter() - started,
                    theorem_C=bound.empirical_C, smallness_ratio=smallness.ratio)
    log.info("row nu=%g seed=%d: E=%.4e (%.1fs)", row.nu, seed, row.E, row.wall_s)
    return row


def _run_reference(cfg, partition, seed):
    ins_cfg = ins_config_from(cfg.settings, partition.grid)
    _, v0 = generate_initial_data(cfg.init, partition, seed)
    traj = IncompressibleSolver(ins_cfg).run(project_P(v0))
    return traj, compute_M(traj, partition)


def run_nu_sweep(config):
    """Run every missing (nu, seed) row; returns all rows (old and new) and the fit."""
    original_nus = config.nu_values
    cfg = config.normalised()
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create sweep directory {out}: {e}") from e
    csv_path = out / "sweep.csv"

    done = {r.key: r for r in read_sweep_csv(csv_path)} if csv_path.exists() else {}
    done = {k: r for k, r in done.items() if not r.failed}
    todo = [(nu, orig, seed) for seed in cfg.seeds for nu, orig in zip(cfg.nu_values, original_nus)
            if (float(orig), int(seed)) not in done]
    if done:
        log.info("resuming sweep: %d rows done, %d to run", len(done), len(todo))

    grid = grid_from(cfg.settings)
    if cfg.resolve_layer:
        cfg = cfg.with_layer_grading(grid)
    partition = build_partition(grid)
    rows = list(done.values())
    with ThreadPoolExecutor(max_workers=worker_threads()) as pool, _RowWriter(csv_path) as writer:
        seeds_needed = sorted({seed for _, _, seed in todo})
        references = {seed: pool.submit(_run_reference, cfg, partition, seed) for seed in seeds_needed}
        futures = [pool.submit(_run_row, cfg, partition, nu, orig, seed, references[seed])
                   for nu, orig, seed in todo]
        for future in futures:
            row = future.result()
            writer.put(row)
            rows.append(row)

    result = SweepResult(sorted(rows, key=lambda r: r.key))
    try:
        result.fit = fit_rate(result, cfg.noise_floor)
    except DegenerateFitError as e:
        result.note = str(e)
        log.warning("no rate fit: %s", e)
    return result


def fit_rate(result, noise_floor=NOISE_FLOOR):
    """Least-squares slope of log E against log nu, per seed, then averaged over seeds."""
    usable = [r for r in result.rows if not r.failed and not r.flag and math.isfinite(r.E)]
    above = [r for r in usable if r.E > noise_floor]
    by_seed = {}
    for r in above:
        by_seed.setdefault(r.seed, []).append(r)
    fits = []
    for seed, rows in sorted(by_seed.items()):
        if len({r.nu for r in rows}) < 2:
            continue
        x = np.log([r.nu for r in rows])
        y = np.log([r.E for r in rows])
        fits.append(linregress(x, y))
    if not fits:
        if usable and not above:
            raise DegenerateFitError(DEGENERATE_NOTE)
        raise DegenerateFitError("need at least two unflagged rows with distinct nu for one seed")
    return RateFit(
        slope=float(np.mean([f.slope for f in fits])),
        intercept=float(np.mean([f.intercept for f in fits])),
        r2=float(np.mean([f.rvalue ** 2 for f in fits])),
        slope_stderr=float(np.mean([f.stderr for f in fits])),
        seeds=len(fits),
    )


# --- OUTPUT FILES ---

GNUPLOT_TEMPLATE = """\
# log-log plot of the incompressible-limit error against nu
set datafile separator ','
set logscale xy
set xlabel 'nu'
set ylabel 'E(nu)'
set key top right
set terminal pngcairo size 800,600
set output 'sweep_gnuplot.png'
ref(x) = {anchor!r} * (x / {nu0!r}) ** ({slope})
plot 'sweep.csv' every ::1 using 1:3 with points pt 7 title 'E (all seeds)', \\
     ref(x) with lines dt 2 title 'slope {slope}'
"""


def render_sweep_png(rows, path, fit=None):
    """Log-log scatter of E against nu with the -1/2 reference line (and the fit)."""
    points = [r for r in rows if math.isfinite(r.E) and r.E > 0 and not r.failed]
    if not points:
        return None
    fig, ax = plt.subplots(figsize=(7, 5))
    for seed in sorted({r.seed for r in points}):
        mine = sorted((r for r in points if r.seed == seed), key=lambda r: r.nu)
        ax.loglog([r.nu for r in mine], [r.E for r in mine], "o-", label=f"seed {seed}")
    nus = np.array(sorted({r.nu for r in points}))
    anchor = float(np.exp(np.mean(np.log([r.E for r in points if r.nu == nus[0]]))))
    ax.loglog(nus, anchor * (nus / nus[0]) ** REFERENCE_SLOPE, "k--", label="slope -1/2")
    if fit is not None:
        ax.loglog(nus, np.exp(fit.intercept) * nus ** fit.slope, "r:",
                  label=f"fit slope {fit.slope:.3f}")
    ax.set_xlabel("nu")
    ax.set_ylabel("E(nu)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def emit_outputs(result, directory):
    """sweep.csv (sorted), fit.json when a fit exists, sweep.gp, and sweep.png."""
    directory = Path(directory)
    rows = result.sorted_rows()
    written = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / "sweep.csv"
        with open(csv_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            writer.writerows(r.csv_row() for r in rows)
        written.append(csv_path)

        if result.fit is not None:
            fit_path = directory / "fit.json"
            payload = dict(result.fit._asdict(), reference_slope=REFERENCE_SLOPE,
                           note=result.note, theorem_C=_constants_by_nu(rows))
            with open(fit_path, "w", encoding="utf-8") as f:
                json.dump(payload, f, indent=2)
            written.append(fit_path)

        gp_path = directory / "sweep.gp"
        finite = [r for r in rows if math.isfinite(r.E) and r.E > 0]
        nu0, anchor = (finite[0].nu, finite[0].E) if finite else (1.0, 1.0)
        with open(gp_path, "w", encoding="utf-8") as f:
            f.write(GNUPLOT_TEMPLATE.format(anchor=float(anchor), nu0=float(nu0),
                                            slope=REFERENCE_SLOPE))
        written.append(gp_path)

        png = render_sweep_png(rows, directory / "sweep.png", result.fit)
        if png is not None:
            written.append(png)
    except OSError as e:
        raise OutputError(f"cannot write sweep outputs to {directory}: {e}") from e
    log.info("wrote %s", ", ".join(p.name for p in written))
    return written


def _constants_by_nu(rows):
    table = {}
    for r in rows:
        if r.theorem_C is not None and math.isfinite(r.theorem_C):
            table.setdefault(repr(float(r.nu)), []).append(r.theorem_C)
    return table

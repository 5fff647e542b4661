# trajectory.py

"""
Time-ordered solver output.

A Trajectory holds saved states (named spectral fields) together with the right-hand
sides evaluated at the same instants, so time derivatives never come from finite
differences of snapshots. Helpers here turn per-snapshot scalar profiles into
L-infinity-in-time (running max) and L1-in-time (trapezoid) norms.
"""

import json
import logging
import math
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np
from scipy.integrate import cumulative_trapezoid

from errors import ConfigError, EmptyTrajectoryError, OutputError, ShapeMismatchError
from spectral_core import SpectralField, make_grid

log = logging.getLogger(__name__)

# --- CONFIGURATION ---
MANIFEST_NAME = "manifest.json"
SNAPSHOT_PATTERN = "snap_{:05d}.npz"


@dataclass(frozen=True, eq=False)
class Snapshot:
    t: float
    fields: Dict[str, SpectralField]
    rhs: Dict[str, SpectralField] = field(default_factory=dict)


@dataclass(eq=False)
class Trajectory:
    system: str
    grid: object
    snapshots: List[Snapshot] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def append(self, t, fields, rhs=None):
        if self.snapshots and t <= self.snapshots[-1].t:
            raise ValueError(f"snapshot time {t} does not follow {self.snapshots[-1].t}")
        self.snapshots.append(Snapshot(float(t), dict(fields), dict(rhs or {})))

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    def __iter__(self):
        return iter(self.snapshots)

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    def require_nonempty(self):
        if not self.snapshots:
            raise EmptyTrajectoryError(f"{self.system} trajectory has no snapshots")

    def series(self, name):
        return [s.fields[name] for s in self.snapshots]

    def rhs_series(self, name):
        return [s.rhs[name] for s in self.snapshots]

    def profile(self, fn):
        """Evaluate fn(snapshot) at every saved time."""
        return np.array([fn(s) for s in self.snapshots], dtype=np.float64)

    # --- persistence ---

    def save(self, directory, wall_time=None):
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
            names = []
            for i, snap in enumerate(self.snapshots):
                name = SNAPSHOT_PATTERN.format(i)
                arrays = {f"field_{k}": f.coeffs for k, f in snap.fields.items()}
                arrays.update({f"rhs_{k}": f.coeffs for k, f in snap.rhs.items()})
                np.savez(directory / name, t=snap.t, **arrays)
                names.append(name)
            manifest = {
                "system": self.system,
                "grid": {"dim": self.grid.dim, "n": self.grid.n, "length": self.grid.length},
                "config": self.config,
                "meta": self.meta,
                "code_version": code_version(),
                "wall_time": wall_time,
                "snapshots": names,
            }
            with open(directory / MANIFEST_NAME, "w", encoding="utf-8") as f:
                json.dump(manifest, f, indent=2, ensure_ascii=False)
        except OSError as e:
            raise OutputError(f"cannot write trajectory to {directory}: {e}") from e
        log.info("saved %d %s snapshots to %s", len(names), self.system, directory)
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        try:
            with open(directory / MANIFEST_NAME, "r", encoding="utf-8") as f:
                manifest = json.load(f)
        except OSError as e:
            raise OutputError(f"cannot read trajectory manifest in {directory}: {e}") from e
        g = manifest["grid"]
        grid = make_grid(g["dim"], g["n"], g["length"])
        traj = cls(manifest["system"], grid, config=manifest.get("config", {}),
                   meta=manifest.get("meta", {}))
        for name in manifest["snapshots"]:
            with np.load(directory / name) as data:
                fields, rhs = {}, {}
                for key in data.files:
                    if key.startswith("field_"):
                        fields[key[len("field_"):]] = SpectralField(grid, data[key])
                    elif key.startswith("rhs_"):
                        rhs[key[len("rhs_"):]] = SpectralField(grid, data[key])
                traj.append(float(data["t"]), fields, rhs)
        return traj


def code_version():
    """`git describe --always --dirty` of the working tree, or "unknown"."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return result.stdout.strip() if result.returncode == 0 and result.stdout.strip() else "unknown"


# --- TIME NORMS ---

def running_max(values):
    """||.||_{L^inf(0,T)} for every T in the saved grid."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyTrajectoryError("no values to take a maximum over")
    return np.maximum.accumulate(values)


def running_integral(times, values):
    """||.||_{L^1(0,T)} by the trapezoid rule, for every T in the saved grid."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyTrajectoryError("no values to integrate")
    if times.shape != values.shape:
        raise ShapeMismatchError(f"times {times.shape} and values {values.shape} differ")
    if values.size == 1:
        return np.zeros(1)
    return cumulative_trapezoid(values, times, initial=0.0)


def corrected_running_integral(times, values, derivatives):
    """Trapezoid rule with Hermite end corrections h^2/12 (f'_i - f'_{i+1}) per interval.

    Exact for cubic integrands on each interval.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    derivatives = np.asarray(derivatives, dtype=np.float64)
    base = running_integral(times, values)
    if values.size == 1:
        return base
    h = np.diff(times)
    correction = h ** 2 / 12.0 * (derivatives[:-1] - derivatives[1:])
    return base + np.concatenate(([0.0], np.cumsum(correction)))


def step_plan(t_end, dt):
    """Number of steps and the effective step (<= dt) that lands exactly on t_end."""
    steps = max(1, math.ceil(t_end / dt - 1e-9))
    return steps, t_end / steps


def layer_levels(dt, rate):
    """Halvings needed before a step of size dt resolves a decay rate: rate * h <= 1/4."""
    if not rate * dt > 0.25:
        return 0
    return math.ceil(math.log2(4.0 * rate * dt))


def step_schedule(t_end, dt, save_every, grading=0):
    """(h, save) pairs covering [0, t_end].

    With grading L > 0 the first step is replaced by sub-steps h 2^-L, h 2^-L, h 2^-(L-1),
    ..., h/2, each one saved, so an initial layer thinner than h is sampled on a geometric
    grid. The sub-steps add up to h exactly.
    """
    if grading < 0:
        raise ConfigError(f"grading must be >= 0, got {grading}")
    steps, h = step_plan(t_end, dt)
    schedule = []
    for step in range(1, steps + 1):
        if step == 1 and grading:
            schedule.append((math.ldexp(h, -grading), True))
            schedule.extend((math.ldexp(h, -level), True) for level in range(grading, 0, -1))
            continue
        schedule.append((h, step % save_every == 0 or step == steps))
    return schedule

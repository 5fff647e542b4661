"""
Tests for trajectories and time norms.

Validates:
- Snapshot ordering and profiles
- Running max / running integral / corrected trapezoid
- Save and load of a trajectory directory
- Step plans and the graded first step
"""

import json

import numpy as np
import pytest

from conftest import random_field
from errors import ConfigError, EmptyTrajectoryError, OutputError, ShapeMismatchError
from trajectory import (
    MANIFEST_NAME, Trajectory, corrected_running_integral, layer_levels, running_integral,
    running_max, step_plan, step_schedule,
)


@pytest.fixture
def traj(grid, rng):
    t = Trajectory("cns", grid, config={"mu": 1.0, "nu": 10.0})
    for time in (0.0, 0.5, 1.0):
        a = random_field(grid, rng)
        v = random_field(grid, rng, components=2)
        t.append(time, {"a": a, "v": v}, {"a": -a, "v": -v})
    return t


class TestTrajectory:

    def test_times_and_series(self, traj):
        assert np.array_equal(traj.times, [0.0, 0.5, 1.0])
        assert len(traj.series("v")) == 3
        assert traj.rhs_series("a")[1].is_scalar

    def test_times_must_increase(self, traj, grid):
        with pytest.raises(ValueError):
            traj.append(1.0, {})

    def test_empty(self, grid):
        with pytest.raises(EmptyTrajectoryError):
            Trajectory("ins", grid).require_nonempty()

    def test_profile(self, traj):
        assert traj.profile(lambda s: s.t * 2).tolist() == [0.0, 1.0, 2.0]

    def test_save_and_load(self, traj, tmp_path):
        traj.save(tmp_path / "run", wall_time=1.5)
        with open(tmp_path / "run" / MANIFEST_NAME, encoding="utf-8") as f:
            manifest = json.load(f)
        assert manifest["system"] == "cns"
        assert manifest["wall_time"] == 1.5
        assert manifest["code_version"]

        loaded = Trajectory.load(tmp_path / "run")
        assert loaded.grid == traj.grid
        assert loaded.config == traj.config
        assert np.array_equal(loaded.times, traj.times)
        for mine, theirs in zip(traj, loaded):
            assert np.array_equal(mine.fields["v"].coeffs, theirs.fields["v"].coeffs)
            assert np.array_equal(mine.rhs["a"].coeffs, theirs.rhs["a"].coeffs)

    def test_load_missing_directory(self, tmp_path):
        with pytest.raises(OutputError):
            Trajectory.load(tmp_path / "absent")


class TestTimeNorms:

    def test_running_max(self):
        assert running_max([1.0, 3.0, 2.0, 5.0]).tolist() == [1.0, 3.0, 3.0, 5.0]

    def test_running_integral_of_constant(self):
        times = np.linspace(0.0, 2.0, 9)
        assert np.allclose(running_integral(times, np.ones_like(times)), times)

    def test_single_sample_integral_is_zero(self):
        assert running_integral([0.0], [4.0]).tolist() == [0.0]

    def test_corrected_trapezoid_is_exact_for_cubics(self):
        times = np.array([0.0, 0.4, 1.0])
        result = corrected_running_integral(times, times ** 3, 3 * times ** 2)
        assert result[-1] == pytest.approx(0.25, abs=1e-14)
        assert result[1] == pytest.approx(0.4 ** 4 / 4, abs=1e-14)

    def test_empty_and_mismatched(self):
        with pytest.raises(EmptyTrajectoryError):
            running_max([])
        with pytest.raises(ShapeMismatchError):
            running_integral([0.0, 1.0], [1.0])

    @pytest.mark.parametrize("t_end,dt,expected", [(1.0, 0.3, (4, 0.25)), (1.0, 0.25, (4, 0.25)),
                                                   (0.1, 1.0, (1, 0.1))])
    def test_step_plan(self, t_end, dt, expected):
        steps, h = step_plan(t_end, dt)
        assert steps == expected[0]
        assert h == pytest.approx(expected[1])

    def test_schedule_without_grading(self):
        schedule = step_schedule(1.25, 0.125, 5)
        assert len(schedule) == 10
        assert [i + 1 for i, (_, save) in enumerate(schedule) if save] == [5, 10]

    def test_graded_first_step(self):
        schedule = step_schedule(1.25, 0.125, 5, grading=3)
        steps = [h for h, _ in schedule]
        assert steps[:4] == [0.015625, 0.015625, 0.03125, 0.0625]
        assert all(save for _, save in schedule[:4])
        assert sum(steps[:4]) == 0.125
        assert len(schedule) == 13
        assert sum(save for _, save in schedule) == 6

    def test_graded_times_are_exact(self):
        t = 0.0
        for h, _ in step_schedule(1.0, 1e-3, 10, grading=16)[:17]:
            t += h
        assert t == 1e-3

    def test_negative_grading(self):
        with pytest.raises(ConfigError):
            step_schedule(1.0, 0.1, 1, grading=-1)

    @pytest.mark.parametrize("dt,rate,expected", [(1e-3, 10.0, 0), (1e-3, 200.0, 0),
                                                  (1e-3, 251.0, 1), (1e-3, 1e4 * 882.0, 16)])
    def test_layer_levels(self, dt, rate, expected):
        levels = layer_levels(dt, rate)
        assert levels == expected
        assert rate * dt * 2.0 ** -levels <= 0.25

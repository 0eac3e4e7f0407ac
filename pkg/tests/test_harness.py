"""Test suite for the snapshot ring, lap counting, metrics, trials and reports."""

import csv
import threading
from types import SimpleNamespace

import numpy as np
import pytest

from deepracing.control import (
    NEUTRAL,
    CenterlinePursuit,
    ConstantController,
    ControlCommand,
    ReplayController,
)
from deepracing.errors import InvalidArgumentError
from deepracing.harness import (
    SUMMARY_COLUMNS,
    TICK,
    LapCounter,
    SnapshotRing,
    TrialConfig,
    compute_metrics,
    deviation_histogram,
    emit_report,
    find_boundary_failures,
    load_replay_commands,
    rmse_control,
    run_live,
    run_trial,
    wrap_station_delta,
)
from tests.fixtures.synthetic import brute_force_metrics, make_trace, random_trace


def item(t):
    return SimpleNamespace(session_time=t)


@pytest.fixture(scope="module")
def oracle_report(oval_track):
    """Five laps of centerline Pure Pursuit on the default oval."""
    controller = CenterlinePursuit(oval_track, target_speed=15.0)
    return run_trial(oval_track, controller, TrialConfig(laps=5))


class TestSnapshotRing:
    """Test suite for SnapshotRing."""

    def test_empty_until_full(self):
        """Test no snapshot is published before C contiguous packets."""
        ring = SnapshotRing(capacity=3, period=1.0)
        ring.push(item(0.0))
        ring.push(item(1.0))

        assert ring.snapshot() is None
        assert ring.latest().session_time == 1.0

        ring.push(item(2.0))
        assert [p.session_time for p in ring.snapshot()] == [0.0, 1.0, 2.0]

    def test_keeps_most_recent(self):
        """Test the window slides to the C most recent packets."""
        ring = SnapshotRing(capacity=3, period=1.0)
        for t in range(6):
            ring.push(item(float(t)))

        assert [p.session_time for p in ring.snapshot()] == [3.0, 4.0, 5.0]
        assert len(ring) == 3

    def test_rejects_stale_packets(self):
        """Test packets not newer than the last are rejected."""
        ring = SnapshotRing(capacity=2, period=1.0)
        ring.push(item(5.0))

        assert ring.push(item(5.0)) is False
        assert ring.push(item(4.0)) is False
        assert ring.rejected == 2
        assert len(ring) == 1

    def test_gap_restarts_window(self):
        """Test a gap beyond two periods starts a fresh window."""
        ring = SnapshotRing(capacity=2, period=1.0)
        for t in (0.0, 1.0, 2.0, 5.0):
            ring.push(item(t))

        assert ring.snapshot() is None
        assert ring.restarts == 1
        ring.push(item(6.0))
        assert [p.session_time for p in ring.snapshot()] == [5.0, 6.0]

    def test_snapshot_is_immutable(self):
        """Test a taken snapshot does not change on later pushes."""
        ring = SnapshotRing(capacity=2, period=1.0)
        ring.push(item(0.0))
        ring.push(item(1.0))
        snap = ring.snapshot()
        ring.push(item(2.0))

        assert [p.session_time for p in snap] == [0.0, 1.0]

    def test_invalid_capacity(self):
        """Test a capacity below one is rejected."""
        with pytest.raises(InvalidArgumentError):
            SnapshotRing(capacity=0)

    @pytest.mark.parametrize(
        "operations", [100_000, pytest.param(1_000_000, marks=pytest.mark.slow)]
    )
    def test_random_interleavings(self, rng, operations):
        """Test random push/read sequences against a list model of the window."""
        capacity = 5
        ring = SnapshotRing(capacity=capacity, period=1.0, max_gap_periods=2.0)
        model: list[float] = []
        last = 0
        steps = rng.choice([1, 1, 1, 2, 3, 0, -1], size=operations)
        reads = rng.random(operations) < 0.5
        for step, read in zip(steps.tolist(), reads.tolist()):
            if read:
                snap = ring.snapshot()
                if len(model) < capacity:
                    assert snap is None
                else:
                    assert [p.session_time for p in snap] == model
                continue
            t = float(last + step)
            accepted = ring.push(item(t))
            if model and t <= model[-1]:
                assert not accepted
                continue
            assert accepted
            if model and t - model[-1] > 2.0:
                model = []
            model = (model + [t])[-capacity:]
            last = int(t)

    def test_concurrent_readers_see_whole_windows(self):
        """Test readers never observe a partially updated window."""
        ring = SnapshotRing(capacity=5, period=1.0)
        stop = threading.Event()
        bad = []

        def reader():
            while not stop.is_set():
                snap = ring.snapshot()
                if snap is None:
                    continue
                times = [p.session_time for p in snap]
                if len(times) != 5 or any(b - a != 1.0 for a, b in zip(times, times[1:])):
                    bad.append(times)

        threads = [threading.Thread(target=reader) for _ in range(3)]
        for th in threads:
            th.start()
        for t in range(50_000):
            ring.push(item(float(t)))
        stop.set()
        for th in threads:
            th.join()

        assert bad == []
        assert ring.latest().session_time == 49_999.0


class TestLapCounter:
    """Test suite for LapCounter."""

    def drive(self, counter, track, speed, seconds, station0=0.0):
        counter.start(0.0, station0)
        for k in range(1, round(seconds / TICK) + 1):
            counter.update(k * TICK, (station0 + speed * k * TICK) % track.length)

    def test_laps_from_the_line(self, oval_track):
        """Test constant-speed laps from the start line are all timed."""
        counter = LapCounter(oval_track)
        self.drive(counter, oval_track, 20.0, 3.2 * oval_track.length / 20.0)

        assert counter.completed == 3
        assert counter.lap_times == pytest.approx(
            [oval_track.length / 20.0] * 3, abs=2 * TICK
        )

    def test_first_lap_untimed_away_from_line(self, oval_track):
        """Test a stream starting mid-lap times only complete laps."""
        counter = LapCounter(oval_track)
        self.drive(counter, oval_track, 20.0, 1.5 * oval_track.length / 20.0, station0=300.0)

        assert counter.completed == 1
        assert counter.lap_times == []

    def test_wobble_over_line_is_not_a_lap(self, oval_track):
        """Test crossing the line backwards and forwards again does not count."""
        length = oval_track.length
        counter = LapCounter(oval_track)
        counter.start(0.0, 0.0)
        stations = [1.0, 2.0, 0.5, length - 2.0, length - 1.0, 0.5, 3.0]

        laps = [counter.update(k * TICK, s) for k, s in enumerate(stations, start=1)]

        assert not any(laps)
        assert counter.completed == 0

    def test_wrap_station_delta(self):
        """Test station differences wrap into the half-open half-length band."""
        assert wrap_station_delta(990.0, 1000.0) == -10.0
        assert wrap_station_delta(-990.0, 1000.0) == 10.0
        assert wrap_station_delta(3.5, 1000.0) == 3.5


class TestMetrics:
    """Test suite for boundary-failure metrics."""

    def test_three_excursions(self, oval_track):
        """Test three separate excursions of depth 2 m."""
        outside = [0.0] * 10 + [2.0] * 5 + [0.0] * 10 + [2.0] * 5 + [0.0] * 10 + [2.0] * 3
        trace = make_trace(outside + [0.0] * 10, length=oval_track.length)

        metrics = compute_metrics(trace, oval_track)

        assert metrics.nbf == 3
        assert metrics.bfs == 2.0
        assert [f.ticks for f in metrics.failures] == [5, 5, 3]

    def test_failures_ten_seconds_and_500_m_apart(self, oval_track):
        """Test TBF and DBF are the start-to-start separation."""
        outside = [0.0] * 10 + [1.0] * 3 + [0.0] * 597 + [1.0] * 3 + [0.0] * 10
        trace = make_trace(outside, station_step=500.0 / 600.0, length=oval_track.length)

        metrics = compute_metrics(trace, oval_track)

        assert metrics.nbf == 2
        assert metrics.tbf == pytest.approx(10.0, abs=1e-9)
        assert metrics.dbf == pytest.approx(500.0, abs=1e-9)

    def test_no_failures(self, oval_track):
        """Test a clean trace reports duration and distance for TBF and DBF."""
        trace = make_trace([0.0] * 121, length=oval_track.length)

        metrics = compute_metrics(trace, oval_track)

        assert (metrics.nbf, metrics.bfs) == (0, 0.0)
        assert metrics.tbf == pytest.approx(2.0, abs=1e-12)
        assert metrics.dbf == pytest.approx(30.0, abs=1e-9)

    def test_failure_bounds(self):
        """Test a failure ends at the first tick back inside."""
        trace = make_trace([0.0, 1.0, 3.0, 0.0, 0.0, 2.0])

        first, second = find_boundary_failures(trace)

        assert (first.t_start, first.t_end) == (1 * TICK, 3 * TICK)
        assert (first.mean_outside, first.max_outside) == (2.0, 3.0)
        assert second.t_end == pytest.approx(6 * TICK)

    def test_matches_brute_force_oracle(self, oval_track, rng):
        """Test NBF, BFS, TBF and DBF equal a single-pass scan on random traces."""
        for _ in range(1000):
            trace = random_trace(rng, oval_track.length, int(rng.integers(2, 600)))

            metrics = compute_metrics(trace, oval_track)

            assert (metrics.nbf, metrics.bfs, metrics.tbf, metrics.dbf) == brute_force_metrics(
                trace, oval_track.length
            )

    def test_empty_trace(self, oval_track):
        """Test metrics of an empty trace are rejected."""
        with pytest.raises(InvalidArgumentError):
            compute_metrics([], oval_track)

    def test_rmse_identical(self):
        """Test identical command streams have zero error."""
        pairs = [(0.1, 0.5), (-0.3, 1.0)]

        assert rmse_control(pairs, pairs) == (0.0, 0.0)

    def test_rmse_constant_offset(self):
        """Test a constant steering offset is the steering RMSE."""
        gt = [(0.0, 0.2), (0.5, 0.7), (-0.5, 1.0)]
        pred = [(s + 0.1, t) for s, t in gt]

        steering, throttle = rmse_control(pred, gt)

        assert steering == pytest.approx(0.1, abs=1e-12)
        assert throttle == 0.0

    def test_rmse_length_mismatch(self):
        """Test sequences of different lengths are rejected."""
        with pytest.raises(InvalidArgumentError):
            rmse_control([(0.0, 0.0)], [])

    def test_deviation_histogram(self, oval_track, rng):
        """Test every tick lands in the histogram."""
        trace = random_trace(rng, oval_track.length, 300)

        counts, edges = deviation_histogram(trace, bins=10)

        assert counts.sum() == 300
        assert len(edges) == 11


class TestTrials:
    """Test suite for closed-loop trials."""

    def test_oracle_completes_laps(self, oracle_report):
        """Test centerline Pure Pursuit finishes five clean laps."""
        assert oracle_report.successful_laps == 5
        assert oracle_report.nbf == 0
        assert not oracle_report.dnf
        assert oracle_report.metrics.mean_centerline_distance <= 0.5

    def test_lap_times_within_duration(self, oracle_report):
        """Test the lap times add up to no more than the trial duration."""
        assert sum(oracle_report.lap_times) <= oracle_report.metrics.duration

    def test_controller_timing_recorded(self, oracle_report):
        """Test every controller call is timed."""
        assert len(oracle_report.controller_times) == len(oracle_report.trace) - 5
        assert oracle_report.summary()["controller_mean_time"] > 0.0

    def test_hard_left_leaves_track(self, oval_track):
        """Test full left lock under throttle is a DNF with boundary failures."""
        controller = ConstantController(ControlCommand(steering=1.0, throttle=1.0))

        report = run_trial(oval_track, controller, TrialConfig(laps=5, duration=20.0))

        assert report.dnf
        assert report.nbf >= 1
        assert report.successful_laps == 0

    def test_zero_duration(self, oval_track):
        """Test a zero-length trial gives an empty report."""
        report = run_trial(oval_track, ConstantController(NEUTRAL), TrialConfig(duration=0.0))

        assert report.trace == []
        assert report.successful_laps == 0
        assert not report.dnf
        assert report.summary()["laps"] == 0

    def test_controller_fault_is_dnf(self, oval_track):
        """Test a raising controller ends the trial with a partial trace."""
        calls = []

        def faulty(window):
            calls.append(window)
            if len(calls) == 10:
                raise RuntimeError("planner crashed")
            return ControlCommand(throttle=1.0)

        report = run_trial(oval_track, faulty, TrialConfig(laps=1, duration=30.0))

        assert report.dnf
        assert "RuntimeError" in report.dnf_reason
        assert len(report.trace) == 14
        assert len(report.controller_times) == 9

    def test_deterministic(self, oval_track):
        """Test identical configurations give identical reports."""
        cfg = TrialConfig(laps=None, duration=10.0, latency=0.05, seed=7)

        first = run_trial(oval_track, CenterlinePursuit(oval_track), cfg)
        second = run_trial(oval_track, CenterlinePursuit(oval_track), cfg)

        assert first == second

    def test_latency_delays_actuation(self, oval_track):
        """Test throttle first shows up in the trace after the injected latency."""
        cfg = TrialConfig(laps=None, duration=1.0, latency=0.11)

        report = run_trial(oval_track, ConstantController(ControlCommand(throttle=1.0)), cfg)

        first = next(t for t in report.trace if t.throttle > 0.0)
        # issued at frame 4, released at frame 11, applied over the step ending at tick 12
        assert first.session_time == pytest.approx(12 * TICK, abs=1e-12)

    def test_reset_each_lap(self, small_track):
        """Test laps are still counted when the car is put back on the start line."""
        cfg = TrialConfig(laps=2, duration=120.0, reset_each_lap=True)

        report = run_trial(small_track, CenterlinePursuit(small_track), cfg)

        assert report.successful_laps == 2
        assert sum(t.reset for t in report.trace) == 1
        assert not report.dnf

    def test_invalid_config(self):
        """Test invalid budgets are rejected."""
        with pytest.raises(InvalidArgumentError):
            TrialConfig(laps=0)
        with pytest.raises(InvalidArgumentError):
            TrialConfig(duration=-1.0)

    @pytest.mark.slow
    def test_live_loop(self, oval_track):
        """Test the threaded UDP loop drives the car forward."""
        report = run_live(
            oval_track, CenterlinePursuit(oval_track), TrialConfig(laps=None, duration=2.0)
        )

        assert not report.dnf
        assert len(report.trace) > 100
        assert report.controller_times
        assert report.trace[-1].speed > 0.0


class TestReports:
    """Test suite for report emission and replay."""

    @pytest.fixture
    def short_report(self, oval_track):
        controller = CenterlinePursuit(oval_track)
        return run_trial(oval_track, controller, TrialConfig(laps=None, duration=2.0))

    def test_emit_report(self, short_report, oval_track, tmp_path):
        """Test report, summary, histogram and plot contents."""
        paths = emit_report(short_report, tmp_path / "out", oval_track)

        assert [p.name for p in paths] == [
            "report.csv",
            "summary.csv",
            "deviation_histogram.csv",
            "path.svg",
        ]
        report_lines = (tmp_path / "out" / "report.csv").read_text().splitlines()
        assert len(report_lines) == len(short_report.trace) + 1
        with open(tmp_path / "out" / "summary.csv", newline="") as fh:
            header, row = list(csv.reader(fh))
        assert tuple(header) == SUMMARY_COLUMNS
        assert row[0] == "0"
        svg = (tmp_path / "out" / "path.svg").read_text()
        assert 'id="centerline"' in svg
        assert 'id="path"' in svg
        assert 'id="deviation"' in svg

    def test_deviation_histogram_file(self, short_report, tmp_path):
        """Test the histogram file counts every tick of the trace."""
        emit_report(short_report, tmp_path)

        with open(tmp_path / "deviation_histogram.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))

        assert len(rows) == 20
        assert sum(int(r["ticks"]) for r in rows) == len(short_report.trace)
        counts, edges = short_report.deviation_histogram()
        assert [int(r["ticks"]) for r in rows] == counts.tolist()
        assert float(rows[0]["bin_start"]) == edges[0]
        assert float(rows[-1]["bin_end"]) == edges[-1]

    def test_emit_empty_report(self, oval_track, tmp_path):
        """Test an empty trial writes no histogram."""
        report = run_trial(oval_track, ConstantController(NEUTRAL), TrialConfig(duration=0.0))

        paths = emit_report(report, tmp_path)

        assert [p.name for p in paths] == ["report.csv", "summary.csv"]

    def test_emit_without_track(self, short_report, tmp_path):
        """Test no plot is written without a track."""
        paths = emit_report(short_report, tmp_path)

        assert [p.name for p in paths] == ["report.csv", "summary.csv", "deviation_histogram.csv"]

    def test_unwritable_directory(self, short_report, tmp_path):
        """Test an output path under a regular file raises OSError."""
        blocker = tmp_path / "file"
        blocker.write_text("")

        with pytest.raises(OSError):
            emit_report(short_report, blocker / "out")

    def test_replay_round_trip(self, short_report, tmp_path):
        """Test commands read back from a report match the trace."""
        emit_report(short_report, tmp_path)

        commands = load_replay_commands(tmp_path / "report.csv")

        assert len(commands) == len(short_report.trace)
        assert commands[0] == NEUTRAL
        assert [c.throttle for c in commands] == [t.throttle for t in short_report.trace]

    def test_replay_reproduces_trial(self, oval_track, tmp_path):
        """Test replaying a recorded report drives the identical trace."""
        cfg = TrialConfig(laps=None, duration=20.0)
        recorded = run_trial(oval_track, CenterlinePursuit(oval_track), cfg)
        emit_report(recorded, tmp_path)

        replay = ReplayController(load_replay_commands(tmp_path / "report.csv"))
        replayed = run_trial(oval_track, replay, cfg)

        assert len(replayed.trace) == len(recorded.trace) == 1201
        assert replayed.trace == recorded.trace


    def test_replay_missing_columns(self, tmp_path):
        """Test a CSV without command columns is rejected."""
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n")

        with pytest.raises(InvalidArgumentError):
            load_replay_commands(path)

    def test_summary_arrays_are_json_ready(self, short_report):
        """Test the summary holds plain Python values."""
        summary = short_report.summary()

        assert all(isinstance(summary[k], (int, float, bool)) for k in ("NBF", "BFS", "dnf"))
        assert np.isfinite(summary["TBF"])

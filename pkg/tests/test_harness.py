import json
import os

import numpy as np
import pytest

from kgdg.cli import main
from kgdg.harness import (
    ExperimentPlan,
    PlanError,
    make_initial,
    make_initial_nd,
    parse_plan,
    run_refinement_suite,
    run_single,
    run_stability_sweep,
)
from kgdg.lattice import GridSpec
from kgdg.store import RunStatus, SnapshotSeries, read_series, write_series


def small_plan(tmp_path, **kw):
    defaults = dict(
        amplitudes=(1.0,),
        masses=(2.0,),
        grids=(16, 32, 64),
        t_end=0.5,
        eps_s=(0.05, 0.5),
        eps_c=(0.2, 0.4),
        snapshot_cadence=0.25,
        output_dir=str(tmp_path / "runs"),
    )
    defaults.update(kw)
    return ExperimentPlan(**defaults)


class TestMakeInitial:
    def test_values_on_eight_points(self):
        g = GridSpec(1, (8,), (0.125,), 0.0125)
        st = make_initial(g, 2.0)
        r = np.sqrt(2.0)
        expect_phi = [-2, -r, 0, r, 2, r, 0, -r]
        assert np.allclose(st.phi.values, expect_phi, atol=1e-14)
        # psi = 2 pi A sin(2 pi x)
        expect_psi = 4 * np.pi * np.array([0, -r / 2, -1, -r / 2, 0, r / 2, 1, r / 2])
        assert np.allclose(st.psi.values, expect_psi, atol=1e-13)

    def test_nd_variant_is_constant_transverse(self):
        g = GridSpec(2, (8, 6), (0.125, 0.125), 0.0125)
        st = make_initial_nd(g, 1.5)
        shaped = st.phi.reshaped()
        for j in range(1, 6):
            assert np.array_equal(shaped[:, j], shaped[:, 0])
        line = make_initial(GridSpec(1, (8,), (0.125,), 0.0125), 1.5)
        assert np.array_equal(shaped[:, 0], line.phi.values)


class TestPlanParsing:
    def test_desk_preset_parses(self):
        plan = parse_plan("plans/desk.plan")
        assert plan.grids == (32, 64, 128, 256)
        assert plan.amplitudes == (2.0,)
        assert plan.dcv_mode == "as-written"
        assert plan.tol == 3e-11

    def test_full_presets_parse(self):
        for name in ("plans/paper-full-A2.plan", "plans/paper-full-A3.plan"):
            plan = parse_plan(name)
            assert plan.grids[-1] == 8000
            assert plan.t_end == 1000.0
            assert plan.workers == 4

    def test_lambda_key_maps_to_lam(self, tmp_path):
        p = tmp_path / "a.plan"
        p.write_text("amplitudes=1\nmasses=1\ngrids=8,16\nt_end=1\nlambda=0\n")
        assert parse_plan(str(p)).lam == 0.0

    def test_overrides_win(self, tmp_path):
        p = tmp_path / "a.plan"
        p.write_text("amplitudes=1\nmasses=1\ngrids=8,16\nt_end=1\noutput_dir=x\n")
        assert parse_plan(str(p), output_dir="y").output_dir == "y"

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "a.plan"
        p.write_text("amplitudes=1\nmasses=1\ngrids=8\nt_end=1\ncolor=blue\n")
        with pytest.raises(PlanError):
            parse_plan(str(p))

    def test_missing_file_rejected(self):
        with pytest.raises(PlanError):
            parse_plan("/no/such/file.plan")

    def test_non_nested_ladder_rejected(self):
        with pytest.raises(PlanError):
            ExperimentPlan((1.0,), (1.0,), (16, 24), 1.0)

    def test_unsorted_ladder_rejected(self):
        with pytest.raises(PlanError):
            ExperimentPlan((1.0,), (1.0,), (32, 16), 1.0)

    def test_fractional_cadence_rejected(self):
        with pytest.raises(PlanError):
            ExperimentPlan((1.0,), (1.0,), (16,), 1.0, snapshot_cadence=0.0013)


class TestRunSingle:
    def test_writes_and_reuses_snapshot(self, tmp_path):
        plan = small_plan(tmp_path)
        mf = plan.manifest_for(1.0, 2.0, 16)
        out = str(tmp_path / "runs")
        first = run_single(mf, 0.5, out)
        path = os.path.join(out, mf.digest() + ".snap")
        assert os.path.exists(path)
        stamp = os.path.getmtime(path)
        second = run_single(mf, 0.5, out)  # must read back, not recompute
        assert os.path.getmtime(path) == stamp
        for (t0, p0, q0), (t1, p1, q1) in zip(first.frames, second.frames):
            assert t0 == t1 and np.array_equal(p0, p1) and np.array_equal(q0, q1)

    def test_snapshot_times_follow_cadence(self, tmp_path):
        plan = small_plan(tmp_path)
        series = run_single(plan.manifest_for(1.0, 2.0, 16), 0.5, None)
        assert series.times() == pytest.approx([0.0, 0.25, 0.5])

    def test_solver_failure_is_captured(self, tmp_path):
        plan = small_plan(tmp_path, max_iters=1, tol=1e-14)
        mf = plan.manifest_for(1.0, 2.0, 16)
        series = run_single(mf, 0.5, str(tmp_path / "runs"))
        assert not series.status.completed
        assert series.status.fail_time == pytest.approx(mf.grid.dt)
        assert "stalled" in series.status.fail_reason

    def test_require_existing_missing(self, tmp_path):
        plan = small_plan(tmp_path)
        with pytest.raises(PlanError):
            run_single(plan.manifest_for(1.0, 2.0, 16), 0.5,
                       str(tmp_path / "empty"), require_existing=True)


class TestStabilitySweep:
    def test_smooth_run_stays_stable(self, tmp_path):
        # two extrema on 64 nodes: ratio 1/32, between the two thresholds
        plan = small_plan(tmp_path, eps_s=(0.01, 0.05))
        tables = run_stability_sweep(plan)
        cells = tables[1.0]
        assert cells[(0.01, 2.0)] == "0"  # 2/64 > 0.01 from the first frame
        assert cells[(0.05, 2.0)] == "INF"
        csv_path = os.path.join(plan.output_dir, "sweep_A1.csv")
        assert os.path.exists(csv_path)
        text = open(csv_path).read()
        assert text.splitlines()[0] == "eps_s,2"
        assert "INF" in text

    def test_failed_run_marks_cell(self, tmp_path):
        plan = small_plan(tmp_path, max_iters=1, tol=1e-14, eps_s=(0.5,))
        tables = run_stability_sweep(plan)
        cell = tables[1.0][(0.5, 2.0)]
        assert cell.startswith("FAIL(")

    def test_doctored_snapshot_crossing_detected(self, tmp_path):
        # hand-built frames: smooth until t = 2, sawtooth afterwards
        plan = small_plan(
            tmp_path, grids=(16,), t_end=3.0, snapshot_cadence=1.0, eps_s=(0.5,)
        )
        mf = plan.manifest_for(1.0, 2.0, 16)
        x = mf.grid.axis_coords(0)
        smooth = np.cos(2 * np.pi * x)
        saw = smooth + np.resize([1.0, -1.0], 16)
        frames = [
            (0.0, smooth, np.zeros(16)),
            (1.0, smooth, np.zeros(16)),
            (2.0, saw, np.zeros(16)),
            (3.0, saw, np.zeros(16)),
        ]
        os.makedirs(plan.output_dir)
        write_series(
            SnapshotSeries(mf, frames, RunStatus.ok()),
            os.path.join(plan.output_dir, mf.digest() + ".snap"),
        )
        tables = run_stability_sweep(plan, require_existing=True)
        assert tables[1.0][(0.5, 2.0)] == "2"


class TestRefinementSuite:
    def test_requires_three_grids(self, tmp_path):
        plan = small_plan(tmp_path, grids=(16, 32))
        with pytest.raises(PlanError):
            run_refinement_suite(plan)

    def test_linear_ladder_converges(self, tmp_path):
        # lam = 0 single mode: clean second-order refinement, every cell INF
        plan = small_plan(tmp_path, lam=0.0, dcv_mode="richardson")
        tables = run_refinement_suite(plan)
        cells = tables[1.0]
        assert all(v == "INF" for v in cells.values())
        series_csv = os.path.join(plan.output_dir, "refine_series_A1_m2.csv")
        rows = open(series_csv).read().splitlines()
        assert rows[0] == "time,cv_16,cv_32,dcv"
        # t = 0 data are restrictions of each other: the sentinel prints -inf
        assert rows[1].split(",")[1] == "-inf"
        # later DCV values are present and small
        dcv = float(rows[-1].split(",")[-1])
        assert 0.0 <= dcv < 0.2

    def test_failed_coarse_run_marks_cells(self, tmp_path):
        plan = small_plan(tmp_path, max_iters=1, tol=1e-14)
        tables = run_refinement_suite(plan)
        assert all(v.startswith("FAIL(") for v in tables[1.0].values())

    def test_parallel_workers_match_serial(self, tmp_path):
        serial = small_plan(tmp_path, output_dir=str(tmp_path / "s"))
        parallel = small_plan(tmp_path, output_dir=str(tmp_path / "p"), workers=2)
        ts = run_refinement_suite(serial)
        tp = run_refinement_suite(parallel)
        assert ts == tp


class TestCli:
    def write_manifest(self, tmp_path, plan, n=16):
        mf = plan.manifest_for(1.0, 2.0, n)
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps(mf.to_dict()))
        return mf, str(path)

    def test_run_and_export(self, tmp_path, capsys):
        plan = small_plan(tmp_path)
        mf, mpath = self.write_manifest(tmp_path, plan)
        out = str(tmp_path / "out")
        assert main(["run", mpath, "-t", "0.5", "-o", out]) == 0
        snap = os.path.join(out, mf.digest() + ".snap")
        assert os.path.exists(snap)
        csv_path = str(tmp_path / "dump.csv")
        assert main(["export", snap, "-o", csv_path]) == 0
        assert open(csv_path).readline().strip() == "time,node,x,phi,psi"

    def test_run_failure_exit_code(self, tmp_path):
        plan = small_plan(tmp_path, max_iters=1, tol=1e-14)
        _, mpath = self.write_manifest(tmp_path, plan)
        assert main(["run", mpath, "-t", "0.5", "-o", str(tmp_path / "out")]) == 3

    def test_bad_manifest_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"grid\": 7}")
        assert main(["run", str(bad), "-t", "1"]) == 2

    def test_sweep_then_diagnose(self, tmp_path, capsys):
        plan_file = tmp_path / "t.plan"
        plan_file.write_text(
            "amplitudes = 1\nmasses = 2\ngrids = 16, 32, 64\nt_end = 0.5\n"
            "eps_s = 0.05\neps_c = 0.4\nsnapshot_cadence = 0.25\n"
            f"output_dir = {tmp_path / 'runs'}\n"
        )
        assert main(["sweep", str(plan_file)]) == 0
        out = capsys.readouterr().out
        assert "sweep table, A=1" in out
        assert "INF" in out
        # diagnose reuses the stored snapshots without recomputing
        assert main(["diagnose", str(plan_file), "--kind", "sweep"]) == 0

    def test_diagnose_without_snapshots_fails(self, tmp_path):
        plan_file = tmp_path / "t.plan"
        plan_file.write_text(
            "amplitudes = 1\nmasses = 2\ngrids = 16, 32, 64\nt_end = 0.5\n"
            f"snapshot_cadence = 0.25\noutput_dir = {tmp_path / 'nothing'}\n"
        )
        assert main(["diagnose", str(plan_file)]) == 2

    def test_bad_plan_exit_code(self, tmp_path):
        plan_file = tmp_path / "t.plan"
        plan_file.write_text("amplitudes = 1\nmasses = 2\ngrids = 16, 24\nt_end = 1\n")
        assert main(["refine", str(plan_file)]) == 2

    def test_export_missing_file(self, tmp_path):
        assert main(["export", str(tmp_path / "no.snap"), "-o", str(tmp_path / "x.csv")]) == 2

    def test_rerun_reuses_snapshot(self, tmp_path):
        plan = small_plan(tmp_path)
        mf, mpath = self.write_manifest(tmp_path, plan)
        out = str(tmp_path / "out")
        assert main(["run", mpath, "-t", "0.5", "-o", out]) == 0
        snap = os.path.join(out, mf.digest() + ".snap")
        stamp = os.path.getmtime(snap)
        assert main(["run", mpath, "-t", "0.5", "-o", out]) == 0
        assert os.path.getmtime(snap) == stamp
        before = read_series(snap)
        assert main(["run", mpath, "-t", "0.5", "-o", out, "--no-reuse"]) == 0
        after = read_series(snap)
        assert np.array_equal(before.frames[-1][1], after.frames[-1][1])

"""Experiment orchestration: single runs, nested-grid refinement suites, and
threshold sweep matrices, with CSV verdict tables.

Table cells hold the first time a diagnostic crosses its threshold, "INF"
when it never does, or "FAIL(t)" when the underlying run failed at time t.
Failed runs poison only their own cells.

Plans are plain key=value text files (lists comma-separated); see the shipped
``plans/desk.plan`` and ``plans/paper-full*.plan`` presets.
"""

from __future__ import annotations

import concurrent.futures
import math
import os
from dataclasses import dataclass

import numpy as np

from .diagnostics import (
    MINUS_INFINITY,
    DCV_MODES,
    ConvergenceRecord,
    convergence_deviation_dcv,
    first_divergence_time,
    relative_error_cv,
    stability_ratio,
)
from .lattice import Field, GridSpec
from .scheme import FieldState, PhysicsParams, SchemeError, SolverConfig, evolve
from .store import RunManifest, RunStatus, SnapshotSeries, read_series, write_series

__all__ = [
    "PlanError",
    "ExperimentPlan",
    "parse_plan",
    "make_initial",
    "run_single",
    "run_stability_sweep",
    "run_refinement_suite",
]


class PlanError(Exception):
    """Invalid experiment plan or manifest."""


@dataclass(frozen=True)
class ExperimentPlan:
    amplitudes: tuple[float, ...]
    masses: tuple[float, ...]
    grids: tuple[int, ...]
    t_end: float
    eps_s: tuple[float, ...] = (0.01,)
    eps_c: tuple[float, ...] = (0.15,)
    dcv_mode: str = "as-written"
    output_dir: str = "runs"
    snapshot_cadence: float = 1.0
    dim: int = 1
    transverse_points: int = 8
    p: int = 5
    lam: float = 1.0
    dt_ratio: float = 10.0  # dt = dx / dt_ratio
    tol: float = 1e-12
    max_iters: int = 50
    equal_value_eps: float = 1e-12
    workers: int = 1

    def __post_init__(self):
        if not self.amplitudes or not self.masses or not self.grids:
            raise PlanError("amplitudes, masses, and grids must be nonempty")
        if list(self.grids) != sorted(self.grids):
            raise PlanError("grid ladder must be sorted ascending")
        for a, b in zip(self.grids, self.grids[1:]):
            if b % a != 0 or b == a:
                raise PlanError(f"grid ladder not nested: {a} does not divide {b}")
        if self.t_end <= 0:
            raise PlanError("t_end must be positive")
        if self.snapshot_cadence <= 0:
            raise PlanError("snapshot_cadence must be positive")
        if self.dcv_mode not in DCV_MODES:
            raise PlanError(f"dcv_mode must be one of {DCV_MODES}")
        if self.dim < 1:
            raise PlanError("dim must be >= 1")
        if self.workers < 1:
            raise PlanError("workers must be >= 1")
        for n in self.grids:
            # the snapshot cadence must land exactly on time levels
            steps = self.snapshot_cadence * n * self.dt_ratio
            if abs(steps - round(steps)) > 1e-9:
                raise PlanError(
                    f"snapshot cadence {self.snapshot_cadence} is not a whole "
                    f"number of steps on the N={n} grid"
                )

    def grid_for(self, n: int) -> GridSpec:
        dx = 1.0 / n
        dt = dx / self.dt_ratio
        if self.dim == 1:
            return GridSpec(1, (n,), (dx,), dt)
        points = (n,) + (self.transverse_points,) * (self.dim - 1)
        return GridSpec(self.dim, points, (dx,) * self.dim, dt)

    def manifest_for(self, amplitude: float, mass: float, n: int) -> RunManifest:
        return RunManifest(
            grid=self.grid_for(n),
            physics=PhysicsParams(mass=mass, lam=self.lam, p=self.p),
            solver=SolverConfig(
                tol=self.tol,
                max_iters=self.max_iters,
                equal_value_eps=self.equal_value_eps,
            ),
            initial_amplitude=amplitude,
            snapshot_cadence=self.snapshot_cadence,
        )


_LIST_KEYS = {"amplitudes", "masses", "grids", "eps_s", "eps_c"}
_FLOAT_KEYS = {"t_end", "snapshot_cadence", "lambda", "dt_ratio", "tol", "equal_value_eps"}
_INT_KEYS = {"dim", "transverse_points", "p", "max_iters", "workers"}
_STR_KEYS = {"dcv_mode", "output_dir"}


def parse_plan(path: str, **overrides) -> ExperimentPlan:
    """Read a key=value plan file.  Lines starting with # are comments."""
    kv = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise PlanError(f"{path}:{lineno}: expected key = value")
                kv[key.strip()] = value.strip()
    except OSError as exc:
        raise PlanError(f"cannot read plan {path}: {exc}") from exc

    args = {}
    for key, value in kv.items():
        try:
            if key in _LIST_KEYS:
                items = [v.strip() for v in value.split(",") if v.strip()]
                if key == "grids":
                    args[key] = tuple(int(v) for v in items)
                else:
                    args[key] = tuple(float(v) for v in items)
            elif key in _FLOAT_KEYS:
                args["lam" if key == "lambda" else key] = float(value)
            elif key in _INT_KEYS:
                args[key] = int(value)
            elif key in _STR_KEYS:
                args[key] = value
            else:
                raise PlanError(f"unknown plan key {key!r}")
        except ValueError as exc:
            raise PlanError(f"bad value for {key!r}: {value!r}") from exc
    args.update(overrides)
    try:
        return ExperimentPlan(**args)
    except TypeError as exc:
        raise PlanError(str(exc)) from exc


def make_initial(grid: GridSpec, amplitude: float) -> FieldState:
    """Cosine/sine initial data: phi = A cos(2 pi x), psi = 2 pi A sin(2 pi x)."""
    if grid.dim != 1:
        raise ValueError("make_initial expects a 1-D grid; see make_initial_nd")
    x = grid.axis_coords(0)
    phi = amplitude * np.cos(2.0 * np.pi * x)
    psi = 2.0 * np.pi * amplitude * np.sin(2.0 * np.pi * x)
    return FieldState(Field(grid, phi), Field(grid, psi), 0)


def make_initial_nd(grid: GridSpec, amplitude: float) -> FieldState:
    """Same data varying along axis 0 only, constant along the other axes;
    the wide Laplacian then reduces the dynamics to the 1-D case exactly."""
    x = grid.axis_coords(0)
    shape = grid.points
    phi_line = amplitude * np.cos(2.0 * np.pi * x)
    psi_line = 2.0 * np.pi * amplitude * np.sin(2.0 * np.pi * x)
    expand = (slice(None),) + (None,) * (grid.dim - 1)
    phi = np.broadcast_to(phi_line[expand], shape).reshape(-1).copy()
    psi = np.broadcast_to(psi_line[expand], shape).reshape(-1).copy()
    return FieldState(Field(grid, phi), Field(grid, psi), 0)


def _x_line(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Restrict an axis-0-varying field to its 1-D x-line."""
    if grid.dim == 1:
        return values
    shaped = values.reshape(grid.points)
    return np.ascontiguousarray(shaped[(slice(None),) + (0,) * (grid.dim - 1)])


def _line_grid(grid: GridSpec) -> GridSpec:
    if grid.dim == 1:
        return grid
    return GridSpec(1, (grid.points[0],), (grid.dx[0],), grid.dt, (grid.origin[0],))


def run_single(
    manifest: RunManifest,
    t_end: float,
    out_dir: str | None = None,
    reuse: bool = True,
    require_existing: bool = False,
) -> SnapshotSeries:
    """Evolve one manifest to t_end, snapshotting at the manifest cadence.

    Solver failures are captured in the series status rather than raised, so
    a sweep can continue past a blown-up cell.  With reuse, an existing
    completed snapshot file for the same manifest is read back instead of
    recomputing.
    """
    path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, manifest.digest() + ".snap")
        if reuse and os.path.exists(path):
            return read_series(path)
    if require_existing:
        raise PlanError(f"snapshot for manifest {manifest.digest()} not found")

    grid = manifest.grid
    cadence_steps = manifest.snapshot_cadence / grid.dt
    if abs(cadence_steps - round(cadence_steps)) > 1e-9:
        raise PlanError("snapshot cadence is not a whole number of steps")
    cadence_steps = int(round(cadence_steps))

    if grid.dim == 1:
        initial = make_initial(grid, manifest.initial_amplitude)
    else:
        initial = make_initial_nd(grid, manifest.initial_amplitude)

    frames: list[tuple[float, np.ndarray, np.ndarray]] = []

    def observer(state: FieldState):
        frames.append((state.time, state.phi.values.copy(), state.psi.values.copy()))

    status = RunStatus.ok()
    try:
        evolve(initial, manifest.physics, manifest.solver, t_end, observer, cadence_steps)
    except SchemeError as exc:
        status = RunStatus.failed(exc.time if exc.time is not None else math.nan, str(exc))

    series = SnapshotSeries(manifest, frames, status)
    if path is not None:
        write_series(series, path)
    return series


def _run_one(manifest_json: str, t_end: float, out_dir: str | None):
    # module-level so ProcessPoolExecutor can pickle it
    manifest = RunManifest.from_json(manifest_json)
    run_single(manifest, t_end, out_dir)
    return manifest.digest()


def _execute(plan: ExperimentPlan, manifests: list[RunManifest], require_existing: bool):
    out = plan.output_dir
    if require_existing or plan.workers == 1:
        for m in manifests:
            run_single(m, plan.t_end, out, require_existing=require_existing)
        return
    pending = [m for m in manifests
               if not os.path.exists(os.path.join(out, m.digest() + ".snap"))]
    os.makedirs(out, exist_ok=True)
    with concurrent.futures.ProcessPoolExecutor(max_workers=plan.workers) as pool:
        futures = [pool.submit(_run_one, m.to_json(), plan.t_end, out) for m in pending]
        for f in futures:
            f.result()


def _fmt(v: float) -> str:
    return f"{v:g}"


def _write_table_csv(path, eps_label, eps_values, masses, cells):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(eps_label + "," + ",".join(_fmt(m) for m in masses) + "\n")
        for eps in eps_values:
            row = [cells[(eps, m)] for m in masses]
            fh.write(_fmt(eps) + "," + ",".join(row) + "\n")
    os.replace(tmp, path)


def _crossing_cell(time_or_none, status: RunStatus) -> str:
    if not status.completed and time_or_none is None:
        # never crossed within the frames we do have, but the run died
        return f"FAIL({_fmt(status.fail_time)})"
    if time_or_none is None:
        return "INF"
    return _fmt(time_or_none)


def run_stability_sweep(plan: ExperimentPlan, require_existing: bool = False) -> dict:
    """Per (A, m, eps_s): first time the oscillation ratio on the largest
    grid exceeds eps_s.  Returns {A: {(eps_s, m): cell}} and writes one CSV
    table per amplitude."""
    n_top = plan.grids[-1]
    manifests = [
        (a, m, plan.manifest_for(a, m, n_top))
        for a in plan.amplitudes
        for m in plan.masses
    ]
    _execute(plan, [mf for _, _, mf in manifests], require_existing)

    tables = {}
    for a in plan.amplitudes:
        cells = {}
        for m in plan.masses:
            mf = next(mf for aa, mm, mf in manifests if aa == a and mm == m)
            series = run_single(mf, plan.t_end, plan.output_dir, require_existing=require_existing)
            line_grid = _line_grid(mf.grid)
            snap = [
                (t, Field(line_grid, _x_line(phi, mf.grid)))
                for t, phi, _ in series.frames
            ]
            for eps in plan.eps_s:
                first = None
                for t, phi in snap:
                    if stability_ratio(phi) > eps:
                        first = t
                        break
                cells[(eps, m)] = _crossing_cell(first, series.status)
        tables[a] = cells
        os.makedirs(plan.output_dir, exist_ok=True)
        _write_table_csv(
            os.path.join(plan.output_dir, f"sweep_A{_fmt(a)}.csv"),
            "eps_s", plan.eps_s, plan.masses, cells,
        )
    return tables


def run_refinement_suite(plan: ExperimentPlan, require_existing: bool = False) -> dict:
    """Run the whole grid ladder; CV for every coarse grid against the
    largest, DCV for the third-largest grid paired with the second-largest;
    first-crossing verdicts per (m, eps_c).  Writes one CSV table per
    amplitude plus per-(A, m) CV/DCV series files."""
    if len(plan.grids) < 3:
        raise PlanError("refinement needs at least 3 nested grids")
    g = plan.grids[-3]
    g_bar = plan.grids[-2]
    g_max = plan.grids[-1]

    manifests = [
        (a, m, n, plan.manifest_for(a, m, n))
        for a in plan.amplitudes
        for m in plan.masses
        for n in plan.grids
    ]
    _execute(plan, [mf for _, _, _, mf in manifests], require_existing)

    tables = {}
    for a in plan.amplitudes:
        cells = {}
        for m in plan.masses:
            runs = {
                n: run_single(mf, plan.t_end, plan.output_dir, require_existing=require_existing)
                for aa, mm, n, mf in manifests
                if aa == a and mm == m
            }
            failed = [s.status for s in runs.values() if not s.status.completed]
            records = _convergence_records(plan, runs, g, g_bar, g_max)
            _write_series_csv(plan, a, m, records, runs, g_max)
            worst = min(
                (st.fail_time for st in failed), default=None
            )
            for eps in plan.eps_c:
                if records:
                    first = first_divergence_time(records, eps)
                else:
                    first = None
                if first is None and failed:
                    cells[(eps, m)] = f"FAIL({_fmt(worst)})"
                else:
                    cells[(eps, m)] = "INF" if first is None else _fmt(first)
        tables[a] = cells
        os.makedirs(plan.output_dir, exist_ok=True)
        _write_table_csv(
            os.path.join(plan.output_dir, f"refine_A{_fmt(a)}.csv"),
            "eps_c", plan.eps_c, plan.masses, cells,
        )
    return tables


def _common_times(runs: dict[int, SnapshotSeries], grids) -> list[float]:
    sets = []
    for n in grids:
        sets.append({round(t, 9) for t, _, _ in runs[n].frames})
    common = set.intersection(*sets)
    return sorted(common)


def _convergence_records(plan, runs, g, g_bar, g_max) -> list[ConvergenceRecord]:
    needed = (g, g_bar, g_max)
    if any(not runs[n].frames for n in needed):
        return []
    records = []
    line_grids = {n: _line_grid(runs[n].manifest.grid) for n in needed}
    full_grids = {n: runs[n].manifest.grid for n in needed}
    for t in _common_times(runs, needed):
        fields = {}
        for n in needed:
            _, phi, _ = runs[n].frame_at(t)
            fields[n] = Field(line_grids[n], _x_line(phi, full_grids[n]))
        cv_g = relative_error_cv(fields[g], fields[g_max])
        cv_b = relative_error_cv(fields[g_bar], fields[g_max])
        if cv_g == MINUS_INFINITY or cv_b == MINUS_INFINITY:
            continue  # exact match carries no refinement information
        dcv = convergence_deviation_dcv(cv_g, cv_b, g, g_bar, plan.dcv_mode, g_max)
        records.append(ConvergenceRecord(time=t, grid_id=g, cv=cv_g, dcv=dcv))
    return records


def _write_series_csv(plan, a, m, records, runs, g_max):
    """Plot-ready CV(t) curves for every coarse grid plus the DCV series."""
    os.makedirs(plan.output_dir, exist_ok=True)
    path = os.path.join(plan.output_dir, f"refine_series_A{_fmt(a)}_m{_fmt(m)}.csv")
    coarse = [n for n in plan.grids if n != g_max and runs[n].frames]
    if not runs[g_max].frames:
        return
    dcv_by_t = {round(r.time, 9): r.dcv for r in records}
    times = _common_times(runs, [n for n in plan.grids if runs[n].frames])
    line_grids = {n: _line_grid(runs[n].manifest.grid) for n in plan.grids}
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time," + ",".join(f"cv_{n}" for n in coarse) + ",dcv\n")
        for t in times:
            _, phi_ref, _ = runs[g_max].frame_at(t)
            ref = Field(line_grids[g_max], _x_line(phi_ref, runs[g_max].manifest.grid))
            vals = []
            for n in coarse:
                _, phi, _ = runs[n].frame_at(t)
                cv = relative_error_cv(
                    Field(line_grids[n], _x_line(phi, runs[n].manifest.grid)), ref
                )
                vals.append("-inf" if cv == MINUS_INFINITY else f"{cv:.12g}")
            dcv = dcv_by_t.get(round(t, 9))
            vals.append("" if dcv is None else f"{dcv:.12g}")
            fh.write(_fmt(t) + "," + ",".join(vals) + "\n")
    os.replace(tmp, path)

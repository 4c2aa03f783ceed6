"""Parameter scans and optimizations over temperature, time and initial angle.

Each operation assembles a ScanTable of gridded results; failed cells are
recorded with an error marker instead of being dropped.  Grid cells are
independent, deterministic work items, so a worker pool of any size
produces identical tables.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    IntegratorOptions,
    SensitivityPropagator,
    ghz_like_state,
)
from .errors import DegenerateFit, DidNotEquilibrate, PhiOutOfRange, RingthermError
from .qfi import dynamical_qfi, equilibrium_qfi
from .spectrum import ProbeParams, all_decay_weights

__all__ = [
    "ScanGrid",
    "ScanTable",
    "SearchOptions",
    "OptimalPoint",
    "ScalingFit",
    "equilibrium_scan",
    "dynamic_scan",
    "time_optimized_qfi",
    "equilibration_time",
    "optimal_measurement_time",
    "optimize_phi",
    "scaling_fit",
]

# Integrator settings for comparisons at the equilibration-criterion scale
# (1e-12 absolute on QFI values of order 10): the default tolerances leave
# dead-level noise three orders of magnitude too high, and the stepping is
# stability-limited anyway so the tighter control is essentially free.
CRITERION_INTEGRATOR = IntegratorOptions(rel_tol=1e-13, abs_tol=1e-16)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ScanGrid:
    """A (temperature x time) evaluation grid for one parameter set."""

    params: ProbeParams
    temperature_values: np.ndarray
    t_values: np.ndarray
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "temperature_values", np.asarray(self.temperature_values, float))
        object.__setattr__(self, "t_values", np.asarray(self.t_values, float))
        if self.temperature_values.size == 0 or np.any(self.temperature_values <= 0):
            raise ValueError("temperatures must be positive")
        if np.any(np.diff(self.temperature_values) <= 0):
            raise ValueError("temperatures must be strictly increasing")
        if self.t_values.size == 0 or self.t_values[0] < 0 or np.any(np.diff(self.t_values) <= 0):
            raise ValueError("times must be strictly increasing and non-negative")
        if not 0.0 <= self.phi <= math.pi / 2:
            raise PhiOutOfRange(f"phi must be in [0, pi/2], got {self.phi}")


@dataclass
class ScanTable:
    """Gridded results: named columns, one tuple per row, per-row error marker."""

    columns: tuple[str, ...]
    rows: list[tuple]
    errors: list[str]
    meta: dict

    def __post_init__(self):
        if len(self.errors) != len(self.rows):
            raise ValueError("one error marker per row required")

    @property
    def ok(self) -> bool:
        return all(e == "" for e in self.errors)

    def column(self, name: str) -> np.ndarray:
        """One column as a float array; failed cells become NaN."""
        i = self.columns.index(name)
        return np.array([math.nan if r[i] is None else float(r[i]) for r in self.rows])


@dataclass(frozen=True)
class SearchOptions:
    """Knobs for time/temperature/angle peak searches.

    coarse_points controls the resolution of the first time grid;
    plateau_rel is the relative |Q_d - Q_e| level at which the trajectory
    counts as equilibrated; *_tol_rel are the relative refinement
    tolerances of the golden-section stages.
    """

    coarse_points: int = 48
    plateau_rel: float = 1e-6
    time_tol_rel: float = 1e-3
    temp_tol_rel: float = 1e-2
    max_horizon: float = 1e6
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)


@dataclass(frozen=True)
class OptimalPoint:
    """Global maximizer of the dynamical QFI over (temperature, time)."""

    time: float
    temperature: float
    qfi: float
    equilibrated: bool


@dataclass(frozen=True)
class ScalingFit:
    """Power-law fit t = prefactor * N**exponent in log-log space."""

    exponent: float
    prefactor: float
    residual: float


def _run_parallel(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _golden_max(f, a: float, b: float, tol: float) -> tuple[float, float]:
    """Golden-section maximization on [a, b] to width `tol`.

    Ties shrink the right edge, so plateau peaks drift toward the smallest
    maximizer.
    """
    c = b - (b - a) * _GOLDEN
    d = a + (b - a) * _GOLDEN
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            a, c, fc = c, d, fd
            d = a + (b - a) * _GOLDEN
            fd = f(d)
        else:
            b, d, fd = d, c, fc
            c = b - (b - a) * _GOLDEN
            fc = f(c)
    x = 0.5 * (a + b)
    return x, f(x)


# ---------------------------------------------------------------------------
# equilibrium scan


def equilibrium_scan(params: ProbeParams, temperature_values) -> ScanTable:
    """Equilibrium QFI on a temperature grid, with its peak location."""
    temperature_values = np.asarray(temperature_values, float)
    rows: list[tuple] = []
    errors: list[str] = []
    for t in temperature_values:
        try:
            rows.append((float(t), equilibrium_qfi(params, float(t))))
            errors.append("")
        except RingthermError as exc:
            rows.append((float(t), None))
            errors.append(str(exc))
    meta = _params_meta(params)
    q = np.array([r[1] if r[1] is not None else -math.inf for r in rows])
    if np.isfinite(q).any():
        i = int(np.argmax(q))
        meta["T_opt"] = rows[i][0]
        meta["peak"] = rows[i][1]
    return ScanTable(("T", "Q_e"), rows, errors, meta)


# ---------------------------------------------------------------------------
# dynamical scan over a (T, t) grid


def _scan_cells_at_temperature(task) -> list[tuple[float | None, str]]:
    params, phi, temperature, t_values, opts = task
    prop = SensitivityPropagator(params, temperature, ghz_like_state(params, phi), opts)
    cells: list[tuple[float | None, str]] = []
    failed = ""
    for t in t_values:
        if failed:
            cells.append((None, failed))
            continue
        try:
            state, sens = prop.at(float(t))
            cells.append((dynamical_qfi(state, sens).total, ""))
        except RingthermError as exc:
            failed = str(exc)
            cells.append((None, failed))
    return cells


def dynamic_scan(
    grid: ScanGrid,
    opts: IntegratorOptions | None = None,
    workers: int = 1,
) -> ScanTable:
    """Dynamical QFI at every (T, t) cell of the grid.

    Each temperature is one integration pass over the increasing time
    grid; temperatures are independent work items.  The default
    integrator is the tightened criterion configuration so that cell
    values agree with fresh single-point evaluations to well below 1e-10
    relative despite the shared pass.
    """
    opts = opts or CRITERION_INTEGRATOR
    tasks = [
        (grid.params, grid.phi, float(temp), grid.t_values, opts)
        for temp in grid.temperature_values
    ]
    per_temp = _run_parallel(_scan_cells_at_temperature, tasks, workers)
    rows: list[tuple] = []
    errors: list[str] = []
    for temp, cells in zip(grid.temperature_values, per_temp):
        for t, (q, err) in zip(grid.t_values, cells):
            rows.append((float(temp), float(t), q))
            errors.append(err)
    meta = _params_meta(grid.params)
    meta["phi"] = grid.phi
    return ScanTable(("T", "t", "Q_d"), rows, errors, meta)


# ---------------------------------------------------------------------------
# time-optimized QFI


def _equilibration_horizon(qd, qe: float, params: ProbeParams, search: SearchOptions) -> float:
    """Smallest probed horizon at which |Q_d - Q_e| sits in the plateau band.

    Horizons double from a fraction of the slowest channel time; a
    candidate must also hold at 1.5x and 2x to reject transient crossings
    of Q_e (the difference is not monotone when the dynamical QFI
    overshoots its equilibrium value).
    """
    tol = search.plateau_rel * max(qe, 1e-300)
    t = 0.25 / float(all_decay_weights(params).min())
    while t <= search.max_horizon:
        if abs(qd(t) - qe) <= tol:
            if abs(qd(1.5 * t) - qe) <= tol and abs(qd(2.0 * t) - qe) <= tol:
                return t
        t *= 2.0
    raise DidNotEquilibrate(
        f"|Q_d - Q_e| did not settle within {tol:.3e} below horizon {search.max_horizon:g}"
    )


def _coarse_time_grid(t_end: float, points: int) -> np.ndarray:
    """Zero plus a log/linear mix up to t_end; resolves early peaks."""
    half = max(points // 2, 4)
    return np.unique(
        np.concatenate(
            [
                [0.0],
                np.geomspace(t_end * 1e-3, t_end, half),
                np.linspace(0.0, t_end, half + 1)[1:],
            ]
        )
    )


def _time_curve_peak(
    params: ProbeParams, phi: float, temperature: float, search: SearchOptions
) -> tuple[float, float, bool]:
    """Maximize Q_d over time at fixed temperature.

    Returns (t_star, value, equilibrated): `equilibrated` marks a peak
    sitting on the equilibrated boundary of the grid, i.e. no dynamical
    advantage over the thermal state.
    """
    qe = equilibrium_qfi(params, temperature)
    prop = SensitivityPropagator(params, temperature, ghz_like_state(params, phi), search.integrator)

    def qd(t: float) -> float:
        state, sens = prop.at(t)
        return dynamical_qfi(state, sens).total

    t_end = _equilibration_horizon(qd, qe, params, search)
    ts = _coarse_time_grid(t_end, search.coarse_points)
    qs = np.array([qd(t) for t in ts])
    i = int(np.argmax(qs))  # ties resolve to the smallest t

    if i == len(ts) - 1 or (i > 0 and qs[i] <= max(qs[i - 1], qs[i + 1])):
        # plateau or boundary peak: no interior bracket to refine
        return float(ts[i]), float(qs[i]), i == len(ts) - 1
    if i == 0:
        return float(ts[0]), float(qs[0]), False
    lo, hi = float(ts[i - 1]), float(ts[i + 1])
    t_star, q_star = _golden_max(qd, lo, hi, search.time_tol_rel * hi)
    if q_star < qs[i]:
        t_star, q_star = float(ts[i]), float(qs[i])
    return t_star, q_star, False


def _time_opt_task(task) -> tuple[tuple, str]:
    params, phi, temperature, search = task
    try:
        t_star, q_star, equilibrated = _time_curve_peak(params, phi, temperature, search)
        return (temperature, t_star, q_star, float(equilibrated)), ""
    except RingthermError as exc:
        return (temperature, None, None, None), str(exc)


def time_optimized_qfi(
    params: ProbeParams,
    phi: float,
    temperature_values,
    search: SearchOptions | None = None,
    workers: int = 1,
) -> ScanTable:
    """Per-temperature maximum of Q_d over measurement time.

    Rows are (T, t_star, Q_M, equilibrated); the global maximizer over the
    grid lands in meta as (T_opt, t_opt, peak).
    """
    search = search or SearchOptions()
    temperature_values = np.asarray(temperature_values, float)
    tasks = [(params, phi, float(t), search) for t in temperature_values]
    results = _run_parallel(_time_opt_task, tasks, workers)
    rows = [r for r, _ in results]
    errors = [e for _, e in results]
    meta = _params_meta(params)
    meta["phi"] = phi
    q = np.array([r[2] if r[2] is not None else -math.inf for r in rows])
    if np.isfinite(q).any():
        i = int(np.argmax(q))
        meta["T_opt"] = rows[i][0]
        meta["t_opt"] = rows[i][1]
        meta["peak"] = rows[i][2]
        meta["peak_equilibrated"] = rows[i][3]
    return ScanTable(("T", "t_star", "Q_M", "equilibrated"), rows, errors, meta)


# ---------------------------------------------------------------------------
# equilibration time


def equilibration_time(
    params: ProbeParams,
    phi: float,
    temperature: float,
    criterion_eps: float = 1e-12,
    search: SearchOptions | None = None,
    opts: IntegratorOptions | None = None,
) -> float:
    """Shortest time at which |Q_d - Q_e| stays below `criterion_eps`.

    Horizon doubling brackets the first crossing, bisection narrows it to
    a relative width `time_tol_rel`, and the candidate is re-checked at
    1.5x and 2x to reject transient crossings; a failed re-check restarts
    the search beyond the failing point.  Comparisons at the 1e-12 scale
    need the tightened criterion integrator (the default here).
    """
    search = search or SearchOptions()
    opts = opts or CRITERION_INTEGRATOR
    qe = equilibrium_qfi(params, temperature)
    prop = SensitivityPropagator(params, temperature, ghz_like_state(params, phi), opts)

    def crit(t: float) -> float:
        state, sens = prop.at(t)
        return abs(dynamical_qfi(state, sens).total - qe)

    if crit(0.0) < criterion_eps:
        return 0.0

    t_lo = 0.0
    t_hi = 0.25 / float(all_decay_weights(params).min())
    while True:
        # doubling stage: find a horizon where the criterion holds
        while crit(t_hi) >= criterion_eps:
            t_lo = t_hi
            t_hi *= 2.0
            if t_hi > search.max_horizon:
                raise DidNotEquilibrate(
                    f"criterion {criterion_eps:g} not met below horizon {search.max_horizon:g}"
                )
        # bisection stage: first crossing between t_lo (fails) and t_hi (holds)
        while (t_hi - t_lo) > search.time_tol_rel * t_hi:
            mid = 0.5 * (t_lo + t_hi)
            if crit(mid) < criterion_eps:
                t_hi = mid
            else:
                t_lo = mid
        # transient guard
        for factor in (1.5, 2.0):
            if crit(factor * t_hi) >= criterion_eps:
                t_lo = factor * t_hi
                t_hi = 2.0 * t_lo
                break
        else:
            return t_hi


# ---------------------------------------------------------------------------
# global (T, t) optimum and angle optimization


def optimal_measurement_time(
    params: ProbeParams,
    phi: float,
    temperature_values,
    search: SearchOptions | None = None,
    workers: int = 1,
) -> OptimalPoint:
    """Global maximizer of Q_d over the temperature grid and time.

    The gridded optimum is refined by golden section in temperature, with
    the per-temperature time maximization as the objective.
    """
    search = search or SearchOptions()
    table = time_optimized_qfi(params, phi, temperature_values, search, workers)
    if not any(e == "" for e in table.errors):
        raise DidNotEquilibrate("every temperature cell failed: " + table.errors[0])
    q = table.column("Q_M")
    i = int(np.nanargmax(q))
    temps = table.column("T")
    t_i = float(table.rows[i][1])
    q_i = float(q[i])
    eq_i = bool(table.rows[i][3])

    if 0 < i < len(temps) - 1 and table.errors[i - 1] == "" and table.errors[i + 1] == "":
        best: dict = {}

        def objective(temp: float) -> float:
            t_star, q_star, equilibrated = _time_curve_peak(params, phi, temp, search)
            if not best or q_star > best["q"]:
                best.update(t=t_star, q=q_star, temp=temp, eq=equilibrated)
            return q_star

        _golden_max(
            objective,
            float(temps[i - 1]),
            float(temps[i + 1]),
            search.temp_tol_rel * float(temps[i + 1]),
        )
        if best and best["q"] > q_i:
            return OptimalPoint(best["t"], best["temp"], best["q"], best["eq"])
    return OptimalPoint(t_i, float(temps[i]), q_i, eq_i)


def _phi_peak_task(task) -> tuple[tuple, str]:
    params, phi, temperature_values, search = task
    try:
        table = time_optimized_qfi(params, phi, temperature_values, search)
        if "peak" not in table.meta:
            return (phi, None, None, None), table.errors[0] or "no valid cells"
        return (phi, table.meta["T_opt"], table.meta["t_opt"], table.meta["peak"]), ""
    except RingthermError as exc:
        return (phi, None, None, None), str(exc)


def optimize_phi(
    params: ProbeParams,
    temperature_values,
    phi_grid,
    search: SearchOptions | None = None,
    workers: int = 1,
) -> tuple[float, ScanTable]:
    """Best initial-superposition angle for the peak time-optimized QFI.

    Grid search over `phi_grid`, then golden-section refinement around the
    gridded argmax (refinement objective: peak of the per-angle
    time-optimized table over the temperature grid).
    """
    search = search or SearchOptions()
    phi_grid = np.asarray(phi_grid, float)
    if np.any(phi_grid < 0) or np.any(phi_grid > math.pi / 2):
        raise PhiOutOfRange("phi grid must lie in [0, pi/2]")
    tasks = [(params, float(p), np.asarray(temperature_values, float), search) for p in phi_grid]
    results = _run_parallel(_phi_peak_task, tasks, workers)
    rows = [r for r, _ in results]
    errors = [e for _, e in results]
    table = ScanTable(("phi", "T_opt", "t_opt", "peak"), rows, errors, _params_meta(params))

    q = table.column("peak")
    if not np.isfinite(q).any():
        raise DidNotEquilibrate("every angle failed: " + errors[0])
    i = int(np.nanargmax(q))
    phi_star = float(phi_grid[i])
    if 0 < i < len(phi_grid) - 1 and errors[i - 1] == "" and errors[i + 1] == "":

        def objective(phi: float) -> float:
            t = time_optimized_qfi(params, phi, temperature_values, search)
            return t.meta.get("peak", -math.inf)

        phi_ref, q_ref = _golden_max(
            objective, float(phi_grid[i - 1]), float(phi_grid[i + 1]), 1e-4
        )
        if q_ref > q[i]:
            phi_star = phi_ref
    table.meta["phi_opt"] = phi_star
    return phi_star, table


# ---------------------------------------------------------------------------
# scaling fit


def scaling_fit(table: ScanTable) -> ScalingFit:
    """Least-squares power law through (N, time) rows, in log-log space."""
    ns = table.column(table.columns[0])
    ts = table.column(table.columns[1])
    keep = np.isfinite(ns) & np.isfinite(ts)
    ns, ts = ns[keep], ts[keep]
    if len(ns) < 3:
        raise DegenerateFit(f"need at least 3 valid rows, got {len(ns)}")
    if np.any(ns <= 0) or np.any(ts <= 0):
        raise DegenerateFit("all values must be positive for a log-log fit")
    x, y = np.log(ns), np.log(ts)
    if np.ptp(x) == 0:
        raise DegenerateFit("all abscissae coincide")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return ScalingFit(float(slope), float(math.exp(intercept)), float(np.sqrt(np.mean(resid**2))))


def _params_meta(params: ProbeParams) -> dict:
    return {
        "n_atoms": params.n_atoms,
        "coupling": params.coupling,
        "transition_freq": params.transition_freq,
    }

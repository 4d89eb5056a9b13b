"""Crossbar parasitics: per-cell path resistance, stress voltage and current.

Two evaluation modes are provided. The fast series mode treats each cell as
an isolated voltage divider against the parasitic resistance of its current
path; the path through cell (i, j) crosses i + j + 1 parasitic units,
modeled as ``i * r_wl + j * r_bl + r_wl`` (the +1 unit is one wordline-sized
access segment). The nodal mode assembles the full resistive ladder network
of all wires and cells and solves Kirchhoff's equations with a sparse direct
factorization, which captures current stealing between cells that the series
model ignores.

Both modes agree exactly when only a single cell conducts; the ladder is
wired so that the lone-path parasitic through cell (i, j) reproduces the
series formula above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, ValidationError

KCL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TechNodeParams:
    """Unit parasitic wire resistances for one process technology node."""

    name: str
    r_wordline_unit: float  # ohms per wordline segment
    r_bitline_unit: float   # ohms per bitline segment
    projected: bool = False

    def __post_init__(self):
        if self.r_wordline_unit <= 0 or self.r_bitline_unit <= 0:
            raise ValidationError(
                f"tech {self.name}: unit resistances must be > 0")


# 5nm values are projections; no measured bitline figure exists, so it is
# set equal to the wordline value.
TECH_TABLE = {
    "65nm": TechNodeParams("65nm", 2.5, 1.0),
    "16nm": TechNodeParams("16nm", 10.0, 3.8),
    "5nm": TechNodeParams("5nm", 25.0, 25.0, projected=True),
}

DEFAULT_R_CELL_LEVELS = (100_000.0, 10_000.0, 5_000.0)
DEFAULT_V_DRIVE = 0.5


@dataclass(frozen=True)
class CrossbarConfig:
    n: int
    tech: TechNodeParams
    r_cell_by_level: tuple = DEFAULT_R_CELL_LEVELS
    v_drive: float = DEFAULT_V_DRIVE

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("crossbar size must be >= 1")
        if self.v_drive <= 0:
            raise ValidationError("v_drive must be > 0")
        levels = tuple(self.r_cell_by_level)
        if any(r <= 0 for r in levels):
            raise ValidationError("cell resistances must be > 0")
        if any(a <= b for a, b in zip(levels, levels[1:])):
            raise ValidationError(
                "cell resistance must strictly decrease with level "
                "(level 0 is the high-resistance state)")
        object.__setattr__(self, "r_cell_by_level", levels)

    @property
    def num_levels(self) -> int:
        return len(self.r_cell_by_level)


@dataclass(frozen=True)
class CellReading:
    stress_voltage: float
    current: float


@dataclass(frozen=True)
class CellEnvironment:
    """Per-cell electrical operating point of one crossbar configuration.

    ``stress_voltage_by_level[lev][i, j]`` is the voltage across cell (i, j)
    when that cell is programmed to ``lev``; the representative
    ``stress_voltage``/``current`` grids are the level-0 (high-resistance)
    map. ``kcl_residual`` is the largest node-current violation of the nodal
    solve relative to the injected current (0 for the series mode).
    """

    mode: str
    n: int
    v_drive: float
    stress_voltage: np.ndarray
    current: np.ndarray
    stress_voltage_by_level: np.ndarray  # (num_levels, n, n)
    kcl_residual: float = 0.0


def path_resistance(i: int, j: int, config: CrossbarConfig) -> float:
    """Parasitic resistance of the read path via cell (i, j)."""
    if not (0 <= i < config.n and 0 <= j < config.n):
        raise ValidationError(
            f"coordinate ({i}, {j}) out of range for {config.n}x{config.n}")
    r_wl = config.tech.r_wordline_unit
    return i * r_wl + j * config.tech.r_bitline_unit + r_wl


def series_cell_state(i: int, j: int, config: CrossbarConfig,
                      cell_resistance: float) -> CellReading:
    """Voltage divider of one cell against its own path parasitics."""
    if cell_resistance <= 0:
        raise ValidationError("cell resistance must be > 0")
    r_par = path_resistance(i, j, config)
    current = config.v_drive / (cell_resistance + r_par)
    return CellReading(stress_voltage=current * cell_resistance,
                       current=current)


def corner_current_difference(config: CrossbarConfig, n: int,
                              r_cell: float) -> float:
    """Fractional current drop from the (0,0) cell to the (n-1,n-1) cell."""
    sized = CrossbarConfig(n=n, tech=config.tech,
                           r_cell_by_level=config.r_cell_by_level,
                           v_drive=config.v_drive)
    near = series_cell_state(0, 0, sized, r_cell).current
    far = series_cell_state(n - 1, n - 1, sized, r_cell).current
    return 1.0 - far / near


def calibrate_rcell(config: CrossbarConfig, target_diff_fraction: float,
                    anchor_n: int) -> float:
    """Cell resistance making the corner current difference hit a target.

    Solves (r_cell + r_short) / (r_cell + r_long) = 1 - target in closed
    form at the anchor crossbar size. The difference fraction is independent
    of the drive voltage, so only the ratio is calibrated.
    """
    if not 0 < target_diff_fraction < 1:
        raise ValidationError("target difference fraction must be in (0, 1)")
    sized = CrossbarConfig(n=anchor_n, tech=config.tech,
                           r_cell_by_level=config.r_cell_by_level,
                           v_drive=config.v_drive)
    r_short = path_resistance(0, 0, sized)
    r_long = path_resistance(anchor_n - 1, anchor_n - 1, sized)
    r_cell = ((1.0 - target_diff_fraction) * r_long - r_short) \
        / target_diff_fraction
    if r_cell <= 0:
        raise ValidationError(
            f"target {target_diff_fraction} infeasible at {anchor_n}x"
            f"{anchor_n}: implied cell resistance {r_cell:.3g} <= 0")
    return r_cell


def series_environment(config: CrossbarConfig) -> CellEnvironment:
    """Per-level stress-voltage maps from the series divider model."""
    n = config.n
    i_idx = np.arange(n)[:, None]
    j_idx = np.arange(n)[None, :]
    r_wl = config.tech.r_wordline_unit
    r_par = i_idx * r_wl + j_idx * config.tech.r_bitline_unit + r_wl
    by_level = np.empty((config.num_levels, n, n))
    currents = np.empty((config.num_levels, n, n))
    for lev, r_cell in enumerate(config.r_cell_by_level):
        cur = config.v_drive / (r_cell + r_par)
        currents[lev] = cur
        by_level[lev] = cur * r_cell
    return CellEnvironment(
        mode="series", n=n, v_drive=config.v_drive,
        stress_voltage=by_level[0], current=currents[0],
        stress_voltage_by_level=by_level, kcl_residual=0.0)


# -- nodal analysis ----------------------------------------------------------

@dataclass
class NodalDetails:
    """Raw solve artifacts for diagnostics (energy balance, residual checks)."""

    top_voltage: np.ndarray      # wire potential on the driven side of cells
    bottom_voltage: np.ndarray   # wire potential on the collecting side
    elements: list               # (v_a, v_b, conductance) for every element
    injected_power: float
    injected_current: float


def solve_nodal(config: CrossbarConfig, resistance_matrix,
                active_inputs=None, return_details: bool = False):
    """Exact DC solve of the crossbar ladder network.

    ``resistance_matrix[i, j]`` is the programmed resistance of cell (i, j);
    ``np.inf`` marks a non-conducting cell. ``active_inputs`` lists the
    driver indices held at v_drive; the remaining drivers are held at 0 V
    (grounded inactive lines). Collector wires terminate in a virtual ground
    through one access segment. Node voltages come from a sparse LU
    factorization with iterative refinement until the worst KCL residual is
    below 1e-9 of the injected current.
    """
    n = config.n
    r = np.asarray(resistance_matrix, dtype=np.float64)
    if r.shape != (n, n):
        raise ValidationError(f"resistance matrix must be {n}x{n}")
    if np.any(r <= 0):
        raise ValidationError("cell resistances must be > 0")
    g_cell = np.where(np.isinf(r), 0.0, 1.0 / r)
    if not np.any(g_cell > 0):
        raise ValidationError("singular system: no conducting cells")

    if active_inputs is None:
        active = np.ones(n, dtype=bool)
    else:
        active = np.zeros(n, dtype=bool)
        for d in active_inputs:
            if not 0 <= d < n:
                raise ValidationError(f"active input {d} out of range")
            active[d] = True
    v_src = np.where(active, config.v_drive, 0.0)

    r_wl = config.tech.r_wordline_unit
    r_bl = config.tech.r_bitline_unit
    # Driven-side wire: source sits at position 0, segments between column
    # positions carry the bitline unit; collecting wire runs back to the
    # virtual ground through wordline-unit segments plus one wordline-unit
    # access, so a lone path via (i, j) measures i*r_wl + j*r_bl + r_wl,
    # matching path_resistance().
    g_seg_top = 1.0 / r_bl
    g_seg_bot = 1.0 / r_wl
    g_access = 1.0 / r_wl

    # Unknowns: top nodes (d, m) for m >= 1, then all bottom nodes (p, c).
    n_top = n * (n - 1)

    def top_id(d, m):
        return d * (n - 1) + (m - 1)

    def bot_id(p, c):
        return n_top + p * n + c

    n_unknown = n_top + n * n
    rows, cols, vals = [], [], []
    b = np.zeros(n_unknown)
    diag = np.zeros(n_unknown)

    def stamp(a_idx, b_idx, g):
        # one conductance between two unknown nodes
        if g == 0.0:
            return
        diag[a_idx] += g
        diag[b_idx] += g
        rows.append(a_idx); cols.append(b_idx); vals.append(-g)
        rows.append(b_idx); cols.append(a_idx); vals.append(-g)

    def stamp_known(idx, g, known_voltage):
        # conductance from an unknown node to a fixed-potential node
        if g == 0.0:
            return
        diag[idx] += g
        b[idx] += g * known_voltage

    for d in range(n):
        # top wire segments; node (d, 0) is the source at a known potential
        if n > 1:
            stamp_known(top_id(d, 1), g_seg_top, v_src[d])
            for m in range(2, n):
                stamp(top_id(d, m - 1), top_id(d, m), g_seg_top)
        # cells
        for c in range(n):
            g = g_cell[d, c]
            if c == 0:
                stamp_known(bot_id(d, 0), g, v_src[d])
            else:
                stamp(top_id(d, c), bot_id(d, c), g)
    for c in range(n):
        stamp_known(bot_id(0, c), g_access, 0.0)  # virtual ground
        for p in range(1, n):
            stamp(bot_id(p - 1, c), bot_id(p, c), g_seg_bot)

    rows.extend(range(n_unknown))
    cols.extend(range(n_unknown))
    vals.extend(diag)
    mat = csc_matrix((vals, (rows, cols)), shape=(n_unknown, n_unknown))
    if np.any(mat.diagonal() == 0.0):
        raise ValidationError("singular system: isolated node "
                              "(all incident conductances are zero)")

    try:
        lu = splu(mat)
    except RuntimeError as exc:
        raise ValidationError(f"singular system: {exc}")
    x = lu.solve(b)

    # voltage on both plates of every cell
    def assemble_plates(x):
        v_top = np.empty((n, n))
        v_top[:, 0] = v_src
        if n > 1:
            v_top[:, 1:] = x[:n_top].reshape(n, n - 1)
        v_bot = x[n_top:].reshape(n, n)
        return v_top, v_bot

    scale = max(float(np.abs(b).sum()), 1e-30)
    residual = float(np.max(np.abs(mat @ x - b)))
    refinements = 0
    while residual / scale > KCL_TOLERANCE * 0.1 and refinements < 8:
        x = x + lu.solve(b - mat @ x)
        residual = float(np.max(np.abs(mat @ x - b)))
        refinements += 1
    if not np.all(np.isfinite(x)):
        raise ConvergenceError("nodal solve produced non-finite voltages")

    v_top, v_bot = assemble_plates(x)
    dv = v_top - v_bot
    current = dv * g_cell

    # total current leaving the sources, for residual normalization
    injected_current = 0.0
    for d in range(n):
        i_d = g_cell[d, 0] * (v_src[d] - v_bot[d, 0])
        if n > 1:
            i_d += g_seg_top * (v_src[d] - v_top[d, 1])
        injected_current += max(i_d, 0.0) if v_src[d] > 0 else abs(i_d)
    kcl = residual / max(abs(injected_current), 1e-30)
    if kcl > KCL_TOLERANCE:
        raise ConvergenceError(
            f"KCL residual {kcl:.3e} above {KCL_TOLERANCE} after "
            f"{refinements} refinement passes")

    env = CellEnvironment(
        mode="nodal", n=n, v_drive=config.v_drive,
        stress_voltage=dv, current=current,
        stress_voltage_by_level=dv[None, :, :].copy(),
        kcl_residual=kcl)
    if not return_details:
        return env

    elements = []
    power_in = 0.0
    for d in range(n):
        i_d = g_cell[d, 0] * (v_src[d] - v_bot[d, 0])
        if n > 1:
            i_d += g_seg_top * (v_src[d] - v_top[d, 1])
        power_in += v_src[d] * i_d
        if n > 1:
            elements.append((v_src[d], v_top[d, 1], g_seg_top))
            for m in range(2, n):
                elements.append((v_top[d, m - 1], v_top[d, m], g_seg_top))
        for c in range(n):
            if g_cell[d, c] > 0:
                top = v_src[d] if c == 0 else v_top[d, c]
                elements.append((top, v_bot[d, c], g_cell[d, c]))
    for c in range(n):
        elements.append((v_bot[0, c], 0.0, g_access))
        for p in range(1, n):
            elements.append((v_bot[p - 1, c], v_bot[p, c], g_seg_bot))
    details = NodalDetails(top_voltage=v_top, bottom_voltage=v_bot,
                           elements=elements, injected_power=power_in,
                           injected_current=injected_current)
    return env, details


def nodal_environment(config: CrossbarConfig,
                      active_inputs=None) -> CellEnvironment:
    """Per-level environment from one nodal solve per uniform cell level."""
    n = config.n
    by_level = np.empty((config.num_levels, n, n))
    currents = None
    kcl = 0.0
    for lev, r_cell in enumerate(config.r_cell_by_level):
        env = solve_nodal(config, np.full((n, n), r_cell), active_inputs)
        by_level[lev] = env.stress_voltage
        kcl = max(kcl, env.kcl_residual)
        if lev == 0:
            currents = env.current
    return CellEnvironment(
        mode="nodal", n=n, v_drive=config.v_drive,
        stress_voltage=by_level[0], current=currents,
        stress_voltage_by_level=by_level, kcl_residual=kcl)


def voltage_map_stats(env: CellEnvironment) -> dict:
    """Min/max stress voltage plus a row-major exportable grid."""
    grid = [(i, j, float(env.stress_voltage[i, j]), float(env.current[i, j]))
            for i in range(env.n) for j in range(env.n)]
    return {
        "v_min": float(env.stress_voltage.min()),
        "v_max": float(env.stress_voltage.max()),
        "grid": grid,
    }


def calibrate_reference_nodal(tech: TechNodeParams, n: int = 128,
                              v_max_target: float = 0.57,
                              v_min_target: float = 0.40,
                              tol: float = 1e-3) -> CrossbarConfig:
    """Uniform cell resistance and drive hitting target corner voltages.

    With every driver active and all cells at one resistance, the voltage
    ratio between the coolest and hottest cell depends only on the cell
    resistance (the network is linear), so the resistance is bisected until
    the ratio matches v_min/v_max and the drive is then scaled to pin the
    maximum. Returns a config whose level-0 resistance is the calibrated
    value.
    """
    target_ratio = v_min_target / v_max_target
    probe = 1.0  # volts; linearity makes the ratio drive-invariant

    def ratio(r_cell):
        cfg = CrossbarConfig(n=n, tech=tech, r_cell_by_level=(r_cell,),
                             v_drive=probe)
        env = solve_nodal(cfg, np.full((n, n), r_cell))
        return (env.stress_voltage.min() / env.stress_voltage.max(),
                env.stress_voltage.max())

    lo, hi = 1.0, 1.0
    r_lo, _ = ratio(lo)
    while r_lo > target_ratio and lo > 1e-6:
        lo /= 8.0
        r_lo, _ = ratio(lo)
    hi = max(lo * 8.0, 8.0)
    r_hi, _ = ratio(hi)
    while r_hi < target_ratio:
        hi *= 8.0
        if hi > 1e12:
            raise ConvergenceError("reference calibration did not bracket")
        r_hi, _ = ratio(hi)
    for _ in range(60):
        mid = np.sqrt(lo * hi)
        r_mid, v_max = ratio(mid)
        if abs(r_mid - target_ratio) < tol:
            lo = hi = mid
            break
        if r_mid < target_ratio:
            lo = mid
        else:
            hi = mid
    r_cell = np.sqrt(lo * hi)
    _, v_max = ratio(r_cell)
    v_drive = probe * v_max_target / v_max
    return CrossbarConfig(n=n, tech=tech, r_cell_by_level=(r_cell,),
                          v_drive=v_drive)

"""OxRRAM read-disturb physics: state transition times and stress tracking.

A cell in the high-resistance state (level 0) drifts by vertical closure of
its filament gap; the gap velocity is

    dg/dt = -vartheta0 * exp(-Ea / kT) * sinh(gamma * a0 / L * q*V / kT),
    gamma = gamma0 - beta * (g / g0)**3

and the transition fires when the gap reaches ``g_close``. Cells in any
low-resistance state drift by lateral filament growth with the empirical law

    t(V) = 10 ** (-14.7 * V + 6.7)  seconds.

With beta = 0 the gap velocity is constant in g, giving the closed form
t = (g0 - g_close) / velocity; that two-parameter shape is what the anchor
calibration fits. A cell accumulates ``spikes * pulse_width`` seconds of
stress per inference and steps one level deeper each time the accumulated
stress exceeds its transition time; drift is unidirectional (levels never
decrease under read stress).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from scipy.integrate import solve_ivp

from .errors import ConvergenceError, ValidationError

BOLTZMANN_EV = 8.617333262e-5   # eV / K
DEFAULT_PULSE_WIDTH = 1e-3      # seconds of stress per spike
DEFAULT_ANCHORS = ((0.57, 5.227), (0.40, 31.214))  # (volts, seconds)

HRS_RTOL = 1e-8
STEP_CAP = int(1e8)


@dataclass(frozen=True)
class DisturbParams:
    vartheta0: float            # gap-velocity prefactor, nm/s
    gamma0: float               # field-enhancement fitting constant
    beta: float = 0.0           # gap-dependence fitting constant
    e_a: float = 0.6            # activation energy, eV
    k_boltzmann: float = BOLTZMANN_EV
    temperature: float = 300.0  # K
    a0: float = 0.25            # atomic hopping distance, nm
    l_fil: float = 5.0          # vertical filament length, nm
    q: float = 1.0              # filament charge, elementary-charge units
    g0: float = 2.0             # initial filament gap, nm
    g_close: float = 0.1        # gap at which the HRS->LRS transition fires, nm
    pulse_width: float = DEFAULT_PULSE_WIDTH
    hrs_jump_to_max: bool = False  # alternative: HRS transition lands at max level

    def __post_init__(self):
        positive = ("vartheta0", "gamma0", "e_a", "k_boltzmann", "temperature",
                    "a0", "l_fil", "q", "g0", "g_close", "pulse_width")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValidationError(f"disturb parameter {name} must be > 0")
        if self.g_close >= self.g0:
            raise ValidationError("g_close must be below the initial gap g0")

    def gamma(self, gap: float) -> float:
        return self.gamma0 - self.beta * (gap / self.g0) ** 3

    def gap_velocity(self, gap: float, v: float) -> float:
        """Magnitude of dg/dt at the given gap and cell voltage."""
        gamma = self.gamma(gap)
        if gamma <= 0:
            raise ValidationError(
                f"field enhancement factor became non-positive "
                f"(gamma={gamma:.4g} at gap={gap:.4g} nm) with gamma0="
                f"{self.gamma0}, beta={self.beta}")
        kt = self.k_boltzmann * self.temperature
        arg = gamma * self.a0 / self.l_fil * self.q * v / kt
        return self.vartheta0 * math.exp(-self.e_a / kt) * math.sinh(arg)


@dataclass(frozen=True)
class TransitionEvent:
    from_level: int
    to_level: int


@dataclass(frozen=True)
class CellState:
    level: int
    accumulated_stress: float = 0.0   # seconds of read stress since program
    gap: float | None = None          # nm, meaningful in HRS only

    @property
    def phase(self) -> str:
        return "HRS" if self.level == 0 else "LRS"


def lrs_transition_time(v: float) -> float:
    """Empirical lateral-growth disturb law, seconds."""
    if v <= 0:
        raise ValidationError("voltage must be > 0")
    return 10.0 ** (-14.7 * v + 6.7)


def hrs_closed_form_time(v: float, params: DisturbParams) -> float:
    """Analytic gap-closure time, valid only for beta = 0."""
    if params.beta != 0.0:
        raise ValidationError("closed form requires beta = 0")
    if v <= 0:
        raise ValidationError("voltage must be > 0")
    return (params.g0 - params.g_close) / params.gap_velocity(params.g0, v)


def hrs_transition_time(v: float, params: DisturbParams,
                        rtol: float = HRS_RTOL) -> float:
    """Gap-closure time by adaptive integration of the gap dynamics.

    Integrates the gap from g0 downward, re-evaluating the field-enhancement
    factor along the way, until the gap reaches g_close.
    """
    if v <= 0:
        raise ValidationError("voltage must be > 0")
    # gamma is monotone in gap (cubic), so checking both ends guards the
    # whole integration range
    v_start = params.gap_velocity(params.g0, v)
    v_end = params.gap_velocity(params.g_close, v)
    t_bound = 1.5 * (params.g0 - params.g_close) / min(v_start, v_end)

    def rhs(_t, y):
        return (-params.gap_velocity(y[0], v),)

    def closed(_t, y):
        return y[0] - params.g_close

    closed.terminal = True
    closed.direction = -1

    sol = solve_ivp(rhs, (0.0, t_bound), (params.g0,), events=(closed,),
                    rtol=rtol, atol=params.g_close * 1e-12, method="RK45")
    if sol.status == -1 or len(sol.t) > STEP_CAP:
        raise ConvergenceError(
            f"gap integration failed at v={v} with params={params}: "
            f"{sol.message}")
    if sol.status != 1 or not len(sol.t_events[0]):
        raise ConvergenceError(
            f"gap never reached g_close within the time bound at v={v} "
            f"with params={params}")
    return float(sol.t_events[0][0])


def calibrate_hrs(anchor1, anchor2, base: DisturbParams | None = None,
                  ratio_tol: float = 1e-10) -> DisturbParams:
    """Two-anchor fit of the beta = 0 gap dynamics.

    With beta = 0 the closure time is t(v) = 1 / (A * sinh(B * v)) for lumped
    constants A and B. B is found by bisection on the anchor time ratio
    (monotone in B); A then follows from either anchor. The lumped values are
    folded back into the physical fields: B fixes gamma0, A fixes vartheta0,
    all other constants keep their template values.
    """
    (v1, t1), (v2, t2) = anchor1, anchor2
    if v1 <= 0 or v2 <= 0 or t1 <= 0 or t2 <= 0:
        raise ValidationError("anchors must have positive voltage and time")
    if v1 == v2:
        raise ValidationError("anchor voltages must be distinct")
    (v_lo, t_lo), (v_hi, t_hi) = sorted([(v1, t1), (v2, t2)])
    if t_hi >= t_lo:
        raise ValidationError(
            "anchors are not monotone: transition time must decrease with "
            "voltage")
    ratio = t_lo / t_hi  # > 1
    if ratio <= v_hi / v_lo:
        raise ValidationError(
            "anchor time ratio too shallow for a sinh law; no positive B "
            "reproduces both anchors")

    def f(b):
        return math.sinh(b * v_hi) / math.sinh(b * v_lo)

    lo = 1e-9
    hi = 1.0
    while f(hi) < ratio:
        hi *= 2.0
        if hi > 1e6:
            raise ConvergenceError("calibration bracket expansion failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        if abs(val / ratio - 1.0) < ratio_tol:
            lo = hi = mid
            break
        if val < ratio:
            lo = mid
        else:
            hi = mid
    b_fit = 0.5 * (lo + hi)
    a_fit = 1.0 / (t_hi * math.sinh(b_fit * v_hi))

    if base is None:
        base = DisturbParams(vartheta0=1.0, gamma0=1.0)
    kt = base.k_boltzmann * base.temperature
    gamma0 = b_fit * base.l_fil * kt / (base.a0 * base.q)
    vartheta0 = a_fit * (base.g0 - base.g_close) * math.exp(base.e_a / kt)
    return replace(base, vartheta0=vartheta0, gamma0=gamma0, beta=0.0)


_DEFAULT_PARAMS = None


def default_params() -> DisturbParams:
    """Parameters calibrated on the standard transition-time anchors."""
    global _DEFAULT_PARAMS
    if _DEFAULT_PARAMS is None:
        _DEFAULT_PARAMS = calibrate_hrs(*DEFAULT_ANCHORS)
    return _DEFAULT_PARAMS


def transition_time_for_level(level: int, v: float,
                              params: DisturbParams) -> float:
    """Level 0 follows the gap dynamics, every deeper level the lateral law."""
    if level < 0:
        raise ValidationError(f"negative level {level}")
    if level == 0:
        return hrs_transition_time(v, params)
    return lrs_transition_time(v)


def transition_time(state: CellState, v: float, params: DisturbParams) -> float:
    return transition_time_for_level(state.level, v, params)


def inference_lifetime(t_transition: float, eta: float,
                       pulse_width: float = DEFAULT_PULSE_WIDTH) -> float:
    """Inferences survived before drift: each inference deposits
    eta * pulse_width seconds of read stress."""
    if eta <= 0:
        raise ValidationError("eta must be > 0")
    if t_transition <= 0 or pulse_width <= 0:
        raise ValidationError("transition time and pulse width must be > 0")
    return t_transition / (eta * pulse_width)


def accumulate_stress(state: CellState, spikes: float, v: float | None,
                      params: DisturbParams, num_levels: int = 3,
                      transition_times=None) -> tuple:
    """Deposit read stress on a cell and apply any resulting transitions.

    Returns (new_state, events). A transition fires when the accumulated
    stress strictly exceeds the transition time, so a cell stressed for
    exactly its transition time has not yet drifted; residual stress carries
    over into the next state. At the deepest level stress keeps accumulating
    but no further transition is possible.

    ``transition_times`` optionally supplies the per-level transition times
    of this cell (e.g. tabulated once per crossbar position), avoiding a
    fresh physics evaluation per call; otherwise they are computed from
    ``v``.
    """
    if spikes < 0:
        raise ValidationError("spike count must be >= 0")
    if transition_times is None and v is None:
        raise ValidationError("need either a voltage or a transition table")
    stress = state.accumulated_stress + spikes * params.pulse_width
    level = state.level
    events = []
    max_level = num_levels - 1
    while level < max_level:
        t_tr = (transition_times[level] if transition_times is not None
                else transition_time_for_level(level, v, params))
        if stress <= t_tr:
            break
        stress -= t_tr
        new_level = max_level if (level == 0 and params.hrs_jump_to_max) \
            else level + 1
        events.append(TransitionEvent(from_level=level, to_level=new_level))
        level = new_level
    return CellState(level=level, accumulated_stress=stress,
                     gap=state.gap if level == 0 else None), events

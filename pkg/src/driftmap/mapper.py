"""Synapse-to-cell assignment maximizing the minimum inference lifetime.

For a cluster with pre-neurons i and post-neurons k, placing pre i on input
port j and post k on output port l programs synapse (i, k) into cell (j, l),
whose lifetime is ``e[level, j, l] / (eta'[i, k] * pulse_width)`` inferences.
Row and column assignments are injective (one neuron per port, one port per
neuron), which realizes the binary placement indicators and their product
variable implicitly: z[i,j,k,l] = x[i,j] * y[k,l].

Solvers:
  * ``solve_exact``     -- enumeration over row x column port permutations,
                           decomposed so columns are scored vectorially; the
                           correctness oracle for everything else.
  * ``solve_maxmin``    -- threshold binary search over the candidate
                           lifetime multiset, each threshold attempted with a
                           greedy construction plus swap-based local search;
                           never returns less than the random baseline.
  * ``solve_endurer``   -- same machinery on raw spike counts (every synapse
                           treated critical); the solver label differs.
  * ``solve_random``    -- seeded uniform injective assignment.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

import numpy as np

from .circuit import CellEnvironment
from .disturb import DisturbParams, hrs_closed_form_time, hrs_transition_time
from .errors import ValidationError
from .partition import Cluster

EXACT_CAP_DEFAULT = 6
BUDGET_FACTOR = 50
SILENT_ETA = 1e-12  # stand-in rate for synapses that never see a spike


@dataclass(frozen=True)
class LifetimeInstance:
    """One cluster's assignment problem in matrix form.

    ``eta[i, k]`` holds the (possibly criticality-substituted) spikes per
    inference of synapse (i, k); ``mask`` marks which (i, k) pairs carry a
    synapse; ``levels`` their programmed cell level. ``e_by_level[lev, j, l]``
    is the transition time of cell (j, l) when programmed to ``lev``.
    """

    eta: np.ndarray
    levels: np.ndarray
    mask: np.ndarray
    e_by_level: np.ndarray
    n: int
    pulse_width: float

    def __post_init__(self):
        n_pre, n_post = self.eta.shape
        if n_pre > self.n or n_post > self.n:
            raise ValidationError(
                f"cluster of {n_pre}x{n_post} does not fit an "
                f"{self.n}x{self.n} crossbar")
        if not self.mask.any():
            raise ValidationError("instance has no synapses")
        if np.any(self.eta[self.mask] <= 0):
            raise ValidationError("eta values must be > 0")
        if np.any(self.e_by_level <= 0):
            raise ValidationError("transition times must be > 0")

    @property
    def shape(self):
        return self.eta.shape


@dataclass(frozen=True)
class MappingSolution:
    rows: tuple          # pre index -> input port, injective
    cols: tuple          # post index -> output port, injective
    achieved_tau: float  # min lifetime over programmed cells, inferences
    solver: str


def lifetime_tensor(instance: LifetimeInstance) -> np.ndarray:
    """life[i, j, k, l]; +inf where (i, k) carries no synapse."""
    denom = instance.eta * instance.pulse_width
    with np.errstate(divide="ignore", invalid="ignore"):
        life = instance.e_by_level[instance.levels]  # (n_pre, n_post, N, N)
        life = life / denom[:, :, None, None]
    life = np.where(instance.mask[:, :, None, None], life, np.inf)
    return np.ascontiguousarray(np.transpose(life, (0, 2, 1, 3)))


def solution_tau(instance: LifetimeInstance, rows, cols,
                 life: np.ndarray | None = None) -> float:
    """Recompute the min lifetime of an assignment from scratch."""
    if life is None:
        life = lifetime_tensor(instance)
    return _tau_of(life, rows, cols)


def _tau_of(life, rows, cols) -> float:
    n_pre, _, n_post, _ = life.shape
    sub = life[np.arange(n_pre)[:, None], np.asarray(rows)[:, None],
               np.arange(n_post)[None, :], np.asarray(cols)[None, :]]
    return float(sub.min())


def _check_injective(instance, rows, cols):
    n_pre, n_post = instance.shape
    if len(rows) != n_pre or len(set(rows)) != n_pre or \
            any(not 0 <= r < instance.n for r in rows):
        raise ValidationError("row assignment is not injective into ports")
    if len(cols) != n_post or len(set(cols)) != n_post or \
            any(not 0 <= c < instance.n for c in cols):
        raise ValidationError("column assignment is not injective into ports")


# -- instance construction ---------------------------------------------------

def transition_time_map(level: int, voltage_map: np.ndarray,
                        params: DisturbParams) -> np.ndarray:
    """Transition time of every cell position for one programmed level.

    Levels >= 1 use the lateral-growth law directly. Level 0 uses the
    analytic gap-closure time when beta = 0 (identical to the integrator,
    which the disturb tests cross-check) and falls back to per-voltage
    integration otherwise.
    """
    v = np.asarray(voltage_map, dtype=np.float64)
    if np.any(v <= 0):
        raise ValidationError("stress voltages must be > 0")
    if level >= 1:
        return 10.0 ** (-14.7 * v + 6.7)
    closure = hrs_closed_form_time if params.beta == 0.0 \
        else hrs_transition_time
    out = np.empty_like(v)
    cache = {}
    flat = v.ravel()
    res = out.ravel()
    for idx, vv in enumerate(flat):
        if vv not in cache:
            cache[vv] = closure(float(vv), params)
        res[idx] = cache[vv]
    return out


def build_instance(cluster: Cluster, eta_by_synapse, env: CellEnvironment,
                   params: DisturbParams) -> LifetimeInstance:
    """Assemble the lifetime instance of one cluster on one crossbar.

    The programmed level travels with the synapse, so transition times are
    tabulated per (position, level) pair using the per-level stress-voltage
    maps of the environment. A synapse that never carries a spike accrues no
    read stress and can never drift; it enters with a vanishing rate so its
    lifetime is effectively unbounded and it stays off the interval-critical
    path.
    """
    n_pre = len(cluster.pre_neurons)
    n_post = len(cluster.post_neurons)
    if n_pre > env.n or n_post > env.n:
        raise ValidationError(
            f"cluster {cluster.id} ({n_pre}x{n_post}) too large for "
            f"{env.n}x{env.n} crossbar")
    pre_index = {nid: i for i, nid in enumerate(cluster.pre_neurons)}
    post_index = {nid: k for k, nid in enumerate(cluster.post_neurons)}
    eta = np.zeros((n_pre, n_post))
    levels = np.zeros((n_pre, n_post), dtype=np.int64)
    mask = np.zeros((n_pre, n_post), dtype=bool)
    eta_by_synapse = np.asarray(eta_by_synapse, dtype=np.float64)
    for s in cluster.synapses:
        i, k = pre_index[s.pre], post_index[s.post]
        eta[i, k] = max(eta_by_synapse[s.id], SILENT_ETA)
        levels[i, k] = s.level
        mask[i, k] = True

    num_levels = env.stress_voltage_by_level.shape[0]
    if int(levels.max(initial=0)) >= num_levels:
        raise ValidationError("synapse level outside environment level maps")
    e_by_level = np.empty((num_levels, env.n, env.n))
    for lev in range(num_levels):
        e_by_level[lev] = transition_time_map(
            lev, env.stress_voltage_by_level[lev], params)
    return LifetimeInstance(eta=eta, levels=levels, mask=mask,
                            e_by_level=e_by_level, n=env.n,
                            pulse_width=params.pulse_width)


# -- solvers ------------------------------------------------------------------

def solve_exact(instance: LifetimeInstance,
                cap: int = EXACT_CAP_DEFAULT) -> MappingSolution:
    """Enumerate all injective row/column placements; the oracle solver.

    For each row placement the per-(post, port) worst lifetime is reduced
    over pre-neurons once, after which every column permutation is scored
    with vector operations. Ties resolve to the lexicographically smallest
    (rows, cols) pair.
    """
    n_pre, n_post = instance.shape
    if max(n_pre, n_post, instance.n) > cap:
        raise ValidationError(
            f"instance {n_pre}x{n_post} on {instance.n} ports exceeds "
            f"exact-solver cap {cap}")
    life = lifetime_tensor(instance)
    col_perms = np.array(list(itertools.permutations(range(instance.n),
                                                     n_post)))
    k_idx = np.arange(n_post)
    best = None
    for rows in itertools.permutations(range(instance.n), n_pre):
        worst = life[np.arange(n_pre), list(rows)].min(axis=0)  # (n_post, N)
        taus = worst[k_idx[None, :], col_perms].min(axis=1)
        p = int(np.argmax(taus))  # first occurrence = lex smallest cols
        if best is None or taus[p] > best[0]:
            best = (float(taus[p]), tuple(rows), tuple(int(c)
                                                       for c in col_perms[p]))
    tau = solution_tau(instance, best[1], best[2], life)
    return MappingSolution(rows=best[1], cols=best[2], achieved_tau=tau,
                           solver="exact")


def solve_random(instance: LifetimeInstance, seed: int = 0) -> MappingSolution:
    """Uniform injective placement; the no-information baseline."""
    rng = random.Random(seed)
    n_pre, n_post = instance.shape
    rows = tuple(rng.sample(range(instance.n), n_pre))
    cols = tuple(rng.sample(range(instance.n), n_post))
    return MappingSolution(rows=rows, cols=cols,
                           achieved_tau=solution_tau(instance, rows, cols),
                           solver="random")


def _greedy_threshold(instance, life, tau):
    """Construct an assignment trying to keep every lifetime >= tau.

    Synapses in descending eta order pick the free cell with the longest
    lifetime still meeting the threshold (best available when none does),
    constrained by ports already fixed for their pre or post neuron. Cells
    just clearing the threshold are preferred over far-exceeding ones so the
    longest-lived cells stay available for hotter synapses later.
    """
    n_pre, n_post = instance.shape
    n = instance.n
    order = sorted(
        ((i, k) for i in range(n_pre) for k in range(n_post)
         if instance.mask[i, k]),
        key=lambda ik: (-instance.eta[ik[0], ik[1]], ik))
    row_of = [None] * n_pre
    col_of = [None] * n_post
    used_rows, used_cols = set(), set()

    def pick(values):
        # flat index of the tightest value >= tau, else the largest value
        meeting = np.where(values >= tau, values, np.inf)
        if np.isfinite(meeting).any():
            return int(np.argmin(meeting))
        return int(np.argmax(np.where(np.isneginf(values), -np.inf, values)))

    for i, k in order:
        if row_of[i] is not None and col_of[k] is not None:
            continue
        if row_of[i] is None and col_of[k] is None:
            grid = life[i, :, k, :].copy()
            grid[sorted(used_rows), :] = -np.inf
            grid[:, sorted(used_cols)] = -np.inf
            j, l = divmod(pick(grid.ravel()), n)
            row_of[i] = j
            col_of[k] = l
            used_rows.add(j)
            used_cols.add(l)
        elif row_of[i] is None:
            vec = life[i, :, k, col_of[k]].copy()
            vec[sorted(used_rows)] = -np.inf
            j = pick(vec)
            row_of[i] = j
            used_rows.add(j)
        else:
            vec = life[i, row_of[i], k, :].copy()
            vec[sorted(used_cols)] = -np.inf
            l = pick(vec)
            col_of[k] = l
            used_cols.add(l)
    free_rows = [p for p in range(n) if p not in used_rows]
    free_cols = [p for p in range(n) if p not in used_cols]
    for i in range(n_pre):
        if row_of[i] is None:
            row_of[i] = free_rows.pop(0)
    for k in range(n_post):
        if col_of[k] is None:
            col_of[k] = free_cols.pop(0)
    return row_of, col_of


def _perfect_matching(ok):
    """Kuhn augmenting-path matching of every row of ``ok`` to a column.

    Returns column-per-row, or None when no perfect matching exists.
    """
    m, n = ok.shape
    owner = [-1] * n  # column -> row

    def augment(k, seen):
        for l in range(n):
            if ok[k, l] and not seen[l]:
                seen[l] = True
                if owner[l] == -1 or augment(owner[l], seen):
                    owner[l] = k
                    return True
        return False

    for k in range(m):
        if not augment(k, [False] * n):
            return None
    cols = [-1] * m
    for l, k in enumerate(owner):
        if k != -1:
            cols[k] = l
    return cols


def _bottleneck_assign(score):
    """Injective assignment maximizing the minimum score, via threshold
    matching: binary search over the score values, feasibility by bipartite
    matching."""
    finite = score[np.isfinite(score)]
    if finite.size == 0:
        return list(range(score.shape[0]))
    vals = np.unique(finite)
    lo, hi = 0, len(vals) - 1
    best = _perfect_matching(score >= vals[0])
    if best is None:
        best = list(range(score.shape[0]))
    while lo <= hi:
        mid = (lo + hi) // 2
        match = _perfect_matching(score >= vals[mid])
        if match is not None:
            best = match
            lo = mid + 1
        else:
            hi = mid - 1
    return best


def _alternating_matching(life, rows, cols, max_rounds=24):
    """Alternately re-place one side optimally against the other.

    For fixed rows the column placement is an exact threshold-matching
    (bottleneck assignment) over the per-post worst lifetimes, and vice
    versa; each half-step is optimal, so the objective never decreases and
    the alternation reaches a fixpoint.
    """
    n_pre, _, n_post, _ = life.shape
    rows = list(rows)
    cols = list(cols)
    tau = _tau_of(life, rows, cols)
    for _ in range(max_rounds):
        q = life[np.arange(n_pre), rows].min(axis=0)       # (n_post, N)
        cols_new = _bottleneck_assign(q)
        r = life[:, :, np.arange(n_post), cols_new].min(axis=2)  # (n_pre, N)
        rows_new = _bottleneck_assign(r)
        tau_new = _tau_of(life, rows_new, cols_new)
        if tau_new <= tau:
            if tau_new == tau:
                rows, cols = rows_new, cols_new
            break
        rows, cols, tau = rows_new, cols_new, tau_new
    return rows, cols, tau


def _score_of(life, rows, cols):
    """(min lifetime, -count at the minimum): plateau-aware move ranking."""
    n_pre, _, n_post, _ = life.shape
    sub = life[np.arange(n_pre)[:, None], np.asarray(rows)[:, None],
               np.arange(n_post)[None, :], np.asarray(cols)[None, :]]
    t = sub.min()
    return (float(t), -int(np.sum(sub == t)))


def _apply_port(assign, a, port):
    """Move entry a to ``port``, swapping with the current holder if any.
    Returns an undo closure."""
    old = assign[a]
    if port in assign:
        b = assign.index(port)
        assign[a], assign[b] = port, old

        def undo():
            assign[a], assign[b] = old, port
    else:
        assign[a] = port

        def undo():
            assign[a] = old
    return undo


def _descend(life, rows, cols, n, budget):
    """First-improvement local search: row swaps, column swaps, and joint
    row-column moves of the bottleneck synapse.

    Moves that keep the minimum but shrink the set of bottleneck cells are
    accepted too, which lets the search drain plateaus that a pure min
    comparison would freeze on.
    """
    rows = list(rows)
    cols = list(cols)
    n_pre, n_post = len(rows), len(cols)
    score = _score_of(life, rows, cols)
    evals = 0
    improved = True
    while improved and evals < budget:
        improved = False
        # single-side sweeps
        for assign in (rows, cols):
            for a in range(len(assign)):
                for port in range(n):
                    if port == assign[a] or evals >= budget:
                        continue
                    undo = _apply_port(assign, a, port)
                    cand = _score_of(life, rows, cols)
                    evals += 1
                    if cand > score:
                        score = cand
                        improved = True
                    else:
                        undo()
            if improved:
                break
        if improved or evals >= budget:
            continue
        # joint move of the worst synapse's row and column together
        sub = life[np.arange(n_pre)[:, None], np.asarray(rows)[:, None],
                   np.arange(n_post)[None, :], np.asarray(cols)[None, :]]
        bi, bk = map(int, np.argwhere(sub == sub.min())[0])
        for j2 in range(n):
            for l2 in range(n):
                if evals >= budget or (j2 == rows[bi] and l2 == cols[bk]):
                    continue
                undo_r = _apply_port(rows, bi, j2)
                undo_c = _apply_port(cols, bk, l2)
                cand = _score_of(life, rows, cols)
                evals += 1
                if cand > score:
                    score = cand
                    improved = True
                    break
                undo_c()
                undo_r()
            if improved:
                break
    return rows, cols, score[0], evals


def solve_maxmin(instance: LifetimeInstance, seed: int = 0,
                 budget: int | None = None,
                 extra_candidates=()) -> MappingSolution:
    """Threshold binary search + greedy matching + local search.

    The candidate thresholds are the achievable lifetimes themselves, so the
    search is exact over the discrete candidate set rather than epsilon
    terminated. Every returned solution is at least as good as the seeded
    random baseline and any supplied warm-start assignments.
    """
    life = lifetime_tensor(instance)
    n = instance.n
    if budget is None:
        budget = BUDGET_FACTOR * n * n
    best = None

    def consider(rows, cols):
        nonlocal best
        t = _tau_of(life, rows, cols)
        entry = (t, tuple(rows), tuple(cols))
        if best is None or t > best[0] or \
                (t == best[0] and entry[1:] < best[1:]):
            best = entry
        return t

    def attempt(rows, cols):
        rows, cols, _ = _alternating_matching(life, rows, cols)
        rows, cols, achieved, _ = _descend(life, rows, cols, n, budget)
        rows, cols, achieved = _alternating_matching(life, rows, cols)
        consider(rows, cols)
        return achieved

    finite = np.unique(life[np.isfinite(life)])
    lo, hi = 0, len(finite) - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        target = float(finite[mid])
        rows, cols = _greedy_threshold(instance, life, target)
        achieved = attempt(rows, cols)
        if achieved >= target:
            lo = mid + 1
        else:
            hi = mid - 1

    baseline = solve_random(instance, seed)
    consider(baseline.rows, baseline.cols)
    attempt(baseline.rows, baseline.cols)
    # seeded restarts and perturbation kicks of the incumbent escape local
    # optima the deterministic attempts share; small instances afford more
    rng = random.Random(seed)
    n_pre, n_post = instance.shape
    restarts = 16 if n <= 8 else 2
    for _ in range(restarts):
        attempt(rng.sample(range(n), n_pre), rng.sample(range(n), n_post))
    stale = 0
    for kick_round in range(4 * restarts):
        if stale >= restarts:
            break
        before = best[0]
        rows = list(best[1])
        cols = list(best[2])
        for _ in range(2 + 2 * (kick_round % 2)):  # alternate small/large kicks
            _apply_port(rows, rng.randrange(n_pre), rng.randrange(n))
            _apply_port(cols, rng.randrange(n_post), rng.randrange(n))
        attempt(rows, cols)
        stale = 0 if best[0] > before else stale + 1
    for rows, cols in extra_candidates:
        _check_injective(instance, rows, cols)
        consider(rows, cols)
        attempt(rows, cols)

    return MappingSolution(rows=best[1], cols=best[2], achieved_tau=best[0],
                           solver="heuristic")


def solve_endurer(instance: LifetimeInstance, seed: int = 0,
                  budget: int | None = None) -> MappingSolution:
    """Max-min solve on raw spike counts (no criticality substitution).

    The caller builds the instance from unmodified eta; the optimization
    machinery is shared with solve_maxmin.
    """
    sol = solve_maxmin(instance, seed=seed, budget=budget)
    return MappingSolution(rows=sol.rows, cols=sol.cols,
                           achieved_tau=sol.achieved_tau, solver="endurer")


def aggregate_trpi(solutions) -> float:
    """Reprogram interval of a full mapping: the worst cluster minimum."""
    solutions = list(solutions)
    if not solutions:
        raise ValidationError("no cluster solutions to aggregate")
    return min(s.achieved_tau for s in solutions)


# -- placement indicators ------------------------------------------------------

def assignment_indicators(rows, cols, n: int):
    """Binary placement matrices x, y and their product tensor z.

    x[i, j] = 1 iff pre i sits on port j; y[k, l] likewise for posts;
    z[i, j, k, l] = x[i, j] * y[k, l] marks synapse (i, k) landing in cell
    (j, l). z satisfies the linearization system z <= x, z <= y,
    z >= x + y - 1 over binary x, y.
    """
    x = np.zeros((len(rows), n), dtype=np.int64)
    x[np.arange(len(rows)), list(rows)] = 1
    y = np.zeros((len(cols), n), dtype=np.int64)
    y[np.arange(len(cols)), list(cols)] = 1
    z = np.einsum("ij,kl->ijkl", x, y)
    return x, y, z


def linearization_holds(x, y, z) -> bool:
    """Check z <= x, z <= y, z >= x + y - 1 for binary indicator tensors."""
    x4 = x[:, :, None, None]
    y4 = y[None, None, :, :]
    return bool(np.all(z <= x4) and np.all(z <= y4)
                and np.all(z >= x4 + y4 - 1))


# -- cluster-level orchestration ----------------------------------------------

@dataclass(frozen=True)
class ClusterMapping:
    cluster_id: int
    rows: dict           # pre neuron id -> input port
    cols: dict           # post neuron id -> output port
    tau_inferences: float
    solver: str

    def to_dict(self) -> dict:
        return {
            "id": self.cluster_id,
            "rows": {str(nid): port for nid, port in sorted(self.rows.items())},
            "cols": {str(nid): port for nid, port in sorted(self.cols.items())},
            "tau_inferences": self.tau_inferences,
            "solver": self.solver,
        }


def cluster_mapping_from_dict(doc: dict) -> ClusterMapping:
    try:
        return ClusterMapping(
            cluster_id=int(doc["id"]),
            rows={int(k): int(v) for k, v in doc["rows"].items()},
            cols={int(k): int(v) for k, v in doc["cols"].items()},
            tau_inferences=float(doc["tau_inferences"]),
            solver=str(doc["solver"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad mapping document: {exc}")


MODE_SOLVER_LABEL = {
    "proposed": "heuristic",
    "endurer": "endurer",
    "random": "random",
    "exact": "exact",
}


def solve_cluster(cluster: Cluster, eta_by_synapse, env: CellEnvironment,
                  params: DisturbParams, mode: str, seed: int = 0,
                  exact_cap: int = EXACT_CAP_DEFAULT,
                  budget: int | None = None,
                  extra_candidates=()) -> ClusterMapping:
    """Build the instance for one cluster and run the requested solver."""
    if mode not in MODE_SOLVER_LABEL:
        raise ValidationError(f"unknown solver mode {mode!r}")
    instance = build_instance(cluster, eta_by_synapse, env, params)
    if mode == "exact":
        sol = solve_exact(instance, cap=exact_cap)
    elif mode == "random":
        sol = solve_random(instance, seed)
    elif mode == "endurer":
        sol = solve_endurer(instance, seed=seed, budget=budget)
    else:
        sol = solve_maxmin(instance, seed=seed, budget=budget,
                           extra_candidates=extra_candidates)
    rows = {nid: int(port) for nid, port in zip(cluster.pre_neurons, sol.rows)}
    cols = {nid: int(port) for nid, port in zip(cluster.post_neurons,
                                                sol.cols)}
    return ClusterMapping(cluster_id=cluster.id, rows=rows, cols=cols,
                          tau_inferences=sol.achieved_tau,
                          solver=MODE_SOLVER_LABEL[mode])

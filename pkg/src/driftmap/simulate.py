"""Inference-stream simulation with drift accumulation and reprogramming.

The simulator streams samples round-robin through a mapped model, deposits
read stress on every cell, applies level transitions to the live weights and
periodically restores the programmed state. Accuracy is tracked over a
sliding window; the reprogramming overhead is the ratio of the reprogram
time to the reprogram interval.

Stress accounting modes:
  * ``mean``   (default) -- each inference deposits ``eta * pulse_width``
    seconds per cell, the same average-rate bookkeeping the lifetime and
    reprogram-interval math uses. Reprogramming at or below the physical
    interval then provably produces zero drift events.
  * ``actual`` -- deposits follow the per-sample spike counts; burstier, and
    the zero-drift guarantee holds only in expectation.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass

import numpy as np

from .circuit import CellEnvironment
from .disturb import CellState, DisturbParams, accumulate_stress
from .errors import ValidationError
from .mapper import solve_cluster, transition_time_map
from .model import Dataset, SnnModel, accuracy, run_inference_batch
from .partition import partition_model
from .profiler import classify_criticality, effective_eta, profile_spikes

DEFAULT_INFERENCE_PERIOD = 0.010  # seconds per inference for Eq-style ratios
DEFAULT_WINDOW = 100


@dataclass(frozen=True)
class ReprogramCostModel:
    channel_bandwidth: float = 1e9   # bits/s from main memory to the chip
    bits_per_cell: int = 2
    pv_latency: float = 10e-6        # seconds per program-and-verify step
    pv_parallelism: int = 128        # cells programmed concurrently

    def __post_init__(self):
        for name in ("channel_bandwidth", "bits_per_cell", "pv_latency",
                     "pv_parallelism"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"cost model field {name} must be > 0")


@dataclass(frozen=True)
class ReprogramPolicy:
    kind: str              # "never" | "every"
    every: int | None = None

    def __post_init__(self):
        if self.kind not in ("never", "every"):
            raise ValidationError(f"unknown policy kind {self.kind!r}")
        if self.kind == "every" and (self.every is None or self.every < 1):
            raise ValidationError("periodic policy needs every >= 1")


@dataclass(frozen=True)
class Mapping:
    """Full-model mapping: one ClusterMapping per cluster plus its interval."""
    clusters: tuple
    trpi_inferences: float

    def to_dict(self) -> dict:
        return {
            "clusters": [c.to_dict() for c in self.clusters],
            "tRPI_inferences": self.trpi_inferences,
        }


def estimate_trpt(num_cells: int, cost: ReprogramCostModel) -> float:
    """Seconds to push all weights over the channel and program-and-verify."""
    if num_cells < 1:
        raise ValidationError("need at least one cell")
    transfer = num_cells * cost.bits_per_cell / cost.channel_bandwidth
    pv = math.ceil(num_cells / cost.pv_parallelism) * cost.pv_latency
    return transfer + pv


@dataclass(frozen=True)
class TimelinePoint:
    inference_index: int
    accuracy_window: float
    drift_events: int      # transitions applied at this inference
    reprogram_event: bool


@dataclass(frozen=True)
class SimulationReport:
    timeline: tuple
    trpt_seconds: float
    trpi_inferences: float | None     # reprogram interval in force, if any
    trpi_seconds: float | None
    overhead: float
    final_accuracy: float
    baseline_accuracy: float
    drift_events: int
    reprogram_events: int
    physical_trpi: float              # min raw-eta cell lifetime of the mapping
    mapping_trpi: float               # interval recorded in the mapping file
    policy: str
    seed: int
    stream_length: int
    stress_accounting: str
    inference_period: float
    window: int

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "seed": self.seed,
            "stream_length": self.stream_length,
            "stress_accounting": self.stress_accounting,
            "inference_period": self.inference_period,
            "window": self.window,
            "baseline_accuracy": self.baseline_accuracy,
            "final_accuracy": self.final_accuracy,
            "tRPT_seconds": self.trpt_seconds,
            "tRPI_inferences": self.trpi_inferences,
            "tRPI_seconds": self.trpi_seconds,
            "overhead": self.overhead,
            "drift_events": self.drift_events,
            "reprogram_events": self.reprogram_events,
            "physical_tRPI_inferences": self.physical_trpi,
            "mapping_tRPI_inferences": self.mapping_trpi,
            "timeline": [
                {"inference_index": p.inference_index,
                 "accuracy_window": p.accuracy_window,
                 "drift_events": p.drift_events,
                 "reprogram_event": p.reprogram_event}
                for p in self.timeline
            ],
        }

    def timeline_csv_rows(self):
        """Rows for 'inference_index,window_accuracy,drift_events_cum,
        reprogram_events_cum'."""
        drift_cum = 0
        reprog_cum = 0
        for p in self.timeline:
            drift_cum += p.drift_events
            reprog_cum += 1 if p.reprogram_event else 0
            yield (p.inference_index, p.accuracy_window, drift_cum, reprog_cum)


def compile_mapping(model: SnnModel, mapping: Mapping):
    """Resolve every synapse to its crossbar cell.

    A post neuron lives in exactly one cluster; its fan-in synapses follow.
    Returns (cell_of, cluster_of) arrays indexed by synapse id.
    """
    col_owner = {}
    for cm in mapping.clusters:
        for nid in cm.cols:
            if nid in col_owner:
                raise ValidationError(
                    f"post neuron {nid} mapped in two clusters")
            col_owner[nid] = cm
    cells = np.empty((model.num_synapses, 2), dtype=np.int64)
    cluster_of = np.empty(model.num_synapses, dtype=np.int64)
    for s in model.synapses:
        cm = col_owner.get(s.post)
        if cm is None or s.pre not in cm.rows:
            raise ValidationError(
                f"mapping does not cover synapse {s.id} "
                f"({s.pre}->{s.post})")
        cells[s.id] = (cm.rows[s.pre], cm.cols[s.post])
        cluster_of[s.id] = cm.cluster_id
    return cells, cluster_of


def physical_trpi(model: SnnModel, eta_raw, cells, trans_table,
                  pulse_width: float) -> float:
    """Minimum raw-eta lifetime over programmed cells, in inferences."""
    best = math.inf
    for s in model.synapses:
        if eta_raw[s.id] <= 0:
            continue  # a never-spiking synapse accrues no stress
        j, l = cells[s.id]
        life = trans_table[s.level, j, l] / (eta_raw[s.id] * pulse_width)
        best = min(best, life)
    return best


def run_simulation(model: SnnModel, dataset: Dataset, mapping: Mapping,
                   env: CellEnvironment, params: DisturbParams,
                   policy: ReprogramPolicy, stream_length: int, seed: int = 0,
                   cost_model: ReprogramCostModel | None = None,
                   inference_period: float = DEFAULT_INFERENCE_PERIOD,
                   window: int = DEFAULT_WINDOW,
                   stress_accounting: str = "mean") -> SimulationReport:
    """Stream inferences against the mapped model and track drift.

    Samples are drawn round-robin in a seed-shuffled order. Inference always
    uses the live (possibly drifted) levels; every transition event emitted
    by the stress bookkeeping is applied to the live model, and a periodic
    policy restores all programmed levels every ``every`` inferences.
    """
    if stream_length < 1:
        raise ValidationError("stream length must be >= 1")
    if stress_accounting not in ("mean", "actual"):
        raise ValidationError(f"unknown stress accounting "
                              f"{stress_accounting!r}")
    if cost_model is None:
        cost_model = ReprogramCostModel()
    num_levels = env.stress_voltage_by_level.shape[0]
    if model.encoding.num_levels > num_levels:
        raise ValidationError("environment lacks voltage maps for some "
                              "weight levels")

    cells, _ = compile_mapping(model, mapping)
    trans_table = np.stack([
        transition_time_map(lev, env.stress_voltage_by_level[lev], params)
        for lev in range(num_levels)])

    profile = profile_spikes(model, dataset)
    eta_raw = profile.per_synapse_eta
    phys_trpi = physical_trpi(model, eta_raw, cells, trans_table,
                              params.pulse_width)

    programmed = model.levels()
    live = programmed.copy()
    # per-synapse transition-time ladder at its own cell
    ladder = [tuple(trans_table[:, j, l]) for j, l in cells]
    states = [CellState(level=int(lvl)) for lvl in programmed]

    inputs = dataset.input_matrix()
    labels = dataset.labels()
    order = list(range(len(dataset)))
    random.Random(seed).shuffle(order)

    # predictions and per-sample spikes only change when levels change
    state_cache = {}

    def batch_for(levels):
        key = tuple(levels)
        if key not in state_cache:
            spikes, _, predicted = run_inference_batch(model, inputs,
                                                       levels=levels)
            state_cache[key] = (spikes, predicted)
        return state_cache[key]

    recent = deque(maxlen=window)
    timeline = []
    drift_total = 0
    reprogram_total = 0

    for t in range(1, stream_length + 1):
        sample_idx = order[(t - 1) % len(order)]
        spikes_all, predicted_all = batch_for(live)
        correct = bool(predicted_all[sample_idx] == labels[sample_idx])
        recent.append(correct)

        if stress_accounting == "mean":
            deposit = eta_raw
        else:
            deposit = spikes_all[sample_idx]

        step_events = 0
        for sid in range(model.num_synapses):
            if deposit[sid] <= 0:
                continue
            states[sid], events = accumulate_stress(
                states[sid], float(deposit[sid]), None, params,
                num_levels=model.encoding.num_levels,
                transition_times=ladder[sid])
            if events:
                live[sid] = events[-1].to_level
                step_events += len(events)
        drift_total += step_events

        reprogrammed = False
        if policy.kind == "every" and t % policy.every == 0:
            live = programmed.copy()
            states = [CellState(level=int(lvl)) for lvl in programmed]
            reprogrammed = True
            reprogram_total += 1

        timeline.append(TimelinePoint(
            inference_index=t,
            accuracy_window=float(np.mean(recent)),
            drift_events=step_events,
            reprogram_event=reprogrammed))

    trpt = estimate_trpt(model.num_synapses, cost_model)
    if policy.kind == "every":
        trpi_inf = float(policy.every)
        trpi_sec = trpi_inf * inference_period
        overhead = trpt / trpi_sec
        policy_desc = f"every={policy.every}"
    else:
        trpi_inf = None
        trpi_sec = None
        overhead = 0.0
        policy_desc = "never"

    return SimulationReport(
        timeline=tuple(timeline),
        trpt_seconds=trpt,
        trpi_inferences=trpi_inf,
        trpi_seconds=trpi_sec,
        overhead=overhead,
        final_accuracy=timeline[-1].accuracy_window,
        baseline_accuracy=accuracy(model, dataset),
        drift_events=drift_total,
        reprogram_events=reprogram_total,
        physical_trpi=phys_trpi,
        mapping_trpi=mapping.trpi_inferences,
        policy=policy_desc,
        seed=seed,
        stream_length=stream_length,
        stress_accounting=stress_accounting,
        inference_period=inference_period,
        window=window)


# -- mode comparison -----------------------------------------------------------

COMPARE_MODES = ("random", "endurer", "proposed")


def build_mode_mappings(model: SnnModel, dataset: Dataset,
                        env: CellEnvironment, params: DisturbParams,
                        seed: int = 0, epsilon: float = 1e-6,
                        threshold: float = 0.01,
                        budget: int | None = None,
                        modes=COMPARE_MODES) -> dict:
    """Partition once, then map per mode; returns mode -> Mapping.

    The proposed solve warm-starts from the endurer assignment of the same
    cluster, so with pointwise eta' <= eta its interval can never fall below
    the endurer interval.
    """
    profile = profile_spikes(model, dataset)
    clusters = partition_model(model, profile, env.n, seed)
    eta_raw = profile.per_synapse_eta
    need_eff = any(m == "proposed" for m in modes)
    if need_eff:
        crit = classify_criticality(model, dataset, threshold)
        eta_eff = effective_eta(profile, crit, epsilon)

    out = {}
    for mode in modes:
        per_cluster = []
        for c in clusters:
            if mode == "proposed":
                endurer_cm = solve_cluster(c, eta_raw, env, params,
                                           "endurer", seed=seed, budget=budget)
                warm_rows = tuple(endurer_cm.rows[nid]
                                  for nid in c.pre_neurons)
                warm_cols = tuple(endurer_cm.cols[nid]
                                  for nid in c.post_neurons)
                cm = solve_cluster(c, eta_eff, env, params, "proposed",
                                   seed=seed, budget=budget,
                                   extra_candidates=((warm_rows, warm_cols),))
            else:
                cm = solve_cluster(c, eta_raw, env, params, mode,
                                   seed=seed, budget=budget)
            per_cluster.append(cm)
        trpi = min(cm.tau_inferences for cm in per_cluster)
        out[mode] = Mapping(clusters=tuple(per_cluster), trpi_inferences=trpi)
    return out


def compare_modes(model: SnnModel, dataset: Dataset, env: CellEnvironment,
                  params: DisturbParams, seed: int = 0,
                  epsilon: float = 1e-6, threshold: float = 0.01,
                  cost_model: ReprogramCostModel | None = None,
                  stream_length: int | None = None,
                  inference_period: float = DEFAULT_INFERENCE_PERIOD,
                  window: int = DEFAULT_WINDOW,
                  budget: int | None = None,
                  stress_accounting: str = "mean",
                  modes=COMPARE_MODES) -> dict:
    """Run the full pipeline per mode and tabulate interval/overhead/accuracy.

    The random placement simulates without reprogramming (no overhead, drift
    uncorrected); the drift-aware modes reprogram at their own interval.
    """
    mappings = build_mode_mappings(model, dataset, env, params, seed=seed,
                                   epsilon=epsilon, threshold=threshold,
                                   budget=budget, modes=modes)
    if cost_model is None:
        cost_model = ReprogramCostModel()
    if stream_length is None:
        periodic = [m.trpi_inferences for mode, m in mappings.items()
                    if mode != "random"]
        horizon = max(periodic) if periodic else 1000.0
        stream_length = int(min(20000, max(200, 2 * math.ceil(horizon))))

    rows = []
    reports = {}
    for mode in modes:
        mapping = mappings[mode]
        if mode == "random":
            policy = ReprogramPolicy(kind="never")
        else:
            policy = ReprogramPolicy(
                kind="every", every=max(1, math.floor(mapping.trpi_inferences)))
        report = run_simulation(
            model, dataset, mapping, env, params, policy, stream_length,
            seed=seed, cost_model=cost_model,
            inference_period=inference_period, window=window,
            stress_accounting=stress_accounting)
        reports[mode] = report
        rows.append({
            "mode": mode,
            "tRPI": mapping.trpi_inferences,
            "tRPT": report.trpt_seconds,
            "overhead": report.overhead,
            "final_accuracy": report.final_accuracy,
        })

    result = {"rows": rows, "stream_length": stream_length, "seed": seed}
    if "proposed" in reports and "endurer" in reports:
        ov_p = reports["proposed"].overhead
        ov_e = reports["endurer"].overhead
        result["overhead_reduction"] = (1.0 - ov_p / ov_e) if ov_e > 0 else 0.0
    result["reports"] = reports
    return result

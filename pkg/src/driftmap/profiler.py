"""Per-synapse spike statistics and synapse criticality classification.

The profiler measures, for each synapse, the average number of spikes it
carries per inference over a dataset. The criticality sweep perturbs one
synapse level at a time by each of {-2, -1, +1, +2} and marks synapses whose
perturbation drops accuracy by at least a threshold. The mapper consumes the
"effective" spike counts in which non-critical synapses are replaced by a
tiny epsilon, pushing their lifetimes out of the reprogram-interval minimum.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import Dataset, SnnModel, accuracy, run_inference_batch

DELTAS = (-2, -1, 1, 2)
DEFAULT_THRESHOLD = 0.01
DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class SpikeProfile:
    per_synapse_eta: np.ndarray   # average spikes per inference, by synapse id
    num_images: int
    num_synapses: int
    avg_spikes_per_image: float   # total spikes / (images * synapses)
    histogram: dict               # bucket label ("0-1", "1-2", ...) -> count

    def to_dict(self) -> dict:
        return {
            "eta": [float(v) for v in self.per_synapse_eta],
            "num_images": self.num_images,
            "num_synapses": self.num_synapses,
            "avg_spikes_per_image": self.avg_spikes_per_image,
            "histogram": dict(self.histogram),
        }


@dataclass(frozen=True)
class CriticalityReport:
    critical: np.ndarray          # bool per synapse id
    per_delta_fraction: dict      # delta -> fraction of synapses above threshold
    threshold: float

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "critical": [bool(b) for b in self.critical],
            "fractions": {f"{d:+d}" if d > 0 else str(d): float(f)
                          for d, f in self.per_delta_fraction.items()},
        }


def _bucket_label(lo: int) -> str:
    return f"{lo}-{lo + 1}"


def profile_spikes(model: SnnModel, dataset: Dataset) -> SpikeProfile:
    """Average spikes per inference through each synapse.

    eta[s] = (sum over images of spikes through s) / num_images. The
    aggregate is the identity total_spikes / (num_images * num_synapses).
    """
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    spikes, _, _ = run_inference_batch(model, dataset.input_matrix())
    totals = spikes.sum(axis=0)  # integer, exact
    num_images = len(dataset)
    eta = totals / num_images
    avg = float(totals.sum()) / (num_images * model.num_synapses)

    histogram: dict = {}
    for value in eta:
        lo = int(math.floor(value))
        label = _bucket_label(lo)
        histogram[label] = histogram.get(label, 0) + 1

    return SpikeProfile(
        per_synapse_eta=eta,
        num_images=num_images,
        num_synapses=model.num_synapses,
        avg_spikes_per_image=avg,
        histogram=histogram,
    )


def _delta_drops(model, inputs, labels, baseline, synapse_id):
    """Accuracy drop per delta for one synapse; clamped no-ops drop 0."""
    levels = model.levels()
    base_level = int(levels[synapse_id])
    drops = {}
    for delta in DELTAS:
        new_level = model.encoding.clamp(base_level + delta)
        if new_level == base_level:
            drops[delta] = 0.0
            continue
        levels[synapse_id] = new_level
        _, _, predicted = run_inference_batch(model, inputs, levels=levels)
        levels[synapse_id] = base_level
        drops[delta] = baseline - float(np.mean(predicted == labels))
    return drops


_POOL_STATE: dict = {}


def _pool_init(model, inputs, labels, baseline):
    _POOL_STATE["args"] = (model, inputs, labels, baseline)


def _pool_worker(synapse_id):
    model, inputs, labels, baseline = _POOL_STATE["args"]
    return _delta_drops(model, inputs, labels, baseline, synapse_id)


def classify_criticality(model: SnnModel, dataset: Dataset,
                         threshold: float = DEFAULT_THRESHOLD,
                         jobs: int = 1) -> CriticalityReport:
    """Single-fault perturbation sweep over all synapses.

    A synapse is critical iff any of the four level shifts drops accuracy on
    the full dataset by at least ``threshold``. Synapses whose shift clamps
    to the original level cannot drop accuracy and are never counted. The
    sweep is independent per synapse; ``jobs > 1`` fans it out over worker
    processes with a reduction ordered by synapse id.
    """
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    inputs = dataset.input_matrix()
    labels = dataset.labels()
    baseline = accuracy(model, dataset)

    if jobs > 1:
        with ProcessPoolExecutor(
                max_workers=jobs, initializer=_pool_init,
                initargs=(model, inputs, labels, baseline)) as pool:
            all_drops = list(pool.map(_pool_worker,
                                      range(model.num_synapses),
                                      chunksize=8))
    else:
        all_drops = [_delta_drops(model, inputs, labels, baseline, sid)
                     for sid in range(model.num_synapses)]

    critical = np.zeros(model.num_synapses, dtype=bool)
    counts = {d: 0 for d in DELTAS}
    for sid, drops in enumerate(all_drops):
        for delta, drop in drops.items():
            if drop >= threshold:
                counts[delta] += 1
                critical[sid] = True
    fractions = {d: counts[d] / model.num_synapses for d in DELTAS}
    return CriticalityReport(critical=critical,
                             per_delta_fraction=fractions,
                             threshold=threshold)


def effective_eta(profile: SpikeProfile, crit: CriticalityReport,
                  epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Spike counts with non-critical synapses replaced by epsilon.

    Epsilon must sit well below every critical synapse's eta so those
    synapses drop out of the lifetime minimum; a warning is emitted when the
    provided epsilon does not.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be > 0")
    eta = np.asarray(profile.per_synapse_eta, dtype=np.float64)
    if len(eta) != len(crit.critical):
        raise ValidationError("profile and criticality report disagree on "
                              "synapse count")
    crit_eta = eta[crit.critical]
    if crit_eta.size and epsilon >= crit_eta.min():
        warnings.warn(
            f"epsilon {epsilon} is not below the smallest critical eta "
            f"{crit_eta.min():.6g}; non-critical synapses may stay on the "
            f"lifetime-critical path", stacklevel=2)
    out = eta.copy()
    out[~crit.critical] = epsilon
    return out


def profile_from_dict(doc: dict) -> SpikeProfile:
    try:
        eta = np.asarray(doc["eta"], dtype=np.float64)
        return SpikeProfile(
            per_synapse_eta=eta,
            num_images=int(doc["num_images"]),
            num_synapses=int(doc.get("num_synapses", len(eta))),
            avg_spikes_per_image=float(doc["avg_spikes_per_image"]),
            histogram=dict(doc.get("histogram", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad profile document: {exc}")


def criticality_from_dict(doc: dict) -> CriticalityReport:
    try:
        fractions = {int(k): float(v) for k, v in doc["fractions"].items()}
        return CriticalityReport(
            critical=np.asarray(doc["critical"], dtype=bool),
            per_delta_fraction=fractions,
            threshold=float(doc["threshold"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad criticality document: {exc}")

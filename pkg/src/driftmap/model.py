"""Feedforward SNN data model with ternary synapse levels and rate inference.

Synaptic weights are stored as discrete resistance levels of a multilevel
memory cell; three of the levels encode the ternary weights {-1, 0, +1} via
``weight = level - 1``. Inference is deterministic rate semantics: every
neuron emits a spike count, no spike timing is modeled.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError

R_MAX_DEFAULT = 1024

NEURON_KINDS = ("input", "hidden", "output")


@dataclass(frozen=True)
class LevelEncoding:
    """Mapping between cell levels and synaptic weights.

    Level 0 is the high-resistance state; deeper levels are progressively
    lower-resistance. Decoding is ``weight = level - 1``, so drift past either
    end of the level range clamps: a weight-(+1) synapse is unaffected by
    further positive drift, a weight-(-1) synapse by further negative drift.
    """

    num_levels: int = 3

    def __post_init__(self):
        if self.num_levels < 2:
            raise ValidationError("level encoding needs at least 2 levels")

    @property
    def max_level(self) -> int:
        return self.num_levels - 1

    def decode(self, level: int) -> int:
        return level - 1

    def clamp(self, level: int) -> int:
        return max(0, min(self.max_level, level))


@dataclass(frozen=True)
class Neuron:
    id: int
    kind: str
    threshold: float = 1.0


@dataclass(frozen=True)
class Synapse:
    id: int
    pre: int
    post: int
    level: int


@dataclass(frozen=True)
class InferenceResult:
    per_synapse_spikes: np.ndarray  # spikes presented to each synapse, by id
    output_counts: np.ndarray       # spike counts of output neurons, id order
    predicted: int                  # argmax class, ties -> lowest neuron id


class SnnModel:
    """Validated feedforward network of neurons and leveled synapses."""

    def __init__(self, neurons, synapses, encoding=LevelEncoding(),
                 r_max=R_MAX_DEFAULT):
        self.neurons = tuple(sorted(neurons, key=lambda n: n.id))
        self.synapses = tuple(sorted(synapses, key=lambda s: s.id))
        self.encoding = encoding
        self.r_max = int(r_max)
        self._validate()
        self.input_ids = tuple(n.id for n in self.neurons if n.kind == "input")
        self.output_ids = tuple(n.id for n in self.neurons if n.kind == "output")
        self.topo_order = self._topological_order()
        # in_synapses[nid] -> list of synapses terminating at nid
        self.in_synapses = {n.id: [] for n in self.neurons}
        for s in self.synapses:
            self.in_synapses[s.post].append(s)

    # -- validation ---------------------------------------------------------

    def _validate(self):
        ids = [n.id for n in self.neurons]
        if ids != list(range(len(ids))):
            raise ValidationError(
                f"neuron ids must be dense 0..{len(ids) - 1}, got {ids[:8]}...")
        for n in self.neurons:
            if n.kind not in NEURON_KINDS:
                raise ValidationError(f"neuron {n.id}: unknown kind {n.kind!r}")
            if not (isinstance(n.threshold, (int, float)) and n.threshold > 0):
                raise ValidationError(f"neuron {n.id}: threshold must be > 0")
        sids = [s.id for s in self.synapses]
        if sids != list(range(len(sids))):
            raise ValidationError(
                f"synapse ids must be dense 0..{len(sids) - 1}")
        n_neurons = len(self.neurons)
        for s in self.synapses:
            for end in (s.pre, s.post):
                if not 0 <= end < n_neurons:
                    raise ValidationError(
                        f"synapse {s.id}: dangling reference to neuron {end}")
            if s.pre == s.post:
                raise ValidationError(f"synapse {s.id}: self-loop on {s.pre}")
            if not 0 <= s.level <= self.encoding.max_level:
                raise ValidationError(
                    f"synapse {s.id}: weight level {s.level} out of range "
                    f"[0, {self.encoding.max_level}]")

    def _topological_order(self):
        n = len(self.neurons)
        indeg = [0] * n
        succ = [[] for _ in range(n)]
        for s in self.synapses:
            indeg[s.post] += 1
            succ[s.pre].append(s.post)
        ready = sorted(i for i in range(n) if indeg[i] == 0)
        order = []
        while ready:
            nid = ready.pop(0)
            order.append(nid)
            fresh = []
            for nxt in succ[nid]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    fresh.append(nxt)
            ready = sorted(set(ready) | set(fresh))
        if len(order) != n:
            stuck = min(i for i in range(n) if indeg[i] > 0)
            raise ValidationError(f"cycle detected involving neuron {stuck}")
        return tuple(order)

    # -- derived views ------------------------------------------------------

    @property
    def num_neurons(self) -> int:
        return len(self.neurons)

    @property
    def num_synapses(self) -> int:
        return len(self.synapses)

    def levels(self) -> np.ndarray:
        return np.array([s.level for s in self.synapses], dtype=np.int64)

    def weight(self, synapse: Synapse) -> int:
        return self.encoding.decode(synapse.level)

    def with_levels(self, levels) -> "SnnModel":
        """Copy of the model with all synapse levels replaced."""
        levels = list(levels)
        if len(levels) != self.num_synapses:
            raise ValidationError("levels length does not match synapse count")
        syns = [replace(s, level=int(l)) for s, l in zip(self.synapses, levels)]
        return SnnModel(self.neurons, syns, self.encoding, self.r_max)

    def to_dict(self) -> dict:
        return {
            "neurons": [
                {"id": n.id, "kind": n.kind, "threshold": n.threshold}
                for n in self.neurons
            ],
            "synapses": [
                {"id": s.id, "pre": s.pre, "post": s.post, "level": s.level}
                for s in self.synapses
            ],
        }


@dataclass(frozen=True)
class Sample:
    inputs: tuple  # spike count per input neuron for one presentation
    label: int


@dataclass(frozen=True)
class Dataset:
    samples: tuple
    num_classes: int

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1")
        for idx, s in enumerate(self.samples):
            if not 0 <= s.label < self.num_classes:
                raise ValidationError(
                    f"sample {idx}: label {s.label} >= num_classes")
            if any((not isinstance(c, int)) or c < 0 for c in s.inputs):
                raise ValidationError(
                    f"sample {idx}: input counts must be non-negative integers")

    def __len__(self):
        return len(self.samples)

    def input_matrix(self) -> np.ndarray:
        return np.array([s.inputs for s in self.samples], dtype=np.int64)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "samples": [
                {"inputs": list(s.inputs), "label": s.label}
                for s in self.samples
            ],
        }


# -- file ingestion ----------------------------------------------------------

def _parse_threshold(value, nid):
    # thresholds accepted as floats or decimal strings, parsed as binary64
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"neuron {nid}: unparseable threshold {value!r}")


def model_from_dict(doc: dict) -> SnnModel:
    if not isinstance(doc, dict):
        raise ValidationError("model document must be a JSON object")
    try:
        raw_neurons = doc["neurons"]
        raw_synapses = doc["synapses"]
    except KeyError as missing:
        raise ValidationError(f"model document missing key {missing}")
    neurons = []
    for entry in raw_neurons:
        nid = entry.get("id")
        if not isinstance(nid, int):
            raise ValidationError(f"neuron entry without integer id: {entry!r}")
        neurons.append(Neuron(
            id=nid,
            kind=entry.get("kind", "hidden"),
            threshold=_parse_threshold(entry.get("threshold", 1.0), nid),
        ))
    synapses = []
    for entry in raw_synapses:
        sid = entry.get("id")
        if not isinstance(sid, int):
            raise ValidationError(f"synapse entry without integer id: {entry!r}")
        for key in ("pre", "post", "level"):
            if not isinstance(entry.get(key), int):
                raise ValidationError(f"synapse {sid}: {key} must be an integer")
        synapses.append(Synapse(
            id=sid, pre=entry["pre"], post=entry["post"], level=entry["level"]))
    return SnnModel(neurons, synapses)


def load_model(path) -> SnnModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read model file: {exc}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"model file does not parse as JSON: {exc}")
    return model_from_dict(doc)


def dataset_from_dict(doc: dict) -> Dataset:
    if not isinstance(doc, dict) or "samples" not in doc:
        raise ValidationError("dataset document must contain 'samples'")
    samples = []
    for idx, entry in enumerate(doc["samples"]):
        inputs = entry.get("inputs")
        if not isinstance(inputs, list):
            raise ValidationError(f"sample {idx}: 'inputs' must be a list")
        if not isinstance(entry.get("label"), int):
            raise ValidationError(f"sample {idx}: 'label' must be an integer")
        samples.append(Sample(inputs=tuple(int(c) for c in inputs),
                              label=entry["label"]))
    return Dataset(samples=tuple(samples),
                   num_classes=int(doc.get("num_classes", 0)))


def load_dataset(path, model: SnnModel | None = None) -> Dataset:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read dataset file: {exc}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"dataset file does not parse as JSON: {exc}")
    ds = dataset_from_dict(doc)
    if model is not None:
        for idx, s in enumerate(ds.samples):
            if len(s.inputs) != len(model.input_ids):
                raise ValidationError(
                    f"sample {idx}: {len(s.inputs)} input counts for "
                    f"{len(model.input_ids)} input neurons")
    return ds


# -- inference ---------------------------------------------------------------

def run_inference_batch(model: SnnModel, inputs: np.ndarray,
                        levels=None) -> tuple:
    """Rate inference over a batch of samples.

    ``inputs`` is an (n_samples, n_inputs) array of spike counts. Each
    non-input neuron j emits ``clamp(floor(max(0, sum_i w_ij * out_i) /
    threshold_j), 0, r_max)`` spikes, evaluated in topological order. Returns
    (per_synapse_spikes, output_counts, predicted) arrays; the spikes seen by
    a synapse equal its pre-neuron's output count.

    ``levels`` optionally overrides the stored synapse levels (used by the
    drift simulator without rebuilding the model).
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if inputs.shape[1] != len(model.input_ids):
        raise ValidationError(
            f"expected {len(model.input_ids)} input counts per sample, "
            f"got {inputs.shape[1]}")
    if levels is None:
        levels = model.levels()
    else:
        levels = np.asarray(levels, dtype=np.int64)
    weights = levels - 1  # ternary decode

    n_samples = inputs.shape[0]
    out = np.zeros((n_samples, model.num_neurons), dtype=np.float64)
    for col, nid in enumerate(model.input_ids):
        out[:, nid] = inputs[:, col]
    input_set = set(model.input_ids)
    for nid in model.topo_order:
        if nid in input_set:
            continue
        syns = model.in_synapses[nid]
        if not syns:
            continue
        pres = [s.pre for s in syns]
        w = weights[[s.id for s in syns]].astype(np.float64)
        acc = out[:, pres] @ w
        rate = np.floor(np.maximum(acc, 0.0) / model.neurons[nid].threshold)
        out[:, nid] = np.clip(rate, 0, model.r_max)

    pre_of = [s.pre for s in model.synapses]
    spikes = out[:, pre_of].astype(np.int64)
    output_counts = out[:, list(model.output_ids)].astype(np.int64)
    predicted = np.argmax(output_counts, axis=1)  # first max = lowest id
    return spikes, output_counts, predicted


def run_inference(model: SnnModel, input_counts, levels=None) -> InferenceResult:
    """Single-sample rate inference; see run_inference_batch for semantics."""
    spikes, outputs, predicted = run_inference_batch(
        model, np.asarray(input_counts), levels=levels)
    return InferenceResult(per_synapse_spikes=spikes[0],
                           output_counts=outputs[0],
                           predicted=int(predicted[0]))


def accuracy(model: SnnModel, dataset: Dataset, levels=None) -> float:
    _, _, predicted = run_inference_batch(model, dataset.input_matrix(),
                                          levels=levels)
    return float(np.mean(predicted == dataset.labels()))


def perturb_model(model: SnnModel, synapse_id: int, delta: int) -> SnnModel:
    """Copy of the model with one synapse level shifted by delta (clamped)."""
    if delta not in (-2, -1, 1, 2):
        raise ValidationError(f"delta must be in {{-2,-1,+1,+2}}, got {delta}")
    if not 0 <= synapse_id < model.num_synapses:
        raise ValidationError(f"unknown synapse id {synapse_id}")
    levels = model.levels()
    levels[synapse_id] = model.encoding.clamp(int(levels[synapse_id]) + delta)
    return model.with_levels(levels)


# -- synthetic models --------------------------------------------------------

def generate_synthetic(layer_sizes, num_classes=None, seed=0, num_samples=64,
                       max_count=10) -> tuple:
    """Fully-connected feedforward model plus a self-consistent dataset.

    Weight levels are drawn uniformly from {0, 1, 2}; sample labels are the
    model's own drift-free predictions, so drift-free accuracy is exactly 1.
    Deterministic for a fixed seed.
    """
    layer_sizes = list(layer_sizes)
    if len(layer_sizes) < 2:
        raise ValidationError("need at least 2 layers")
    if any(n < 1 for n in layer_sizes):
        raise ValidationError("empty layers are not allowed")
    if num_classes is None:
        num_classes = layer_sizes[-1]
    if num_classes != layer_sizes[-1]:
        raise ValidationError(
            f"num_classes {num_classes} must equal output layer size "
            f"{layer_sizes[-1]}")

    rng = random.Random(seed)
    neurons = []
    layers = []
    nid = 0
    for depth, size in enumerate(layer_sizes):
        kind = ("input" if depth == 0
                else "output" if depth == len(layer_sizes) - 1
                else "hidden")
        ids = []
        for _ in range(size):
            neurons.append(Neuron(id=nid, kind=kind, threshold=1.0))
            ids.append(nid)
            nid += 1
        layers.append(ids)
    synapses = []
    sid = 0
    for src, dst in zip(layers, layers[1:]):
        for pre in src:
            for post in dst:
                synapses.append(Synapse(id=sid, pre=pre, post=post,
                                        level=rng.randrange(3)))
                sid += 1
    model = SnnModel(neurons, synapses)

    samples = []
    for _ in range(num_samples):
        counts = tuple(rng.randrange(max_count + 1)
                       for _ in range(len(layers[0])))
        label = run_inference(model, counts).predicted
        samples.append(Sample(inputs=counts, label=label))
    return model, Dataset(samples=tuple(samples), num_classes=num_classes)

import json

import numpy as np
import pytest

from driftmap import (Dataset, LevelEncoding, Neuron, Sample, SnnModel,
                      Synapse, ValidationError, accuracy, generate_synthetic,
                      load_model, perturb_model, run_inference)


def write_model(tmp_path, doc):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    return path


MINIMAL = {
    "neurons": [
        {"id": 0, "kind": "input", "threshold": 1.0},
        {"id": 1, "kind": "output", "threshold": 1.0},
    ],
    "synapses": [{"id": 0, "pre": 0, "post": 1, "level": 2}],
}


class TestLoadModel:
    def test_minimal_file(self, tmp_path):
        model = load_model(write_model(tmp_path, MINIMAL))
        assert model.num_synapses == 1
        assert model.weight(model.synapses[0]) == +1

    def test_dangling_reference(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["synapses"][0]["post"] = 99
        with pytest.raises(ValidationError, match="dangling reference"):
            load_model(write_model(tmp_path, doc))

    def test_cycle_detected(self, tmp_path):
        doc = {
            "neurons": [{"id": 0, "kind": "hidden"},
                        {"id": 1, "kind": "hidden"}],
            "synapses": [{"id": 0, "pre": 0, "post": 1, "level": 1},
                         {"id": 1, "pre": 1, "post": 0, "level": 1}],
        }
        with pytest.raises(ValidationError, match="cycle"):
            load_model(write_model(tmp_path, doc))

    def test_level_out_of_range(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["synapses"][0]["level"] = 3
        with pytest.raises(ValidationError, match="synapse 0.*out of range"):
            load_model(write_model(tmp_path, doc))

    def test_self_loop(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["synapses"][0]["pre"] = 1
        with pytest.raises(ValidationError, match="self-loop"):
            load_model(write_model(tmp_path, doc))

    def test_non_dense_ids(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["neurons"][1]["id"] = 5
        with pytest.raises(ValidationError, match="dense"):
            load_model(write_model(tmp_path, doc))

    def test_threshold_as_decimal_string(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["neurons"][1]["threshold"] = "2.5"
        model = load_model(write_model(tmp_path, doc))
        assert model.neurons[1].threshold == 2.5

    def test_parse_failure(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        with pytest.raises(ValidationError, match="parse"):
            load_model(path)


def chain_model(level=2, threshold=1.0):
    return SnnModel(
        [Neuron(0, "input"), Neuron(1, "output", threshold=threshold)],
        [Synapse(0, 0, 1, level)])


class TestRunInference:
    def test_identity_chain(self):
        res = run_inference(chain_model(level=2), [5])
        assert res.output_counts.tolist() == [5]
        assert res.per_synapse_spikes.tolist() == [5]
        assert res.predicted == 0

    def test_negative_sum_rectifies(self):
        res = run_inference(chain_model(level=0), [5])
        assert res.output_counts.tolist() == [0]

    def test_threshold_division(self):
        model = SnnModel(
            [Neuron(0, "input"), Neuron(1, "input"),
             Neuron(2, "output", threshold=2.0)],
            [Synapse(0, 0, 2, 2), Synapse(1, 1, 2, 2)])
        res = run_inference(model, [3, 4])
        assert res.output_counts.tolist() == [3]  # floor(7 / 2)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError, match="input counts"):
            run_inference(chain_model(), [1, 2])

    def test_pure_function(self):
        model, dataset = generate_synthetic([4, 8, 2], seed=7)
        sample = dataset.samples[0].inputs
        first = run_inference(model, sample)
        for _ in range(3):
            again = run_inference(model, sample)
            assert np.array_equal(first.per_synapse_spikes,
                                  again.per_synapse_spikes)
            assert again.predicted == first.predicted

    def test_rate_cap(self):
        model = SnnModel(
            [Neuron(0, "input"), Neuron(1, "output", threshold=0.001)],
            [Synapse(0, 0, 1, 2)], r_max=1024)
        res = run_inference(model, [10])
        assert res.output_counts.tolist() == [1024]

    def test_argmax_ties_break_low(self):
        model = SnnModel(
            [Neuron(0, "input"), Neuron(1, "output"), Neuron(2, "output")],
            [Synapse(0, 0, 1, 2), Synapse(1, 0, 2, 2)])
        assert run_inference(model, [4]).predicted == 0

    def test_argmax_scale_invariant(self):
        counts = np.array([3, 9, 9, 1])
        for scale in (2, 10, 1000):
            assert np.argmax(counts) == np.argmax(counts * scale)


class TestPerturb:
    def test_positive_clamp_is_noop(self):
        model = chain_model(level=2)
        out = perturb_model(model, 0, +1)
        assert out.synapses[0].level == 2

    def test_minus_one(self):
        assert perturb_model(chain_model(level=1), 0, -1).synapses[0].level == 0

    def test_minus_two_clamps(self):
        assert perturb_model(chain_model(level=2), 0, -2).synapses[0].level == 0

    def test_original_unmodified(self):
        model = chain_model(level=1)
        perturb_model(model, 0, -1)
        assert model.synapses[0].level == 1

    def test_unknown_synapse(self):
        with pytest.raises(ValidationError, match="unknown synapse"):
            perturb_model(chain_model(), 7, -1)

    def test_bad_delta(self):
        with pytest.raises(ValidationError, match="delta"):
            perturb_model(chain_model(), 0, 0)

    def test_inverse_restores_without_clamp(self):
        model = chain_model(level=1)
        back = perturb_model(perturb_model(model, 0, +1), 0, -1)
        assert back.synapses[0].level == model.synapses[0].level

    def test_clamped_idempotent_same_sign(self):
        model = chain_model(level=2)
        once = perturb_model(model, 0, +2)
        twice = perturb_model(once, 0, +2)
        assert once.synapses[0].level == twice.synapses[0].level == 2


class TestGenerateSynthetic:
    def test_full_bipartite_edge_count(self):
        # 4*8 + 8*2 edges between consecutive fully-connected layers
        model, _ = generate_synthetic([4, 8, 2], seed=7)
        assert model.num_synapses == 4 * 8 + 8 * 2
        assert model.topo_order  # acyclic by construction

    def test_self_consistent_labels(self):
        model, dataset = generate_synthetic([4, 8, 2], seed=7)
        assert accuracy(model, dataset) == 1.0

    def test_deterministic(self):
        a_model, a_data = generate_synthetic([4, 8, 2], seed=7)
        b_model, b_data = generate_synthetic([4, 8, 2], seed=7)
        assert json.dumps(a_model.to_dict()) == json.dumps(b_model.to_dict())
        assert json.dumps(a_data.to_dict()) == json.dumps(b_data.to_dict())

    def test_seed_changes_model(self):
        a_model, _ = generate_synthetic([4, 8, 2], seed=7)
        b_model, _ = generate_synthetic([4, 8, 2], seed=8)
        assert json.dumps(a_model.to_dict()) != json.dumps(b_model.to_dict())

    def test_single_layer_rejected(self):
        with pytest.raises(ValidationError, match="2 layers"):
            generate_synthetic([2], seed=0)

    def test_empty_layer_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            generate_synthetic([4, 0, 2], seed=0)


class TestDatasetAndEncoding:
    def test_label_range_checked(self):
        with pytest.raises(ValidationError, match="label"):
            Dataset(samples=(Sample(inputs=(1,), label=3),), num_classes=2)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValidationError, match="non-negative"):
            Dataset(samples=(Sample(inputs=(-1,), label=0),), num_classes=1)

    def test_decode_strictly_increasing(self):
        enc = LevelEncoding()
        weights = [enc.decode(l) for l in range(enc.num_levels)]
        assert weights == sorted(weights) == [-1, 0, 1]

    def test_clamp_bounds(self):
        enc = LevelEncoding()
        assert enc.clamp(-5) == 0
        assert enc.clamp(9) == enc.max_level

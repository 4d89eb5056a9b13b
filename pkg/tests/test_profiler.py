import numpy as np
import pytest

from driftmap import (Dataset, Neuron, Sample, SnnModel, Synapse,
                      ValidationError, classify_criticality, effective_eta,
                      generate_synthetic, profile_spikes, run_inference)


def single_synapse_setup():
    model = SnnModel([Neuron(0, "input"), Neuron(1, "output")],
                     [Synapse(0, 0, 1, 2)])
    dataset = Dataset(samples=(Sample(inputs=(4,), label=0),
                               Sample(inputs=(6,), label=0)),
                      num_classes=1)
    return model, dataset


class TestProfileSpikes:
    def test_arithmetic_mean(self):
        model, dataset = single_synapse_setup()
        profile = profile_spikes(model, dataset)
        assert profile.per_synapse_eta.tolist() == [5.0]
        assert profile.avg_spikes_per_image == 5.0
        assert profile.num_images == 2
        assert profile.num_synapses == 1

    def test_matches_per_image_recount(self):
        # independent second pass: sum spikes image by image
        model, dataset = generate_synthetic([4, 8, 2], seed=7, num_samples=10)
        profile = profile_spikes(model, dataset)
        totals = np.zeros(model.num_synapses)
        for sample in dataset.samples:
            totals += run_inference(model, sample.inputs).per_synapse_spikes
        assert np.allclose(profile.per_synapse_eta, totals / 10, atol=0,
                           rtol=1e-12)

    def test_aggregate_identity(self):
        model, dataset = generate_synthetic([4, 8, 2], seed=7)
        profile = profile_spikes(model, dataset)
        by_totals = profile.per_synapse_eta.sum() / profile.num_synapses
        assert profile.avg_spikes_per_image == pytest.approx(by_totals,
                                                             rel=1e-12)

    def test_histogram_counts_all_synapses(self):
        model, dataset = generate_synthetic([4, 8, 2], seed=7)
        profile = profile_spikes(model, dataset)
        assert sum(profile.histogram.values()) == model.num_synapses
        for label in profile.histogram:
            lo, hi = label.split("-")
            assert int(hi) - int(lo) == 1  # unit-width buckets

    def test_empty_dataset_rejected(self):
        model, _ = single_synapse_setup()
        with pytest.raises(ValidationError, match="empty"):
            profile_spikes(model, Dataset(samples=(), num_classes=1))

    def test_deterministic(self):
        model, dataset = generate_synthetic([4, 8, 2], seed=7)
        a = profile_spikes(model, dataset)
        b = profile_spikes(model, dataset)
        assert np.array_equal(a.per_synapse_eta, b.per_synapse_eta)
        assert a.histogram == b.histogram


def discriminator_setup():
    """syn0 (level 2, threshold-1 output) solely decides the class; syn1
    (level 2 into a threshold-2 output) tolerates every reachable shift."""
    model = SnnModel(
        [Neuron(0, "input"), Neuron(1, "output", threshold=1.0),
         Neuron(2, "output", threshold=2.0)],
        [Synapse(0, 0, 1, 2), Synapse(1, 0, 2, 2)])
    dataset = Dataset(samples=(Sample(inputs=(3,), label=0),), num_classes=2)
    return model, dataset


class TestCriticality:
    def test_decisive_synapse_is_critical(self):
        model, dataset = discriminator_setup()
        report = classify_criticality(model, dataset, threshold=0.01)
        assert bool(report.critical[0])
        assert report.per_delta_fraction[-1] > 0

    def test_positive_clamp_never_counted(self):
        # both synapses sit at the top level: +1/+2 shifts are no-ops
        model, dataset = discriminator_setup()
        report = classify_criticality(model, dataset, threshold=0.01)
        assert report.per_delta_fraction[+1] == 0.0
        assert report.per_delta_fraction[+2] == 0.0

    def test_frozen_discriminator_fractions(self):
        # syn0 flips the prediction at -1 and -2; syn1 never does
        model, dataset = discriminator_setup()
        report = classify_criticality(model, dataset, threshold=0.01)
        assert report.per_delta_fraction == {-2: 0.5, -1: 0.5, 1: 0.0, 2: 0.0}
        assert report.critical.tolist() == [True, False]

    def test_zero_threshold_marks_any_change(self):
        model, dataset = generate_synthetic([4, 8, 2], seed=7)
        strict = classify_criticality(model, dataset, threshold=0.0)
        loose = classify_criticality(model, dataset, threshold=1.1)
        assert not loose.critical.any()
        # threshold 0 flags at least everything the default threshold flags
        default = classify_criticality(model, dataset, threshold=0.01)
        assert (strict.critical | ~default.critical).all()

    def test_unchanged_model_is_never_critical(self):
        # a synapse whose four shifts all clamp away cannot matter
        model = SnnModel([Neuron(0, "input"), Neuron(1, "output")],
                         [Synapse(0, 0, 1, 2)])
        dataset = Dataset(samples=(Sample(inputs=(2,), label=0),),
                          num_classes=1)
        report = classify_criticality(model, dataset)
        # deltas -1/-2 do change the model but a 1-class problem never drops
        assert not report.critical.any()

    def test_parallel_matches_serial(self):
        model, dataset = generate_synthetic([4, 8, 2], seed=3, num_samples=16)
        serial = classify_criticality(model, dataset, threshold=0.01, jobs=1)
        parallel = classify_criticality(model, dataset, threshold=0.01,
                                        jobs=2)
        assert serial.critical.tolist() == parallel.critical.tolist()
        assert serial.per_delta_fraction == parallel.per_delta_fraction


class TestEffectiveEta:
    def make_profile(self, eta):
        model = SnnModel([Neuron(0, "input"), Neuron(1, "output")],
                         [Synapse(0, 0, 1, 2)])
        dataset = Dataset(samples=(Sample(inputs=(1,), label=0),),
                          num_classes=1)
        profile = profile_spikes(model, dataset)
        return profile.__class__(per_synapse_eta=np.asarray(eta, float),
                                 num_images=1, num_synapses=len(eta),
                                 avg_spikes_per_image=float(np.mean(eta)),
                                 histogram={})

    def make_crit(self, critical):
        from driftmap import CriticalityReport
        return CriticalityReport(critical=np.asarray(critical, bool),
                                 per_delta_fraction={-2: 0, -1: 0, 1: 0, 2: 0},
                                 threshold=0.01)

    def test_all_critical_identity(self):
        profile = self.make_profile([10.0, 3.0])
        out = effective_eta(profile, self.make_crit([True, True]), 1e-6)
        assert out.tolist() == [10.0, 3.0]

    def test_substitution(self):
        profile = self.make_profile([10.0, 3.0])
        out = effective_eta(profile, self.make_crit([True, False]), 1e-6)
        assert out.tolist() == [10.0, 1e-6]

    def test_order_preserved_among_critical(self):
        eta = [9.0, 1.0, 5.0, 2.0]
        profile = self.make_profile(eta)
        out = effective_eta(profile, self.make_crit([True] * 4), 1e-6)
        assert np.argsort(out).tolist() == np.argsort(eta).tolist()

    def test_epsilon_dominates_lifetimes(self):
        # with any cell quality, a substituted synapse outlives all critical
        rng = np.random.default_rng(0)
        e = rng.uniform(0.01, 10.0, 50)
        eta_crit = rng.uniform(0.5, 100.0, 50)
        eps = 1e-6
        assert (e.min() / eps) >= (e.max() / eta_crit.min())

    def test_warns_when_epsilon_too_large(self):
        profile = self.make_profile([0.5, 3.0])
        with pytest.warns(UserWarning, match="epsilon"):
            effective_eta(profile, self.make_crit([True, False]), 1.0)

    def test_epsilon_positive_required(self):
        profile = self.make_profile([1.0])
        with pytest.raises(ValidationError, match="epsilon"):
            effective_eta(profile, self.make_crit([True]), 0.0)

import json

import numpy as np
import pytest
import torch

from latentshift import (
    BlobGenerator,
    CapabilityError,
    ConvGenerator,
    Deformator,
    EmbeddingNet,
    GeneratorHandle,
    MetricReport,
    PairReconstructor,
    compute_metric_report,
    eval_ppl,
    eval_rca,
    factor_alignment,
)


def zero_deformator(num_directions=8, latent_dim=8):
    d = Deformator(num_directions, latent_dim, mode="linear", seed=0)
    with torch.no_grad():
        d.net.weight.zero_()
    return d


class CodePlateGenerator(GeneratorHandle):
    """Test generator whose image is an invertible encoding of the latent."""

    def __init__(self, latent_dim=16, seed=0):
        side = int(latent_dim**0.5)
        assert side * side == latent_dim
        super().__init__(latent_dim, (1, side, side))

    def forward(self, z):
        side = self.output_shape[1]
        return torch.tanh(z / 10.0).view(-1, 1, side, side)


class OracleReconstructor:
    """Inverts CodePlateGenerator images and matches the shift against the
    linear deformator's columns; perfect by construction."""

    def __init__(self, deformator):
        columns = deformator.weight_matrix.detach().T  # (K, d)
        self.directions = columns / columns.norm(dim=1, keepdim=True)

    def __call__(self, before, after):
        recover = lambda img: 10.0 * torch.atanh(img.flatten(1))
        delta = recover(after) - recover(before)
        unit = delta / delta.norm(dim=1, keepdim=True).clamp_min(1e-12)
        cosines = unit @ self.directions.T
        logits = 50.0 * cosines.abs()
        magnitudes = delta @ self.directions.T
        best = logits.argmax(dim=1)
        return logits, magnitudes[torch.arange(len(best)), best]


class TestEvalRca:
    def test_untrained_chance_level(self):
        generator = BlobGenerator(8, 32, seed=0)
        deformator = Deformator(8, 8, seed=1)
        reconstructor = PairReconstructor(8, (1, 32, 32), seed=2)
        result = eval_rca(deformator, reconstructor, generator, n_samples=10000, seed=3)
        assert result.accuracy == pytest.approx(1 / 8, abs=0.02)
        assert len(result.per_direction) == 8

    def test_perfect_predictor_stub_scores_one(self):
        generator = CodePlateGenerator(16)
        deformator = Deformator(8, 16, mode="linear", seed=4)
        with torch.no_grad():
            basis = torch.zeros(16, 8)
            basis[:8, :] = torch.eye(8)
            deformator.net.weight.copy_(basis)
        oracle = OracleReconstructor(deformator)
        result = eval_rca(deformator, oracle, generator, n_samples=512, seed=5)
        assert result.accuracy == 1.0
        assert all(v == 1.0 for v in result.per_direction)

    def test_breakdown_averages_to_accuracy_when_balanced(self):
        generator = BlobGenerator(8, 16, seed=6)
        deformator = Deformator(8, 8, seed=7)
        reconstructor = PairReconstructor(8, (1, 16, 16), seed=8)
        result = eval_rca(deformator, reconstructor, generator, n_samples=800, seed=9)
        assert np.mean(result.per_direction) == pytest.approx(result.accuracy, abs=1e-9)

    def test_logit_rescaling_invariance(self):
        generator = BlobGenerator(8, 16, seed=10)
        deformator = Deformator(8, 8, seed=11)
        reconstructor = PairReconstructor(8, (1, 16, 16), seed=12)

        class Rescaled:
            def __call__(self, before, after):
                logits, magnitudes = reconstructor(before, after)
                return 37.5 * logits, magnitudes

        plain = eval_rca(deformator, reconstructor, generator, n_samples=400, seed=13)
        scaled = eval_rca(deformator, Rescaled(), generator, n_samples=400, seed=13)
        assert plain.accuracy == scaled.accuracy
        assert plain.per_direction == scaled.per_direction

    def test_deterministic_under_seed(self):
        generator = BlobGenerator(8, 16, seed=14)
        deformator = Deformator(8, 8, seed=15)
        reconstructor = PairReconstructor(8, (1, 16, 16), seed=16)
        a = eval_rca(deformator, reconstructor, generator, n_samples=300, seed=17)
        b = eval_rca(deformator, reconstructor, generator, n_samples=300, seed=17)
        assert a.accuracy == b.accuracy and a.per_direction == b.per_direction


class TestEvalPpl:
    def test_zero_deformator_gives_exactly_zero(self):
        generator = BlobGenerator(8, 16, seed=0)
        embedding = EmbeddingNet(in_channels=1, seed=1)
        value = eval_ppl(zero_deformator(), generator, embedding, n_samples=200, seed=2)
        assert value == 0.0

    def test_delta_doubling_keeps_value_within_20_percent(self):
        generator = BlobGenerator(8, 32, seed=3)
        deformator = Deformator(8, 8, seed=4)
        embedding = EmbeddingNet(in_channels=1, seed=5)
        at_delta = eval_ppl(deformator, generator, embedding, n_samples=512, delta=0.1, seed=6)
        at_double = eval_ppl(deformator, generator, embedding, n_samples=512, delta=0.2, seed=6)
        assert at_double == pytest.approx(at_delta, rel=0.2)

    def test_deterministic_under_seed(self):
        generator = BlobGenerator(8, 16, seed=7)
        deformator = Deformator(8, 8, seed=8)
        embedding = EmbeddingNet(in_channels=1, seed=9)
        first = eval_ppl(deformator, generator, embedding, n_samples=256, seed=10)
        second = eval_ppl(deformator, generator, embedding, n_samples=256, seed=10)
        assert first == second

    def test_rejects_bad_delta(self):
        generator = BlobGenerator(8, 16, seed=11)
        embedding = EmbeddingNet(in_channels=1, seed=12)
        with pytest.raises(ValueError):
            eval_ppl(zero_deformator(), generator, embedding, n_samples=8, delta=0.0, seed=13)


class TestEvalImmutability:
    def test_eval_leaves_parameters_bitwise_unchanged(self):
        generator = ConvGenerator(8, 16, channels=1, base_width=8, seed=0)
        deformator = Deformator(4, 8, seed=1)
        reconstructor = PairReconstructor(4, (1, 16, 16), seed=2)
        embedding = EmbeddingNet(in_channels=1, seed=3)
        modules = [generator, deformator, reconstructor, embedding]
        snapshots = [[p.detach().clone() for p in m.parameters()] for m in modules]

        eval_rca(deformator, reconstructor, generator, n_samples=64, seed=4)
        eval_ppl(deformator, generator, embedding, n_samples=64, seed=5)

        for module, snapshot in zip(modules, snapshots):
            for param, saved in zip(module.parameters(), snapshot):
                assert torch.equal(param.detach(), saved)


class TestFactorAlignment:
    def test_hand_set_to_factor_rows_scores_one(self):
        generator = BlobGenerator(8, 16, seed=0)
        deformator = Deformator(4, 8, mode="linear", seed=1)
        with torch.no_grad():
            deformator.net.weight.copy_(generator.factor_directions.T)
        assert factor_alignment(deformator, generator) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_directions_score_near_zero(self):
        generator = BlobGenerator(8, 16, seed=2)
        deformator = Deformator(4, 8, mode="linear", seed=3)
        with torch.no_grad():
            deformator.net.weight.copy_(generator.factor_matrix[:, 4:8])
        assert factor_alignment(deformator, generator) < 1e-5

    def test_random_linear_deformator_matches_monte_carlo_oracle(self):
        # Columns of a Gaussian linear deformator are i.i.d. random directions,
        # exactly the Monte Carlo model. Assert the observed score lies within
        # the oracle's [0.1%, 99.9%] quantile band.
        generator = BlobGenerator(8, 16, seed=4)
        deformator = Deformator(8, 8, mode="linear", seed=5)
        with torch.no_grad():
            deformator.net.weight.copy_(
                torch.randn(8, 8, generator=torch.Generator().manual_seed(6))
            )
        observed = factor_alignment(deformator, generator)

        # oracle: mean over 8 random unit directions of max |cos| to 4 axes
        rng = np.random.default_rng(7)
        dirs = rng.normal(size=(20000, 8, 8))
        dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
        draws = np.abs(dirs[:, :, :4]).max(axis=2).mean(axis=1)
        lo, hi = np.quantile(draws, [0.001, 0.999])
        assert lo <= observed <= hi

    def test_non_blob_generator_raises(self):
        generator = ConvGenerator(8, 16, channels=1, base_width=8, seed=8)
        with pytest.raises(CapabilityError):
            factor_alignment(Deformator(4, 8, seed=9), generator)


class TestMetricReport:
    def test_json_roundtrip_schema(self):
        report = MetricReport(rca=0.75, ppl=12.5, delta=0.1, n_samples=100,
                              per_direction=[0.5, 1.0])
        parsed = json.loads(report.to_json())
        assert set(parsed) == {"rca", "ppl", "delta", "n_samples", "per_direction"}
        assert MetricReport.from_json(report.to_json()) == report

    def test_compute_report_consistent_with_parts(self):
        generator = BlobGenerator(8, 16, seed=0)
        deformator = Deformator(8, 8, seed=1)
        reconstructor = PairReconstructor(8, (1, 16, 16), seed=2)
        embedding = EmbeddingNet(in_channels=1, seed=3)
        report = compute_metric_report(
            deformator, reconstructor, generator, embedding, n_samples=200, seed=4
        )
        rca = eval_rca(deformator, reconstructor, generator, n_samples=200, seed=4)
        ppl = eval_ppl(deformator, generator, embedding, n_samples=200, seed=4)
        assert report.rca == rca.accuracy
        assert report.per_direction == rca.per_direction
        assert report.ppl == ppl
        assert report.n_samples == 200

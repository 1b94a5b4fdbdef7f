import base64
import io

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient
from PIL import Image

from latentshift import (
    CentroidBank,
    Deformator,
    PairReconstructor,
    TrainConfig,
    save_checkpoint,
)
from latentshift.seeding import derive_seed
from latentshift.service import create_app


@pytest.fixture(scope="module")
def service():
    cfg = TrainConfig(
        num_directions=8,
        latent_dim=8,
        resolution=32,
        deformator_mode="linear",
        deformator_hidden=16,
        seed=0,
    )
    import tempfile
    from pathlib import Path

    tmp = Path(tempfile.mkdtemp())
    deformator = Deformator(
        cfg.num_directions, cfg.latent_dim, mode="linear",
        seed=derive_seed(cfg.seed, "deformator-init"),
    )
    generator = cfg.make_generator()
    reconstructor = PairReconstructor(
        cfg.num_directions, generator.output_shape,
        seed=derive_seed(cfg.seed, "reconstructor-init"),
    )
    bank = CentroidBank(cfg.num_directions, cfg.latent_dim)
    for k in range(cfg.num_directions):
        bank.update(k, torch.randn(cfg.latent_dim, generator=torch.Generator().manual_seed(k)))
    ckpt = tmp / "checkpoint.pt"
    save_checkpoint(
        ckpt, deformator=deformator, reconstructor=reconstructor, bank=bank, config=cfg, step=0
    )
    app = create_app(ckpt, eval_samples=64)
    client = TestClient(app)
    return client, cfg, deformator, bank, ckpt


def png_array(content: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(content)))


class TestHealthz:
    def test_fields(self, service):
        client, cfg, *_ = service
        body = client.get("/healthz").json()
        assert body["status"] == "ok"
        assert body["K"] == cfg.num_directions
        assert body["latent_dim"] == cfg.latent_dim
        assert len(body["checkpoint_id"]) == 16


class TestDirections:
    def test_count_sorted_and_source_of_truth(self, service):
        client, cfg, deformator, bank, ckpt = service
        entries = client.get("/directions").json()
        assert len(entries) == cfg.num_directions
        scores = [e["score"] for e in entries]
        assert scores == sorted(scores, reverse=True)
        assert {e["index"] for e in entries} == set(range(cfg.num_directions))

        from latentshift.checkpoint import load_checkpoint
        from latentshift.metrics import compute_metric_report

        loaded = load_checkpoint(ckpt)
        report = compute_metric_report(
            loaded.deformator,
            loaded.reconstructor,
            cfg.make_generator(),
            n_samples=64,
            delta=cfg.ppl_delta,
            eps_low=cfg.eps_low,
            eps_high=cfg.eps_high,
            eps_deadzone=cfg.eps_deadzone,
            seed=derive_seed(cfg.seed, "service-report"),
            embedding_seed=derive_seed(cfg.seed, "embedding"),
        )
        by_index = {e["index"]: e["score"] for e in entries}
        for k in range(cfg.num_directions):
            assert by_index[k] == report.per_direction[k]

    def test_centroid_norms_reported(self, service):
        client, cfg, deformator, bank, _ = service
        entries = client.get("/directions").json()
        by_index = {e["index"]: e["centroid_norm"] for e in entries}
        for k in range(cfg.num_directions):
            assert by_index[k] == pytest.approx(float(bank.centroids[k].norm()), rel=1e-6)


class TestGenerate:
    def test_empty_stack_is_unedited_image(self, service):
        client, cfg, *_ = service
        response = client.post("/generate", json={"seed": 3, "shifts": []})
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"

        from latentshift.seeding import new_generator
        from latentshift.viz import png_bytes

        rng = new_generator(3)
        z = torch.randn(1, cfg.latent_dim, generator=rng)
        expected = png_bytes(cfg.make_generator().generate(z)[0])
        assert response.content == expected

    def test_deterministic_bytes(self, service):
        client, *_ = service
        body = {"seed": 5, "shifts": [{"k": 2, "eps": 1.5}]}
        first = client.post("/generate", json=body)
        second = client.post("/generate", json=body)
        assert first.content == second.content
        assert first.headers["x-latent-norm"] == second.headers["x-latent-norm"]

    def test_linear_mode_cancellation(self, service):
        client, *_ = service
        base = client.post("/generate", json={"seed": 8, "shifts": []})
        stacked = client.post(
            "/generate",
            json={"seed": 8, "shifts": [{"k": 1, "eps": 2.5}, {"k": 1, "eps": -2.5}]},
        )
        assert stacked.content == base.content

    def test_shift_order_commutes(self, service):
        client, *_ = service
        forward = client.post(
            "/generate",
            json={"seed": 9, "shifts": [{"k": 0, "eps": 2.0}, {"k": 3, "eps": -1.0}]},
        )
        reverse = client.post(
            "/generate",
            json={"seed": 9, "shifts": [{"k": 3, "eps": -1.0}, {"k": 0, "eps": 2.0}]},
        )
        assert forward.content == reverse.content

    def test_eps_clamped_and_documented(self, service):
        client, *_ = service
        clamped = client.post("/generate", json={"seed": 1, "shifts": [{"k": 0, "eps": 50.0}]})
        at_limit = client.post("/generate", json={"seed": 1, "shifts": [{"k": 0, "eps": 8.0}]})
        assert clamped.content == at_limit.content
        assert clamped.headers["x-eps-clamped"] == "true"
        assert at_limit.headers["x-eps-clamped"] == "false"

    def test_malformed_body_is_400_with_fields(self, service):
        client, *_ = service
        response = client.post("/generate", json={"shifts": [{"k": 0, "eps": 1.0}]})
        assert response.status_code == 400
        detail = response.json()["detail"]
        assert any("seed" in str(item["loc"]) for item in detail)

    def test_direction_out_of_range_is_422(self, service):
        client, *_ = service
        response = client.post("/generate", json={"seed": 0, "shifts": [{"k": 12, "eps": 1.0}]})
        assert response.status_code == 422

    def test_stack_too_long_is_422(self, service):
        client, *_ = service
        shifts = [{"k": 0, "eps": 0.1}] * 9
        response = client.post("/generate", json={"seed": 0, "shifts": shifts})
        assert response.status_code == 422

    def test_latent_norm_header(self, service):
        client, cfg, deformator, *_ = service
        response = client.post("/generate", json={"seed": 7, "shifts": []})
        from latentshift.seeding import new_generator

        rng = new_generator(7)
        z = torch.randn(1, cfg.latent_dim, generator=rng)
        assert float(response.headers["x-latent-norm"]) == pytest.approx(float(z.norm()), abs=1e-5)


class TestStrip:
    def test_matches_individual_generate_calls(self, service):
        client, *_ = service
        stack = [{"k": 1, "eps": 1.0}]
        sweep = {"k": 2, "lo": -2.0, "hi": 2.0, "n": 5}
        strip = client.post("/strip", json={"seed": 4, "shifts": stack, "sweep": sweep})
        assert strip.status_code == 200
        images = strip.json()
        assert len(images) == 5
        values = [sweep["lo"] + i * (sweep["hi"] - sweep["lo"]) / 4 for i in range(5)]
        for image_b64, eps in zip(images, values):
            single = client.post(
                "/generate",
                json={"seed": 4, "shifts": stack + [{"k": 2, "eps": eps}]},
            )
            assert base64.b64decode(image_b64) == single.content

    def test_middle_of_symmetric_sweep_equals_stack_only(self, service):
        client, *_ = service
        stack = [{"k": 0, "eps": 1.5}]
        strip = client.post(
            "/strip",
            json={"seed": 6, "shifts": stack, "sweep": {"k": 3, "lo": -2.0, "hi": 2.0, "n": 5}},
        )
        stack_only = client.post("/generate", json={"seed": 6, "shifts": stack})
        assert base64.b64decode(strip.json()[2]) == stack_only.content

    def test_single_point_sweep(self, service):
        client, *_ = service
        strip = client.post(
            "/strip",
            json={"seed": 2, "shifts": [], "sweep": {"k": 0, "lo": 0.0, "hi": 0.0, "n": 1}},
        )
        base = client.post("/generate", json={"seed": 2, "shifts": []})
        assert base.status_code == 200
        images = strip.json()
        assert len(images) == 1
        assert base64.b64decode(images[0]) == base.content

    def test_oversized_strip_is_422(self, service):
        client, *_ = service
        response = client.post(
            "/strip",
            json={"seed": 0, "shifts": [], "sweep": {"k": 0, "lo": 0, "hi": 1, "n": 33}},
        )
        assert response.status_code == 422


class TestImmutability:
    def test_requests_do_not_change_responses_across_interleaving(self, service):
        client, *_ = service
        probe = {"seed": 10, "shifts": [{"k": 4, "eps": 3.0}]}
        before = client.post("/generate", json=probe).content
        client.post("/generate", json={"seed": 11, "shifts": [{"k": 1, "eps": -2.0}]})
        client.post(
            "/strip",
            json={"seed": 12, "shifts": [], "sweep": {"k": 0, "lo": -1, "hi": 1, "n": 3}},
        )
        after = client.post("/generate", json=probe).content
        assert before == after

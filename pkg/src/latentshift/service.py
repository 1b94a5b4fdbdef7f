"""HTTP service exposing a trained checkpoint for interactive editing.

The model is loaded once at startup and never mutated; every response is a
pure function of (checkpoint, request). Magnitudes are clamped to
[-MAX_EPS, MAX_EPS] at the boundary (slightly beyond the training range so
users can probe extrapolation); the clamp is reported in response headers.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
from pathlib import Path

import torch
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .checkpoint import load_checkpoint
from .metrics import MetricReport, compute_metric_report
from .seeding import derive_seed, new_generator
from .shifts import encode_shift_batch
from .viz import png_bytes

MAX_EPS = 8.0
MAX_STACK = 8
MAX_STRIP = 32


class ShiftSpec(BaseModel):
    k: int
    eps: float


class EditStack(BaseModel):
    seed: int
    shifts: list[ShiftSpec] = []


class SweepSpec(BaseModel):
    k: int
    lo: float
    hi: float
    n: int


class StripRequest(BaseModel):
    seed: int
    shifts: list[ShiftSpec] = []
    sweep: SweepSpec


def create_app(
    checkpoint_path,
    *,
    eval_samples: int = 1024,
    report_path=None,
    max_workers: int = 2,
    max_stack: int = MAX_STACK,
) -> FastAPI:
    checkpoint_path = Path(checkpoint_path)
    loaded = load_checkpoint(checkpoint_path)
    cfg = loaded.config
    deformator = loaded.deformator.eval()
    generator = cfg.make_generator().eval()
    bank = loaded.bank
    checkpoint_id = hashlib.sha256(checkpoint_path.read_bytes()).hexdigest()[:16]

    if report_path is not None:
        report = MetricReport.from_json(Path(report_path).read_text())
    else:
        report = compute_metric_report(
            deformator,
            loaded.reconstructor,
            generator,
            n_samples=eval_samples,
            delta=cfg.ppl_delta,
            eps_low=cfg.eps_low,
            eps_high=cfg.eps_high,
            eps_deadzone=cfg.eps_deadzone,
            seed=derive_seed(cfg.seed, "service-report"),
            embedding_seed=derive_seed(cfg.seed, "embedding"),
        )

    render_slots = threading.Semaphore(max_workers)

    app = FastAPI(title="latentshift explorer service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Latent-Norm", "X-Eps-Clamped", "X-Checkpoint-Id"],
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        # Structural problems (missing/ill-typed fields) are client errors,
        # reported with field-level details; semantic checks below use 422.
        return JSONResponse(
            status_code=400,
            content={"detail": [
                {"loc": list(err["loc"]), "msg": err["msg"]} for err in exc.errors()
            ]},
        )

    def check_stack(shifts: list[ShiftSpec]) -> None:
        if len(shifts) > max_stack:
            raise HTTPException(422, f"edit stack exceeds the maximum of {max_stack} shifts")
        for spec in shifts:
            if not 0 <= spec.k < cfg.num_directions:
                raise HTTPException(
                    422,
                    f"direction index {spec.k} out of range for "
                    f"{cfg.num_directions} directions",
                )

    @torch.no_grad()
    def resolve(seed: int, shifts: list[ShiftSpec]) -> tuple[torch.Tensor, torch.Tensor, bool]:
        """Latent code for ``seed`` plus the cumulative deformed shift."""
        rng = new_generator(seed)
        z = torch.randn(1, cfg.latent_dim, generator=rng)
        total = torch.zeros(1, cfg.latent_dim)
        clamped = False
        if shifts:
            eps = torch.tensor([s.eps for s in shifts])
            clamped = bool((eps.abs() > MAX_EPS).any())
            eps = eps.clamp(-MAX_EPS, MAX_EPS)
            directions = torch.tensor([s.k for s in shifts], dtype=torch.long)
            encoded = encode_shift_batch(directions, eps, cfg.num_directions)
            total = deformator(encoded).sum(dim=0, keepdim=True)
        return z, total, clamped

    @torch.no_grad()
    def render(z: torch.Tensor, total_shift: torch.Tensor) -> torch.Tensor:
        with render_slots:
            return generator.inject_shift(z, total_shift)[0]

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "K": cfg.num_directions,
            "latent_dim": cfg.latent_dim,
            "checkpoint_id": checkpoint_id,
        }

    @app.get("/directions")
    def directions():
        norms = [float(bank.centroids[k].norm()) for k in range(cfg.num_directions)]
        entries = [
            {"index": k, "score": report.per_direction[k], "centroid_norm": norms[k]}
            for k in range(cfg.num_directions)
        ]
        entries.sort(key=lambda e: -e["score"])
        return entries

    @app.post("/generate")
    def generate(stack: EditStack):
        check_stack(stack.shifts)
        z, total, clamped = resolve(stack.seed, stack.shifts)
        image = render(z, total)
        latent_norm = float((z + total).norm())
        return Response(
            content=png_bytes(image),
            media_type="image/png",
            headers={
                "X-Latent-Norm": f"{latent_norm:.6f}",
                "X-Eps-Clamped": json.dumps(clamped),
                "X-Checkpoint-Id": checkpoint_id,
            },
        )

    @app.post("/strip")
    def strip(request_body: StripRequest):
        sweep = request_body.sweep
        if sweep.n < 1 or sweep.n > MAX_STRIP:
            raise HTTPException(422, f"strip size must be in [1, {MAX_STRIP}]; got {sweep.n}")
        if not 0 <= sweep.k < cfg.num_directions:
            raise HTTPException(
                422,
                f"direction index {sweep.k} out of range for {cfg.num_directions} directions",
            )
        check_stack(request_body.shifts)
        if sweep.n == 1:
            values = [sweep.lo]
        else:
            values = [
                sweep.lo + i * (sweep.hi - sweep.lo) / (sweep.n - 1) for i in range(sweep.n)
            ]
        images = []
        for eps in values:
            shifts = request_body.shifts + [ShiftSpec(k=sweep.k, eps=eps)]
            z, total, _ = resolve(request_body.seed, shifts)
            images.append(base64.b64encode(png_bytes(render(z, total))).decode("ascii"))
        return images

    return app

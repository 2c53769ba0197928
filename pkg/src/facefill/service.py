"""HTTP inference service: /complete, /parse, /health.

JSON in, JSON out, with PNG payloads as base64 strings. The checkpoint is
loaded once at startup and treated as immutable; every request runs
against that snapshot with its own seed, so concurrent requests are safe
and reproducible. Request bodies are parsed by hand to give precise 400
reasons and a 413 on oversized payloads.
"""

from __future__ import annotations

import base64
import binascii
import json
import warnings

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .completion import CompletionRequest, complete
from .imaging import ImageFormatError, decode_png, encode_png
from .masking import decode_mask_png
from .networks import colorize_labels, parse_labels, parser_forward
from .training import load_checkpoint, manifest_digest

MAX_BODY_BYTES = 8 * 1024 * 1024


class _BadRequest(Exception):
    pass


def _parse_body(body: bytes) -> dict:
    if len(body) > MAX_BODY_BYTES:
        raise _BadRequest("payload exceeds 8 MB")  # mapped to 413 below
    try:
        payload = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise _BadRequest(f"body is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise _BadRequest("body must be a JSON object")
    return payload


def _b64_field(payload: dict, name: str) -> bytes:
    value = payload.get(name)
    if not isinstance(value, str):
        raise _BadRequest(f"missing or non-string field {name!r}")
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as e:
        raise _BadRequest(f"field {name!r} is not valid base64: {e}") from e


def _decode_image(payload: dict) -> np.ndarray:
    data = _b64_field(payload, "image")
    try:
        return decode_png(data)
    except ImageFormatError as e:
        raise _BadRequest(str(e)) from e
    except Exception as e:
        raise _BadRequest(f"image is not a decodable PNG: {e}") from e


def _random_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1)[0])


def _seed_field(payload: dict) -> int:
    seed = payload.get("seed")
    if seed is None:
        return _random_seed()
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise _BadRequest("field 'seed' must be a non-negative integer")
    return seed


def create_app(checkpoint_dir) -> FastAPI:
    model = load_checkpoint(checkpoint_dir)
    digest = manifest_digest(checkpoint_dir)
    app = FastAPI(title="facefill service")

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model_tag": model.model_tag,
            "stage": model.stage,
            "step": model.step,
            "manifest_digest": digest,
        }

    @app.post("/complete")
    async def complete_endpoint(request: Request):
        body = await request.body()
        if len(body) > MAX_BODY_BYTES:
            return JSONResponse({"detail": "payload exceeds 8 MB"}, status_code=413)
        try:
            payload = _parse_body(body)
            image = _decode_image(payload)
            mask_bytes = _b64_field(payload, "mask")
            try:
                mask = decode_mask_png(mask_bytes, expect_shape=image.shape[:2])
            except ValueError as e:
                raise _BadRequest(str(e)) from e
            seed = _seed_field(payload)
            blend = payload.get("blend", True)
            if not isinstance(blend, bool):
                raise _BadRequest("field 'blend' must be a boolean")
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                try:
                    result = complete(CompletionRequest(image=image, mask=mask, seed=seed, blend=blend), model)
                except ValueError as e:
                    raise _BadRequest(str(e)) from e
            return {
                "completed": base64.b64encode(encode_png(result)).decode("ascii"),
                "seed_used": seed,
                "mask_area": mask.area,
                "warnings": [str(w.message) for w in caught],
            }
        except _BadRequest as e:
            return JSONResponse({"detail": str(e)}, status_code=400)

    @app.post("/parse")
    async def parse_endpoint(request: Request):
        body = await request.body()
        if len(body) > MAX_BODY_BYTES:
            return JSONResponse({"detail": "payload exceeds 8 MB"}, status_code=413)
        try:
            payload = _parse_body(body)
            image = _decode_image(payload)
            try:
                labels = parse_labels(parser_forward(model.parser, image))
            except ValueError as e:
                raise _BadRequest(str(e)) from e
            return {"parsed": base64.b64encode(encode_png(colorize_labels(labels))).decode("ascii")}
        except _BadRequest as e:
            return JSONResponse({"detail": str(e)}, status_code=400)

    return app

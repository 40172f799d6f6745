"""Wire protocol: POST /score over pair batches, GET /health.

Scores are the softmax probability of the pair-valid class, positionally
aligned with the request. Requests are stateless; overlong pairs are
truncated to the model limit rather than rejected.
"""

from __future__ import annotations

import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .bundle import ModelBundle

INTERNAL_BATCH = 32


class PairIn(BaseModel):
    input: str
    label: str


class ScoreIn(BaseModel):
    pairs: list[PairIn]


def score_pairs(bundle: ModelBundle, pairs: list[tuple[str, str]]) -> list[float]:
    if not pairs:
        return []
    scores: list[float] = []
    with torch.no_grad():
        for start in range(0, len(pairs), INTERNAL_BATCH):
            chunk = pairs[start:start + INTERNAL_BATCH]
            enc = bundle.tokenizer(
                [p[0] for p in chunk], [p[1] for p in chunk],
                padding=True, truncation=True, max_length=bundle.max_length,
                return_tensors="pt")
            logits = bundle.model(**enc).logits
            probs = torch.softmax(logits, dim=-1)[:, 1]
            scores.extend(float(p) for p in probs)
    return scores


def create_app(bundle: ModelBundle) -> FastAPI:
    app = FastAPI(title="pair scorer")

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "model": bundle.model_id}

    @app.post("/score")
    def score(body: ScoreIn):
        return {"scores": score_pairs(bundle, [(p.input, p.label)
                                               for p in body.pairs])}

    return app

"""Pair scorers: the pluggable cross-encoder seat.

Three implementations share one contract: a deterministic lexical scorer for
model-free runs, a ground-truth oracle for testing, and an HTTP client for a
remote model service.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Protocol

import requests

from .taxonomy import Taxonomy, normalize_code


class ScorerError(RuntimeError):
    """Transport or model failure while scoring."""


class ProtocolError(ScorerError):
    """The remote service violated the wire protocol."""


@dataclass(frozen=True)
class ScoreRequest:
    """One document against an ordered batch of candidate labels."""

    input_text: str
    candidates: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("score request needs at least one candidate")
        codes = [code for code, _ in self.candidates]
        if len(set(codes)) != len(codes):
            raise ValueError("candidate codes must be distinct")


class Scorer(Protocol):
    def score_batch(self, req: ScoreRequest) -> list[float]:
        """Scores in [0, 1], aligned to the request's candidate order."""
        ...


_BRACKET_TOKEN_RE = re.compile(r"\[[^\[\]]*\]")


def _trigrams(text: str) -> Counter:
    cleaned = " ".join(_BRACKET_TOKEN_RE.sub(" ", text).lower().split())
    return Counter(cleaned[i:i + 3] for i in range(len(cleaned) - 2))


def lexical_score(input_text: str, label_text: str) -> float:
    """Cosine similarity of character-trigram counts.

    Bracketed metadata tokens are stripped before counting, so the score
    depends only on the natural-language content of both sides.
    """
    a = _trigrams(input_text)
    b = _trigrams(label_text)
    if not a or not b:
        return 0.0
    if a == b:
        return 1.0
    dot = sum(count * b[gram] for gram, count in a.items())
    norm = math.sqrt(sum(c * c for c in a.values())) * math.sqrt(sum(c * c for c in b.values()))
    return min(1.0, dot / norm)


class LexicalScorer:
    """Deterministic stand-in scorer; no model required."""

    def score_batch(self, req: ScoreRequest) -> list[float]:
        return [lexical_score(req.input_text, label) for _, label in req.candidates]


class OracleScorer:
    """Scores 1 - u on the ground truth's ancestor chain and u elsewhere.

    The jitter u in [0, noise) is derived by hashing (seed, input, candidate),
    so repeated identical requests give identical scores.
    """

    def __init__(self, tax: Taxonomy, ground_truth, noise: float = 0.0, seed: int = 0):
        if not 0.0 <= noise < 0.5:
            raise ValueError(f"noise must be in [0, 0.5), got {noise}")
        self._true_chain = set(tax.ancestors_and_self(ground_truth))
        self._noise = noise
        self._seed = seed

    def _jitter(self, input_text: str, code: str) -> float:
        if self._noise == 0.0:
            return 0.0
        digest = hashlib.sha256(f"{self._seed}|{input_text}|{code}".encode()).digest()
        return int.from_bytes(digest[:8], "big") / 2**64 * self._noise

    def score_batch(self, req: ScoreRequest) -> list[float]:
        out = []
        for code, _ in req.candidates:
            key = normalize_code(code)
            u = self._jitter(req.input_text, key)
            out.append(1.0 - u if key in self._true_chain else u)
        return out


def oracle_scorer(tax: Taxonomy, ground_truth, noise: float = 0.0, seed: int = 0) -> OracleScorer:
    return OracleScorer(tax, ground_truth, noise=noise, seed=seed)


class RemoteScorer:
    """Client for the HTTP scorer service.

    Splits candidates into chunks of at most ``max_batch`` pairs, retries
    transport failures, and validates the response shape strictly.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, max_batch: int = 64,
                 retries: int = 2, session: requests.Session | None = None):
        if max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        self._endpoint = endpoint.rstrip("/")
        self._timeout = timeout
        self._max_batch = max_batch
        self._retries = retries
        self._session = session or requests.Session()

    def score_batch(self, req: ScoreRequest) -> list[float]:
        scores: list[float] = []
        for start in range(0, len(req.candidates), self._max_batch):
            chunk = req.candidates[start:start + self._max_batch]
            payload = {"pairs": [{"input": req.input_text, "label": label}
                                 for _, label in chunk]}
            body = self._post(payload, start, len(chunk))
            scores.extend(self._validate(body, chunk, start))
        return scores

    def health(self) -> dict:
        try:
            resp = self._session.get(self._endpoint + "/health", timeout=self._timeout)
        except requests.RequestException as e:
            raise ScorerError(f"health check failed: {e}") from e
        if resp.status_code != 200:
            raise ProtocolError(f"health check returned status {resp.status_code}")
        return resp.json()

    def _post(self, payload: dict, offset: int, size: int) -> dict:
        url = self._endpoint + "/score"
        last_error: Exception | None = None
        for _ in range(self._retries + 1):
            try:
                resp = self._session.post(url, json=payload, timeout=self._timeout)
            except requests.RequestException as e:
                last_error = e
                continue
            if resp.status_code >= 500:
                last_error = ScorerError(f"server returned {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolError(
                    f"unexpected status {resp.status_code} for candidates "
                    f"{offset}..{offset + size - 1}"
                )
            try:
                return resp.json()
            except ValueError:
                raise ProtocolError("response body is not JSON") from None
        raise ScorerError(
            f"transport failure for candidates {offset}..{offset + size - 1} "
            f"after {self._retries + 1} attempts: {last_error}"
        )

    @staticmethod
    def _validate(body: dict, chunk, offset: int) -> list[float]:
        scores = body.get("scores") if isinstance(body, dict) else None
        if not isinstance(scores, list) or len(scores) != len(chunk):
            got = len(scores) if isinstance(scores, list) else "none"
            raise ProtocolError(
                f"expected {len(chunk)} scores for candidates starting at "
                f"{offset}, got {got}"
            )
        out = []
        for i, value in enumerate(scores):
            if isinstance(value, bool) or not isinstance(value, (int, float)) \
                    or not 0.0 <= value <= 1.0:
                raise ProtocolError(
                    f"score {value!r} for candidate {offset + i} is outside [0, 1]"
                )
            out.append(float(value))
        return out

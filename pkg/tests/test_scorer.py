import itertools
import json
import math
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from hiertax.scorer import (LexicalScorer, OracleScorer, ProtocolError,
                            RemoteScorer, ScoreRequest, ScorerError,
                            lexical_score)

from synthdata import make_chain_taxonomy

FIXTURES = Path(__file__).parent / "fixtures" / "protocol"


def stub_score(input_text: str, label: str) -> float:
    return ((len(input_text) + 3 * len(label)) % 101) / 100.0


class _StubHandler(BaseHTTPRequestHandler):
    def do_GET(self):
        if self.path != "/health":
            self.send_error(404)
            return
        self._reply(200, {"status": "ok", "model": "stub-model"})

    def do_POST(self):
        if self.path != "/score":
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        self.server.seen_requests.append(body)
        mode = self.server.modes.pop(0) if self.server.modes else "ok"
        if mode == "fail":
            self.send_error(500)
            return
        scores = [stub_score(p["input"], p["label"]) for p in body["pairs"]]
        if mode == "short":
            scores = scores[:-1]
        elif mode == "out_of_range":
            scores = [1.5 for _ in scores]
        self._reply(200, {"scores": scores})

    def _reply(self, status, payload):
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.seen_requests = []
    server.modes = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server, f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join(timeout=5)


def reference_trigram_cosine(a: str, b: str) -> float:
    import re
    def grams(text):
        text = re.sub(r"\[[^\[\]]*\]", " ", text).lower()
        text = " ".join(text.split())
        return Counter(text[i:i + 3] for i in range(len(text) - 2))
    ga, gb = grams(a), grams(b)
    if not ga or not gb:
        return 0.0
    dot = sum(ga[g] * gb[g] for g in set(ga) | set(gb))
    return dot / (math.sqrt(sum(v * v for v in ga.values()))
                  * math.sqrt(sum(v * v for v in gb.values())))


class TestLexicalScore:
    def test_identical_texts_score_one(self):
        assert lexical_score("bread", "bread") == 1.0

    def test_disjoint_trigrams_score_zero(self):
        assert lexical_score("bread", "xyzzy") == 0.0

    def test_partial_overlap_matches_reference(self):
        got = lexical_score("bread supply", "bread products")
        expected = reference_trigram_cosine("bread supply", "bread products")
        assert 0.0 < got < 1.0
        assert got == pytest.approx(expected, abs=1e-12)

    def test_symmetry(self):
        pairs = [("fresh bread rolls", "bread supply"),
                 ("road works", "roadside maintenance")]
        for a, b in pairs:
            assert lexical_score(a, b) == pytest.approx(lexical_score(b, a))

    def test_metadata_tokens_are_ignored(self):
        base = lexical_score("fresh bread May", "bread products")
        decorated = lexical_score("fresh bread [MONTH] May [VALUE] [€€€]",
                                  "bread products")
        assert decorated == pytest.approx(base)

    def test_no_trigrams_scores_zero(self):
        assert lexical_score("ab", "ab") == 0.0


class TestScoreRequest:
    def test_empty_candidates_rejected(self):
        with pytest.raises(ValueError):
            ScoreRequest("x", ())

    def test_duplicate_codes_rejected(self):
        with pytest.raises(ValueError):
            ScoreRequest("x", (("15000000", "a"), ("15000000", "b")))


class TestLexicalScorer:
    def test_alignment_and_range(self):
        scorer = LexicalScorer()
        req = ScoreRequest("bread and rolls", (("1", "bread"), ("2", "steel")))
        scores = scorer.score_batch(req)
        assert len(scores) == 2
        assert all(0.0 <= s <= 1.0 for s in scores)
        assert scores[0] > scores[1]

    def test_permutation_equivariance(self):
        scorer = LexicalScorer()
        cands = [("1", "bread"), ("2", "steel pipes"), ("3", "fresh rolls")]
        base = scorer.score_batch(ScoreRequest("bread rolls", tuple(cands)))
        for perm in itertools.permutations(range(3)):
            permuted = scorer.score_batch(
                ScoreRequest("bread rolls", tuple(cands[i] for i in perm)))
            assert permuted == [base[i] for i in perm]


class TestOracleScorer:
    def test_noiseless_truth_path(self):
        tax = make_chain_taxonomy()
        scorer = OracleScorer(tax, "01110000")
        req = ScoreRequest("anything", (("01110000", "d"), ("01000000", "r"),
                                        ("01120000", "s"), ("15000000", "f")))
        assert scorer.score_batch(req) == [1.0, 1.0, 0.0, 0.0]

    def test_noise_stays_bounded(self):
        tax = make_chain_taxonomy()
        scorer = OracleScorer(tax, "01110000", noise=0.1, seed=4)
        req = ScoreRequest("anything", tuple((c, "d") for c in sorted(tax.nodes)))
        chain = set(tax.ancestors_and_self("01110000"))
        for (code, _), score in zip(req.candidates, scorer.score_batch(req)):
            if code in chain:
                assert score >= 0.9
            else:
                assert score <= 0.1

    def test_repeated_requests_identical(self):
        tax = make_chain_taxonomy()
        scorer = OracleScorer(tax, "01110000", noise=0.3, seed=7)
        req = ScoreRequest("doc", (("01000000", "a"), ("02000000", "b")))
        assert scorer.score_batch(req) == scorer.score_batch(req)

    def test_noise_bound_validated(self):
        tax = make_chain_taxonomy()
        with pytest.raises(ValueError):
            OracleScorer(tax, "01110000", noise=0.5)


class TestRemoteScorer:
    def test_golden_requests_round_trip(self, stub_server):
        server, url = stub_server
        scorer = RemoteScorer(url, max_batch=64)
        bodies = json.loads((FIXTURES / "requests.json").read_text(encoding="utf-8"))
        for body in bodies:
            pairs = body["pairs"]
            req = ScoreRequest(pairs[0]["input"],
                               tuple((str(i), p["label"]) for i, p in enumerate(pairs)))
            scores = scorer.score_batch(req)
            assert scores == [stub_score(pairs[0]["input"], p["label"]) for p in pairs]

    def test_health_matches_fixture(self, stub_server):
        _, url = stub_server
        spec = json.loads((FIXTURES / "health.json").read_text(encoding="utf-8"))
        body = RemoteScorer(url).health()
        assert set(spec["required_keys"]) <= set(body)
        assert body["status"] == spec["status"]

    def test_chunking_arithmetic(self, stub_server):
        server, url = stub_server
        scorer = RemoteScorer(url, max_batch=64)
        req = ScoreRequest("doc", tuple((str(i), f"label {i}") for i in range(1000)))
        scores = scorer.score_batch(req)
        assert len(scores) == 1000
        assert len(server.seen_requests) == 16

    def test_chunking_invariance(self, stub_server):
        server, url = stub_server
        req = ScoreRequest("doc", tuple((str(i), f"label {i}") for i in range(10)))
        small = RemoteScorer(url, max_batch=3).score_batch(req)
        big = RemoteScorer(url, max_batch=100).score_batch(req)
        assert small == big

    def test_length_mismatch_is_a_protocol_error(self, stub_server):
        server, url = stub_server
        server.modes = ["short"]
        scorer = RemoteScorer(url)
        with pytest.raises(ProtocolError, match="expected 2 scores"):
            scorer.score_batch(ScoreRequest("d", (("1", "a"), ("2", "b"))))

    def test_out_of_range_is_a_protocol_error(self, stub_server):
        server, url = stub_server
        server.modes = ["out_of_range"]
        with pytest.raises(ProtocolError, match="outside"):
            RemoteScorer(url).score_batch(ScoreRequest("d", (("1", "a"),)))

    def test_retries_then_succeeds(self, stub_server):
        server, url = stub_server
        server.modes = ["fail", "fail"]
        scorer = RemoteScorer(url, retries=2)
        scores = scorer.score_batch(ScoreRequest("d", (("1", "abc"),)))
        assert scores == [stub_score("d", "abc")]

    def test_persistent_failure_names_candidates(self, stub_server):
        server, url = stub_server
        server.modes = ["fail", "fail", "fail"]
        with pytest.raises(ScorerError, match="candidates 0..1"):
            RemoteScorer(url, retries=2).score_batch(
                ScoreRequest("d", (("1", "a"), ("2", "b"))))

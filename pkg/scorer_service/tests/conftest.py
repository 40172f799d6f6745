import pytest

from toydata import toy_pairs

from scorer_service.bundle import build_base_bundle


@pytest.fixture(scope="session")
def tiny_bundle():
    rows = toy_pairs(60, seed=3)
    texts = [r["input_text"] for r in rows] + [r["label_text"] for r in rows]
    return build_base_bundle(texts, vocab_size=800, hidden_size=64,
                             num_layers=2, num_heads=2, max_length=64, seed=1)

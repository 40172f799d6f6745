import json
import time

import pytest

from scorer_service.app import score_pairs
from scorer_service.bundle import ModelBundle, build_base_bundle
from scorer_service.finetune import (FinetuneError, fine_tune, load_pairs,
                                     pair_accuracy)

from toydata import toy_pairs, write_pairs


class TestLoadPairs:
    def test_reads_generated_schema(self, tmp_path):
        path = write_pairs(toy_pairs(10, seed=0), tmp_path / "pairs.jsonl")
        pairs = load_pairs(path)
        assert len(pairs) == 10
        assert pairs[0].polarity is True

    def test_bad_line_reports_position(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text('{"input_text": "x"}\n', encoding="utf-8")
        with pytest.raises(FinetuneError, match="1"):
            load_pairs(path)


class TestFineTune:
    def test_toy_corpus_reaches_point_nine_accuracy(self, tmp_path):
        path = write_pairs(toy_pairs(200, seed=1), tmp_path / "pairs.jsonl")
        start = time.time()
        bundle, metrics = fine_tune([path], epochs=5, seed=0)
        elapsed = time.time() - start
        assert metrics["train_accuracy"] >= 0.9
        assert elapsed < 600
        print(f"toy fine-tune: train accuracy {metrics['train_accuracy']:.3f} "
              f"in {elapsed:.0f}s")

    def test_zero_epochs_scores_hover_near_half(self, tmp_path):
        rows = toy_pairs(40, seed=2)
        path = write_pairs(rows, tmp_path / "pairs.jsonl")
        bundle, _ = fine_tune([path], epochs=0, seed=0)
        scores = score_pairs(bundle, [(r["input_text"], r["label_text"])
                                      for r in rows])
        mean = sum(scores) / len(scores)
        assert 0.2 <= mean <= 0.8

    def test_single_polarity_rejected(self, tmp_path):
        rows = [r for r in toy_pairs(20, seed=3) if r["polarity"]]
        path = write_pairs(rows, tmp_path / "pairs.jsonl")
        with pytest.raises(FinetuneError, match="both polarities"):
            fine_tune([path], epochs=1)

    def test_one_file_per_epoch_cycles(self, tmp_path):
        files = [write_pairs(toy_pairs(24, seed=10 + e), tmp_path / f"e{e}.jsonl")
                 for e in range(2)]
        bundle, metrics = fine_tune(files, epochs=2, seed=0)
        assert "train_accuracy" in metrics

    def test_save_load_round_trip(self, tmp_path):
        path = write_pairs(toy_pairs(24, seed=4), tmp_path / "pairs.jsonl")
        bundle, _ = fine_tune([path], epochs=1, seed=0)
        out = tmp_path / "bundle"
        bundle.save(out)
        again = ModelBundle.load(out)
        probe = [("supply of sector alpha goods", "sector alpha")]
        assert score_pairs(again, probe) == pytest.approx(
            score_pairs(bundle, probe), abs=1e-6)
        assert again.model_id == bundle.model_id


class TestPairAccuracy:
    def test_perfectly_wrong_model_scores_zero(self, tmp_path):
        rows = toy_pairs(16, seed=5)
        path = write_pairs(rows, tmp_path / "pairs.jsonl")
        pairs = load_pairs(path)
        texts = [p.input_text for p in pairs] + [p.label_text for p in pairs]
        bundle = build_base_bundle(texts, vocab_size=500, hidden_size=32,
                                   num_layers=1, num_heads=2, seed=0)
        acc = pair_accuracy(bundle, pairs)
        assert 0.0 <= acc <= 1.0

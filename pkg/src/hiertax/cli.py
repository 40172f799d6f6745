"""Single command-line entry point for reproducible runs.

Every run resolves its options as CLI flag > config file > default, writes
outputs atomically, and drops a manifest (input hashes, resolved config,
seed, version) next to each primary output.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import random
import sys
import tempfile
from collections import Counter
from pathlib import Path

from . import __version__
from .baselines import (BaselineError, baseline_predict, build_features,
                        load_model, record_features, save_model, train_baseline)
from .encoding import EncodingError, read_records
from .inference import (InferenceConfig, PredictionResult, RecordOutcome,
                        classify_corpus, predict_hybrid, unseen_subtree_filter)
from .metrics import MetricsError, Ranking, aggregate, imbalance
from .sampling import SamplingError, generate_epoch
from .scorer import LexicalScorer, OracleScorer, RemoteScorer, ScorerError
from .stopper import StopperWeights, build_stopper_dataset, train_stopper
from .taxonomy import TaxonomyError, normalize_code, parse_taxonomy

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

SCORER_URL_ENV = "HIERTAX_SCORER_URL"


class CliUsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliUsageError(message)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent) or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
    except BaseException:
        os.unlink(tmp)
        raise
    os.replace(tmp, path)


def _write_manifest(out_path: Path, command: list[str], resolved: dict,
                    inputs: list[Path]) -> None:
    manifest = {
        "version": __version__,
        "command": command,
        "config": resolved,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": [out_path.name],
    }
    _atomic_write_text(Path(str(out_path) + ".manifest.json"),
                       json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict):
        raise CliUsageError("config file must hold a JSON object")
    return obj


def _resolve(args: argparse.Namespace, config: dict, name: str, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _build_scorer_factory(spec: str, tax, seed: int, oracle_noise: float):
    if spec == "lexical":
        shared = LexicalScorer()
        return lambda rec: shared, "lexical"
    if spec == "oracle":
        def factory(rec):
            if rec.cpv is None:
                raise SamplingError(f"record {rec.id!r} has no cpv for the oracle scorer")
            return OracleScorer(tax, rec.cpv, noise=oracle_noise, seed=seed)
        return factory, "oracle"
    if spec == "remote" or spec.startswith("remote:"):
        url = spec[len("remote:"):] if spec.startswith("remote:") else ""
        url = url or os.environ.get(SCORER_URL_ENV, "")
        if not url:
            raise CliUsageError(
                f"remote scorer needs a URL (remote:<url> or ${SCORER_URL_ENV})"
            )
        shared = RemoteScorer(url)
        return lambda rec: shared, f"remote:{url}"
    raise CliUsageError(f"unknown scorer {spec!r}")


def _load_stopper(spec: str | None) -> StopperWeights | None:
    if spec in (None, "off"):
        return None
    return StopperWeights.load(spec)


def _prediction_line(tax, outcome: RecordOutcome) -> str:
    if outcome.error is not None:
        return json.dumps({"id": outcome.record_id, "error": outcome.error})
    result = outcome.result
    return json.dumps({
        "id": outcome.record_id,
        "abstained": result.abstained,
        "ranked": [{"code": tax.full_code(code), "score": score}
                   for code, score in result.ranked],
        "visited_nodes": result.visited_nodes,
        "scorer_calls": result.scorer_calls,
    })


def _write_outcomes(tax, outcomes, out_path: Path, trace_path: Path | None) -> None:
    _atomic_write_text(out_path, "".join(_prediction_line(tax, o) + "\n"
                                         for o in outcomes))
    if trace_path is not None:
        lines = [json.dumps(o.trace.to_dict()) + "\n"
                 for o in outcomes if o.trace is not None]
        _atomic_write_text(trace_path, "".join(lines))


def cmd_taxonomy_stats(args, config, argv) -> int:
    tax = parse_taxonomy(args.file, default_lang=_resolve(args, config, "lang", "en"))
    stats = tax.stats()
    rows = [("summary", "n_classes", stats.n_classes),
            ("summary", "n_leaves", stats.n_leaves),
            ("summary", "n_roots", stats.n_roots),
            ("summary", "max_depth", stats.max_depth),
            ("summary", "mean_children", f"{stats.mean_children:.6f}"),
            ("summary", "sd_children", f"{stats.sd_children:.6f}")]
    rows += [("classes_per_depth", d, c) for d, c in stats.classes_per_depth.items()]
    rows += [("children_histogram", k, v) for k, v in stats.children_histogram.items()]
    rows += [("description_word_counts", k, v)
             for k, v in stats.description_word_counts.items()]
    buf = ["section,key,value"]
    buf += [f"{s},{k},{v}" for s, k, v in rows]
    out = Path(args.out)
    _atomic_write_text(out, "\n".join(buf) + "\n")
    _write_manifest(out, argv, {"file": str(args.file)}, [Path(args.file)])
    return EXIT_OK


def split_dataset(lines: list[str], test_fraction: float, n_unseen_classes: int,
                  seed: int) -> tuple[list[str], list[str], set[str]]:
    """Random train/test split plus a forced set of train-unseen classes.

    When unseen classes are requested, every other class keeps at least one
    training instance so exactly the chosen classes end up unseen.
    """
    labels = []
    for i, line in enumerate(lines, start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise EncodingError(f"line {i}: {e}") from None
        if not obj.get("cpv"):
            raise CliUsageError(f"line {i}: split needs a cpv label on every record")
        labels.append(normalize_code(obj["cpv"]))

    rng = random.Random(seed)
    order = list(range(len(lines)))
    rng.shuffle(order)
    n_test = round(len(lines) * test_fraction)
    in_test = set(order[:n_test])

    classes = sorted(set(labels))
    if n_unseen_classes > 0:
        if n_unseen_classes >= len(classes):
            raise CliUsageError(
                f"cannot hold out {n_unseen_classes} of {len(classes)} classes"
            )
        chosen = set(rng.sample(classes, n_unseen_classes))
        for i, y in enumerate(labels):
            if y in chosen:
                in_test.add(i)
        by_class: dict[str, list[int]] = {}
        for i, y in enumerate(labels):
            by_class.setdefault(y, []).append(i)
        for y, idxs in by_class.items():
            if y not in chosen and all(i in in_test for i in idxs):
                in_test.discard(idxs[0])
    train = [lines[i] for i in range(len(lines)) if i not in in_test]
    test = [lines[i] for i in range(len(lines)) if i in in_test]
    if not train:
        raise CliUsageError("split left the training set empty")
    seen = {labels[i] for i in range(len(lines)) if i not in in_test}
    return train, test, seen


def cmd_split(args, config, argv) -> int:
    fraction = float(_resolve(args, config, "test_fraction", 0.2))
    n_unseen = int(_resolve(args, config, "unseen_classes", 0))
    seed = int(_resolve(args, config, "seed", 0))
    raw = [line.strip() for line in
           Path(args.data).read_text(encoding="utf-8").splitlines() if line.strip()]
    train, test, seen = split_dataset(raw, fraction, n_unseen, seed)
    out_train, out_test, out_seen = Path(args.out_train), Path(args.out_test), Path(args.out_seen)
    _atomic_write_text(out_train, "".join(line + "\n" for line in train))
    _atomic_write_text(out_test, "".join(line + "\n" for line in test))
    _atomic_write_text(out_seen, "".join(code + "\n" for code in sorted(seen)))
    _write_manifest(out_train, argv,
                    {"test_fraction": fraction, "unseen_classes": n_unseen, "seed": seed},
                    [Path(args.data)])
    return EXIT_OK


def cmd_pairs_generate(args, config, argv) -> int:
    seed = int(_resolve(args, config, "seed", 0))
    epoch = int(_resolve(args, config, "epoch", 0))
    lang = _resolve(args, config, "lang", "en")
    tax = parse_taxonomy(args.taxonomy, default_lang=lang)
    records = read_records(args.data)
    lines = []
    for pair in generate_epoch(records, tax, seed, epoch, lang=lang,
                               skip_errors=args.skip_errors):
        lines.append(json.dumps({
            "record_id": pair.record_id,
            "input_text": pair.pair.input_text,
            "label_text": pair.pair.label_text,
            "polarity": pair.polarity,
            "candidate": tax.full_code(pair.candidate),
        }))
    out = Path(args.out)
    _atomic_write_text(out, "".join(line + "\n" for line in lines))
    _write_manifest(out, argv, {"seed": seed, "epoch": epoch, "lang": lang},
                    [Path(args.data), Path(args.taxonomy)])
    return EXIT_OK


def cmd_stopper_train(args, config, argv) -> int:
    hidden = int(_resolve(args, config, "hidden", 16))
    lr = float(_resolve(args, config, "lr", 1e-3))
    epochs = int(_resolve(args, config, "epochs", 500))
    seed = int(_resolve(args, config, "seed", 0))
    tax = parse_taxonomy(args.taxonomy) if args.taxonomy else None
    traces = [json.loads(line) for line in
              Path(args.traces).read_text(encoding="utf-8").splitlines() if line.strip()]
    examples = build_stopper_dataset(traces, tax)
    weights = train_stopper(examples, hidden_size=hidden, lr=lr,
                            epochs=epochs, seed=seed)
    out = Path(args.out)
    _atomic_write_text(out, json.dumps(weights.to_json()) + "\n")
    inputs = [Path(args.traces)] + ([Path(args.taxonomy)] if args.taxonomy else [])
    _write_manifest(out, argv,
                    {"hidden": hidden, "lr": lr, "epochs": epochs, "seed": seed},
                    inputs)
    return EXIT_OK


def cmd_classify(args, config, argv) -> int:
    seed = int(_resolve(args, config, "seed", 0))
    threshold = float(_resolve(args, config, "threshold", 0.5))
    lang = _resolve(args, config, "lang", "en")
    parallel = int(_resolve(args, config, "parallel", 1))
    noise = float(_resolve(args, config, "oracle_noise", 0.0))
    max_results = _resolve(args, config, "max_results", None)
    tax = parse_taxonomy(args.taxonomy, default_lang=lang)
    records = read_records(args.data)
    factory, scorer_name = _build_scorer_factory(args.scorer, tax, seed, noise)
    weights = _load_stopper(args.stopper)
    cfg = InferenceConfig(threshold=threshold, use_stopper=weights is not None,
                          max_results=int(max_results) if max_results else None,
                          language=lang)
    outcomes = classify_corpus(records, tax, factory, weights, cfg,
                               parallelism=parallel, strict=args.strict,
                               collect_traces=args.trace is not None)
    out = Path(args.out)
    _write_outcomes(tax, outcomes, out, Path(args.trace) if args.trace else None)
    resolved = {"scorer": scorer_name, "threshold": threshold, "lang": lang,
                "seed": seed, "parallel": parallel,
                "stopper": args.stopper or "off"}
    _write_manifest(out, argv, resolved, [Path(args.data), Path(args.taxonomy)])
    total_calls = sum(o.result.scorer_calls for o in outcomes if o.result)
    logger.info("classified %d records with %d scorer calls", len(outcomes), total_calls)
    if any(o.error is not None for o in outcomes):
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_baseline_train(args, config, argv) -> int:
    d = int(_resolve(args, config, "dim", 256))
    min_df = int(_resolve(args, config, "min_df", 5))
    tax = parse_taxonomy(args.taxonomy)
    records = read_records(args.data)
    labeled = [r for r in records if r.cpv]
    if len(labeled) != len(records):
        raise CliUsageError("baseline training needs a cpv label on every record")
    space, X = build_features(labeled, min_df=min_df)
    model = train_baseline(X, [r.cpv for r in labeled], args.strategy, tax,
                           d=d, space=space)
    out = Path(args.out)
    save_model(model, out)
    _write_manifest(out, argv, {"strategy": args.strategy, "dim": d, "min_df": min_df},
                    [Path(args.data), Path(args.taxonomy)])
    return EXIT_OK


def cmd_baseline_classify(args, config, argv) -> int:
    threshold = float(_resolve(args, config, "threshold", 0.5))
    max_results = _resolve(args, config, "max_results", None)
    model = load_model(args.model)
    tax = parse_taxonomy(args.taxonomy) if args.taxonomy else model.skeleton_taxonomy()
    weights = _load_stopper(args.stopper)
    cfg = InferenceConfig(threshold=threshold, use_stopper=weights is not None,
                          max_results=int(max_results) if max_results else None)
    records = read_records(args.data)
    outcomes = []
    for rec in records:
        try:
            x = record_features(model, rec)
            result = baseline_predict(model, x, tax, cfg, stopper_weights=weights)
            outcomes.append(RecordOutcome(rec.id, result, None, None))
        except Exception as e:
            if args.strict:
                raise
            outcomes.append(RecordOutcome(rec.id, None, None,
                                          f"{type(e).__name__}: {e}"))
    out = Path(args.out)
    _write_outcomes(tax, outcomes, out, None)
    inputs = [Path(args.data), Path(args.model)]
    if args.taxonomy:
        inputs.append(Path(args.taxonomy))
    _write_manifest(out, argv, {"threshold": threshold}, inputs)
    return EXIT_RUNTIME if any(o.error for o in outcomes) else EXIT_OK


def cmd_hybrid_classify(args, config, argv) -> int:
    seed = int(_resolve(args, config, "seed", 0))
    threshold = float(_resolve(args, config, "threshold", 0.5))
    lang = _resolve(args, config, "lang", "en")
    noise = float(_resolve(args, config, "oracle_noise", 0.0))
    tax = parse_taxonomy(args.taxonomy, default_lang=lang)
    model = load_model(args.model)
    weights = _load_stopper(args.stopper)
    factory, scorer_name = _build_scorer_factory(args.scorer, tax, seed, noise)
    cfg = InferenceConfig(threshold=threshold, use_stopper=weights is not None,
                          language=lang)
    allowed = unseen_subtree_filter(tax, model.seen_classes)
    records = read_records(args.data)
    outcomes = []
    for rec in records:
        try:
            result = predict_hybrid(rec, tax, model, factory(rec), weights, cfg,
                                    allowed=allowed)
            outcomes.append(RecordOutcome(rec.id, result, None, None))
        except Exception as e:
            if args.strict:
                raise
            outcomes.append(RecordOutcome(rec.id, None, None,
                                          f"{type(e).__name__}: {e}"))
    out = Path(args.out)
    _write_outcomes(tax, outcomes, out, None)
    _write_manifest(out, argv, {"scorer": scorer_name, "threshold": threshold},
                    [Path(args.data), Path(args.taxonomy), Path(args.model)])
    return EXIT_RUNTIME if any(o.error for o in outcomes) else EXIT_OK


def _read_predictions(path: Path) -> dict[str, list[tuple[str, float]]]:
    ranked_by_id: dict[str, list[tuple[str, float]]] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if "error" in obj:
            logger.warning("prediction %s carries an error; treated as abstention",
                           obj.get("id"))
            ranked_by_id[str(obj["id"])] = []
            continue
        ranked_by_id[str(obj["id"])] = [
            (normalize_code(e["code"]), float(e["score"])) for e in obj["ranked"]
        ]
    return ranked_by_id


def cmd_evaluate(args, config, argv) -> int:
    k_values = tuple(int(k) for k in
                     str(_resolve(args, config, "k", "1,2,3,4,5")).split(","))
    tax = parse_taxonomy(args.taxonomy)
    preds = _read_predictions(Path(args.pred))
    truth_records = read_records(args.truth)
    rankings = []
    for rec in truth_records:
        if rec.cpv is None:
            raise CliUsageError(f"truth record {rec.id!r} has no cpv label")
        if rec.id not in preds:
            raise CliUsageError(f"no prediction found for record {rec.id!r}")
        rankings.append(Ranking(rec.id, normalize_code(rec.cpv),
                                tuple(preds[rec.id])))
    train_freq: Counter[str] = Counter()
    if args.train:
        for rec in read_records(args.train):
            if rec.cpv:
                train_freq[normalize_code(rec.cpv)] += 1
    if args.seen_classes:
        seen = {normalize_code(line) for line in
                Path(args.seen_classes).read_text(encoding="utf-8").splitlines()
                if line.strip()}
    else:
        seen = set(train_freq)
    report = aggregate(rankings, tax, train_class_freq=train_freq,
                       seen_set=seen, k_values=k_values)
    out = Path(args.out)
    _atomic_write_text(out, json.dumps(report.to_dict(), indent=2) + "\n")
    depth_csv = Path(args.depth_csv) if args.depth_csv else \
        out.with_name(out.stem + "_per_depth.csv")
    writer = ["depth,micro,macro,micro_seen,micro_unseen,macro_seen,macro_unseen"]
    for depth in sorted(report.per_depth):
        row = report.per_depth[depth]
        writer.append(",".join([str(depth)] + [f"{row[k]:.6f}" for k in
                                               ("micro", "macro", "micro_seen",
                                                "micro_unseen", "macro_seen",
                                                "macro_unseen")]))
    _atomic_write_text(depth_csv, "\n".join(writer) + "\n")
    inputs = [Path(args.pred), Path(args.truth), Path(args.taxonomy)]
    if args.train:
        inputs.append(Path(args.train))
    _write_manifest(out, argv, {"k": list(k_values)}, inputs)
    return EXIT_OK


def cmd_imbalance(args, config, argv) -> int:
    tax = parse_taxonomy(args.taxonomy)
    records = read_records(args.data)
    labels = [r.cpv for r in records if r.cpv]
    if not labels:
        raise CliUsageError("no labeled records in the dataset")
    report = imbalance(labels, tax)
    out = Path(args.out)
    payload = {
        "hmeanir": report.hmeanir,
        "n_zero_support": report.n_zero_support,
        "n_supported": len(report.irlbp),
        "irlbp": {tax.full_code(c): v for c, v in sorted(report.irlbp.items())},
    }
    _atomic_write_text(out, json.dumps(payload, indent=2) + "\n")
    _write_manifest(out, argv, {}, [Path(args.data), Path(args.taxonomy)])
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--parallel", type=int, default=None)
    parser.add_argument("--log-level", default="WARNING")
    parser.add_argument("--config", default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="hiertax", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    tax_p = sub.add_parser("taxonomy")
    tax_sub = tax_p.add_subparsers(dest="subcommand", required=True)
    stats_p = tax_sub.add_parser("stats")
    stats_p.add_argument("--file", required=True)
    stats_p.add_argument("--out", required=True)
    stats_p.add_argument("--lang", default=None)
    _add_common(stats_p)
    stats_p.set_defaults(handler=cmd_taxonomy_stats)

    split_p = sub.add_parser("split")
    split_p.add_argument("--data", required=True)
    split_p.add_argument("--test-fraction", dest="test_fraction", type=float, default=None)
    split_p.add_argument("--unseen-classes", dest="unseen_classes", type=int, default=None)
    split_p.add_argument("--out-train", required=True)
    split_p.add_argument("--out-test", required=True)
    split_p.add_argument("--out-seen", required=True)
    _add_common(split_p)
    split_p.set_defaults(handler=cmd_split)

    pairs_p = sub.add_parser("pairs")
    pairs_sub = pairs_p.add_subparsers(dest="subcommand", required=True)
    gen_p = pairs_sub.add_parser("generate")
    gen_p.add_argument("--data", required=True)
    gen_p.add_argument("--taxonomy", required=True)
    gen_p.add_argument("--epoch", type=int, default=None)
    gen_p.add_argument("--lang", default=None)
    gen_p.add_argument("--out", required=True)
    gen_p.add_argument("--skip-errors", action="store_true")
    _add_common(gen_p)
    gen_p.set_defaults(handler=cmd_pairs_generate)

    stop_p = sub.add_parser("stopper")
    stop_sub = stop_p.add_subparsers(dest="subcommand", required=True)
    strain_p = stop_sub.add_parser("train")
    strain_p.add_argument("--traces", required=True)
    strain_p.add_argument("--taxonomy", default=None,
                          help="optional; ancestry defaults to digit prefixes")
    strain_p.add_argument("--out", required=True)
    strain_p.add_argument("--hidden", type=int, default=None)
    strain_p.add_argument("--lr", type=float, default=None)
    strain_p.add_argument("--epochs", type=int, default=None)
    _add_common(strain_p)
    strain_p.set_defaults(handler=cmd_stopper_train)

    cl_p = sub.add_parser("classify")
    cl_p.add_argument("--data", required=True)
    cl_p.add_argument("--taxonomy", required=True)
    cl_p.add_argument("--scorer", default="lexical")
    cl_p.add_argument("--stopper", default=None)
    cl_p.add_argument("--threshold", type=float, default=None)
    cl_p.add_argument("--lang", default=None)
    cl_p.add_argument("--max-results", dest="max_results", type=int, default=None)
    cl_p.add_argument("--oracle-noise", dest="oracle_noise", type=float, default=None)
    cl_p.add_argument("--out", required=True)
    cl_p.add_argument("--trace", default=None)
    cl_p.add_argument("--strict", action="store_true")
    _add_common(cl_p)
    cl_p.set_defaults(handler=cmd_classify)

    base_p = sub.add_parser("baseline")
    base_sub = base_p.add_subparsers(dest="subcommand", required=True)
    btrain_p = base_sub.add_parser("train")
    btrain_p.add_argument("--strategy", required=True,
                          choices=["bigbang", "topdown", "pernode"])
    btrain_p.add_argument("--data", required=True)
    btrain_p.add_argument("--taxonomy", required=True)
    btrain_p.add_argument("--dim", type=int, default=None)
    btrain_p.add_argument("--min-df", dest="min_df", type=int, default=None)
    btrain_p.add_argument("--out", required=True)
    _add_common(btrain_p)
    btrain_p.set_defaults(handler=cmd_baseline_train)
    bclass_p = base_sub.add_parser("classify")
    bclass_p.add_argument("--model", required=True)
    bclass_p.add_argument("--data", required=True)
    bclass_p.add_argument("--taxonomy", default=None,
                          help="optional; the artifact bundles the tree")
    bclass_p.add_argument("--threshold", type=float, default=None)
    bclass_p.add_argument("--stopper", default=None)
    bclass_p.add_argument("--max-results", dest="max_results", type=int, default=None)
    bclass_p.add_argument("--out", required=True)
    bclass_p.add_argument("--strict", action="store_true")
    _add_common(bclass_p)
    bclass_p.set_defaults(handler=cmd_baseline_classify)

    hy_p = sub.add_parser("hybrid")
    hy_sub = hy_p.add_subparsers(dest="subcommand", required=True)
    hyc_p = hy_sub.add_parser("classify")
    hyc_p.add_argument("--model", required=True)
    hyc_p.add_argument("--data", required=True)
    hyc_p.add_argument("--taxonomy", required=True)
    hyc_p.add_argument("--scorer", default="lexical")
    hyc_p.add_argument("--stopper", default=None)
    hyc_p.add_argument("--threshold", type=float, default=None)
    hyc_p.add_argument("--lang", default=None)
    hyc_p.add_argument("--oracle-noise", dest="oracle_noise", type=float, default=None)
    hyc_p.add_argument("--out", required=True)
    hyc_p.add_argument("--strict", action="store_true")
    _add_common(hyc_p)
    hyc_p.set_defaults(handler=cmd_hybrid_classify)

    ev_p = sub.add_parser("evaluate")
    ev_p.add_argument("--pred", required=True)
    ev_p.add_argument("--truth", required=True)
    ev_p.add_argument("--taxonomy", required=True)
    ev_p.add_argument("--train", default=None)
    ev_p.add_argument("--seen-classes", dest="seen_classes", default=None)
    ev_p.add_argument("--k", default=None)
    ev_p.add_argument("--out", required=True)
    ev_p.add_argument("--depth-csv", dest="depth_csv", default=None)
    _add_common(ev_p)
    ev_p.set_defaults(handler=cmd_evaluate)

    im_p = sub.add_parser("imbalance")
    im_p.add_argument("--data", required=True)
    im_p.add_argument("--taxonomy", required=True)
    im_p.add_argument("--out", required=True)
    _add_common(im_p)
    im_p.set_defaults(handler=cmd_imbalance)
    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))
        config = _load_config(args.config)
        return args.handler(args, config, argv)
    except CliUsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TaxonomyError, EncodingError, SamplingError, MetricsError,
            BaselineError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ScorerError, RuntimeError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()

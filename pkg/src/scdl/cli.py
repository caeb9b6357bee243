"""Command-line entry points for annotation, noise injection, training and sweeps."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from .corpus import (
    BioValidationError,
    ConllFormatError,
    Gazetteer,
    TagVocabulary,
    distant_annotate,
    format_alteration_log,
    infer_vocab,
    inject_noise,
    parse_conll,
    spans_from_bio,
    write_conll,
)
from .tagger import load_checkpoint, predict_labels, save_checkpoint
from .training import (
    ABLATIONS,
    MODEL_ORDER,
    ScdlConfig,
    TrainingDiverged,
    pretrain,
    train,
)


def atomic_write_text(path, text: str) -> None:
    """Write-then-rename so interrupted runs never leave truncated files."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _load_corpus(path, vocab=None, repair=False):
    text = _read(path)
    if vocab is None:
        vocab = infer_vocab(text)
    return parse_conll(text, vocab, repair=repair), vocab


def _shared_vocab(*paths) -> TagVocabulary:
    types = set()
    for path in paths:
        types.update(infer_vocab(_read(path)).entity_types)
    return TagVocabulary(sorted(types))


def _track_checksum(sentences, track: str) -> str:
    h = hashlib.md5()
    for s in sentences:
        h.update(bytes(s.track(track)))
        h.update(b"\n")
    return h.hexdigest()


def _annotation_summary(sentences, distant_tags, vocab) -> dict:
    correct = incomplete = inaccurate = other = 0
    for sentence, tags in zip(sentences, distant_tags):
        gold_spans = spans_from_bio(sentence.track("gold"), vocab)
        pred_spans = {(s.start, s.end): s.entity_type for s in spans_from_bio(tags, vocab)}
        for span in gold_spans:
            got = pred_spans.get((span.start, span.end))
            if got == span.entity_type:
                correct += 1
            elif got is not None:
                inaccurate += 1
            elif all(tags[j] == 0 for j in range(span.start, span.end + 1)):
                incomplete += 1
            else:
                other += 1
    return {
        "gold_spans": correct + incomplete + inaccurate + other,
        "correct": correct,
        "incomplete": incomplete,
        "inaccurate": inaccurate,
        "other": other,
    }


def cmd_annotate(args) -> int:
    sentences, gold_vocab = _load_corpus(args.corpus)
    gaz = Gazetteer.parse(_read(args.gazetteer))
    gaz_types = sorted({t for types in gaz.entries.values() for t in types})
    vocab = TagVocabulary(sorted(set(gold_vocab.entity_types) | set(gaz_types)))
    rng = np.random.default_rng(args.seed)
    distant = [
        distant_annotate(
            s.tokens, gaz, vocab, coverage=args.coverage, ambiguity_rule=args.rule, rng=rng
        )
        for s in sentences
    ]
    out_sentences = [
        corpus_mod.AnnotatedSentence(list(s.tokens), gold=tags)
        for s, tags in zip(sentences, distant)
    ]
    atomic_write_text(args.out, write_conll(out_sentences, vocab, "gold"))
    summary = _annotation_summary(
        [corpus_mod.AnnotatedSentence(s.tokens, gold=_recode(s.track("gold"), gold_vocab, vocab)) for s in sentences],
        distant,
        vocab,
    )
    atomic_write_text(args.summary or args.out + ".summary.json", json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


def _recode(tags, src: TagVocabulary, dst: TagVocabulary) -> list[int]:
    return [dst.encode(src.decode(c)) for c in tags]


def cmd_inject(args) -> int:
    sentences, vocab = _load_corpus(args.corpus)
    noisy, log = inject_noise(sentences, args.k, vocab, seed=args.seed)
    atomic_write_text(args.out, write_conll(noisy, vocab, "noisy_i"))
    atomic_write_text(args.log or args.out + ".alterations.tsv", format_alteration_log(log))
    score = metrics_mod.refinery_report(noisy, vocab)
    print(f"altered {len(log)} mentions; noisy-vs-gold span F1 {score.f1:.4f}")
    return 0


def _metrics_record(point, ablation: str) -> str:
    return json.dumps(
        {
            "step": point.step,
            "model": point.model,
            "split": point.split,
            "precision": round(point.precision, 6),
            "recall": round(point.recall, 6),
            "f1": round(point.f1, 6),
            "ablation": ablation,
        }
    )


def _load_config(args) -> ScdlConfig:
    config = ScdlConfig.from_text(_read(args.config)) if args.config else ScdlConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "parallel", False):
        overrides["parallel"] = True
    ablate = getattr(args, "ablate", None)
    if ablate:
        overrides["ablations"] = frozenset(ablate)
    return replace(config, **overrides) if overrides else config


def cmd_pretrain(args) -> int:
    config = _load_config(args)
    vocab = _shared_vocab(args.train, args.dev)
    train_corpus, _ = _load_corpus(args.train, vocab)
    dev_corpus, _ = _load_corpus(args.dev, vocab)
    p1, p2 = pretrain(config, train_corpus, vocab)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.txt", config.to_text())
    gold = [s.track("gold") for s in dev_corpus]
    lines = []
    for name, params in (("net1", p1), ("net2", p2)):
        save_checkpoint(params, out / f"{name}.ckpt")
        score = metrics_mod.span_prf1(
            [predict_labels(params, s.tokens, vocab) for s in dev_corpus], gold, vocab
        )
        point = metrics_mod.CurvePoint(0, name, "dev", score.precision, score.recall, score.f1)
        lines.append(_metrics_record(point, ""))
        print(f"{name}: dev F1 {score.f1:.4f}")
    atomic_write_text(out / "metrics.jsonl", "\n".join(lines) + "\n")
    return 0


def _run_train(config, train_path, dev_path, out_dir, ablation_label: str) -> int:
    vocab = _shared_vocab(train_path, dev_path)
    train_corpus, _ = _load_corpus(train_path, vocab)
    dev_corpus, _ = _load_corpus(dev_path, vocab)
    out = Path(out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.txt", config.to_text())

    checksums = {
        "noisy_i_initial": _track_checksum(train_corpus, "noisy_i"),
        "noisy_ii_initial": _track_checksum(train_corpus, "noisy_ii"),
    }

    epochs_seen = []

    def on_epoch(epoch: int, state) -> None:
        epochs_seen.append(epoch)
        for name in MODEL_ORDER:
            pair = state.pair1 if name.endswith("1") else state.pair2
            params = pair.teacher if name.startswith("teacher") else pair.student
            save_checkpoint(params, ckpt_dir / f"{name}_epoch{epoch}.ckpt")

    result = train(config, train_corpus, dev_corpus, vocab, epoch_callback=on_epoch)

    checksums["noisy_i_final"] = _track_checksum(result.state.sentences, "noisy_i")
    checksums["noisy_ii_final"] = _track_checksum(result.state.sentences, "noisy_ii")

    lines = [_metrics_record(p, ablation_label) for p in result.history]
    atomic_write_text(out / "metrics.jsonl", "\n".join(lines) + "\n")
    atomic_write_text(out / "curve.csv", metrics_mod.emit_curve(result.history))
    refinery_lines = ["step,track,precision,recall,f1"]
    for step, track, score in result.refinery:
        refinery_lines.append(
            f"{step},{track},{score.precision:.6f},{score.recall:.6f},{score.f1:.6f}"
        )
    atomic_write_text(out / "refinery.csv", "\n".join(refinery_lines) + "\n")
    save_checkpoint(result.best_params, out / "best.ckpt")
    atomic_write_text(
        out / "best.json",
        json.dumps(
            {
                "model": result.best_model,
                "dev_f1": round(result.best_f1, 6),
                "ablation": ablation_label,
                "track_checksums": checksums,
            },
            indent=2,
        )
        + "\n",
    )
    print(f"best model {result.best_model} dev F1 {result.best_f1:.4f}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    label = ",".join(sorted(config.ablations))
    return _run_train(config, args.train, args.dev, args.out_dir, label)


def cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    text = _read(args.corpus)
    vocab = infer_vocab(text)
    if vocab.size != params.config.num_tags:
        raise ValueError(
            f"checkpoint expects {params.config.num_tags} tags, corpus has {vocab.size}"
        )
    sentences = parse_conll(text, vocab)
    gold = [s.track("gold") for s in sentences]
    score = metrics_mod.span_prf1(
        [predict_labels(params, s.tokens, vocab) for s in sentences], gold, vocab
    )
    print(
        f"precision {score.precision:.4f} recall {score.recall:.4f} f1 {score.f1:.4f}"
    )
    return 0


def cmd_ablate(args) -> int:
    base = _load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for ablation in ABLATIONS:
        config = replace(base, ablations=frozenset({ablation}))
        run_dir = out / ablation
        run_dir.mkdir(parents=True, exist_ok=True)
        _run_train(config, args.train, args.dev, run_dir, ablation)
    return 0


def _split_holdout(sentences, every: int = 5):
    dev = [s for i, s in enumerate(sentences) if i % every == 0]
    tr = [s for i, s in enumerate(sentences) if i % every != 0]
    return tr, dev


def cmd_sweep(args) -> int:
    ks = [float(k) for k in args.ks.split(",") if k.strip()]
    if not ks:
        raise ValueError("empty k list")
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not seeds:
        raise ValueError("empty seed list")
    config = _load_config(args)
    sentences, vocab = _load_corpus(args.corpus)
    base_train, dev = _split_holdout(sentences)
    rows = []
    for k in ks:
        for seed in seeds:
            noisy, _log = inject_noise(base_train, k, vocab, seed=seed)
            initial = metrics_mod.refinery_report(noisy, vocab)
            run_cfg = replace(config, seed=seed)
            scdl_result = train(run_cfg, noisy, dev, vocab)
            final = metrics_mod.refinery_report(scdl_result.state.sentences, vocab)
            baseline_cfg = replace(
                run_cfg,
                max_epochs=0,
                pretrain_epochs=config.pretrain_epochs + config.max_epochs,
            )
            baseline_result = train(baseline_cfg, noisy, dev, vocab)
            rows.append(
                (k, seed, "scdl", scdl_result.best_f1, initial.f1, final.f1)
            )
            rows.append(
                (k, seed, "pretrain_only", baseline_result.best_f1, initial.f1, initial.f1)
            )
    lines = ["k,seed,method,dev_f1,initial_refinery_f1,final_refinery_f1"]
    for k, seed, method, dev_f1, init_f1, final_f1 in rows:
        lines.append(
            f"{k:g},{seed},{method},{dev_f1:.6f},{init_f1:.6f},{final_f1:.6f}"
        )
    text = "\n".join(lines) + "\n"
    atomic_write_text(args.out, text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scdl",
        description="Self-collaborative denoising for distantly supervised sequence labeling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="gazetteer-based distant annotation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--gazetteer", required=True)
    p.add_argument("--coverage", type=float, default=1.0)
    p.add_argument("--rule", choices=("first", "random"), default="first")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", default=None)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("inject", help="replace a share of gold mentions with noise")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("pretrain", help="noisy-supervised warm-up only")
    p.add_argument("--config", default=None)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="full denoising run")
    p.add_argument("--config", default=None)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--ablate", action="append", choices=ABLATIONS, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against a gold corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run every ablation variant")
    p.add_argument("--config", default=None)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="noise-ratio sweep with a pretrain-only baseline")
    p.add_argument("--config", default=None)
    p.add_argument("--corpus", required=True)
    p.add_argument("--ks", required=True, help="comma-separated noise percentages")
    p.add_argument("--seeds", required=True, help="comma-separated run seeds")
    p.add_argument("--out", required=True)
    p.add_argument("--parallel", action="store_true")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 2
    except (ConllFormatError, BioValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: segment -> align -> build-pairs -> train -> eval -> search.

Exit codes: 0 success, 1 invalid data, 2 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import aligner as al
from .config import ConfigError, Phase, PipelineConfig, load_config
from .embed_core import EmbeddingStore, LookupEncoder, encode_many, nearest_neighbors, store_read
from .evaluation import (EvalReport, dataset_hash, mrr_bias, read_bias_corpus, read_passages, read_queries,
                         read_sts, retrieval_eval, sts_eval, translation_search_accuracy)
from .student import build_vocab, init_params, load_encoder, save_checkpoint
from .text_prep import (Language, ParallelPair, dedup_and_filter, read_document, read_pairs, read_sentences,
                        segment_document, write_pairs, write_sentences)
from .trainer import format_log, train

log = logging.getLogger("grc_embed")

SECTIONS_SUFFIX = ".sections"


class DataError(Exception):
    pass


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"no {what} given")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _encoder(checkpoint: str | None, store: str | None, what: str = "encoder"):
    if checkpoint:
        return load_encoder(_require(checkpoint, f"{what} checkpoint"))
    if store:
        return LookupEncoder.from_store(store_read(_require(store, f"{what} embedding store")))
    return None


def _model_id(args) -> str:
    return Path(args.checkpoint or args.store or "").name


# --- segment ---------------------------------------------------------------

def cmd_segment(args, cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    seg_cfg = cfg.segmentation
    if args.colon_as_raised_dot:
        seg_cfg = dataclasses.replace(seg_cfg, colon_as_raised_dot=True)
    for name in args.inputs:
        path = Path(name)
        if not path.is_file():
            raise FileNotFoundError(f"input file not found: {path}")
        sidecar = path.with_name(path.name + SECTIONS_SUFFIX)
        doc = read_document(path, Language(args.lang), sections_path=sidecar if sidecar.exists() else None)
        sentences, starts = segment_document(doc, seg_cfg)
        target = out / f"{path.stem}.tsv"
        write_sentences(target, sentences, starts if doc.section_breaks is not None else None)
        log.info("%s: %d segments -> %s", path, len(sentences), target)
    return 0


# --- align -----------------------------------------------------------------

def cmd_align(args, cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    src, src_sec = read_sentences(_require(args.src, "source sentence TSV"))
    tgt, tgt_sec = read_sentences(_require(args.tgt, "target sentence TSV"))
    overrides = {}
    if args.max_bead is not None:
        overrides["max_bead"] = args.max_bead
    if args.threshold is not None:
        overrides["score_threshold"] = args.threshold
    base = cfg.align_embed if args.method == "embed" else cfg.align
    align_cfg = dataclasses.replace(base, **overrides)

    encoder = dictionary = None
    if args.method == "embed":
        encoder = _encoder(args.checkpoint or cfg.checkpoint, args.store)
        if encoder is None:
            raise ConfigError("--method embed needs a trained model: pass --checkpoint CKPT "
                              "(from `train`) or --store EMBS with precomputed sentence embeddings")
    else:
        dict_path = args.dictionary or cfg.dictionary
        dictionary = al.read_dictionary(_require(dict_path, "dictionary")) if dict_path else al.BilingualDictionary()

    if src_sec and tgt_sec:
        log.info("per-section alignment: %d sections", len(src_sec))
    else:
        log.info("whole-document alignment (no section breaks on %s)",
                 "either side" if not (src_sec or tgt_sec) else "one side")
    if not src or not tgt:
        links = []
    else:
        links = al.align_sections(src, tgt, src_sec, tgt_sec, args.method, encoder=encoder,
                                  dictionary=dictionary, cfg=align_cfg)
    kept = al.filter_links(links, align_cfg.score_threshold)
    src_doc = src[0].doc_id if src else ""
    tgt_doc = tgt[0].doc_id if tgt else ""
    al.write_alignment(out / "alignment.tsv", kept, src_doc, tgt_doc)
    pairs = al.links_to_pairs(kept, src, tgt)
    write_pairs(out / "pairs.tsv", pairs)
    mean = float(np.mean([l.score for l in kept])) if kept else 0.0
    print(f"links: {len(kept)} (of {len(links)} before filtering) mean score: {mean:.4f}")
    if not kept:
        print(f"warning: zero links at threshold {align_cfg.score_threshold}", file=sys.stderr)
    return 0


# --- build-pairs -----------------------------------------------------------

def cmd_build_pairs(args, cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    pairs: list[ParallelPair] = []
    for name in args.inputs:
        pairs.extend(read_pairs(_require(name, "pair TSV")))
    min_chars = args.min_chars if args.min_chars is not None else cfg.min_chars
    kept = dedup_and_filter(pairs, min_chars)
    target = Path(args.output) if args.output else out / "pairs.tsv"
    write_pairs(target, kept)
    print(f"pairs: {len(kept)} kept of {len(pairs)}")
    return 0


# --- train -----------------------------------------------------------------

def _split_holdout(pairs: list[ParallelPair], size: int, seed: int) -> tuple[list[ParallelPair], list[ParallelPair]]:
    if size >= len(pairs):
        raise DataError(f"holdout size {size} leaves no training pairs (dataset has {len(pairs)})")
    rng = np.random.default_rng(seed)
    held = set(rng.choice(len(pairs), size=size, replace=False).tolist())
    return [p for i, p in enumerate(pairs) if i not in held], [p for i, p in enumerate(pairs) if i in held]


def cmd_train(args, cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    tcfg = cfg.train
    if args.objective:
        tcfg = dataclasses.replace(tcfg, objective=args.objective)
    tcfg = dataclasses.replace(tcfg, seed=cfg.seed)
    phases = list(cfg.phases)
    if args.pairs:
        phases = [Phase(p, args.epochs or tcfg.epochs) for p in args.pairs]
    if not phases:
        raise ConfigError("no training data: give --pairs or a 'phases' list in the config")

    datasets = [read_pairs(_require(ph.dataset, "pair TSV")) for ph in phases]
    holdout_size = args.holdout_size if args.holdout_size is not None else cfg.holdout_size
    last_train, holdout = _split_holdout(datasets[-1], holdout_size, cfg.seed)
    held_keys = {(p.source, p.target) for p in holdout}
    datasets = [[p for p in d if (p.source, p.target) not in held_keys] for d in datasets[:-1]] + [last_train]

    sts_items = read_sts(_require(cfg.sts, "STS file")) if cfg.sts else None
    if sts_items and not args.allow_sts_overlap:
        sts_texts = {t for it in sts_items for t in (it.a_grc, it.a_en, it.b_grc, it.b_en)}
        leaked = sum(1 for d in datasets for p in d if p.source in sts_texts or p.target in sts_texts)
        if leaked:
            raise DataError(f"{leaked} training pair(s) contain STS sentences; "
                            "remove them or pass --allow-sts-overlap")

    teacher = _encoder(args.teacher_checkpoint or cfg.teacher_checkpoint,
                       args.teacher_store or cfg.teacher_store, "teacher")
    if tcfg.objective == "distill" and teacher is None:
        raise ConfigError("distillation needs a teacher: set teacher_checkpoint or teacher_store")
    dim_out = teacher.dim if teacher is not None else cfg.student_dim_in

    vocab = build_vocab((t for d in datasets for p in d for t in (p.source, p.target)),
                        cfg.vocab_size, cfg.oov_buckets)
    params = init_params(vocab, cfg.student_dim_in, dim_out, seed=cfg.seed)

    header = [f"objective={tcfg.objective}", f"seed={cfg.seed}", f"holdout={len(holdout)}"]
    rows: list[str] = []
    offset = 0
    result = None
    for k, (phase, data) in enumerate(zip(phases, datasets), start=1):
        pcfg = dataclasses.replace(tcfg, epochs=phase.epochs)
        log.info("phase %d: %s, %d pairs, %d epochs", k, Path(phase.dataset).name, len(data), phase.epochs)
        result = train(pcfg, data, params, vocab, holdout, teacher=teacher, sts=sts_items, step_offset=offset)
        rows.append(f"# phase={k} dataset={Path(phase.dataset).name} epochs={phase.epochs} pairs={len(data)} "
                    f"best_step={result.best_step}\n")
        rows.append(format_log(result.log).split("\n", 1)[1])
        offset = result.log[-1].step
        params = result.params.copy()

    with open(out / "train_log.tsv", "w", encoding="utf-8", newline="") as fh:
        fh.write(format_log([], header))
        fh.writelines(rows)
    ckpt_config = {
        "train": dataclasses.asdict(tcfg),
        "phases": [{"dataset": Path(p.dataset).name, "epochs": p.epochs} for p in phases],
        "holdout_size": len(holdout),
    }
    save_checkpoint(out / "student.ckpt", result.params, vocab, ckpt_config, tcfg.max_seq_tokens)
    print(f"best step {result.best_step} composite {result.best_composite:.4f} -> {out / 'student.ckpt'}")
    return 0


# --- eval ------------------------------------------------------------------

def cmd_eval(args, cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    encoder = _encoder(args.checkpoint or cfg.checkpoint, args.store)
    if encoder is None:
        raise ConfigError("eval needs --checkpoint or --store")
    model_id = _model_id(args)
    kind = args.kind
    if kind == "sts":
        report = sts_eval(read_sts(_require(args.data or cfg.sts, "STS file")), encoder, model_id)
    elif kind == "translation":
        pairs = read_pairs(_require(args.data, "pair TSV"))
        src = encode_many(encoder, [p.source for p in pairs])
        tgt = encode_many(encoder, [p.target for p in pairs])
        report = EvalReport({"accuracy": 100 * translation_search_accuracy(src, tgt)}, model_id,
                            dataset_hash([(p.source, p.target) for p in pairs]), counts={"pairs": len(pairs)})
    elif kind == "retrieval":
        ids, texts = read_passages(_require(args.data, "passage TSV"))
        queries = read_queries(_require(args.queries, "query TSV"))
        store = EmbeddingStore.from_texts(encoder, ids, texts)
        report = retrieval_eval(queries, store, encoder, args.k, model_id)
    else:
        translations = {}
        for item in args.translation or []:
            name, _, path = item.partition("=")
            if not path:
                raise ConfigError(f"--translation expects NAME=PATH, got {item!r}")
            translations[name] = _require(path, f"translation {name}")
        corpus = read_bias_corpus(_require(args.data, "Greek verse TSV"), translations)
        mrr = mrr_bias(corpus, encoder)
        report = EvalReport({name: 100 * v for name, v in mrr.items()}, model_id,
                            dataset_hash([(v,) for v in corpus.greek_verses]),
                            counts={"verses": len(corpus.greek_verses), "translations": len(translations)})
    target = out / f"report_{kind}.json"
    target.write_text(report.to_json(), encoding="utf-8")
    print(report.to_json(), end="")
    return 0


# --- search ----------------------------------------------------------------

def cmd_search(args, cfg: PipelineConfig) -> int:
    if not args.query or not args.query.strip():
        raise ConfigError("empty query")
    encoder = _encoder(args.checkpoint or cfg.checkpoint, args.store)
    if encoder is None:
        raise ConfigError("search needs --checkpoint or --store")
    if args.passage_store:
        store = store_read(_require(args.passage_store, "passage store"), expected_dim=encoder.dim)
    else:
        ids, texts = read_passages(_require(args.passages, "passage TSV"))
        store = EmbeddingStore.from_texts(encoder, ids, texts)
    for rank, (pid, score) in enumerate(nearest_neighbors(encoder.encode(args.query), store, args.k), start=1):
        print(f"{rank}\t{pid}\t{score:.6f}")
    return 0


# --- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config (JSON)")
    common.add_argument("--seed", type=int, help="overrides config seed")
    common.add_argument("--out", help="output directory (overrides config out_dir)")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="grc-embed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", parents=[common], help="normalize and segment raw documents")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--lang", type=str.upper, choices=[l.value for l in Language], required=True)
    p.add_argument("--colon-as-raised-dot", action="store_true")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("align", parents=[common], help="align two sentence TSVs")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--method", choices=al.METHODS, default="length-dict")
    p.add_argument("--dictionary")
    p.add_argument("--checkpoint")
    p.add_argument("--store", help="embedding store keyed by sentence text")
    p.add_argument("--threshold", type=float)
    p.add_argument("--max-bead", type=int)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("build-pairs", parents=[common], help="merge, dedup and length-filter pair TSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--min-chars", type=int)
    p.add_argument("--output")
    p.set_defaults(func=cmd_build_pairs)

    p = sub.add_parser("train", parents=[common], help="train the student encoder")
    p.add_argument("--pairs", nargs="+", help="pair TSVs trained in order (overrides config phases)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--objective", choices=["distill", "simcse"])
    p.add_argument("--teacher-checkpoint")
    p.add_argument("--teacher-store")
    p.add_argument("--holdout-size", type=int)
    p.add_argument("--allow-sts-overlap", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate an encoder")
    p.add_argument("--kind", choices=["sts", "translation", "retrieval", "bias"], required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--store", help="embedding store keyed by sentence text")
    p.add_argument("--data", help="STS TSV, pair TSV, passage TSV or Greek verse TSV")
    p.add_argument("--queries")
    p.add_argument("--translation", action="append", metavar="NAME=PATH")
    p.add_argument("--k", type=int, nargs="+", default=[10, 20])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", parents=[common], help="rank passages for a query")
    p.add_argument("--query", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--store", help="embedding store keyed by sentence text")
    p.add_argument("--passages", help="passage TSV (id, text)")
    p.add_argument("--passage-store", help="precomputed passage embedding store")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_search)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out_dir = args.out
        return args.func(args, cfg)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, KeyError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

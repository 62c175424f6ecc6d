"""Unified command-line interface.

Every flag has a config-file equivalent: pass ``--config file.yaml`` holding
a flat mapping of flag names (underscores) to values. Explicit command-line
flags win over the config file, which wins over built-in defaults. Keys that
no subcommand knows are rejected; keys that only other subcommands know are
ignored, so one config can drive a whole pipeline.

Artifact-producing commands write a ``*.manifest.json`` next to their primary
output recording the resolved configuration, seed, inputs/outputs and
timestamps. Exit codes: 0 success, 1 runtime failure (missing file, bad
data), 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import yaml

from . import corpus as corpus_mod
from .corpus import OversampleSpec, load_parallel, oversample, save_pairs, stats_by_tag
from .decoding import BeamConfig, IterativeDecodeConfig, grid_search, iterative_decode, \
    make_decode_fn
from .evaluation import ScoreReport, score_sentences
from .model import ModelConfig, TransformerModel
from .noising import NoiseConfig, make_synthetic_corpus
from .revisions import ExtractionConfig, mine_pairs, read_dump_pages, read_snapshot_dir
from .subword import SubwordVocab, filter_by_length, train_vocab
from .tokenizer import tokenize
from .training import TrainConfig, average_checkpoints, config_fingerprint, encode_corpus, \
    finetune, load_checkpoint, load_params, save_checkpoint, train_loop
from .validation import check_positive_int, ensure_file

try:
    from importlib.metadata import version as _dist_version
    VERSION = _dist_version("minigec")
except Exception:  # not installed (e.g. running from a checkout)
    VERSION = "0.1.0"


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


def _write_manifest(args: argparse.Namespace, inputs: list, outputs: list, started: str) -> None:
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k not in ("func", "command_path", "config")
    }
    manifest = {
        "command": " ".join(args.command_path),
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "toolkit_version": VERSION,
        "started_at": started,
        "finished_at": _now(),
    }
    primary = Path(outputs[0])
    path = primary / "manifest.json" if primary.is_dir() else primary.with_name(primary.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def _read_lines(path: str | Path) -> list[str]:
    with open(ensure_file(path), encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _load_vocab(path: str) -> SubwordVocab:
    return SubwordVocab.load(ensure_file(path))


def _model_from_checkpoint(path: str) -> tuple[TransformerModel, dict]:
    ckpt = load_checkpoint(ensure_file(path))
    if not ckpt.model_config:
        raise ValueError(f"checkpoint {path} carries no model config; cannot rebuild model")
    cfg = ModelConfig(**ckpt.model_config)
    model = TransformerModel(cfg)
    load_params(model, ckpt.params)
    return model.eval(), ckpt.model_config


def _noise_config(args) -> NoiseConfig:
    cfg = NoiseConfig(
        p_spell=args.p_spell, p_infill=args.p_infill, infill_max_len=args.infill_max_len,
        identity_keep=args.identity_keep, p_word=args.p_word, rng_seed=args.seed,
    )
    cfg.validate()
    return cfg


def _model_config(args, vocab_size: int) -> ModelConfig:
    overrides = dict(
        vocab_size=vocab_size,
        internal_dropout=args.internal_dropout,
        p_src=args.p_src, p_tgt=args.p_tgt, mle_weight=args.mle_weight,
    )
    for name in ("layers", "heads", "d_model", "d_ff"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    return ModelConfig.preset(args.preset, **overrides)


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig(
        steps=args.steps, peak_lr=args.peak_lr, warmup_steps=args.warmup_steps,
        schedule=args.schedule, batch_tokens=args.batch_tokens,
        checkpoint_every=args.checkpoint_every, seed=args.seed,
        clip_norm=args.clip_norm, dev_decode_limit=args.dev_decode_limit,
    )
    cfg.validate()
    return cfg


# --- handlers ---

def _load_tagged(specs: list[str], fmt: str, default_tag: str) -> list:
    """Each spec is ``path`` or ``tag=path``; results are concatenated."""
    pairs = []
    for item in specs:
        tag, _, path = item.rpartition("=")
        if not tag:
            tag, path = default_tag, item
        pairs.extend(load_parallel(ensure_file(path), fmt=fmt, dataset_tag=tag))
    return pairs


def _cmd_corpus_stats(args) -> int:
    pairs = _load_tagged(args.inp, args.fmt, args.tag)
    per_tag = stats_by_tag(pairs)
    rows = [(tag, s.sentence_count, s.error_rate) for tag, s in sorted(per_tag.items())]
    print(f"{'tag':<16}{'sentences':>12}{'error_rate':>12}")
    for tag, n, er in rows:
        print(f"{tag:<16}{n:>12}{er:>12.4f}")
    if args.json:
        started = _now()
        payload = {tag: {"sentences": n, "error_rate": round(er, 4)} for tag, n, er in rows}
        Path(args.json).write_text(json.dumps(payload, indent=2), encoding="utf-8")
        _write_manifest(args, list(args.inp), [args.json], started)
    return 0


def _parse_multipliers(spec: str) -> dict[str, int]:
    out = {}
    for part in filter(None, (p.strip() for p in spec.split(","))):
        if "=" not in part:
            raise ValueError(f"bad multiplier {part!r}; expected tag=K")
        tag, k = part.split("=", 1)
        out[tag.strip()] = int(k)
    return out


def _cmd_corpus_oversample(args) -> int:
    started = _now()
    pairs = _load_tagged(args.inp, args.fmt, args.tag)
    spec = OversampleSpec(_parse_multipliers(args.multipliers))
    result = oversample(pairs, spec, seed=args.seed, strict=not args.lenient)
    save_pairs(result, args.out)
    print(f"{len(pairs)} -> {len(result)} pairs")
    _write_manifest(args, list(args.inp), [args.out], started)
    return 0


def _cmd_vocab_train(args) -> int:
    started = _now()
    lines: list[str] = []
    for path in args.inp:
        if str(path).endswith(".tsv"):
            for p in load_parallel(path):
                lines.append(p.source_text)
                lines.append(p.target_text)
        else:
            lines.extend(_read_lines(path))
    vocab = train_vocab(lines, target_size=args.target_size, min_pair_freq=args.min_pair_freq)
    vocab.save(args.out)
    print(f"vocab size {len(vocab)} ({len(vocab.merges)} merges) -> {args.out}")
    _write_manifest(args, list(args.inp), [args.out], started)
    return 0


def _cmd_vocab_encode(args) -> int:
    started = _now()
    vocab = _load_vocab(args.vocab)
    with open(args.out, "w", encoding="utf-8") as out:
        for line in _read_lines(args.inp):
            ids = vocab.encode(line)
            if args.pieces:
                out.write(" ".join(vocab.pieces[i] for i in ids) + "\n")
            else:
                out.write(" ".join(map(str, ids)) + "\n")
    _write_manifest(args, [args.inp, args.vocab], [args.out], started)
    return 0


def _iter_page_chunks(pages, size):
    chunk = []
    for page in pages:
        chunk.append(page)
        if len(chunk) >= size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


def _mine_chunk(chunk, noise_cfg, ext_cfg, tag):
    return mine_pairs(chunk, noise_cfg, ext_cfg, tag)


def _cmd_noise_wiki(args) -> int:
    started = _now()
    src = ensure_file(args.inp)
    pages = read_snapshot_dir(src) if src.is_dir() else read_dump_pages(src)
    noise_cfg = _noise_config(args)
    ext_cfg = ExtractionConfig(
        keep_every=args.keep_every, max_tokens=args.max_tokens,
        context_tokens=args.context_tokens, identity_window=args.identity_window,
    )
    ext_cfg.validate()
    totals: dict[str, int] = {}
    all_pairs = []
    if args.workers > 1:
        # page-seeded RNG makes sharding transparent to the output
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [
                pool.submit(_mine_chunk, chunk, noise_cfg, ext_cfg, args.tag)
                for chunk in _iter_page_chunks(pages, 16)
            ]
            results = [f.result() for f in futures]
    else:
        results = [mine_pairs(chunk, noise_cfg, ext_cfg, args.tag)
                   for chunk in _iter_page_chunks(pages, 16)]
    for pairs, counts in results:
        all_pairs.extend(pairs)
        for k, v in counts.items():
            totals[k] = totals.get(k, 0) + v
    save_pairs(all_pairs, args.out)
    sidecar = Path(args.out).with_name(Path(args.out).name + ".counts.json")
    sidecar.write_text(json.dumps(totals, indent=2), encoding="utf-8")
    print(json.dumps(totals))
    _write_manifest(args, [args.inp], [args.out, sidecar], started)
    return 0


def _cmd_noise_synth(args) -> int:
    started = _now()
    clean = [line for line in _read_lines(args.inp) if line.strip()]
    pairs = make_synthetic_corpus(clean, _noise_config(args), dataset_tag=args.tag)
    save_pairs(pairs, args.out)
    print(f"{len(pairs)} pairs -> {args.out}")
    _write_manifest(args, [args.inp], [args.out], started)
    return 0


def _cmd_train(args) -> int:
    started = _now()
    vocab = _load_vocab(args.vocab)
    train_pairs = load_parallel(args.pairs)
    dev_pairs = load_parallel(args.dev)
    model_cfg = _model_config(args, len(vocab))
    train_cfg = _train_config(args)
    train_pairs = filter_by_length(train_pairs, vocab, args.max_pieces)
    examples = encode_corpus(train_pairs, vocab, model_cfg.mle_weight)
    out = train_loop(examples, dev_pairs, vocab, model_cfg, train_cfg, args.out_dir,
                     log_f05=not args.no_dev_f05)
    last = out["metrics"][-1] if out["metrics"] else {}
    print(json.dumps({"final": out["final"], "last_metrics": last}))
    _write_manifest(args, [args.pairs, args.dev, args.vocab], [args.out_dir], started)
    return 0


def _cmd_finetune(args) -> int:
    started = _now()
    vocab = _load_vocab(args.vocab)
    train_pairs = load_parallel(args.pairs)
    dev_pairs = load_parallel(args.dev)
    model_cfg = _model_config(args, len(vocab))
    train_cfg = _train_config(args)
    train_pairs = filter_by_length(train_pairs, vocab, args.max_pieces)
    examples = encode_corpus(train_pairs, vocab, model_cfg.mle_weight)
    out = finetune(ensure_file(args.base), examples, dev_pairs, vocab, model_cfg,
                   train_cfg, args.out_dir, peak_lr=args.ft_peak_lr,
                   warmup_steps=args.ft_warmup_steps, log_f05=not args.no_dev_f05)
    last = out["metrics"][-1] if out["metrics"] else {}
    print(json.dumps({"final": out["final"], "last_metrics": last}))
    _write_manifest(args, [args.pairs, args.dev, args.vocab, args.base], [args.out_dir], started)
    return 0


def _cmd_checkpoints_average(args) -> int:
    started = _now()
    if args.checkpoints:
        paths = [ensure_file(p) for p in args.checkpoints]
    else:
        run_dir = ensure_file(args.in_dir)
        numbered = sorted(run_dir.glob("checkpoint-[0-9]*.ckpt"))
        if not numbered:
            raise FileNotFoundError(f"no numbered checkpoints under {run_dir}")
        paths = numbered[-args.last:]
    loaded = [load_checkpoint(p) for p in paths]
    avg = average_checkpoints(loaded)
    save_checkpoint(args.out, avg, loaded[-1].step, loaded[0].fingerprint,
                    loaded[0].model_config)
    print(f"averaged {len(paths)} checkpoints -> {args.out}")
    _write_manifest(args, [str(p) for p in paths], [args.out], started)
    return 0


def _cmd_decode(args) -> int:
    started = _now()
    model, _ = _model_from_checkpoint(args.checkpoint)
    vocab = _load_vocab(args.vocab)
    beam_cfg = BeamConfig(beam_size=args.beam_size, alpha=args.alpha,
                          max_output_len=args.max_output_len)
    iter_cfg = IterativeDecodeConfig(threshold=args.threshold, max_iters=args.max_iters)
    beam_cfg.validate(), iter_cfg.validate()
    decode = make_decode_fn(model, vocab, beam_cfg, cache={})
    with open(args.out, "w", encoding="utf-8") as out:
        for line in _read_lines(args.inp):
            out.write(iterative_decode(line, decode, iter_cfg) + "\n")
    _write_manifest(args, [args.inp, args.checkpoint, args.vocab], [args.out], started)
    return 0


def _cmd_grid_search(args) -> int:
    started = _now()
    model, _ = _model_from_checkpoint(args.checkpoint)
    vocab = _load_vocab(args.vocab)
    dev_pairs = load_parallel(args.dev)
    if args.limit:
        dev_pairs = dev_pairs[: args.limit]
    thresholds = [float(x) for x in args.thresholds.split(",") if x]
    iters = [int(x) for x in args.max_iters_list.split(",") if x]
    beam_cfg = BeamConfig(beam_size=args.beam_size, alpha=args.alpha,
                          max_output_len=args.max_output_len)
    decode = make_decode_fn(model, vocab, beam_cfg, cache={})
    result = grid_search(dev_pairs, decode, thresholds, iters)
    Path(args.out).write_text(result.as_tsv(), encoding="utf-8")
    best = {"threshold": result.best.threshold, "max_iters": result.best.max_iters,
            "P": round(100 * result.best.p, 2), "R": round(100 * result.best.r, 2),
            "F0.5": round(100 * result.best.f05, 2)}
    print(json.dumps(best))
    _write_manifest(args, [args.dev, args.checkpoint, args.vocab], [args.out], started)
    return 0


def _cmd_evaluate(args) -> int:
    started = _now()
    hyp_lines = _read_lines(args.hyp)
    if args.dev:
        pairs = load_parallel(args.dev)
        if len(pairs) != len(hyp_lines):
            raise ValueError(f"{len(pairs)} reference pairs vs {len(hyp_lines)} hypothesis lines")
        rows = [(p.source, tuple(tokenize(h)), p.target) for p, h in zip(pairs, hyp_lines)]
    else:
        src_lines = _read_lines(args.src)
        ref_lines = _read_lines(args.ref)
        if not len(src_lines) == len(hyp_lines) == len(ref_lines):
            raise ValueError("src/hyp/ref line counts differ")
        rows = [
            (tuple(tokenize(s)), tuple(tokenize(h)), tuple(tokenize(r)))
            for s, h, r in zip(src_lines, hyp_lines, ref_lines)
        ]
    report = score_sentences(rows)
    print(report.table())
    if args.json:
        Path(args.json).write_text(report.as_json(), encoding="utf-8")
        inputs = [args.hyp] + ([args.dev] if args.dev else [args.src, args.ref])
        _write_manifest(args, inputs, [args.json], started)
    return 0


def _cmd_pipeline(args) -> int:
    from .pipeline import run_recipe
    status, manifest_path = run_recipe(args.recipe, workspace=args.workspace)
    if manifest_path:
        print(f"pipeline manifest: {manifest_path}")
    return status


# --- parser construction ---

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file of flag defaults (flags override it)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)


def _add_noise_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p-spell", type=float, default=0.003)
    p.add_argument("--p-infill", type=float, default=0.01)
    p.add_argument("--infill-max-len", type=int, default=8)
    p.add_argument("--identity-keep", type=float, default=0.04)
    p.add_argument("--p-word", type=float, default=0.0)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", default="desk", choices=("desk", "base", "big"))
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--d-model", type=int, default=None)
    p.add_argument("--d-ff", type=int, default=None)
    p.add_argument("--internal-dropout", type=float, default=0.1)
    p.add_argument("--p-src", type=float, default=0.2)
    p.add_argument("--p-tgt", type=float, default=0.1)
    p.add_argument("--mle-weight", type=float, default=3.0)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--peak-lr", type=float, default=3e-4)
    p.add_argument("--warmup-steps", type=int, default=8000)
    p.add_argument("--schedule", default="rsqrt", choices=("rsqrt", "linear-then-constant"))
    p.add_argument("--batch-tokens", type=int, default=2000)
    p.add_argument("--checkpoint-every", type=int, default=500)
    p.add_argument("--clip-norm", type=float, default=1.0)
    p.add_argument("--max-pieces", type=int, default=150)
    p.add_argument("--dev-decode-limit", type=int, default=200)
    p.add_argument("--no-dev-f05", action="store_true",
                   help="skip decoding-based dev F0.5 at checkpoints")


def _add_beam_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--max-output-len", type=int, default=0)


def build_parser() -> tuple[argparse.ArgumentParser, dict[tuple, argparse.ArgumentParser]]:
    root = argparse.ArgumentParser(prog="minigec", description=__doc__)
    root.add_argument("--version", action="version", version=f"minigec {VERSION}")
    top = root.add_subparsers(dest="group", required=True)
    leaves: dict[tuple, argparse.ArgumentParser] = {}

    def leaf(path: tuple, parser: argparse.ArgumentParser, func) -> argparse.ArgumentParser:
        _add_common(parser)
        parser.set_defaults(func=func, command_path=list(path))
        leaves[path] = parser
        return parser

    corpus = top.add_parser("corpus", help="pair statistics and oversampling")
    corpus_sub = corpus.add_subparsers(dest="sub", required=True)
    p = corpus_sub.add_parser("stats", help="per-tag counts and error rates")
    p.add_argument("--in", dest="inp", nargs="+", required=True,
                   help="TSV files, each 'path' or 'tag=path'")
    p.add_argument("--fmt", default="tsv", choices=("tsv",))
    p.add_argument("--tag", default="default")
    p.add_argument("--json", help="write the table as JSON here")
    leaf(("corpus", "stats"), p, _cmd_corpus_stats)

    p = corpus_sub.add_parser("oversample", help="duplicate datasets by per-tag multipliers")
    p.add_argument("--in", dest="inp", nargs="+", required=True,
                   help="TSV files, each 'path' or 'tag=path'")
    p.add_argument("--out", required=True)
    p.add_argument("--multipliers", required=True, help="e.g. lang8=1,wi-train=10")
    p.add_argument("--fmt", default="tsv", choices=("tsv",))
    p.add_argument("--tag", default="default")
    p.add_argument("--lenient", action="store_true",
                   help="allow multipliers for tags absent from the corpus")
    leaf(("corpus", "oversample"), p, _cmd_corpus_oversample)

    vocab = top.add_parser("vocab", help="subword vocabulary")
    vocab_sub = vocab.add_subparsers(dest="sub", required=True)
    p = vocab_sub.add_parser("train", help="learn merges from text or pair files")
    p.add_argument("--in", dest="inp", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-size", type=int, default=4000)
    p.add_argument("--min-pair-freq", type=int, default=2)
    leaf(("vocab", "train"), p, _cmd_vocab_train)

    p = vocab_sub.add_parser("encode", help="encode text to piece ids (one line per sentence)")
    p.add_argument("--vocab", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pieces", action="store_true", help="emit piece strings instead of ids")
    leaf(("vocab", "encode"), p, _cmd_vocab_encode)

    noise = top.add_parser("noise", help="revision mining and synthetic corruption")
    noise_sub = noise.add_subparsers(dest="sub", required=True)
    p = noise_sub.add_parser("wiki-pairs", help="mine pairs from a revision dump or snapshot dir")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tag", default="wiki")
    p.add_argument("--keep-every", type=int, default=2)
    p.add_argument("--max-tokens", type=int, default=100)
    p.add_argument("--context-tokens", type=int, default=10)
    p.add_argument("--identity-window", type=int, default=40)
    _add_noise_flags(p)
    leaf(("noise", "wiki-pairs"), p, _cmd_noise_wiki)

    p = noise_sub.add_parser("synth", help="corrupt clean sentences into training pairs")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tag", default="synthetic")
    _add_noise_flags(p)
    leaf(("noise", "synth"), p, _cmd_noise_synth)

    p = top.add_parser("train", help="train from scratch")
    p.add_argument("--pairs", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-dir", required=True)
    _add_model_flags(p)
    _add_train_flags(p)
    leaf(("train",), p, _cmd_train)

    p = top.add_parser("finetune", help="continue from a checkpoint on new pairs")
    p.add_argument("--base", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ft-peak-lr", type=float, default=3e-4)
    p.add_argument("--ft-warmup-steps", type=int, default=20000)
    _add_model_flags(p)
    _add_train_flags(p)
    leaf(("finetune",), p, _cmd_finetune)

    ckpt = top.add_parser("checkpoints", help="checkpoint tools")
    ckpt_sub = ckpt.add_subparsers(dest="sub", required=True)
    p = ckpt_sub.add_parser("average", help="elementwise mean of checkpoints")
    p.add_argument("checkpoints", nargs="*", help="explicit checkpoint files")
    p.add_argument("--in-dir", help="run directory to take the last K from")
    p.add_argument("--last", type=int, default=8)
    p.add_argument("--out", required=True)
    leaf(("checkpoints", "average"), p, _cmd_checkpoints_average)

    p = top.add_parser("decode", help="correct a file of sentences")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_beam_flags(p)
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=1)
    leaf(("decode",), p, _cmd_decode)

    p = top.add_parser("grid-search", help="sweep threshold x max_iters on a dev set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--thresholds", default="0.8,1.0,1.2,1.4")
    p.add_argument("--max-iters-list", default="1,2,4")
    p.add_argument("--limit", type=int, default=0, help="cap dev sentences (0 = all)")
    _add_beam_flags(p)
    leaf(("grid-search",), p, _cmd_grid_search)

    p = top.add_parser("evaluate", help="P/R/F0.5 of a hypothesis file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--dev", help="TSV pairs supplying source and reference")
    p.add_argument("--src", help="plain-text source (with --ref)")
    p.add_argument("--ref", help="plain-text reference (with --src)")
    p.add_argument("--json", help="write the report as JSON here")
    leaf(("evaluate",), p, _cmd_evaluate)

    p = top.add_parser("pipeline", help="run an ordered recipe of subcommands")
    p.add_argument("--recipe", required=True)
    p.add_argument("--workspace", help="directory for the consolidated manifest")
    leaf(("pipeline",), p, _cmd_pipeline)

    return root, leaves


def _find_config_path(argv: list[str]) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def _apply_config(leaves: dict, argv: list[str], config_path: str) -> None:
    with open(ensure_file(config_path), encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError("config file must be a flat mapping of flag names to values")
    known_anywhere = set()
    for parser in leaves.values():
        known_anywhere.update(a.dest for a in parser._actions)
    for key in data:
        if key not in known_anywhere:
            raise ValueError(f"unknown config key {key!r}")
    # apply to the selected leaf only
    tokens = [t for t in argv if not t.startswith("-")]
    for path, parser in leaves.items():
        if list(path) == tokens[: len(path)]:
            dests = {a.dest for a in parser._actions}
            parser.set_defaults(**{k: v for k, v in data.items() if k in dests})
            return


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    root, leaves = build_parser()
    config_path = _find_config_path(argv)
    try:
        if config_path:
            _apply_config(leaves, argv, config_path)
        args = root.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    except FileNotFoundError as err:
        print(f"error: missing file: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    try:
        check_positive_int("workers", getattr(args, "workers", 1))
        return args.func(args) or 0
    except FileNotFoundError as err:
        print(f"error: missing file: {err}", file=sys.stderr)
        return 1
    except (ValueError, FloatingPointError, corpus_mod.EmptyDatasetError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: convert, mask, train, decode, eval, fuzz.

Exit codes: 0 success, 1 data error, 2 config error, 3 property violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .amr_graph import AmrGraph, GraphError, PenmanError, format_record, iter_corpus, read_corpus
from .cha_mask import MaskError, MaskVariant, build_mask
from .model import ConfigError, ModelConfig, TrainConfig, TrainingDiverged
from .smatch import SmatchError
from .target_forms import FormError

log = logging.getLogger("chaform")

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_PROPERTY = 0, 1, 2, 3
DEFAULT_SEED = 13

MODEL_KEYS = {f for f in ModelConfig.__dataclass_fields__}
TRAIN_KEYS = {f for f in TrainConfig.__dataclass_fields__}


class DataError(Exception):
    pass


DATA_ERRORS = (DataError, OSError, TrainingDiverged, PenmanError, GraphError, MaskError, FormError,
               SmatchError, json.JSONDecodeError)


def setup_logging() -> None:
    level = os.environ.get("CHAFORM_LOG", "WARNING").upper()
    if level.isdigit():
        level = int(level)
    elif not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"bad CHAFORM_LOG value: {level!r}")
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("chaform").setLevel(level)


def load_config(path: Optional[str]) -> Dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(cfg) - MODEL_KEYS - TRAIN_KEYS - {"kind", "beam", "max_len", "corpus"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return cfg


def merged(args, cfg: Dict, name: str, default):
    """Flag value if given, else config-file value, else default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


# ---------------------------------------------------------------------------
# forms files: one JSON object per line


def form_line(form, meta: Optional[Dict[str, str]] = None) -> str:
    obj = json.loads(form.to_json())
    if meta:
        obj["meta"] = meta
    return json.dumps(obj, ensure_ascii=False)


def read_forms(path: Path) -> List:
    from .target_forms import TargetForm

    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out.append((lineno, TargetForm.from_json(line), obj.get("meta") or {}, None))
        except (ValueError, KeyError, TypeError) as exc:
            out.append((lineno, None, {}, str(exc)))
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_convert(args) -> int:
    from .target_forms import delinearize, linearize, strip_to_sdfs

    src, dst = Path(args.input), Path(args.output)
    if not src.exists():
        raise DataError(f"input not found: {src}")
    lines: List[str] = []
    errors = 0

    def fail(where: int, msg: str) -> None:
        nonlocal errors
        errors += 1
        print(f"{src}:{where}: {msg}", file=sys.stderr)
        if args.strict:
            raise DataError(f"{src}:{where}: {msg}")

    if args.direction == "to-forms":
        for rec in iter_corpus(src.read_text(encoding="utf-8")):
            if rec.graph is None:
                fail(rec.line, rec.error)
                continue
            lines.append(form_line(linearize(rec.graph, args.kind), rec.metadata))
        text = "".join(line + "\n" for line in lines)
    else:
        for lineno, form, meta, err in read_forms(src):
            if form is None:
                fail(lineno, f"bad form record: {err}")
                continue
            try:
                form.validate()
                if args.direction == "to-penman":
                    lines.append(format_record(delinearize(form), meta))
                else:
                    lines.append(strip_to_sdfs(form) + "\n")
            except FormError as exc:
                fail(lineno, str(exc))
        text = "\n".join(lines) if args.direction == "to-penman" else "".join(lines)
    dst.write_text(text, encoding="utf-8")
    log.info("converted %d records (%d errors)", len(lines), errors)
    return EXIT_DATA if errors else EXIT_OK


def _parse_struct(text: Optional[str], n: int):
    if text is None:
        return None
    layer: List[Optional[int]] = [None] * n
    for item in text.split(","):
        if not item.strip():
            continue
        i, _, j = item.partition(":")
        layer[int(i)] = int(j)
    return layer


def cmd_mask(args) -> int:
    from .target_forms import FormKind, split_tokens

    if args.tokens is not None:
        tokens = split_tokens(args.tokens)
        struct = _parse_struct(args.struct, len(tokens))
        kind = args.kind
    else:
        if args.forms is None:
            raise ConfigError("give a forms file or --tokens")
        records = read_forms(Path(args.forms))
        if not 0 <= args.index < len(records):
            raise DataError(f"record index {args.index} out of range (0..{len(records) - 1})")
        _, form, _, err = records[args.index]
        if form is None:
            raise DataError(f"record {args.index}: {err}")
        tokens, struct, kind = list(form.tokens), form.struct, form.kind.value
    variant = MaskVariant(args.variant) if args.variant else MaskVariant.for_kind(FormKind(kind or "single"))
    mask = build_mask(tokens, variant, struct)
    sys.stdout.write(mask.to_ascii(tokens))
    if args.pgm:
        Path(args.pgm).write_bytes(mask.to_pgm())
    if args.png:
        from .plotting import plot_mask

        plot_mask(mask, args.png, tokens, title=variant.value)
    return EXIT_OK


def _corpus_records(path: Optional[str]):
    from .corpus import bundled_corpus

    if path is None:
        return bundled_corpus()
    p = Path(path)
    if not p.exists():
        raise DataError(f"corpus not found: {p}")
    return read_corpus(p)


def cmd_train(args) -> int:
    from .corpus import to_examples
    from .model import Vocab, save_checkpoint, train, write_trace
    from .plotting import plot_losses

    cfg = load_config(args.config)
    records = _corpus_records(merged(args, cfg, "corpus", None))
    bad = [r for r in records if r.graph is None]
    for r in bad:
        print(f"record at line {r.line}: {r.error}", file=sys.stderr)
    if bad and args.strict:
        raise DataError(f"{len(bad)} unparseable records")
    kind = merged(args, cfg, "kind", "double")
    examples = to_examples(records, kind)
    if not examples:
        raise DataError("no usable training records")
    vocab = Vocab.build([e.source for e in examples], [e.form for e in examples])
    model_kw = {k: v for k, v in cfg.items() if k in MODEL_KEYS}
    for flag, key in (("placement", "placement"), ("alpha", "alpha"), ("d_model", "d_model"),
                      ("layers", "n_layers"), ("heads", "n_heads")):
        value = getattr(args, flag)
        if value is not None:
            model_kw[key] = value
    model_kw.update(vocab_size=len(vocab), cha_kind=kind)
    mc = ModelConfig(**model_kw).validate()
    train_kw = {k: v for k, v in cfg.items() if k in TRAIN_KEYS}
    for key in ("steps", "seed", "lr"):
        value = getattr(args, key)
        if value is not None:
            train_kw[key] = value
    train_kw.setdefault("seed", DEFAULT_SEED)
    tc = TrainConfig(**train_kw)
    log.info("training %s model for up to %d steps on %d pairs", mc.placement, tc.steps, len(examples))

    def report(row):
        if row.step % 100 == 0:
            log.info("step %d total %.6f", row.step, row.total)
        return False

    model, trace = train(mc, examples, vocab, tc, callback=report)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.pt", model, vocab)
    write_trace(out / "trace.csv", trace)
    if trace:
        plot_losses(trace, out / "loss.png")
    print(json.dumps({"steps": len(trace), "final_total": trace[-1].total if trace else None,
                      "checkpoint": str(out / "model.pt")}))
    return EXIT_OK


def cmd_decode(args) -> int:
    from .corpus import verbalize
    from .decode import beam_search
    from .model import load_checkpoint

    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise DataError(f"checkpoint not found: {ckpt}")
    model, vocab = load_checkpoint(ckpt)
    src = Path(args.input)
    if not src.exists():
        raise DataError(f"input not found: {src}")
    if args.sentences:
        sentences = [ln.split() for ln in src.read_text(encoding="utf-8").splitlines() if ln.strip()]
    else:
        records = read_corpus(src)
        sentences = [(r.sentence.split() if r.sentence else verbalize(r.graph)) for r in records
                     if r.sentence or r.graph is not None]
    kind = args.kind or model.config.cha_kind
    results = beam_search(model, vocab, sentences, beam=args.beam, max_len=args.max_len, kind=kind)
    chunks, incomplete = [], 0
    for k, (words, res) in enumerate(zip(sentences, results)):
        graph = res.best_graph() if res.complete else None
        meta = {"id": f"pred.{k}", "snt": " ".join(words)}
        if graph is None:
            incomplete += 1
            log.warning("sentence %d: no complete well-formed output", k)
            meta["status"] = "failed"
            graph = AmrGraph({"n0": "amr-empty"}, (), "n0")
        chunks.append(format_record(graph, meta))
    Path(args.output).write_text("\n".join(chunks), encoding="utf-8")
    log.info("decoded %d sentences (%d incomplete)", len(sentences), incomplete)
    return EXIT_DATA if incomplete else EXIT_OK


def cmd_eval(args) -> int:
    from .smatch import corpus_score

    for p in (args.predictions, args.gold):
        if not Path(p).exists():
            raise DataError(f"file not found: {p}")
    try:
        res = corpus_score(args.predictions, args.gold)
    except SmatchError as exc:
        raise DataError(str(exc)) from exc
    text = json.dumps(res.to_dict())
    print(text)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_fuzz(args) -> int:
    from .properties import SUITES, fuzz_decode, run_suite

    suites = list(SUITES) + ["decode"] if args.suite == "all" else [args.suite]
    status = EXIT_OK
    for name in suites:
        if name == "decode":
            rep = fuzz_decode(args.cases, seed=args.seed, beam=args.beam)
            if rep.failures:
                case, msg = rep.failures[0]
                print(f"decode: FAIL case {case} (seed {args.seed}): {msg}")
                status = EXIT_PROPERTY
            else:
                print(f"decode: ok ({rep.total} cases, {rep.complete} complete)")
            continue
        found = run_suite(name, args.cases, args.seed)
        if found:
            seed, size, msg = found
            print(f"{name}: FAIL reproducer seed={seed} max_nodes={size}: {msg}")
            status = EXIT_PROPERTY
        else:
            print(f"{name}: ok ({args.cases} cases from seed {args.seed})")
    return status


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    kinds = ["single", "double", "bottomup"]
    p = argparse.ArgumentParser(prog="chaform", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="PENMAN corpus <-> target forms")
    c.add_argument("input")
    c.add_argument("output")
    c.add_argument("--kind", choices=kinds, default="single")
    c.add_argument("--direction", choices=["to-forms", "to-penman", "to-sdfs"], default="to-forms")
    c.add_argument("--strict", action="store_true", help="abort on the first bad record")
    c.set_defaults(func=cmd_convert)

    m = sub.add_parser("mask", help="dump the CHA mask of one form")
    m.add_argument("forms", nargs="?", help="forms file (JSON lines)")
    m.add_argument("--index", type=int, default=0)
    m.add_argument("--tokens", help="inline form tokens instead of a file")
    m.add_argument("--struct", help="bottom-up struct pointers as i:j,i:j")
    m.add_argument("--kind", choices=kinds)
    m.add_argument("--variant", choices=[v.value for v in MaskVariant])
    m.add_argument("--pgm", help="also write a plain PGM image")
    m.add_argument("--png", help="also write a matplotlib figure")
    m.set_defaults(func=cmd_mask)

    t = sub.add_parser("train", help="train a model and write checkpoint, trace and loss plot")
    t.add_argument("--corpus", help="PENMAN corpus with ::snt lines (default: bundled 64 pairs)")
    t.add_argument("--config", help="JSON file with model/training fields; flags override it")
    t.add_argument("--out", default="run")
    t.add_argument("--kind", choices=kinds)
    t.add_argument("--placement", choices=["parallel", "pipeline", "inplace", "none"])
    t.add_argument("--alpha", type=float)
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--d-model", dest="d_model", type=int)
    t.add_argument("--layers", type=int)
    t.add_argument("--heads", type=int)
    t.add_argument("--strict", action="store_true")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("decode", help="beam-search parse sentences into PENMAN")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--input", required=True, help="PENMAN corpus (uses ::snt) or, with --sentences, plain text")
    d.add_argument("--output", required=True)
    d.add_argument("--sentences", action="store_true")
    d.add_argument("--beam", type=int, default=1)
    d.add_argument("--max-len", dest="max_len", type=int, default=64)
    d.add_argument("--kind", choices=kinds)
    d.add_argument("--seed", type=int, default=DEFAULT_SEED)
    d.set_defaults(func=cmd_decode)

    e = sub.add_parser("eval", help="exact Smatch of predictions against gold")
    e.add_argument("predictions")
    e.add_argument("gold")
    e.add_argument("--output")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("fuzz", help="run seeded property suites")
    f.add_argument("--suite", choices=["roundtrip", "masks", "replay", "decode", "all"], default="all")
    f.add_argument("--cases", type=int, default=200)
    f.add_argument("--seed", type=int, default=DEFAULT_SEED)
    f.add_argument("--beam", type=int, default=1)
    f.set_defaults(func=cmd_fuzz)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        setup_logging()
        if getattr(args, "beam", 1) < 1:
            raise ConfigError("--beam must be at least 1")
        import torch

        torch.manual_seed(getattr(args, "seed", None) or DEFAULT_SEED)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

if __name__ == "__main__":
    sys.exit(main())

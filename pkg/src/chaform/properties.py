"""Seeded property checks shared by the fuzz command and the test-suite.

Every check takes a seed and returns None on success or a short description
of the violation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import torch

from .amr_graph import random_graph
from .cha_mask import MaskVariant, build_mask, replay
from .decode import beam_search, candidate_filter, extend, initial_hypothesis
from .model import ChaParser, ModelConfig, Vocab, build_model
from .smatch import smatch_small
from .target_forms import FormError, FormKind, TargetForm, delinearize, linearize

KINDS = tuple(FormKind)


def check_roundtrip(seed: int, max_nodes: int = 12, max_reentrancies: int = 3) -> Optional[str]:
    g = random_graph(seed, max_nodes, max_reentrancies)
    for kind in KINDS:
        try:
            form = linearize(g, kind).validate()
            back = delinearize(form)
        except FormError as exc:
            return f"{kind.value}: {exc}"
        f1 = smatch_small(back, g).f1
        if f1 != 1.0:
            return f"{kind.value}: smatch f1 {f1:.4f} after round trip"
    return None


def _variants_for(kind: FormKind) -> List[MaskVariant]:
    base = [MaskVariant.for_kind(kind), MaskVariant.CAUSAL]
    if kind is FormKind.SINGLE:
        base += [MaskVariant.COMPOSE_AS_EXPAND, MaskVariant.EXPAND_AS_CAUSAL]
    return base


def stack_trace(form: TargetForm) -> Tuple[List[List[int]], List[List[int]]]:
    """Reference simulation of the CHA stack.

    Returns, for every token, the stack contents after it is processed and the
    indices it removes (empty for expand tokens). Written against the form
    grammar, independently of the mask builders.
    """
    toks = form.tokens
    stack: List[int] = []
    after, removed = [], []
    for i, tok in enumerate(toks):
        gone: List[int] = []
        if form.kind is FormKind.BOTTOMUP and form.struct[i] is not None:
            s = form.struct[i]
            k = stack.index(s)
            gone, stack = stack[k:], stack[:k]
            stack.append(i)
        elif (form.kind is FormKind.SINGLE and tok == ")") or (form.kind is FormKind.DOUBLE and tok == ")₁"):
            k = max(j for j in range(len(stack)) if toks[stack[j]] == "(")
            gone, stack = stack[k:], stack[:k]
            stack.append(i)
        else:
            stack.append(i)
        after.append(list(stack))
        removed.append(gone)
    return after, removed


def check_mask(form: TargetForm) -> Optional[str]:
    n = len(form)
    after, removed = stack_trace(form)
    for variant in _variants_for(form.kind):
        mask = build_mask(form.tokens, variant, form.struct)
        try:
            mask.check()
        except ValueError as exc:
            return f"{variant.value}: {exc}"
        inc = replay(form.tokens, variant, form.struct)
        if not np.array_equal(inc, mask.visible):
            row = int(np.flatnonzero((inc != mask.visible).any(axis=1))[0])
            return f"{variant.value}: incremental row {row} differs from batch mask"
        if variant is not MaskVariant.for_kind(form.kind):
            continue
        composed = set()
        for i in range(n):
            row = set(mask.row(i))
            if removed[i]:
                # a compose row sees exactly the span it removes plus itself
                if row != set(removed[i]) | {i}:
                    return f"compose row {i} sees {sorted(row)}, expected {sorted(set(removed[i]) | {i})}"
                if composed & set(removed[i]):
                    return f"token composed twice at row {i}"
                composed |= set(removed[i])
            elif row != set(after[i]):
                return f"expand row {i} sees {sorted(row)} but the stack is {after[i]}"
            if row & composed - (set(removed[i]) if removed[i] else set()):
                return f"row {i} attends to an already-composed token"
    return None


def random_form(seed: int, max_nodes: int = 12) -> TargetForm:
    rng = random.Random(seed)
    g = random_graph(seed, max_nodes, 3)
    return linearize(g, rng.choice(KINDS))


def check_mask_seed(seed: int, max_nodes: int = 12) -> Optional[str]:
    return check_mask(random_form(seed, max_nodes))


def check_gold_replay(form: TargetForm, max_len: Optional[int] = None) -> Optional[str]:
    """Feeding the gold form token by token must never be filtered."""
    max_len = len(form) if max_len is None else max_len
    h = initial_hypothesis(form.kind)
    struct = form.struct or (None,) * len(form)
    variant = MaskVariant.for_kind(form.kind)
    gold_mask = build_mask(form.tokens, variant, form.struct).visible
    for i, tok in enumerate(form.tokens):
        if not candidate_filter(h, tok, form.coref[i], struct[i], max_len):
            return f"gold token {i} ({tok!r}) filtered"
        h = extend(h, tok, form.coref[i], struct[i], variant)
        if not np.array_equal(h.dec_mask[i + 1, 1:], gold_mask[i, : i + 1]):
            return f"incremental context row {i} differs from the batch mask"
    if not candidate_filter(h, "<eos>"):
        return "end of sequence filtered after the complete gold form"
    return None


def check_gold_replay_seed(seed: int, max_nodes: int = 12) -> Optional[str]:
    g = random_graph(seed, max_nodes, 3)
    for kind in KINDS:
        msg = check_gold_replay(linearize(g, kind))
        if msg:
            return f"{kind.value}: {msg}"
    return None


# ---------------------------------------------------------------------------
# decoding with random weights


def fuzz_vocab(seed: int = 0, n_graphs: int = 200) -> Tuple[Vocab, List[List[str]]]:
    """Vocabulary covering the random-graph pools, plus source pools for random sentences."""
    forms = [linearize(random_graph(seed * 7919 + k, 12, 3), kind)
             for k in range(n_graphs) for kind in KINDS]
    words = sorted({t for f in forms for t in f.tokens if not t.startswith(":")} | {"it", "and"})
    return Vocab.build([words], forms), [words]


def random_model(seed: int, vocab: Vocab, kind, placement: str = "parallel") -> ChaParser:
    cfg = ModelConfig(vocab_size=len(vocab), d_model=32, n_layers=2, n_heads=4, ffn_dim=64,
                      placement=placement, cha_kind=FormKind(kind).value)
    model = build_model(cfg, seed)
    # zero-initialized blocks would leave the adapter and pointer paths inert
    gen = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "ffn2" in name or "encoder.fc2" in name:
                p.copy_(torch.randn(p.shape, generator=gen) * 0.2)
    return model


def validate_output(form: TargetForm) -> Optional[str]:
    try:
        form.validate()
    except FormError as exc:
        return str(exc)
    return None


@dataclass
class DecodeFuzzReport:
    total: int = 0
    complete: int = 0
    failures: List[Tuple[int, str]] = None

    def __post_init__(self):
        if self.failures is None:
            self.failures = []


def fuzz_decode(n_cases: int, seed: int = 0, batch: int = 250, beam: int = 1, max_len: int = 32,
                models_per_kind: int = 2) -> DecodeFuzzReport:
    """Decode random sentences with randomly weighted models and validate every output."""
    vocab, (words,) = fuzz_vocab(seed)
    report = DecodeFuzzReport()
    rng = random.Random(seed)
    models = {(kind, m): random_model(seed * 1000 + 10 * m + i, vocab, kind)
              for i, kind in enumerate(KINDS) for m in range(models_per_kind)}
    keys = sorted(models, key=lambda k: (k[0].value, k[1]))
    case = 0
    while case < n_cases:
        key = keys[(case // batch) % len(keys)]
        n = min(batch, n_cases - case)
        sources = [[rng.choice(words) for _ in range(rng.randint(1, 12))] for _ in range(n)]
        results = beam_search(models[key], vocab, sources, beam=beam, max_len=max_len, kind=key[0])
        for k, res in enumerate(results):
            report.total += 1
            if not res.complete:
                report.failures.append((case + k, "no complete hypothesis"))
                continue
            report.complete += 1
            msg = validate_output(res.best)
            if msg:
                report.failures.append((case + k, msg))
        case += n
    return report


# ---------------------------------------------------------------------------
# runner


SUITES: Dict[str, Callable[[int], Optional[str]]] = {
    "roundtrip": check_roundtrip,
    "masks": check_mask_seed,
    "replay": check_gold_replay_seed,
}


def run_suite(name: str, cases: int, seed: int = 0) -> Optional[Tuple[int, int, str]]:
    """Run ``cases`` seeds; on the first failure return (seed, smallest failing size, message)."""
    check = SUITES[name]
    for s in range(seed, seed + cases):
        msg = check(s)
        if msg:
            size, msg = minimize(check, s, msg)
            return s, size, msg
    return None


def minimize(check, seed: int, msg: str, start: int = 12) -> Tuple[int, str]:
    """Shrink the graph size bound for a failing seed while it still fails."""
    best = (start, msg)
    for size in range(start - 1, 0, -1):
        m = check(seed, size)
        if m:
            best = (size, m)
    return best

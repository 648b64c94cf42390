"""Grammar-constrained beam search over the base layer and the pointer layers.

A hypothesis carries a small grammar state that guarantees every completed
output delinearizes, plus the CHA stack so each new token gets its mask row
without rebuilding the whole mask.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .amr_graph import AmrGraph, is_constant_literal
from .cha_mask import MaskVariant, StackState, incremental_step
from .model import BOS, EOS, SPECIALS, ChaParser, Vocab
from .target_forms import (CLOSE, CLOSE_COMPOSE, CLOSE_EXPAND, OPEN, REDUCE, FormError, FormKind,
                           TargetForm, delinearize, is_atom, is_relation)


class Phase(str, enum.Enum):
    START = "start"      # nothing emitted yet
    CONCEPT = "concept"  # after '(' (top-down): a concept must follow
    READY = "ready"      # after a concept or a value: relation or close
    VALUE = "value"      # after a relation: a value must follow
    CLOSE2 = "close2"    # after ')₁': the matching ')₂' must follow
    DONE = "done"        # a complete root has been emitted; only end-of-sequence remains


@dataclass(frozen=True)
class GrammarState:
    kind: FormKind
    phase: Phase = Phase.START
    depth: int = 0                   # open brackets (top-down) or open frames (bottom-up)
    frames: Tuple[int, ...] = ()     # bottom-up: head index of each open frame
    mentions: Tuple[Tuple[str, int], ...] = ()  # concept mentions usable as coref targets
    balance: int = 0                 # opens minus closes, top-down only

    def candidates(self, tok: str) -> List[int]:
        return [j for t, j in self.mentions if t == tok]


class GrammarViolation(ValueError):
    pass


def _close_cost(kind: FormKind) -> int:
    return 2 if kind is FormKind.DOUBLE else 1


def remaining(g: GrammarState) -> int:
    """Length of a shortest completion that is always available from ``g`` (end token excluded)."""
    if g.kind.top_down:
        cc = _close_cost(g.kind)
        return {
            Phase.START: 2 + cc,
            Phase.CONCEPT: 1 + g.depth * cc,
            Phase.READY: g.depth * cc,
            Phase.VALUE: 1 + g.depth * cc,
            Phase.CLOSE2: 1 + g.depth * cc,
            Phase.DONE: 0,
        }[g.phase]
    return {
        Phase.START: 2,
        Phase.READY: g.depth,
        # any earlier concept (the root at least) can be re-mentioned through a coref pointer
        Phase.VALUE: 1 + g.depth,
        Phase.DONE: 0,
    }[g.phase]


def grammar_step(g: GrammarState, index: int, tok: str, coref: Optional[int] = None,
                 struct: Optional[int] = None) -> GrammarState:
    """Successor state after emitting ``tok`` at ``index``; raises GrammarViolation if illegal."""
    if tok == EOS:
        if g.phase is not Phase.DONE:
            raise GrammarViolation("end of sequence before the root is complete")
        return g
    if tok in SPECIALS:
        raise GrammarViolation(f"special token {tok!r} inside a form")
    if g.phase is Phase.DONE:
        raise GrammarViolation("tokens after the root")
    if coref is not None:
        if not is_atom(tok) or coref not in g.candidates(tok):
            raise GrammarViolation("coref pointer must target an earlier mention of the same concept")
        if g.phase is not Phase.VALUE:
            raise GrammarViolation("only values may carry a coref pointer")
    if struct is not None and tok != REDUCE:
        raise GrammarViolation("struct pointers sit on reduce tokens only")
    if g.kind.top_down:
        return _step_down(g, index, tok, coref)
    return _step_up(g, index, tok, coref, struct)


def _step_down(g: GrammarState, index: int, tok: str, coref: Optional[int]) -> GrammarState:
    closer = CLOSE if g.kind is FormKind.SINGLE else CLOSE_COMPOSE
    ph = g.phase
    if tok == OPEN and ph in (Phase.START, Phase.VALUE):
        return replace(g, phase=Phase.CONCEPT, depth=g.depth + 1, balance=g.balance + 1)
    if ph is Phase.CONCEPT and is_atom(tok):
        return replace(g, phase=Phase.READY, mentions=g.mentions + ((tok, index),))
    if ph is Phase.READY and is_relation(tok):
        return replace(g, phase=Phase.VALUE)
    if ph is Phase.VALUE and is_atom(tok):
        mentions = g.mentions + ((tok, index),) if coref is not None else g.mentions
        return replace(g, phase=Phase.READY, mentions=mentions)
    if ph is Phase.READY and tok == closer:
        if g.balance <= 0:
            raise GrammarViolation("close without a matching open bracket")
        depth = g.depth - 1
        if g.kind is FormKind.DOUBLE:
            return replace(g, phase=Phase.CLOSE2, depth=depth, balance=g.balance - 1)
        return replace(g, phase=Phase.READY if depth else Phase.DONE, depth=depth, balance=g.balance - 1)
    if ph is Phase.CLOSE2 and tok == CLOSE_EXPAND:
        return replace(g, phase=Phase.READY if g.depth else Phase.DONE)
    raise GrammarViolation(f"token {tok!r} not allowed in phase {ph.value}")


def _step_up(g: GrammarState, index: int, tok: str, coref: Optional[int], struct: Optional[int]) -> GrammarState:
    ph = g.phase
    if ph is Phase.START and is_atom(tok) and not is_constant_literal(tok):
        return replace(g, phase=Phase.READY, depth=1, frames=(index,), mentions=((tok, index),))
    if ph is Phase.READY and is_relation(tok):
        return replace(g, phase=Phase.VALUE)
    if ph is Phase.READY and tok == REDUCE:
        if struct is None or struct != g.frames[-1]:
            raise GrammarViolation("struct pointer must target the head of the innermost open span")
        frames = g.frames[:-1]
        return replace(g, phase=Phase.READY if frames else Phase.DONE, depth=len(frames), frames=frames)
    if ph is Phase.VALUE and is_atom(tok):
        if coref is not None:
            return replace(g, phase=Phase.READY, mentions=g.mentions + ((tok, index),))
        if is_constant_literal(tok):
            return replace(g, phase=Phase.READY)
        # an unpointed concept opens a nested span
        return replace(g, phase=Phase.READY, depth=g.depth + 1, frames=g.frames + (index,),
                       mentions=g.mentions + ((tok, index),))
    raise GrammarViolation(f"token {tok!r} not allowed in phase {ph.value}")


# ---------------------------------------------------------------------------
# hypotheses


@dataclass(frozen=True, eq=False)
class Hypothesis:
    tokens: Tuple[str, ...]
    coref: Tuple[Optional[int], ...]
    struct: Tuple[Optional[int], ...]
    stack: StackState
    dec_mask: np.ndarray          # (len + 1, len + 1) visibility over <bos> + tokens
    grammar: GrammarState
    logp_base: float = 0.0
    logp_coref: float = 0.0
    logp_struct: float = 0.0
    finished: bool = False
    source: int = 0

    @property
    def score(self) -> float:
        return self.logp_base + self.logp_coref + self.logp_struct

    @property
    def balance(self) -> int:
        return self.grammar.balance

    def form(self) -> TargetForm:
        struct = tuple(self.struct) if self.grammar.kind is FormKind.BOTTOMUP else None
        return TargetForm(self.grammar.kind, self.tokens, self.coref, struct)


def initial_hypothesis(kind, source: int = 0) -> Hypothesis:
    return Hypothesis((), (), (), StackState(), np.ones((1, 1), dtype=bool),
                      GrammarState(FormKind(kind)), source=source)


def candidate_filter(h: Hypothesis, tok: str, coref: Optional[int] = None,
                     struct: Optional[int] = None, max_len: Optional[int] = None) -> bool:
    """Would extending ``h`` with this token and pointer choice keep it completable?"""
    if h.finished:
        return False
    try:
        g = grammar_step(h.grammar, len(h.tokens), tok, coref, struct)
    except GrammarViolation:
        return False
    if tok == EOS or max_len is None:
        return True
    return len(h.tokens) + 1 + remaining(g) <= max_len


def incremental_cha_context(h: Hypothesis, tok: str, struct: Optional[int] = None,
                            variant=None) -> Tuple[StackState, np.ndarray]:
    """Mask row for ``tok`` appended to ``h`` (form coordinates), with the updated stack."""
    variant = MaskVariant.for_kind(h.grammar.kind) if variant is None else MaskVariant(variant)
    return incremental_step(h.stack, tok, struct, variant)


def extend(h: Hypothesis, tok: str, coref: Optional[int] = None, struct: Optional[int] = None,
           variant=None, logp: Tuple[float, float, float] = (0.0, 0.0, 0.0)) -> Hypothesis:
    if tok == EOS:
        g = grammar_step(h.grammar, len(h.tokens), tok)
        return replace(h, grammar=g, finished=True, logp_base=h.logp_base + logp[0])
    g = grammar_step(h.grammar, len(h.tokens), tok, coref, struct)
    stack, row = incremental_cha_context(h, tok, struct, variant)
    n = len(h.tokens) + 1
    mask = np.zeros((n + 1, n + 1), dtype=bool)
    mask[:n, :n] = h.dec_mask
    mask[n, 0] = True
    mask[n, 1:] = row
    return Hypothesis(h.tokens + (tok,), h.coref + (coref,), h.struct + (struct,), stack, mask, g,
                      h.logp_base + logp[0], h.logp_coref + logp[1], h.logp_struct + logp[2],
                      False, h.source)


# ---------------------------------------------------------------------------
# beam search


@dataclass
class DecodeResult:
    forms: List[TargetForm]
    scores: List[float]
    complete: bool
    hypotheses: List[Hypothesis] = field(default_factory=list, repr=False)

    @property
    def best(self) -> TargetForm:
        return self.forms[0]

    def best_graph(self) -> Optional[AmrGraph]:
        """First ranked output that delinearizes; None if none does."""
        for f in self.forms:
            try:
                return delinearize(f)
            except FormError:
                continue
        return None


class _TokenTable:
    """Target-token ids grouped by grammatical category."""

    def __init__(self, vocab: Vocab, kind: FormKind):
        self.vocab = vocab
        self.v = len(vocab)
        ids = lambda toks: np.array(sorted(vocab.stoi[t] for t in toks), dtype=np.int64)
        targets = [t for t in vocab.target_tokens]
        self.atoms = [t for t in targets if is_atom(t)]
        self.atom_ids = ids(self.atoms)
        self.head_ids = ids([t for t in self.atoms if not is_constant_literal(t)])
        self.const_ids = ids([t for t in self.atoms if is_constant_literal(t)])
        self.rel_ids = ids([t for t in targets if is_relation(t)])
        self.single = {t: np.array([vocab.stoi[t]]) for t in (OPEN, CLOSE, CLOSE_COMPOSE, CLOSE_EXPAND, REDUCE, EOS)}

    def allowed(self, h: Hypothesis, max_len: int) -> np.ndarray:
        """Boolean vector over the vocabulary; agrees with ``candidate_filter`` under the pointer policy."""
        g = h.grammar
        ok = np.zeros(self.v, dtype=bool)
        if h.finished:
            return ok
        room = max_len - len(h.tokens) - 1  # tokens left after this one

        def fits(state_rem: int) -> bool:
            return state_rem <= room

        ph = g.phase
        if ph is Phase.DONE:
            ok[self.single[EOS]] = True
            return ok
        if g.kind.top_down:
            cc = _close_cost(g.kind)
            closer = CLOSE if g.kind is FormKind.SINGLE else CLOSE_COMPOSE
            if ph in (Phase.START, Phase.VALUE):
                if fits(1 + (g.depth + 1) * cc):
                    ok[self.single[OPEN]] = True
            if ph is Phase.VALUE and fits(g.depth * cc):
                ok[self.atom_ids] = True
            if ph is Phase.CONCEPT and fits(g.depth * cc):
                ok[self.atom_ids] = True
            if ph is Phase.READY:
                if fits(1 + g.depth * cc):
                    ok[self.rel_ids] = True
                ok[self.single[closer]] = g.balance > 0
            if ph is Phase.CLOSE2:
                ok[self.single[CLOSE_EXPAND]] = True
            return ok
        if ph is Phase.START and fits(1):
            ok[self.head_ids] = True
        if ph is Phase.READY:
            if fits(1 + g.depth):
                ok[self.rel_ids] = True
            ok[self.single[REDUCE]] = True
        if ph is Phase.VALUE:
            if fits(g.depth):
                ok[self.const_ids] = True
                for t, _ in g.mentions:
                    ok[self.vocab.stoi[t]] = True
            if fits(g.depth + 1):
                ok[self.head_ids] = True
        return ok


def _coref_choice(h: Hypothesis, tok: str, row: np.ndarray) -> Tuple[Optional[int], float]:
    """Pointer argmax among same-token mentions; value slots point whenever a mention exists."""
    if h.grammar.phase is not Phase.VALUE or not is_atom(tok):
        return None, 0.0
    cands = h.grammar.candidates(tok)
    if not cands:
        return None, 0.0
    best = max(cands, key=lambda j: (row[j + 1], j))
    return best, float(row[best + 1])


def _struct_choice(h: Hypothesis, tok: str, row: np.ndarray) -> Tuple[Optional[int], float]:
    if tok != REDUCE:
        return None, 0.0
    s = h.grammar.frames[-1]
    return s, float(row[s + 1])


def _rank_key(h: Hypothesis, vocab: Vocab):
    return (-h.score, len(h.tokens), tuple(vocab.stoi[t] for t in h.tokens))


@torch.no_grad()
def beam_search(model: ChaParser, vocab: Vocab, sources: Sequence[Sequence[str]], beam: int = 1,
                max_len: int = 64, kind=None) -> List[DecodeResult]:
    """Decode every source in one length-synchronous batched beam search.

    Each step extends the base layer; at value atoms and reduce tokens the
    pointer argmax among legal targets is chosen jointly, and the hypothesis
    score sums base, coref and struct log-probabilities.
    """
    if beam < 1:
        raise ValueError("beam width must be at least 1")
    cfg = model.config
    kind = FormKind(kind or cfg.cha_kind)
    variant = cfg.mask_variant if kind.value == cfg.cha_kind else MaskVariant.for_kind(kind)
    table = _TokenTable(vocab, kind)
    n_src = len(sources)
    if n_src == 0:
        return []
    pad = vocab.stoi["<pad>"]
    s_len = max(len(s) for s in sources) + 1
    src = torch.full((n_src, s_len), pad, dtype=torch.long)
    for r, s in enumerate(sources):
        ids = [vocab.id(t) for t in s] + [vocab.stoi[EOS]]
        src[r, : len(ids)] = torch.tensor(ids)
    src_pad = src == pad
    model.eval()
    enc = model.encode(src, src_pad)
    bos = vocab.stoi[BOS]

    beams: List[List[Hypothesis]] = [[initial_hypothesis(kind, r)] for r in range(n_src)]
    for _ in range(max_len + 1):
        active = [h for b in beams for h in b if not h.finished]
        if not active:
            break
        t = len(active[0].tokens) + 1
        m = len(active)
        dec_in = torch.full((m, t), bos, dtype=torch.long)
        coref_in = torch.full((m, t), -1, dtype=torch.long)
        struct_in = torch.full((m, t), -1, dtype=torch.long)
        cha = torch.zeros((m, t, t), dtype=torch.bool)
        for r, h in enumerate(active):
            if h.tokens:
                dec_in[r, 1:] = torch.tensor([vocab.stoi[x] for x in h.tokens])
                coref_in[r, 1:] = torch.tensor([-1 if p is None else p + 1 for p in h.coref])
                struct_in[r, 1:] = torch.tensor([-1 if p is None else p + 1 for p in h.struct])
            cha[r] = torch.from_numpy(h.dec_mask)
        idx = torch.tensor([h.source for h in active])
        out = model.decode(dec_in, coref_in, struct_in if kind is FormKind.BOTTOMUP else None,
                           cha, enc[idx], src_pad[idx])
        logp = torch.log_softmax(out.logits[:, -1].double(), dim=-1).numpy()
        coref_lp = out.coref_logp[:, -1].double().numpy()
        struct_lp = out.struct_logp[:, -1].double().numpy()

        expansions: Dict[int, List[Hypothesis]] = {r: [h for h in beams[r] if h.finished] for r in range(n_src)}
        for r, h in enumerate(active):
            ok = table.allowed(h, max_len)
            if not ok.any():
                continue
            scores = np.where(ok, logp[r], -np.inf)
            k = min(beam, int(ok.sum()))
            # stable ordering: score desc, then token id asc
            order = np.lexsort((np.arange(len(scores)), -scores))[:k]
            for tid in order:
                tok = vocab.itos[tid]
                c, c_lp = _coref_choice(h, tok, coref_lp[r])
                s, s_lp = _struct_choice(h, tok, struct_lp[r])
                expansions[h.source].append(
                    extend(h, tok, c, s, variant, (float(logp[r, tid]), c_lp, s_lp)))
        for src_i in range(n_src):
            cands = expansions[src_i]
            if cands:
                beams[src_i] = sorted(cands, key=lambda x: _rank_key(x, vocab))[:beam]

    results = []
    for b in beams:
        ranked = sorted(b, key=lambda x: (not x.finished,) + _rank_key(x, vocab))
        complete = any(h.finished for h in ranked)
        if complete:
            ranked = [h for h in ranked if h.finished]
        results.append(DecodeResult([h.form() for h in ranked], [h.score for h in ranked], complete, ranked))
    return results


@torch.no_grad()
def score_form(model: ChaParser, vocab: Vocab, source: Sequence[str], form: TargetForm) -> np.ndarray:
    """Teacher-forced cumulative log-probability after each step (last entry includes end-of-sequence).

    Uses one full forward pass, so it checks the incremental decoder state
    built during beam search.
    """
    from .model import Example, encode_batch

    cfg = model.config
    variant = cfg.mask_variant if form.kind.value == cfg.cha_kind else MaskVariant.for_kind(form.kind)
    batch = encode_batch([Example(tuple(source), form)], vocab, variant)
    out = model(batch)
    logp = torch.log_softmax(out.logits[0].double(), dim=-1)
    steps = []
    for i in range(len(form) + 1):
        s = float(logp[i, batch.dec_out[0, i]])
        if batch.coref_tgt[0, i] >= 0:
            s += float(out.coref_logp[0, i, batch.coref_tgt[0, i]])
        if batch.struct_tgt[0, i] >= 0:
            s += float(out.struct_logp[0, i, batch.struct_tgt[0, i]])
        steps.append(s)
    return np.cumsum(steps)

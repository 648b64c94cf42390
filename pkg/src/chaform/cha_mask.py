"""Causal hierarchical attention masks.

Each token either *expands* (attends to every token still on the stack) or
*composes* (attends only to the span it closes, which then leaves the stack and
is replaced by the composing token). Masks are boolean: ``visible[i, j]`` means
token ``i`` may attend to token ``j``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .target_forms import (CLOSE, CLOSE_COMPOSE, CLOSE_EXPAND, OPEN, REDUCE, FormKind,
                           TargetForm)


class MaskVariant(str, enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"
    BOTTOMUP = "bottomup"
    COMPOSE_AS_EXPAND = "compose_as_expand"
    EXPAND_AS_CAUSAL = "expand_as_causal"
    CAUSAL = "causal"

    @classmethod
    def for_kind(cls, kind) -> "MaskVariant":
        return cls(FormKind(kind).value)


class MaskError(ValueError):
    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message if index is None else f"{message} (token {index})")
        self.index = index


@dataclass(frozen=True, eq=False)
class ChaMask:
    visible: np.ndarray
    compose: np.ndarray  # True on rows that perform a compose

    @property
    def n(self) -> int:
        return self.visible.shape[0]

    def row(self, i: int) -> List[int]:
        return np.flatnonzero(self.visible[i]).tolist()

    def check(self) -> "ChaMask":
        v = self.visible
        if np.triu(v, 1).any():
            raise MaskError("mask is not causal")
        if not np.diag(v).all():
            raise MaskError("mask diagonal is not fully visible")
        return self

    def to_ascii(self, tokens: Optional[Sequence[str]] = None) -> str:
        """Rows are attending tokens, columns attended tokens.

        ``o`` marks a visible cell on a compose row, ``#`` on an expand row.
        """
        labels = [str(t) for t in tokens] if tokens is not None else [str(i) for i in range(self.n)]
        width = max((len(s) for s in labels), default=1)
        lines = []
        for i in range(self.n):
            mark = "o" if self.compose[i] else "#"
            cells = "".join(mark if self.visible[i, j] else "." for j in range(self.n))
            lines.append(f"{labels[i]:>{width}} {cells}")
        return "\n".join(lines) + "\n"

    def to_pgm(self, scale: int = 8) -> bytes:
        """Plain PGM: white = masked, grey = compose, black = expand."""
        img = np.full((self.n, self.n), 255, dtype=np.uint8)
        img[self.visible & ~self.compose[:, None]] = 0
        img[self.visible & self.compose[:, None]] = 128
        img = np.kron(img, np.ones((scale, scale), dtype=np.uint8))
        h, w = img.shape
        body = "\n".join(" ".join(map(str, r)) for r in img)
        return f"P2\n{w} {h}\n255\n{body}\n".encode("ascii")


def _check_tokens(tokens: Sequence[str], allowed_closers: Tuple[str, ...]) -> None:
    for i, tok in enumerate(tokens):
        if tok in (CLOSE, CLOSE_COMPOSE, CLOSE_EXPAND, REDUCE) and tok not in allowed_closers:
            raise MaskError(f"token {tok!r} not valid for this mask", i)


def _top_down(tokens: Sequence[str], closer: str, variant: MaskVariant) -> ChaMask:
    n = len(tokens)
    vis = np.zeros((n, n), dtype=bool)
    compose = np.zeros(n, dtype=bool)
    stack: List[int] = []
    for i, tok in enumerate(tokens):
        if tok == CLOSE_COMPOSE and (i + 1 >= n or tokens[i + 1] != CLOSE_EXPAND):
            raise MaskError("compose close not followed by expand close", i)
        if tok == closer:
            compose[i] = variant is not MaskVariant.COMPOSE_AS_EXPAND
            if variant is MaskVariant.COMPOSE_AS_EXPAND:
                vis[i, stack] = True
            j = i
            while tokens[j] != OPEN:
                vis[i, j] = True
                if not stack:
                    raise MaskError("stack underflow: unmatched close", i)
                j = stack.pop()
            vis[i, j] = True
            stack.append(i)
        else:
            if tok == CLOSE_EXPAND and (i == 0 or tokens[i - 1] != CLOSE_COMPOSE):
                raise MaskError("expand close not preceded by compose close", i)
            stack.append(i)
            if variant is MaskVariant.EXPAND_AS_CAUSAL:
                vis[i, : i + 1] = True
            else:
                vis[i, stack] = True
    return ChaMask(vis, compose)


def mask_single_down(tokens: Sequence[str]) -> ChaMask:
    _check_tokens(tokens, (CLOSE,))
    return _top_down(tokens, CLOSE, MaskVariant.SINGLE)


def mask_double_down(tokens: Sequence[str]) -> ChaMask:
    _check_tokens(tokens, (CLOSE_COMPOSE, CLOSE_EXPAND))
    return _top_down(tokens, CLOSE_COMPOSE, MaskVariant.DOUBLE)


def mask_ablation_compose_as_expand(tokens: Sequence[str]) -> ChaMask:
    """Single-down mask whose close rows see the whole stack instead of only their children."""
    _check_tokens(tokens, (CLOSE,))
    return _top_down(tokens, CLOSE, MaskVariant.COMPOSE_AS_EXPAND)


def mask_ablation_expand_as_causal(tokens: Sequence[str]) -> ChaMask:
    """Single-down mask whose non-close rows are fully causal."""
    _check_tokens(tokens, (CLOSE,))
    return _top_down(tokens, CLOSE, MaskVariant.EXPAND_AS_CAUSAL)


def mask_bottom_up(tokens: Sequence[str], struct_ptr: Sequence[Optional[int]]) -> ChaMask:
    _check_tokens(tokens, (REDUCE,))
    n = len(tokens)
    if len(struct_ptr) != n:
        raise MaskError("struct layer length differs from tokens")
    vis = np.zeros((n, n), dtype=bool)
    compose = np.zeros(n, dtype=bool)
    stack: List[int] = []
    for i, tok in enumerate(tokens):
        if tok == REDUCE:
            s = struct_ptr[i]
            if s is None:
                raise MaskError("reduce token without struct pointer", i)
            compose[i] = True
            j = i
            while j > s:
                vis[i, j] = True
                if not stack:
                    raise MaskError("stack underflow: struct pointer out of reach", i)
                j = stack.pop()
            if j != s:
                raise MaskError(f"struct pointer {s} targets an already-composed token", i)
            vis[i, j] = True
            stack.append(i)
        else:
            stack.append(i)
            vis[i, stack] = True
    return ChaMask(vis, compose)


def mask_causal(n: int) -> ChaMask:
    return ChaMask(np.tril(np.ones((n, n), dtype=bool)), np.zeros(n, dtype=bool))


def build_mask(tokens: Sequence[str], variant, struct_ptr: Optional[Sequence[Optional[int]]] = None) -> ChaMask:
    variant = MaskVariant(variant)
    if variant is MaskVariant.SINGLE:
        return mask_single_down(tokens)
    if variant is MaskVariant.DOUBLE:
        return mask_double_down(tokens)
    if variant is MaskVariant.BOTTOMUP:
        if struct_ptr is None:
            raise MaskError("bottom-up masks need struct pointers")
        return mask_bottom_up(tokens, struct_ptr)
    if variant is MaskVariant.COMPOSE_AS_EXPAND:
        return mask_ablation_compose_as_expand(tokens)
    if variant is MaskVariant.EXPAND_AS_CAUSAL:
        return mask_ablation_expand_as_causal(tokens)
    return mask_causal(len(tokens))


def mask_for_form(form: TargetForm, variant=None) -> ChaMask:
    variant = MaskVariant.for_kind(form.kind) if variant is None else MaskVariant(variant)
    return build_mask(form.tokens, variant, form.struct)


# ---------------------------------------------------------------------------
# streaming


@dataclass(frozen=True)
class StackState:
    """Stack of ``(index, is_open_bracket)`` entries plus the number of tokens seen."""

    entries: Tuple[Tuple[int, bool], ...] = ()
    length: int = 0

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(i for i, _ in self.entries)


def incremental_step(state: StackState, token: str, struct_ptr: Optional[int] = None,
                     variant=MaskVariant.SINGLE) -> Tuple[StackState, np.ndarray]:
    """Advance the stack by one token and return that token's mask row (length ``i + 1``)."""
    variant = MaskVariant(variant)
    i = state.length
    row = np.zeros(i + 1, dtype=bool)
    entries = list(state.entries)
    if variant is MaskVariant.CAUSAL:
        row[:] = True
        return StackState((), i + 1), row

    if variant is MaskVariant.BOTTOMUP:
        composing = token == REDUCE
    elif variant is MaskVariant.DOUBLE:
        composing = token == CLOSE_COMPOSE
    else:
        composing = token == CLOSE

    if composing:
        if variant is MaskVariant.COMPOSE_AS_EXPAND:
            row[[e for e, _ in entries]] = True
        row[i] = True
        if variant is MaskVariant.BOTTOMUP:
            if struct_ptr is None:
                raise MaskError("reduce token without struct pointer", i)
            while True:
                if not entries:
                    raise MaskError("stack underflow: struct pointer out of reach", i)
                j, _ = entries.pop()
                row[j] = True
                if j <= struct_ptr:
                    break
            if j != struct_ptr:
                raise MaskError(f"struct pointer {struct_ptr} targets an already-composed token", i)
        else:
            while True:
                if not entries:
                    raise MaskError("stack underflow: unmatched close", i)
                j, is_open = entries.pop()
                row[j] = True
                if is_open:
                    break
        entries.append((i, False))
    else:
        entries.append((i, token == OPEN))
        if variant is MaskVariant.EXPAND_AS_CAUSAL:
            row[:] = True
        else:
            row[[e for e, _ in entries]] = True
    return StackState(tuple(entries), i + 1), row


def replay(tokens: Sequence[str], variant, struct_ptr: Optional[Sequence[Optional[int]]] = None) -> np.ndarray:
    """Whole mask assembled from streaming rows."""
    n = len(tokens)
    vis = np.zeros((n, n), dtype=bool)
    state = StackState()
    for i, tok in enumerate(tokens):
        s = None if struct_ptr is None else struct_ptr[i]
        state, row = incremental_step(state, tok, s, variant)
        vis[i, : i + 1] = row
    return vis

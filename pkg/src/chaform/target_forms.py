"""Multi-layer, variable-free target forms and their exact inverse.

A form has a base layer of tokens, a coref layer of backward pointers from a
repeated mention to its nearest preceding mention and, for bottom-up forms, a
struct layer of pointers from each reduce token to the leftmost child of the
span it closes.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .amr_graph import AmrGraph, replicate_referents

OPEN = "("
CLOSE = ")"
CLOSE_COMPOSE = ")₁"
CLOSE_EXPAND = ")₂"
REDUCE = "■"
STRUCTURAL = frozenset({OPEN, CLOSE, CLOSE_COMPOSE, CLOSE_EXPAND, REDUCE})

_ALIASES = {")1": CLOSE_COMPOSE, ")2": CLOSE_EXPAND, "[R]": REDUCE}

Pointers = Tuple[Optional[int], ...]


class FormKind(str, enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"
    BOTTOMUP = "bottomup"

    @property
    def top_down(self) -> bool:
        return self is not FormKind.BOTTOMUP


class FormError(ValueError):
    """Ill-formed target form; ``index`` is the offending token position."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message if index is None else f"{message} (token {index})")
        self.index = index


def is_relation(tok: str) -> bool:
    return len(tok) > 1 and tok.startswith(":")


def is_atom(tok: str) -> bool:
    """Concept or constant: anything that is neither structural nor a relation."""
    return tok not in STRUCTURAL and not is_relation(tok)


def is_close(tok: str) -> bool:
    return tok in (CLOSE, CLOSE_COMPOSE, CLOSE_EXPAND)


def split_tokens(text: str) -> List[str]:
    """Whitespace tokenization accepting ``)1``, ``)2`` and ``[R]`` as ASCII spellings."""
    return [_ALIASES.get(t, t) for t in text.split()]


@dataclass(frozen=True)
class TargetForm:
    kind: FormKind
    tokens: Tuple[str, ...]
    coref: Pointers
    struct: Optional[Pointers] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FormKind(self.kind))
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "coref", tuple(self.coref))
        if self.struct is not None:
            object.__setattr__(self, "struct", tuple(self.struct))

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_tokens(cls, kind, tokens: Sequence[str], coref: Optional[Dict[int, int]] = None,
                    struct: Optional[Dict[int, int]] = None) -> "TargetForm":
        n = len(tokens)
        coref_layer = tuple((coref or {}).get(i) for i in range(n))
        struct_layer = None
        if FormKind(kind) is FormKind.BOTTOMUP:
            struct_layer = tuple((struct or {}).get(i) for i in range(n))
        return cls(kind, tuple(tokens), coref_layer, struct_layer)

    def text(self) -> str:
        return " ".join(self.tokens)

    def validate(self) -> "TargetForm":
        """Check layer invariants and full well-formedness; raises FormError."""
        n = len(self.tokens)
        if n == 0:
            raise FormError("empty form")
        if len(self.coref) != n:
            raise FormError("coref layer length differs from base layer")
        for i, j in enumerate(self.coref):
            if j is None:
                continue
            if not 0 <= j < i:
                raise FormError(f"coref pointer {j} is not an earlier index", i)
            if self.tokens[j] != self.tokens[i] or not is_atom(self.tokens[i]):
                raise FormError(f"coref pointer {j} targets a different token", i)
        if self.kind.top_down:
            if self.struct is not None and any(s is not None for s in self.struct):
                raise FormError("top-down forms carry no struct layer")
            allowed_close = CLOSE if self.kind is FormKind.SINGLE else (CLOSE_COMPOSE, CLOSE_EXPAND)
            for i, tok in enumerate(self.tokens):
                if tok == REDUCE or (is_close(tok) and tok not in allowed_close):
                    raise FormError(f"token {tok!r} not allowed in {self.kind.value} form", i)
        else:
            if self.struct is None or len(self.struct) != n:
                raise FormError("bottom-up form needs a struct layer of equal length")
            for i, tok in enumerate(self.tokens):
                if tok in (OPEN, CLOSE, CLOSE_COMPOSE, CLOSE_EXPAND):
                    raise FormError(f"bracket {tok!r} in bottom-up form", i)
                s = self.struct[i]
                if (tok == REDUCE) != (s is not None):
                    raise FormError("struct pointer must sit exactly on reduce tokens", i)
                if s is not None:
                    if not 0 <= s < i:
                        raise FormError(f"struct pointer {s} is not an earlier index", i)
                    if is_relation(self.tokens[s]):
                        raise FormError("struct pointer targets a relation", i)
        delinearize(self)
        return self

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind.value, "tokens": list(self.tokens), "coref": list(self.coref),
             "struct": None if self.struct is None else list(self.struct)},
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "TargetForm":
        obj = json.loads(line)
        return cls(obj["kind"], tuple(obj["tokens"]), tuple(obj["coref"]),
                   None if obj.get("struct") is None else tuple(obj["struct"]))


# ---------------------------------------------------------------------------
# graph -> form


def linearize(g: AmrGraph, kind) -> TargetForm:
    kind = FormKind(kind)
    rt = replicate_referents(g)
    tree = rt.tree
    antecedent = dict(rt.coref_links)
    out = tree.out_edges()
    tokens: List[str] = []
    coref: Dict[int, int] = {}
    struct: Dict[int, int] = {}
    mention: Dict[str, int] = {}

    def emit(tok: str) -> int:
        tokens.append(tok)
        return len(tokens) - 1

    def emit_value(tgt: str, visit) -> None:
        if tgt not in tree.nodes:
            emit(tgt)
        elif tgt in antecedent:
            i = emit(tree.nodes[tgt])
            coref[i] = mention[antecedent[tgt]]
            mention[tgt] = i
        else:
            visit(tgt)

    def visit_down(var: str) -> None:
        emit(OPEN)
        mention[var] = emit(tree.nodes[var])
        for role, tgt in out.get(var, ()):
            emit(role)
            emit_value(tgt, visit_down)
        emit(CLOSE)

    def visit_up(var: str) -> None:
        start = emit(tree.nodes[var])
        mention[var] = start
        for role, tgt in out.get(var, ()):
            emit(role)
            emit_value(tgt, visit_up)
        struct[emit(REDUCE)] = start

    if kind is FormKind.BOTTOMUP:
        visit_up(tree.top)
        return TargetForm.from_tokens(kind, tokens, coref, struct)
    visit_down(tree.top)
    single = TargetForm.from_tokens(FormKind.SINGLE, tokens, coref)
    return to_double_down(single) if kind is FormKind.DOUBLE else single


def to_double_down(f: TargetForm) -> TargetForm:
    """Duplicate every close bracket into a compose/expand pair."""
    if f.kind is not FormKind.SINGLE:
        raise FormError(f"expected a single form, got {f.kind.value}")
    tokens: List[str] = []
    new_index: List[int] = []
    for tok in f.tokens:
        new_index.append(len(tokens))
        tokens.extend((CLOSE_COMPOSE, CLOSE_EXPAND) if tok == CLOSE else (tok,))
    coref = {new_index[i]: new_index[j] for i, j in enumerate(f.coref) if j is not None}
    return TargetForm.from_tokens(FormKind.DOUBLE, tokens, coref)


def from_double_down(f: TargetForm) -> TargetForm:
    if f.kind is not FormKind.DOUBLE:
        raise FormError(f"expected a double form, got {f.kind.value}")
    tokens: List[str] = []
    old_to_new: Dict[int, int] = {}
    i = 0
    while i < len(f.tokens):
        tok = f.tokens[i]
        if tok == CLOSE_COMPOSE:
            if i + 1 >= len(f.tokens) or f.tokens[i + 1] != CLOSE_EXPAND:
                raise FormError("compose close not followed by expand close", i)
            old_to_new[i] = len(tokens)
            tokens.append(CLOSE)
            i += 2
            continue
        if tok in (CLOSE_EXPAND, CLOSE):
            raise FormError(f"unpaired close {tok!r}", i)
        old_to_new[i] = len(tokens)
        tokens.append(tok)
        i += 1
    coref = {}
    for i, j in enumerate(f.coref):
        if j is None:
            continue
        if i not in old_to_new or j not in old_to_new:
            raise FormError("coref pointer on a close bracket", i)
        coref[old_to_new[i]] = old_to_new[j]
    return TargetForm.from_tokens(FormKind.SINGLE, tokens, coref)


def strip_to_sdfs(f: TargetForm) -> str:
    """Render a single form in the variable-based ``<Rk>`` style used by DFS baselines."""
    if f.kind is not FormKind.SINGLE:
        raise FormError(f"expected a single form, got {f.kind.value}")
    label: Dict[int, str] = {}
    out: List[str] = []
    heads = 0
    for i, tok in enumerate(f.tokens):
        if i > 0 and f.tokens[i - 1] == OPEN and is_atom(tok):
            label[i] = f"<R{heads}>"
            heads += 1
            out.extend((label[i], tok))
        elif f.coref[i] is not None:
            label[i] = label[f.coref[i]]
            out.append(label[i])
        else:
            out.append(tok)
    return " ".join(out)


# ---------------------------------------------------------------------------
# form -> graph


def delinearize(f: TargetForm) -> AmrGraph:
    """Rebuild the graph; coref pointers merge replicated mentions into one node."""
    if f.kind is FormKind.BOTTOMUP:
        return _delinearize_up(f)
    if f.kind is FormKind.DOUBLE:
        f = from_double_down(f)
    return _delinearize_down(f)


def _resolve_coref(f: TargetForm, i: int, var_at: Dict[int, str]) -> str:
    j = f.coref[i]
    if j is None or not 0 <= j < i:
        raise FormError("dangling coref pointer", i)
    if f.tokens[j] != f.tokens[i]:
        raise FormError("coref pointer targets a different token", i)
    if j not in var_at:
        raise FormError("coref pointer does not target a concept mention", i)
    return var_at[j]


def _delinearize_down(f: TargetForm) -> AmrGraph:
    toks = f.tokens
    n = len(toks)
    nodes: Dict[str, str] = {}
    edges: List = []
    var_at: Dict[int, str] = {}
    pos = 0

    def node() -> str:
        nonlocal pos
        if pos >= n or toks[pos] != OPEN:
            raise FormError("expected '('", min(pos, n - 1))
        pos += 1
        if pos >= n or not is_atom(toks[pos]):
            raise FormError("'(' must be followed by a concept", min(pos, n - 1))
        if f.coref[pos] is not None:
            raise FormError("a bracketed concept cannot carry a coref pointer", pos)
        var = f"n{len(nodes)}"
        nodes[var] = toks[pos]
        var_at[pos] = var
        pos += 1
        while pos < n and is_relation(toks[pos]):
            role = toks[pos]
            rel_index = pos
            pos += 1
            if pos >= n or not (toks[pos] == OPEN or is_atom(toks[pos])):
                raise FormError(f"relation {role} has no value", rel_index)
            slot = len(edges)
            edges.append(None)
            if toks[pos] == OPEN:
                edges[slot] = (var, role, node())
            elif f.coref[pos] is not None:
                target = _resolve_coref(f, pos, var_at)
                var_at[pos] = target
                edges[slot] = (var, role, target)
                pos += 1
            else:
                edges[slot] = (var, role, toks[pos])
                pos += 1
        if pos >= n or toks[pos] != CLOSE:
            raise FormError("expected ')' or a relation", min(pos, n - 1))
        pos += 1
        return var

    if n == 0:
        raise FormError("empty form")
    top = node()
    if pos != n:
        raise FormError("tokens after the root span", pos)
    return AmrGraph(nodes, tuple(edges), top).canonical()


def _delinearize_up(f: TargetForm) -> AmrGraph:
    toks = f.tokens
    n = len(toks)
    if n == 0:
        raise FormError("empty form")
    if f.struct is None or len(f.struct) != n:
        raise FormError("bottom-up form needs a struct layer")
    # stack items: (start index, kind) with kind in {"atom", "rel", "span"}
    stack: List[Tuple[int, str]] = []
    children: Dict[int, List[Tuple[str, int, str]]] = {}
    for i, tok in enumerate(toks):
        if tok != REDUCE:
            if tok in STRUCTURAL:
                raise FormError(f"bracket {tok!r} in bottom-up form", i)
            stack.append((i, "rel" if is_relation(tok) else "atom"))
            continue
        s = f.struct[i]
        if s is None:
            raise FormError("reduce token without struct pointer", i)
        span: List[Tuple[int, str]] = []
        while stack and stack[-1][0] > s:
            span.append(stack.pop())
        if not stack or stack[-1][0] != s:
            raise FormError(f"struct pointer {s} does not target an uncomposed token", i)
        head = stack.pop()
        if head[1] != "atom":
            raise FormError("struct pointer must target a concept", i)
        if f.coref[s] is not None:
            raise FormError("a coreferent mention cannot head a span", i)
        span.reverse()
        if len(span) % 2:
            raise FormError("span does not alternate relation and value", i)
        kids = []
        for (ri, rkind), (vi, vkind) in zip(span[::2], span[1::2]):
            if rkind != "rel" or vkind == "rel":
                raise FormError("span does not alternate relation and value", i)
            kids.append((toks[ri], vi, vkind))
        children[s] = kids
        stack.append((s, "span"))
    if len(stack) != 1 or stack[0][1] != "span":
        raise FormError("form does not reduce to a single root", n - 1)

    heads = sorted(children)
    var_at: Dict[int, str] = {h: f"h{h}" for h in heads}

    def resolve(i: int) -> str:
        seen = set()
        while i not in var_at:
            j = f.coref[i]
            if j is None or not 0 <= j < i or toks[j] != toks[i] or j in seen:
                raise FormError("coref pointer does not reach a concept mention", i)
            seen.add(i)
            i = j
        return var_at[i]

    nodes = {var_at[h]: toks[h] for h in heads}
    edges = []
    for h in heads:
        for role, vi, vkind in children[h]:
            if vkind == "span":
                edges.append((var_at[h], role, var_at[vi]))
            elif f.coref[vi] is not None:
                edges.append((var_at[h], role, resolve(vi)))
            else:
                edges.append((var_at[h], role, toks[vi]))
    return AmrGraph(nodes, tuple(edges), var_at[stack[0][0]]).canonical()

"""AMR graphs: data model, PENMAN reading/writing, triples and a random generator."""

from __future__ import annotations

import random
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Set, Tuple

Edge = Tuple[str, str, str]
Triple = Tuple[str, str, str]

_PENMAN_TOKEN_RE = re.compile(r'\(|\)|/|"(?:[^"\\]|\\.)*"|[^\s()/"]+')
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
# bare symbols of this shape are read as variable references, anything else as a constant
_VARIABLE_RE = re.compile(r"^[a-z]\d*$")


class GraphError(ValueError):
    """Raised when a graph violates the AMR graph invariants."""


class PenmanError(ValueError):
    """Raised on malformed PENMAN text."""


def is_constant_literal(atom: str) -> bool:
    return atom in ("-", "+") or atom.startswith('"') or bool(_NUMBER_RE.match(atom))


@dataclass(frozen=True)
class AmrGraph:
    """A rooted, variable-labelled graph.

    ``nodes`` maps variable ids to concept labels. ``edges`` is ordered and the
    order fixes the depth-first linearization. An edge target is a variable when
    it is a key of ``nodes`` and a constant literal otherwise.
    """

    nodes: Mapping[str, str]
    edges: Tuple[Edge, ...]
    top: str

    def __post_init__(self):
        object.__setattr__(self, "nodes", dict(self.nodes))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))

    def is_variable(self, target: str) -> bool:
        return target in self.nodes

    def out_edges(self) -> Dict[str, List[Tuple[str, str]]]:
        out: Dict[str, List[Tuple[str, str]]] = defaultdict(list)
        for src, role, tgt in self.edges:
            out[src].append((role, tgt))
        return out

    def validate(self) -> "AmrGraph":
        if self.top not in self.nodes:
            raise GraphError(f"top {self.top!r} is not a node")
        for src, role, tgt in self.edges:
            if src not in self.nodes:
                raise GraphError(f"edge source {src!r} is not a node")
            if not role.startswith(":"):
                raise GraphError(f"role {role!r} does not start with ':'")
        unreachable = set(self.nodes) - set(self.dfs_order())
        if unreachable:
            raise GraphError(f"nodes unreachable from top: {sorted(unreachable)}")
        return self

    def dfs_order(self) -> List[str]:
        """Variables in first-visit depth-first order from ``top``."""
        out = self.out_edges()
        seen: Set[str] = set()
        order: List[str] = []

        def visit(var: str) -> None:
            seen.add(var)
            order.append(var)
            for _, tgt in out.get(var, ()):
                if tgt in self.nodes and tgt not in seen:
                    visit(tgt)

        if self.top in self.nodes:
            visit(self.top)
        return order

    def reentrancy_count(self) -> int:
        indeg: Dict[str, int] = defaultdict(int)
        for _, _, tgt in self.edges:
            if tgt in self.nodes:
                indeg[tgt] += 1
        indeg[self.top] += 1  # the root mention
        return sum(max(0, k - 1) for k in indeg.values())

    def renamed(self, mapping: Mapping[str, str]) -> "AmrGraph":
        def r(x: str) -> str:
            return mapping.get(x, x) if x in self.nodes else x

        return AmrGraph(
            nodes={mapping[v]: c for v, c in self.nodes.items()},
            edges=tuple((mapping[s], role, r(t)) for s, role, t in self.edges),
            top=mapping[self.top],
        )

    def canonical(self) -> "AmrGraph":
        """Rename variables to ``n0, n1, ...`` in depth-first order.

        Edges are also reordered into depth-first emission order; the order of
        each node's own edges is kept, so linearizations are unchanged.
        """
        self.validate()
        out = self.out_edges()
        order = self.dfs_order()
        edges = [(v, role, tgt) for v in order for role, tgt in out.get(v, ())]
        g = AmrGraph({v: self.nodes[v] for v in order}, tuple(edges), self.top)
        return g.renamed({v: f"n{i}" for i, v in enumerate(order)})


@dataclass(frozen=True)
class ReplicatedTree:
    """A tree-shaped graph whose reentrant nodes were split into copies.

    ``coref_links`` holds ``(duplicate, antecedent)`` pairs; the antecedent is the
    nearest preceding mention of the same referent.
    """

    tree: AmrGraph
    coref_links: Tuple[Tuple[str, str], ...] = field(default_factory=tuple)

    def merged(self) -> AmrGraph:
        """Undo the replication by merging every copy into its first mention."""
        parent = {v: v for v in self.tree.nodes}

        def find(v: str) -> str:
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for dup, ante in self.coref_links:
            parent[find(dup)] = find(ante)
        nodes = {v: c for v, c in self.tree.nodes.items() if find(v) == v}
        edges = tuple(
            (find(s), role, find(t) if t in self.tree.nodes else t) for s, role, t in self.tree.edges
        )
        return AmrGraph(nodes=nodes, edges=edges, top=find(self.tree.top))


# ---------------------------------------------------------------------------
# PENMAN


def _tokenize_penman(text: str) -> List[str]:
    pos = 0
    tokens = []
    for m in _PENMAN_TOKEN_RE.finditer(text):
        gap = text[pos:m.start()]
        if gap.strip():
            raise PenmanError(f"unexpected characters {gap.strip()!r}")
        tokens.append(m.group())
        pos = m.end()
    if text[pos:].strip():
        raise PenmanError(f"unexpected characters {text[pos:].strip()!r}")
    return tokens


def parse_penman(text: str) -> AmrGraph:
    """Parse one PENMAN expression such as ``( a / alpha :arg0 ( b / beta ) )``.

    Roles are lower-cased; inverse roles are kept verbatim. A reused variable
    becomes a second edge into the same node.
    """
    tokens = _tokenize_penman(text)
    if not tokens:
        raise PenmanError("empty input")
    nodes: Dict[str, str] = {}
    edges: List[Edge] = []
    pos = 0

    def peek() -> Optional[str]:
        return tokens[pos] if pos < len(tokens) else None

    def take(expected: Optional[str] = None) -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise PenmanError("unbalanced parentheses: unexpected end of input")
        tok = tokens[pos]
        if expected is not None and tok != expected:
            raise PenmanError(f"expected {expected!r} at token {pos}, got {tok!r}")
        pos += 1
        return tok

    def parse_node() -> str:
        take("(")
        var = peek()
        if var is None:
            raise PenmanError("unbalanced parentheses: unexpected end of input")
        if var in ("(", ")", "/") or var.startswith(":"):
            raise PenmanError(f"empty node at token {pos}")
        take()
        if peek() != "/":
            raise PenmanError(f"node {var!r} has no concept")
        take("/")
        concept = peek()
        if concept is None or concept in ("(", ")", "/") or concept.startswith(":"):
            raise PenmanError(f"node {var!r} has no concept")
        take()
        if var in nodes:
            raise PenmanError(f"duplicate definition of variable {var!r}")
        nodes[var] = concept
        while peek() is not None and peek().startswith(":"):
            role = take().lower()
            nxt = peek()
            if nxt is None:
                raise PenmanError("unbalanced parentheses: unexpected end of input")
            if nxt == "(":
                slot = len(edges)
                edges.append(None)
                edges[slot] = (var, role, parse_node())
            elif nxt in (")", "/") or nxt.startswith(":"):
                raise PenmanError(f"role {role} has no value")
            else:
                edges.append((var, role, take()))
        take(")")
        return var

    top = parse_node()
    if pos != len(tokens):
        raise PenmanError(f"unbalanced parentheses: trailing tokens from {pos}")
    for _, _, tgt in edges:
        if tgt not in nodes and not is_constant_literal(tgt) and _VARIABLE_RE.match(tgt):
            raise PenmanError(f"reference to undefined variable {tgt!r}")
    return AmrGraph(nodes=nodes, edges=tuple(edges), top=top)


def serialize_penman(g: AmrGraph) -> str:
    """Single-line PENMAN; a node's definition is printed at its first DFS visit."""
    g.validate()
    out = g.out_edges()
    seen: Set[str] = set()
    parts: List[str] = []

    def visit(var: str) -> None:
        seen.add(var)
        parts.extend(["(", var, "/", g.nodes[var]])
        for role, tgt in out.get(var, ()):
            parts.append(role)
            if tgt in g.nodes and tgt not in seen:
                visit(tgt)
            else:
                parts.append(tgt)
        parts.append(")")

    visit(g.top)
    return " ".join(parts)


# ---------------------------------------------------------------------------
# structure


def replicate_referents(g: AmrGraph) -> ReplicatedTree:
    """Split every reentrant node into one copy per incoming edge.

    The first DFS mention keeps the original variable and all outgoing edges;
    later mentions become bare leaves linked to the nearest preceding mention.
    """
    g.validate()
    out = g.out_edges()
    nodes: Dict[str, str] = {}
    edges: List[Edge] = []
    links: List[Tuple[str, str]] = []
    last_mention: Dict[str, str] = {}
    copies: Dict[str, int] = defaultdict(int)

    def visit(var: str) -> None:
        nodes[var] = g.nodes[var]
        last_mention[var] = var
        for role, tgt in out.get(var, ()):
            if tgt not in g.nodes:
                edges.append((var, role, tgt))
            elif tgt in last_mention:
                copies[tgt] += 1
                dup = f"{tgt}~{copies[tgt]}"
                while dup in g.nodes:
                    dup += "~"
                nodes[dup] = g.nodes[tgt]
                edges.append((var, role, dup))
                links.append((dup, last_mention[tgt]))
                last_mention[tgt] = dup
            else:
                edges.append((var, role, tgt))
                visit(tgt)

    visit(g.top)
    return ReplicatedTree(AmrGraph(nodes, tuple(edges), g.top), tuple(links))


def triples(g: AmrGraph) -> Set[Triple]:
    """Smatch-style decomposition: instance triples, one TOP triple, relation triples."""
    out: Set[Triple] = {(v, "instance", c) for v, c in g.nodes.items()}
    out.add((g.top, "TOP", g.nodes[g.top]))
    out.update(g.edges)
    return out


# ---------------------------------------------------------------------------
# random graphs

CONCEPTS = (
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
    "person", "city", "thing", "like-01", "tour-01", "employ-01", "want-01", "go-02",
)
ROLES = (":arg0", ":arg1", ":arg2", ":mod", ":location", ":arg1-of", ":time", ":manner")
CONSTANT_EDGES = ((":polarity", "-"), (":quant", "2"), (":quant", "3"), (":name", '"Ann"'))


def random_graph(seed: int, max_nodes: int = 12, max_reentrancies: int = 3) -> AmrGraph:
    """Seeded random valid graph with variables named ``n0, n1, ...`` in DFS order."""
    if max_nodes < 1:
        raise ValueError("max_nodes must be >= 1")
    rng = random.Random(seed)
    n = rng.randint(1, max_nodes)
    nodes = {f"v{k}": rng.choice(CONCEPTS) for k in range(n)}
    edges: List[Edge] = []
    for k in range(1, n):
        parent = rng.randrange(k)
        edges.append((f"v{parent}", rng.choice(ROLES), f"v{k}"))
    for k in range(n):
        if rng.random() < 0.15:
            role, const = rng.choice(CONSTANT_EDGES)
            edges.insert(rng.randint(0, len(edges)), (f"v{k}", role, const))
    if n > 1:
        for _ in range(rng.randint(0, max_reentrancies)):
            u, v = rng.sample(range(n), 2)
            edge = (f"v{u}", rng.choice(ROLES), f"v{v}")
            if edge not in edges:
                edges.insert(rng.randint(0, len(edges)), edge)
    return AmrGraph(nodes, tuple(edges), "v0").canonical()


# ---------------------------------------------------------------------------
# corpus files


@dataclass
class AmrRecord:
    graph: Optional[AmrGraph]
    metadata: Dict[str, str] = field(default_factory=dict)
    penman: str = ""
    error: Optional[str] = None
    line: int = 0

    @property
    def sentence(self) -> str:
        return self.metadata.get("snt", "")


def strip_wiki(g: AmrGraph) -> AmrGraph:
    return AmrGraph(g.nodes, tuple(e for e in g.edges if e[1] != ":wiki"), g.top)


def _parse_metadata(line: str) -> Dict[str, str]:
    if line.startswith("::snt "):
        return {"snt": line[len("::snt "):].strip()}
    meta = {}
    for seg in re.split(r"(?:^|\s)::", line):
        key, _, value = seg.strip().partition(" ")
        if key:
            meta[key] = value.strip()
    return meta


def iter_corpus(text: str, strict: bool = False) -> Iterator[AmrRecord]:
    """Records separated by blank lines; ``# ::key value`` lines are metadata.

    Unparseable records are yielded with ``graph=None`` and ``error`` set unless
    ``strict`` is true, in which case the error propagates.
    """
    block: List[str] = []
    start = 0
    for lineno, line in enumerate(text.splitlines() + [""], start=1):
        if line.strip():
            if not block:
                start = lineno
            block.append(line)
            continue
        if not block:
            continue
        meta: Dict[str, str] = {}
        body: List[str] = []
        for raw in block:
            if raw.lstrip().startswith("#"):
                meta.update(_parse_metadata(raw.lstrip()[1:].strip()))
            else:
                body.append(raw)
        block = []
        penman = " ".join(s.strip() for s in body)
        if not penman:
            continue
        try:
            graph = strip_wiki(parse_penman(penman))
            graph.validate()
            yield AmrRecord(graph, meta, penman, line=start)
        except (PenmanError, GraphError) as exc:
            if strict:
                raise type(exc)(f"record at line {start}: {exc}") from exc
            yield AmrRecord(None, meta, penman, error=str(exc), line=start)


def read_corpus(path: Path | str, strict: bool = False) -> List[AmrRecord]:
    return list(iter_corpus(Path(path).read_text(encoding="utf-8"), strict=strict))


def format_record(graph: AmrGraph, metadata: Optional[Mapping[str, str]] = None) -> str:
    lines = [f"# ::{k} {v}" for k, v in (metadata or {}).items()]
    lines.append(serialize_penman(graph))
    return "\n".join(lines) + "\n"


def write_corpus(path: Path | str, records: Iterable[Tuple[AmrGraph, Mapping[str, str]]]) -> None:
    text = "\n".join(format_record(g, m) for g, m in records)
    Path(path).write_text(text, encoding="utf-8")

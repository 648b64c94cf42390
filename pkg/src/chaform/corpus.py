"""Synthetic sentence/graph pairs for overfitting and smoke tests."""

from __future__ import annotations

from importlib import resources
from typing import List, Sequence, Tuple

from .amr_graph import AmrGraph, AmrRecord, format_record, iter_corpus, random_graph, replicate_referents
from .model import Example
from .target_forms import linearize

ROLE_WORDS = {
    ":arg0": "by", ":arg1": "of", ":arg2": "to", ":mod": "with", ":location": "at",
    ":arg1-of": "which", ":time": "when", ":manner": "how", ":polarity": "not",
    ":quant": "count", ":name": "named",
}

BUNDLED = "synthetic64.amr"


def verbalize(g: AmrGraph) -> List[str]:
    """Deterministic pseudo-sentence for a graph.

    Concepts appear as words, roles as fixed function words, repeated mentions
    as ``it`` and the end of each nested node as ``and``.
    """
    rt = replicate_referents(g)
    tree = rt.tree
    dup = {d for d, _ in rt.coref_links}
    out_edges = tree.out_edges()
    words: List[str] = []

    def visit(var: str) -> None:
        words.append(tree.nodes[var])
        for role, tgt in out_edges.get(var, []):
            words.append(ROLE_WORDS.get(role, role.lstrip(":")))
            if tgt in dup:
                words.append("it")
            elif tgt in tree.nodes:
                visit(tgt)
                words.append("and")
            else:
                words.append(tgt.strip('"').lower())

    visit(tree.top)
    return words


def synthetic_graphs(n: int = 64, seed: int = 0, max_nodes: int = 6,
                     max_reentrancies: int = 2) -> List[AmrGraph]:
    """``n`` distinct random graphs whose verbalizations are also distinct."""
    graphs: List[AmrGraph] = []
    seen = set()
    k = 0
    while len(graphs) < n:
        g = random_graph(seed * 100_003 + k, max_nodes, max_reentrancies)
        k += 1
        key = tuple(verbalize(g))
        if key in seen:
            continue
        seen.add(key)
        graphs.append(g)
    return graphs


def synthetic_corpus_text(n: int = 64, seed: int = 0, **kw) -> str:
    parts = []
    for i, g in enumerate(synthetic_graphs(n, seed, **kw)):
        parts.append(format_record(g, {"id": f"synth.{i}", "snt": " ".join(verbalize(g))}))
    return "\n".join(parts)


def bundled_corpus() -> List[AmrRecord]:
    text = resources.files("chaform.data").joinpath(BUNDLED).read_text(encoding="utf-8")
    return list(iter_corpus(text, strict=True))


def to_examples(records: Sequence[AmrRecord], kind) -> List[Example]:
    """Pair each record's sentence with its linearized graph; unparseable records are skipped."""
    out = []
    for r in records:
        if r.graph is None:
            continue
        words = r.sentence.split() if r.sentence else verbalize(r.graph)
        out.append(Example(tuple(words), linearize(r.graph, kind)))
    return out


def split_examples(examples: Sequence[Example]) -> Tuple[List[Tuple[str, ...]], list]:
    return [e.source for e in examples], [e.form for e in examples]

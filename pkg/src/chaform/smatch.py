"""Exact Smatch for small graphs.

Standard Smatch searches variable alignments by hill climbing, which only
lower-bounds the best score. Here the best injective alignment is found by an
integer program, so the score is the true optimum.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Set, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .amr_graph import AmrGraph, AmrRecord, read_corpus, triples

MAX_EXACT_NODES = 32


class SmatchError(ValueError):
    pass


@dataclass(frozen=True)
class SmatchResult:
    precision: float
    recall: float
    f1: float
    matched: int = 0
    test_total: int = 0
    gold_total: int = 0
    mapping: Dict[str, str] = field(default_factory=dict, compare=False)
    n_records: int = 1

    def to_dict(self) -> Dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "n_records": self.n_records}


def f1_from_counts(matched: int, test_total: int, gold_total: int) -> Tuple[float, float, float]:
    p = matched / test_total if test_total else 0.0
    r = matched / gold_total if gold_total else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


class _Side:
    def __init__(self, g: AmrGraph):
        self.g = g
        self.vars = list(g.nodes)
        self.index = {v: i for i, v in enumerate(self.vars)}
        self.triples = triples(g)
        self.var_edges: Set[Tuple[int, str, int]] = set()
        self.const_edges: Dict[int, Set[Tuple[str, str]]] = defaultdict(set)
        for s, role, t in self.triples:
            if role in ("instance", "TOP"):
                continue
            if t in g.nodes:
                self.var_edges.add((self.index[s], role, self.index[t]))
            else:
                self.const_edges[self.index[s]].add((role, t))


def _unary_gain(a: _Side, b: _Side, i: int, k: int) -> int:
    va, vb = a.vars[i], b.vars[k]
    gain = int(a.g.nodes[va] == b.g.nodes[vb])
    if va == a.g.top and vb == b.g.top and a.g.nodes[va] == b.g.nodes[vb]:
        gain += 1
    gain += len(a.const_edges.get(i, set()) & b.const_edges.get(k, set()))
    return gain


def _best_mapping(a: _Side, b: _Side) -> Tuple[int, List[int]]:
    """Maximize matched triples over injective maps from ``a``'s variables into ``b``'s.

    Binary ``x[i, k]`` says variable ``i`` of ``a`` maps to ``k`` of ``b``; each
    same-role pair of variable-to-variable triples gets ``y <= x[s, s']`` and
    ``y <= x[t, t']``. HiGHS solves the integer program to proven optimality.
    """
    n, m = len(a.vars), len(b.vars)
    nx = n * m
    pairs = [(s * m + s2, t * m + t2)
             for s, role, t in sorted(a.var_edges)
             for s2, role2, t2 in sorted(b.var_edges) if role == role2]
    nv = nx + len(pairs)
    cost = np.zeros(nv)
    for i in range(n):
        for k in range(m):
            cost[i * m + k] = -_unary_gain(a, b, i, k)
    cost[nx:] = -1.0

    rows, cols, vals = [], [], []
    r = 0
    for i in range(n):  # each variable of a used at most once
        rows += [r] * m
        cols += range(i * m, i * m + m)
        r += 1
    for k in range(m):  # each variable of b used at most once
        rows += [r] * n
        cols += range(k, nx, m)
        r += 1
    vals += [1.0] * len(rows)
    upper = [1.0] * r
    for q, (x1, x2) in enumerate(pairs):
        for x in (x1, x2):
            rows += [r, r]
            cols += [nx + q, x]
            vals += [1.0, -1.0]
            upper.append(0.0)
            r += 1
    matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(r, nv))
    res = milp(cost, constraints=LinearConstraint(matrix, -np.inf, upper),
               integrality=np.r_[np.ones(nx), np.zeros(len(pairs))], bounds=Bounds(0, 1))
    if not res.success:
        raise SmatchError(f"alignment solver failed: {res.message}")
    x = res.x[:nx].reshape(n, m) > 0.5
    assign = [int(np.flatnonzero(x[i])[0]) if x[i].any() else -1 for i in range(n)]
    free = iter(k for k in range(m) if k not in assign)
    assign = [k if k >= 0 else next(free) for k in assign]
    return _count_matches(a, b, assign), assign


def _count_matches(a: _Side, b: _Side, assign: Sequence[int]) -> int:
    f = {a.vars[i]: b.vars[k] for i, k in enumerate(assign)}
    return sum((f[s], r, f.get(t, t) if t in a.g.nodes else t) in b.triples for s, r, t in a.triples)


def smatch_small(test: AmrGraph, gold: AmrGraph, max_nodes: int = MAX_EXACT_NODES) -> SmatchResult:
    """Exact Smatch between a test graph and a gold graph.

    Raises SmatchError when the smaller graph exceeds ``max_nodes`` variables.
    """
    if min(len(test.nodes), len(gold.nodes)) > max_nodes:
        raise SmatchError(f"graphs too large for exact matching (> {max_nodes} nodes)")
    t_side, g_side = _Side(test), _Side(gold)
    swap = len(t_side.vars) > len(g_side.vars)
    small, large = (g_side, t_side) if swap else (t_side, g_side)
    matched, assign = _best_mapping(small, large)
    pairs = {small.vars[i]: large.vars[k] for i, k in enumerate(assign)}
    mapping = {v: k for k, v in pairs.items()} if swap else pairs
    p, r, f = f1_from_counts(matched, len(t_side.triples), len(g_side.triples))
    return SmatchResult(p, r, f, matched, len(t_side.triples), len(g_side.triples), mapping)


def score_records(predictions: Sequence[AmrRecord], gold: Sequence[AmrRecord],
                  max_nodes: int = MAX_EXACT_NODES) -> SmatchResult:
    """Micro-averaged Smatch over aligned records.

    An unparseable prediction contributes zero matches and zero test triples
    while its gold triples still count towards recall.
    """
    if not gold and not predictions:
        raise SmatchError("no records to score")
    if len(predictions) != len(gold):
        raise SmatchError(f"record count mismatch: {len(predictions)} predictions, {len(gold)} gold")
    matched = test_total = gold_total = 0
    for k, (pred, ref) in enumerate(zip(predictions, gold)):
        if ref.graph is None:
            raise SmatchError(f"gold record {k + 1} is unparseable: {ref.error}")
        if pred.graph is None:
            gold_total += len(triples(ref.graph))
            continue
        res = smatch_small(pred.graph, ref.graph, max_nodes)
        matched += res.matched
        test_total += res.test_total
        gold_total += res.gold_total
    p, r, f = f1_from_counts(matched, test_total, gold_total)
    return SmatchResult(p, r, f, matched, test_total, gold_total, n_records=len(gold))


def corpus_score(predictions_path: Path | str, gold_path: Path | str,
                 max_nodes: int = MAX_EXACT_NODES) -> SmatchResult:
    return score_records(read_corpus(predictions_path), read_corpus(gold_path), max_nodes)


def isomorphic(g1: AmrGraph, g2: AmrGraph, max_nodes: int = MAX_EXACT_NODES) -> bool:
    return len(g1.nodes) == len(g2.nodes) and smatch_small(g1, g2, max_nodes).f1 == 1.0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaform.amr_graph import random_graph
from chaform.cha_mask import (MaskError, StackState, build_mask, incremental_step,
                              mask_ablation_compose_as_expand, mask_ablation_expand_as_causal,
                              mask_bottom_up, mask_causal, mask_double_down, mask_for_form,
                              mask_single_down, replay)
from chaform.properties import check_mask, random_form, stack_trace
from chaform.target_forms import CLOSE_EXPAND, linearize

from conftest import BOTTOMUP_TOKENS, SINGLE_TOKENS

SMALL = "( x1 ( x2 ) x3 )".split()
SMALL_DOUBLE = "( x1 ( x2 )₁ )₂ x3 )₁ )₂".split()
SMALL_UP = "x1 x2 ■ x3 ■".split()
SMALL_UP_STRUCT = [None, None, 1, None, 0]


def rows(mask):
    return [set(mask.row(i)) for i in range(mask.n)]


def test_single_down_small():
    assert rows(mask_single_down(SMALL)) == [
        {0}, {0, 1}, {0, 1, 2}, {0, 1, 2, 3}, {2, 3, 4}, {0, 1, 4, 5}, {0, 1, 4, 5, 6}]


def test_single_down_one_node():
    assert rows(mask_single_down("( x )".split())) == [{0}, {0, 1}, {0, 1, 2}]


def test_single_down_fixture_last_row():
    assert set(mask_single_down(SINGLE_TOKENS).row(12)) == {0, 1, 2, 5, 6, 11, 12}


def test_double_down_small():
    m = mask_double_down(SMALL_DOUBLE)
    r = rows(m)
    assert r[4] == {2, 3, 4}
    assert r[5] == {0, 1, 4, 5}
    assert r[6] == {0, 1, 4, 5, 6}
    assert r == [{0}, {0, 1}, {0, 1, 2}, {0, 1, 2, 3}, {2, 3, 4}, {0, 1, 4, 5}, {0, 1, 4, 5, 6},
                 {0, 1, 4, 5, 6, 7}, {7, 8}]
    assert rows(mask_double_down("( x )₁ )₂".split()))[:3] == [{0}, {0, 1}, {0, 1, 2}]


def test_double_down_expand_after_root_compose():
    # `)₂` expands over the stack left by `)₁`, which holds only the composed root
    assert rows(mask_double_down("( x )₁ )₂".split()))[3] == {2, 3}


def test_double_down_pairing_errors():
    with pytest.raises(MaskError):
        mask_double_down("( x )₁".split())
    with pytest.raises(MaskError):
        mask_double_down("( x )₂".split())
    with pytest.raises(MaskError):
        mask_double_down("( x )".split())


def test_bottom_up_small():
    assert rows(mask_bottom_up(SMALL_UP, SMALL_UP_STRUCT)) == [
        {0}, {0, 1}, {1, 2}, {0, 2, 3}, {0, 2, 3, 4}]


def test_bottom_up_single():
    assert rows(mask_bottom_up(["x", "■"], [None, 0])) == [{0}, {0, 1}]


def test_bottom_up_fixture_rows():
    struct = [None] * 10
    struct[3], struct[8], struct[9] = 2, 5, 0
    m = mask_bottom_up(BOTTOMUP_TOKENS, struct)
    assert set(m.row(3)) == {2, 3}
    assert set(m.row(8)) == {5, 6, 7, 8}
    assert set(m.row(9)) == {0, 1, 3, 4, 8, 9}


def test_bottom_up_errors():
    with pytest.raises(MaskError, match="struct pointer"):
        mask_bottom_up(["x", "■"], [None, None])
    with pytest.raises(MaskError, match="already-composed"):
        mask_bottom_up(SMALL_UP, [None, None, 1, None, 1])


def test_single_down_underflow():
    with pytest.raises(MaskError, match="underflow"):
        mask_single_down("x )".split())


def test_compose_as_expand():
    base, abl = mask_single_down(SMALL), mask_ablation_compose_as_expand(SMALL)
    assert set(abl.row(4)) == {0, 1, 2, 3, 4}
    diff = np.flatnonzero((base.visible != abl.visible).any(axis=1))
    assert all(SMALL[i] == ")" for i in diff)
    for i, tok in enumerate(SMALL):
        if tok != ")":
            assert abl.row(i) == base.row(i)


def test_expand_as_causal():
    base, abl = mask_single_down(SMALL), mask_ablation_expand_as_causal(SMALL)
    assert set(abl.row(5)) == {0, 1, 2, 3, 4, 5}
    assert abl.row(4) == base.row(4)
    for i, tok in enumerate(SMALL):
        if tok != ")":
            assert (abl.visible[i] >= base.visible[i]).all()


def test_causal_mask():
    assert (mask_causal(4).visible == np.tril(np.ones((4, 4), dtype=bool))).all()


def test_incremental_first_step():
    state, row = incremental_step(StackState(), "(", variant="single")
    assert row.tolist() == [True] and state.indices == (0,)


@pytest.mark.parametrize("tokens, variant, struct", [
    (SMALL, "single", None),
    (SMALL_DOUBLE, "double", None),
    (SMALL_UP, "bottomup", SMALL_UP_STRUCT),
    (SMALL, "compose_as_expand", None),
    (SMALL, "expand_as_causal", None),
    (SMALL, "causal", None),
])
def test_incremental_replay_small(tokens, variant, struct):
    assert (replay(tokens, variant, struct) == build_mask(tokens, variant, struct).visible).all()


def test_incremental_underflow():
    state, _ = incremental_step(StackState(), "x", variant="single")
    with pytest.raises(MaskError):
        incremental_step(state, ")", variant="single")


def test_ascii_and_pgm():
    m = mask_single_down("( x )".split())
    assert m.to_ascii(["(", "x", ")"]) == "( #..\nx ##.\n) ooo\n"
    pgm = m.to_pgm(scale=1).decode().split("\n")
    assert pgm[:3] == ["P2", "3 3", "255"]
    assert pgm[3:6] == ["0 255 255", "0 0 255", "128 128 128"]


def span_tree(mask):
    """Nested composed spans as frozensets of the atom tokens each compose row covers."""
    covers = {}
    for i in np.flatnonzero(mask.compose):
        leaves = set()
        for j in mask.row(int(i)):
            if j != i:
                leaves |= covers.get(j, {j})
        covers[int(i)] = leaves
    return covers


def tree_shape(covers, labels):
    return sorted(tuple(sorted(labels[j] for j in span)) for span in covers.values())


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_fuzzed_mask_invariants(seed):
    assert check_mask(random_form(seed)) is None


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_double_and_single_agree(seed):
    g = random_graph(seed, 10, 3)
    single, double = linearize(g, "single"), linearize(g, "double")
    ms, md = mask_for_form(single), mask_for_form(double)
    keep = [i for i, t in enumerate(double.tokens) if t != CLOSE_EXPAND]
    # drop `)₂` rows and columns: compose rows and the rows before any `)₂` line up exactly
    sub = md.visible[np.ix_(keep, keep)]
    for r in range(len(keep)):
        if ms.compose[r]:
            assert (sub[r] == ms.visible[r]).all()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_bracket_and_pointer_span_trees_match(seed):
    g = random_graph(seed, 10, 3)
    down, up = linearize(g, "single"), linearize(g, "bottomup")
    # label atoms by (token, occurrence) so both forms share leaf names
    def labels(tokens):
        seen, out = {}, {}
        for j, t in enumerate(tokens):
            seen[t] = seen.get(t, 0) + 1
            out[j] = (t, seen[t])
        return out
    ld, lu = labels(down.tokens), labels(up.tokens)
    keep = lambda lab: {j: l for j, l in lab.items() if l[0] not in ("(", ")", "■")}
    cd = {i: {j for j in s if j in keep(ld)} for i, s in span_tree(mask_for_form(down)).items()}
    cu = {i: {j for j in s if j in keep(lu)} for i, s in span_tree(mask_for_form(up)).items()}
    assert tree_shape(cd, ld) == tree_shape(cu, lu)


def test_stack_trace_oracle_on_small():
    from chaform.target_forms import TargetForm

    after, removed = stack_trace(TargetForm.from_tokens("single", SMALL))
    assert after[-1] == [6] and removed[4] == [2, 3]

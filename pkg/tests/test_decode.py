import numpy as np
import pytest
import torch

from chaform.cha_mask import mask_double_down, mask_single_down
from chaform.decode import (GrammarState, Hypothesis, Phase, _TokenTable, beam_search, candidate_filter,
                            extend, incremental_cha_context, initial_hypothesis, score_form)
from chaform.model import TrainConfig, train
from chaform.properties import check_gold_replay, fuzz_decode, fuzz_vocab, random_model
from chaform.target_forms import FormKind, linearize
from chaform.smatch import smatch_small

from oracles import small_setup


def grow(kind, tokens, coref=None, struct=None):
    h = initial_hypothesis(kind)
    coref = coref or [None] * len(tokens)
    struct = struct or [None] * len(tokens)
    for t, c, s in zip(tokens, coref, struct):
        assert candidate_filter(h, t, c, s)
        h = extend(h, t, c, s)
    return h


def test_close_allowed_inside_open_bracket():
    h = grow("single", ["(", "alpha"])
    assert h.balance == 1
    assert candidate_filter(h, ")")


def test_close_rejected_at_zero_balance():
    h = grow("single", ["(", "alpha", ")"])
    assert h.balance == 0 and not candidate_filter(h, ")")
    bare = initial_hypothesis("single")
    bare = Hypothesis(("alpha",), (None,), (None,), bare.stack, np.ones((2, 2), bool),
                      GrammarState(FormKind.SINGLE, Phase.READY, 0))
    assert not candidate_filter(bare, ")")


def test_coref_to_different_concept_rejected():
    h = grow("single", "( alpha :arg0 ( gamma ) :arg1".split())
    assert not candidate_filter(h, "beta", coref=3)
    assert candidate_filter(h, "gamma", coref=4)
    assert not candidate_filter(h, "gamma", coref=1)


def test_end_of_sequence_needs_complete_root():
    h = grow("single", ["(", "alpha"])
    assert not candidate_filter(h, "<eos>")
    assert candidate_filter(extend(h, ")"), "<eos>")
    up = grow("bottomup", ["alpha", ":arg0", "beta"])
    assert not candidate_filter(up, "<eos>")
    up = extend(up, "■", struct=2)
    assert not candidate_filter(up, "<eos>")
    up = extend(up, "■", struct=0)
    assert candidate_filter(up, "<eos>")


def test_struct_pointer_rules():
    h = grow("bottomup", ["alpha", ":arg0", "beta"])
    assert not candidate_filter(h, "■", struct=1)  # relation
    assert not candidate_filter(h, "■", struct=0)  # not the innermost span
    assert candidate_filter(h, "■", struct=2)
    assert not candidate_filter(h, "■")
    h = extend(h, "■", struct=2)
    assert not candidate_filter(h, "■", struct=2)  # already composed


def test_length_budget_filters_unfinishable_prefixes():
    h = grow("double", ["(", "alpha"])
    # closing needs two tokens and eos is free: ( alpha )1 )2 fits in 4
    assert candidate_filter(h, ")₁", max_len=4)
    assert not candidate_filter(h, ":arg0", max_len=4)


def test_first_step_row():
    stack, row = incremental_cha_context(initial_hypothesis("single"), "(")
    assert row.tolist() == [True]


@pytest.mark.parametrize("kind,builder", [("single", mask_single_down), ("double", mask_double_down)])
def test_replay_rows_match_batch_mask(row_a, kind, builder):
    form = linearize(row_a, kind)
    mask = builder(list(form.tokens)).visible
    h = initial_hypothesis(kind)
    for i, tok in enumerate(form.tokens):
        _, row = incremental_cha_context(h, tok)
        assert np.array_equal(row, mask[i, : i + 1])
        h = extend(h, tok, form.coref[i])
    assert check_gold_replay(form) is None


def test_gold_replay_on_fixtures(row_a, like_tour):
    for g in (row_a, like_tour):
        for kind in FormKind:
            assert check_gold_replay(linearize(g, kind)) is None


def test_allowed_vector_agrees_with_filter():
    vocab, _ = fuzz_vocab(0, n_graphs=20)
    rng = np.random.default_rng(0)
    for kind in FormKind:
        table = _TokenTable(vocab, kind)
        for trial in range(30):
            h = initial_hypothesis(kind)
            max_len = int(rng.integers(4, 24))
            while not h.finished:
                ok = table.allowed(h, max_len)
                for tid, tok in enumerate(vocab.itos):
                    if tok not in vocab.target_tokens and tok != "<eos>":
                        assert not ok[tid]
                        continue
                    c = None
                    if h.grammar.phase is Phase.VALUE and h.grammar.candidates(tok):
                        c = h.grammar.candidates(tok)[0]
                    s = h.grammar.frames[-1] if tok == "■" and h.grammar.frames else None
                    assert ok[tid] == candidate_filter(h, tok, c, s, max_len), (kind, h.tokens, tok)
                choices = np.flatnonzero(ok)
                assert len(choices), (kind, h.tokens)
                tok = vocab.itos[int(rng.choice(choices))]
                c = h.grammar.candidates(tok)[-1] if h.grammar.phase is Phase.VALUE and h.grammar.candidates(tok) else None
                s = h.grammar.frames[-1] if tok == "■" else None
                h = extend(h, tok, c, s)
            assert len(h.tokens) <= max_len
            h.form().validate()


@pytest.fixture(scope="module")
def trained():
    torch.manual_seed(0)
    model, vocab, examples, _ = small_setup(n=8, dtype="float32")
    model, _ = train(model.config, examples, vocab,
                     TrainConfig(steps=60, lr=3e-3, warmup=5, seed=0), model=model)
    return model, vocab, examples


def test_beam_score_matches_teacher_forcing(trained):
    model, vocab, examples = trained
    results = beam_search(model, vocab, [e.source for e in examples], beam=2, max_len=48)
    for e, res in zip(examples, results):
        assert res.complete
        for form, score in zip(res.forms, res.scores):
            cum = score_form(model, vocab, e.source, form)
            assert cum[-1] == pytest.approx(score, rel=1e-5, abs=1e-5)
            assert np.all(np.diff(cum) <= 1e-12)


def test_wider_beam_never_scores_lower(trained):
    model, vocab, examples = trained
    srcs = [e.source for e in examples]
    one = beam_search(model, vocab, srcs, beam=1, max_len=48)
    four = beam_search(model, vocab, srcs, beam=4, max_len=48)
    for a, b in zip(one, four):
        assert b.scores[0] >= a.scores[0] - 1e-9


def test_batched_decoding_equals_one_at_a_time(trained):
    model, vocab, examples = trained
    srcs = [e.source for e in examples[:4]]
    batched = beam_search(model, vocab, srcs, beam=2, max_len=48)
    for s, res in zip(srcs, batched):
        alone = beam_search(model, vocab, [s], beam=2, max_len=48)[0]
        assert alone.forms == res.forms
        assert alone.scores == pytest.approx(res.scores, abs=1e-5)


def test_too_short_max_len_reports_partial(trained):
    model, vocab, examples = trained
    res = beam_search(model, vocab, [examples[0].source], beam=2, max_len=2)[0]
    assert not res.complete
    assert res.best_graph() is None


def test_outputs_delinearize(trained):
    model, vocab, examples = trained
    for res in beam_search(model, vocab, [e.source for e in examples], beam=3, max_len=48):
        g = res.best_graph()
        assert g is not None
        assert smatch_small(g, g).f1 == 1.0


def test_beam_width_validated(trained):
    model, vocab, _ = trained
    with pytest.raises(ValueError):
        beam_search(model, vocab, [["alpha"]], beam=0)
    assert beam_search(model, vocab, [], beam=1) == []


@pytest.mark.parametrize("kind", list(FormKind))
def test_random_weight_decoding_is_well_formed(kind):
    vocab, (words,) = fuzz_vocab(1, n_graphs=30)
    model = random_model(5, vocab, kind)
    rng = np.random.default_rng(kind.value.__len__())
    sources = [list(rng.choice(words, size=rng.integers(1, 8))) for _ in range(40)]
    for res in beam_search(model, vocab, sources, beam=2, max_len=24):
        assert res.complete
        for f in res.forms:
            f.validate()
            assert len(f) <= 24


def test_small_fuzz_run():
    report = fuzz_decode(120, seed=3, batch=20, max_len=28, models_per_kind=1)
    assert report.total == 120 and report.complete == 120 and not report.failures

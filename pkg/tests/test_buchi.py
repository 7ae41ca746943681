"""Formula-to-automaton translation, membership and emptiness searches."""

import random

from ltlcoord.buchi import (
    BuchiAutomaton,
    LetterPredicate,
    accepts_lasso,
    accepts_lasso_generalized,
    degeneralize,
    find_accepting_lasso,
    format_automaton,
    ltl_to_buchi,
    tableau_automaton,
)
from ltlcoord.ltl import (
    FALSE,
    TRUE,
    Always,
    Atom,
    Eventually,
    LassoWord,
    Until,
    eval_lasso,
    parse_ltl,
)

from helpers import random_formula, random_word


def lasso(stem, period):
    return LassoWord(tuple(stem), tuple(period))


class TestLetterPredicate:
    def test_matching(self):
        p = LetterPredicate({"a"}, {"b"})
        assert p.matches(frozenset({"a"}))
        assert p.matches(frozenset({"a", "c"}))
        assert not p.matches(frozenset({"a", "b"}))
        assert not p.matches(frozenset())

    def test_unconstrained_matches_everything(self):
        p = LetterPredicate()
        assert p.matches(frozenset())
        assert p.matches(frozenset({"a"}))

    def test_satisfiable(self):
        assert LetterPredicate({"a"}, {"b"}).satisfiable()
        assert not LetterPredicate({"a"}, {"a"}).satisfiable()


class TestTranslation:
    def test_true_is_universal(self):
        a = ltl_to_buchi(TRUE)
        assert accepts_lasso(a, lasso([], [set()]))
        assert accepts_lasso(a, lasso([{"a"}], [{"b"}, set()]))
        assert find_accepting_lasso(a) is not None

    def test_false_is_empty(self):
        a = ltl_to_buchi(FALSE)
        assert not accepts_lasso(a, lasso([], [set()]))
        assert not accepts_lasso(a, lasso([{"a"}], [{"a"}]))
        assert find_accepting_lasso(a) is None

    def test_always_eventually(self):
        a = ltl_to_buchi(Always(Eventually(Atom("a"))))
        assert accepts_lasso(a, lasso([set()], [{"a"}]))
        assert not accepts_lasso(a, lasso([set()], [set()]))
        assert not accepts_lasso(a, lasso([{"a"}], [set()]))

    def test_atom_checked_at_first_position(self):
        a = ltl_to_buchi(Atom("a"))
        assert accepts_lasso(a, lasso([{"a"}], [set()]))
        assert not accepts_lasso(a, lasso([set()], [{"a"}]))

    def test_until(self):
        a = ltl_to_buchi(Until(Atom("a"), Atom("b")))
        assert accepts_lasso(a, lasso([{"a"}, {"a"}], [{"b"}]))
        assert not accepts_lasso(a, lasso([], [{"a"}]))

    def test_construction_is_deterministic(self):
        f = parse_ltl("F m2 & G F (r2 & X b2)")
        a1 = ltl_to_buchi(f)
        a2 = ltl_to_buchi(f)
        assert a1 == a2
        assert format_automaton(a1) == format_automaton(a2)

    def test_unsatisfiable_conjunction(self):
        a = ltl_to_buchi(parse_ltl("G a & F !a"))
        assert find_accepting_lasso(a) is None


class TestFindAcceptingLasso:
    def test_eventually_witness_contains_atom(self):
        a = ltl_to_buchi(Eventually(Atom("a")))
        got = find_accepting_lasso(a)
        assert got is not None
        letters = got.stem_letters + got.cycle_letters
        assert any("a" in letter for letter in letters)
        assert accepts_lasso(a, got.word())

    def test_always_witness_holds_atom_on_cycle(self):
        f = Always(Atom("a"))
        a = ltl_to_buchi(f)
        got = find_accepting_lasso(a)
        assert got is not None
        assert all("a" in letter for letter in got.cycle_letters)
        assert accepts_lasso(a, got.word())
        assert eval_lasso(f, got.word())

    def test_witness_words_satisfy_formula(self):
        rng = random.Random(424242)
        names = ["a", "b", "c"]
        checked = 0
        for _ in range(200):
            f = random_formula(rng, 3, names)
            a = ltl_to_buchi(f)
            got = find_accepting_lasso(a)
            if got is None:
                continue
            assert accepts_lasso(a, got.word())
            assert eval_lasso(f, got.word())
            checked += 1
        assert checked > 50

    def test_hand_built_automaton_empty_when_accepting_unreachable(self):
        a = BuchiAutomaton(
            n_states=2,
            alphabet=frozenset({"a"}),
            transitions=((0, LetterPredicate(), 0),),
            initial=frozenset({0}),
            accepting=frozenset({1}),
        )
        assert find_accepting_lasso(a) is None

    def test_hand_built_self_loop(self):
        a = BuchiAutomaton(
            n_states=1,
            alphabet=frozenset({"a"}),
            transitions=((0, LetterPredicate({"a"}), 0),),
            initial=frozenset({0}),
            accepting=frozenset({0}),
        )
        got = find_accepting_lasso(a)
        assert got is not None
        assert got.cycle_letters == (frozenset({"a"}),)


class TestProperties:
    def test_translation_agrees_with_eval_on_random_pairs(self):
        rng = random.Random(600)
        names = ["a", "b", "c"]
        for _ in range(300):
            f = random_formula(rng, 4, names)
            a = ltl_to_buchi(f)
            for _ in range(3):
                w = random_word(rng, names)
                assert accepts_lasso(a, w) == eval_lasso(f, w), (f, w)

    def test_degeneralization_preserves_language(self):
        rng = random.Random(601)
        names = ["a", "b"]
        for _ in range(200):
            f = random_formula(rng, 3, names)
            gba = tableau_automaton(f)
            ba = degeneralize(gba)
            for _ in range(3):
                w = random_word(rng, names)
                assert accepts_lasso_generalized(gba, w) == accepts_lasso(ba, w), (f, w)

    def test_nonempty_iff_some_small_word_found(self):
        """Emptiness agrees with a brute scan of small lasso words."""
        rng = random.Random(602)
        names = ["a", "b"]
        letters = [frozenset(), frozenset({"a"}), frozenset({"b"}), frozenset({"a", "b"})]
        small_words = []
        for p1 in letters:
            small_words.append(LassoWord((), (p1,)))
            for p2 in letters:
                small_words.append(LassoWord((p1,), (p2,)))
                small_words.append(LassoWord((), (p1, p2)))
        for _ in range(150):
            f = random_formula(rng, 2, names)
            a = ltl_to_buchi(f)
            witness = find_accepting_lasso(a)
            brute = any(eval_lasso(f, w) for w in small_words)
            if brute:
                assert witness is not None, f
            if witness is None:
                assert not brute, f


def test_format_automaton_lists_structure():
    a = ltl_to_buchi(Eventually(Atom("a")))
    text = format_automaton(a)
    assert text.splitlines()[0] == f"states: {a.n_states}"
    assert "alphabet: a" in text
    assert "->" in text

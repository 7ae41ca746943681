"""Buchi automata from LTL formulas.

The translation is the classic tableau construction: bring the formula to
negation normal form, expand it into a graph of nodes carrying the
obligations that must hold now (``old``) and at the next position
(``next_``), read the graph as a generalized Buchi automaton with one
acceptance set per until subformula, then degeneralize with a counter.

Transition labels are predicates over letters, a conjunction of required
and forbidden atoms, so the alphabet is never enumerated.  State ids are
assigned by sorting node contents, which makes the construction and every
search over it reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ltl import (
    FALSE,
    TRUE,
    And,
    Atom,
    LassoWord,
    Next,
    Not,
    Or,
    Release,
    TrueConst,
    Until,
    atoms,
    format_formula,
    to_core,
    to_nnf,
)


@dataclass(frozen=True)
class LetterPredicate:
    """Conjunction of required and forbidden atoms; matches letters ⊆ Ψ."""

    required: frozenset = frozenset()
    forbidden: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "required", frozenset(self.required))
        object.__setattr__(self, "forbidden", frozenset(self.forbidden))

    def matches(self, letter):
        return self.required <= letter and not (self.forbidden & letter)

    def satisfiable(self):
        return not (self.required & self.forbidden)

    def __str__(self):
        parts = [f"+{a}" for a in sorted(self.required)]
        parts += [f"-{a}" for a in sorted(self.forbidden)]
        return " ".join(parts) if parts else "any"


@dataclass(frozen=True)
class BuchiAutomaton:
    n_states: int
    alphabet: frozenset
    transitions: tuple  # sorted (src, LetterPredicate, dst)
    initial: frozenset
    accepting: frozenset

    @property
    def states(self):
        return range(self.n_states)


@dataclass(frozen=True)
class GeneralizedBuchi:
    """Same transition structure, conjunction of acceptance sets."""

    n_states: int
    alphabet: frozenset
    transitions: tuple
    initial: frozenset
    acceptance_sets: tuple  # of frozenset


@dataclass(frozen=True)
class Lasso:
    """A stem into a cycle; the cycle revisits its first state."""

    stem_states: tuple
    stem_letters: tuple
    cycle_states: tuple
    cycle_letters: tuple

    def __post_init__(self):
        assert len(self.stem_states) == len(self.stem_letters) + 1
        assert len(self.cycle_states) == len(self.cycle_letters) + 1
        assert self.cycle_states[0] == self.cycle_states[-1]
        assert self.stem_states[-1] == self.cycle_states[0]

    def word(self):
        return LassoWord(self.stem_letters, self.cycle_letters)


# ---------------------------------------------------------------------------
# tableau expansion


_INIT = -1  # pseudo-node marking initial edges


@dataclass
class _OpenNode:
    incoming: set
    new: set
    old: set
    next_: set


def _fkey(f):
    return format_formula(f)


def _is_literal(f):
    match f:
        case TrueConst() | Atom(_) | Not(TrueConst()) | Not(Atom(_)):
            return True
    return False


def _negate_literal(f):
    return f.operand if isinstance(f, Not) else Not(f)


def _expand(root):
    """Saturate the tableau graph for an NNF formula.

    Returns (nodes, by_id) where each closed node is a dict with
    ``old``/``next_`` frozensets and an ``incoming`` id set.  Splits are
    processed deterministically (smallest obligation first by printed
    form) so the resulting graph is reproducible.
    """
    closed = {}  # id -> {"old": frozenset, "next_": frozenset, "incoming": set}
    by_key = {}
    next_id = 0
    stack = [_OpenNode({_INIT}, {root}, set(), set())]
    while stack:
        nd = stack.pop()
        if not nd.new:
            key = (frozenset(nd.old), frozenset(nd.next_))
            hit = by_key.get(key)
            if hit is not None:
                closed[hit]["incoming"] |= nd.incoming
                continue
            nid = next_id
            next_id += 1
            by_key[key] = nid
            closed[nid] = {"old": key[0], "next_": key[1], "incoming": set(nd.incoming)}
            stack.append(_OpenNode({nid}, set(key[1]), set(), set()))
            continue
        f = min(nd.new, key=_fkey)
        nd.new.discard(f)
        if _is_literal(f):
            if f == FALSE or _negate_literal(f) in nd.old:
                continue  # contradictory branch dies
            # true is recorded too: acceptance membership below looks for
            # an until's right side in old, which may be the constant
            nd.old.add(f)
            stack.append(nd)
            continue
        match f:
            case And(a, b):
                nd.old.add(f)
                nd.new |= {a, b} - nd.old
                stack.append(nd)
            case Or(a, b):
                left = _OpenNode(set(nd.incoming), set(nd.new), set(nd.old), set(nd.next_))
                left.old.add(f)
                left.new |= {a} - left.old
                nd.old.add(f)
                nd.new |= {b} - nd.old
                stack.append(left)
                stack.append(nd)
            case Next(g):
                nd.old.add(f)
                nd.next_.add(g)
                stack.append(nd)
            case Until(a, b):
                # b now, or a now and the until again next
                wait = _OpenNode(set(nd.incoming), set(nd.new), set(nd.old), set(nd.next_))
                wait.old.add(f)
                wait.new |= {a} - wait.old
                wait.next_.add(f)
                nd.old.add(f)
                nd.new |= {b} - nd.old
                stack.append(wait)
                stack.append(nd)
            case Release(a, b):
                # b now and either a now or the release again next
                wait = _OpenNode(set(nd.incoming), set(nd.new), set(nd.old), set(nd.next_))
                wait.old.add(f)
                wait.new |= {b} - wait.old
                wait.next_.add(f)
                nd.old.add(f)
                nd.new |= {a, b} - nd.old
                stack.append(wait)
                stack.append(nd)
            case _:
                raise ValueError(f"not in negation normal form: {f!r}")
    return closed


def _collect_untils(f, acc):
    match f:
        case Until(a, b):
            acc.add(f)
            _collect_untils(a, acc)
            _collect_untils(b, acc)
        case And(a, b) | Or(a, b) | Release(a, b):
            _collect_untils(a, acc)
            _collect_untils(b, acc)
        case Not(g) | Next(g):
            _collect_untils(g, acc)
    return acc


def _node_predicate(old):
    required = frozenset(f.name for f in old if isinstance(f, Atom))
    forbidden = frozenset(
        f.operand.name for f in old if isinstance(f, Not) and isinstance(f.operand, Atom)
    )
    return LetterPredicate(required, forbidden)


def tableau_automaton(f):
    """Generalized Buchi automaton for ``f`` (any formula, rewritten internally).

    A node's literals constrain the letter read while leaving it, so the
    word position i is checked by the state visited at position i.  The
    acceptance set of an until u = a U b holds the nodes that owe nothing
    to u: those not carrying u, or carrying it already discharged (b
    holds now).
    """
    alphabet = atoms(f)
    nnf = to_nnf(to_core(f))
    closed = _expand(nnf)
    untils = sorted(_collect_untils(nnf, set()), key=_fkey)

    order = sorted(
        closed,
        key=lambda i: (
            tuple(sorted(map(_fkey, closed[i]["old"]))),
            tuple(sorted(map(_fkey, closed[i]["next_"]))),
        ),
    )
    renum = {old_id: k for k, old_id in enumerate(order)}

    initial = set()
    transitions = []
    for old_id, node in closed.items():
        dst = renum[old_id]
        for src_id in node["incoming"]:
            if src_id == _INIT:
                initial.add(dst)
            else:
                src = renum[src_id]
                transitions.append((src, _node_predicate(closed[src_id]["old"]), dst))
    transitions.sort(key=lambda t: (t[0], t[2], sorted(t[1].required), sorted(t[1].forbidden)))

    acceptance = []
    for u in untils:
        members = frozenset(
            renum[i]
            for i, node in closed.items()
            if u not in node["old"] or u.right in node["old"]
        )
        acceptance.append(members)

    return GeneralizedBuchi(
        n_states=len(closed),
        alphabet=frozenset(alphabet),
        transitions=tuple(transitions),
        initial=frozenset(initial),
        acceptance_sets=tuple(acceptance),
    )


def degeneralize(gba):
    """Counter degeneralization to a single acceptance set.

    State (q, i) waits to see acceptance set i; leaving a state in set i
    advances the counter.  A run meets every set infinitely often exactly
    when it keeps passing states of the last set with the counter at its
    maximum, so those become the accepting states.
    """
    k = len(gba.acceptance_sets)
    if k == 0:
        return BuchiAutomaton(
            n_states=gba.n_states,
            alphabet=gba.alphabet,
            transitions=gba.transitions,
            initial=gba.initial,
            accepting=frozenset(range(gba.n_states)),
        )

    adj = {}
    for src, pred, dst in gba.transitions:
        adj.setdefault(src, []).append((pred, dst))

    def bump(q, i):
        return (i + 1) % k if q in gba.acceptance_sets[i] else i

    start = sorted((q, 0) for q in gba.initial)
    seen = set(start)
    frontier = list(start)
    edges = []
    while frontier:
        q, i = frontier.pop()
        j = bump(q, i)
        for pred, dst in adj.get(q, ()):
            tgt = (dst, j)
            edges.append(((q, i), pred, tgt))
            if tgt not in seen:
                seen.add(tgt)
                frontier.append(tgt)

    order = sorted(seen)
    renum = {s: n for n, s in enumerate(order)}
    transitions = sorted(
        ((renum[a], pred, renum[b]) for a, pred, b in edges),
        key=lambda t: (t[0], t[2], sorted(t[1].required), sorted(t[1].forbidden)),
    )
    accepting = frozenset(
        renum[(q, i)] for (q, i) in seen if i == k - 1 and q in gba.acceptance_sets[k - 1]
    )
    return BuchiAutomaton(
        n_states=len(order),
        alphabet=gba.alphabet,
        transitions=tuple(transitions),
        initial=frozenset(renum[s] for s in start),
        accepting=accepting,
    )


def ltl_to_buchi(f):
    """Buchi automaton accepting exactly the words that satisfy ``f``."""
    return degeneralize(tableau_automaton(f))


# ---------------------------------------------------------------------------
# searches


def _adjacency(transitions):
    adj = {}
    for src, pred, dst in transitions:
        adj.setdefault(src, []).append((pred, dst))
    return adj


def _ndfs(initials, successors, is_accepting):
    """Nested depth-first search for a cycle through an accepting state.

    ``successors(s)`` yields (label, state) pairs.  The outer (blue) DFS
    runs a second (red) DFS from each accepting state at postorder; the
    red search reaching any state on the blue stack closes a cycle.
    Returns (stem_states, stem_labels, cycle_states, cycle_labels) or
    None.  ``red`` persists across seeds, keeping the search linear.
    """
    blue, red = set(), set()
    cyan = {}  # state -> index on the blue path
    path = []  # [(state, label used to enter it)]

    def red_search(seed):
        parents = {}
        red.add(seed)
        stack = [seed]
        while stack:
            s = stack.pop()
            for label, t in successors(s):
                if t in cyan:
                    # cycle: blue path from t to seed, then red path seed -> t
                    chain = [(label, t)]
                    at = s
                    while at != seed:
                        lbl, prev = parents[at]
                        chain.append((lbl, at))
                        at = prev
                    chain.reverse()
                    return t, chain
                if t not in red:
                    red.add(t)
                    parents[t] = (label, s)
                    stack.append(t)
        return None

    for root in initials:
        if root in blue:
            continue
        stack = [(root, None, iter(successors(root)))]
        cyan[root] = len(path)
        path.append((root, None))
        while stack:
            state, _, it = stack[-1]
            advanced = False
            for label, t in it:
                if t not in blue and t not in cyan:
                    cyan[t] = len(path)
                    path.append((t, label))
                    stack.append((t, label, iter(successors(t))))
                    advanced = True
                    break
            if advanced:
                continue
            if is_accepting(state):
                hit = red_search(state)
                if hit is not None:
                    t, red_chain = hit
                    cut = cyan[t]
                    stem_states = [s for s, _ in path[: cut + 1]]
                    stem_labels = [l for _, l in path[1 : cut + 1]]
                    cycle_states = [s for s, _ in path[cut:]]
                    cycle_labels = [l for _, l in path[cut + 1 :]]
                    for lbl, node in red_chain:
                        cycle_states.append(node)
                        cycle_labels.append(lbl)
                    return stem_states, stem_labels, cycle_states, cycle_labels
            blue.add(state)
            del cyan[state]
            path.pop()
            stack.pop()
    return None


def accepts_lasso(a, w):
    """Whether ``a`` has an accepting run over the word stem . period^omega.

    Product of the automaton with the lasso positions, then the cycle
    search; a cycle necessarily lives in the periodic part.
    """
    letters = w.stem + w.period
    n = len(letters)
    loop = len(w.stem)
    adj = _adjacency(a.transitions)

    def successors(node):
        q, p = node
        nxt = p + 1 if p + 1 < n else loop
        return [
            (None, (dst, nxt))
            for pred, dst in adj.get(q, ())
            if pred.matches(letters[p])
        ]

    initials = sorted((q, 0) for q in a.initial)
    found = _ndfs(initials, successors, lambda node: node[0] in a.accepting)
    return found is not None


def accepts_lasso_generalized(gba, w):
    """Lasso acceptance under the conjunction of acceptance sets.

    Looks for a reachable nontrivial strongly connected component of the
    product that intersects every acceptance set.
    """
    letters = w.stem + w.period
    n = len(letters)
    loop = len(w.stem)
    adj = _adjacency(gba.transitions)

    def successors(node):
        q, p = node
        nxt = p + 1 if p + 1 < n else loop
        return [(dst, nxt) for pred, dst in adj.get(q, ()) if pred.matches(letters[p])]

    # reachable product nodes
    frontier = sorted((q, 0) for q in gba.initial)
    seen = set(frontier)
    while frontier:
        u = frontier.pop()
        for v in successors(u):
            if v not in seen:
                seen.add(v)
                frontier.append(v)

    for comp in _tarjan_sccs(seen, successors):
        members = set(comp)
        nontrivial = len(comp) > 1 or any(v in members for v in successors(comp[0]))
        if not nontrivial:
            continue
        qs = {q for q, _ in comp}
        if all(qs & acc for acc in gba.acceptance_sets):
            return True
    return False


def _tarjan_sccs(nodes, successors):
    """Iterative Tarjan strongly-connected components."""
    index = {}
    low = {}
    on_stack = set()
    scc_stack = []
    sccs = []
    counter = [0]

    for root in sorted(nodes):
        if root in index:
            continue
        work = [(root, iter(successors(root)))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        scc_stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w_ in it:
                if w_ not in index:
                    index[w_] = low[w_] = counter[0]
                    counter[0] += 1
                    scc_stack.append(w_)
                    on_stack.add(w_)
                    work.append((w_, iter(successors(w_))))
                    advanced = True
                    break
                if w_ in on_stack:
                    low[v] = min(low[v], index[w_])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w_ = scc_stack.pop()
                    on_stack.discard(w_)
                    comp.append(w_)
                    if w_ == v:
                        break
                sccs.append(comp)
    return sccs


def find_accepting_lasso(a):
    """A witness lasso for nonemptiness, or None.

    Edge letters in the witness are the minimal ones, the required atoms
    of the predicate taken.
    """
    adj = _adjacency(a.transitions)

    def successors(q):
        return [
            (pred.required, dst) for pred, dst in adj.get(q, ()) if pred.satisfiable()
        ]

    found = _ndfs(sorted(a.initial), successors, lambda q: q in a.accepting)
    if found is None:
        return None
    stem_states, stem_letters, cycle_states, cycle_letters = found
    return Lasso(
        tuple(stem_states),
        tuple(stem_letters),
        tuple(cycle_states),
        tuple(cycle_letters),
    )


def format_automaton(a):
    """Plain text listing: state count, alphabet, initial and accepting
    sets, then one ``src -> dst [predicate]`` line per transition."""
    lines = [
        f"states: {a.n_states}",
        "alphabet: " + " ".join(sorted(a.alphabet)),
        "initial: " + " ".join(map(str, sorted(a.initial))),
        "accepting: " + " ".join(map(str, sorted(a.accepting))),
    ]
    for src, pred, dst in a.transitions:
        lines.append(f"{src} -> {dst}  [{pred}]")
    return "\n".join(lines)

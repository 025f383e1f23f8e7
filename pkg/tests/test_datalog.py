import random

import pytest

from helpers import enumerate_feasible, facts_text, naive_fixpoint, random_labeled_graph, random_program
from smtlog import terms as T
from smtlog.datalog import EvalConfig, QueryCache, builtin_is_sat, evaluate, issue_order, parse_program
from smtlog.datalog.program import Compound
from smtlog.errors import (ArityError, BudgetExceeded, DatalogSyntaxError, EvalError, RangeRestrictionError,
                           ReservedNameError, SoundnessError, UnknownRelation)
from smtlog.smtlib import RESULT_SAT, RESULT_UNSAT, unknown
from smtlog.solver import Metrics, Strategy, open_reference_session

v = T.var("v", T.INT)


def ref(strategy=Strategy.CSA):
    return open_reference_session(strategy)


def run(text, strategy=Strategy.CSA, **cfg):
    return evaluate(parse_program(text), ref(strategy), EvalConfig(**cfg))


# -- parsing ---------------------------------------------------------------

DECLS = "rel edge(int, int, smt_bool).\nrel path(int, int, smt_bool).\n"


def test_minimal_rule():
    prog = parse_program(DECLS + "path(X,Y,F) :- edge(X,Y,F).")
    assert len(prog.rules) == 1
    assert prog.edb == {"edge"} and prog.idb == {"path"}


def test_head_variable_must_be_bound():
    with pytest.raises(RangeRestrictionError):
        parse_program(DECLS + "path(X,Z,F) :- edge(X,Y,F).")


def test_fact_with_embedded_conjunct():
    prog = parse_program(DECLS + "edge(1,2,#sat{(= v 1)}).")
    rel, row = prog.facts[0]
    assert rel == "edge" and row[:2] == (1, 2)
    assert row[2] is T.eq(v, T.int_const(1))


def test_syntax_error_has_position():
    with pytest.raises(DatalogSyntaxError) as e:
        parse_program(DECLS + "path(X,Y,F) :- edge(X,Y,F)\n")
    assert e.value.line == 4
    assert "4:" in str(e.value)


def test_arity_and_unknown_relation():
    with pytest.raises(ArityError):
        parse_program(DECLS + "path(X,Y) :- edge(X,Y,F).")
    with pytest.raises(UnknownRelation):
        parse_program(DECLS + "path(X,Y,F) :- road(X,Y,F).")


def test_reserved_names():
    with pytest.raises(ReservedNameError):
        parse_program(DECLS + "edge(1,2,#smt{(and __csa_1 (= v 1))}).")
    with pytest.raises(ReservedNameError):
        parse_program("rel __csa_x(int).")


def test_unbound_variable_in_builtin():
    with pytest.raises(RangeRestrictionError):
        parse_program(DECLS + "path(X,Y,F) :- is_sat([G]), edge(X,Y,F).")


def test_comments_and_multiline_smt():
    prog = parse_program(DECLS + "% a comment\nedge(1, 2, #smt{(and (> v 0)\n   (< v 3))}). % trailing\n"
                         "path(X,Y,F) :- edge(X,Y,F).")
    assert len(prog.facts) == 1 and len(prog.rules) == 1


def test_fact_column_type_checked():
    with pytest.raises(Exception):
        parse_program(DECLS + "edge(1, 2, 3).")


def test_spec_surface_example_parses():
    text = """
    rel edge(int, int, smt_bool).
    rel path(int, int, smt_list).
    path(X, Y, cons(F, nil)) :- edge(X, Y, F), is_sat(cons(F, nil)).
    path(X, Z, cons(F, Fs))  :- path(Y, Z, Fs), edge(X, Y, F), is_sat(cons(F, Fs)).
    edge(1, 2, #smt{(= v 1)}).
    edge(2, 3, #smt{(= v 1)}).
    """
    db, _ = run(text)
    assert {(a, b) for a, b, _ in db["path"]} == {(1, 2), (2, 3), (1, 3)}


# -- evaluation --------------------------------------------------------------


def test_transitive_closure():
    db, m = run("rel e(int,int). rel t(int,int).\n"
                "e(1,2). e(2,3).\nt(X,Y) :- e(X,Y).\nt(X,Z) :- t(X,Y), e(Y,Z).")
    assert db["t"] == {(1, 2), (2, 3), (1, 3)}
    assert m.checks == 0


LINE = """
rel edge(int, int, smt_bool).
rel path(int, int, smt_list, list).
edge(1, 2, #smt{(= v 1)}).
edge(2, 3, #smt{(= v 2)}).
path(X, Y, L, V) :- edge(X, Y, F), L := [F], V := [Y, X], is_sat(L).
path(X, Z, L2, V2) :- path(X, Y, L, V), edge(Y, Z, F), not_member(Z, V), L2 := snoc(L, F),
    V2 := cons(Z, V), is_sat(L2).
"""


def test_labeled_line_excludes_infeasible_path():
    db, m = run(LINE)
    assert {(a, b) for a, b, _, _ in db["path"]} == {(1, 2), (2, 3)}
    assert m.unsat == 1


def test_get_model_literal():
    text = """
    rel c(smt_bool). rel m(smt_bool, any).
    c(#smt{(and (> v 2) (< v 4))}).
    c(#smt{(and (> v 2) (< v 3))}).
    m(F, M) :- c(F), get_model([F], M).
    """
    db, _ = run(text)
    assert [row[1] for row in db["m"]] == [(("v", 3),)]


def test_expression_builtins_and_constructors():
    text = """
    rel n(int). rel out(int, list, any).
    n(1). n(2).
    out(Y, L, pair(X, Y)) :- n(X), Y := add(X, 10), L := append([X], [Y]), len(L) = 2, X != 3.
    """
    db, _ = run(text)
    assert db["out"] == {(11, (1, 11), Compound("pair", (1, 11))), (12, (2, 12), Compound("pair", (2, 12)))}


def test_pattern_matching_on_lists():
    text = """
    rel l(list). rel head(int).
    l([1, 2, 3]). l([]). l([7]).
    head(H) :- l(cons(H, _)).
    """
    db, _ = run(text)
    assert db["head"] == {(1,), (7,)}


def test_budget():
    text = "rel n(int).\nn(0).\nn(Y) :- n(X), Y := add(X, 1)."
    with pytest.raises(BudgetExceeded):
        run(text, max_tuples=50)


def test_runtime_type_error():
    with pytest.raises(EvalError):
        run("rel n(int). rel s(sym).\nn(1).\ns(X) :- n(X).")


def test_max_path_len_builtin():
    text = "rel n(int).\nn(0).\nn(Y) :- n(X), X < max_path_len, Y := add(X, 1)."
    db, _ = run(text, max_path_len=3)
    assert db["n"] == {(0,), (1,), (2,), (3,)}


def check_random_program(seed, order="dfs"):
    rng = random.Random(seed)
    text, facts, rules, rels = random_program(rng)
    db, _ = run(text, order=order)
    want = naive_fixpoint(facts, rules)
    for r in rels:
        assert db[r] == want.get(r, set()), (seed, text)


@pytest.mark.parametrize("seed", range(40))
def test_semi_naive_matches_naive_oracle(seed):
    check_random_program(seed, "dfs" if seed % 2 else "bfs")


# -- SMT-labeled reachability ------------------------------------------------


REACH = """
rel edge(int, int, smt_bool).
rel path(int, int, smt_list, list).
path(X, Y, L, V) :- edge(X, Y, F), L := [F], V := [Y, X], is_sat(L).
path(X, Z, L2, V2) :- path(X, Y, L, V), len(L) < {k}, edge(Y, Z, F), not_member(Z, V),
    L2 := snoc(L, F), V2 := cons(Z, V), is_sat(L2).
"""


@pytest.mark.parametrize("seed", range(5))
def test_reachability_matches_enumeration(seed):
    rng = random.Random(seed)
    edges = random_labeled_graph(rng)
    db, _ = run(REACH.format(k=4) + facts_text(edges))
    got = {tuple(reversed(vs)) for _, _, _, vs in db["path"]}
    assert got == enumerate_feasible(edges, 4)


@pytest.mark.parametrize("seed", range(3))
def test_strategy_order_and_cache_transparency(seed):
    rng = random.Random(100 + seed)
    text = REACH.format(k=5) + facts_text(random_labeled_graph(rng, 7, 16))
    prog = parse_program(text)
    results = []
    for strategy in Strategy:
        for order in ("dfs", "bfs"):
            for enabled in (True, False):
                cache = QueryCache(enabled)
                r = evaluate(prog, ref(strategy), EvalConfig(order=order, trace=True), cache)
                results.append(r.database.as_dict())
                distinct = {frozenset(e.conjuncts) for e in r.trace}
                if enabled:
                    assert r.metrics.checks <= len(distinct)
    assert all(r == results[0] for r in results)


def test_issue_order_traces_match_pure_reordering():
    rng = random.Random(3)
    text = REACH.format(k=5) + facts_text(random_labeled_graph(rng, 6, 12))
    prog = parse_program(text)
    traces = {}
    for order in ("dfs", "bfs"):
        r = evaluate(prog, ref(), EvalConfig(order=order, trace=True), QueryCache(False))
        traces[order] = [(tuple(reversed(e.env.get("V2", e.env.get("V")))), e.conjuncts) for e in r.trace]
    # the same multiset of queries under both orders
    assert sorted(map(repr, traces["dfs"])) == sorted(map(repr, traces["bfs"]))
    # the engine's dfs trace is a pre-order of the candidate forest
    assert issue_order(traces["dfs"], "dfs") == traces["dfs"]
    assert issue_order(traces["bfs"], "bfs") == traces["bfs"]


def test_issue_order_examples():
    ab, bc, cd = ("a", "b"), ("a", "b", "c"), ("c", "d")
    items = [(ab, ["ab"]), (bc, ["ab", "bc"])]
    assert [i[1] for i in issue_order(items, "dfs")] == [["ab"], ["ab", "bc"]]
    # two roots on disjoint edges: bfs alternates between their frontiers
    forest = [(("a", "b"), 1), (("a", "b", "x"), 2), (("c", "d"), 3), (("c", "d", "y"), 4)]
    assert [i[1] for i in issue_order(forest, "bfs")] == [1, 3, 2, 4]
    assert [i[1] for i in issue_order(forest, "dfs")] == [1, 2, 3, 4]
    assert sorted(issue_order(forest, "bfs")) == sorted(issue_order(forest, "dfs"))


def test_worker_pool_gives_same_database():
    rng = random.Random(9)
    prog = parse_program(REACH.format(k=5) + facts_text(random_labeled_graph(rng, 7, 16)))
    seq = evaluate(prog, ref(), EvalConfig())
    par = evaluate(prog, [ref(), ref(), ref()], EvalConfig(worker_count=3))
    assert seq.database.as_dict() == par.database.as_dict()
    with pytest.raises(ValueError):
        evaluate(prog, ref(), EvalConfig(worker_count=2))


# -- builtin_is_sat and the cache ---------------------------------------------


def conj(*ks):
    return [T.canonicalize(T.eq(v, T.int_const(k))) if isinstance(k, int) else T.canonicalize(k) for k in ks]


def test_is_sat_cache_behaviour():
    s, cache = ref(), QueryCache()
    g = T.mk_term(">", [v, T.int_const(0)])
    assert builtin_is_sat(conj(1), s, cache) is True
    assert (cache.hits, cache.misses, s.metrics.checks) == (0, 1, 1)
    assert builtin_is_sat(conj(1, g), s, cache) is True
    assert builtin_is_sat(conj(g, 1), s, cache) is True  # reordered: served from the cache
    assert s.metrics.checks == 2 and cache.hits == 1
    assert builtin_is_sat(conj(1, 2), s, cache) is False


def test_cache_conflict_is_a_soundness_error():
    cache = QueryCache()
    cache.put(conj(1), RESULT_SAT)
    cache.put(conj(1), RESULT_SAT)
    with pytest.raises(SoundnessError):
        cache.put(conj(1), RESULT_UNSAT)


class _UnknownSession:
    def __init__(self):
        self.metrics = Metrics()

    def check(self, query):
        self.metrics.checks += 1
        return unknown("test")


@pytest.mark.parametrize("policy,expected", [("false", False), ("true", True)])
def test_unknown_policy(policy, expected):
    assert builtin_is_sat(conj(1), _UnknownSession(), QueryCache(), policy) is expected


def test_unknown_policy_error():
    with pytest.raises(EvalError):
        builtin_is_sat(conj(1), _UnknownSession(), QueryCache(), "error")
    prog = parse_program(LINE)
    with pytest.raises(EvalError):
        evaluate(prog, _UnknownSession(), EvalConfig(unknown_policy="error"))
    db, _ = evaluate(prog, _UnknownSession(), EvalConfig())
    assert db["path"] == set()

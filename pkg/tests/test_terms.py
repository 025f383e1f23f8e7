import itertools
import pickle
import threading

import pytest
from hypothesis import given, settings, strategies as st

from smtlog import terms as T
from smtlog.errors import SortError

a, b, c = (T.var(n, T.BOOL) for n in "abc")
x = T.var("x", T.INT)
y = T.var("y", T.INT)


def test_interning_returns_same_object():
    assert T.var("x", T.INT) is x
    t1 = T.mk_term("<", [x, T.int_const(3)])
    t2 = T.mk_term("<", [T.var("x", T.INT), T.int_const(3)])
    assert t1 is t2
    assert hash(t1) == t1.id


def test_same_name_different_sort_are_distinct():
    assert T.var("x", T.BOOL) is not x
    assert T.bv_const(1, 8) is not T.bv_const(1, 4)


def test_bool_and_int_constants_not_conflated():
    assert T.int_const(1) is not T.TRUE
    assert T.int_const(0) is not T.FALSE


def test_terms_are_immutable():
    with pytest.raises(AttributeError):
        x.op = "y"


def test_pickle_reinterns():
    t = T.and_(a, T.mk_term(">", [x, T.int_const(-2)]))
    assert pickle.loads(pickle.dumps(t)) is t


def test_concurrent_interning_is_consistent():
    out = []

    def work():
        out.append([T.mk_term("+", [T.var(f"c{i}", T.INT), T.int_const(i)]) for i in range(200)])

    threads = [threading.Thread(target=work) for _ in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for other in out[1:]:
        assert all(p is q for p, q in zip(out[0], other))


@pytest.mark.parametrize("op,args", [
    ("and", [x, a]),
    ("not", [x]),
    ("<", [a, x]),
    ("=", [x, a]),
    ("bvadd", [x, x]),
    ("bvadd", [T.var("u", T.bitvec(8)), T.var("w4", T.bitvec(4))]),
    ("ite", [x, a, b]),
    ("and", [a]),
])
def test_sort_errors(op, args):
    with pytest.raises(SortError):
        T.mk_term(op, args)


def test_extract_sort_and_bounds():
    u = T.var("u", T.bitvec(8))
    assert T.mk_term("extract", [u], (7, 4)).sort == T.bitvec(4)
    with pytest.raises(SortError):
        T.mk_term("extract", [u], (8, 0))


def test_uninterpreted_function_application():
    f = T.FunDecl("f", (T.INT,), T.BOOL)
    t = T.mk_term(f, [x])
    assert t.sort == T.BOOL
    with pytest.raises(SortError):
        T.mk_term(f, [a])


def test_canonicalize_non_bool_raises():
    with pytest.raises(SortError):
        T.canonicalize(x)


def test_canonical_flattening_sorting_dedup():
    t1 = T.and_(a, T.and_(b, a))
    t2 = T.and_(b, a)
    assert T.canonicalize(t1) == T.canonicalize(t2)
    assert T.canonicalize(T.not_(T.not_(a))).term is a
    # commutativity of =
    assert T.canonicalize(T.eq(x, y)) == T.canonicalize(T.eq(y, x))
    # non-commutative ops keep argument order
    assert T.canonicalize(T.mk_term("<", [x, y])) != T.canonicalize(T.mk_term("<", [y, x]))


def test_single_argument_after_dedup_collapses():
    assert T.canonicalize(T.or_(a, a)).term is a


def test_free_vars_sorted():
    t = T.and_(T.mk_term("<", [y, x]), c)
    assert T.free_vars(t) == (("c", T.BOOL), ("x", T.INT), ("y", T.INT))


def test_evaluate_bitvector_wraps():
    u = T.var("u", T.bitvec(4))
    t = T.eq(T.mk_term("bvadd", [u, T.bv_const(1, 4)]), T.bv_const(0, 4))
    assert T.evaluate(t, {"u": 15}) is True
    assert T.evaluate(T.mk_term("bvsub", [T.bv_const(0, 4), T.bv_const(1, 4)]), {}) == 15
    assert T.evaluate(T.mk_term("concat", [T.bv_const(1, 4), T.bv_const(2, 4)]), {}) == 0x12


# random Boolean structure over a few atoms

_atoms = [a, b, c, T.mk_term("<", [x, T.int_const(1)]), T.eq(x, y)]


def _extend(children):
    return st.one_of(
        st.builds(T.not_, children),
        st.builds(lambda l: T.and_(*l), st.lists(children, min_size=2, max_size=3)),
        st.builds(lambda l: T.or_(*l), st.lists(children, min_size=2, max_size=3)),
        st.builds(T.implies, children, children),
        st.builds(T.eq, children, children),
        st.builds(lambda i, t, e: T.mk_term("ite", [i, t, e]), children, children, children),
    )


bool_terms = st.recursive(st.sampled_from(_atoms), _extend, max_leaves=12)

_envs = [dict(zip("abcxy", vals)) for vals in itertools.product([False, True], [False, True], [False, True],
                                                                     [-1, 0, 2], [0, 2])]


@settings(max_examples=300, deadline=None)
@given(bool_terms)
def test_canonicalization_is_idempotent(t):
    k = T.canonicalize(t)
    assert T.canonicalize(k.term) == k


@settings(max_examples=300, deadline=None)
@given(bool_terms)
def test_canonicalization_preserves_truth_table(t):
    k = T.canonicalize(t).term
    for env in _envs:
        assert T.evaluate(t, env) == T.evaluate(k, env)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(_atoms), min_size=2, max_size=5), st.randoms())
def test_conjunction_order_does_not_matter(parts, rnd):
    shuffled = list(parts)
    rnd.shuffle(shuffled)
    assert T.canonicalize(T.and_(*parts)) == T.canonicalize(T.and_(*shuffled))

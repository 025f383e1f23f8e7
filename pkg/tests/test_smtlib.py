import pytest

from golden_cases import GOLDEN_DIR, cases
from smtlog import terms as T
from smtlog.errors import ProtocolError, SortClash, SortError
from smtlog.smtlib import (AssumptionVar, CheckSatAssuming, DeclareConst, DeclareFun, Model, Pop, Push,
                           declarations_for, parse_check_sat_response, parse_model, parse_sexprs,
                           parse_term, serialize_command, serialize_model, serialize_script,
                           serialize_term, symbol, tokenize, TermReader)

v = T.var("v", T.INT)


@pytest.mark.parametrize("name", sorted(cases()))
def test_golden_bytes(name):
    expected = (GOLDEN_DIR / f"{name}.smt2").read_bytes()
    assert serialize_script(cases()[name]).encode("utf-8") == expected


def test_every_golden_file_has_a_case():
    files = {p.stem for p in GOLDEN_DIR.glob("*.smt2")}
    assert files == set(cases())


def test_push_pop_reject_zero():
    with pytest.raises(ValueError):
        Push(0)
    with pytest.raises(ValueError):
        Pop(0)
    with pytest.raises(ValueError):
        CheckSatAssuming(())


def test_command_ends_with_single_newline():
    assert serialize_command(Push(1)) == "(push 1)\n"


def test_symbol_quoting():
    assert symbol("v") == "v"
    assert symbol("a b") == "|a b|"
    assert symbol("1x") == "|1x|"


def test_assumption_var_default_name():
    assert AssumptionVar(7).name == "__csa_7"


def test_canonical_constant_first():
    # canonical order ranks constants before variables
    assert serialize_term(T.canonicalize(T.eq(v, T.int_const(1)))) == "(= 1 v)"


@pytest.mark.parametrize("text,verdict", [("sat", "sat"), ("unsat", "unsat"), ("unknown", "unknown"), ("  sat\n", "sat")])
def test_check_sat_response(text, verdict):
    assert parse_check_sat_response(text).verdict == verdict


@pytest.mark.parametrize("text", ['(error "line 1: unknown constant x")', "success", "(sat)", ""])
def test_check_sat_response_errors(text):
    with pytest.raises(ProtocolError):
        parse_check_sat_response(text)


def test_tokenizer_comments_strings_and_quoted_symbols():
    toks = [tok for _, tok in tokenize('(echo "a ""b"" c") ; note\n |x y| ')]
    assert toks[2] == 'a "b" c'
    assert toks[-1] == "x y"
    assert parse_sexprs("(a (b c)) d") == [["a", ["b", "c"]], "d"]
    with pytest.raises(ProtocolError):
        parse_sexprs("(a (b)")


Z3_MODEL = """(
  (define-fun b () (_ BitVec 8)
    #x0a)
  (define-fun v () Int
    (- 3))
  (define-fun p () Bool
    false)
  (define-fun f ((x!0 Int)) Int
    0)
)"""


def test_parse_multiline_model():
    m = parse_model(Z3_MODEL)
    assert m["v"] == -3
    assert m["b"] == 10
    assert m["p"] is False
    assert m.skipped
    assert "f" not in m


def test_model_prefix_filter_and_roundtrip():
    bindings = {("v", T.INT): -12, ("p", T.BOOL): True, ("b", T.bitvec(8)): 255, ("__csa_1", T.BOOL): True}
    text = serialize_model(bindings)
    m = parse_model(text)
    assert m.bindings == bindings
    assert "__csa_1" not in m.without_prefix()


def test_model_rejects_duplicates_and_bad_values():
    with pytest.raises(ProtocolError):
        parse_model("((define-fun v () Int 1) (define-fun v () Int 2))")
    with pytest.raises(ProtocolError):
        parse_model("((define-fun v () Int true))")
    with pytest.raises(ProtocolError):
        parse_model('(error "model is not available")')


def test_declarations_sorted_and_incremental():
    f = T.FunDecl("f", (T.INT,), T.BOOL)
    q = [T.canonicalize(T.mk_term("<", [T.var("w", T.INT), v])), T.canonicalize(T.mk_term(f, [v]))]
    decls = declarations_for(q, set())
    assert decls == [DeclareFun("f", (T.INT,), T.BOOL), DeclareConst("v", T.INT), DeclareConst("w", T.INT)]
    assert declarations_for(q, {"v", "w", "f"}) == []


def test_declaration_sort_clash():
    q = [T.canonicalize(T.var("v", T.BOOL))]
    with pytest.raises(SortClash):
        declarations_for(q, {"v": T.INT})


def test_reader_infers_sorts_from_context():
    r = TermReader()
    t = r.read("(and (= v 1) (bvult b #b00000101))", T.BOOL)
    assert dict(T.free_vars(t)) == {"v": T.INT, "b": T.bitvec(8)}
    # the symbol table persists
    assert r.read("(> v 0)").args[0] is v


def test_reader_roundtrip_for_golden_terms():
    for cmds in cases().values():
        for cmd in cmds:
            term = getattr(cmd, "term", None)
            if term is None or any(n.startswith("__csa_") for n, _ in T.free_vars(term)):
                continue
            symbols = dict(T.free_vars(term))
            assert parse_term(serialize_term(term), symbols) is term


def test_reader_rejects_reserved_prefix_and_unknown_ops():
    with pytest.raises(SortError):
        parse_term("(and __csa_1 p)")
    with pytest.raises(SortError):
        parse_term("(frobnicate v)")
    with pytest.raises(SortError):
        parse_term("(and v 1)")

"""Shared oracles and markers.  Nothing here reuses engine code paths."""

import shutil

import pytest

from smtlog import terms as T
from smtlog.reference import reference_check
from smtlog.smtlib import serialize_term
from smtlog.solver import SolverConfig, solver_available

v = T.var("v", T.INT)


def z3_available() -> bool:
    return shutil.which("z3") is not None and solver_available(SolverConfig())


requires_z3 = pytest.mark.skipif(not z3_available(), reason="no z3 binary on PATH")


def naive_fixpoint(facts, rules):
    """Round-robin naive iteration: apply every rule to the whole database until nothing changes.

    rules are (head_rel, head_vars, [(rel, vars)]); an entry of vars is a
    variable name (str) or an int constant.
    """
    db = {}
    for rel, row in facts:
        db.setdefault(rel, set()).add(row)
    changed = True
    while changed:
        changed = False
        for head_rel, head_vars, body in rules:
            envs = [{}]
            for rel, args in body:
                nxt = []
                for env in envs:
                    for row in db.get(rel, ()):
                        e = dict(env)
                        ok = True
                        for a, val in zip(args, row):
                            if isinstance(a, int):
                                ok = a == val
                            elif a in e:
                                ok = e[a] == val
                            else:
                                e[a] = val
                            if not ok:
                                break
                        if ok:
                            nxt.append(e)
                envs = nxt
            for env in envs:
                row = tuple(a if isinstance(a, int) else env[a] for a in head_vars)
                if row not in db.setdefault(head_rel, set()):
                    db[head_rel].add(row)
                    changed = True
    return db


def random_program(rng):
    nrel = rng.randint(1, 4)
    arity = {f"r{i}": rng.randint(1, 2) for i in range(nrel)}
    rels = list(arity)
    facts = set()
    for _ in range(rng.randint(0, 30)):
        r = rng.choice(rels)
        facts.add((r, tuple(rng.randint(0, 4) for _ in range(arity[r]))))
    rules = []
    for _ in range(rng.randint(1, 3)):
        body = []
        for _ in range(rng.randint(1, 3)):
            r = rng.choice(rels)
            args = [rng.choice("XYZ") if rng.random() < 0.85 else rng.randint(0, 4) for _ in range(arity[r])]
            body.append((r, args))
        bound = sorted({a for _, args in body for a in args if isinstance(a, str)})
        h = rng.choice(rels)
        if not bound:
            head = [rng.randint(0, 4) for _ in range(arity[h])]
        else:
            head = [rng.choice(bound) if rng.random() < 0.9 else rng.randint(0, 4) for _ in range(arity[h])]
        rules.append((h, head, body))
    lines = [f"rel {r}({', '.join(['int'] * a)})." for r, a in arity.items()]
    lines += [f"{r}({', '.join(map(str, row))})." for r, row in sorted(facts)]

    def atom(r, args):
        return f"{r}({', '.join(map(str, args))})"

    lines += [f"{atom(h, head)} :- {', '.join(atom(r, a) for r, a in body)}." for h, head, body in rules]
    return "\n".join(lines), sorted(facts), rules, rels


def random_labeled_graph(rng, nodes=6, edges=10):
    pool = [T.var(f"p{i}", T.BOOL) for i in range(3)] + [v]
    pairs = [(a, b) for a in range(nodes) for b in range(nodes) if a != b]
    rng.shuffle(pairs)
    out = []
    for a, b in sorted(pairs[:edges]):
        k = rng.randrange(4)
        if k < 3:
            f = pool[k] if rng.random() < 0.5 else T.not_(pool[k])
        else:
            f = T.mk_term(rng.choice(["<", ">", "="]), [v, T.int_const(rng.randint(-2, 2))])
        out.append((a, b, f))
    return out


def facts_text(edges):
    return "".join(f"edge({a}, {b}, #smt{{{serialize_term(f)}}}).\n" for a, b, f in edges)


def enumerate_feasible(edges, k):
    succ = {}
    for a, b, f in edges:
        succ.setdefault(a, []).append((b, f))
    out = set()

    def walk(path, labels):
        if len(path) > 1 and reference_check(labels).verdict == "sat":
            out.add(tuple(path))
        if len(path) - 1 >= k:
            return
        for b, f in succ.get(path[-1], ()):
            if b not in path:
                walk(path + [b], labels + [f])

    for a in sorted(succ):
        walk([a], [])
    return out

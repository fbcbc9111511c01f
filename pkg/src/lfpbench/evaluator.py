"""Evaluation of FO+LFP formulas over finite structures.

A subformula evaluates to a :class:`Table`: a dense boolean array with one
axis per free variable.  Existential quantifiers over conjunctions are
eliminated by pairwise contractions (ordered with ``numpy.einsum_path``
and run as batched matrix products), so a conjunction is never
materialized over all of its variables at once.  Variables fixed by the
valuation are sliced away instead of carried as axes.

Fixed points follow the convention ``I^0 = {}`` and ``I^(k+1) = G(I^k)``;
a tuple's stage is the least ``k >= 1`` with the tuple in ``I^k`` and the
closure ordinal is the number of strict growth steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .formula import (
    FALSE,
    And,
    Atom,
    Const,
    Derived,
    Eq,
    Exists,
    Forall,
    Formula,
    FormulaError,
    Implies,
    Lfp,
    Not,
    Or,
    Polarity,
    alpha_normal,
    children,
    free_variables,
    polarity,
    standardize_apart,
    substitute_relation,
)
from .structures import FiniteStructure

STRATEGIES = ("naive", "semi-naive")


class EvaluationError(FormulaError):
    pass


class Table:
    """Boolean relation over named variables; ``data.ndim == len(vars)``."""

    __slots__ = ("vars", "data")

    def __init__(self, vars: tuple[str, ...], data: np.ndarray):
        self.vars = vars
        self.data = data

    @classmethod
    def const(cls, value: bool) -> Table:
        return cls((), np.array(bool(value)))

    def is_const(self, value: bool) -> bool:
        return not self.vars and bool(self.data) == value

    def aligned(self, target: Sequence[str]) -> np.ndarray:
        """View of ``data`` broadcastable against ``target`` ordering."""
        present = [v for v in target if v in self.vars]
        if len(present) != len(self.vars):
            missing = set(self.vars) - set(target)
            raise EvaluationError(f"internal: variables {missing} missing from target {target}")
        perm = [self.vars.index(v) for v in present]
        data = self.data.transpose(perm) if perm != sorted(perm) else self.data
        shape = [data.shape[present.index(v)] if v in self.vars else 1 for v in target]
        return data.reshape(shape)

    def __repr__(self) -> str:
        return f"Table(vars={self.vars}, true={int(self.data.sum())})"


def _union_vars(tables: Iterable[Table]) -> tuple[str, ...]:
    out: list[str] = []
    for t in tables:
        for v in t.vars:
            if v not in out:
                out.append(v)
    return tuple(out)


def conjoin(tables: Sequence[Table]) -> Table:
    if any(t.is_const(False) for t in tables):
        return Table.const(False)
    tables = [t for t in tables if not t.is_const(True)]
    if not tables:
        return Table.const(True)
    if len(tables) == 1:
        return tables[0]
    target = _union_vars(tables)
    data = tables[0].aligned(target)
    for t in tables[1:]:
        data = data & t.aligned(target)
    return Table(target, data)


def disjoin(tables: Sequence[Table]) -> Table:
    if any(t.is_const(True) for t in tables):
        return Table.const(True)
    tables = [t for t in tables if not t.is_const(False)]
    if not tables:
        return Table.const(False)
    if len(tables) == 1:
        return tables[0]
    target = _union_vars(tables)
    data = tables[0].aligned(target)
    for t in tables[1:]:
        data = data | t.aligned(target)
    return Table(target, data)


def negate(t: Table) -> Table:
    return Table(t.vars, ~t.data)


def project_exists(tables: Sequence[Table], elim: Sequence[str]) -> Table:
    """``exists elim. AND(tables)`` without materializing the full join."""
    if any(t.is_const(False) for t in tables):
        return Table.const(False)
    tables = [t for t in tables if not t.is_const(True)]
    everything = _union_vars(tables)
    gone = [v for v in elim if v in everything]
    if not gone:
        return conjoin(tables)
    keep = tuple(v for v in everything if v not in gone)
    if len(tables) == 1:
        t = tables[0]
        axes = tuple(t.vars.index(v) for v in gone)
        kept = tuple(v for v in t.vars if v not in gone)
        return Table(kept, t.data.any(axis=axes))
    if len(tables) == 2:
        # only one order to try; planning costs more than the contraction at these sizes
        a, b = tables
        data, dvars = _contract_pair(a.data.astype(np.float32), a.vars, b.data.astype(np.float32), b.vars, set(keep))
        data, dvars = _sum_out(data, dvars, set(keep))
        return Table(dvars, data > 0)
    ids = {v: i for i, v in enumerate(everything)}
    spec: list = []
    for t in tables:
        spec.append(t.data)
        spec.append([ids[v] for v in t.vars])
    spec.append([ids[v] for v in keep])
    path, _ = np.einsum_path(*spec, optimize="greedy")
    # sums of nonnegative terms never round to zero, so single precision is exact enough for > 0
    ops = [(t.data.astype(np.float32), t.vars) for t in tables]
    for step in path[1:]:
        group = [ops.pop(i) for i in sorted(step, reverse=True)]
        rest = _needed(ops, keep)
        a, av = group.pop()
        while group:
            b, bv = group.pop()
            others = rest.union(*(vs for _, vs in group))
            a, av = _contract_pair(a, av, b, bv, others)
        ops.append(_sum_out(a, av, rest))
    data, dvars = _sum_out(*ops[0], set(keep))
    return Table(dvars, data > 0)


def _needed(ops: list, keep: Sequence[str]) -> set[str]:
    out = set(keep)
    for _, vs in ops:
        out.update(vs)
    return out


def _sum_out(a: np.ndarray, av: Sequence[str], needed: set[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    drop = tuple(i for i, v in enumerate(av) if v not in needed)
    if not drop:
        return a, tuple(av)
    return a.sum(axis=drop), tuple(v for v in av if v in needed)


def _contract_pair(a, av, b, bv, needed: set[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    """Join two count tables and sum out the variables nothing else needs, as a batched matmul."""
    a, av = _sum_out(a, av, needed | set(bv))
    b, bv = _sum_out(b, bv, needed | set(av))
    shared = [v for v in av if v in bv]
    batch = [v for v in shared if v in needed]
    contr = [v for v in shared if v not in needed]
    left = [v for v in av if v not in bv]
    right = [v for v in bv if v not in av]
    n = a.shape[0] if a.ndim else (b.shape[0] if b.ndim else 1)
    A = a.transpose([av.index(v) for v in batch + left + contr]).reshape(
        n ** len(batch), n ** len(left), n ** len(contr)
    )
    B = b.transpose([bv.index(v) for v in batch + contr + right]).reshape(
        n ** len(batch), n ** len(contr), n ** len(right)
    )
    out = np.matmul(A, B)
    # back to 0/1 so magnitudes stay bounded through long chains
    out = (out > 0).astype(np.float32)
    return out.reshape((n,) * (len(batch) + len(left) + len(right))), tuple(batch + left + right)


def index_table(array: np.ndarray, axis_vars: Sequence[str], fixed: Mapping[str, int]) -> Table:
    """Table for ``array`` whose axes are labelled ``axis_vars``.

    Axes labelled by fixed variables are sliced; repeated labels take the
    diagonal.
    """
    idx = tuple(fixed[v] if v in fixed else slice(None) for v in axis_vars)
    if any(v in fixed for v in axis_vars):
        array = array[idx]
    rest = [v for v in axis_vars if v not in fixed]
    uniq = tuple(dict.fromkeys(rest))
    if len(uniq) != len(rest):
        ids = {v: i for i, v in enumerate(uniq)}
        array = np.einsum(array, [ids[v] for v in rest], [ids[v] for v in uniq])
    return Table(uniq, np.asarray(array, dtype=bool))


@dataclass
class _Binding:
    """Value of a relation variable; axes are ``params`` then the tuple positions."""

    params: tuple[str, ...]
    data: np.ndarray


def _conjuncts(f: Formula, neg: bool) -> list[tuple[Formula, bool]]:
    if not neg:
        if isinstance(f, And):
            return _conjuncts(f.left, False) + _conjuncts(f.right, False)
        if isinstance(f, Not):
            return _conjuncts(f.sub, True)
        return [(f, False)]
    if isinstance(f, Or):
        return _conjuncts(f.left, True) + _conjuncts(f.right, True)
    if isinstance(f, Implies):
        return _conjuncts(f.left, False) + _conjuncts(f.right, True)
    if isinstance(f, Not):
        return _conjuncts(f.sub, False)
    if isinstance(f, Const):
        return [(Const(not f.value), False)]
    return [(f, True)]


def _disjuncts(f: Formula, neg: bool) -> list[tuple[Formula, bool]]:
    if not neg:
        if isinstance(f, Or):
            return _disjuncts(f.left, False) + _disjuncts(f.right, False)
        if isinstance(f, Implies):
            return _disjuncts(f.left, True) + _disjuncts(f.right, False)
        if isinstance(f, Not):
            return _disjuncts(f.sub, True)
        return [(f, False)]
    if isinstance(f, And):
        return _disjuncts(f.left, True) + _disjuncts(f.right, True)
    if isinstance(f, Not):
        return _disjuncts(f.sub, False)
    return [(f, True)]


def _quantifier_prefix(f: Formula, kind: type) -> tuple[list[str], Formula]:
    elim = []
    while isinstance(f, kind):
        elim.append(f.var)
        f = f.body
    return elim, f


@dataclass
class _Iteration:
    rel: str
    new_env: dict
    delta_env: dict


class SyntaxCache:
    """Structure-independent facts about prepared formulas.

    Evaluators over different structures may share one, so that a formula
    is prepared once for a whole family.
    """

    def __init__(self) -> None:
        self.prepared: dict[Formula, Formula] = {}
        self.interned: dict[Formula, Formula] = {}
        self.fv: dict[Formula, frozenset[str]] = {}
        self.frels: dict[Formula, frozenset[str]] = {}


class Evaluator:
    """Evaluates formulas over one structure, memoizing relation-closed subformulas.

    An instance is not thread-safe; use one per thread.
    """

    def __init__(self, structure: FiniteStructure, strategy: str = "semi-naive", syntax: SyntaxCache | None = None):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
        self.structure = structure
        self.n = structure.size
        self.strategy = strategy
        self.syntax = syntax if syntax is not None else SyntaxCache()
        self._prepared = self.syntax.prepared
        self._interned = self.syntax.interned
        self._fv = self.syntax.fv
        self._frels = self.syntax.frels
        self._memo: dict = {}
        self._derived: dict[str, np.ndarray] = {}

    # -- cached syntactic facts --------------------------------------------------

    def _free_vars(self, f: Formula) -> frozenset[str]:
        # built from the children's cached sets; a fresh traversal per node is quadratic
        r = self._fv.get(f)
        if r is None:
            if isinstance(f, (Atom, Derived)):
                r = frozenset(f.args)
            elif isinstance(f, Eq):
                r = frozenset((f.left, f.right))
            elif isinstance(f, (Exists, Forall)):
                r = self._free_vars(f.body) - {f.var}
            elif isinstance(f, Lfp):
                r = (self._free_vars(f.body) - set(f.vars)) | set(f.args)
            else:
                r = frozenset().union(*(self._free_vars(c) for c in children(f)))
            self._fv[f] = r
        return r

    def _free_rels(self, f: Formula) -> frozenset[str]:
        r = self._frels.get(f)
        if r is None:
            if isinstance(f, Atom):
                r = frozenset((f.rel,))
            elif isinstance(f, Lfp):
                r = self._free_rels(f.body) - {f.rel}
            else:
                r = frozenset().union(*(self._free_rels(c) for c in children(f)))
            self._frels[f] = r
        return r

    def prepare(self, f: Formula) -> Formula:
        p = self._prepared.get(f)
        if p is None:
            p = standardize_apart(f, intern=self._interned)
            self._prepared[f] = p
        return p

    # -- public entry points -----------------------------------------------------------

    def table(
        self,
        f: Formula,
        valuation: Mapping[str, int] | None = None,
        relations: Mapping[str, Iterable[Sequence[int]] | np.ndarray] | None = None,
    ) -> Table:
        """Table of ``f`` over its free variables not fixed by ``valuation``."""
        fixed = self._check_valuation(valuation or {})
        env = self._make_env(relations)
        return self._eval(self.prepare(f), env, fixed)

    def holds(self, f: Formula, valuation: Mapping[str, int] | None = None, relations=None) -> bool:
        valuation = dict(valuation or {})
        unbound = sorted(v for v in self._free_vars(self.prepare(f)) if v not in valuation)
        if unbound:
            raise EvaluationError(f"unbound free variables {unbound}")
        t = self.table(f, valuation, relations)
        return bool(t.data)

    def array(
        self,
        f: Formula,
        variables: Sequence[str],
        valuation: Mapping[str, int] | None = None,
        relations=None,
    ) -> np.ndarray:
        """Dense array of ``f`` with one axis per entry of ``variables``."""
        variables = tuple(variables)
        if len(set(variables)) != len(variables):
            raise EvaluationError(f"repeated variable in {variables}")
        valuation = dict(valuation or {})
        missing = sorted(v for v in self._free_vars(self.prepare(f)) if v not in variables and v not in valuation)
        if missing:
            raise EvaluationError(f"free variables {missing} neither listed nor bound")
        fixed = {k: v for k, v in valuation.items() if k not in variables}
        t = self.table(f, fixed, relations)
        shape = (self.n,) * len(variables)
        return np.broadcast_to(t.aligned(variables), shape)

    # -- environment --------------------------------------------------------------------

    def _check_valuation(self, valuation: Mapping[str, int]) -> dict[str, int]:
        fixed = {}
        for k, v in valuation.items():
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < self.n:
                raise EvaluationError(f"value {v!r} for {k} is outside the universe 0..{self.n - 1}")
            fixed[k] = int(v)
        return fixed

    def _make_env(self, relations) -> dict[str, _Binding]:
        env: dict[str, _Binding] = {}
        for name, value in (relations or {}).items():
            if name in self.structure.arities:
                raise EvaluationError(f"relation variable {name} clashes with a structure relation")
            if isinstance(value, np.ndarray):
                data = value.astype(bool)
            else:
                tuples = [tuple(int(v) for v in t) for t in value]
                if not tuples:
                    raise EvaluationError(
                        f"empty relation {name} given as tuples; pass a boolean array to fix its arity"
                    )
                arity = len(tuples[0])
                data = np.zeros((self.n,) * arity, dtype=bool)
                for t in tuples:
                    if len(t) != arity or not all(0 <= v < self.n for v in t):
                        raise EvaluationError(f"bad tuple {t} for relation {name}")
                    data[t] = True
            env[name] = _Binding((), data)
        return env

    def _memo_key(self, f: Formula, env: Mapping, fixed: Mapping[str, int]):
        rels = self._free_rels(f)
        if any(r in env for r in rels):
            return None
        fv = self._free_vars(f)
        return (f, tuple(sorted((v, fixed[v]) for v in fv if v in fixed)))

    # -- core evaluation -------------------------------------------------------------------

    def _eval(self, f: Formula, env: Mapping[str, _Binding], fixed: Mapping[str, int]) -> Table:
        key = None
        if not isinstance(f, (Const, Eq)):
            key = self._memo_key(f, env, fixed)
            if key is not None:
                hit = self._memo.get(key)
                if hit is not None:
                    return hit
        t = self._eval_node(f, env, fixed)
        if key is not None:
            self._memo[key] = t
        return t

    def _eval_node(self, f: Formula, env: Mapping[str, _Binding], fixed: Mapping[str, int]) -> Table:
        if isinstance(f, Const):
            return Table.const(f.value)
        if isinstance(f, Eq):
            return self._eq(f.left, f.right, fixed)
        if isinstance(f, Atom):
            return self._atom(f, env, fixed)
        if isinstance(f, Derived):
            return index_table(self._derived_array(f), f.args, fixed)
        if isinstance(f, Not):
            return negate(self._eval(f.sub, env, fixed))
        if isinstance(f, And):
            return conjoin([self._literal(g, neg, env, fixed) for g, neg in _conjuncts(f, False)])
        if isinstance(f, (Or, Implies)):
            return disjoin([self._literal(g, neg, env, fixed) for g, neg in _disjuncts(f, False)])
        if isinstance(f, Exists):
            elim, body = _quantifier_prefix(f, Exists)
            return self._exists(elim, body, False, env, fixed)
        if isinstance(f, Forall):
            elim, body = _quantifier_prefix(f, Forall)
            return negate(self._exists(elim, body, True, env, fixed))
        if isinstance(f, Lfp):
            return self._lfp(f, env, fixed)
        raise TypeError(f"not a formula: {f!r}")

    def _literal(self, g: Formula, neg: bool, env, fixed) -> Table:
        t = self._eval(g, env, fixed)
        return negate(t) if neg else t

    def _exists(self, elim: list[str], body: Formula, neg: bool, env, fixed) -> Table:
        ds = _disjuncts(body, neg)
        if len(ds) > 1:
            return disjoin([self._exists(elim, g, gneg, env, fixed) for g, gneg in ds])
        tables = [self._literal(g, gneg, env, fixed) for g, gneg in _conjuncts(body, neg)]
        return project_exists(tables, elim)

    def _eq(self, a: str, b: str, fixed: Mapping[str, int]) -> Table:
        if a in fixed and b in fixed:
            return Table.const(fixed[a] == fixed[b])
        if a == b:
            return Table.const(True)
        if a in fixed or b in fixed:
            value, free = (fixed[a], b) if a in fixed else (fixed[b], a)
            data = np.zeros(self.n, dtype=bool)
            data[value] = True
            return Table((free,), data)
        return Table((a, b), np.eye(self.n, dtype=bool))

    def _atom(self, f: Atom, env: Mapping[str, _Binding], fixed) -> Table:
        binding = env.get(f.rel)
        if binding is not None:
            expected = binding.data.ndim - len(binding.params)
            if expected != len(f.args):
                raise EvaluationError(f"{f.rel} has arity {expected}, used with {len(f.args)} arguments")
            return index_table(binding.data, binding.params + f.args, fixed)
        arity = self.structure.arities.get(f.rel)
        if arity is None:
            raise EvaluationError(f"unknown relation {f.rel!r} (not in structure {self.structure.name})")
        if arity != len(f.args):
            raise EvaluationError(f"relation {f.rel} has arity {arity}, used with {len(f.args)} arguments")
        return index_table(self.structure.dense(f.rel), f.args, fixed)

    def _derived_array(self, f: Derived) -> np.ndarray:
        arr = self._derived.get(f.name)
        if arr is None:
            arr = np.asarray(f.compute(self.structure), dtype=bool)
            if arr.shape != (self.n,) * len(f.args):
                raise EvaluationError(f"derived relation {f.name} has shape {arr.shape}")
            self._derived[f.name] = arr
        return arr

    # -- fixed points ----------------------------------------------------------------------

    def _params(self, body: Formula, xvars: Sequence[str], env, fixed) -> tuple[str, ...]:
        names = list(free_variables(body))
        for r in sorted(self._free_rels(body)):
            if r in env:
                names.extend(env[r].params)
        out = []
        for v in names:
            if v not in xvars and v not in fixed and v not in out:
                out.append(v)
        return tuple(out)

    def _lfp(self, f: Lfp, env, fixed) -> Table:
        params, data, _, _ = self.fixpoint(f.body, f.rel, f.vars, env, fixed)
        return index_table(data, params + f.args, fixed)

    def _gamma(self, body, rel, params, xvars, current, env, fixed) -> np.ndarray:
        inner = dict(env)
        inner[rel] = _Binding(params, current)
        t = self._eval(body, inner, fixed)
        axes = params + tuple(xvars)
        return np.broadcast_to(t.aligned(axes), current.shape)

    def fixpoint(
        self,
        body: Formula,
        rel: str,
        xvars: Sequence[str],
        env: Mapping[str, _Binding],
        fixed: Mapping[str, int],
        track: bool = False,
    ) -> tuple[tuple[str, ...], np.ndarray, np.ndarray | None, int]:
        """Least fixed point of ``body`` in ``rel`` over the tuple ``xvars``.

        Returns ``(params, fixpoint, stages, closure)``: the fixpoint array
        has axes ``params + xvars``; ``stages`` (when ``track``) holds each
        tuple's stage, 0 for tuples outside the fixed point.
        """
        xvars = tuple(xvars)
        params = self._params(body, xvars, env, fixed)
        shape = (self.n,) * (len(params) + len(xvars))
        stages = np.zeros(shape, dtype=np.int64) if track else None

        key = None
        if not track and not any(r in env for r in self._free_rels(body) - {rel}):
            fv = self._free_vars(body)
            shape_key = alpha_normal(Lfp(rel, xvars, body, ("%",) * len(xvars)))
            key = ("fix", shape_key, tuple(sorted((v, fixed[v]) for v in fv if v in fixed)))
            hit = self._memo.get(key)
            if hit is not None:
                return hit

        empty = np.zeros(shape, dtype=bool)
        prev = empty
        cur = self._gamma(body, rel, params, xvars, empty, env, fixed).copy()
        closure = 0
        while True:
            grown = cur & ~prev
            if not grown.any():
                break
            closure += 1
            if stages is not None:
                stages[grown] = closure
            if self.strategy == "naive":
                nxt = self._gamma(body, rel, params, xvars, cur, env, fixed)
            else:
                nxt = cur | self._delta_step(body, rel, params, xvars, prev, cur, grown, env, fixed)
            prev, cur = cur, np.array(nxt, dtype=bool)
        result = (params, cur, stages, closure)
        if key is not None:
            self._memo[key] = result
        return result

    # -- semi-naive increments ------------------------------------------------------------
    #
    # For a subformula c that is monotone in rel, delta(c) is a table D with
    # c(new) = c(old) | D and D <= c(new).  c(new) itself always qualifies;
    # the structural rules below just produce smaller D where they can.

    def _delta_step(self, body, rel, params, xvars, old, new, grown, env, fixed) -> np.ndarray:
        new_env = dict(env)
        new_env[rel] = _Binding(params, new)
        delta_env = dict(env)
        delta_env[rel] = _Binding(params, grown)
        it = _Iteration(rel, new_env, delta_env)
        d = self._delta(body, it, fixed)
        if d is None:
            return np.zeros_like(new)
        return np.broadcast_to(d.aligned(params + tuple(xvars)), new.shape)

    def _mentions(self, f: Formula, rel: str) -> bool:
        return rel in self._free_rels(f)

    def _delta_literal(self, g: Formula, neg: bool, it: _Iteration, fixed) -> Table | None:
        if not self._mentions(g, it.rel):
            return None
        if neg:
            return negate(self._eval(g, it.new_env, fixed))
        return self._delta(g, it, fixed)

    def _delta(self, f: Formula, it: _Iteration, fixed) -> Table | None:
        if not self._mentions(f, it.rel):
            return None
        if isinstance(f, Atom):
            return self._atom(f, it.delta_env, fixed)
        if isinstance(f, Not) and isinstance(f.sub, Not):
            return self._delta(f.sub.sub, it, fixed)
        if isinstance(f, And):
            return self._delta_conj([], _conjuncts(f, False), it, fixed)
        if isinstance(f, (Or, Implies)):
            parts = [self._delta_literal(g, neg, it, fixed) for g, neg in _disjuncts(f, False)]
            parts = [p for p in parts if p is not None]
            return disjoin(parts) if parts else None
        if isinstance(f, Exists):
            elim, body = _quantifier_prefix(f, Exists)
            parts = [
                self._delta_conj(elim, _conjuncts(g, neg), it, fixed) for g, neg in _disjuncts(body, False)
            ]
            parts = [p for p in parts if p is not None]
            return disjoin(parts) if parts else None
        return self._eval(f, it.new_env, fixed)

    def _delta_conj(self, elim, lits, it: _Iteration, fixed) -> Table | None:
        full: dict[int, Table] = {}

        def full_table(j: int) -> Table:
            if j not in full:
                g, neg = lits[j]
                full[j] = self._literal(g, neg, it.new_env, fixed)
            return full[j]

        terms = []
        for i, (g, neg) in enumerate(lits):
            d = self._delta_literal(g, neg, it, fixed)
            if d is None or d.is_const(False):
                continue
            factors = [d] + [full_table(j) for j in range(len(lits)) if j != i]
            terms.append(project_exists(factors, elim))
        return disjoin(terms) if terms else None


# -- module-level API ----------------------------------------------------------------------


def evaluate(
    f: Formula,
    structure: FiniteStructure,
    valuation: Mapping[str, int] | None = None,
    relations: Mapping | None = None,
    evaluator: Evaluator | None = None,
) -> bool:
    """Truth value of ``f`` in ``structure`` under ``valuation``.

    ``relations`` supplies values for free relation variables, as tuple
    collections or boolean arrays.
    """
    ev = evaluator or Evaluator(structure)
    return ev.holds(f, valuation, relations)


def defined_set(
    f: Formula,
    structure: FiniteStructure,
    variables: Sequence[str] | None = None,
    valuation: Mapping[str, int] | None = None,
    relations: Mapping | None = None,
    evaluator: Evaluator | None = None,
) -> frozenset[tuple[int, ...]]:
    """Tuples (over ``variables``, default the free variables) satisfying ``f``."""
    ev = evaluator or Evaluator(structure)
    if variables is None:
        variables = [v for v in free_variables(f) if v not in (valuation or {})]
    arr = ev.array(f, variables, valuation, relations)
    return frozenset(tuple(int(i) for i in idx) for idx in zip(*np.nonzero(arr)))


def _check_body(body: Formula, rel: str) -> None:
    p = polarity(body, rel)
    if p in (Polarity.NEGATIVE, Polarity.MIXED):
        raise EvaluationError(f"{rel} is not positive in the lfp body (polarity: {p.value})")


def _tuples(arr: np.ndarray) -> frozenset[tuple[int, ...]]:
    return frozenset(tuple(int(i) for i in idx) for idx in zip(*np.nonzero(arr)))


def gamma(
    body: Formula,
    rel: str,
    xvars: Sequence[str],
    structure: FiniteStructure,
    current: Iterable[Sequence[int]],
    valuation: Mapping[str, int] | None = None,
    evaluator: Evaluator | None = None,
) -> frozenset[tuple[int, ...]]:
    """One application of the operator ``X -> body(A^x; X)``."""
    xvars = tuple(xvars)
    ev = evaluator or Evaluator(structure)
    data = np.zeros((structure.size,) * len(xvars), dtype=bool)
    for t in current:
        data[tuple(t)] = True
    arr = ev.array(body, xvars, valuation, {rel: data})
    return _tuples(arr)


@dataclass
class StageTable:
    """Stages of one least-fixed-point computation."""

    body: Formula
    rel: str
    vars: tuple[str, ...]
    structure: FiniteStructure
    stages: dict[tuple[int, ...], int]
    closure: int
    stage_array: np.ndarray = field(repr=False)

    @property
    def fixpoint(self) -> frozenset[tuple[int, ...]]:
        return frozenset(self.stages)

    def stage_set(self, k: int) -> frozenset[tuple[int, ...]]:
        """``I^k``: tuples of stage at most ``k`` (``I^0`` is empty)."""
        return frozenset(t for t, s in self.stages.items() if s <= k)

    def levels(self) -> list[list[tuple[int, ...]]]:
        """Tuples grouped by stage, stage 1 first, each level sorted."""
        out: list[list[tuple[int, ...]]] = [[] for _ in range(self.closure)]
        for t, s in sorted(self.stages.items()):
            out[s - 1].append(t)
        return out

    def stage(self, t: Sequence[int]) -> int | None:
        return self.stages.get(tuple(t))


def lfp_stages(
    body: Formula,
    rel: str,
    xvars: Sequence[str],
    structure: FiniteStructure,
    valuation: Mapping[str, int] | None = None,
    strategy: str = "semi-naive",
    evaluator: Evaluator | None = None,
) -> StageTable:
    """Iterate the operator of ``body`` from the empty relation, recording stages.

    Every free variable of ``body`` outside ``xvars`` must be bound by
    ``valuation``.
    """
    xvars = tuple(xvars)
    _check_body(body, rel)
    valuation = dict(valuation or {})
    extra = [v for v in free_variables(body) if v not in xvars and v not in valuation]
    if extra:
        raise EvaluationError(f"free variables {extra} of the body are not bound")
    ev = evaluator if evaluator is not None and evaluator.strategy == strategy else Evaluator(structure, strategy)
    fixed = ev._check_valuation({k: v for k, v in valuation.items() if k not in xvars})
    prepared = ev.prepare(body)
    _, data, stages, closure = ev.fixpoint(prepared, rel, xvars, {}, fixed, track=True)
    assert stages is not None
    table = {tuple(int(i) for i in idx): int(stages[idx]) for idx in zip(*np.nonzero(data))}
    return StageTable(body, rel, xvars, structure, table, closure, stages)


def closure_ordinal(
    body: Formula,
    rel: str,
    xvars: Sequence[str],
    structure: FiniteStructure,
    valuation: Mapping[str, int] | None = None,
    strategy: str = "semi-naive",
) -> int:
    return lfp_stages(body, rel, xvars, structure, valuation, strategy).closure


def stage_comparison(
    body: Formula,
    rel: str,
    xvars: Sequence[str],
    structure: FiniteStructure,
    valuation: Mapping[str, int] | None = None,
) -> frozenset[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Pairs ``(b, c)`` of fixpoint tuples with ``stage(b) <= stage(c)``."""
    st = lfp_stages(body, rel, xvars, structure, valuation)
    items = sorted(st.stages.items())
    return frozenset((b, c) for b, sb in items for c, sc in items if sb <= sc)


def preorder_classes(pairs: Iterable[tuple]) -> list[list]:
    """Equivalence classes of a total preorder given as a pair set, bottom first."""
    pairs = set(pairs)
    elems = sorted({p[0] for p in pairs} | {p[1] for p in pairs})
    below = {e: sum(1 for d in elems if (d, e) in pairs) for e in elems}
    classes: dict[int, list] = {}
    for e in elems:
        classes.setdefault(below[e], []).append(e)
    return [classes[k] for k in sorted(classes)]


def unfold_lfp(body: Formula, rel: str, xvars: Sequence[str], k: int) -> Formula:
    """First-order formula ``theta_k`` defining the stage ``I^k``.

    ``theta_0`` is ``false`` and ``theta_(j+1)`` substitutes ``theta_j``
    for ``rel`` in ``body``.  The result mentions no ``rel``.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    _check_body(body, rel)
    theta: Formula = FALSE
    for _ in range(k):
        theta = substitute_relation(body, rel, theta, tuple(xvars))
    return theta


def unfold_over_family(
    body: Formula,
    rel: str,
    xvars: Sequence[str],
    family: Sequence[FiniteStructure],
    max_k: int,
) -> int | None:
    """Least ``k <= max_k`` with ``theta_k`` and ``theta_(k+1)`` equivalent on every member.

    Returns None if no such ``k`` exists within the budget.
    """
    xvars = tuple(xvars)
    _check_body(body, rel)
    # largest structures first: they are the likeliest to separate theta_k from theta_k+1
    order = sorted(range(len(family)), key=lambda i: -family[i].size)
    syntax = SyntaxCache()
    evaluators = [Evaluator(family[i], syntax=syntax) for i in order]
    cache: dict[tuple[int, int], np.ndarray] = {}
    thetas: list[Formula] = [FALSE]

    def theta(k: int) -> Formula:
        while len(thetas) <= k:
            thetas.append(substitute_relation(body, rel, thetas[-1], xvars))
        return thetas[k]

    def extension(pos: int, k: int) -> np.ndarray:
        if (pos, k) not in cache:
            cache[(pos, k)] = np.array(evaluators[pos].array(theta(k), xvars))
        return cache[(pos, k)]

    for k in range(max_k + 1):
        if all(np.array_equal(extension(p, k), extension(p, k + 1)) for p in range(len(order))):
            return k
        for p in range(len(order)):
            cache.pop((p, k), None)
    return None

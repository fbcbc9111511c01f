"""Abstract syntax for first-order logic extended with least fixed points.

Formulas are immutable dataclass trees.  Every node caches its hash, so
formulas can be used as dictionary keys (the evaluator memoizes on them).

Second-order (relation) variables share the atom node with signature
relations; which one an atom refers to is decided by context (an enclosing
``Lfp`` binding, an evaluation environment, or the structure).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence


class FormulaError(ValueError):
    """Raised for ill-formed formulas (arity, polarity, binding errors)."""


class _Node:
    __slots__ = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash(self._key()))

    def _key(self):
        raise NotImplementedError

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]

    def __str__(self) -> str:
        from .render import render

        return render(self)


def _node(cls):
    cls = dataclass(frozen=True, eq=True)(cls)
    cls.__hash__ = _Node.__hash__  # dataclass would regenerate a deep hash
    return cls


@_node
class Const(_Node):
    value: bool
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def _key(self):
        return ("const", self.value)


@_node
class Atom(_Node):
    """``R(t1, ..., tk)`` for a signature relation or a relation variable."""

    rel: str
    args: tuple[str, ...]
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def _key(self):
        return ("atom", self.rel, self.args)


@_node
class Eq(_Node):
    left: str
    right: str
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def _key(self):
        return ("eq", self.left, self.right)


@_node
class Not(_Node):
    sub: Formula
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def _key(self):
        return ("not", self.sub)


@_node
class And(_Node):
    left: Formula
    right: Formula
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def _key(self):
        return ("and", self.left, self.right)


@_node
class Or(_Node):
    left: Formula
    right: Formula
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def _key(self):
        return ("or", self.left, self.right)


@_node
class Implies(_Node):
    left: Formula
    right: Formula
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def _key(self):
        return ("implies", self.left, self.right)


@_node
class Exists(_Node):
    var: str
    body: Formula
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def _key(self):
        return ("exists", self.var, self.body)


@_node
class Forall(_Node):
    var: str
    body: Formula
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def _key(self):
        return ("forall", self.var, self.body)


@_node
class Lfp(_Node):
    """``[lfp rel(vars). body](args)``."""

    rel: str
    vars: tuple[str, ...]
    body: Formula
    args: tuple[str, ...]
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.vars) != len(self.args):
            raise FormulaError(
                f"lfp {self.rel}: {len(self.vars)} bound variables but {len(self.args)} arguments"
            )
        if len(set(self.vars)) != len(self.vars):
            raise FormulaError(f"lfp {self.rel}: repeated bound variable in {self.vars}")
        super().__post_init__()

    def _key(self):
        return ("lfp", self.rel, self.vars, self.body, self.args)


@_node
class Derived(_Node):
    """Atom over a relation computed from the structure by a Python callback.

    ``compute(structure)`` must return a boolean array of shape
    ``(n,) * len(args)``.  Equality and hashing use ``name`` and ``args``
    only, so two Derived atoms with the same name must compute the same
    relation.
    """

    name: str
    args: tuple[str, ...]
    compute: Callable = field(compare=False, repr=False)
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def _key(self):
        return ("derived", self.name, self.args)


Formula = Const | Atom | Eq | Not | And | Or | Implies | Exists | Forall | Lfp | Derived

TRUE = Const(True)
FALSE = Const(False)


# -- construction helpers ---------------------------------------------------


def conj(parts: Iterable[Formula]) -> Formula:
    """Left-nested conjunction; the empty conjunction is ``true``."""
    result: Formula | None = None
    for p in parts:
        result = p if result is None else And(result, p)
    return TRUE if result is None else result


def disj(parts: Iterable[Formula]) -> Formula:
    result: Formula | None = None
    for p in parts:
        result = p if result is None else Or(result, p)
    return FALSE if result is None else result


def exists_many(variables: Iterable[str], body: Formula) -> Formula:
    for v in reversed(list(variables)):
        body = Exists(v, body)
    return body


def forall_many(variables: Iterable[str], body: Formula) -> Formula:
    for v in reversed(list(variables)):
        body = Forall(v, body)
    return body


# -- traversal ----------------------------------------------------------------


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, Not):
        return (f.sub,)
    if isinstance(f, (And, Or, Implies)):
        return (f.left, f.right)
    if isinstance(f, (Exists, Forall, Lfp)):
        return (f.body,)
    return ()


def walk(f: Formula) -> Iterator[Formula]:
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def free_variables(f: Formula) -> list[str]:
    """Free first-order variables in first-occurrence (left to right) order."""
    out: list[str] = []
    seen: set[str] = set()

    def visit_lfp_aware(node: Formula, bound: frozenset[str]) -> None:
        if isinstance(node, Lfp):
            visit_lfp_aware(node.body, bound | frozenset(node.vars))
            for v in node.args:
                if v not in bound and v not in seen:
                    seen.add(v)
                    out.append(v)
            return
        if isinstance(node, (Exists, Forall)):
            visit_lfp_aware(node.body, bound | {node.var})
            return
        if isinstance(node, (Atom, Derived)):
            names: Sequence[str] = node.args
        elif isinstance(node, Eq):
            names = (node.left, node.right)
        else:
            for c in children(node):
                visit_lfp_aware(c, bound)
            return
        for v in names:
            if v not in bound and v not in seen:
                seen.add(v)
                out.append(v)

    visit_lfp_aware(f, frozenset())
    return out


def all_variables(f: Formula) -> set[str]:
    """Every first-order variable name occurring in ``f``, bound or free."""
    names: set[str] = set()
    for node in walk(f):
        if isinstance(node, (Atom, Derived)):
            names.update(node.args)
        elif isinstance(node, Eq):
            names.update((node.left, node.right))
        elif isinstance(node, (Exists, Forall)):
            names.add(node.var)
        elif isinstance(node, Lfp):
            names.update(node.vars)
            names.update(node.args)
    return names


def relation_symbols(f: Formula) -> set[str]:
    """Names used in atom position, including relation variables."""
    return {node.rel for node in walk(f) if isinstance(node, Atom)}


def free_relation_variables(f: Formula, candidates: Iterable[str] | None = None) -> set[str]:
    """Atom names not bound by an enclosing lfp.

    Without ``candidates`` this includes signature relations; pass the set
    of names that are relation variables to filter.
    """
    out: set[str] = set()

    def visit(node: Formula, bound: frozenset[str]) -> None:
        if isinstance(node, Atom):
            if node.rel not in bound:
                out.add(node.rel)
            return
        if isinstance(node, Lfp):
            visit(node.body, bound | {node.rel})
            return
        for c in children(node):
            visit(c, bound)

    visit(f, frozenset())
    if candidates is not None:
        out &= set(candidates)
    return out


def mentions_relation(f: Formula, rel: str) -> bool:
    """True if ``rel`` occurs free (not shadowed by an inner lfp) in ``f``."""
    if isinstance(f, Atom):
        return f.rel == rel
    if isinstance(f, Lfp):
        return f.rel != rel and mentions_relation(f.body, rel)
    return any(mentions_relation(c, rel) for c in children(f))


def contains_lfp(f: Formula) -> bool:
    return any(isinstance(node, Lfp) for node in walk(f))


def size(f: Formula) -> int:
    return sum(1 for _ in walk(f))


# -- polarity -------------------------------------------------------------------


class Polarity(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    MIXED = "mixed"
    ABSENT = "absent"


def polarity(f: Formula, rel: str) -> Polarity:
    """Polarity of the relation variable ``rel`` in ``f``.

    An occurrence is positive when it sits under an even number of flips;
    negation and the antecedent of an implication each count as one flip.
    Occurrences inside an lfp that rebinds ``rel`` are not occurrences.
    """
    found: set[bool] = set()

    def visit(node: Formula, negated: bool) -> None:
        if isinstance(node, Atom):
            if node.rel == rel:
                found.add(negated)
        elif isinstance(node, Not):
            visit(node.sub, not negated)
        elif isinstance(node, Implies):
            visit(node.left, not negated)
            visit(node.right, negated)
        elif isinstance(node, Lfp):
            if node.rel != rel:
                visit(node.body, negated)
        else:
            for c in children(node):
                visit(c, negated)

    visit(f, False)
    if not found:
        return Polarity.ABSENT
    if found == {False}:
        return Polarity.POSITIVE
    if found == {True}:
        return Polarity.NEGATIVE
    return Polarity.MIXED


def check_lfp_positivity(f: Formula) -> None:
    """Raise FormulaError if some lfp node's relation is not positive in its body."""
    for node in walk(f):
        if isinstance(node, Lfp):
            p = polarity(node.body, node.rel)
            if p in (Polarity.NEGATIVE, Polarity.MIXED):
                raise FormulaError(
                    f"relation variable {node.rel} occurs {p.value}ly in its lfp body"
                    if p is Polarity.NEGATIVE
                    else f"relation variable {node.rel} occurs with mixed polarity in its lfp body"
                )


# -- renaming and substitution ------------------------------------------------------


def fresh_name(base: str, avoid: set[str] | frozenset[str]) -> str:
    """Deterministic fresh variant of ``base`` not in ``avoid``."""
    stem = base.rstrip("0123456789") or base
    for i in itertools.count(1):
        candidate = f"{stem}{i}"
        if candidate not in avoid:
            return candidate
    raise AssertionError("unreachable")


def substitute_vars(f: Formula, mapping: Mapping[str, str]) -> Formula:
    """Simultaneous capture-avoiding substitution of first-order variables."""
    mapping = {k: v for k, v in mapping.items() if k != v}
    if not mapping:
        return f
    return _subst(f, dict(mapping))


def _subst(f: Formula, mapping: dict[str, str]) -> Formula:
    if not mapping:
        return f
    if isinstance(f, Const):
        return f
    if isinstance(f, Atom):
        return Atom(f.rel, tuple(mapping.get(a, a) for a in f.args))
    if isinstance(f, Derived):
        return Derived(f.name, tuple(mapping.get(a, a) for a in f.args), f.compute)
    if isinstance(f, Eq):
        return Eq(mapping.get(f.left, f.left), mapping.get(f.right, f.right))
    if isinstance(f, Not):
        return Not(_subst(f.sub, mapping))
    if isinstance(f, (And, Or, Implies)):
        return type(f)(_subst(f.left, mapping), _subst(f.right, mapping))
    if isinstance(f, (Exists, Forall)):
        inner = {k: v for k, v in mapping.items() if k != f.var}
        body_free = set(free_variables(f.body))
        inner = {k: v for k, v in inner.items() if k in body_free}
        if not inner:
            return f
        var = f.var
        if var in inner.values():
            avoid = all_variables(f.body) | set(inner.values()) | set(inner)
            var = fresh_name(f.var, avoid)
            inner[f.var] = var
        return type(f)(var, _subst(f.body, inner))
    if isinstance(f, Lfp):
        args = tuple(mapping.get(a, a) for a in f.args)
        inner = {k: v for k, v in mapping.items() if k not in f.vars}
        body_free = set(free_variables(f.body))
        inner = {k: v for k, v in inner.items() if k in body_free}
        new_vars = list(f.vars)
        if inner:
            taken = set(inner.values())
            avoid = all_variables(f.body) | taken | set(inner)
            for i, v in enumerate(f.vars):
                if v in taken:
                    nv = fresh_name(v, avoid)
                    avoid.add(nv)
                    new_vars[i] = nv
                    inner[v] = nv
        return Lfp(f.rel, tuple(new_vars), _subst(f.body, inner), args)
    raise TypeError(f"not a formula: {f!r}")


def instantiate(g: Formula, params: Sequence[str], args: Sequence[str]) -> Formula:
    """``g`` with its parameter variables replaced by ``args``."""
    if len(params) != len(args):
        raise FormulaError(f"expected {len(params)} arguments, got {len(args)}")
    return substitute_vars(g, dict(zip(params, args)))


def substitute_relation(f: Formula, rel: str, g: Formula, params: Sequence[str]) -> Formula:
    """Replace every free occurrence ``rel(t)`` in ``f`` by ``g[params := t]``.

    Bound variables of ``f`` that would capture a free variable of ``g``
    (other than the parameters) are renamed.
    """
    params = tuple(params)
    if len(set(params)) != len(params):
        raise FormulaError(f"repeated parameter in {params}")
    context = frozenset(v for v in free_variables(g) if v not in params)

    def go(node: Formula) -> Formula:
        if isinstance(node, Atom):
            if node.rel != rel:
                return node
            if len(node.args) != len(params):
                raise FormulaError(
                    f"{rel} used with {len(node.args)} arguments, substitute has {len(params)} parameters"
                )
            return instantiate(g, params, node.args)
        if isinstance(node, (Const, Eq, Derived)):
            return node
        if isinstance(node, Not):
            return Not(go(node.sub))
        if isinstance(node, (And, Or, Implies)):
            return type(node)(go(node.left), go(node.right))
        if isinstance(node, (Exists, Forall)):
            if not mentions_relation(node.body, rel):
                return node
            if node.var in context:
                avoid = all_variables(node.body) | context | set(params) | all_variables(g)
                nv = fresh_name(node.var, avoid)
                return type(node)(nv, go(substitute_vars(node.body, {node.var: nv})))
            return type(node)(node.var, go(node.body))
        if isinstance(node, Lfp):
            if node.rel == rel or not mentions_relation(node.body, rel):
                return node
            clash = [v for v in node.vars if v in context]
            if clash:
                avoid = all_variables(node.body) | context | set(params) | all_variables(g)
                ren: dict[str, str] = {}
                for v in clash:
                    nv = fresh_name(v, avoid)
                    avoid.add(nv)
                    ren[v] = nv
                body = substitute_vars(node.body, ren)
                new_vars = tuple(ren.get(v, v) for v in node.vars)
                return Lfp(node.rel, new_vars, go(body), node.args)
            return Lfp(node.rel, node.vars, go(node.body), node.args)
        raise TypeError(f"not a formula: {node!r}")

    return go(f)


def rename_relation(f: Formula, old: str, new: str) -> Formula:
    """Rename free occurrences of relation symbol ``old`` to ``new``."""
    return _rename_rel(f, old, new)


def _rename_rel(f: Formula, old: str, new: str) -> Formula:
    if isinstance(f, Atom):
        return Atom(new, f.args) if f.rel == old else f
    if isinstance(f, (Const, Eq, Derived)):
        return f
    if isinstance(f, Not):
        return Not(_rename_rel(f.sub, old, new))
    if isinstance(f, (And, Or, Implies)):
        return type(f)(_rename_rel(f.left, old, new), _rename_rel(f.right, old, new))
    if isinstance(f, (Exists, Forall)):
        return type(f)(f.var, _rename_rel(f.body, old, new))
    if isinstance(f, Lfp):
        if f.rel == old:
            return f
        return Lfp(f.rel, f.vars, _rename_rel(f.body, old, new), f.args)
    raise TypeError(f"not a formula: {f!r}")


def desugar_implications(f: Formula) -> Formula:
    """Rewrite every ``a -> b`` as ``!a | b``."""
    if isinstance(f, Implies):
        return Or(Not(desugar_implications(f.left)), desugar_implications(f.right))
    if isinstance(f, Not):
        return Not(desugar_implications(f.sub))
    if isinstance(f, (And, Or)):
        return type(f)(desugar_implications(f.left), desugar_implications(f.right))
    if isinstance(f, (Exists, Forall)):
        return type(f)(f.var, desugar_implications(f.body))
    if isinstance(f, Lfp):
        return Lfp(f.rel, f.vars, desugar_implications(f.body), f.args)
    return f


def standardize_apart(f: Formula, prefix: str = "_v", intern: dict | None = None) -> Formula:
    """Rename bound first-order variables so that no binder shadows another.

    Free variables keep their names.  A binder's new name depends only on
    its binder height (the nesting depth of binders below it), so equal
    subtrees come out equal and evaluation caches can share them.  Names
    contain ``#`` and so never clash with parsed identifiers.  Passing the
    same ``intern`` dict across calls makes equal results identical objects.
    """
    pool: dict = {} if intern is None else intern
    heights: dict[Formula, int] = {}

    def height(node: Formula) -> int:
        h = heights.get(node)
        if h is None:
            h = max((height(c) for c in children(node)), default=0)
            if isinstance(node, (Exists, Forall, Lfp)):
                h += 1
            heights[node] = h
        return h

    def share(node: Formula) -> Formula:
        return pool.setdefault(node, node)

    def go(node: Formula, ren: dict[str, str]) -> Formula:
        if isinstance(node, Const):
            return share(node)
        if isinstance(node, Atom):
            return share(Atom(node.rel, tuple(ren.get(a, a) for a in node.args)))
        if isinstance(node, Derived):
            return share(Derived(node.name, tuple(ren.get(a, a) for a in node.args), node.compute))
        if isinstance(node, Eq):
            return share(Eq(ren.get(node.left, node.left), ren.get(node.right, node.right)))
        if isinstance(node, Not):
            return share(Not(go(node.sub, ren)))
        if isinstance(node, (And, Or, Implies)):
            return share(type(node)(go(node.left, ren), go(node.right, ren)))
        if isinstance(node, (Exists, Forall)):
            nv = f"{prefix}{height(node)}#0"
            return share(type(node)(nv, go(node.body, {**ren, node.var: nv})))
        if isinstance(node, Lfp):
            h = height(node)
            new_vars = tuple(f"{prefix}{h}#{i}" for i in range(len(node.vars)))
            inner = {**ren, **dict(zip(node.vars, new_vars))}
            args = tuple(ren.get(a, a) for a in node.args)
            return share(Lfp(node.rel, new_vars, go(node.body, inner), args))
        raise TypeError(f"not a formula: {node!r}")

    return go(f, {})


def alpha_normal(f: Formula) -> Formula:
    """Canonical representative of the alpha-equivalence class of ``f``.

    Bound first-order and relation variables are renamed by binding depth
    to names outside the identifier grammar, so two formulas differing only
    in bound names normalize to equal values.
    """

    def go(node: Formula, ren: dict[str, str], rren: dict[str, str], depth: int) -> Formula:
        if isinstance(node, Const):
            return node
        if isinstance(node, Atom):
            return Atom(rren.get(node.rel, node.rel), tuple(ren.get(a, a) for a in node.args))
        if isinstance(node, Derived):
            return Derived(node.name, tuple(ren.get(a, a) for a in node.args), node.compute)
        if isinstance(node, Eq):
            return Eq(ren.get(node.left, node.left), ren.get(node.right, node.right))
        if isinstance(node, Not):
            return Not(go(node.sub, ren, rren, depth))
        if isinstance(node, (And, Or, Implies)):
            return type(node)(go(node.left, ren, rren, depth), go(node.right, ren, rren, depth))
        if isinstance(node, (Exists, Forall)):
            nv = f"%{depth}"
            return type(node)(nv, go(node.body, {**ren, node.var: nv}, rren, depth + 1))
        if isinstance(node, Lfp):
            new_vars = tuple(f"%{depth + i}" for i in range(len(node.vars)))
            rel = f"%R{depth}"
            inner = {**ren, **dict(zip(node.vars, new_vars))}
            body = go(node.body, inner, {**rren, node.rel: rel}, depth + len(new_vars))
            return Lfp(rel, new_vars, body, tuple(ren.get(a, a) for a in node.args))
        raise TypeError(f"not a formula: {node!r}")

    return go(f, {}, {}, 0)


# -- partitioned formulas -----------------------------------------------------------


@dataclass(frozen=True)
class PartitionedFormula:
    """A formula with a declared split ``phi(x; y)`` of its variables.

    The x-part and y-part are disjoint and together cover every free
    variable.  Variables listed in a part need not occur free (the formula
    is then constant along that coordinate).
    """

    formula: Formula
    x: tuple[str, ...]
    y: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "y", tuple(self.y))
        if set(self.x) & set(self.y):
            raise FormulaError(f"x-part {self.x} and y-part {self.y} overlap")
        if len(set(self.x)) != len(self.x) or len(set(self.y)) != len(self.y):
            raise FormulaError("repeated variable in partition")
        missing = [v for v in free_variables(self.formula) if v not in self.x and v not in self.y]
        if missing:
            raise FormulaError(f"free variables {missing} not covered by the partition")

    @classmethod
    def default(cls, formula: Formula, x_arity: int = 1) -> PartitionedFormula:
        """First ``x_arity`` free variables form x; the rest form y."""
        fv = free_variables(formula)
        return cls(formula, tuple(fv[:x_arity]), tuple(fv[x_arity:]))

    def transpose(self) -> PartitionedFormula:
        return PartitionedFormula(self.formula, self.y, self.x)

    def instance(self, xs: Sequence[str], ys: Sequence[str]) -> Formula:
        """The formula with x renamed to ``xs`` and y renamed to ``ys``."""
        return substitute_vars(self.formula, {**dict(zip(self.x, xs)), **dict(zip(self.y, ys))})

    def __str__(self) -> str:
        return f"{self.formula}  ; x={','.join(self.x)} ; y={','.join(self.y)}"

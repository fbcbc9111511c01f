"""Formula transformers relating fixed points, preorders and chains.

* :func:`containment_preorder` turns ``phi(x; y)`` into the preorder
  comparing the sets ``phi(M^x; b)`` by inclusion.
* :func:`height_formula` turns a preorder into an lfp body whose k-th stage
  is the set of elements of height below k.
* :func:`stage_preorder_formula` is the stage comparison of an lfp body,
  evaluated semantically.
* :func:`sop_from_chain` reads an sOP certificate off a strict chain.
* :func:`interpret` and :func:`relativize` move formulas between structures.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dividing import PropertyCertificate, PropertyKind
from .evaluator import Evaluator, EvaluationError, lfp_stages
from .formula import (
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
    PartitionedFormula,
    Polarity,
    all_variables,
    conj,
    forall_many,
    free_variables,
    fresh_name,
    polarity,
    relation_symbols,
)
from .render import render
from .structures import FiniteStructure


@dataclass(frozen=True)
class PreorderFormula:
    """``lambda(y1; y2)`` with blocks of equal length, tagged partial or linear."""

    phi: PartitionedFormula
    linear: bool = False

    def __post_init__(self) -> None:
        if len(self.phi.x) != len(self.phi.y):
            raise FormulaError("a preorder formula needs blocks of equal length")

    @property
    def arity(self) -> int:
        return len(self.phi.x)

    def instance(self, left: Sequence[str], right: Sequence[str]) -> Formula:
        return self.phi.instance(left, right)

    def relation(self, structure: FiniteStructure, evaluator: Evaluator | None = None) -> np.ndarray:
        """Boolean matrix over ``M^k x M^k`` in row-major tuple order."""
        ev = evaluator or Evaluator(structure)
        arr = np.asarray(ev.array(self.phi.formula, self.phi.x + self.phi.y))
        side = structure.size**self.arity
        return arr.reshape(side, side)


@dataclass(frozen=True)
class FixpointBody:
    """An lfp body together with its relation variable and tuple of variables."""

    body: Formula
    rel: str
    vars: tuple[str, ...]

    def applied(self, args: Sequence[str] | None = None) -> Lfp:
        return Lfp(self.rel, self.vars, self.body, tuple(args) if args is not None else self.vars)


def _block(base: Sequence[str], suffix: str, avoid: set[str]) -> tuple[str, ...]:
    out = []
    for v in base:
        name = f"{v}{suffix}"
        if name in avoid:
            name = fresh_name(name, avoid)
        avoid.add(name)
        out.append(name)
    return tuple(out)


def containment_preorder(phi: PartitionedFormula) -> PreorderFormula:
    """``psi(y1; y2) = A x. (phi(x; y1) -> phi(x; y2))``."""
    avoid = set(all_variables(phi.formula)) | set(phi.x) | set(phi.y)
    y1 = _block(phi.y, "1", avoid)
    y2 = _block(phi.y, "2", avoid)
    body = Implies(phi.instance(phi.x, y1), phi.instance(phi.x, y2))
    return PreorderFormula(PartitionedFormula(forall_many(phi.x, body), y1, y2), linear=False)


def height_formula(lam: PreorderFormula, rel: str = "T") -> FixpointBody:
    """Body putting ``y`` into ``rel`` once all strict predecessors of ``y`` are there."""
    taken = relation_symbols(lam.phi.formula)
    if rel in taken:
        rel = fresh_name(rel, taken)
    avoid = set(all_variables(lam.phi.formula)) | set(lam.phi.x) | set(lam.phi.y)
    k = lam.arity
    ys = _block(["y"] if k == 1 else [f"y{i}" for i in range(1, k + 1)], "", avoid)
    yp = _block([f"{v}'" for v in ys], "", avoid)
    strict = And(lam.instance(yp, ys), Not(lam.instance(ys, yp)))
    body = forall_many(yp, Implies(strict, Atom(rel, yp)))
    return FixpointBody(body, rel, ys)


def stage_preorder_formula(body: Formula, rel: str, xvars: Sequence[str]) -> PreorderFormula:
    """Stage comparison of ``body`` as a linear preorder formula.

    Tuples outside the fixed point join the class of the last stage, so the
    preorder is total on ``M^k`` with exactly ``closure`` classes (one class
    when the fixed point is empty).  The formula is a derived atom computed
    from the stage table of each structure it is evaluated on.
    """
    xvars = tuple(xvars)
    if polarity(body, rel) in (Polarity.NEGATIVE, Polarity.MIXED):
        raise EvaluationError(f"{rel} is not positive in the lfp body")
    extra = [v for v in free_variables(body) if v not in xvars]
    if extra:
        raise FormulaError(f"body has free variables {extra} outside the lfp tuple")
    k = len(xvars)
    digest = hashlib.sha1(f"{render(body)}|{rel}|{','.join(xvars)}".encode()).hexdigest()[:12]
    name = f"stage_le_{digest}"

    def compute(structure: FiniteStructure) -> np.ndarray:
        st = lfp_stages(body, rel, xvars, structure)
        rank = np.where(st.stage_array > 0, st.stage_array, st.closure)
        return np.less_equal.outer(rank, rank)

    if k == 1:
        y1, y2 = ("y1",), ("y2",)
    else:
        y1 = tuple(f"y1_{i}" for i in range(1, k + 1))
        y2 = tuple(f"y2_{i}" for i in range(1, k + 1))
    atom = Derived(name, y1 + y2, compute)
    return PreorderFormula(PartitionedFormula(atom, y1, y2), linear=True)


def longest_strict_chain(
    lam: PreorderFormula, structure: FiniteStructure, evaluator: Evaluator | None = None
) -> list[tuple[int, ...]]:
    """A longest chain ``b_1 < ... < b_n`` in the strict part of ``lam``.

    Ties are broken toward smaller tuples (row-major order) at each step.
    """
    rel = lam.relation(structure, evaluator)
    strict = rel & ~rel.T
    side = rel.shape[0]
    # strict part of a preorder is acyclic; process by number of strict predecessors
    order = sorted(range(side), key=lambda i: (int(strict[:, i].sum()), i))
    longest = [1] * side
    nxt: list[int | None] = [None] * side
    for i in reversed(order):
        for j in np.nonzero(strict[i])[0]:
            j = int(j)
            if longest[j] + 1 > longest[i]:
                longest[i] = longest[j] + 1
                nxt[i] = j
    start = max(range(side), key=lambda i: (longest[i], -i))
    chain = []
    cur: int | None = start
    while cur is not None:
        chain.append(cur)
        cur = nxt[cur]
    shape = (structure.size,) * lam.arity
    return [tuple(int(v) for v in np.unravel_index(i, shape)) for i in chain]


def sop_from_chain(
    lam: PreorderFormula, chain: Sequence[Sequence[int]], structure: FiniteStructure
) -> PropertyCertificate:
    """sOP certificate for ``lam`` itself from a strict chain: downsets grow strictly."""
    chain = [tuple(int(v) for v in t) for t in chain]
    return PropertyCertificate(
        PropertyKind.SOP,
        len(chain),
        structure.name,
        render(lam.phi.formula),
        lam.phi.x,
        lam.phi.y,
        {"b": chain},
    )


# -- interpretation -----------------------------------------------------------------------------


def interpret(phi: PartitionedFormula, lam: PreorderFormula) -> PartitionedFormula:
    """Replace each variable by a block of ``lam.arity`` copies.

    ``v < w`` becomes the strict part of ``lam`` and ``v = w`` becomes
    ``lam``-equivalence.  Relation variables bound by lfp keep their names
    with arities multiplied by the block length.
    """
    k = lam.arity
    names = set(all_variables(phi.formula)) | set(phi.x) | set(phi.y)

    def expand(v: str) -> tuple[str, ...]:
        if k == 1:
            return (v,)
        return tuple(f"{v}_{i}" for i in range(1, k + 1))

    if k > 1:
        expanded = [e for v in sorted(names) for e in expand(v)]
        if len(set(expanded)) != len(expanded) or set(expanded) & names:
            raise FormulaError("variable names collide after expansion; rename variables first")

    def blocks(vs: Sequence[str]) -> tuple[str, ...]:
        return tuple(e for v in vs for e in expand(v))

    def go(f: Formula, relvars: frozenset[str]) -> Formula:
        if isinstance(f, Const):
            return f
        if isinstance(f, Atom):
            if f.rel in relvars:
                return Atom(f.rel, blocks(f.args))
            if f.rel == "<" and len(f.args) == 2:
                v, w = expand(f.args[0]), expand(f.args[1])
                return And(lam.instance(v, w), Not(lam.instance(w, v)))
            raise FormulaError(f"interpret expects a formula over <, found relation {f.rel}")
        if isinstance(f, Eq):
            v, w = expand(f.left), expand(f.right)
            if v == w:
                return Const(True)
            return And(lam.instance(v, w), lam.instance(w, v))
        if isinstance(f, Not):
            return Not(go(f.sub, relvars))
        if isinstance(f, (And, Or, Implies)):
            return type(f)(go(f.left, relvars), go(f.right, relvars))
        if isinstance(f, (Exists, Forall)):
            out = go(f.body, relvars)
            for v in reversed(expand(f.var)):
                out = type(f)(v, out)
            return out
        if isinstance(f, Lfp):
            return Lfp(f.rel, blocks(f.vars), go(f.body, relvars | {f.rel}), blocks(f.args))
        raise FormulaError(f"interpret cannot translate {type(f).__name__}")

    return PartitionedFormula(go(phi.formula, frozenset()), blocks(phi.x), blocks(phi.y))


# -- relativization ----------------------------------------------------------------------------


def relativize(f: Formula, marker: str) -> Formula:
    """Bound every quantifier and guard every free variable by ``marker``."""

    def go(node: Formula) -> Formula:
        if isinstance(node, (Const, Atom, Eq, Derived)):
            return node
        if isinstance(node, Not):
            return Not(go(node.sub))
        if isinstance(node, (And, Or, Implies)):
            return type(node)(go(node.left), go(node.right))
        if isinstance(node, Exists):
            return Exists(node.var, And(Atom(marker, (node.var,)), go(node.body)))
        if isinstance(node, Forall):
            return Forall(node.var, Implies(Atom(marker, (node.var,)), go(node.body)))
        if isinstance(node, Lfp):
            guard = conj(Atom(marker, (v,)) for v in node.vars)
            return Lfp(node.rel, node.vars, And(guard, go(node.body)), node.args)
        raise TypeError(f"not a formula: {node!r}")

    inner = go(f)
    fv = free_variables(f)
    if not fv:
        return inner
    return And(conj(Atom(marker, (v,)) for v in fv), inner)


def relativize_partitioned(phi: PartitionedFormula, marker: str) -> PartitionedFormula:
    return PartitionedFormula(relativize(phi.formula, marker), phi.x, phi.y)

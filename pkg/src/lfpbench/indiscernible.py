"""Indiscernible subsequences and the OP-to-IP derivation pipeline.

Given an OP witness for ``phi(x; y)``, :func:`derive_ip_witness` extracts a
subsequence of the parameters that is indiscernible for the formulas
``E x. phi_eta(x; y_1, ..., y_k)``, spaces out ``k`` of them as ``c_i``,
and looks for ``d``'s realizing every pattern ``eta``.  Success gives an IP(k)
certificate for the transposed formula ``phi(y; x)``.  A pattern that is not
realized points at a chain in a subformula of ``phi_eta``, which the
diagnostic tries to exhibit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Sequence

from .dividing import (
    Budget,
    CertificateError,
    PropertyCertificate,
    PropertyKind,
    SetSystem,
    verify_witness,
)
from .evaluator import Evaluator
from .formula import Formula, Not, PartitionedFormula, all_variables, conj, exists_many, fresh_name
from .render import render
from .structures import FiniteStructure

Tuple = tuple[int, ...]


def eta_blocks(phi: PartitionedFormula, k: int) -> list[tuple[str, ...]]:
    """Names of the ``k`` parameter blocks used by :func:`build_phi_eta`."""
    avoid = set(all_variables(phi.formula)) | set(phi.x) | set(phi.y)
    blocks = []
    for i in range(1, k + 1):
        block = []
        for v in phi.y:
            name = f"{v}{i}"
            if name in avoid:
                name = fresh_name(name, avoid)
            avoid.add(name)
            block.append(name)
        blocks.append(tuple(block))
    return blocks


def build_phi_eta(phi: PartitionedFormula, eta: Sequence[int], k: int) -> Formula:
    """``phi(x; y_i)`` for ``i`` in ``eta`` and its negation for the other ``i <= k``.

    ``eta`` is a subset of ``{1, ..., k}``; the x-part keeps its names.
    """
    eta = set(eta)
    if k < 1:
        raise ValueError("k must be at least 1")
    if not eta <= set(range(1, k + 1)):
        raise ValueError(f"eta {sorted(eta)} is not a subset of 1..{k}")
    blocks = eta_blocks(phi, k)
    parts = []
    for i, block in enumerate(blocks, start=1):
        atom = phi.instance(phi.x, block)
        parts.append(atom if i in eta else Not(atom))
    return conj(parts)


def delta_k(phi: PartitionedFormula, k: int) -> list[tuple[tuple[int, ...], Formula]]:
    """``(eta, E x. phi_eta)`` for every ``eta`` subset of ``1..k`` in bitmask order."""
    out = []
    for mask in range(2**k):
        eta = tuple(i + 1 for i in range(k) if mask >> i & 1)
        out.append((eta, exists_many(phi.x, build_phi_eta(phi, eta, k))))
    return out


@dataclass(frozen=True)
class Indiscernible:
    positions: tuple[int, ...]
    elements: tuple[Tuple, ...]
    color: tuple[bool, ...]


def extract_indiscernible(
    structure: FiniteStructure,
    delta: Sequence[Formula],
    blocks: Sequence[Sequence[str]],
    seq: Sequence[Sequence[int] | int],
    length: int,
    budget: Budget | None = None,
    evaluator: Evaluator | None = None,
) -> Indiscernible | None:
    """Lexicographically first length-``length`` subsequence of ``seq`` that is indiscernible.

    ``delta`` formulas take their arguments from ``blocks`` (``k`` blocks,
    each as long as one element of ``seq``).  Every increasing
    ``k``-subsequence of the result gets the same truth values.  None means
    the search was exhaustive; the budget raises
    :class:`~lfpbench.dividing.BudgetExhausted`.
    """
    elems = [tuple(e) if isinstance(e, (tuple, list)) else (int(e),) for e in seq]
    k = len(blocks)
    if length > len(elems):
        raise ValueError(f"target length {length} exceeds the sequence length {len(elems)}")
    if any(len(b) != len(elems[0]) for b in blocks) if elems else False:
        raise ValueError("block width does not match the sequence elements")
    ev = evaluator or Evaluator(structure)
    budget = (budget or Budget()).start()
    colors: dict[tuple[int, ...], tuple[bool, ...]] = {}

    def color(idx: tuple[int, ...]) -> tuple[bool, ...]:
        c = colors.get(idx)
        if c is None:
            val = {}
            for block, i in zip(blocks, idx):
                val.update(zip(block, elems[i]))
            c = tuple(ev.holds(d, val) for d in delta)
            colors[idx] = c
        return c

    if length < k:
        return Indiscernible(tuple(range(length)), tuple(elems[:length]), ())
    chosen: list[int] = []
    ref: list[tuple[bool, ...] | None] = [None]

    def consistent(new: int) -> bool:
        if len(chosen) + 1 < k:
            return True
        for combo in itertools.combinations(chosen, k - 1):
            c = color(combo + (new,))
            if ref[0] is None:
                ref[0] = c
            elif c != ref[0]:
                return False
        return True

    def search(start: int) -> bool:
        if len(chosen) == length:
            return True
        # not enough elements left
        for i in range(start, len(elems) - (length - len(chosen)) + 1):
            budget.tick()
            had_ref = ref[0]
            if consistent(i):
                chosen.append(i)
                if search(i + 1):
                    return True
                chosen.pop()
            ref[0] = had_ref
        return False

    if not search(0):
        return None
    first = tuple(chosen[:k])
    return Indiscernible(tuple(chosen), tuple(elems[i] for i in chosen), color(first))


def is_indiscernible(
    structure: FiniteStructure,
    delta: Sequence[Formula],
    blocks: Sequence[Sequence[str]],
    elements: Sequence[Sequence[int]],
) -> bool:
    """Exhaustive check over all increasing ``k``-subsequences."""
    ev = Evaluator(structure)
    seen = None
    for combo in itertools.combinations(range(len(elements)), len(blocks)):
        val = {}
        for block, i in zip(blocks, combo):
            val.update(zip(block, elements[i]))
        c = tuple(ev.holds(d, val) for d in delta)
        if seen is None:
            seen = c
        elif c != seen:
            return False
    return True


# -- derivation pipeline ------------------------------------------------------------------------


class InsufficientWitness(ValueError):
    pass


@dataclass
class DerivationDiagnostic:
    """Why the pipeline stopped short of an IP certificate.

    ``stage`` is ``extraction`` when no indiscernible subsequence of length
    ``kN`` exists inside the OP parameters, or ``selection`` when some
    pattern has no realizing ``d``.  For selection failures ``chain``
    records the candidate chain formula and its sets along the shifted
    parameter tuples.
    """

    stage: str
    k: int
    N: int
    positions: tuple[int, ...] = ()
    c: tuple[Tuple, ...] = ()
    selected: dict[tuple[int, ...], Tuple] = field(default_factory=dict)
    failed: list[tuple[int, ...]] = field(default_factory=list)
    chain: dict[str, Any] | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "k": self.k,
            "N": self.N,
            "positions": list(self.positions),
            "c": [list(t) for t in self.c],
            "selected": [{"eta": list(e), "d": list(d)} for e, d in sorted(self.selected.items())],
            "failed": [list(e) for e in self.failed],
            "chain": self.chain,
        }


def _pattern_sets(system: SetSystem, cs: Sequence[Tuple]) -> list[int]:
    return [system.sets[system.y_index(c)] for c in cs]


def _realize(system: SetSystem, sets: list[int], eta: set[int]) -> int:
    bits = system.full
    for i, s in enumerate(sets):
        bits &= s if i in eta else ~s
    return bits


def derive_ip_witness(
    phi: PartitionedFormula,
    structure: FiniteStructure,
    k: int,
    N: int,
    op_witness: PropertyCertificate,
    budget: Budget | None = None,
) -> PropertyCertificate | DerivationDiagnostic:
    """IP(k) certificate for ``phi(y; x)`` built from an OP certificate, or a diagnostic.

    Patterns ``eta`` are subsets of ``{1..k}`` (1-indexed, matching
    :func:`build_phi_eta`); ``c_i`` is the ``((i-1)N)``-th element of the
    extracted subsequence.
    """
    if k < 1 or N < 1:
        raise ValueError("k and N must be positive")
    if op_witness.kind is not PropertyKind.OP:
        raise CertificateError("expected an OP certificate")
    if not verify_witness(op_witness, phi, structure):
        raise CertificateError("the OP certificate does not verify")
    if op_witness.n < k * N:
        raise InsufficientWitness(f"OP({op_witness.n}) is shorter than k*N = {k * N}")

    bs = [tuple(t) for t in op_witness.payload["b"]]
    deltas = delta_k(phi, k)
    blocks = eta_blocks(phi, k)
    found = extract_indiscernible(structure, [d for _, d in deltas], blocks, bs, k * N, budget)
    if found is None:
        return DerivationDiagnostic("extraction", k, N)
    sub = found.elements
    cs = tuple(sub[i * N] for i in range(k))

    system = SetSystem(phi, structure)
    sets = _pattern_sets(system, cs)
    selected: dict[tuple[int, ...], Tuple] = {}
    failed: list[tuple[int, ...]] = []
    for mask in range(2**k):
        eta = {i for i in range(k) if mask >> i & 1}
        bits = _realize(system, sets, eta)
        key = tuple(sorted(i + 1 for i in eta))
        if bits:
            selected[key] = system.x_tuple((bits & -bits).bit_length() - 1)
        else:
            failed.append(key)

    if not failed:
        t = phi.transpose()
        b = []
        for mask in range(2**k):
            key = tuple(i + 1 for i in range(k) if mask >> i & 1)
            b.append(selected[key])
        return PropertyCertificate(
            PropertyKind.IP, k, structure.name, render(phi.formula), t.x, t.y, {"a": list(cs), "b": b}
        )

    diag = DerivationDiagnostic("selection", k, N, found.positions, cs, selected, failed)
    diag.chain = _exhibit_chain(phi, system, sub, cs, k, N, selected, failed)
    return diag


def _shift(cs: Sequence[Tuple], sub: Sequence[Tuple], j: int, n: int, N: int) -> list[Tuple]:
    """``c`` with the pair at ``(j, j+1)`` replaced by ``(b_(jN+n), b_(jN+n+1))``."""
    shifted = list(cs)
    shifted[j] = sub[j * N + n]
    shifted[j + 1] = sub[j * N + n + 1]
    return shifted


def _exhibit_chain(phi, system, sub, cs, k, N, selected, failed) -> dict[str, Any] | None:
    """Find adjacent patterns (one selected, one not) and evaluate the chain they force."""
    blocks = eta_blocks(phi, k)
    for bad in failed:
        bad0 = {i - 1 for i in bad}
        for j in range(k - 1):
            good0 = bad0 ^ {j, j + 1}
            good = tuple(sorted(i + 1 for i in good0))
            if good not in selected or j not in bad0 or j + 1 not in good0:
                continue
            agree = [i for i in range(k) if i not in (j, j + 1)]
            # psi = phi_(eta & eta') & phi(x; y_j), evaluated along the shifted tuples
            tuples = [_shift(cs, sub, j, n, N) for n in range(N)]
            chain_sets = []
            for shifted in tuples:
                ss = _pattern_sets(system, shifted)
                bits = ss[j]
                for i in agree:
                    bits &= ss[i] if i in good0 else system.full & ~ss[i]
                chain_sets.append(bits)
            strict = all(
                chain_sets[i] & ~chain_sets[i + 1] == 0 and chain_sets[i] != chain_sets[i + 1]
                for i in range(N - 1)
            )
            parts = []
            for i in agree:
                atom = phi.instance(phi.x, blocks[i])
                parts.append(atom if i in good0 else Not(atom))
            parts.append(phi.instance(phi.x, blocks[j]))
            return {
                "eta_selected": list(good),
                "eta_failed": list(bad),
                "j": j + 1,
                "psi": render(conj(parts)),
                "tuples": [[list(t) for t in shifted] for shifted in tuples],
                "sets": [[list(system.x_tuple(i)) for i in range(system.nx) if b >> i & 1] for b in chain_sets],
                "strict_chain": bool(strict),
            }
    return None

"""Finite instances of OP, sOP, IP and TP2: detection, verification and sentences.

Parameter tuples are enumerated in row-major numeric order, which is also
the tie-breaking order for witnesses.  For a partitioned formula
``phi(x; y)`` the set ``phi(M^x; b)`` of each parameter tuple ``b`` is
precomputed as a Python integer bitset over x-tuples; the searches only
touch one representative (the least ``b``) per distinct set, which never
changes the lexicographically least answer.

IP subsets are encoded as integers: ``J`` corresponds to index
``1 + sum(2^(i-1) for i in J)``, so ``b[j-1]`` in a payload is ``b_J``.
TP2 paths ``f`` are listed in product order of ``(f(1), ..., f(n))``.
"""

from __future__ import annotations

import enum
import itertools
import json
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .evaluator import Evaluator
from .formula import (
    Formula,
    Not,
    PartitionedFormula,
    all_variables,
    conj,
    exists_many,
    forall_many,
    fresh_name,
    Implies,
)
from .render import render
from .structures import FiniteStructure

Tuple = tuple[int, ...]


class PropertyKind(str, enum.Enum):
    OP = "OP"
    SOP = "sOP"
    IP = "IP"
    TP2 = "TP2"

    @classmethod
    def parse(cls, text: str) -> PropertyKind:
        for k in cls:
            if k.value.lower() == text.strip().lower():
                return k
        raise ValueError(f"unknown property kind {text!r}; expected one of OP, sOP, IP, TP2")


class CertificateError(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    """Search stopped by its budget; says nothing about whether a witness exists."""

    def __init__(self, reason: str, nodes: int, elapsed_ms: float):
        self.reason = reason
        self.nodes = nodes
        self.elapsed_ms = elapsed_ms
        super().__init__(f"budget exhausted ({reason}) after {nodes} nodes, {elapsed_ms:.0f} ms")


@dataclass
class Budget:
    """Wall-clock and node limits for one search; ``None`` means unlimited."""

    ms: float | None = None
    nodes: int | None = None
    used: int = field(default=0, init=False)
    _start: float = field(default=0.0, init=False, repr=False)

    def start(self) -> Budget:
        self.used = 0
        self._start = time.perf_counter()
        return self

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self._start) * 1000.0

    def tick(self, k: int = 1) -> None:
        self.used += k
        if self.nodes is not None and self.used > self.nodes:
            raise BudgetExhausted("node limit", self.used, self.elapsed_ms())
        # clock checks are cheap but not free
        if self.ms is not None and self.used % 256 == 0 and self.elapsed_ms() > self.ms:
            raise BudgetExhausted("time limit", self.used, self.elapsed_ms())

    def fresh(self) -> Budget:
        return Budget(self.ms, self.nodes)


@dataclass(frozen=True)
class PropertyCertificate:
    kind: PropertyKind
    n: int
    structure: str
    formula: str
    x: tuple[str, ...]
    y: tuple[str, ...]
    payload: dict[str, Any]

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "n": self.n,
            "structure": self.structure,
            "formula": self.formula,
            "x": list(self.x),
            "y": list(self.y),
            "payload": _jsonable(self.payload),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, data: dict[str, Any] | str) -> PropertyCertificate:
        if isinstance(data, str):
            data = json.loads(data)
        try:
            kind = PropertyKind.parse(data["kind"])
            payload = _tupled(kind, data["payload"])
            return cls(
                kind,
                int(data["n"]),
                str(data.get("structure", "")),
                str(data.get("formula", "")),
                tuple(data.get("x", ())),
                tuple(data.get("y", ())),
                payload,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CertificateError(f"malformed certificate: {exc}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _tupled(kind: PropertyKind, payload: dict) -> dict:
    def tuples(xs):
        return [tuple(int(v) for v in t) for t in xs]

    out = {}
    for key, value in payload.items():
        if kind is PropertyKind.TP2 and key == "b":
            out[key] = [tuples(row) for row in value]
        else:
            out[key] = tuples(value)
    return out


# -- set systems --------------------------------------------------------------------------


def _bits(col: np.ndarray) -> int:
    return int.from_bytes(np.packbits(col, bitorder="little").tobytes(), "little")


def _lowest(bits: int) -> int:
    return (bits & -bits).bit_length() - 1


class SetSystem:
    """The sets ``phi(M^x; b)`` for all ``b`` in ``M^y``, as bitsets."""

    def __init__(self, phi: PartitionedFormula, structure: FiniteStructure, evaluator: Evaluator | None = None):
        self.phi = phi
        self.structure = structure
        n = structure.size
        ev = evaluator or Evaluator(structure)
        arr = np.asarray(ev.array(phi.formula, phi.x + phi.y))
        self.nx = n ** len(phi.x)
        self.ny = n ** len(phi.y)
        self.matrix = arr.reshape(self.nx, self.ny)
        self.full = (1 << self.nx) - 1
        self.sets = [_bits(self.matrix[:, j]) for j in range(self.ny)]
        first: dict[int, int] = {}
        for j, s in enumerate(self.sets):
            first.setdefault(s, j)
        # canonical representatives in increasing index order
        self.reps = sorted(first.values())
        self._n = n

    def x_tuple(self, i: int) -> Tuple:
        return tuple(int(v) for v in np.unravel_index(i, (self._n,) * len(self.phi.x))) if self.phi.x else ()

    def y_tuple(self, j: int) -> Tuple:
        return tuple(int(v) for v in np.unravel_index(j, (self._n,) * len(self.phi.y))) if self.phi.y else ()

    def x_index(self, t: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(t), (self._n,) * len(t))) if len(t) else 0

    def y_index(self, t: Sequence[int]) -> int:
        return self.x_index(t)

    @property
    def distinct(self) -> int:
        return len(self.reps)


def size_bound_allows(kind: PropertyKind, n: int, system: SetSystem) -> bool:
    """False when ``n`` exceeds a counting bound, so no witness can exist."""
    nx, d = system.nx, system.distinct
    if kind is PropertyKind.OP:
        return n <= nx and n <= d
    if kind is PropertyKind.SOP:
        return n <= nx + 1 and n <= d
    if kind is PropertyKind.IP:
        return n <= nx and 2**n <= d
    return n**n <= nx and n <= d


# -- detection -------------------------------------------------------------------------------


def detect(
    kind: PropertyKind | str,
    phi: PartitionedFormula,
    structure: FiniteStructure,
    n: int,
    budget: Budget | None = None,
    system: SetSystem | None = None,
) -> PropertyCertificate | None:
    """Lexicographically least ``kind(n)`` witness for ``phi`` in ``structure``.

    Returns None only after an exhaustive search (or when a counting bound
    rules ``n`` out); raises :class:`BudgetExhausted` if the budget runs out.
    """
    kind = PropertyKind.parse(kind) if isinstance(kind, str) else kind
    if n < 1:
        raise ValueError("n must be at least 1")
    system = system or SetSystem(phi, structure)
    if not size_bound_allows(kind, n, system):
        return None
    budget = (budget or Budget()).start()
    search = {
        PropertyKind.OP: _search_op,
        PropertyKind.SOP: _search_sop,
        PropertyKind.IP: _search_ip,
        PropertyKind.TP2: _search_tp2,
    }[kind]
    payload = search(system, n, budget)
    if payload is None:
        return None
    return PropertyCertificate(kind, n, structure.name, render(phi.formula), phi.x, phi.y, payload)


def _search_op(sys: SetSystem, n: int, budget: Budget) -> dict | None:
    reps = sys.reps
    full = sys.full
    chosen: list[int] = []

    # cand[i] = x-tuples still admissible as a_(i+1) given the chosen b prefix
    def extend(cands: list[int], union: int) -> list[int] | None:
        depth = len(chosen)
        if depth == n:
            return cands
        for j in reps:
            budget.tick()
            s = sys.sets[j]
            if j in chosen:
                continue
            new = [c & s for c in cands]
            new_union = union | s
            new.append(full & ~new_union)
            if any(c == 0 for c in new):
                continue
            chosen.append(j)
            out = extend(new, new_union)
            if out is not None:
                return out
            chosen.pop()
        return None

    cands = extend([], 0)
    if cands is None:
        return None
    a = [sys.x_tuple(_lowest(c)) for c in cands]
    b = [sys.y_tuple(j) for j in chosen]
    return {"a": a, "b": b}


def _search_sop(sys: SetSystem, n: int, budget: Budget) -> dict | None:
    reps = sys.reps
    sets = sys.sets
    by_size = sorted(reps, key=lambda j: -bin(sets[j]).count("1"))
    # longest strictly increasing chain starting at each representative
    up: dict[int, int] = {}
    for j in by_size:
        s = sets[j]
        best = 1
        for k, length in up.items():
            budget.tick()
            t = sets[k]
            if s & ~t == 0 and s != t and length + 1 > best:
                best = length + 1
        up[j] = best
    chain: list[int] = []
    prev: int | None = None
    for need in range(n, 0, -1):
        pick = None
        for j in reps:
            budget.tick()
            if up[j] < need:
                continue
            if prev is not None:
                p, s = sets[prev], sets[j]
                if not (p & ~s == 0 and p != s):
                    continue
            pick = j
            break
        if pick is None:
            return None
        chain.append(pick)
        prev = pick
    return {"b": [sys.y_tuple(j) for j in chain]}


def _search_ip(sys: SetSystem, n: int, budget: Budget) -> dict | None:
    reps = sys.reps
    # column of each x-tuple over representatives
    cols = []
    for i in range(sys.nx):
        c = 0
        for k, j in enumerate(reps):
            if sys.sets[j] >> i & 1:
                c |= 1 << k
        cols.append(c)
    all_reps = (1 << len(reps)) - 1
    chosen: list[int] = []

    def extend(classes: list[int]) -> list[int] | None:
        if len(chosen) == n:
            return classes
        for i in range(sys.nx):
            budget.tick()
            if i in chosen:
                continue
            c = cols[i]
            new = [p & ~c for p in classes] + [p & c for p in classes]
            if any(p == 0 for p in new):
                continue
            chosen.append(i)
            out = extend(new)
            if out is not None:
                return out
            chosen.pop()
        return None

    classes = extend([all_reps])
    if classes is None:
        return None
    # classes[m] holds the b's whose trace has bit i-1 set iff a_i in phi(.; b), m = sum of bits
    b = [sys.y_tuple(reps[_lowest(classes[m])]) for m in range(2**n)]
    return {"a": [sys.x_tuple(i) for i in chosen], "b": b}


def _paths(n: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(1, n + 1), repeat=n))


def _search_tp2(sys: SetSystem, n: int, budget: Budget) -> dict | None:
    reps = [j for j in sys.reps if sys.sets[j]]
    sets = sys.sets
    grid: list[list[int]] = []

    # partial: intersections along all paths through the complete rows
    def place(partial: list[int], row: list[int]) -> list[list[int]] | None:
        if len(row) == n:
            nxt = [p & sets[j] for p in partial for j in row]
            grid.append(row)
            if len(grid) == n:
                return grid
            out = place(nxt, [])
            if out is not None:
                return out
            grid.pop()
            return None
        for j in reps:
            budget.tick()
            s = sets[j]
            if any(s & sets[k] for k in row):
                continue
            if any(p & s == 0 for p in partial):
                continue
            out = place(partial, row + [j])
            if out is not None:
                return out
        return None

    found = place([sys.full], [])
    if found is None:
        return None
    b = [[sys.y_tuple(j) for j in row] for row in found]
    a = []
    for f in _paths(n):
        inter = sys.full
        for i, fi in enumerate(f):
            inter &= sets[found[i][fi - 1]]
        a.append(sys.x_tuple(_lowest(inter)))
    return {"b": b, "a": a, "f": _paths(n)}


# -- verification -----------------------------------------------------------------------------


class _Oracle:
    def __init__(self, phi: PartitionedFormula, structure: FiniteStructure):
        self.phi = phi
        self.structure = structure
        self.ev = Evaluator(structure)

    def _check(self, t: Sequence[int], width: int, what: str) -> tuple[int, ...]:
        t = tuple(t)
        if len(t) != width:
            raise CertificateError(f"{what} {t} has length {len(t)}, expected {width}")
        if not all(isinstance(v, (int, np.integer)) and 0 <= v < self.structure.size for v in t):
            raise CertificateError(f"{what} {t} is outside the universe")
        return t

    def holds(self, a: Sequence[int], b: Sequence[int]) -> bool:
        a = self._check(a, len(self.phi.x), "x-tuple")
        b = self._check(b, len(self.phi.y), "y-tuple")
        val = {**dict(zip(self.phi.x, a)), **dict(zip(self.phi.y, b))}
        return self.ev.holds(self.phi.formula, val)

    def extension(self, b: Sequence[int]) -> frozenset[Tuple]:
        b = self._check(b, len(self.phi.y), "y-tuple")
        arr = self.ev.array(self.phi.formula, self.phi.x, dict(zip(self.phi.y, b)))
        return frozenset(tuple(int(i) for i in idx) for idx in zip(*np.nonzero(np.asarray(arr))))


def verify_witness(cert: PropertyCertificate, phi: PartitionedFormula, structure: FiniteStructure) -> bool:
    """Re-evaluate every defining condition of the certificate.

    Raises :class:`CertificateError` for a payload of the wrong shape.
    """
    o = _Oracle(phi, structure)
    n = cert.n
    p = cert.payload
    try:
        if cert.kind is PropertyKind.OP:
            a, b = p["a"], p["b"]
            if len(a) != n or len(b) != n:
                raise CertificateError("OP payload needs n a's and n b's")
            return all(o.holds(a[i], b[j]) == (i < j) for i in range(n) for j in range(n))
        if cert.kind is PropertyKind.SOP:
            b = p["b"]
            if len(b) != n:
                raise CertificateError("sOP payload needs n b's")
            exts = [o.extension(t) for t in b]
            return all(exts[i] < exts[i + 1] for i in range(n - 1))
        if cert.kind is PropertyKind.IP:
            a, b = p["a"], p["b"]
            if len(a) != n or len(b) != 2**n:
                raise CertificateError("IP payload needs n a's and 2^n b's")
            return all(
                o.holds(a[i], b[m]) == bool(m >> i & 1) for i in range(n) for m in range(2**n)
            )
        if cert.kind is PropertyKind.TP2:
            b, a = p["b"], p["a"]
            if len(b) != n or any(len(row) != n for row in b) or len(a) != n**n:
                raise CertificateError("TP2 payload needs an n-by-n b array and n^n a's")
            exts = [[o.extension(t) for t in row] for row in b]
            for row in exts:
                for j in range(n):
                    for k in range(j + 1, n):
                        if row[j] & row[k]:
                            return False
            for af, f in zip(a, _paths(n)):
                if not all(o.holds(af, b[i][fi - 1]) for i, fi in enumerate(f)):
                    return False
            return True
    except KeyError as exc:
        raise CertificateError(f"payload is missing {exc}") from None
    raise CertificateError(f"unknown kind {cert.kind}")


# -- defining sentences ---------------------------------------------------------------------

SENTENCE_CAPS = {PropertyKind.IP: 3, PropertyKind.TP2: 2}


def _blocks(vars_: Sequence[str], tags: Sequence[str], avoid: set[str]) -> list[tuple[str, ...]]:
    out = []
    for tag in tags:
        block = []
        for v in vars_:
            name = fresh_name(f"{v}{tag}", avoid)
            avoid.add(name)
            block.append(name)
        out.append(tuple(block))
    return out


def build_property_sentence(kind: PropertyKind | str, phi: PartitionedFormula, n: int) -> Formula:
    """Sentence true in exactly the structures where ``phi`` has ``kind(n)``."""
    kind = PropertyKind.parse(kind) if isinstance(kind, str) else kind
    if n < 1:
        raise ValueError("n must be at least 1")
    cap = SENTENCE_CAPS.get(kind)
    if cap is not None and n > cap:
        raise ValueError(f"{kind.value} sentences are capped at n <= {cap}")
    avoid = set(all_variables(phi.formula)) | set(phi.x) | set(phi.y)
    inst = phi.instance

    if kind is PropertyKind.OP:
        a = _blocks(phi.x, [f"a{i}" for i in range(1, n + 1)], avoid)
        b = _blocks(phi.y, [f"b{j}" for j in range(1, n + 1)], avoid)
        body = conj(
            inst(a[i], b[j]) if i < j else Not(inst(a[i], b[j])) for i in range(n) for j in range(n)
        )
        return exists_many([v for blk in a + b for v in blk], body)
    if kind is PropertyKind.SOP:
        b = _blocks(phi.y, [str(j) for j in range(1, n + 1)], avoid)
        (xs,) = _blocks(phi.x, ["0"], avoid)
        parts = []
        for i in range(n - 1):
            lo, hi = inst(xs, b[i]), inst(xs, b[i + 1])
            parts.append(forall_many(xs, Implies(lo, hi)))
            parts.append(exists_many(xs, conj([hi, Not(lo)])))
        return exists_many([v for blk in b for v in blk], conj(parts))
    if kind is PropertyKind.IP:
        a = _blocks(phi.x, [f"a{i}" for i in range(1, n + 1)], avoid)
        b = _blocks(phi.y, [f"b{j}" for j in range(1, 2**n + 1)], avoid)
        body = conj(
            inst(a[i], b[m]) if m >> i & 1 else Not(inst(a[i], b[m]))
            for i in range(n)
            for m in range(2**n)
        )
        return exists_many([v for blk in a + b for v in blk], body)
    b = _blocks(phi.y, [f"b{i}{j}" for i in range(1, n + 1) for j in range(1, n + 1)], avoid)
    grid = [b[i * n : (i + 1) * n] for i in range(n)]
    (xs,) = _blocks(phi.x, ["0"], avoid)
    parts = []
    for row in grid:
        for j in range(n):
            for k in range(j + 1, n):
                parts.append(Not(exists_many(xs, conj([inst(xs, row[j]), inst(xs, row[k])]))))
    for f in _paths(n):
        parts.append(exists_many(xs, conj(inst(xs, grid[i][fi - 1]) for i, fi in enumerate(f))))
    return exists_many([v for blk in b for v in blk], conj(parts))


# -- certificate transformers -----------------------------------------------------------------


def sop_to_op(
    cert: PropertyCertificate, phi: PartitionedFormula, structure: FiniteStructure
) -> PropertyCertificate | None:
    """OP certificate from an sOP chain, choosing ``a_i`` in ``S(b_(i+1)) - S(b_i)``.

    The last ``a`` must lie outside the top set of the chain.  When the top
    set is all of ``M^x`` the chain only supports OP(n-1), which is what is
    returned (None for n = 1).
    """
    if cert.kind is not PropertyKind.SOP:
        raise CertificateError("expected an sOP certificate")
    o = _Oracle(phi, structure)
    b = list(cert.payload["b"])
    exts = [o.extension(t) for t in b]
    everything = frozenset(itertools.product(range(structure.size), repeat=len(phi.x)))
    outside = sorted(everything - exts[-1])
    if outside:
        bs = b
        last = outside[0]
    else:
        if len(b) == 1:
            return None
        bs = b[:-1]
        last = min(exts[-1] - exts[-2])
    a = [min(exts[i + 1] - exts[i]) for i in range(len(bs) - 1)] + [last]
    return PropertyCertificate(PropertyKind.OP, len(bs), structure.name, cert.formula, phi.x, phi.y, {"a": a, "b": bs})


def ip_to_op(cert: PropertyCertificate, phi: PartitionedFormula, structure: FiniteStructure) -> PropertyCertificate:
    """OP certificate from IP: same ``a``'s against ``b_{1..j-1}``."""
    if cert.kind is not PropertyKind.IP:
        raise CertificateError("expected an IP certificate")
    n = cert.n
    b = cert.payload["b"]
    # {1..j-1} has index 2^(j-1) - 1 (zero-based)
    bs = [b[2 ** (j - 1) - 1] for j in range(1, n + 1)]
    return PropertyCertificate(
        PropertyKind.OP, n, structure.name, cert.formula, phi.x, phi.y, {"a": list(cert.payload["a"]), "b": bs}
    )


def tp2_to_ip_transpose(
    cert: PropertyCertificate, phi: PartitionedFormula, structure: FiniteStructure
) -> PropertyCertificate | None:
    """IP certificate for ``phi(y; x)`` from a TP2 certificate for ``phi(x; y)``.

    The new ``a_i`` are the column-1 parameters ``b_(i,1)``; ``b_S`` is
    ``a_f`` with ``f(i) = 1`` iff ``i`` in ``S``.  For n = 1 the path
    element only covers ``S = {1}``, so ``b_{}`` is searched for outside
    ``phi(M^x; b_(1,1))``; None if that set is everything.
    """
    if cert.kind is not PropertyKind.TP2:
        raise CertificateError("expected a TP2 certificate")
    n = cert.n
    grid = cert.payload["b"]
    a_f = dict(zip(_paths(n), cert.payload["a"]))
    new_a = [grid[i][0] for i in range(n)]
    new_b = []
    if n == 1:
        ext = _Oracle(phi, structure).extension(grid[0][0])
        everything = itertools.product(range(structure.size), repeat=len(phi.x))
        rest = [t for t in everything if t not in ext]
        if not rest:
            return None
        new_b = [rest[0], a_f[(1,)]]
    else:
        for m in range(2**n):
            f = tuple(1 if m >> i & 1 else 2 for i in range(n))
            new_b.append(a_f[f])
    t = phi.transpose()
    return PropertyCertificate(PropertyKind.IP, n, structure.name, cert.formula, t.x, t.y, {"a": new_a, "b": new_b})


def max_property(
    kind: PropertyKind,
    phi: PartitionedFormula,
    structure: FiniteStructure,
    n_cap: int,
    budget: Budget | None = None,
) -> tuple[int, PropertyCertificate | None, str]:
    """Largest ``n <= n_cap`` with a certificate.

    Uses monotonicity in ``n``: stops at the first failing ``n``.  Returns
    ``(n, certificate, status)`` where status is ``exact`` (n+1 ruled out),
    ``cap`` (n_cap reached) or ``budget`` (n+1 undecided).
    """
    system = SetSystem(phi, structure)
    best, best_cert = 0, None
    for n in range(1, n_cap + 1):
        try:
            cert = detect(kind, phi, structure, n, budget.fresh() if budget else None, system=system)
        except BudgetExhausted:
            return best, best_cert, "budget"
        if cert is None:
            return best, best_cert, "exact"
        best, best_cert = n, cert
    return best, best_cert, "cap"


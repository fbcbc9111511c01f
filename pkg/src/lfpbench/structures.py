"""Finite relational structures and the generator families used in experiments.

Universes are initial segments ``{0, ..., n-1}``.  Relations are stored as
sorted tuple lists with a frozenset index; a dense boolean array view is
built on demand for the evaluator.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .parser import Signature


class StructureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FiniteStructure:
    name: str
    size: int
    relations: Mapping[str, tuple[tuple[int, ...], ...]]
    arities: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.size, int) or self.size < 1:
            raise StructureError(f"structure size must be a positive integer, got {self.size!r}")
        rels: dict[str, tuple[tuple[int, ...], ...]] = {}
        arities = dict(self.arities)
        for rel, tuples in self.relations.items():
            clean = sorted({tuple(int(v) for v in t) for t in tuples})
            arity = arities.get(rel)
            for t in clean:
                if arity is None:
                    arity = len(t)
                if len(t) != arity:
                    raise StructureError(f"relation {rel}: tuple {t} does not have arity {arity}")
                for v in t:
                    if not 0 <= v < self.size:
                        raise StructureError(f"relation {rel}: entry {v} out of range for size {self.size}")
            if arity is None:
                raise StructureError(f"relation {rel} is empty and has no declared arity")
            if arity < 1:
                raise StructureError(f"relation {rel} must have positive arity")
            arities[rel] = arity
            rels[rel] = tuple(clean)
        extra = set(arities) - set(rels)
        for rel in extra:
            rels[rel] = ()
        object.__setattr__(self, "relations", rels)
        object.__setattr__(self, "arities", arities)

    @property
    def signature(self) -> Signature:
        return Signature(self.arities)

    @cached_property
    def _index(self) -> dict[str, frozenset[tuple[int, ...]]]:
        return {rel: frozenset(ts) for rel, ts in self.relations.items()}

    def holds(self, rel: str, *args: int) -> bool:
        return tuple(args) in self._index[rel]

    @cached_property
    def _dense(self) -> dict[str, np.ndarray]:
        return {}

    def dense(self, rel: str) -> np.ndarray:
        """Boolean array of shape ``(size,) * arity`` for ``rel`` (read-only)."""
        cache = self._dense
        arr = cache.get(rel)
        if arr is None:
            arity = self.arities[rel]
            arr = np.zeros((self.size,) * arity, dtype=bool)
            ts = self.relations[rel]
            if ts:
                idx = np.array(ts, dtype=np.intp).T
                arr[tuple(idx)] = True
            arr.setflags(write=False)
            cache[rel] = arr
        return arr

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "size": self.size,
            "relations": {rel: [list(t) for t in ts] for rel, ts in sorted(self.relations.items())},
        }

    def __repr__(self) -> str:
        rels = ", ".join(f"{r}/{a}" for r, a in sorted(self.arities.items()))
        return f"FiniteStructure({self.name!r}, size={self.size}, relations=[{rels}])"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FiniteStructure):
            return NotImplemented
        return self.size == other.size and self.relations == other.relations and self.arities == other.arities

    def __hash__(self) -> int:
        return id(self)


def structure_from_json(data: Mapping) -> FiniteStructure:
    if not isinstance(data, Mapping):
        raise StructureError("structure JSON must be an object")
    if "size" not in data:
        raise StructureError("structure JSON is missing 'size'")
    size = data["size"]
    if not isinstance(size, int) or isinstance(size, bool):
        raise StructureError(f"'size' must be an integer, got {size!r}")
    rels = data.get("relations", {})
    if not isinstance(rels, Mapping):
        raise StructureError("'relations' must be an object")
    relations = {}
    for rel, tuples in rels.items():
        if not isinstance(tuples, list) or not all(isinstance(t, list) for t in tuples):
            raise StructureError(f"relation {rel} must be a list of lists")
        for t in tuples:
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in t):
                raise StructureError(f"relation {rel}: non-integer entry in {t}")
        relations[rel] = tuples
    arities = data.get("arities", {})
    return FiniteStructure(str(data.get("name", "structure")), size, relations, arities)


def load_structure(source: str | Path | Mapping) -> FiniteStructure:
    """Load a structure from a JSON file path, JSON text, or parsed mapping."""
    if isinstance(source, Mapping):
        return structure_from_json(source)
    text = str(source)
    if isinstance(source, Path) or not text.lstrip().startswith("{"):
        path = Path(text)
        try:
            text = path.read_text()
        except OSError as exc:
            raise StructureError(f"cannot read structure file {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StructureError(f"malformed structure JSON: {exc}") from None
    return structure_from_json(data)


# -- generators ------------------------------------------------------------------


def pure_set(n: int) -> FiniteStructure:
    return FiniteStructure(f"set{n}", n, {})


def successor(n: int) -> FiniteStructure:
    return FiniteStructure(f"succ{n}", n, {"S": [(i, i + 1) for i in range(n - 1)]}, {"S": 2})


def linear_order(n: int) -> FiniteStructure:
    return FiniteStructure(
        f"linord{n}", n, {"<": [(i, j) for i in range(n) for j in range(i + 1, n)]}, {"<": 2}
    )


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    d = 2
    while d * d <= q:
        if q % d == 0:
            return False
        d += 1
    return True


def quadratic_residues(q: int) -> frozenset[int]:
    return frozenset((x * x) % q for x in range(1, q))


def paley(q: int) -> FiniteStructure:
    """Paley graph on Z/q: distinct a, b adjacent iff a - b is a square mod q."""
    if not (is_prime(q) and q % 4 == 1):
        raise StructureError(f"Paley graph needs a prime q = 1 mod 4, got {q}")
    qr = quadratic_residues(q)
    edges = [(a, b) for a in range(q) for b in range(q) if a != b and (a - b) % q in qr]
    return FiniteStructure(f"paley{q}", q, {"E": edges}, {"E": 2})


def random_graph(n: int, seed: int) -> FiniteStructure:
    """G(n, 1/2) with a generator seeded by ``(seed, n)``."""
    rng = np.random.default_rng([seed, n])
    coins = rng.random((n, n)) < 0.5
    edges = []
    for a in range(n):
        for b in range(a + 1, n):
            if coins[a, b]:
                edges += [(a, b), (b, a)]
    return FiniteStructure(f"rg{n}s{seed}", n, {"E": edges}, {"E": 2})


def disjoint_union(m1: FiniteStructure, m2: FiniteStructure) -> FiniteStructure:
    """Disjoint union with side markers ``L`` (first part) and ``R`` (second part).

    Elements of ``m1`` keep their indices; elements of ``m2`` are shifted by
    ``m1.size``.  A relation of ``m1`` named ``L`` or ``R`` is renamed with
    suffix ``_1``; a relation of ``m2`` whose name is already taken is renamed
    with suffix ``_2``.
    """
    rels: dict[str, list[tuple[int, ...]]] = {}
    arities: dict[str, int] = {}
    for rel, ts in m1.relations.items():
        name = f"{rel}_1" if rel in ("L", "R") else rel
        rels[name] = list(ts)
        arities[name] = m1.arities[rel]
    shift = m1.size
    for rel, ts in m2.relations.items():
        name = rel
        if name in rels or name in ("L", "R"):
            name = f"{rel}_2"
        rels[name] = [tuple(v + shift for v in t) for t in ts]
        arities[name] = m2.arities[rel]
    rels["L"] = [(i,) for i in range(m1.size)]
    rels["R"] = [(i,) for i in range(shift, shift + m2.size)]
    arities["L"] = arities["R"] = 1
    return FiniteStructure(f"{m1.name}+{m2.name}", m1.size + m2.size, rels, arities)


# -- family specs --------------------------------------------------------------------


_KINDS = {
    "set": "pure-set",
    "pure": "pure-set",
    "pure-set": "pure-set",
    "succ": "successor",
    "successor": "successor",
    "linord": "linear-order",
    "linear-order": "linear-order",
    "paley": "paley",
    "rg": "random-graph",
    "random-graph": "random-graph",
}


@dataclass(frozen=True)
class FamilySpec:
    kind: str
    sizes: tuple[int, ...] = ()
    seed: int = 0
    parts: tuple[FamilySpec, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "union":
            if len(self.parts) != 2:
                raise StructureError("a union family needs exactly two parts")
            return
        if self.kind not in _KINDS.values():
            raise StructureError(f"unknown family kind {self.kind!r}")
        if not self.sizes:
            raise StructureError(f"{self.kind} family has no sizes")
        if any(s < 1 for s in self.sizes):
            raise StructureError(f"{self.kind} family sizes must be positive: {self.sizes}")
        if self.kind == "paley":
            bad = [q for q in self.sizes if not (is_prime(q) and q % 4 == 1)]
            if bad:
                raise StructureError(f"Paley sizes must be primes = 1 mod 4, got {bad}")


def _parse_sizes(text: str) -> tuple[int, ...]:
    sizes: list[int] = []
    for part in text.split(","):
        part = part.strip()
        m = re.fullmatch(r"(\d+)\s*\.\.\s*(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if lo > hi:
                raise StructureError(f"empty size range {part!r}")
            sizes.extend(range(lo, hi + 1))
        elif re.fullmatch(r"\d+", part):
            sizes.append(int(part))
        else:
            raise StructureError(f"bad size list {text!r}")
    return tuple(sizes)


def _split_top(text: str) -> list[str]:
    depth, start, out = 0, 0, []
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            out.append(text[start:i])
            start = i + 1
    out.append(text[start:])
    return [p.strip() for p in out]


def parse_family(text: str, default_seed: int = 0) -> FamilySpec:
    """Parse compact specs such as ``linord:2..20``, ``paley:5,13,17``,
    ``rg:8..16:seed=7`` or ``union(succ:2..10, linord:2..10)``.

    ``default_seed`` applies to random-graph parts without ``seed=``.
    """
    text = text.strip()
    m = re.fullmatch(r"union\((.*)\)", text, re.DOTALL)
    if m:
        parts = _split_top(m.group(1))
        if len(parts) != 2:
            raise StructureError(f"union needs two families: {text!r}")
        return FamilySpec(
            "union", parts=(parse_family(parts[0], default_seed), parse_family(parts[1], default_seed))
        )
    fields = text.split(":")
    kind = _KINDS.get(fields[0].strip())
    if kind is None:
        raise StructureError(f"unknown family kind in {text!r}")
    if len(fields) < 2:
        raise StructureError(f"family {text!r} has no sizes")
    seed = default_seed
    for extra in fields[2:]:
        m = re.fullmatch(r"\s*seed\s*=\s*(-?\d+)\s*", extra)
        if not m:
            raise StructureError(f"unknown family option {extra!r}")
        seed = int(m.group(1))
    return FamilySpec(kind, _parse_sizes(fields[1]), seed)


def generate_family(spec: FamilySpec | str, default_seed: int = 0) -> list[FiniteStructure]:
    if isinstance(spec, str):
        spec = parse_family(spec, default_seed)
    if spec.kind == "union":
        left = generate_family(spec.parts[0])
        right = generate_family(spec.parts[1])
        if len(left) != len(right):
            raise StructureError(
                f"union parts have different lengths ({len(left)} and {len(right)}); members pair by index"
            )
        return [disjoint_union(a, b) for a, b in zip(left, right)]
    make = {
        "pure-set": pure_set,
        "successor": successor,
        "linear-order": linear_order,
        "paley": paley,
        "random-graph": lambda n: random_graph(n, spec.seed),
    }[spec.kind]
    return [make(n) for n in spec.sizes]


def resolve_structure(text: str, default_seed: int = 0) -> FiniteStructure:
    """A single structure from a JSON path or a one-member family spec (``succ:4``)."""
    path = Path(text)
    if text.strip().startswith("{") or path.suffix == ".json" or path.is_file():
        return load_structure(text)
    members = generate_family(text, default_seed)
    if len(members) != 1:
        raise StructureError(f"{text!r} describes {len(members)} structures, expected one")
    return members[0]


def signature_of(structures: Iterable[FiniteStructure]) -> Signature:
    sig = Signature()
    for m in structures:
        sig = sig.merge(m.signature)
    return sig

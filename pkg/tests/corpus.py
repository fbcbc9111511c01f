"""Shared corpus of structures and formulas for the test suite."""

from __future__ import annotations

from functools import lru_cache

from lfpbench.formula import Lfp
from lfpbench.library import load_formula, partitioned
from lfpbench.parser import Signature
from lfpbench.structures import linear_order, paley, pure_set, random_graph, successor

# lfp formulas by the relation they need; ``None`` means equality only
LFP_TEXTS = {
    "reach": ("S", "[lfp T(x). (A y. !S(y,x)) | E y. (S(y,x) & T(y))](x)"),
    "even-dist": ("S", "[lfp V(x). (A y. !S(y,x)) | E y. E z. (S(y,z) & S(z,x) & V(y))](x)"),
    "pairs": ("S", "[lfp R(x,y). x = y | E z. (S(x,z) & R(z,y))](x,y)"),
    "up": ("<", "[lfp T(x). A y. (y < x -> T(y))](x)"),
    "down": ("<", "[lfp T(x). A y. (x < y -> T(y))](x)"),
    "interval": ("<", "[lfp D(x,y). x = y | E z. (z < y & !(E w. z < w & w < y) & D(x,z))](x,y)"),
    "tc": ("E", "[lfp R(x,y). E(x,y) | E z. (E(x,z) & R(z,y))](x,y)"),
    "everything": (None, "[lfp T(x). x = x](x)"),
    "nothing": (None, "[lfp T(x). T(x)](x)"),
}

FO_TEXTS = {
    None: [("eq", "x = y", "x", "y"), ("neq", "!(x = y)", "x", "y")],
    "S": [("edge", "S(x,y)", "x", "y"), ("dist2", "E z. S(x,z) & S(z,y)", "x", "y")],
    "<": [("lt", "x < y", "x", "y"), ("between", "E z. x < z & z < y", "x", "y"), ("interval", "y < x & x < z", "x", "y,z")],
    "E": [("edge", "E(x,y)", "x", "y"), ("path2", "E z. E(x,z) & E(z,y)", "x", "y")],
}


def signature_key(structure) -> str | None:
    rels = list(structure.relations)
    return rels[0] if rels else None


def structures(max_size: int = 8) -> list:
    out = [pure_set(n) for n in range(1, 6)]
    out += [successor(n) for n in range(1, 9)]
    out += [linear_order(n) for n in range(1, 9)]
    out += [paley(5), paley(13), random_graph(5, 1), random_graph(6, 2)]
    return [m for m in out if m.size <= max_size]


@lru_cache(maxsize=None)
def lfp(name: str, key: str | None) -> Lfp:
    sig = {key: 2} if key else {}
    f = load_formula(LFP_TEXTS[name][1], Signature(sig))
    assert isinstance(f, Lfp)
    return f


def lfp_for(structure) -> list[tuple[str, Lfp]]:
    key = signature_key(structure)
    return [(name, lfp(name, key)) for name, (need, _) in LFP_TEXTS.items() if need in (None, key)]


def fo_for(structure, max_y: int = 2) -> list[tuple[str, object]]:
    key = signature_key(structure)
    out = []
    for k in [key, None] if key else [None]:
        for name, text, x, y in FO_TEXTS.get(k, []):
            phi = partitioned(load_formula(text, Signature({key: 2} if key else {})), x.split(","), y.split(","))
            if len(phi.y) <= max_y:
                out.append((name, phi))
    return out

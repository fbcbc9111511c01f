"""Bundled formula files and the arithmetic library over ``{<}``."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

from .formula import Formula, FormulaError, Lfp, PartitionedFormula, free_variables
from .parser import Macro, Signature, parse_definitions, parse_formula

ORDER = Signature({"<": 2})


def bundled_names() -> list[str]:
    root = resources.files("lfpbench") / "data" / "formulas"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".lfp"))


def bundled_text(name: str) -> str:
    """Text of a bundled formula file such as ``reach.lfp``."""
    if not name.endswith(".lfp"):
        name += ".lfp"
    path = resources.files("lfpbench") / "data" / "formulas" / name
    if not path.is_file():
        raise FileNotFoundError(f"no bundled formula {name!r}; available: {', '.join(bundled_names())}")
    return path.read_text()


def formula_source(spec: str) -> str:
    """Resolve ``spec`` as a file path, a bundled name, or inline text."""
    p = Path(spec)
    if p.suffix == ".lfp" or "\n" in spec:
        if p.is_file():
            return p.read_text()
        if "\n" not in spec:
            return bundled_text(p.name)
    return spec


def load_formula(source: str, sig: Signature) -> Formula:
    """Parse inline text, a path or a bundled file against ``sig``.

    Over a signature with ``<`` the arithmetic macros are available.
    """
    text = formula_source(source)
    base = arithmetic_macros() if "<" in sig else None
    macros, main = parse_definitions(text, sig, base)
    if not main:
        raise FormulaError(f"formula source {source!r} has no main formula")
    return parse_formula(main, sig, macros)


def partitioned(
    formula: Formula, x: Sequence[str] | None = None, y: Sequence[str] | None = None
) -> PartitionedFormula:
    """Partition ``formula``; by default x is the first free variable and y the rest."""
    fv = free_variables(formula)
    if x is None and y is None:
        return PartitionedFormula(formula, tuple(fv[:1]), tuple(fv[1:]))
    if x is None:
        x = [v for v in fv if v not in y]
    if y is None:
        y = [v for v in fv if v not in x]
    return PartitionedFormula(formula, tuple(x), tuple(y))


@lru_cache(maxsize=None)
def arithmetic_macros() -> dict[str, Macro]:
    macros, _ = parse_definitions(bundled_text("arithmetic.lfp"), ORDER)
    return macros


@dataclass(frozen=True)
class ArithmeticLibrary:
    """Graphs of truncated arithmetic on ``([m], <)`` plus the bit and factor relations."""

    plus: PartitionedFormula
    times: PartitionedFormula
    exp: PartitionedFormula
    bit: PartitionedFormula
    factor: PartitionedFormula

    def items(self) -> list[tuple[str, PartitionedFormula]]:
        return [(k, getattr(self, k)) for k in ("plus", "times", "exp", "bit", "factor")]


def arithmetic_library() -> ArithmeticLibrary:
    """``plus(x,y,z)``, ``times``, ``exp`` as graphs; ``bit(x;y)``; ``factor(x;y,z)``."""
    m = arithmetic_macros()

    def p(text: str, x: tuple[str, ...], y: tuple[str, ...]) -> PartitionedFormula:
        return PartitionedFormula(parse_formula(text, ORDER, m), x, y)

    return ArithmeticLibrary(
        plus=p("plus(x,y,z)", ("x",), ("y", "z")),
        times=p("times(x,y,z)", ("x",), ("y", "z")),
        exp=p("exp(x,y,z)", ("x",), ("y", "z")),
        bit=p("bit(x,y)", ("x",), ("y",)),
        factor=p("factor(x,y,z)", ("x",), ("y", "z")),
    )


def reach() -> Lfp:
    """The reachability lfp over a binary ``S``, applied to ``u``."""
    f = parse_formula(bundled_text("reach.lfp").split("\n", 1)[1], {"S": 2})
    assert isinstance(f, Lfp)
    return f

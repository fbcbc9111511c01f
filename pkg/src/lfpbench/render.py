"""Render formulas in the concrete grammar accepted by :mod:`lfpbench.parser`."""

from __future__ import annotations

from .formula import And, Atom, Const, Derived, Eq, Exists, Forall, Formula, Implies, Lfp, Not, Or

# binding strength; quantifiers are 0 because their body extends to the right
_PREC = {Implies: 1, Or: 2, And: 3, Not: 4}


def _prec(f: Formula) -> int:
    if isinstance(f, (Exists, Forall)):
        return 0
    return _PREC.get(type(f), 5)


def _args(args: tuple[str, ...]) -> str:
    return ",".join(args)


def render(f: Formula) -> str:
    """Grammar-conformant text for ``f``; ``parse(render(f)) == f``."""
    return _render(f, 0)


def _render(f: Formula, need: int) -> str:
    text = _bare(f)
    p = _prec(f)
    if p < need or (p == 0 and need > 0):
        return f"({text})"
    return text


def _bare(f: Formula) -> str:
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        if f.rel == "<" and len(f.args) == 2:
            return f"{f.args[0]} < {f.args[1]}"
        return f"{f.rel}({_args(f.args)})"
    if isinstance(f, Derived):
        return f"{f.name}({_args(f.args)})"
    if isinstance(f, Eq):
        return f"{f.left} = {f.right}"
    if isinstance(f, Not):
        if isinstance(f.sub, Eq) or (isinstance(f.sub, Atom) and f.sub.rel == "<"):
            # "!x = y" parses the same way but reads badly
            return f"!({_bare(f.sub)})"
        return "!" + _render(f.sub, 4)
    if isinstance(f, And):
        return f"{_render(f.left, 3)} & {_render(f.right, 4)}"
    if isinstance(f, Or):
        return f"{_render(f.left, 2)} | {_render(f.right, 3)}"
    if isinstance(f, Implies):
        return f"{_render(f.left, 2)} -> {_render(f.right, 1)}"
    if isinstance(f, Exists):
        return f"E {f.var}. {_render(f.body, 0)}"
    if isinstance(f, Forall):
        return f"A {f.var}. {_render(f.body, 0)}"
    if isinstance(f, Lfp):
        return f"[lfp {f.rel}({_args(f.vars)}). {_render(f.body, 0)}]({_args(f.args)})"
    raise TypeError(f"not a formula: {f!r}")

"""Command-line front end.

Exit codes: 0 ok, 1 property not found (or a certificate failed to
verify), 2 usage or parse error, 3 budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dividing import (
    Budget,
    BudgetExhausted,
    CertificateError,
    PropertyCertificate,
    PropertyKind,
    detect,
    max_property,
    verify_witness,
)
from .evaluator import Evaluator, closure_ordinal, lfp_stages, unfold_lfp, unfold_over_family
from .formula import Formula, Lfp, free_variables
from .library import arithmetic_macros, formula_source, load_formula, partitioned
from .parser import Signature, parse_definitions, parse_formula
from .profile import load_config, reverify_report, run_config, write_report
from .render import render
from .structures import FiniteStructure, generate_family, resolve_structure, signature_of

OK, NOT_FOUND, USAGE, BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _names(text: str | None) -> tuple[str, ...] | None:
    if text is None:
        return None
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _bindings(items: Sequence[str] | None, size: int) -> dict[str, int]:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise UsageError(f"bad binding {item!r}; expected name=element")
        try:
            v = int(value)
        except ValueError:
            raise UsageError(f"bad element in binding {item!r}") from None
        if not 0 <= v < size:
            raise UsageError(f"element {v} outside the universe 0..{size - 1}")
        out[name.strip()] = v
    return out


def _signature(text: str | None) -> Signature:
    """``S:2,<:2`` style signature for commands run without a structure."""
    arities = {}
    for item in (text or "").split(","):
        if not item.strip():
            continue
        name, _, arity = item.strip().rpartition(":")
        if not name or not arity.isdigit():
            raise UsageError(f"bad signature entry {item!r}; expected NAME:ARITY")
        arities[name] = int(arity)
    return Signature(arities)


def _budget(args) -> Budget:
    return Budget(args.budget_ms, args.budget_nodes)


def _structure(args) -> FiniteStructure:
    return resolve_structure(args.structure, args.seed)


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _lfp_parts(f: Formula, rel: str | None, xvars: tuple[str, ...] | None):
    """(body, rel, vars, args) of an lfp formula, or a bare body treated as one."""
    if isinstance(f, Lfp) and rel is None:
        return f.body, f.rel, f.vars, f.args
    vars_ = xvars if xvars is not None else tuple(free_variables(f))
    return f, rel or "_R", vars_, vars_


def _parse_body(source: str, sig: Signature, rel: str | None) -> Formula:
    if rel is None:
        return load_formula(source, sig)
    text = formula_source(source)
    macros, main = parse_definitions(text, sig, arithmetic_macros() if "<" in sig else None)
    return parse_formula(main, sig, macros, free_relvars=True)


# -- subcommands -----------------------------------------------------------------------------------


def cmd_eval(args) -> int:
    m = _structure(args)
    f = load_formula(args.formula, m.signature)
    val = _bindings(args.bind, m.size)
    missing = [v for v in free_variables(f) if v not in val]
    if missing:
        raise UsageError(f"free variables {missing} need --bind")
    print("true" if Evaluator(m).holds(f, val) else "false")
    return OK


def cmd_stages(args) -> int:
    m = _structure(args)
    f = _parse_body(args.formula, m.signature, args.rel)
    body, rel, xvars, _ = _lfp_parts(f, args.rel, _names(args.vars))
    st = lfp_stages(body, rel, xvars, m, _bindings(args.bind, m.size), args.strategy)
    for k, level in enumerate(st.levels(), start=1):
        elems = ", ".join(str(t[0]) if len(t) == 1 else "(" + ",".join(map(str, t)) + ")" for t in level)
        print(f"stage {k}: {{{elems}}}")
    print(f"closure {st.closure}")
    return OK


def cmd_closure(args) -> int:
    family = generate_family(args.family, args.seed)
    sig = signature_of(family)
    f = _parse_body(args.formula, sig, args.rel)
    body, rel, xvars, _ = _lfp_parts(f, args.rel, _names(args.vars))
    for m in family:
        print(f"{m.name} {closure_ordinal(body, rel, xvars, m, strategy=args.strategy)}")
    return OK


def _phi(args, sig: Signature):
    f = load_formula(args.formula, sig)
    return partitioned(f, _names(args.x), _names(args.y))


def cmd_detect(args) -> int:
    m = _structure(args)
    phi = _phi(args, m.signature)
    kind = PropertyKind.parse(args.kind)
    if args.max:
        n, cert, status = max_property(kind, phi, m, args.n, _budget(args))
        print(f"max {kind.value} {n} ({status})", file=sys.stderr)
        if cert is None:
            return BUDGET if status == "budget" else NOT_FOUND
        _emit(args, json.dumps(cert.to_json(), sort_keys=True, indent=1))
        return OK
    cert = detect(kind, phi, m, args.n, _budget(args))
    if cert is None:
        print(f"no {kind.value}({args.n}) witness for {render(phi.formula)} in {m.name}", file=sys.stderr)
        return NOT_FOUND
    _emit(args, json.dumps(cert.to_json(), sort_keys=True, indent=1))
    return OK


def cmd_verify(args) -> int:
    if args.report:
        report = json.loads(Path(args.report).read_text())
        checked, failures = reverify_report(report)
        for f in failures:
            print(f"FAIL {f}")
        print(f"{checked - len(failures)}/{checked} certificates verify")
        return NOT_FOUND if failures else OK
    if not (args.certificate and args.formula and args.structure):
        raise UsageError("verify needs --report, or --certificate with --formula and --structure")
    cert = PropertyCertificate.from_json(Path(args.certificate).read_text())
    m = _structure(args)
    phi = _phi(args, m.signature)
    if args.x is None and args.y is None and cert.x:
        phi = partitioned(phi.formula, cert.x, cert.y)
    try:
        ok = verify_witness(cert, phi, m)
    except CertificateError as exc:
        print(f"invalid: {exc}")
        return NOT_FOUND
    print("valid" if ok else "invalid")
    return OK if ok else NOT_FOUND


def cmd_unfold(args) -> int:
    family = generate_family(args.family, args.seed) if args.family else []
    m = _structure(args) if args.structure else None
    if family:
        sig = signature_of(family)
    elif m is not None:
        sig = m.signature
    else:
        sig = _signature(args.sig)
    f = _parse_body(args.formula, sig, args.rel)
    body, rel, xvars, _ = _lfp_parts(f, args.rel, _names(args.vars))
    if args.family:
        k = unfold_over_family(body, rel, xvars, family, args.max_k)
        if k is None:
            print(f"no stabilization within k <= {args.max_k}", file=sys.stderr)
            return NOT_FOUND
        print(k)
        return OK
    if args.k is None:
        raise UsageError("unfold needs --k, or --family to search for the stabilizing k")
    theta = unfold_lfp(body, rel, xvars, args.k)
    print(render(theta))
    if m is not None:
        arr = Evaluator(m).array(theta, xvars)
        rows = [tuple(int(i) for i in idx) for idx in zip(*np.nonzero(arr))]
        print("{" + ", ".join(str(t[0]) if len(t) == 1 else str(t) for t in rows) + "}")
    return OK


def cmd_profile(args) -> int:
    config = load_config(args.config, args.seed)
    if args.workers is not None:
        config.workers = args.workers
    profiles = run_config(config, args.budget_ms, args.budget_nodes)
    for prof in profiles:
        print(f"# {prof.label} ({prof.family})")
        print(prof.to_csv(), end="")
        for (fname, kind), verdict in prof.verdicts().items():
            print(f"#   {fname}:{kind} {verdict}")
        for fname, verdict in prof.closure_verdicts().items():
            print(f"#   {fname}:closure {verdict}")
    if args.out:
        for p in write_report(config, profiles, args.out):
            print(f"wrote {p}", file=sys.stderr)
    return OK


def cmd_generate(args) -> int:
    family = generate_family(args.family, args.seed)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for m in family:
            (out / f"{m.name}.json").write_text(json.dumps(m.to_json(), sort_keys=True) + "\n")
            print(f"wrote {out / (m.name + '.json')}", file=sys.stderr)
    else:
        for m in family:
            print(json.dumps(m.to_json(), sort_keys=True))
    return OK


# -- argument parsing ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--budget-ms", type=float, default=argparse.SUPPRESS, help="wall-clock budget per search")
    common.add_argument("--budget-nodes", type=int, default=argparse.SUPPRESS, help="node budget per search")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for random families")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file or directory")

    p = argparse.ArgumentParser(prog="lfpbench", description="Fixed points, stages and dividing lines on finite structures.")
    p.add_argument("--version", action="version", version=f"lfpbench {__version__}")
    p.add_argument("--budget-ms", type=float, default=None)
    p.add_argument("--budget-nodes", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    sub = p.add_subparsers(dest="command", required=True)

    def structure_args(sp, required=True):
        sp.add_argument("--structure", required=required, help="family spec such as linord:4, or a JSON file")

    def formula_args(sp):
        sp.add_argument("--formula", required=True, help="inline text, a .lfp path, or a bundled name")

    def lfp_args(sp):
        sp.add_argument("--rel", help="treat the formula as a body with this free relation variable")
        sp.add_argument("--vars", help="comma-separated tuple variables of the body")

    def partition_args(sp):
        sp.add_argument("--x", help="comma-separated object variables")
        sp.add_argument("--y", help="comma-separated parameter variables")

    sp = sub.add_parser("eval", parents=[common], help="truth value of a formula")
    structure_args(sp)
    formula_args(sp)
    sp.add_argument("--bind", action="append", metavar="VAR=ELEM")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("stages", parents=[common], help="stages and closure ordinal of an lfp formula")
    structure_args(sp)
    formula_args(sp)
    lfp_args(sp)
    sp.add_argument("--bind", action="append", metavar="VAR=ELEM")
    sp.add_argument("--strategy", choices=["naive", "semi-naive"], default="semi-naive")
    sp.set_defaults(func=cmd_stages)

    sp = sub.add_parser("closure", parents=[common], help="closure ordinals across a family")
    sp.add_argument("--family", required=True)
    formula_args(sp)
    lfp_args(sp)
    sp.add_argument("--strategy", choices=["naive", "semi-naive"], default="semi-naive")
    sp.set_defaults(func=cmd_closure)

    sp = sub.add_parser("detect", parents=[common], help="search for an OP/sOP/IP/TP2 certificate")
    sp.add_argument("--kind", required=True, help="OP, sOP, IP or TP2")
    sp.add_argument("--n", type=int, required=True, help="n, or the cap with --max")
    sp.add_argument("--max", action="store_true", help="largest n up to --n")
    structure_args(sp)
    formula_args(sp)
    partition_args(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("verify", parents=[common], help="re-verify a certificate or a whole report")
    sp.add_argument("--certificate")
    sp.add_argument("--report")
    structure_args(sp, required=False)
    sp.add_argument("--formula")
    partition_args(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("unfold", parents=[common], help="first-order unfolding of an lfp formula")
    formula_args(sp)
    lfp_args(sp)
    sp.add_argument("--k", type=int)
    structure_args(sp, required=False)
    sp.add_argument("--family", help="find the least k at which unfoldings stabilize on the family")
    sp.add_argument("--max-k", type=int, default=64)
    sp.add_argument("--sig", help="signature such as S:2 when no structure or family is given")
    sp.set_defaults(func=cmd_unfold)

    sp = sub.add_parser("profile", parents=[common], help="run a profile config")
    sp.add_argument("--config", required=True, help="config path or bundled name (figure1-desk.json)")
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("generate", parents=[common], help="write the structures of a family as JSON")
    sp.add_argument("--family", required=True)
    sp.set_defaults(func=cmd_generate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code not in (0, None) else OK
    if args.seed is None and args.command not in ("profile",):
        args.seed = 0
    try:
        return args.func(args)
    except BudgetExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BUDGET
    except (UsageError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())

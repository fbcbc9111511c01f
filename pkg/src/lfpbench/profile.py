"""Family profiles: maximal certified n per structure, closure ordinals, verdicts.

A profile config is JSON::

    {"name": "...", "seed": 0, "budget_ms": 20000, "budget_nodes": null, "workers": 4,
     "groups": [{"label": "...", "family": "linord:2..8",
                 "formulas": [{"name": "lt", "text": "x < y", "x": ["x"], "y": ["y"]},
                              {"name": "reach-le", "stage_preorder": "reach.lfp"}],
                 "closure": [{"name": "reach", "text": "reach.lfp"}],
                 "kinds": ["OP", "sOP", "IP", "TP2"],
                 "n_cap": {"OP": 8, "sOP": 8, "IP": 3, "TP2": 2}}]}

``text`` is inline formula text, a path, or a bundled file name.  Without
``x``/``y`` the first free variable is x and the rest are y.
``stage_preorder`` names an lfp formula whose stage comparison becomes the
formula of the column.  Output is deterministic: no timestamps, and cells
are assembled in config order whatever the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .constructions import stage_preorder_formula
from .dividing import Budget, PropertyCertificate, PropertyKind, max_property, verify_witness
from .evaluator import closure_ordinal
from .formula import FormulaError, Lfp, PartitionedFormula
from .library import load_formula as _load_formula, partitioned
from .parser import Signature
from .structures import FiniteStructure, generate_family, signature_of

DEFAULT_CAPS = {"OP": 8, "sOP": 8, "IP": 3, "TP2": 2}


class ConfigError(ValueError):
    pass


def load_formula(source: str, sig: Signature) -> Any:
    try:
        return _load_formula(source, sig)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class ColumnSpec:
    name: str
    phi: PartitionedFormula
    source: dict[str, Any]


@dataclass
class ClosureSpec:
    name: str
    lfp: Lfp


@dataclass
class GroupSpec:
    label: str
    family: str
    structures: list[FiniteStructure]
    formulas: list[ColumnSpec]
    closure: list[ClosureSpec]
    kinds: list[PropertyKind]
    n_cap: dict[PropertyKind, int]


@dataclass
class ProfileConfig:
    name: str
    seed: int
    budget_ms: float | None
    budget_nodes: int | None
    workers: int
    groups: list[GroupSpec]
    raw: dict[str, Any]

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def build_column(entry: dict[str, Any], sig: Signature) -> ColumnSpec:
    name = entry.get("name")
    if not name:
        raise ConfigError(f"formula entry without a name: {entry}")
    if "stage_preorder" in entry:
        f = load_formula(entry["stage_preorder"], sig)
        if not isinstance(f, Lfp):
            raise ConfigError(f"{name}: stage_preorder needs an lfp formula")
        lam = stage_preorder_formula(f.body, f.rel, f.vars)
        return ColumnSpec(name, lam.phi, entry)
    if "text" not in entry:
        raise ConfigError(f"{name}: formula entry needs 'text' or 'stage_preorder'")
    f = load_formula(entry["text"], sig)
    return ColumnSpec(name, partitioned(f, entry.get("x"), entry.get("y")), entry)


def parse_config(raw: dict[str, Any], seed: int | None = None) -> ProfileConfig:
    try:
        seed = int(raw.get("seed", 0)) if seed is None else seed
        groups = []
        for g in raw["groups"]:
            structures = generate_family(g["family"], seed)
            sig = signature_of(structures)
            kinds = [PropertyKind.parse(k) for k in g.get("kinds", ["OP", "sOP", "IP", "TP2"])]
            caps = {**DEFAULT_CAPS, **g.get("n_cap", {})}
            n_cap = {k: int(caps[k.value]) for k in kinds}
            columns = [build_column(e, sig) for e in g.get("formulas", [])]
            closure = []
            for e in g.get("closure", []):
                f = load_formula(e["text"], sig)
                if not isinstance(f, Lfp):
                    raise ConfigError(f"closure entry {e.get('name')} is not an lfp formula")
                closure.append(ClosureSpec(e["name"], f))
            groups.append(GroupSpec(g["label"], g["family"], structures, columns, closure, kinds, n_cap))
        return ProfileConfig(
            raw.get("name", "profile"),
            seed,
            raw.get("budget_ms"),
            raw.get("budget_nodes"),
            int(raw.get("workers", 1)),
            groups,
            raw,
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc!r}") from None
    except (FormulaError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, seed: int | None = None) -> ProfileConfig:
    p = Path(path)
    if not p.is_file():
        from importlib import resources

        bundled = resources.files("lfpbench") / "data" / p.name
        if not bundled.is_file():
            raise ConfigError(f"no config file {path}")
        text = bundled.read_text()
    else:
        text = p.read_text()
    return parse_config(json.loads(text), seed)


# -- profiling -----------------------------------------------------------------------------------


@dataclass
class Cell:
    n: int
    status: str
    certificate: PropertyCertificate | None

    def label(self) -> str:
        suffix = {"exact": "", "cap": "+", "budget": "?"}[self.status]
        return f"{self.n}{suffix}"


def growth_verdict(values: Sequence[int]) -> str:
    """Heuristic reading of a finite prefix of a column.

    ``unbounded-within-prefix`` when the column never decreases and its last
    value exceeds everything in the first half; ``plateaued`` otherwise.
    """
    vals = list(values)
    if len(vals) < 2:
        return "plateaued"
    nondecreasing = all(a <= b for a, b in zip(vals, vals[1:]))
    head = vals[: len(vals) // 2]
    if nondecreasing and vals[-1] > max(head):
        return "unbounded-within-prefix"
    return "plateaued"


@dataclass
class FamilyProfile:
    label: str
    family: str
    structures: list[FiniteStructure]
    columns: dict[tuple[str, str], list[Cell]] = field(default_factory=dict)
    closure: dict[str, list[int]] = field(default_factory=dict)

    def verdicts(self) -> dict[tuple[str, str], str]:
        return {key: growth_verdict([c.n for c in cells]) for key, cells in self.columns.items()}

    def closure_verdicts(self) -> dict[str, str]:
        return {k: growth_verdict(v) for k, v in self.closure.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = list(self.columns)
        w.writerow(
            ["structure", "size"] + [f"{f}:{k}" for f, k in keys] + [f"{f}:closure" for f in self.closure]
        )
        for i, m in enumerate(self.structures):
            row = [m.name, m.size] + [self.columns[key][i].label() for key in keys]
            row += [self.closure[f][i] for f in self.closure]
            w.writerow(row)
        return buf.getvalue()


def _cell(phi: PartitionedFormula, m: FiniteStructure, kind: PropertyKind, cap: int, budget: Budget) -> Cell:
    n, cert, status = max_property(kind, phi, m, cap, budget)
    return Cell(n, status, cert)


def profile_family(
    family: Sequence[FiniteStructure],
    formulas: Sequence[tuple[str, PartitionedFormula]],
    kinds: Sequence[PropertyKind],
    n_cap: dict[PropertyKind, int] | int,
    budget: Budget | None = None,
    closure: Sequence[tuple[str, Lfp]] = (),
    workers: int = 1,
    label: str = "",
    family_spec: str = "",
) -> FamilyProfile:
    """Maximal certified n for every (structure, formula, kind) cell.

    Budget exhaustion never aborts the run; the cell reports the best n
    found with status ``budget``.
    """
    budget = budget or Budget()
    caps = n_cap if isinstance(n_cap, dict) else {k: n_cap for k in kinds}
    jobs = [
        (fname, kind, i, phi, m)
        for fname, phi in formulas
        for kind in kinds
        for i, m in enumerate(family)
    ]

    def run(job):
        fname, kind, i, phi, m = job
        return _cell(phi, m, kind, caps[kind], budget)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    prof = FamilyProfile(label, family_spec, list(family))
    for (fname, kind, i, _, _), cell in zip(jobs, results):
        prof.columns.setdefault((fname, kind.value), []).append(cell)
    for cname, f in closure:
        prof.closure[cname] = [closure_ordinal(f.body, f.rel, f.vars, m) for m in family]
    return prof


def run_config(config: ProfileConfig, budget_ms: float | None = None, budget_nodes: int | None = None) -> list[FamilyProfile]:
    budget = Budget(budget_ms if budget_ms is not None else config.budget_ms,
                    budget_nodes if budget_nodes is not None else config.budget_nodes)
    out = []
    for g in config.groups:
        out.append(
            profile_family(
                g.structures,
                [(c.name, c.phi) for c in g.formulas],
                g.kinds,
                g.n_cap,
                budget,
                [(c.name, c.lfp) for c in g.closure],
                config.workers,
                g.label,
                g.family,
            )
        )
    return out


def build_report(config: ProfileConfig, profiles: Sequence[FamilyProfile]) -> dict[str, Any]:
    groups = []
    for g, prof in zip(config.groups, profiles):
        verdicts = prof.verdicts()
        columns = []
        for (fname, kind), cells in prof.columns.items():
            columns.append(
                {
                    "formula": fname,
                    "kind": kind,
                    "values": [c.n for c in cells],
                    "status": [c.status for c in cells],
                    "verdict": verdicts[(fname, kind)],
                    "certificates": [c.certificate.to_json() if c.certificate else None for c in cells],
                }
            )
        groups.append(
            {
                "label": g.label,
                "family": g.family,
                "structures": [{"name": m.name, "size": m.size} for m in prof.structures],
                "columns": columns,
                "closure": [
                    {"formula": k, "values": v, "verdict": growth_verdict(v)} for k, v in prof.closure.items()
                ],
            }
        )
    return {
        "config_name": config.name,
        "config_hash": config.digest,
        "seed": config.seed,
        "versions": {
            "lfpbench": __version__,
            "numpy": np.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
        "config": config.raw,
        "groups": groups,
    }


def write_report(config: ProfileConfig, profiles: Sequence[FamilyProfile], out: str | Path) -> list[Path]:
    """Write ``report.json``, ``certificates.json`` and one CSV per group into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    report = build_report(config, profiles)
    p = out / "report.json"
    p.write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    written.append(p)
    certs = []
    for g in report["groups"]:
        for col in g["columns"]:
            for s, c in zip(g["structures"], col["certificates"]):
                if c is not None:
                    certs.append({"group": g["label"], "formula": col["formula"], "structure": s["name"], "certificate": c})
    p = out / "certificates.json"
    p.write_text(json.dumps(certs, sort_keys=True, indent=1) + "\n")
    written.append(p)
    for i, prof in enumerate(profiles):
        slug = "".join(ch if ch.isalnum() else "-" for ch in prof.label.lower()).strip("-") or f"group{i}"
        p = out / f"profile-{i + 1:02d}-{slug}.csv"
        p.write_text(prof.to_csv())
        written.append(p)
    return written


def reverify_report(report: dict[str, Any], seed: int | None = None) -> tuple[int, list[str]]:
    """Rebuild formulas and structures from the embedded config and re-verify every certificate."""
    config = parse_config(report["config"], report.get("seed") if seed is None else seed)
    checked, failures = 0, []
    for g, gj in zip(config.groups, report["groups"]):
        columns = {c.name: c.phi for c in g.formulas}
        for col in gj["columns"]:
            phi = columns[col["formula"]]
            for m, c in zip(g.structures, col["certificates"]):
                if c is None:
                    continue
                checked += 1
                cert = PropertyCertificate.from_json(c)
                if not verify_witness(cert, phi, m):
                    failures.append(f"{g.label}/{col['formula']}/{col['kind']}/{m.name}")
    return checked, failures

import json

import pytest

from lfpbench.dividing import Budget, PropertyKind
from lfpbench.library import partitioned
from lfpbench.parser import parse_formula
from lfpbench.profile import (
    Cell,
    ConfigError,
    growth_verdict,
    load_config,
    parse_config,
    profile_family,
    reverify_report,
    run_config,
    write_report,
)
from lfpbench.structures import generate_family

SMALL = {
    "name": "small",
    "seed": 3,
    "workers": 2,
    "groups": [
        {
            "label": "order",
            "family": "linord:2..5",
            "formulas": [{"name": "lt", "text": "x < y"}],
            "kinds": ["OP", "IP"],
            "n_cap": {"OP": 9, "IP": 2},
        },
        {
            "label": "succ",
            "family": "succ:2..4",
            "formulas": [{"name": "reach-stage", "stage_preorder": "reach.lfp"}],
            "closure": [{"name": "reach", "text": "reach.lfp"}],
            "kinds": ["sOP"],
        },
    ],
}


@pytest.mark.parametrize(
    "values, verdict",
    [
        ([1, 2, 3, 4], "unbounded-within-prefix"),
        ([2, 2, 2, 2], "plateaued"),
        ([1, 2, 2, 2], "plateaued"),
        ([1, 3, 2, 4], "plateaued"),
        ([5], "plateaued"),
        ([1, 1, 1, 2], "unbounded-within-prefix"),
    ],
)
def test_growth_verdict(values, verdict):
    assert growth_verdict(values) == verdict


def test_cell_labels():
    assert [Cell(3, s, None).label() for s in ("exact", "cap", "budget")] == ["3", "3+", "3?"]


def test_profile_family_columns():
    fam = generate_family("linord:2..5")
    phi = partitioned(parse_formula("x < y", {"<": 2}))
    prof = profile_family(fam, [("lt", phi)], [PropertyKind.OP], 3)
    cells = prof.columns[("lt", "OP")]
    assert [c.label() for c in cells] == ["2", "3+", "3+", "3+"]
    assert prof.to_csv().splitlines()[0] == "structure,size,lt:OP"


def test_profile_family_budget_marks_cells():
    fam = generate_family("linord:4")
    phi = partitioned(parse_formula("x < y", {"<": 2}))
    prof = profile_family(fam, [("lt", phi)], [PropertyKind.OP], 9, budget=Budget(nodes=0))
    assert prof.columns[("lt", "OP")][0].label() == "0?"


def test_run_config_values():
    config = parse_config(SMALL)
    order, succ = run_config(config)
    assert [c.n for c in order.columns[("lt", "OP")]] == [2, 3, 4, 5]
    assert [c.n for c in order.columns[("lt", "IP")]] == [1, 1, 1, 1]
    assert [c.n for c in succ.columns[("reach-stage", "sOP")]] == [2, 3, 4]
    assert succ.closure == {"reach": [2, 3, 4]}
    assert order.verdicts() == {("lt", "OP"): "unbounded-within-prefix", ("lt", "IP"): "plateaued"}


def test_report_files_and_reverify(tmp_path):
    config = parse_config(SMALL)
    paths = write_report(config, run_config(config), tmp_path)
    assert sorted(p.name for p in paths) == ["certificates.json", "profile-01-order.csv", "profile-02-succ.csv", "report.json"]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["seed"] == 3 and report["config_hash"] == config.digest
    assert set(report["versions"]) == {"lfpbench", "numpy", "python"}
    checked, failures = reverify_report(report)
    assert checked == 4 + 4 + 3 and failures == []


def test_report_detects_tampering(tmp_path):
    config = parse_config(SMALL)
    write_report(config, run_config(config), tmp_path)
    report = json.loads((tmp_path / "report.json").read_text())
    cert = report["groups"][0]["columns"][0]["certificates"][1]
    cert["payload"]["b"] = list(reversed(cert["payload"]["b"]))
    checked, failures = reverify_report(report)
    assert failures == ["order/lt/OP/linord3"]


def test_reports_identical_across_workers(tmp_path):
    outs = []
    for workers in (1, 3):
        config = parse_config(SMALL)
        config.workers = workers
        d = tmp_path / str(workers)
        write_report(config, run_config(config), d)
        outs.append({p.name: p.read_bytes() for p in d.iterdir()})
    assert outs[0] == outs[1]


def test_seed_override():
    a, b = parse_config(SMALL), parse_config(SMALL, seed=11)
    assert a.seed == 3 and b.seed == 11


@pytest.mark.parametrize(
    "raw, message",
    [
        ({"groups": [{"label": "g", "family": "nope:3"}]}, "nope"),
        ({"groups": [{"family": "set:2"}]}, "malformed"),
        ({"groups": [{"label": "g", "family": "set:2", "formulas": [{"name": "a"}]}]}, "text"),
        ({"groups": [{"label": "g", "family": "set:2", "formulas": [{"name": "a", "text": "S(x,y)"}]}]}, "undeclared"),
        ({"groups": [{"label": "g", "family": "set:2", "closure": [{"name": "c", "text": "x = y"}]}]}, "not an lfp"),
        ({"groups": [{"label": "g", "family": "set:2", "kinds": ["XP"]}]}, "XP"),
    ],
)
def test_config_errors(raw, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(raw)


def test_load_bundled_config():
    config = load_config("figure1-desk.json")
    assert config.name == "figure1-desk"
    assert [g.label for g in config.groups] == ["pure set", "successor", "linear order", "paley"]
    with pytest.raises(ConfigError):
        load_config("missing-config.json")

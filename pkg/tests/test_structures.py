import itertools
import json

import pytest

from lfpbench.structures import (
    StructureError,
    disjoint_union,
    generate_family,
    linear_order,
    load_structure,
    paley,
    parse_family,
    pure_set,
    quadratic_residues,
    random_graph,
    resolve_structure,
    successor,
)


def _rel(m, name):
    return {tuple(t) for t in m.relations[name]}


def test_load_from_text():
    m = load_structure('{"size":3,"relations":{"S":[[0,1],[1,2]]}}')
    assert m.size == 3
    assert _rel(m, "S") == {(0, 1), (1, 2)}
    assert m.holds("S", 0, 1) and not m.holds("S", 1, 0)


def test_load_singleton_pure_set():
    m = load_structure({"size": 1, "relations": {}})
    assert m.size == 1 and dict(m.relations) == {}


@pytest.mark.parametrize(
    "data, message",
    [
        ({"size": 2, "relations": {"S": [[0, 5]]}}, "5"),
        ({"size": 2, "relations": {"S": [[0, 1], [1]]}}, "arit"),
        ({"relations": {}}, "size"),
        ({"size": 0, "relations": {}}, "size"),
        ({"size": 2, "relations": {"S": [[0, "a"]]}}, "non-integer"),
    ],
)
def test_load_rejects(data, message):
    with pytest.raises(StructureError, match=message):
        load_structure(data)


def test_load_from_file(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"name": "tiny", "size": 2, "relations": {"E": [[0, 1], [1, 0]]}}))
    m = load_structure(p)
    assert m.name == "tiny" and _rel(m, "E") == {(0, 1), (1, 0)}
    with pytest.raises(StructureError, match="cannot read"):
        load_structure(tmp_path / "missing.json")
    p.write_text("{not json")
    with pytest.raises(StructureError, match="malformed"):
        load_structure(p)


def test_json_round_trip():
    m = paley(13)
    assert load_structure(m.to_json()) == m


def test_linear_order_family():
    fam = generate_family("linord:2..4")
    assert [m.size for m in fam] == [2, 3, 4]
    assert _rel(fam[1], "<") == {(0, 1), (0, 2), (1, 2)}


@pytest.mark.parametrize("m", range(1, 13))
def test_linear_order_axioms(m):
    lt = _rel(linear_order(m), "<")
    for a, b in itertools.product(range(m), repeat=2):
        assert ((a, b) in lt) + ((b, a) in lt) == (a != b)
    assert all((a, a) not in lt for a in range(m))
    for a, b, c in itertools.product(range(m), repeat=3):
        if (a, b) in lt and (b, c) in lt:
            assert (a, c) in lt


def test_successor():
    assert _rel(successor(4), "S") == {(0, 1), (1, 2), (2, 3)}


def test_paley5_is_five_cycle():
    assert quadratic_residues(5) == {1, 4}
    e = _rel(paley(5), "E")
    assert e == {(i, (i + d) % 5) for i in range(5) for d in (1, 4)}


@pytest.mark.parametrize("q", [5, 13, 17, 29])
def test_paley_symmetric_irreflexive(q):
    e = _rel(paley(q), "E")
    assert all((b, a) in e for a, b in e)
    assert all((a, a) not in e for a in range(q))
    # each vertex has (q-1)/2 neighbours
    assert len(e) == q * (q - 1) // 2


@pytest.mark.parametrize("q", [7, 9, 15, 1])
def test_paley_rejects_bad_sizes(q):
    with pytest.raises(StructureError):
        generate_family(f"paley:{q}")


def test_random_graph_deterministic_and_symmetric():
    a, b = random_graph(10, 7), random_graph(10, 7)
    assert a == b
    assert random_graph(10, 8) != a
    e = _rel(a, "E")
    assert all((y, x) in e for x, y in e) and all(x != y for x, y in e)


def test_random_graph_edge_density_is_about_half():
    m = random_graph(60, 3)
    pairs = 60 * 59 // 2
    edges = len(m.relations["E"]) // 2
    assert abs(edges / pairs - 0.5) < 0.05


def test_family_seed_option_and_default_seed():
    assert generate_family("rg:6:seed=4") == [random_graph(6, 4)]
    assert generate_family("rg:6", default_seed=4) == [random_graph(6, 4)]
    assert parse_family("rg:3..5:seed=2").seed == 2


def test_disjoint_union_markers():
    m = disjoint_union(successor(2), linear_order(2))
    assert m.size == 4
    assert _rel(m, "S") == {(0, 1)}
    assert _rel(m, "<") == {(2, 3)}
    assert _rel(m, "L") == {(0,), (1,)}
    assert _rel(m, "R") == {(2,), (3,)}


def test_disjoint_union_with_singleton():
    m = disjoint_union(successor(3), pure_set(1))
    assert m.size == 4
    assert _rel(m, "S") == {(0, 1), (1, 2)}


def test_disjoint_union_renames_collisions():
    m = disjoint_union(paley(5), paley(5))
    assert m.size == 10
    assert len(m.relations["E"]) + len(m.relations["E_2"]) == 20
    # ten undirected edges in total
    assert (len(_rel(m, "E")) + len(_rel(m, "E_2"))) // 2 == 10
    assert all(a >= 5 and b >= 5 for a, b in _rel(m, "E_2"))


def test_union_family_pairs_by_index():
    fam = generate_family("union(succ:2..4, linord:2..4)")
    assert [m.size for m in fam] == [4, 6, 8]
    with pytest.raises(StructureError, match="pair by index"):
        generate_family("union(succ:2..4, linord:2..3)")


@pytest.mark.parametrize("bad", ["linord", "nope:3", "linord:4..2", "linord:x", "rg:3:colour=2", "union(succ:2)"])
def test_bad_family_specs(bad):
    with pytest.raises(StructureError):
        generate_family(bad)


def test_resolve_structure():
    assert resolve_structure("succ:4") == successor(4)
    with pytest.raises(StructureError, match="expected one"):
        resolve_structure("succ:2..4")
    assert resolve_structure('{"size":2,"relations":{}}').size == 2


def test_names():
    assert [m.name for m in generate_family("set:2,3")] == ["set2", "set3"]
    assert random_graph(5, 1).name == "rg5s1"

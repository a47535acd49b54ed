import json
from fractions import Fraction

import pytest

from mechlab import (
    CATALOG_NAMES,
    GeneratorSpec,
    InstanceFormatError,
    dumps_instance,
    enumerate_unit_density,
    generate,
    golden_ratio_approx,
    lb_det_family,
    lb_rand_family,
    loads_instance,
    paper_deviation,
    paper_instance,
    read_instance,
    solve_opt,
    write_instance,
)
from mechlab.instances import GENERATOR_KINDS, fibonacci


def test_golden_ratio_approximation():
    g = golden_ratio_approx(16)
    assert (fibonacci(16), fibonacci(17)) == (987, 1597)
    assert g.phi_k == Fraction(1597, 987)
    assert g.inverse == Fraction(987, 1597)
    assert abs(g.phi_k - Fraction(1618034, 1000000)) < g.error_bound + Fraction(1, 10**6)
    assert golden_ratio_approx(2).phi_k == 2


def test_lower_bound_families():
    E, Ep = lb_det_family(16, Fraction(1, 1000))
    phi = Fraction(1597, 987)
    assert E.capacity == phi + 1 - Fraction(1, 1000)
    assert sorted(it.value for it in E.items) == [1, phi - Fraction(1, 1000), phi]
    assert Ep.ids == {0, 2}
    with pytest.raises(ValueError):
        lb_det_family(16, Fraction(1))
    R, Rp = lb_rand_family(16)
    assert R.capacity == 2 and len(Rp) == 2
    with pytest.raises(ValueError):
        lb_rand_family(1)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_catalog_instances_are_valid(name):
    inst = paper_instance(name)
    assert len(inst) > 0
    hidden = paper_deviation(name)
    if hidden is not None:
        agent, item = hidden
        assert inst.item(item).owner == agent


def test_catalog_optima():
    assert solve_opt(paper_instance("figure1").items, 10).value == 70
    assert solve_opt(paper_instance("intro_funding").items, 1).value == 1
    assert solve_opt(paper_instance("fig4_left").items, 10).value == 10


def test_unknown_catalog_name():
    with pytest.raises(KeyError):
        paper_instance("figure9")


@pytest.mark.parametrize("kind", GENERATOR_KINDS)
def test_generator_is_deterministic(kind):
    spec = GeneratorSpec(kind, seed=3)
    first = [generate(spec, k) for k in range(20)]
    assert first == [generate(spec, k) for k in range(20)]
    other = [generate(spec.with_seed(4), k) for k in range(20)]
    if kind in ("general_random", "unit_density_random", "tie_heavy"):
        assert first != other


def test_generator_respects_bounds():
    spec = GeneratorSpec("general_random", min_items=2, max_items=5, max_agents=2, max_value=3,
                         max_size=2, max_denominator=5)
    for k in range(200):
        inst = generate(spec, k)
        assert 2 <= len(inst) <= 5 and 1 <= inst.agent_count <= 2
        for it in inst.items:
            assert it.value <= 3 and it.size <= 2 and it.size <= inst.capacity
            assert it.value.denominator <= 5
        assert len({it.value for it in inst.items}) == len(inst)


def test_unit_density_generator():
    spec = GeneratorSpec("unit_density_random")
    assert all(generate(spec, k).unit_density for k in range(100))


def test_capacity_rules():
    fixed = GeneratorSpec("general_random", capacity_rule="fixed:5/2")
    assert all(generate(fixed, k).capacity == Fraction(5, 2) for k in range(50))
    frac = GeneratorSpec("general_random", min_items=3, capacity_rule="fraction:3/4")
    for k in range(50):
        inst = generate(frac, k)
        assert inst.capacity == Fraction(3, 4) * inst.total_size
    hopeless = GeneratorSpec("general_random", min_items=1, max_items=1, capacity_rule="fraction:1/2")
    with pytest.raises(ValueError):
        generate(hopeless, 0)


@pytest.mark.parametrize("kwargs", [
    dict(kind="planar"),
    dict(min_items=3, max_items=2),
    dict(min_agents=0),
    dict(max_value=0),
    dict(max_denominator=0),
    dict(capacity_rule="fixed"),
    dict(capacity_rule="fraction:-1"),
])
def test_generator_spec_validation(kwargs):
    with pytest.raises(ValueError):
        GeneratorSpec(**kwargs)


def test_hyphenated_kind():
    assert GeneratorSpec("unit-density-random").kind == "unit_density_random"


def test_exhaustive_enumeration_size():
    small = list(enumerate_unit_density(2, 2, range(1, 3), 4))
    assert all(inst.unit_density and len(inst) <= 2 for inst in small)
    # n=1: 1 + 2 + 3 ; n=2: 1 + 4 + 10
    assert len(small) == 21
    with pytest.raises(ValueError):
        list(enumerate_unit_density(1, 1, range(1, 12), 10))


def test_file_round_trip(tmp_path):
    inst = paper_instance("figure1")
    path = tmp_path / "fig1.json"
    write_instance(inst, path)
    assert read_instance(path) == inst
    assert loads_instance(dumps_instance(inst)) == inst


def test_missing_size_means_unit_density():
    inst = loads_instance('{"capacity": "3/2", "agents": 2, "items": [{"id": 4, "owner": 1, "value": "1/2"}]}')
    assert inst.unit_density and inst.item(4).size == Fraction(1, 2)
    assert inst.capacity == Fraction(3, 2)


@pytest.mark.parametrize("doc, needle", [
    ('{"capacity": 1', "line 1"),
    ('[]', "top level"),
    ('{"capacity": "1", "agents": 1}', "missing"),
    ('{"capacity": "1", "agents": 1, "items": [], "name": "x"}', "unknown"),
    ('{"capacity": "1", "agents": 1, "items": [{"id": 0, "owner": 0}]}', "items[0]"),
    ('{"capacity": "1", "agents": 1, "items": [{"id": 0, "owner": 0, "value": "1", "colour": 2}]}', "colour"),
    ('{"capacity": "x", "agents": 1, "items": []}', "capacity"),
    ('{"capacity": "1", "agents": 1, "items": [{"id": 0, "owner": 0, "value": "2"}]}', "exceeds"),
])
def test_file_format_errors(doc, needle):
    with pytest.raises(InstanceFormatError) as info:
        loads_instance(doc)
    assert needle in str(info.value)


def test_read_reports_path(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"capacity": "1"}))
    with pytest.raises(InstanceFormatError, match="bad.json"):
        read_instance(bad)

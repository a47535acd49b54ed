from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

import oracles
from mechlab import (
    GeneratorSpec,
    Instance,
    MechanismId,
    ValueCache,
    audit_approximation,
    audit_instance,
    audit_strategyproofness,
    enumerate_deviations,
    lower_bound_probe,
    paper_instance,
    run_sweep,
)
from mechlab.audit import SpViolation, degenerate_flag, has_optimum_tie, instance_hash
from strategies import FAST_SETTINGS, general_instances, ud_instances


def _signature(violations):
    return sorted((v.deviation.agent, tuple(sorted(v.deviation.hidden)), v.gain) for v in violations)


@FAST_SETTINGS
@given(general_instances(max_items=6), st.sampled_from(["naive_greedy", "greedy", "best_individual"]))
def test_full_subset_audit_matches_brute_force(inst, name):
    found = audit_strategyproofness(name, inst, "full_subsets", "universal")
    want = oracles.deviation_gains(name, inst)
    assert _signature(found) == sorted((a, tuple(sorted(h)), g) for a, h, _, g in want)


@FAST_SETTINGS
@given(ud_instances(max_items=6, distinct=False), st.sampled_from(["fit_two:1/2", "large_fit"]))
def test_unit_density_audit_matches_brute_force(inst, spec):
    m = MechanismId.parse(spec)
    found = audit_strategyproofness(m, inst)
    assert _signature(found) == sorted(
        (a, tuple(sorted(h)), g) for a, h, _, g in oracles.deviation_gains(m.name, inst, m.beta))


def test_enumerate_deviations_counts():
    inst = paper_instance("figure1")
    full = list(enumerate_deviations(inst, "full_subsets"))
    # agents own 2, 2 and 3 items
    assert len(full) == 3 + 3 + 7
    for d in full:
        assert d.hidden and all(inst.item(i).owner == d.agent for i in d.hidden)
        assert d.resulting_instance.ids == d.base_instance.ids - d.hidden
    closure = list(enumerate_deviations(inst, "single-item-closure"))
    assert all(len(d.hidden) == 1 for d in closure)
    assert {d.resulting_instance for d in full} <= {d.resulting_instance for d in closure}


def test_enumerate_rejects_unknown_mode():
    with pytest.raises(ValueError):
        list(enumerate_deviations(paper_instance("figure1"), "pairs"))


def test_figure1_report():
    r = audit_instance("naive_greedy", paper_instance("figure1"), instance_id="fig1")
    assert r.instance_id == "fig1"
    assert len(r.violations) == 2 and r.worst_gain == 8
    assert r.degenerate and len(r.degenerate_violations) == 2 and not r.clean_violations
    assert r.mechanism_value == 61 and r.opt_value == 70 and r.ratio == Fraction(61, 70)
    assert not r.passed


def test_universal_vs_expectation_semantics():
    # universal SP compares branch by branch, so it is at least as strict
    spec = GeneratorSpec("tie_heavy")
    from mechlab import generate

    for k in range(200):
        inst = generate(spec, k)
        uni = audit_strategyproofness("randomized_greedy", inst, semantics="universal")
        exp = audit_strategyproofness("randomized_greedy", inst, semantics="expectation")
        if exp:
            assert uni


def test_violation_requires_positive_gain():
    d = next(iter(enumerate_deviations(paper_instance("figure1"))))
    with pytest.raises(ValueError):
        SpViolation(d, Fraction(3), Fraction(3), Fraction(0))


def test_cache_is_reused():
    cache = ValueCache()
    inst = paper_instance("figure1")
    audit_instance("greedy", inst, cache=cache)
    size = len(cache)
    audit_instance("greedy", inst, cache=cache)
    assert len(cache) == size > 0


def test_errors_are_captured_or_raised():
    inst = paper_instance("figure1")
    r = audit_instance("large_fit", inst, capture_errors=True)
    assert r.error and r.error_kind == "applicability" and not r.passed
    with pytest.raises(ValueError):
        audit_instance("large_fit", inst)


def test_approximation_only_report():
    r = audit_approximation("single_greedy", paper_instance("figure1"))
    assert r.ratio == Fraction(69, 70) and r.floor == Fraction(1, 3) and r.ratio_ok
    empty = audit_approximation("greedy", Instance((), 3, 1))
    assert empty.ratio == 1


def test_degenerate_markers():
    assert has_optimum_tie(Instance.from_tuples([(0, 3, 1), (1, 3, 2)], 4))
    assert not degenerate_flag(Instance.from_tuples([(0, 3, 1), (1, 2, 2)], 4))
    assert instance_hash(paper_instance("figure1")) == instance_hash(paper_instance("figure1"))
    assert len(instance_hash(paper_instance("figure1"))) == 12


def test_sweep_is_independent_of_workers():
    spec = GeneratorSpec("general_random", max_items=5)
    one = run_sweep(spec, 40, ["greedy", "naive_greedy"], workers=1)
    two = run_sweep(spec, 40, ["greedy", "naive_greedy"], workers=2)
    key = lambda res: [(r.instance_id, str(r.mechanism), r.ratio, _signature(r.violations)) for r in res.reports]
    assert key(one) == key(two)
    assert one.summary["greedy"].clean
    assert one.summary["greedy"].instances == 40


def test_sweep_records_generation_failures():
    spec = GeneratorSpec("general_random", capacity_rule="fixed:1/1000", max_size=10, max_denominator=1)
    res = run_sweep(spec, 3, ["greedy"])
    assert res.summary["greedy"].instances == 3


def test_lower_bound_probes():
    det = lower_bound_probe("fit_two:987/1597", "det")
    assert det.ratio == Fraction(1597000, 2583013) and det.deviated_ratio == 1
    assert det.min_ratio == det.ratio
    rand = lower_bound_probe("randomized_fit", "rand")
    assert rand.ratio == Fraction(1597, 1974)
    with pytest.raises(ValueError):
        lower_bound_probe("greedy", "det")
    with pytest.raises(ValueError):
        lower_bound_probe("large_fit", "cubic")

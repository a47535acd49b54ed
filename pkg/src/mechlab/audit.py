"""Strategyproofness and approximation audits, sweeps and lower-bound probes.

Agents can only hide their own items, so a deviation is a pair (agent,
hidden subset).  The audits enumerate deviations exhaustively and compare
exact per-agent values; nothing is sampled.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import lcm

from .core import (
    Instance,
    InstanceTooLargeError,
    MechlabError,
    NotApplicableError,
    agent_opt,
    is_degenerate,
    solve_opt,
    to_rational,
)
from .general import MechanismId, ratio_floor, run_mechanism

SP_MODES = ("full_subsets", "single_item_closure")
SP_SEMANTICS = ("universal", "expectation")
MAX_AGENT_ITEMS = 12


def _norm_choice(value: str, allowed: tuple, what: str) -> str:
    value = value.replace("-", "_")
    if value not in allowed:
        raise ValueError(f"unknown {what} {value!r}; choose from {', '.join(allowed)}")
    return value


def _as_mechanism(mechanism) -> MechanismId:
    return MechanismId.parse(mechanism) if isinstance(mechanism, str) else mechanism


def instance_hash(instance: Instance) -> str:
    """Short stable digest of the instance content (ids included)."""
    text = repr((
        str(instance.capacity),
        instance.agent_count,
        tuple((it.id, it.owner, str(it.value), str(it.size)) for it in instance.items),
    ))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def has_optimum_tie(instance: Instance) -> bool:
    """Two agents share the largest individual optimum (a tie the argmax must break)."""
    values = sorted((agent_opt(instance, a).value for a in range(instance.agent_count)), reverse=True)
    return len(values) > 1 and values[0] > 0 and values[0] == values[1]


def degenerate_flag(instance: Instance) -> bool:
    """Repeated values or sizes, or a tie between the best individual optima."""
    return is_degenerate(instance) or has_optimum_tie(instance)


# --- deviations -----------------------------------------------------------

@dataclass(frozen=True)
class Deviation:
    """Agent ``agent`` hides ``hidden`` from ``base_instance``.

    In full-subset mode the base is the audited instance itself; in closure
    mode it is a sub-instance reached by earlier deletions of the same agent.
    """

    agent: int
    hidden: frozenset
    base_instance: Instance
    resulting_instance: Instance


def _check_agent_size(instance: Instance, agent: int):
    count = len(instance.agent_items(agent))
    if count > MAX_AGENT_ITEMS:
        raise InstanceTooLargeError(
            f"agent {agent} owns {count} items; deviation enumeration allows at most {MAX_AGENT_ITEMS}"
        )


def _deviation_steps(instance: Instance, mode: str):
    """Yield ``(agent, hidden positions, base, kept positions)`` lazily.

    Positions index ``base.items``; the resulting instance is only built
    when a caller needs it.
    """
    for a in range(instance.agent_count):
        _check_agent_size(instance, a)
    for a in range(instance.agent_count):
        m = len(instance.items)
        own = [k for k, it in enumerate(instance.items) if it.owner == a]
        if mode == "full_subsets":
            for r in range(1, len(own) + 1):
                for hidden in combinations(own, r):
                    drop = set(hidden)
                    yield a, hidden, instance, tuple(k for k in range(m) if k not in drop)
        else:
            for r in range(len(own)):
                for removed in combinations(own, r):
                    base = instance.without_positions(removed) if removed else instance
                    mb = len(base.items)
                    for k, it in enumerate(base.items):
                        if it.owner == a:
                            yield a, (k,), base, tuple(j for j in range(mb) if j != k)


def enumerate_deviations(instance: Instance, mode: str = "full_subsets"):
    """Yield every deviation of the chosen mode, agent by agent.

    ``full_subsets``: every non-empty subset of every agent's items.
    ``single_item_closure``: every single-item deletion from every
    sub-instance obtained by deleting some of one agent's items.
    """
    mode = _norm_choice(mode, SP_MODES, "sp mode")
    for a, hidden, base, keep in _deviation_steps(instance, mode):
        yield Deviation(a, frozenset(base.items[k].id for k in hidden), base, base._derive(keep))


# --- mechanism evaluation with memo ---------------------------------------

@dataclass(frozen=True)
class _Evaluation:
    """Per-agent values of one mechanism run, as integer numerators.

    Branch values are ``branch_nums[b][a] / den``; expected values are
    ``exp_nums[a] / exp_den``.
    """

    labels: tuple
    den: int
    branch_nums: tuple
    exp_den: int
    exp_nums: tuple
    expected_total: Fraction

    def branch_value(self, b: int, agent: int) -> Fraction:
        return Fraction(self.branch_nums[b][agent], self.den)

    def expected(self, agent: int) -> Fraction:
        return Fraction(self.exp_nums[agent], self.exp_den)


class ValueCache:
    """Memo of mechanism results keyed by instance signature.

    Mechanisms only compare ids, so instances with equal signatures give the
    same per-agent values; exhaustive audits revisit the same sub-instances
    many times.
    """

    def __init__(self):
        self._store = {}

    def __len__(self):
        return sum(len(t) for t in self._store.values())

    def table(self, mechanism: MechanismId) -> dict:
        return self._store.setdefault(str(mechanism), {})

    def evaluate(self, mechanism: MechanismId, instance: Instance, table: dict | None = None) -> _Evaluation:
        if table is None:
            table = self.table(mechanism)
        key = instance.signature()
        hit = table.get(key)
        if hit is None:
            hit = _evaluate(mechanism, instance)
            table[key] = hit
        return hit


def _evaluate(mechanism: MechanismId, instance: Instance) -> _Evaluation:
    dist = run_mechanism(mechanism, instance)
    sc = instance.scaled()
    pos = {i: k for k, i in enumerate(sc.ids)}
    n = instance.agent_count
    branch_nums = []
    for b in dist.branches:
        nums = [0] * n
        for i in b.outcome.packed:
            k = pos[i]
            nums[sc.owners[k]] += sc.v[k]
        branch_nums.append(tuple(nums))
    P = lcm(*(b.probability.denominator for b in dist.branches))
    weights = [b.probability.numerator * (P // b.probability.denominator) for b in dist.branches]
    exp_nums = tuple(sum(w * nums[a] for w, nums in zip(weights, branch_nums)) for a in range(n))
    return _Evaluation(dist.labels, sc.scale, tuple(branch_nums), P * sc.scale, exp_nums, dist.expected_value())


# --- strategyproofness ----------------------------------------------------

@dataclass(frozen=True)
class SpViolation:
    """A profitable deviation.  ``branch`` is set under universal semantics."""

    deviation: Deviation
    truthful_value: Fraction
    deviant_value: Fraction
    gain: Fraction
    branch: str | None = None
    degenerate: bool = False

    def __post_init__(self):
        if self.gain != self.deviant_value - self.truthful_value or self.gain <= 0:
            raise ValueError("a violation needs gain = deviant - truthful > 0")


def audit_strategyproofness(mechanism, instance: Instance, mode: str = "full_subsets",
                            semantics: str = "universal", cache: ValueCache | None = None) -> list:
    """Every profitable deviation of the chosen mode.

    Universal semantics checks each branch of the lottery separately,
    matching branches by label; expectation semantics compares expected
    per-agent values.  An empty list means no agent gains by hiding.
    """
    mechanism = _as_mechanism(mechanism)
    mode = _norm_choice(mode, SP_MODES, "sp mode")
    semantics = _norm_choice(semantics, SP_SEMANTICS, "sp semantics")
    cache = cache if cache is not None else ValueCache()
    universal = semantics == "universal"
    table = cache.table(mechanism)
    evaluate = cache.evaluate
    flags = {}

    def flag(inst):
        key = inst.signature()
        if key not in flags:
            flags[key] = degenerate_flag(inst)
        return flags[key]

    found = []
    for a, hidden, base, keep in _deviation_steps(instance, mode):
        before = evaluate(mechanism, base, table)
        sig = base.signature()
        rows = sig[3]
        key = (sig[0], sig[1], sig[2], tuple(rows[k] for k in keep))
        after = table.get(key)
        result = None
        if after is None:
            result = base._derive(keep)
            after = _evaluate(mechanism, result)
            table[key] = after
        gains = []
        if universal:
            if after.labels != before.labels:
                raise MechlabError(f"branch labels changed after deviation: {before.labels} vs {after.labels}")
            for b in range(len(before.labels)):
                if after.branch_nums[b][a] * before.den > before.branch_nums[b][a] * after.den:
                    gains.append((before.labels[b], before.branch_value(b, a), after.branch_value(b, a)))
        elif after.exp_nums[a] * before.exp_den > before.exp_nums[a] * after.exp_den:
            gains.append((None, before.expected(a), after.expected(a)))
        if gains:
            if result is None:
                result = base._derive(keep)
            dev = Deviation(a, frozenset(base.items[k].id for k in hidden), base, result)
            degenerate = flag(base) or flag(result)
            for label, truthful, deviant in gains:
                found.append(SpViolation(dev, truthful, deviant, deviant - truthful, label, degenerate))
    return found


# --- approximation and combined reports -----------------------------------

@dataclass
class AuditReport:
    instance_id: str
    mechanism: MechanismId
    sp_mode: str | None = None
    sp_semantics: str | None = None
    violations: list = field(default_factory=list)
    mechanism_value: Fraction | None = None
    opt_value: Fraction | None = None
    ratio: Fraction | None = None
    floor: Fraction | None = None
    degenerate: bool = False
    error: str | None = None
    error_kind: str | None = None

    @property
    def clean_violations(self) -> list:
        return [v for v in self.violations if not v.degenerate]

    @property
    def degenerate_violations(self) -> list:
        """Findings on tied inputs, outside the distinctness assumption."""
        return [v for v in self.violations if v.degenerate]

    @property
    def worst_violation(self) -> SpViolation | None:
        # largest gain; the first one found wins ties
        best = None
        for v in self.violations:
            if best is None or v.gain > best.gain:
                best = v
        return best

    @property
    def worst_gain(self) -> Fraction:
        w = self.worst_violation
        return w.gain if w is not None else Fraction(0)

    @property
    def ratio_ok(self) -> bool:
        return self.ratio is not None and self.floor is not None and self.ratio >= self.floor

    @property
    def passed(self) -> bool:
        return self.error is None and not self.violations and self.ratio_ok


def _error_kind(exc: Exception) -> str:
    if isinstance(exc, InstanceTooLargeError):
        return "size"
    if isinstance(exc, NotApplicableError):
        return "applicability"
    if isinstance(exc, (MechlabError, ValueError)):
        return "input"
    return "internal"


def _fill_approximation(report: AuditReport, mechanism: MechanismId, instance: Instance, cache):
    ev = cache.evaluate(mechanism, instance)
    opt = solve_opt(instance.items, instance.capacity).value
    report.mechanism_value = ev.expected_total
    report.opt_value = opt
    report.ratio = ev.expected_total / opt if opt > 0 else Fraction(1)
    report.floor = ratio_floor(mechanism, instance)


def audit_approximation(mechanism, instance: Instance, instance_id: str | None = None,
                        cache: ValueCache | None = None) -> AuditReport:
    """Exact ratio of the expected mechanism value to the optimum (1 if Opt is 0)."""
    mechanism = _as_mechanism(mechanism)
    cache = cache if cache is not None else ValueCache()
    report = AuditReport(instance_id or instance_hash(instance), mechanism)
    report.degenerate = degenerate_flag(instance)
    _fill_approximation(report, mechanism, instance, cache)
    return report


def audit_instance(mechanism, instance: Instance, mode: str = "full_subsets", semantics: str = "universal",
                   instance_id: str | None = None, cache: ValueCache | None = None,
                   capture_errors: bool = False) -> AuditReport:
    """Strategyproofness and approximation audit of one instance."""
    mechanism = _as_mechanism(mechanism)
    mode = _norm_choice(mode, SP_MODES, "sp mode")
    semantics = _norm_choice(semantics, SP_SEMANTICS, "sp semantics")
    cache = cache if cache is not None else ValueCache()
    report = AuditReport(instance_id or instance_hash(instance), mechanism, mode, semantics)
    try:
        report.degenerate = degenerate_flag(instance)
        report.violations = audit_strategyproofness(mechanism, instance, mode, semantics, cache)
        _fill_approximation(report, mechanism, instance, cache)
    except (MechlabError, ValueError, KeyError) as exc:
        if not capture_errors:
            raise
        report.error = f"{type(exc).__name__}: {exc}"
        report.error_kind = _error_kind(exc)
    return report


# --- sweeps ---------------------------------------------------------------

@dataclass
class MechanismSummary:
    mechanism: MechanismId
    instances: int = 0
    errors: int = 0
    violations: int = 0
    degenerate_violations: int = 0
    min_ratio: Fraction | None = None
    min_ratio_instance: str | None = None
    floor_breaches: int = 0
    worst_violation: SpViolation | None = None
    worst_violation_instance: str | None = None

    def add(self, report: AuditReport):
        self.instances += 1
        if report.error is not None:
            self.errors += 1
            return
        self.violations += len(report.violations)
        self.degenerate_violations += len(report.degenerate_violations)
        if self.min_ratio is None or report.ratio < self.min_ratio:
            self.min_ratio = report.ratio
            self.min_ratio_instance = report.instance_id
        if not report.ratio_ok:
            self.floor_breaches += 1
        w = report.worst_violation
        if w is not None and (self.worst_violation is None or w.gain > self.worst_violation.gain):
            self.worst_violation = w
            self.worst_violation_instance = report.instance_id

    @property
    def clean(self) -> bool:
        return self.errors == 0 and self.violations == 0 and self.floor_breaches == 0


@dataclass
class SweepResult:
    reports: list
    summary: dict  # str(mechanism) -> MechanismSummary

    @property
    def clean(self) -> bool:
        return all(s.clean for s in self.summary.values())


def _sweep_chunk(args):
    from .instances import generate

    spec, indices, mechanisms, mode, semantics = args
    cache = ValueCache()
    out = []
    for index in indices:
        iid = f"{spec.kind}/{spec.seed}/{index}"
        try:
            instance = generate(spec, index)
        except (MechlabError, ValueError) as exc:
            for mech in mechanisms:
                out.append(AuditReport(iid, mech, mode, semantics, error=f"{type(exc).__name__}: {exc}",
                                       error_kind="input"))
            continue
        for mech in mechanisms:
            out.append(audit_instance(mech, instance, mode, semantics, iid, cache, capture_errors=True))
    return out


def run_sweep(spec, count: int, mechanisms, mode: str = "full_subsets", semantics: str = "universal",
              seed: int | None = None, workers: int | None = 1) -> SweepResult:
    """Audit instances ``0 .. count-1`` of a generator stream.

    Per-instance failures become report entries with ``error`` set.  Reports
    are ordered by instance index, then mechanism, whatever ``workers`` is
    (``None`` means one worker per available core).
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if seed is not None:
        spec = spec.with_seed(seed)
    mechanisms = [_as_mechanism(m) for m in mechanisms]
    mode = _norm_choice(mode, SP_MODES, "sp mode")
    semantics = _norm_choice(semantics, SP_SEMANTICS, "sp semantics")
    if workers is None:
        workers = os.cpu_count() or 1
    indices = list(range(count))
    if workers <= 1 or count < 2:
        reports = _sweep_chunk((spec, indices, mechanisms, mode, semantics))
    else:
        # contiguous chunks keep sub-instance memo hits local to a worker
        size = -(-count // (workers * 4))
        chunks = [indices[k : k + size] for k in range(0, count, size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_sweep_chunk, [(spec, c, mechanisms, mode, semantics) for c in chunks])
            reports = [r for part in parts for r in part]
    summary = {str(m): MechanismSummary(m) for m in mechanisms}
    for r in reports:
        summary[str(r.mechanism)].add(r)
    return SweepResult(reports, summary)


# --- lower-bound probes ---------------------------------------------------

@dataclass
class ProbeReport:
    mechanism: MechanismId
    family: str
    k: int
    epsilon: Fraction | None
    phi_k: Fraction
    instance: Instance
    deviated_instance: Instance
    value: Fraction
    deviated_value: Fraction
    opt_value: Fraction
    deviated_opt_value: Fraction
    ratio: Fraction
    deviated_ratio: Fraction
    agent_value: Fraction
    deviated_agent_value: Fraction
    ceiling: Fraction
    ceiling_label: str
    floor: Fraction
    degenerate: bool

    @property
    def min_ratio(self) -> Fraction:
        return min(self.ratio, self.deviated_ratio)

    @property
    def sp_linkage_ok(self) -> bool:
        """The hiding agent (agent 0) does not gain by dropping its second item."""
        return self.deviated_agent_value <= self.agent_value


def lower_bound_probe(mechanism, family: str, k: int = 16, epsilon=Fraction(1, 1000)) -> ProbeReport:
    """Run a mechanism on both instances of a lower-bound witness pair.

    Agent 0 hides one item to go from the first instance to the second, so
    a strategyproof mechanism cannot do well on both; the smaller of the two
    ratios is the mechanism's score on the pair.
    """
    from .instances import golden_ratio_approx, lb_det_family, lb_rand_family

    mechanism = _as_mechanism(mechanism)
    family = family.replace("-", "_")
    if not mechanism.unit_density_only:
        raise NotApplicableError(f"lower-bound probes take a unit-density mechanism, got {mechanism}")
    if k < 2:
        raise ValueError("k must be at least 2")
    phi = golden_ratio_approx(k).phi_k
    if family == "det":
        epsilon = to_rational(epsilon)
        E, E2 = lb_det_family(k, epsilon)
        ceiling, label = phi / (phi + 1 - epsilon), "phi_k/(phi_k+1-eps); the deterministic ceiling is 1/phi"
    elif family == "rand":
        epsilon = None
        E, E2 = lb_rand_family(k)
        ceiling, label = 1 / (5 * phi - 7), "1/(5 phi_k - 7), the randomized ceiling"
    else:
        raise ValueError(f"unknown family {family!r}; choose det or rand")

    ev, ev2 = _evaluate(mechanism, E), _evaluate(mechanism, E2)
    opt, opt2 = solve_opt(E.items, E.capacity).value, solve_opt(E2.items, E2.capacity).value
    return ProbeReport(
        mechanism=mechanism,
        family=family,
        k=k,
        epsilon=epsilon,
        phi_k=phi,
        instance=E,
        deviated_instance=E2,
        value=ev.expected_total,
        deviated_value=ev2.expected_total,
        opt_value=opt,
        deviated_opt_value=opt2,
        ratio=ev.expected_total / opt,
        deviated_ratio=ev2.expected_total / opt2,
        agent_value=ev.expected(0),
        deviated_agent_value=ev2.expected(0),
        ceiling=ceiling,
        ceiling_label=label,
        floor=ratio_floor(mechanism, E),
        degenerate=degenerate_flag(E),
    )

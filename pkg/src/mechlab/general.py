"""Mechanisms for knapsack instances with arbitrary densities.

All mechanisms return an :class:`OutcomeDistribution`.  Deterministic ones
have a single branch; randomized ones enumerate their lottery exactly so
expected values can be audited without sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .core import (
    Instance,
    NotApplicableError,
    Outcome,
    greedy_size_quotas,
    greedy_value_shares,
    integral_greedy,
    scaled_agent_opt,
    to_rational,
)

TWO_THIRDS = Fraction(2, 3)
HALF = Fraction(1, 2)

MECHANISM_NAMES = (
    "naive_greedy",
    "greedy",
    "single_greedy",
    "best_individual",
    "randomized_greedy",
    "fit_two",
    "large_fit",
    "randomized_fit",
)
UNIT_DENSITY_MECHANISMS = frozenset({"fit_two", "large_fit", "randomized_fit"})
RANDOMIZED_MECHANISMS = frozenset({"randomized_greedy", "randomized_fit"})


@dataclass(frozen=True)
class Branch:
    probability: Fraction
    outcome: Outcome
    label: str


@dataclass(frozen=True)
class OutcomeDistribution:
    """A finite lottery over feasible outcomes with exact probabilities."""

    branches: tuple

    def __post_init__(self):
        if not self.branches:
            raise ValueError("a distribution needs at least one branch")
        labels = [b.label for b in self.branches]
        if len(set(labels)) != len(labels):
            raise ValueError(f"branch labels must be unique, got {labels}")
        if any(b.probability <= 0 for b in self.branches):
            raise ValueError("branch probabilities must be positive")
        if sum(b.probability for b in self.branches) != 1:
            raise ValueError("branch probabilities must sum to 1")

    @classmethod
    def certain(cls, outcome: Outcome, label: str = "deterministic") -> "OutcomeDistribution":
        return cls((Branch(Fraction(1), outcome, label),))

    @property
    def is_deterministic(self) -> bool:
        return len(self.branches) == 1

    @property
    def labels(self) -> tuple:
        return tuple(b.label for b in self.branches)

    def branch(self, label: str) -> Branch:
        for b in self.branches:
            if b.label == label:
                return b
        raise KeyError(label)

    def expected_value(self) -> Fraction:
        return sum((b.probability * b.outcome.value for b in self.branches), Fraction(0))

    def expected_agent_value(self, instance: Instance, agent: int) -> Fraction:
        return sum(
            (b.probability * b.outcome.agent_value(instance, agent) for b in self.branches),
            Fraction(0),
        )

    def agent_values(self, instance: Instance) -> dict:
        """``{label: (value of agent 0, value of agent 1, ...)}`` per branch."""
        sc = instance.scaled()
        pos = {i: k for k, i in enumerate(sc.ids)}
        out = {}
        for b in self.branches:
            per_agent = [0] * instance.agent_count
            for i in b.outcome.packed:
                k = pos[i]
                per_agent[sc.owners[k]] += sc.v[k]
            out[b.label] = tuple(Fraction(x, sc.scale) for x in per_agent)
        return out


@dataclass(frozen=True)
class MechanismId:
    """Mechanism name plus the ``beta`` parameter of ``fit_two``.

    The textual form is ``name`` or ``fit_two:p/q``.
    """

    name: str
    beta: Fraction | None = None

    def __post_init__(self):
        if self.name not in MECHANISM_NAMES:
            raise ValueError(f"unknown mechanism {self.name!r}; choose from {', '.join(MECHANISM_NAMES)}")
        if self.name == "fit_two":
            if self.beta is None:
                raise ValueError("fit_two needs a beta, e.g. fit_two:987/1597")
            beta = to_rational(self.beta)
            object.__setattr__(self, "beta", beta)
        elif self.beta is not None:
            raise ValueError(f"{self.name} takes no beta parameter")

    @classmethod
    def parse(cls, text: str) -> "MechanismId":
        name, sep, beta = text.strip().partition(":")
        name = name.strip().replace("-", "_")
        return cls(name, to_rational(beta) if sep else None)

    def __str__(self):
        return self.name if self.beta is None else f"{self.name}:{self.beta}"

    @property
    def unit_density_only(self) -> bool:
        return self.name in UNIT_DENSITY_MECHANISMS

    @property
    def randomized(self) -> bool:
        return self.name in RANDOMIZED_MECHANISMS


def _fractional_share_agent(instance: Instance, share: Fraction):
    """Lowest-index agent owning at least ``share`` of the fractional greedy value."""
    shares, total, _ = greedy_value_shares(instance)
    if total == 0:
        return None
    for a, mine in enumerate(shares):
        if mine * share.denominator >= share.numerator * total:
            return a
    return None


@lru_cache(maxsize=4096)
def greedy_outcome(instance: Instance) -> Outcome:
    """Quota-based greedy: each agent packs its best set within its fractional size share."""
    chosen = []
    for a, quota in enumerate(greedy_size_quotas(instance)):
        if quota:
            chosen.extend(scaled_agent_opt(instance, a, quota))
    return Outcome.of_positions(instance, chosen)


def max_item_outcome(instance: Instance) -> Outcome:
    """The single most valuable item; lowest id among equals."""
    sc = instance.scaled()
    if not sc.v:
        return Outcome.empty()
    top = max(range(len(sc.v)), key=lambda k: (sc.v[k], -k))
    return Outcome.of_positions(instance, (top,))


@lru_cache(maxsize=4096)
def individual_optima(instance: Instance) -> tuple:
    """Every agent's optimum alone at full capacity, as Outcomes."""
    return tuple(
        Outcome.of_positions(instance, scaled_agent_opt(instance, a)) for a in range(instance.agent_count)
    )


def best_individual_outcome(instance: Instance) -> Outcome:
    """Largest individual optimum; ties go to the lowest agent index."""
    best = Outcome.empty()
    for cand in individual_optima(instance):
        if cand.value > best.value:
            best = cand
    return best


def mech_naive_greedy(instance: Instance) -> OutcomeDistribution:
    """The integral greedy solution.  Manipulable; kept as a foil for the audits."""
    return OutcomeDistribution.certain(integral_greedy(instance))


def mech_greedy(instance: Instance) -> OutcomeDistribution:
    return OutcomeDistribution.certain(greedy_outcome(instance))


def mech_single_greedy(instance: Instance) -> OutcomeDistribution:
    """Agent optimum if one agent holds 2/3 of the fractional value, else greedy."""
    a = _fractional_share_agent(instance, TWO_THIRDS)
    if a is not None:
        return OutcomeDistribution.certain(individual_optima(instance)[a])
    return OutcomeDistribution.certain(greedy_outcome(instance))


def mech_best_individual(instance: Instance) -> OutcomeDistribution:
    return OutcomeDistribution.certain(best_individual_outcome(instance))


def mech_randomized_greedy(instance: Instance) -> OutcomeDistribution:
    return OutcomeDistribution((
        Branch(HALF, greedy_outcome(instance), "greedy"),
        Branch(HALF, max_item_outcome(instance), "max_item"),
    ))


def run_mechanism(mechanism, instance: Instance) -> OutcomeDistribution:
    """Dispatch on a :class:`MechanismId` (or its textual form)."""
    if isinstance(mechanism, str):
        mechanism = MechanismId.parse(mechanism)
    name = mechanism.name
    if name == "naive_greedy":
        return mech_naive_greedy(instance)
    if name == "greedy":
        return mech_greedy(instance)
    if name == "single_greedy":
        return mech_single_greedy(instance)
    if name == "best_individual":
        return mech_best_individual(instance)
    if name == "randomized_greedy":
        return mech_randomized_greedy(instance)

    from . import unit_density

    if name == "fit_two":
        return unit_density.mech_fit_two(instance, mechanism.beta)
    if name == "large_fit":
        return unit_density.mech_large_fit(instance)
    if name == "randomized_fit":
        return unit_density.mech_randomized_fit(instance)
    raise NotApplicableError(f"no implementation for {name}")


def ratio_floor(mechanism: MechanismId, instance: Instance) -> Fraction:
    """Proven approximation guarantee of ``mechanism`` on ``instance``.

    Zero for mechanisms without a guarantee (the two greedy variants).
    """
    name = mechanism.name
    if name == "single_greedy":
        return Fraction(1, 3)
    if name == "best_individual":
        return Fraction(1, instance.agent_count)
    if name in ("randomized_greedy", "large_fit"):
        return HALF
    if name == "randomized_fit":
        return TWO_THIRDS
    if name == "fit_two":
        beta = mechanism.beta
        return min(beta, (1 - beta) / beta)
    return Fraction(0)

"""Mechanisms for unit-density instances (value equals size for every item).

"Larger" between two items always means earlier in ``value_key`` order, so
equal values are separated by id exactly as in the greedy order.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .core import Instance, NotApplicableError, Outcome, scaled_agent_opt, to_rational
from .general import TWO_THIRDS, Branch, OutcomeDistribution, individual_optima

BETA_MIN = Fraction(1, 2)
BETA_MAX = Fraction(2, 3)


@dataclass(frozen=True)
class FitSets:
    P: frozenset
    i_star: int
    a_star: int
    R: frozenset


@dataclass(frozen=True)
class LargeFitSets:
    j_star: int
    b_star: int
    S: frozenset


def require_unit_density(instance: Instance):
    if not instance.unit_density:
        raise NotApplicableError("mechanism is defined for unit-density instances only (value == size)")


def check_beta(beta) -> Fraction:
    beta = to_rational(beta)
    if not BETA_MIN <= beta <= BETA_MAX:
        raise NotApplicableError(f"beta must lie in [1/2, 2/3], got {beta}")
    return beta


def _ranked(sc) -> list:
    """Positions by value descending, id ascending."""
    v = sc.v
    return sorted(range(len(v)), key=lambda k: (-v[k], k))


def _fit_positions(instance: Instance):
    sc = instance.scaled()
    v, owners, C = sc.v, sc.owners, sc.cap
    ranked = _ranked(sc)
    P = []
    for r, k in enumerate(ranked):
        if all(v[k] + v[j] <= C for j in ranked[r + 1 :] if owners[j] != owners[k]):
            P.append(k)
    # ranked order is value desc, so the first member of P is its maximum
    i_star = P[0]
    R = [k for k in range(len(v)) if k == i_star or v[i_star] + v[k] <= C]
    return P, i_star, R


def compute_fit_sets(instance: Instance) -> FitSets:
    """Candidate set P, its largest member i*, and the restricted set R.

    An item is in P when it fits together with every smaller item of the
    other agents.  R holds i* and every item that fits with i*.
    """
    require_unit_density(instance)
    if not instance.items:
        raise NotApplicableError("fit sets are undefined on an empty instance")
    P, i_star, R = _fit_positions(instance)
    ids = instance.scaled().ids
    return FitSets(frozenset(ids[k] for k in P), ids[i_star], instance.scaled().owners[i_star],
                   frozenset(ids[k] for k in R))


def _large_positions(instance: Instance):
    sc = instance.scaled()
    v, owners, C = sc.v, sc.owners, sc.cap
    j = _ranked(sc)[0]
    S = [k for k in range(len(v)) if owners[k] == owners[j] or v[j] + v[k] <= C]
    return j, S


def compute_large_sets(instance: Instance) -> LargeFitSets:
    """Globally largest item j*, its owner b*, and the set S built around it."""
    require_unit_density(instance)
    if not instance.items:
        raise NotApplicableError("large-fit sets are undefined on an empty instance")
    j, S = _large_positions(instance)
    sc = instance.scaled()
    return LargeFitSets(sc.ids[j], sc.owners[j], frozenset(sc.ids[k] for k in S))


def _restricted_greedy_positions(instance: Instance, Q) -> Outcome:
    sc = instance.scaled()
    v, owners = sc.v, sc.owners
    order = sorted(Q, key=lambda k: (-v[k], k))
    quotas = [0] * instance.agent_count
    room = sc.cap
    for k in order:
        if v[k] <= room:
            room -= v[k]
            quotas[owners[k]] += v[k]
        else:
            # unit density: the fractional item contributes exactly the leftover room
            quotas[owners[k]] += room
            break
    chosen = []
    for a, quota in enumerate(quotas):
        if quota:
            chosen.extend(scaled_agent_opt(instance, a, quota, "value"))
    return Outcome.of_positions(instance, chosen)


def restricted_greedy(instance: Instance, Q) -> Outcome:
    """Quota greedy where quotas come from the fractional solution on ``Q`` only.

    Each agent then optimises over all of its items, not only those in Q,
    with a value budget equal to its fractional value in Q.
    """
    require_unit_density(instance)
    sc = instance.scaled()
    pos = {i: k for k, i in enumerate(sc.ids)}
    unknown = set(Q) - pos.keys()
    if unknown:
        raise KeyError(f"unknown item ids {sorted(unknown)}")
    return _restricted_greedy_positions(instance, [pos[i] for i in Q])


def _individual_winner(instance: Instance, threshold: Fraction):
    """Best individual optimum if it reaches ``threshold``; lowest agent wins ties."""
    best = None
    for cand in individual_optima(instance):
        if best is None or cand.value > best.value:
            best = cand
    if best is not None and best.value >= threshold:
        return best
    return None


@lru_cache(maxsize=8192)
def fit_two_outcome(instance: Instance, beta) -> Outcome:
    require_unit_density(instance)
    beta = check_beta(beta)
    if not instance.items:
        return Outcome.empty()
    winner = _individual_winner(instance, beta * instance.capacity)
    if winner is not None:
        return winner
    return _restricted_greedy_positions(instance, _fit_positions(instance)[2])


@lru_cache(maxsize=4096)
def large_fit_outcome(instance: Instance) -> Outcome:
    require_unit_density(instance)
    if not instance.items:
        return Outcome.empty()
    winner = _individual_winner(instance, TWO_THIRDS * instance.capacity)
    if winner is not None:
        return winner
    return _restricted_greedy_positions(instance, _large_positions(instance)[1])


def mech_fit_two(instance: Instance, beta) -> OutcomeDistribution:
    return OutcomeDistribution.certain(fit_two_outcome(instance, beta))


def mech_large_fit(instance: Instance) -> OutcomeDistribution:
    return OutcomeDistribution.certain(large_fit_outcome(instance))


def mech_randomized_fit(instance: Instance) -> OutcomeDistribution:
    """Fit-two at beta = 2/3 with probability 2/3, large-fit otherwise."""
    return OutcomeDistribution((
        Branch(TWO_THIRDS, fit_two_outcome(instance, TWO_THIRDS), "fit_two"),
        Branch(Fraction(1, 3), large_fit_outcome(instance), "large_fit"),
    ))


def _desc_values(items) -> list:
    return sorted((it.value for it in items), reverse=True)


def a_dominates(E: Instance, E_prime: Instance, a: int) -> bool:
    """Does ``E`` a-dominate ``E_prime``?

    Agent ``a``'s values in E are lexicographically at least those in
    E_prime (with at least as many items), and everyone else's values are
    lexicographically at most (with at most as many items).
    """
    if E.capacity != E_prime.capacity or E.agent_count != E_prime.agent_count:
        raise ValueError("a-dominance compares instances with equal capacity and agent count")
    mine, mine_p = _desc_values(E.agent_items(a)), _desc_values(E_prime.agent_items(a))
    rest, rest_p = _desc_values(E.others_items(a)), _desc_values(E_prime.others_items(a))
    if len(mine) < len(mine_p) or len(rest) > len(rest_p):
        return False
    if any(mine[k] < mine_p[k] for k in range(len(mine_p))):
        return False
    return all(rest[k] <= rest_p[k] for k in range(len(rest)))

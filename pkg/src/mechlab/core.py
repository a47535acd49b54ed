"""Instance model, greedy order and exact knapsack solvers.

Every number in the public API is a :class:`fractions.Fraction`.  Floats are
rejected at the boundary so that knife-edge comparisons stay exact.

Internally each instance is also available as a :class:`ScaledInstance`:
values, sizes and capacity multiplied by one common denominator so that the
hot loops run on plain integers.  Scaling everything by the same positive
factor changes no comparison, so results are identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cmp_to_key, lru_cache
from math import lcm
from typing import Iterable, Mapping

Rational = Fraction

DEFAULT_MAX_ITEMS = 25
MAX_ITEMS_ENV = "MECHLAB_MAX_ITEMS"


class MechlabError(Exception):
    """Base class for errors raised by this package."""


class InstanceFormatError(MechlabError, ValueError):
    """Malformed or schema-violating instance data."""


class InstanceTooLargeError(MechlabError):
    """An exact solver was asked to handle more items than the guard allows."""


class NotApplicableError(MechlabError, ValueError):
    """A mechanism was called outside its domain (density, beta range...)."""


def to_rational(x) -> Fraction:
    """Convert ``x`` to a Fraction without ever passing through a float.

    >>> to_rational("3/4"), to_rational(10), to_rational("2.5")
    (Fraction(3, 4), Fraction(10, 1), Fraction(5, 2))
    """
    if isinstance(x, bool) or isinstance(x, float):
        raise TypeError(f"refusing inexact number {x!r}; pass an int, str or Fraction")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InstanceFormatError(f"not a rational number: {x!r}") from exc
    raise TypeError(f"cannot interpret {type(x).__name__} as a rational")


def max_items_default() -> int:
    raw = os.environ.get(MAX_ITEMS_ENV)
    if raw is None:
        return DEFAULT_MAX_ITEMS
    try:
        value = int(raw)
    except ValueError as exc:
        raise MechlabError(f"{MAX_ITEMS_ENV} must be an integer, got {raw!r}") from exc
    if value < 0:
        raise MechlabError(f"{MAX_ITEMS_ENV} must be non-negative")
    return value


@dataclass(frozen=True)
class Item:
    id: int
    owner: int
    value: Fraction
    size: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", to_rational(self.value))
        object.__setattr__(self, "size", to_rational(self.size))
        if self.id < 0:
            raise InstanceFormatError(f"item id must be non-negative, got {self.id}")
        if self.owner < 0:
            raise InstanceFormatError(f"item {self.id}: owner must be non-negative")
        if self.value <= 0:
            raise InstanceFormatError(f"item {self.id}: value must be positive, got {self.value}")
        if self.size <= 0:
            raise InstanceFormatError(f"item {self.id}: size must be positive, got {self.size}")

    @property
    def density(self) -> Fraction:
        return self.value / self.size


def greedy_key(item: Item):
    """Sort key of the canonical greedy order.

    Density descending, then value descending, then id ascending.  The id
    component is what makes the order total on degenerate inputs.
    """
    return (-item.density, -item.value, item.id)


def value_key(item: Item):
    """Value descending, id ascending: "larger" for the unit-density mechanisms."""
    return (-item.value, item.id)


@dataclass(frozen=True)
class ScaledInstance:
    """Integer image of an instance; position ``k`` is the k-th item in id order."""

    scale: int
    ids: tuple
    owners: tuple
    v: tuple
    s: tuple
    cap: int
    agent_pos: tuple  # per agent, its positions in id order
    unit_density: bool

    def fraction(self, x: int) -> Fraction:
        return Fraction(x, self.scale)


def _scale(items, capacity: Fraction, agent_count: int) -> ScaledInstance:
    L = lcm(capacity.denominator, *(it.value.denominator for it in items), *(it.size.denominator for it in items))
    v = tuple(it.value.numerator * (L // it.value.denominator) for it in items)
    s = tuple(it.size.numerator * (L // it.size.denominator) for it in items)
    owners = tuple(it.owner for it in items)
    agent_pos = [[] for _ in range(agent_count)]
    for k, a in enumerate(owners):
        agent_pos[a].append(k)
    return ScaledInstance(
        L,
        tuple(it.id for it in items),
        owners,
        v,
        s,
        capacity.numerator * (L // capacity.denominator),
        tuple(tuple(p) for p in agent_pos),
        v == s,
    )


def _restrict_scaled(parent: ScaledInstance, positions: tuple, agent_count: int) -> ScaledInstance:
    # keeps the parent's scale, which is a common multiple of the sub-instance's denominators
    owners = tuple(parent.owners[k] for k in positions)
    v = tuple(parent.v[k] for k in positions)
    s = tuple(parent.s[k] for k in positions)
    agent_pos = [[] for _ in range(agent_count)]
    for k, a in enumerate(owners):
        agent_pos[a].append(k)
    return ScaledInstance(
        parent.scale,
        tuple(parent.ids[k] for k in positions),
        owners,
        v,
        s,
        parent.cap,
        tuple(tuple(p) for p in agent_pos),
        v == s,
    )


@dataclass(frozen=True, eq=False)
class Instance:
    """A strategic knapsack instance.

    ``items`` is normalised to id order.  Agents are ``0 .. agent_count-1``;
    an agent may own no items.
    """

    items: tuple
    capacity: Fraction
    agent_count: int
    _by_id: Mapping = field(default=None, init=False, repr=False)
    _sig: tuple = field(default=None, init=False, repr=False)
    _key: tuple = field(default=None, init=False, repr=False)
    _hash: int = field(default=0, init=False, repr=False)
    _scaled: ScaledInstance | None = field(default=None, init=False, repr=False)
    _parent_view: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        for it in self.items:
            if not isinstance(it, Item):
                raise InstanceFormatError(f"expected Item, got {type(it).__name__}")
        items = tuple(sorted(self.items, key=lambda it: it.id))
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "capacity", to_rational(self.capacity))
        if self.capacity <= 0:
            raise InstanceFormatError(f"capacity must be positive, got {self.capacity}")
        if self.agent_count < 1:
            raise InstanceFormatError("agent_count must be at least 1")
        seen = set()
        for it in items:
            if it.id in seen:
                raise InstanceFormatError(f"duplicate item id {it.id}")
            seen.add(it.id)
            if it.owner >= self.agent_count:
                raise InstanceFormatError(
                    f"item {it.id}: owner {it.owner} out of range for {self.agent_count} agents"
                )
            if it.size > self.capacity:
                raise InstanceFormatError(
                    f"item {it.id}: size {it.size} exceeds capacity {self.capacity} "
                    "(no item may exceed the capacity)"
                )
        self._finish()

    def _finish(self, rows: tuple | None = None):
        items = self.items
        object.__setattr__(self, "_by_id", None)
        # Integer keys: hashing Fractions is slow and the audits hash a lot.
        if rows is None:
            rows = tuple(
                (it.value.numerator, it.value.denominator, it.size.numerator, it.size.denominator, it.owner)
                for it in items
            )
        cap = self.capacity
        sig = (cap.numerator, cap.denominator, self.agent_count, rows)
        key = (sig, tuple(it.id for it in items))
        object.__setattr__(self, "_sig", sig)
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash(key))

    def _derive(self, positions) -> "Instance":
        """Sub-instance keeping the items at ``positions`` (ascending, id order)."""
        items, rows = self.items, self._sig[3]
        inst = object.__new__(Instance)
        object.__setattr__(inst, "items", tuple(items[k] for k in positions))
        object.__setattr__(inst, "capacity", self.capacity)
        object.__setattr__(inst, "agent_count", self.agent_count)
        object.__setattr__(inst, "_scaled", None)
        object.__setattr__(inst, "_parent_view", (self.scaled(), tuple(positions)))
        inst._finish(tuple(rows[k] for k in positions))
        return inst

    def _index(self) -> dict:
        by_id = self._by_id
        if by_id is None:
            by_id = {it.id: it for it in self.items}
            object.__setattr__(self, "_by_id", by_id)
        return by_id

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return self._hash == other._hash and self._key == other._key

    def __hash__(self):
        return self._hash

    @classmethod
    def from_tuples(cls, rows, capacity, agent_count=None) -> "Instance":
        """Build from ``(owner, value, size)`` rows; ids follow row order.

        ``size`` may be omitted (``(owner, value)``) for a unit-density item.
        """
        items = []
        for k, row in enumerate(rows):
            if len(row) == 2:
                owner, value = row
                size = value
            else:
                owner, value, size = row
            items.append(Item(k, owner, to_rational(value), to_rational(size)))
        if agent_count is None:
            agent_count = max((it.owner for it in items), default=0) + 1
        return cls(tuple(items), to_rational(capacity), agent_count)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def item(self, item_id: int) -> Item:
        return self._index()[item_id]

    @property
    def ids(self) -> frozenset:
        return frozenset(self._index())

    def scaled(self) -> ScaledInstance:
        sc = self._scaled
        if sc is None:
            if self._parent_view is not None:
                sc = _restrict_scaled(*self._parent_view, self.agent_count)
                object.__setattr__(self, "_parent_view", None)
            else:
                sc = _scale(self.items, self.capacity, self.agent_count)
            object.__setattr__(self, "_scaled", sc)
        return sc

    @property
    def unit_density(self) -> bool:
        return self.scaled().unit_density

    def agent_items(self, agent: int) -> tuple:
        return tuple(it for it in self.items if it.owner == agent)

    def others_items(self, agent: int) -> tuple:
        return tuple(it for it in self.items if it.owner != agent)

    def restrict(self, ids: Iterable[int]) -> "Instance":
        """Sub-instance on ``ids``; capacity and agent count are inherited."""
        keep = set(ids)
        unknown = keep - self._index().keys()
        if unknown:
            raise KeyError(f"unknown item ids {sorted(unknown)}")
        return self._derive([k for k, it in enumerate(self.items) if it.id in keep])

    def without(self, ids: Iterable[int]) -> "Instance":
        drop = set(ids)
        return self._derive([k for k, it in enumerate(self.items) if it.id not in drop])

    def without_positions(self, positions) -> "Instance":
        drop = set(positions)
        return self._derive([k for k in range(len(self.items)) if k not in drop])

    def value_of(self, ids: Iterable[int]) -> Fraction:
        index = self._index()
        return sum((index[i].value for i in ids), Fraction(0))

    def size_of(self, ids: Iterable[int]) -> Fraction:
        index = self._index()
        return sum((index[i].size for i in ids), Fraction(0))

    @property
    def total_value(self) -> Fraction:
        return sum((it.value for it in self.items), Fraction(0))

    @property
    def total_size(self) -> Fraction:
        return sum((it.size for it in self.items), Fraction(0))

    def signature(self) -> tuple:
        """Content key that ignores ids but keeps their relative order.

        Every mechanism here depends on ids only through comparisons, so two
        instances with equal signatures get the same per-agent values.
        """
        return self._sig


@dataclass(frozen=True)
class Outcome:
    packed: frozenset
    value: Fraction
    size: Fraction

    @classmethod
    def empty(cls) -> "Outcome":
        return cls(frozenset(), Fraction(0), Fraction(0))

    @classmethod
    def of(cls, items: Iterable[Item]) -> "Outcome":
        items = list(items)
        return cls(
            frozenset(it.id for it in items),
            sum((it.value for it in items), Fraction(0)),
            sum((it.size for it in items), Fraction(0)),
        )

    @classmethod
    def of_ids(cls, instance: Instance, ids: Iterable[int]) -> "Outcome":
        return cls.of(instance.item(i) for i in ids)

    @classmethod
    def of_positions(cls, instance: Instance, positions: Iterable[int]) -> "Outcome":
        """Outcome from positions of the scaled view, summed in integers."""
        sc = instance.scaled()
        positions = tuple(positions)
        return cls(
            frozenset(sc.ids[k] for k in positions),
            Fraction(sum(sc.v[k] for k in positions), sc.scale),
            Fraction(sum(sc.s[k] for k in positions), sc.scale),
        )

    def union(self, other: "Outcome") -> "Outcome":
        if self.packed & other.packed:
            raise ValueError("outcomes overlap")
        return Outcome(self.packed | other.packed, self.value + other.value, self.size + other.size)

    def agent_value(self, instance: Instance, agent: int) -> Fraction:
        return sum(
            (instance.item(i).value for i in self.packed if instance.item(i).owner == agent),
            Fraction(0),
        )

    def sorted_ids(self) -> tuple:
        return tuple(sorted(self.packed))


# --- greedy ---------------------------------------------------------------

@dataclass(frozen=True)
class FractionalGreedySolution:
    """Fractional greedy packing of an item set.

    ``ell`` counts the fully packed prefix of ``order``; ``fractions`` maps
    every item id to its packed fraction.
    """

    order: tuple
    ell: int
    fractions: Mapping
    fractional_item: int | None

    def x(self, item_id: int) -> Fraction:
        return self.fractions[item_id]

    def value(self, instance: Instance, agent: int | None = None) -> Fraction:
        """Fractional value, optionally restricted to one agent's items."""
        total = Fraction(0)
        for i, xi in self.fractions.items():
            if xi and (agent is None or instance.item(i).owner == agent):
                total += instance.item(i).value * xi
        return total

    def size(self, instance: Instance, agent: int | None = None) -> Fraction:
        total = Fraction(0)
        for i, xi in self.fractions.items():
            if xi and (agent is None or instance.item(i).owner == agent):
                total += instance.item(i).size * xi
        return total

    def integral_ids(self) -> tuple:
        return self.order[: self.ell]


@dataclass(frozen=True)
class GreedyPrefix:
    """Fractional greedy on the scaled view.

    ``order`` lists positions; the first ``ell`` are packed whole and
    ``frac`` (if any) receives the leftover ``rem`` of capacity.
    """

    order: tuple
    ell: int
    frac: int | None
    rem: int


def _scaled_order(sc: ScaledInstance) -> list:
    v, s = sc.v, sc.s
    m = len(v)
    if sc.unit_density:
        return sorted(range(m), key=lambda k: (-v[k], k))

    def cmp(a, b):
        d = v[b] * s[a] - v[a] * s[b]
        if d:
            return d
        if v[a] != v[b]:
            return v[b] - v[a]
        return a - b

    return sorted(range(m), key=cmp_to_key(cmp))


def greedy_prefix(instance: Instance) -> GreedyPrefix:
    # equal instances may carry different scales (a derived sub-instance
    # keeps its parent's), and ``rem`` is in scaled units
    return _greedy_prefix(instance, instance.scaled().scale)


@lru_cache(maxsize=1 << 16)
def _greedy_prefix(instance: Instance, scale: int) -> GreedyPrefix:
    sc = instance.scaled()
    order = _scaled_order(sc)
    s, cap = sc.s, sc.cap
    used = 0
    ell = 0
    for k in order:
        if used + s[k] > cap:
            break
        used += s[k]
        ell += 1
    rem = cap - used
    frac = order[ell] if ell < len(order) and rem > 0 else None
    return GreedyPrefix(tuple(order), ell, frac, rem)


def canonical_order(instance: Instance) -> tuple:
    """Item ids in greedy order: density desc, value desc, id asc."""
    ids = instance.scaled().ids
    return tuple(ids[k] for k in greedy_prefix(instance).order)


def fractional_greedy(instance: Instance) -> FractionalGreedySolution:
    sc = instance.scaled()
    g = greedy_prefix(instance)
    fractions = {sc.ids[k]: Fraction(0) for k in g.order}
    for k in g.order[: g.ell]:
        fractions[sc.ids[k]] = Fraction(1)
    fractional_item = None
    if g.frac is not None:
        fractional_item = sc.ids[g.frac]
        fractions[fractional_item] = Fraction(g.rem, sc.s[g.frac])
    return FractionalGreedySolution(tuple(sc.ids[k] for k in g.order), g.ell, fractions, fractional_item)


def integral_greedy(instance: Instance) -> Outcome:
    return Outcome.of_positions(instance, greedy_prefix(instance).order[: greedy_prefix(instance).ell])


def greedy_size_quotas(instance: Instance) -> tuple:
    """Per-agent size packed by the fractional greedy, in scaled units."""
    sc = instance.scaled()
    g = greedy_prefix(instance)
    quotas = [0] * instance.agent_count
    for k in g.order[: g.ell]:
        quotas[sc.owners[k]] += sc.s[k]
    if g.frac is not None:
        quotas[sc.owners[g.frac]] += g.rem
    return tuple(quotas)


def greedy_value_shares(instance: Instance) -> tuple:
    """Per-agent fractional greedy value and the total, as ``(shares, total, denom)``.

    Each share is ``numerator / denom`` in scaled units; ``denom`` is the
    fractional item's scaled size (1 if there is none) so everything stays
    integral.
    """
    sc = instance.scaled()
    g = greedy_prefix(instance)
    denom = sc.s[g.frac] if g.frac is not None else 1
    shares = [0] * instance.agent_count
    for k in g.order[: g.ell]:
        shares[sc.owners[k]] += sc.v[k] * denom
    if g.frac is not None:
        shares[sc.owners[g.frac]] += sc.v[g.frac] * g.rem
    return tuple(shares), sum(shares), denom


# --- exact knapsack -------------------------------------------------------

def _check_guard(count: int, max_items: int | None):
    limit = max_items_default() if max_items is None else max_items
    if count > limit:
        raise InstanceTooLargeError(
            f"exact solver guard: {count} items > limit {limit} (set {MAX_ITEMS_ENV} to raise it)"
        )


def _knapsack(entries: tuple, budget: Fraction) -> tuple:
    """Max-value subset of ``(id, value, weight)`` entries within ``budget``.

    Entries must be in id order.  Among equal values the lexicographically
    smallest sorted id tuple wins.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if not entries:
        return ()
    lv = lcm(*(v.denominator for _, v, _ in entries))
    lw = lcm(budget.denominator, *(w.denominator for _, _, w in entries))
    vals = tuple(v.numerator * (lv // v.denominator) for _, v, _ in entries)
    wts = tuple(w.numerator * (lw // w.denominator) for _, _, w in entries)
    cap = budget.numerator * (lw // budget.denominator)
    return tuple(entries[k][0] for k in knapsack_int(vals, wts, cap))


@lru_cache(maxsize=1 << 18)
def knapsack_int(vals: tuple, wts: tuple, cap: int) -> tuple:
    """Branch and bound on positive integer data; returns chosen positions.

    Positions are tried include-first in order, and a branch is cut unless
    its LP bound strictly beats the incumbent, so the first optimum found is
    the lexicographically smallest.
    """
    n = len(vals)
    if n == 0 or cap <= 0:
        return ()
    if sum(wts) <= cap:
        return tuple(range(n))
    # For the bound at depth p: items p.. in density order.
    by_density = sorted(range(n), key=cmp_to_key(lambda a, b: vals[b] * wts[a] - vals[a] * wts[b] or a - b))
    tails = [[k for k in by_density if k >= p] for p in range(n + 1)]

    best_val = 0
    best_set: tuple = ()
    chosen: list = []

    def bound_exceeds(p, cur_v, room, target):
        # Is the LP bound over items p.. strictly greater than target?
        total = cur_v
        for k in tails[p]:
            if wts[k] <= room:
                room -= wts[k]
                total += vals[k]
            else:
                # total + room * vals[k] / wts[k] > target
                return total * wts[k] + room * vals[k] > target * wts[k]
        return total > target

    def dfs(p, cur_v, room):
        nonlocal best_val, best_set
        if p == n:
            if cur_v > best_val:
                best_val = cur_v
                best_set = tuple(chosen)
            return
        if not bound_exceeds(p, cur_v, room, best_val):
            return
        if wts[p] <= room:
            chosen.append(p)
            dfs(p + 1, cur_v + vals[p], room - wts[p])
            chosen.pop()
        dfs(p + 1, cur_v, room)

    dfs(0, 0, cap)
    return best_set


def solve_opt(items: Iterable[Item], capacity, max_items: int | None = None) -> Outcome:
    """Exact optimum of the knapsack over ``items`` at ``capacity``.

    Ties on value go to the lexicographically smallest sorted id tuple so
    the optimum is unique.
    """
    items = sorted(items, key=lambda it: it.id)
    capacity = to_rational(capacity)
    if capacity < 0:
        raise ValueError("capacity must be non-negative")
    _check_guard(len(items), max_items)
    entries = tuple((it.id, it.value, it.size) for it in items)
    ids = _knapsack(entries, capacity)
    by_id = {it.id: it for it in items}
    return Outcome.of(by_id[i] for i in ids)


def constrained_agent_opt(agent_items: Iterable[Item], budget, metric: str = "size",
                          max_items: int | None = None) -> Outcome:
    """Max-value subset whose total ``metric`` ("size" or "value") fits ``budget``."""
    if metric not in ("size", "value"):
        raise ValueError(f"metric must be 'size' or 'value', got {metric!r}")
    items = sorted(agent_items, key=lambda it: it.id)
    budget = to_rational(budget)
    if budget < 0:
        raise ValueError("budget must be non-negative")
    _check_guard(len(items), max_items)
    if metric == "size":
        entries = tuple((it.id, it.value, it.size) for it in items)
    else:
        entries = tuple((it.id, it.value, it.value) for it in items)
    ids = _knapsack(entries, budget)
    by_id = {it.id: it for it in items}
    return Outcome.of(by_id[i] for i in ids)


def scaled_agent_opt(instance: Instance, agent: int, budget: int | None = None, metric: str = "size") -> tuple:
    """Positions of the agent's best subset within a scaled-unit budget.

    Defaults to the full capacity.  Same guard and tie-break as solve_opt.
    """
    sc = instance.scaled()
    pos = sc.agent_pos[agent]
    _check_guard(len(pos), None)
    if budget is None:
        budget = sc.cap
    vals = tuple(sc.v[k] for k in pos)
    wts = vals if metric == "value" else tuple(sc.s[k] for k in pos)
    return tuple(pos[k] for k in knapsack_int(vals, wts, budget))


def agent_opt(instance: Instance, agent: int) -> Outcome:
    """Best packing of one agent's items alone at the full capacity."""
    return Outcome.of_positions(instance, scaled_agent_opt(instance, agent))


def is_degenerate(instance: Instance) -> bool:
    """True when two distinct items share a value or a size.

    Such inputs fall outside the distinctness assumption behind the
    guarantees; audits report findings on them separately.
    """
    sc = instance.scaled()
    return len(set(sc.v)) < len(sc.v) or len(set(sc.s)) < len(sc.s)

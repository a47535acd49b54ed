"""Named instances, seeded generators, lower-bound families and file I/O."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

from .core import Instance, InstanceFormatError, Item, to_rational

GENERATOR_KINDS = ("general_random", "unit_density_random", "tie_heavy", "paper_named", "lb_det", "lb_rand")
DEFAULT_GOLDEN_K = 16


# --- golden ratio ---------------------------------------------------------

@lru_cache(maxsize=None)
def fibonacci(k: int) -> int:
    """F_1 = F_2 = 1."""
    if k < 0:
        raise ValueError("k must be non-negative")
    a, b = 0, 1
    for _ in range(k):
        a, b = b, a + b
    return a


@dataclass(frozen=True)
class GoldenRatioApprox:
    k: int
    phi_k: Fraction

    @property
    def inverse(self) -> Fraction:
        return 1 / self.phi_k

    @property
    def error_bound(self) -> Fraction:
        """|phi_k^2 - phi_k - 1|, which equals 1 / F_k^2."""
        return abs(self.phi_k * self.phi_k - self.phi_k - 1)


def golden_ratio_approx(k: int = DEFAULT_GOLDEN_K) -> GoldenRatioApprox:
    """phi_k = F_{k+1} / F_k; k = 16 gives 1597/987."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return GoldenRatioApprox(k, Fraction(fibonacci(k + 1), fibonacci(k)))


# --- catalog of worked examples ------------------------------------------

# rows are (owner, value, size); unit-density rows omit the size
_BLUE, _ORANGE, _GREEN, _VIOLET = 0, 1, 2, 3

_CATALOG = {
    # blue 0, green 1, orange 2; printed left to right
    "figure1": dict(
        capacity=10,
        agents=3,
        rows=[(0, 10, 1), (1, 25, 3), (2, 20, 3), (0, 6, 1), (2, 15, 3), (2, 8, 2), (1, 5, 5)],
        hidden=(2, 4),
    ),
    # agent 0 is researcher A, agent 1 is researcher B
    "intro_funding": dict(
        capacity=1,
        agents=2,
        rows=[(0, "1/2"), (0, "2/3"), (1, "1/2")],
        hidden=(0, 0),
    ),
    "fig3a": dict(
        capacity=10,
        agents=4,
        rows=[(_BLUE, 6), (_ORANGE, "5.1"), (_ORANGE, 5), (_BLUE, "4.5"), (_VIOLET, "3.1"),
              (_VIOLET, 3), (_GREEN, 2), (_ORANGE, 1)],
        hidden=(_ORANGE, 2),
    ),
    "fig3b": dict(
        capacity=10,
        agents=4,
        rows=[(_BLUE, 6), (_ORANGE, "5.5"), (_BLUE, "4.8"), (_VIOLET, 4), (_GREEN, "3.5"), (_GREEN, 2)],
        hidden=(_ORANGE, 1),
    ),
    "fig3c": dict(
        capacity=10,
        agents=3,
        rows=[(_BLUE, 6), (_ORANGE, "5.1"), (_BLUE, "4.2"), (_GREEN, "3.5"), (_GREEN, "2.5"), (_ORANGE, 1)],
        hidden=(_ORANGE, 1),
    ),
    "fig3d": dict(
        capacity=10,
        agents=3,
        rows=[(_BLUE, 6), (_ORANGE, "5.5"), (_ORANGE, "4.8"), (_BLUE, "4.2"), (_GREEN, 4), (_GREEN, 2)],
        hidden=(_ORANGE, 1),
    ),
    "fig4_left": dict(
        capacity=10,
        agents=3,
        rows=[(_BLUE, 6), (_BLUE, "5.5"), (_ORANGE, 5), (_GREEN, 4), (_GREEN, "2.5"), (_ORANGE, 1)],
        hidden=None,
    ),
    "fig4_right": dict(
        capacity=10,
        agents=3,
        rows=[(_ORANGE, "6.5"), (_GREEN, 4), (_BLUE, 1)],
        hidden=None,
    ),
}

CATALOG_NAMES = tuple(_CATALOG)


def paper_instance(name: str) -> Instance:
    try:
        entry = _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown catalog instance {name!r}; choose from {', '.join(CATALOG_NAMES)}") from None
    return Instance.from_tuples(entry["rows"], entry["capacity"], entry["agents"])


def paper_deviation(name: str):
    """``(agent, item id)`` of the hiding move the example illustrates, or None."""
    paper_instance(name)
    return _CATALOG[name]["hidden"]


# --- lower-bound families -------------------------------------------------

def _phi(k):
    return golden_ratio_approx(k).phi_k


def lb_det_family(k: int = DEFAULT_GOLDEN_K, epsilon=Fraction(1, 1000)):
    """Two-agent witness pair against deterministic mechanisms.

    Agent 0 owns values phi and phi - eps, agent 1 owns value 1, capacity
    phi + 1 - eps.  The second instance drops agent 0's smaller item.
    Item ids: 0 -> phi, 1 -> phi - eps, 2 -> 1.
    """
    epsilon = to_rational(epsilon)
    phi = _phi(k)
    if not 0 < epsilon < phi - 1:
        raise ValueError(f"epsilon must lie in (0, phi_k - 1) = (0, {phi - 1}), got {epsilon}")
    E = Instance.from_tuples([(0, phi), (0, phi - epsilon), (1, 1)], phi + 1 - epsilon, 2)
    return E, E.without([1])


def lb_rand_family(k: int = DEFAULT_GOLDEN_K):
    """Two-agent witness pair against randomized mechanisms, capacity 2.

    Values phi and 1 for agent 0, 1 for agent 1.  The two unit items tie;
    the id order (agent 0's item first) resolves it.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    phi = _phi(k)
    E = Instance.from_tuples([(0, phi), (0, 1), (1, 1)], 2, 2)
    return E, E.without([1])


# --- generators -----------------------------------------------------------

@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a reproducible stream of instances.

    ``capacity_rule`` is ``"fixed:p/q"``, ``"fraction:p/q"`` (of the total
    size) or ``"uniform"`` (uniform rational between the largest size and
    the total size).
    """

    kind: str = "general_random"
    min_items: int = 1
    max_items: int = 7
    min_agents: int = 1
    max_agents: int = 3
    max_value: Fraction = Fraction(10)
    max_size: Fraction = Fraction(10)
    max_denominator: int = 64
    capacity_rule: str = "uniform"
    seed: int = 0
    golden_k: int = DEFAULT_GOLDEN_K

    def __post_init__(self):
        kind = self.kind.replace("-", "_")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "max_value", to_rational(self.max_value))
        object.__setattr__(self, "max_size", to_rational(self.max_size))
        if kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; choose from {', '.join(GENERATOR_KINDS)}")
        if not 0 <= self.min_items <= self.max_items:
            raise ValueError("need 0 <= min_items <= max_items")
        if not 1 <= self.min_agents <= self.max_agents:
            raise ValueError("need 1 <= min_agents <= max_agents")
        if self.max_value <= 0 or self.max_size <= 0:
            raise ValueError("magnitude bounds must be positive")
        if self.max_denominator < 1:
            raise ValueError("max_denominator must be at least 1")
        _parse_capacity_rule(self.capacity_rule)

    def with_seed(self, seed: int) -> "GeneratorSpec":
        return replace(self, seed=seed)


def _parse_capacity_rule(rule: str):
    head, _, arg = rule.partition(":")
    if head == "uniform" and not arg:
        return head, None
    if head in ("fixed", "fraction") and arg:
        value = to_rational(arg)
        if value <= 0:
            raise ValueError(f"capacity rule argument must be positive: {rule!r}")
        return head, value
    raise ValueError(f"bad capacity rule {rule!r}; use fixed:p/q, fraction:p/q or uniform")


def _rational(rng: random.Random, bound: Fraction, max_den: int) -> Fraction:
    q = rng.randint(1, max_den)
    top = int(bound * q)
    return Fraction(rng.randint(1, max(top, 1)), q)


def _distinct(rng, count, draw, attempts=1000):
    out, seen = [], set()
    for _ in range(attempts):
        if len(out) == count:
            break
        x = draw()
        if x not in seen:
            seen.add(x)
            out.append(x)
    if len(out) < count:
        raise ValueError("could not draw enough distinct values; widen the magnitude bounds")
    return out


def _uniform_capacity(rng, sizes, max_den):
    """Uniform rational in [largest size, total size], denominator at most max_den."""
    biggest = max(sizes, default=Fraction(1))
    total = sum(sizes, Fraction(0))
    if total <= biggest:
        return biggest
    q = rng.randint(1, max_den)
    lo, hi = biggest * q, total * q
    lo_i = -(-lo.numerator // lo.denominator)
    hi_i = hi.numerator // hi.denominator
    if lo_i > hi_i:
        return biggest
    return Fraction(rng.randint(lo_i, hi_i), q)


def _rng(spec: GeneratorSpec, index: int) -> random.Random:
    # str seeds hash with sha512, so streams are stable across runs and platforms
    return random.Random(f"mechlab/{spec.kind}/{spec.seed}/{index}")


_FRACTION_ATTEMPTS = 200


def generate(spec: GeneratorSpec, index: int) -> Instance:
    """The ``index``-th instance of the stream described by ``spec``.

    Under a ``fixed`` capacity rule sizes are drawn no larger than the
    capacity.  Under a ``fraction`` rule the draw is repeated until no size
    exceeds the resulting capacity; a rule that cannot be met (a single item
    at fraction 1/2, say) raises ValueError.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    kind = spec.kind
    if kind == "paper_named":
        return paper_instance(CATALOG_NAMES[index % len(CATALOG_NAMES)])
    if kind in ("lb_det", "lb_rand"):
        k = 3 + (index // 2) % max(spec.golden_k - 2, 1)
        if kind == "lb_det":
            phi = _phi(k)
            pair = lb_det_family(k, min(Fraction(1, 1000), (phi - 1) / 2))
        else:
            pair = lb_rand_family(k)
        return pair[index % 2]

    rng = _rng(spec, index)
    m = rng.randint(spec.min_items, spec.max_items)
    n = rng.randint(spec.min_agents, spec.max_agents)
    den = spec.max_denominator
    rule, arg = _parse_capacity_rule(spec.capacity_rule)
    max_value, max_size = spec.max_value, spec.max_size
    if rule == "fixed":
        max_size = min(max_size, arg)
        if kind == "unit_density_random":
            max_value = min(max_value, arg)

    for _ in range(_FRACTION_ATTEMPTS):
        if kind == "tie_heavy":
            unit = rng.random() < 0.5
            values = [Fraction(rng.randint(1, 4)) for _ in range(m)]
            sizes = list(values) if unit else [Fraction(rng.randint(1, 3)) for _ in range(m)]
            if rule == "fixed":
                sizes = [min(s, arg) for s in sizes]
                if unit:
                    values = list(sizes)
        elif kind == "unit_density_random":
            values = _distinct(rng, m, lambda: _rational(rng, max_value, den))
            sizes = list(values)
        else:
            values = _distinct(rng, m, lambda: _rational(rng, max_value, den))
            sizes = _distinct(rng, m, lambda: _rational(rng, max_size, den))
        if rule == "fixed":
            capacity = arg
        elif rule == "fraction":
            capacity = arg * sum(sizes, Fraction(0))
            if m == 0:
                capacity = arg
            elif max(sizes) > capacity:
                continue
        else:
            capacity = _uniform_capacity(rng, sizes, den)
        break
    else:
        raise ValueError(f"capacity rule {spec.capacity_rule!r} leaves an item larger than the capacity")

    owners = [rng.randrange(n) for _ in range(m)]
    items = tuple(Item(k, owners[k], values[k], sizes[k]) for k in range(m))
    return Instance(items, capacity, n)


# --- file format ----------------------------------------------------------

_TOP_FIELDS = {"capacity", "agents", "items"}
_ITEM_FIELDS = {"id", "owner", "value", "size"}


def _field_rational(raw, where):
    if isinstance(raw, bool) or not isinstance(raw, (str, int)):
        raise InstanceFormatError(f"{where}: expected a string like \"p/q\" or an integer, got {raw!r}")
    try:
        return to_rational(raw)
    except (InstanceFormatError, TypeError) as exc:
        raise InstanceFormatError(f"{where}: {exc}") from None


def _field_int(raw, where):
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise InstanceFormatError(f"{where}: expected an integer, got {raw!r}")
    return raw


def instance_from_dict(data) -> Instance:
    if not isinstance(data, dict):
        raise InstanceFormatError("top level must be an object")
    unknown = set(data) - _TOP_FIELDS
    if unknown:
        raise InstanceFormatError(f"unknown top-level field(s): {', '.join(sorted(unknown))}")
    missing = _TOP_FIELDS - set(data)
    if missing:
        raise InstanceFormatError(f"missing top-level field(s): {', '.join(sorted(missing))}")
    capacity = _field_rational(data["capacity"], "capacity")
    agents = _field_int(data["agents"], "agents")
    if not isinstance(data["items"], list):
        raise InstanceFormatError("items: expected an array")
    items = []
    for k, raw in enumerate(data["items"]):
        where = f"items[{k}]"
        if not isinstance(raw, dict):
            raise InstanceFormatError(f"{where}: expected an object")
        unknown = set(raw) - _ITEM_FIELDS
        if unknown:
            raise InstanceFormatError(f"{where}: unknown field(s): {', '.join(sorted(unknown))}")
        for name in ("id", "owner", "value"):
            if name not in raw:
                raise InstanceFormatError(f"{where}: missing field {name!r}")
        value = _field_rational(raw["value"], f"{where}.value")
        size = _field_rational(raw["size"], f"{where}.size") if "size" in raw else value
        try:
            items.append(Item(_field_int(raw["id"], f"{where}.id"), _field_int(raw["owner"], f"{where}.owner"),
                              value, size))
        except InstanceFormatError as exc:
            raise InstanceFormatError(f"{where}: {exc}") from None
    return Instance(tuple(items), capacity, agents)


def instance_to_dict(instance: Instance) -> dict:
    return {
        "capacity": str(instance.capacity),
        "agents": instance.agent_count,
        "items": [
            {"id": it.id, "owner": it.owner, "value": str(it.value), "size": str(it.size)}
            for it in instance.items
        ],
    }


def loads_instance(text: str) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return instance_from_dict(data)


def dumps_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2) + "\n"


def read_instance(path) -> Instance:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise InstanceFormatError(f"{path}: not valid UTF-8") from exc
    try:
        return loads_instance(text)
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{path}: {exc}") from None


def write_instance(instance: Instance, path):
    Path(path).write_text(dumps_instance(instance), encoding="utf-8")


# --- exhaustive enumeration -----------------------------------------------

def enumerate_unit_density(max_items: int = 5, max_agents: int = 3, values=range(1, 9), capacity=10):
    """Every unit-density instance up to relabelling of item ids.

    Items are listed in (value, owner) order with ids 0, 1, ...; a repeated
    (value, owner) pair is a genuine duplicate item.  Agent counts run from
    1 to ``max_agents`` and agents may own nothing.
    """
    from itertools import combinations_with_replacement

    capacity = to_rational(capacity)
    values = sorted(to_rational(v) for v in values)
    if values and values[-1] > capacity:
        raise ValueError("every value must fit the capacity")
    for n in range(1, max_agents + 1):
        kinds = [(v, a) for v in values for a in range(n)]
        for m in range(max_items + 1):
            for combo in combinations_with_replacement(kinds, m):
                items = tuple(Item(k, a, v, v) for k, (v, a) in enumerate(combo))
                yield Instance(items, capacity, n)

"""Hypothesis strategies for instances."""

import os
from fractions import Fraction
from math import ceil

from hypothesis import HealthCheck, settings, strategies as st

from mechlab import Instance, Item

PROPERTY_SETTINGS = settings(
    max_examples=int(os.environ.get("PROPERTY_EXAMPLES", 10_000)),
    deadline=None,
    derandomize=True,
    database=None,
    suppress_health_check=list(HealthCheck),
)
FAST_SETTINGS = settings(
    max_examples=300,
    deadline=None,
    derandomize=True,
    database=None,
    suppress_health_check=list(HealthCheck),
)

BETAS = (Fraction(1, 2), Fraction(4, 7), Fraction(987, 1597), Fraction(2, 3))


@st.composite
def general_instances(draw, min_items=1, max_items=7, max_agents=3, max_den=4):
    n = draw(st.integers(1, max_agents))
    m = draw(st.integers(min_items, max_items))
    capacity = Fraction(draw(st.integers(2, 40)), draw(st.integers(1, max_den)))
    rows = []
    for i in range(m):
        size = Fraction(draw(st.integers(1, 40)), draw(st.integers(1, max_den)))
        size = min(size, capacity)
        val = Fraction(draw(st.integers(1, 40)), draw(st.integers(1, max_den)))
        rows.append(Item(i, draw(st.integers(0, n - 1)), val, size))
    return Instance(tuple(rows), capacity, n)


@st.composite
def ud_instances(draw, min_items=1, max_items=7, max_agents=4, below=None, distinct=True):
    """Unit-density instances with C = 10 and values in tenths.

    ``below`` caps every value strictly under ``below * C`` so that the
    all-agents-small hypotheses of the properties are hit often.
    """
    n = draw(st.integers(1, max_agents))
    top = 100 if below is None else ceil(below * 100) - 1
    m = draw(st.integers(min_items, min(max_items, top)))
    ints = st.integers(1, top)
    tenths = draw(st.lists(ints, min_size=m, max_size=m, unique=distinct))
    rows = [Item(i, draw(st.integers(0, n - 1)), Fraction(t, 10), Fraction(t, 10)) for i, t in enumerate(tenths)]
    return Instance(tuple(rows), Fraction(10), n)

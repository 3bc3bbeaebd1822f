import numpy as np
import pytest

from choquetrank import Capacity, CriterionSet


def make_capacity(names, subset_values) -> Capacity:
    """Build a capacity from {('To','Re'): 0.973, ...}; boundaries implied."""
    crit = CriterionSet(tuple(names))
    values = np.zeros(1 << crit.n)
    values[-1] = 1.0
    for subset, value in subset_values.items():
        if isinstance(subset, str):
            subset = (subset,)
        values[crit.mask_of(subset)] = value
    return Capacity(crit, values)


def random_capacity(rng, names) -> Capacity:
    """Arbitrary signed capacity: proper subsets uniform on [-0.5, 1.5]."""
    crit = CriterionSet(tuple(names))
    values = np.zeros(1 << crit.n)
    values[1:-1] = rng.uniform(-0.5, 1.5, (1 << crit.n) - 2)
    values[-1] = 1.0
    return Capacity(crit, values)


def random_monotone_capacity(rng, names) -> Capacity:
    """Random monotone capacity via nonnegative masses on nonempty subsets."""
    crit = CriterionSet(tuple(names))
    size = 1 << crit.n
    masses = rng.random(size)
    masses[0] = 0.0
    masses /= masses.sum()
    values = np.zeros(size)
    for mask in range(1, size):
        sub = mask
        total = 0.0
        while True:
            total += masses[sub]
            if sub == 0:
                break
            sub = (sub - 1) & mask
        values[mask] = total
    values[-1] = 1.0
    return Capacity(crit, values)


@pytest.fixture
def tweet_criteria() -> CriterionSet:
    return CriterionSet(("To", "Re", "Au"))


@pytest.fixture
def learned_capacity(tweet_criteria) -> Capacity:
    """The signed three-criterion capacity used as a worked example throughout."""
    return make_capacity(
        tweet_criteria.names,
        {
            ("To",): 0.705,
            ("Re",): 0.215,
            ("Au",): 0.025,
            ("To", "Re"): 0.973,
            ("To", "Au"): -0.14,
            ("Re", "Au"): -0.25,
        },
    )

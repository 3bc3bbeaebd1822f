"""Cooperative-game diagnostics of a capacity, plus Spearman correlation.

The importance index of a criterion is its Shapley value: the average of
its marginal contributions mu(Cr + c) - mu(Cr) over all coalitions Cr of
the other criteria, with the classical permutation-count coefficients.
The interaction index averages the second difference
mu(Cr+ci+cj) - mu(Cr+ci) - mu(Cr+cj) + mu(Cr); it is positive for
synergistic pairs, negative for redundant ones, and exactly zero for
additive measures.

Both indices are computed by exhaustive subset enumeration, which is fine
under the dense-capacity cap of 20 criteria (and the typical 2 or 3).
"""

from __future__ import annotations

import math

from .measure import Capacity, CapacityError


class ConstantInputError(ValueError):
    """Correlation is undefined because one input has zero rank variance."""


def shapley_importance(mu: Capacity) -> dict[str, float]:
    """Shapley importance of every criterion; the values sum to mu(full) = 1."""
    n = mu.criteria.n
    values = mu.values
    fact = [math.factorial(k) for k in range(n + 1)]
    coeff = [fact[n - s - 1] * fact[s] / fact[n] for s in range(n)]
    out: dict[str, float] = {}
    for i, name in enumerate(mu.criteria.names):
        bit = 1 << i
        total = 0.0
        for mask in range(1 << n):
            if mask & bit:
                continue
            total += coeff[mask.bit_count()] * (values[mask | bit] - values[mask])
        out[name] = float(total)
    return out


def interaction_index(mu: Capacity, ci: str, cj: str) -> float:
    """Average pairwise interaction between two distinct criteria.

    For monotone capacities the value lies in [-1, 1]; additive capacities
    give exactly 0 for every pair.
    """
    crit = mu.criteria
    i, j = crit.index_of(ci), crit.index_of(cj)
    if i == j:
        raise CapacityError(f"interaction index needs two distinct criteria, got {ci!r} twice")
    n = crit.n
    values = mu.values
    bi, bj = 1 << i, 1 << j
    fact = [math.factorial(k) for k in range(n + 1)]
    coeff = [fact[n - s - 2] * fact[s] / fact[n - 1] for s in range(n - 1)]
    total = 0.0
    for mask in range(1 << n):
        if mask & (bi | bj):
            continue
        second_diff = (
            values[mask | bi | bj] - values[mask | bi] - values[mask | bj] + values[mask]
        )
        total += coeff[mask.bit_count()] * second_diff
    return float(total)


def interaction_matrix(mu: Capacity) -> dict[tuple[str, str], float]:
    """Interaction index for every unordered criterion pair, keyed in set order."""
    names = mu.criteria.names
    out: dict[tuple[str, str], float] = {}
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            out[(names[a], names[b])] = interaction_index(mu, names[a], names[b])
    return out


def _average_ranks(values) -> list[float]:
    """Fractional ranks (1-based); tied values share the average of their ranks."""
    n = len(values)
    order = sorted(range(n), key=lambda k: values[k])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman_correlation(x, y) -> float:
    """Spearman rank correlation with average-rank tie handling.

    Computed as the Pearson correlation of the fractional ranks, which
    stays valid under ties (the popular 6*sum(d^2) shortcut does not).
    Raises ConstantInputError when either input has no rank variance.
    """
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("correlation needs at least two observations")
    if any(not math.isfinite(v) for v in xs + ys):
        raise ValueError("inputs must be finite")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    n = len(xs)
    mean = (n + 1) / 2.0
    dx = [r - mean for r in rx]
    dy = [r - mean for r in ry]
    var_x = sum(d * d for d in dx)
    var_y = sum(d * d for d in dy)
    if var_x == 0.0 or var_y == 0.0:
        which = "x" if var_x == 0.0 else "y"
        raise ConstantInputError(f"zero rank variance in {which}; correlation undefined")
    cov = sum(a * b for a, b in zip(dx, dy))
    return float(cov / math.sqrt(var_x * var_y))

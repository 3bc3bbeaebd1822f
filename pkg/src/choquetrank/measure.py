"""Fuzzy measures (capacities) over a finite, ordered set of relevance criteria.

A capacity assigns a real value to every subset of criteria, with the empty
set pinned to 0 and the full set pinned to 1.  Monotone capacities are
classical fuzzy measures; signed (non-monotone) capacities are first-class
here because trained measures routinely carry negative pair values.

Subsets are encoded as bitmasks over the fixed criterion order, and a
capacity stores a dense array of length 2**N.  A hard cap of N <= 20 keeps
that dense table tractable; larger criterion sets must use the 2-additive
representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BOUNDARY_TOL = 1e-9
MAX_CRITERIA = 20

CAPACITY_MAGIC = "capacity-v1"

# Characters that would collide with the capacity/feature file syntax.
_FORBIDDEN_NAME_CHARS = set("+,\t\n\r ")


class CapacityError(ValueError):
    """Invalid capacity data: bad weights, degenerate scaling, bad subsets."""


class CapacityFormatError(CapacityError):
    """Malformed capacity file. Carries the offending 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class CriterionSet:
    """Ordered, immutable collection of distinct criterion names.

    The order is fixed for the lifetime of the set and defines the bitmask
    encoding of subsets (bit i corresponds to ``names[i]``).
    """

    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) < 1:
            raise CapacityError("criterion set must contain at least one name")
        seen = set()
        for name in self.names:
            if not name:
                raise CapacityError("criterion names must be non-empty")
            bad = _FORBIDDEN_NAME_CHARS.intersection(name)
            if bad:
                raise CapacityError(
                    f"criterion name {name!r} contains reserved character {sorted(bad)[0]!r}"
                )
            if name in seen:
                raise CapacityError(f"duplicate criterion name {name!r}")
            seen.add(name)

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise CapacityError(f"unknown criterion {name!r}") from None

    def mask_of(self, subset) -> int:
        """Bitmask of a subset given by criterion names. Rejects duplicates."""
        mask = 0
        for name in subset:
            bit = 1 << self.index_of(name)
            if mask & bit:
                raise CapacityError(f"criterion {name!r} repeated in subset")
            mask |= bit
        return mask

    def subset_names(self, mask: int) -> tuple[str, ...]:
        return tuple(self.names[i] for i in range(self.n) if mask & (1 << i))

    def subset_label(self, mask: int) -> str:
        """Canonical text form of a subset: names joined by '+' in set order."""
        if mask == 0:
            return "(empty)"
        return "+".join(self.subset_names(mask))


def _covering_violations(values: np.ndarray, n: int):
    """Yield (sub_mask, super_mask) covering pairs with mu(sub) > mu(super).

    Monotonicity over all pairs A subset of B is equivalent to monotonicity
    over covering pairs (B = A plus one criterion), so checking these
    N * 2**(N-1) pairs is exhaustive.
    """
    size = 1 << n
    for mask in range(size):
        for i in range(n):
            bit = 1 << i
            if mask & bit:
                continue
            if values[mask] > values[mask | bit]:
                yield mask, mask | bit


class Capacity:
    """Set function on criterion subsets with mu(empty)=0 and mu(full)=1.

    Immutable after construction; the dense value table is indexed by subset
    bitmask.  ``monotone`` is computed by exhaustive covering-pair check, so
    it is true iff the measure is a genuine fuzzy measure.
    """

    __slots__ = ("criteria", "values", "monotone")

    def __init__(self, criteria: CriterionSet, values):
        n = criteria.n
        if n > MAX_CRITERIA:
            raise CapacityError(
                f"dense capacities support at most {MAX_CRITERIA} criteria "
                f"(got {n}); use TwoAdditiveCapacity instead"
            )
        arr = np.array(values, dtype=np.float64)
        if arr.shape != (1 << n,):
            raise CapacityError(
                f"expected {1 << n} subset values for {n} criteria, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise CapacityError("capacity values must be finite")
        if arr[0] != 0.0:
            raise CapacityError(f"mu(empty) must be exactly 0, got {arr[0]!r}")
        if arr[-1] != 1.0:
            raise CapacityError(f"mu(full set) must be exactly 1, got {arr[-1]!r}")
        arr.flags.writeable = False
        object.__setattr__(self, "criteria", criteria)
        object.__setattr__(self, "values", arr)
        monotone = next(_covering_violations(arr, n), None) is None
        object.__setattr__(self, "monotone", monotone)

    def __setattr__(self, name, value):
        raise AttributeError("Capacity is immutable")

    def __eq__(self, other):
        if not isinstance(other, Capacity):
            return NotImplemented
        return self.criteria == other.criteria and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.criteria, self.values.tobytes()))

    def value(self, mask: int) -> float:
        return float(self.values[mask])

    def subset_value(self, subset) -> float:
        return float(self.values[self.criteria.mask_of(subset)])

    def proper_subset_items(self):
        """(mask, value) for every nonempty proper subset, in mask order."""
        full = self.criteria.full_mask
        return [(m, float(self.values[m])) for m in range(1, full)]

    def __repr__(self):
        body = ", ".join(
            f"{self.criteria.subset_label(m)}={v:g}" for m, v in self.proper_subset_items()
        )
        return f"Capacity({body}, monotone={self.monotone})"


@dataclass(frozen=True)
class TwoAdditiveCapacity:
    """Capacity parameterised by singleton and unordered-pair coefficients.

    The induced set function is mu(A) = sum of singleton coefficients in A
    plus sum of pair coefficients inside A; contributions of coalitions
    larger than two are zero by construction.
    """

    criteria: CriterionSet
    singleton_coeffs: tuple[float, ...]
    pair_coeffs: dict[tuple[str, str], float]

    def __post_init__(self):
        n = self.criteria.n
        coeffs = tuple(float(c) for c in self.singleton_coeffs)
        if len(coeffs) != n:
            raise CapacityError(
                f"expected {n} singleton coefficients, got {len(coeffs)}"
            )
        if not all(math.isfinite(c) for c in coeffs):
            raise CapacityError("singleton coefficients must be finite")
        canon: dict[tuple[str, str], float] = {}
        for (a, b), coeff in self.pair_coeffs.items():
            ia, ib = self.criteria.index_of(a), self.criteria.index_of(b)
            if ia == ib:
                raise CapacityError(f"pair coefficient names a single criterion {a!r}")
            key = (self.criteria.names[min(ia, ib)], self.criteria.names[max(ia, ib)])
            if key in canon:
                raise CapacityError(f"duplicate pair coefficient for {key}")
            if not math.isfinite(coeff):
                raise CapacityError("pair coefficients must be finite")
            canon[key] = float(coeff)
        object.__setattr__(self, "singleton_coeffs", coeffs)
        object.__setattr__(self, "pair_coeffs", canon)

    def pair(self, a: str, b: str) -> float:
        ia, ib = self.criteria.index_of(a), self.criteria.index_of(b)
        key = (self.criteria.names[min(ia, ib)], self.criteria.names[max(ia, ib)])
        return self.pair_coeffs.get(key, 0.0)


def capacity_from_weights(criteria: CriterionSet, weights) -> Capacity:
    """Additive capacity mu(A) = sum of the weights of the criteria in A.

    Weights must be nonnegative and sum to 1 (within 1e-9); the Choquet
    integral of the result equals the corresponding weighted mean.
    """
    w = np.asarray(list(weights), dtype=np.float64)
    n = criteria.n
    if w.shape != (n,):
        raise CapacityError(f"expected {n} weights, got {w.shape[0] if w.ndim == 1 else w.shape}")
    if not np.all(np.isfinite(w)):
        raise CapacityError("weights must be finite")
    if np.any(w < 0.0):
        bad = float(w[w < 0.0][0])
        raise CapacityError(f"negative weight {bad!r}")
    total = float(w.sum())
    if abs(total - 1.0) > BOUNDARY_TOL:
        raise CapacityError(f"weights sum to {total!r}, expected 1 within {BOUNDARY_TOL:g}")
    size = 1 << n
    values = np.zeros(size)
    for i in range(n):
        bit = 1 << i
        masks = np.arange(size)
        values[masks & bit != 0] += w[i]
    values[0] = 0.0
    values[-1] = 1.0
    return Capacity(criteria, values)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


def validate_capacity(capacity: Capacity, require_monotone: bool = False) -> ValidationReport:
    """Check boundary conditions and, optionally, monotonicity.

    Violations are reported as data, one human-readable string each; the
    function never raises on a bad measure.  Monotonicity is checked over
    covering pairs, which is equivalent to checking every pair A subset B.
    """
    violations: list[str] = []
    values = capacity.values
    crit = capacity.criteria
    if abs(values[0]) > BOUNDARY_TOL:
        violations.append(f"mu(empty) = {values[0]!r}, expected 0")
    if abs(values[-1] - 1.0) > BOUNDARY_TOL:
        violations.append(f"mu(full set) = {values[-1]!r}, expected 1")
    for mask in range(values.shape[0]):
        if not math.isfinite(values[mask]):
            violations.append(f"mu({crit.subset_label(mask)}) is not finite")
    if require_monotone:
        for sub, sup in _covering_violations(values, crit.n):
            violations.append(
                f"monotonicity: mu({crit.subset_label(sup)}) = {values[sup]:g}"
                f" < mu({crit.subset_label(sub)}) = {values[sub]:g}"
            )
    return ValidationReport(ok=not violations, violations=tuple(violations))


def expand_two_additive(t: TwoAdditiveCapacity) -> Capacity:
    """Expand singleton/pair coefficients to a full capacity.

    The raw set function is affinely rescaled so the empty set maps to 0 and
    the full set to 1; a raw full-set value of 0 cannot be normalised.
    """
    crit = t.criteria
    n = crit.n
    idx = {name: i for i, name in enumerate(crit.names)}
    size = 1 << n
    raw = np.zeros(size)
    for i, coeff in enumerate(t.singleton_coeffs):
        bit = 1 << i
        masks = np.arange(size)
        raw[masks & bit != 0] += coeff
    for (a, b), coeff in t.pair_coeffs.items():
        pair_mask = (1 << idx[a]) | (1 << idx[b])
        masks = np.arange(size)
        raw[(masks & pair_mask) == pair_mask] += coeff
    total = raw[-1]
    if abs(total) < 1e-12:
        raise CapacityError("degenerate 2-additive capacity: mu(full set) is 0 before rescaling")
    values = raw / total
    values[0] = 0.0
    values[-1] = 1.0
    return Capacity(crit, values)


# ---------------------------------------------------------------------------
# Capacity file format (capacity-v1)
#
# Line 1:  capacity-v1
# Line 2:  comma-separated criterion names
# Then one line per nonempty proper subset:  <name>+<name>...<TAB><value>
# mu(empty) and mu(full set) are implicit.


def dumps_capacity(capacity: Capacity) -> str:
    crit = capacity.criteria
    lines = [CAPACITY_MAGIC, ",".join(crit.names)]
    masks = sorted(range(1, crit.full_mask), key=lambda m: (m.bit_count(), m))
    for mask in masks:
        lines.append(f"{crit.subset_label(mask)}\t{float(capacity.values[mask])!r}")
    return "\n".join(lines) + "\n"


def loads_capacity(text: str) -> Capacity:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CapacityFormatError(1, "empty capacity file")
    if lines[0] != CAPACITY_MAGIC:
        raise CapacityFormatError(1, f"expected header {CAPACITY_MAGIC!r}, got {lines[0]!r}")
    if len(lines) < 2:
        raise CapacityFormatError(2, "missing criterion name line")
    try:
        crit = CriterionSet(tuple(lines[1].split(",")))
    except CapacityError as exc:
        raise CapacityFormatError(2, str(exc)) from None
    full = crit.full_mask
    values = np.zeros(1 << crit.n)
    seen: dict[int, int] = {}
    for line_no, line in enumerate(lines[2:], start=3):
        parts = line.split("\t")
        if len(parts) != 2:
            raise CapacityFormatError(line_no, f"expected 'subset<TAB>value', got {line!r}")
        label, value_text = parts
        if not label:
            raise CapacityFormatError(line_no, "empty subset")
        try:
            mask = crit.mask_of(label.split("+"))
        except CapacityError as exc:
            raise CapacityFormatError(line_no, str(exc)) from None
        if mask == full:
            raise CapacityFormatError(line_no, "full set value is implicit and must not appear")
        if mask in seen:
            raise CapacityFormatError(
                line_no, f"duplicate subset {label!r} (first seen on line {seen[mask]})"
            )
        try:
            value = float(value_text)
        except ValueError:
            raise CapacityFormatError(line_no, f"bad value {value_text!r}") from None
        if not math.isfinite(value):
            raise CapacityFormatError(line_no, f"non-finite value {value_text!r}")
        seen[mask] = line_no
        values[mask] = value
    missing = [m for m in range(1, full) if m not in seen]
    if missing:
        labels = ", ".join(crit.subset_label(m) for m in missing[:5])
        raise CapacityFormatError(
            len(lines) + 1, f"missing {len(missing)} subset value(s): {labels}"
        )
    values[0] = 0.0
    values[full] = 1.0
    return Capacity(crit, values)


def write_capacity_file(capacity: Capacity, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_capacity(capacity))


def read_capacity_file(path) -> Capacity:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_capacity(fh.read())

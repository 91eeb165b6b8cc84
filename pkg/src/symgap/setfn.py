"""Monotone submodular set functions under the value-oracle query model.

Ground sets are [0, m).  Sets are packed bit-vectors (arbitrary-precision
ints), so intersection/union/cardinality are single machine-level ops even
at m = 160000.  Every oracle evaluation bumps a query counter; structural
checks (monotonicity, submodularity) run either exhaustively over all 2^m
subsets (m <= 24) or by sampled triples.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

STRUCT_TOL = 1e-9
EXHAUSTIVE_MAX_M = 24


class GroundSetError(ValueError):
    """A set or index does not live on the expected ground set."""


class OracleContractError(ValueError):
    """An oracle violates a construction-time contract (normalization, range)."""


class ItemSet:
    """Immutable subset of [0, m) stored as a bit mask."""

    __slots__ = ("mask", "m")

    def __init__(self, mask: int, m: int):
        if m < 0:
            raise GroundSetError(f"ground size must be >= 0, got {m}")
        if mask < 0 or mask >> m:
            raise GroundSetError(f"mask {mask:#x} has bits outside [0, {m})")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "m", m)

    def __setattr__(self, *_):
        raise AttributeError("ItemSet is immutable")

    @classmethod
    def from_indices(cls, indices: Iterable[int], m: int) -> "ItemSet":
        mask = 0
        for j in indices:
            if not 0 <= j < m:
                raise GroundSetError(f"index {j} outside [0, {m})")
            mask |= 1 << j
        return cls(mask, m)

    @classmethod
    def empty(cls, m: int) -> "ItemSet":
        return cls(0, m)

    @classmethod
    def full(cls, m: int) -> "ItemSet":
        return cls((1 << m) - 1, m)

    @classmethod
    def from_hex(cls, digits: str, m: int) -> "ItemSet":
        return cls(int(digits, 16) if digits else 0, m)

    def to_hex(self) -> str:
        width = max(1, (self.m + 3) // 4)
        return format(self.mask, f"0{width}x")

    def indices(self) -> list[int]:
        out, mask, base = [], self.mask, 0
        while mask:
            chunk = mask & 0xFFFFFFFFFFFFFFFF
            while chunk:
                low = chunk & -chunk
                out.append(base + low.bit_length() - 1)
                chunk ^= low
            mask >>= 64
            base += 64
        return out

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __contains__(self, j: int) -> bool:
        return 0 <= j < self.m and bool(self.mask >> j & 1)

    def __iter__(self):
        return iter(self.indices())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ItemSet)
            and self.mask == other.mask
            and self.m == other.m
        )

    def __hash__(self) -> int:
        return hash((self.mask, self.m))

    def _coerce(self, other: "ItemSet") -> int:
        if not isinstance(other, ItemSet):
            raise TypeError(f"expected ItemSet, got {type(other).__name__}")
        if other.m != self.m:
            raise GroundSetError(f"ground sizes differ: {self.m} vs {other.m}")
        return other.mask

    def __and__(self, other: "ItemSet") -> "ItemSet":
        return ItemSet(self.mask & self._coerce(other), self.m)

    def __or__(self, other: "ItemSet") -> "ItemSet":
        return ItemSet(self.mask | self._coerce(other), self.m)

    def __sub__(self, other: "ItemSet") -> "ItemSet":
        return ItemSet(self.mask & ~self._coerce(other), self.m)

    def add(self, j: int) -> "ItemSet":
        if not 0 <= j < self.m:
            raise GroundSetError(f"index {j} outside [0, {self.m})")
        return ItemSet(self.mask | (1 << j), self.m)

    def remove(self, j: int) -> "ItemSet":
        if not 0 <= j < self.m:
            raise GroundSetError(f"index {j} outside [0, {self.m})")
        return ItemSet(self.mask & ~(1 << j), self.m)

    def complement(self) -> "ItemSet":
        return ItemSet(~self.mask & ((1 << self.m) - 1), self.m)

    def intersection_size(self, other: "ItemSet") -> int:
        return (self.mask & self._coerce(other)).bit_count()

    def issubset(self, other: "ItemSet") -> bool:
        return self.mask & ~self._coerce(other) == 0

    def __repr__(self) -> str:
        return f"ItemSet({self.indices()!r}, m={self.m})"


def random_subset(m: int, size: int, rng: np.random.Generator) -> ItemSet:
    """Uniformly random subset of [0, m) with exactly `size` elements."""
    if not 0 <= size <= m:
        raise GroundSetError(f"size {size} outside [0, {m}]")
    idx = rng.choice(m, size=size, replace=False)
    return ItemSet.from_indices([int(j) for j in idx], m)


class ValuationOracle:
    """Set function exposed only through value queries.

    eval() accepts an ItemSet or a raw mask int; each call increments the
    query counter (thread-safe so concurrent audits still report exact
    totals).  The descriptor is enough to rebuild the function bit-exactly
    and is withheld from mechanisms under audit (see restricted_view()).
    """

    __slots__ = ("m", "descriptor", "_fn", "_count", "_lock")

    def __init__(
        self,
        m: int,
        fn: Callable[[int], float],
        descriptor: dict,
        check_normalized: bool = True,
    ):
        self.m = m
        self._fn = fn
        self.descriptor = descriptor
        self._count = 0
        self._lock = threading.Lock()
        if check_normalized:
            v0 = fn(0)
            if abs(v0) > 1e-12:
                raise OracleContractError(f"f(empty) = {v0!r}, expected 0")

    def eval(self, S) -> float:
        mask = S.mask if isinstance(S, ItemSet) else S
        if mask < 0 or mask >> self.m:
            raise GroundSetError(f"query outside ground set of size {self.m}")
        with self._lock:
            self._count += 1
        return self._fn(mask)

    @property
    def query_count(self) -> int:
        return self._count

    def reset_query_count(self) -> None:
        with self._lock:
            self._count = 0

    def restricted_view(self) -> "OracleView":
        return OracleView(self)

    def to_json(self) -> str:
        return json.dumps(self.descriptor, sort_keys=True)


class OracleView:
    """Value-query handle handed to mechanisms: eval and ground size only.

    Deliberately does not expose the descriptor, so a mechanism cannot read
    the hidden structure (e.g. a planted partition) of an adversarial
    instance.
    """

    __slots__ = ("m", "_oracle")

    def __init__(self, oracle: ValuationOracle):
        self.m = oracle.m
        self._oracle = oracle

    def eval(self, S) -> float:
        return self._oracle.eval(S)


def query_count(oracle) -> int:
    """Total value queries issued to `oracle` (or to the oracle behind a view)."""
    if isinstance(oracle, OracleView):
        return oracle._oracle.query_count
    return oracle.query_count


def make_additive(weights: Sequence[float]) -> ValuationOracle:
    """f(S) = sum of per-item weights.  Weights must be >= 0."""
    w = [float(x) for x in weights]
    if any(x < 0 for x in w):
        raise OracleContractError("additive weights must be nonnegative")
    m = len(w)

    def fn(mask: int) -> float:
        total = 0.0
        while mask:
            low = mask & -mask
            total += w[low.bit_length() - 1]
            mask ^= low
        return total

    desc = {"kind": "additive", "params": {"weights": w}, "seed": None}
    return ValuationOracle(m, fn, desc)


def make_budget_additive(weights: Sequence[float], budget: float) -> ValuationOracle:
    """f(S) = min(sum weights over S, budget)."""
    w = [float(x) for x in weights]
    if any(x < 0 for x in w):
        raise OracleContractError("budget-additive weights must be nonnegative")
    b = float(budget)
    if b < 0:
        raise OracleContractError("budget must be nonnegative")
    m = len(w)

    def fn(mask: int) -> float:
        total = 0.0
        while mask:
            low = mask & -mask
            total += w[low.bit_length() - 1]
            if total >= b:
                return b
            mask ^= low
        return total

    desc = {"kind": "budget_additive", "params": {"weights": w, "budget": b}, "seed": None}
    return ValuationOracle(m, fn, desc)


def make_coverage(
    universe_weights: Sequence[float], cover_map: Sequence[Iterable[int]]
) -> ValuationOracle:
    """Weighted coverage: f(S) = weight of universe elements covered by S.

    cover_map[j] lists the universe elements item j covers.
    """
    uw = [float(x) for x in universe_weights]
    if any(x < 0 for x in uw):
        raise OracleContractError("universe weights must be nonnegative")
    u = len(uw)
    covers = []
    for j, elems in enumerate(cover_map):
        cm = 0
        for e in elems:
            if not 0 <= e < u:
                raise GroundSetError(f"item {j} covers element {e} outside universe")
            cm |= 1 << e
        covers.append(cm)
    m = len(covers)

    def fn(mask: int) -> float:
        covered = 0
        while mask:
            low = mask & -mask
            covered |= covers[low.bit_length() - 1]
            mask ^= low
        total = 0.0
        while covered:
            low = covered & -covered
            total += uw[low.bit_length() - 1]
            covered ^= low
        return total

    desc = {
        "kind": "coverage",
        "params": {
            "universe_weights": uw,
            "cover_map": [sorted(ItemSet(cm, u).indices()) for cm in covers],
        },
        "seed": None,
    }
    return ValuationOracle(m, fn, desc)


def make_polar(A: ItemSet, omega: float) -> ValuationOracle:
    """v(S) = |A ∩ S| + omega * |S \\ A|, the two-rate counting valuation.

    omega must lie in (0, 1) so items inside A strictly dominate.
    """
    if not 0.0 < omega < 1.0:
        raise OracleContractError(f"omega must be in (0, 1), got {omega}")
    a_mask, m, w = A.mask, A.m, float(omega)

    def fn(mask: int) -> float:
        inside = (mask & a_mask).bit_count()
        return inside + w * ((mask).bit_count() - inside)

    desc = {
        "kind": "polar",
        "params": {"A": A.to_hex(), "m": m, "omega": w},
        "seed": None,
    }
    return ValuationOracle(m, fn, desc)


def compose_product(f1: ValuationOracle, f2: ValuationOracle) -> ValuationOracle:
    """f = 1 - (1 - f1)(1 - f2); preserves monotone submodularity for [0,1]-valued parts.

    Each composite eval issues exactly one query to each component.
    """
    if f1.m != f2.m:
        raise GroundSetError(f"component ground sizes differ: {f1.m} vs {f2.m}")
    m = f1.m
    full = (1 << m) - 1
    for f in (f1, f2):
        top = f._fn(full)
        if top > 1.0 + 1e-12 or top < -1e-12:
            raise OracleContractError(
                f"component range outside [0, 1]: f(full) = {top!r}"
            )

    def fn(mask: int) -> float:
        return 1.0 - (1.0 - f1.eval(mask)) * (1.0 - f2.eval(mask))

    desc = {
        "kind": "product",
        "params": {"components": [f1.descriptor, f2.descriptor]},
        "seed": None,
    }
    return ValuationOracle(m, fn, desc)


def scale_oracle(f: ValuationOracle, lam: float) -> ValuationOracle:
    """lam * f, with descriptor provenance preserved."""
    if lam < 0:
        raise OracleContractError("scale factor must be nonnegative")

    def fn(mask: int) -> float:
        return lam * f.eval(mask)

    desc = {"kind": "scaled", "params": {"lam": float(lam), "inner": f.descriptor}, "seed": None}
    return ValuationOracle(f.m, fn, desc)


def tabulate(oracle, m: int | None = None) -> np.ndarray:
    """Evaluate an oracle (or view) on all 2^m subsets, indexed by mask.

    This is the memoization step behind every exhaustive check: 2^m queries,
    after which structural scans are pure array work.
    """
    size = oracle.m if m is None else m
    if size > EXHAUSTIVE_MAX_M:
        raise GroundSetError(
            f"exhaustive tabulation capped at m <= {EXHAUSTIVE_MAX_M}, got {size}"
        )
    ev = oracle.eval
    return np.fromiter((ev(mask) for mask in range(1 << size)), dtype=float, count=1 << size)


@dataclass(frozen=True)
class MonotoneViolation:
    S: ItemSet
    item: int
    gap: float  # f(S + item) - f(S), negative when violating


@dataclass(frozen=True)
class SubmodularViolation:
    S: ItemSet
    item_i: int
    item_j: int
    gap: float  # marginal(i | S) - marginal(i | S + j), negative when violating


@dataclass
class StructureReport:
    passed: bool
    mode: str
    m: int
    checked: int
    tolerance: float
    monotone_violations: list[MonotoneViolation] = field(default_factory=list)
    submodular_violations: list[SubmodularViolation] = field(default_factory=list)
    monotone_violation_count: int = 0
    submodular_violation_count: int = 0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "mode": self.mode,
            "m": self.m,
            "checked": self.checked,
            "tolerance": self.tolerance,
            "monotone_violation_count": self.monotone_violation_count,
            "submodular_violation_count": self.submodular_violation_count,
        }


_MAX_RECORDED = 100


def check_monotone_submodular(
    oracle,
    mode: str = "exhaustive",
    trials: int = 100_000,
    rng: np.random.Generator | None = None,
    tol: float = STRUCT_TOL,
) -> StructureReport:
    """Verify monotonicity and submodularity of an oracle.

    exhaustive: tabulates all 2^m values (m <= 24) and scans every
    (S, i) monotonicity pair and (S, i, j) submodularity triple with
    vectorized mask arithmetic.
    sampled: checks `trials` random triples; a statistical smoke test for
    ground sets beyond the exhaustive cap.
    """
    m = oracle.m
    if mode == "exhaustive":
        table = tabulate(oracle)
        masks = np.arange(1 << m, dtype=np.int64)
        mono: list[MonotoneViolation] = []
        sub: list[SubmodularViolation] = []
        mono_count = sub_count = 0
        checked = 0
        for i in range(m):
            bit_i = 1 << i
            no_i = masks[(masks & bit_i) == 0]
            gain_i = table[no_i | bit_i] - table[no_i]
            checked += no_i.size
            bad = np.nonzero(gain_i < -tol)[0]
            mono_count += bad.size
            for t in bad[: max(0, _MAX_RECORDED - len(mono))]:
                mono.append(MonotoneViolation(ItemSet(int(no_i[t]), m), i, float(gain_i[t])))
            for j in range(i + 1, m):
                bit_j = 1 << j
                base = no_i[(no_i & bit_j) == 0]
                lhs = table[base | bit_i] - table[base]
                rhs = table[base | bit_i | bit_j] - table[base | bit_j]
                diff = lhs - rhs
                checked += base.size
                bad = np.nonzero(diff < -tol)[0]
                sub_count += bad.size
                for t in bad[: max(0, _MAX_RECORDED - len(sub))]:
                    sub.append(
                        SubmodularViolation(ItemSet(int(base[t]), m), i, j, float(diff[t]))
                    )
        passed = mono_count == 0 and sub_count == 0
        return StructureReport(
            passed, "exhaustive", m, checked, tol, mono, sub, mono_count, sub_count
        )

    if mode == "sampled":
        if rng is None:
            rng = np.random.default_rng(0)
        mono, sub = [], []
        mono_count = sub_count = 0
        ev = oracle.eval
        for _ in range(trials):
            mask = int(rng.integers(0, 1 << min(m, 62)))
            if m > 62:
                mask = 0
                for block in range((m + 61) // 62):
                    mask |= int(rng.integers(0, 1 << min(62, m - 62 * block))) << (62 * block)
            i, j = (int(x) for x in rng.choice(m, size=2, replace=False))
            mask &= ~(1 << i) & ~(1 << j)
            f_s = ev(mask)
            f_si = ev(mask | (1 << i))
            gain = f_si - f_s
            if gain < -tol:
                mono_count += 1
                if len(mono) < _MAX_RECORDED:
                    mono.append(MonotoneViolation(ItemSet(mask, m), i, gain))
            f_sj = ev(mask | (1 << j))
            f_sij = ev(mask | (1 << i) | (1 << j))
            diff = gain - (f_sij - f_sj)
            if diff < -tol:
                sub_count += 1
                if len(sub) < _MAX_RECORDED:
                    sub.append(SubmodularViolation(ItemSet(mask, m), i, j, diff))
        passed = mono_count == 0 and sub_count == 0
        return StructureReport(
            passed, "sampled", m, trials, tol, mono, sub, mono_count, sub_count
        )

    raise ValueError(f"unknown mode {mode!r}")


def reconstruct_oracle(descriptor: dict | str) -> ValuationOracle:
    """Rebuild an oracle bit-exactly from its JSON descriptor."""
    if isinstance(descriptor, str):
        descriptor = json.loads(descriptor)
    kind = descriptor["kind"]
    params = descriptor.get("params", {})
    if kind == "additive":
        return make_additive(params["weights"])
    if kind == "budget_additive":
        return make_budget_additive(params["weights"], params["budget"])
    if kind == "coverage":
        return make_coverage(params["universe_weights"], params["cover_map"])
    if kind == "polar":
        A = ItemSet.from_hex(params["A"], params["m"])
        return make_polar(A, params["omega"])
    if kind == "product":
        c1, c2 = params["components"]
        return compose_product(reconstruct_oracle(c1), reconstruct_oracle(c2))
    if kind == "scaled":
        return scale_oracle(reconstruct_oracle(params["inner"]), params["lam"])
    if kind in ("symgap", "two_block_product"):
        from . import instances

        return instances.reconstruct_block_oracle(descriptor)
    raise ValueError(f"unknown oracle kind {kind!r}")

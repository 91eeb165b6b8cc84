"""Allocation mechanisms: greedy and exhaustive baselines, exhaustive VCG,
and the exponential-rounding maximal-in-distributional-range solver.

Mechanisms only ever see OracleView handles (value queries + ground size);
the experiment harness hands them views and accounts queries on the real
oracles behind the scenes.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .setfn import GroundSetError, ItemSet, OracleView, tabulate
from .instances import AuctionInstance, CPPInstance
from .extensions import enum_weights, f_exp_blockwise, _block_val_from_descriptor

GAIN_TOL = 1e-12
_AUCTION_ENUM_CAP = 4_000_000
_CPP_ENUM_CAP = 5_000_000


class InfeasibleOutcomeError(RuntimeError):
    """A mechanism produced an outcome outside the feasible set."""


class NonConcaveClassError(ValueError):
    """The rounding solver refused a valuation class without a concave
    extension guarantee; pass force=True to run it as a labeled heuristic."""


@dataclass(frozen=True)
class Outcome:
    """Auction outcome: one bundle per player plus payments."""

    sets: tuple[ItemSet, ...]
    payments: tuple[float, ...]

    def __post_init__(self):
        if len(self.sets) != len(self.payments):
            raise ValueError("one payment per player required")
        taken = 0
        for S in self.sets:
            if taken & S.mask:
                raise InfeasibleOutcomeError("allocated bundles overlap")
            taken |= S.mask


@dataclass(frozen=True)
class GreedyResult:
    S: ItemSet
    value: float
    steps: int


def greedy_cpp(oracles: Sequence, k: int, tol: float = GAIN_TOL) -> GreedyResult:
    """k-step greedy on the declared welfare sum; ties to the lowest item
    index; stops early when no candidate improves."""
    m = oracles[0].m
    if not 0 < k <= m:
        raise GroundSetError(f"k = {k} outside (0, {m}]")
    mask = 0
    current = 0.0
    steps = 0
    for _ in range(k):
        best_j = -1
        best_val = current + tol
        for j in range(m):
            bit = 1 << j
            if mask & bit:
                continue
            val = 0.0
            cand = mask | bit
            for o in oracles:
                val += o.eval(cand)
            if val > best_val:
                best_val = val
                best_j = j
        if best_j < 0:
            break
        mask |= 1 << best_j
        current = best_val
        steps += 1
    return GreedyResult(ItemSet(mask, m), current, steps)


@dataclass(frozen=True)
class OptResult:
    S: ItemSet
    value: float


def exhaustive_opt_cpp(oracles: Sequence, k: int) -> OptResult:
    """Exact optimum over all subsets of size <= k (lexicographic enumeration,
    first maximum kept, so ties resolve to the smallest-index set)."""
    m = oracles[0].m
    if not 0 < k <= m:
        raise GroundSetError(f"k = {k} outside (0, {m}]")
    total = sum(math.comb(m, t) for t in range(k + 1))
    if total > _CPP_ENUM_CAP:
        raise GroundSetError(f"{total} candidate sets exceed the enumeration cap")
    best_mask = 0
    best_val = 0.0
    for t in range(1, k + 1):
        for combo in combinations(range(m), t):
            cand = 0
            for j in combo:
                cand |= 1 << j
            val = 0.0
            for o in oracles:
                val += o.eval(cand)
            if val > best_val + GAIN_TOL:
                best_val = val
                best_mask = cand
    return OptResult(ItemSet(best_mask, m), best_val)


@lru_cache(maxsize=16)
def _assignment_masks(n: int, m: int) -> np.ndarray:
    """(n+1)^m x n matrix: row = assignment code, column i = bundle mask of
    player i.  Digit n means 'unallocated'."""
    codes = np.arange((n + 1) ** m, dtype=np.int64)
    masks = np.zeros((codes.size, n), dtype=np.int64)
    for j in range(m):
        digit = (codes // (n + 1) ** j) % (n + 1)
        for i in range(n):
            masks[:, i] |= (digit == i).astype(np.int64) << j
    return masks


def _auction_enum_guard(n: int, m: int) -> None:
    if (n + 1) ** m > _AUCTION_ENUM_CAP:
        raise GroundSetError(
            f"(n+1)^m = {(n + 1) ** m} assignments exceed the enumeration cap"
        )


def exhaustive_opt_auction(oracles: Sequence) -> tuple[tuple[ItemSet, ...], float]:
    """Welfare-optimal allocation by mixed-radix enumeration (items may stay
    unallocated); deterministic first-maximum tie-breaking."""
    n = len(oracles)
    m = oracles[0].m
    _auction_enum_guard(n, m)
    masks = _assignment_masks(n, m)
    tables = [tabulate(o) for o in oracles]
    welfare = np.zeros(masks.shape[0])
    for i in range(n):
        welfare += tables[i][masks[:, i]]
    best = int(np.argmax(welfare))
    alloc = tuple(ItemSet(int(masks[best, i]), m) for i in range(n))
    return alloc, float(welfare[best])


def vcg_auction_exhaustive(oracles: Sequence) -> Outcome:
    """Exhaustive VCG with Clarke pivot payments.

    p_i = (others' optimum without i) - (others' welfare at the chosen
    allocation); individually rational and nonnegative for monotone
    normalized valuations.
    """
    n = len(oracles)
    m = oracles[0].m
    _auction_enum_guard(n, m)
    masks = _assignment_masks(n, m)
    tables = [tabulate(o) for o in oracles]
    per_player = [tables[i][masks[:, i]] for i in range(n)]
    welfare = np.zeros(masks.shape[0])
    for col in per_player:
        welfare += col
    best = int(np.argmax(welfare))
    payments = []
    for i in range(n):
        minus_i = welfare - per_player[i]
        opt_minus_i = float(minus_i.max())
        payments.append(opt_minus_i - float(minus_i[best]))
    alloc = tuple(ItemSet(int(masks[best, i]), m) for i in range(n))
    return Outcome(alloc, tuple(payments))


@dataclass(frozen=True)
class DistributionOverOutcomes:
    """Product rounding: item j enters the outcome independently with
    probability marginals[j] = 1 - e^{-x[j]}."""

    marginals: tuple[float, ...]
    x: tuple[float, ...]
    kind: str = "poisson_product"

    @property
    def m(self) -> int:
        return len(self.marginals)

    def sample(self, rng: np.random.Generator) -> ItemSet:
        draws = rng.random(self.m) < np.asarray(self.marginals)
        mask = 0
        for j in np.nonzero(draws)[0]:
            mask |= 1 << int(j)
        return ItemSet(mask, self.m)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "marginals": list(self.marginals),
            "x": list(self.x),
        }


_CONCAVE_KINDS = ("additive", "coverage")


def _concave_class(descriptor: dict | None) -> bool:
    if descriptor is None:
        return False
    kind = descriptor.get("kind")
    if kind in _CONCAVE_KINDS:
        return True
    if kind == "scaled":
        return _concave_class(descriptor["params"]["inner"])
    if kind == "two_block_product":
        phi = descriptor["params"]["phi"]
        return phi.get("kind") == "alpha" and phi.get("alpha") == 1.0
    return False


def _project_box_budget(z: np.ndarray, w: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {0 <= z <= 1, w . z <= budget} (w > 0)."""
    clipped = np.clip(z, 0.0, 1.0)
    if float(w @ clipped) <= budget + 1e-15:
        return clipped
    lo, hi = 0.0, float(np.max(z / np.minimum(w, 1.0))) + 1.0
    for _ in range(200):
        theta = 0.5 * (lo + hi)
        val = float(w @ np.clip(z - theta * w, 0.0, 1.0))
        if val > budget:
            lo = theta
        else:
            hi = theta
    return np.clip(z - hi * w, 0.0, 1.0)


@dataclass(frozen=True)
class MIDRResult:
    x_star: tuple[float, ...]
    value: float
    distribution: DistributionOverOutcomes
    iterations: int
    heuristic: bool
    objective_mode: str

    def to_dict(self) -> dict:
        return {
            "x_star": list(self.x_star),
            "value": self.value,
            "iterations": self.iterations,
            "heuristic": self.heuristic,
            "objective_mode": self.objective_mode,
            "distribution": self.distribution.to_dict(),
        }


def poisson_midr_cpp(
    oracle,
    k: int,
    force: bool = False,
    max_iter: int = 2000,
    improve_tol: float = 1e-9,
) -> MIDRResult:
    """Maximize F(1 - e^{-x}) over {x in [0,1]^m, sum x <= k} by projected
    finite-difference ascent on an exact evaluator, then round by product
    marginals 1 - e^{-x*}.

    The distributional range argument needs a concave objective; classes
    without that guarantee are refused unless force=True, and forced runs
    are labeled heuristic.
    """
    desc = getattr(oracle, "descriptor", None)
    concave = _concave_class(desc)
    if not concave and not force:
        raise NonConcaveClassError(
            f"valuation kind {desc.get('kind') if desc else None!r} has no concave "
            "rounding guarantee; pass force=True to run as a heuristic"
        )
    m = oracle.m
    if not 0 < k <= m:
        raise GroundSetError(f"k = {k} outside (0, {m}]")

    if m <= 16:
        table = tabulate(oracle)

        def g_full(x: np.ndarray) -> float:
            return float(enum_weights(1.0 - np.exp(-x)) @ table)

        dim = m
        weights = np.ones(m)
        expand: Callable[[np.ndarray], np.ndarray] = lambda z: z
        objective = g_full
        mode = "exact_enum"
    else:
        kind = desc.get("kind") if desc else None
        if kind not in ("symgap", "two_block_product"):
            raise GroundSetError(
                "solver needs m <= 16 for full enumeration or a two-block descriptor"
            )
        bv = _block_val_from_descriptor(desc)
        a_idx = bv.A.indices()
        b_idx = bv.B.indices()
        dim = 2
        weights = np.array([float(len(a_idx)), float(len(b_idx))])

        def expand(z: np.ndarray) -> np.ndarray:
            x = np.zeros(m)
            x[a_idx] = z[0]
            x[b_idx] = z[1]
            return x

        def objective(z: np.ndarray) -> float:
            return f_exp_blockwise(bv, float(z[0]), float(z[1]))

        mode = "exact_blockwise"

    z = _project_box_budget(np.full(dim, k / float(weights.sum())), weights, float(k))
    val = objective(z)
    eta = 0.25
    h = 1e-6
    iterations = 0
    stall = 0
    for iterations in range(1, max_iter + 1):
        grad = np.zeros(dim)
        for d in range(dim):
            zp = z.copy()
            zm = z.copy()
            zp[d] = min(1.0, z[d] + h)
            zm[d] = max(0.0, z[d] - h)
            denom = zp[d] - zm[d]
            grad[d] = (objective(zp) - objective(zm)) / denom if denom > 0 else 0.0
        moved = False
        for _ in range(40):
            cand = _project_box_budget(z + eta * grad, weights, float(k))
            cand_val = objective(cand)
            if cand_val > val + GAIN_TOL:
                improvement = cand_val - val
                z, val = cand, cand_val
                eta = min(eta * 1.5, 4.0)
                moved = True
                break
            eta *= 0.5
            if eta < 1e-9:
                break
        if not moved:
            break
        if improvement < improve_tol:
            stall += 1
            if stall >= 3:
                break
        else:
            stall = 0
    x_star = expand(z)
    marginals = tuple(float(v) for v in 1.0 - np.exp(-x_star))
    dist = DistributionOverOutcomes(marginals, tuple(float(v) for v in x_star))
    return MIDRResult(
        tuple(float(v) for v in x_star), float(val), dist, iterations, not concave, mode
    )


class CPPMechanism(ABC):
    """Public-project mechanism.  Query-bounded mechanisms see OracleViews
    only; direct-revelation mechanisms (needs_descriptor = True) receive the
    declared oracles themselves, descriptors included."""

    name: str = "cpp"
    deterministic: bool = False
    kind: str = "cpp"
    needs_descriptor: bool = False

    @abstractmethod
    def allocate(
        self, views: Sequence[OracleView], k: int, rng: np.random.Generator
    ) -> ItemSet | DistributionOverOutcomes:
        ...


class AuctionMechanism(ABC):
    name: str = "auction"
    deterministic: bool = False
    kind: str = "auction"

    @abstractmethod
    def allocate(
        self, views: Sequence[OracleView], rng: np.random.Generator
    ) -> Outcome:
        ...


class RandomSubsetCPP(CPPMechanism):
    """Uniform random size-k project; one confirmation query."""

    name = "random"

    def allocate(self, views, k, rng):
        m = views[0].m
        idx = rng.choice(m, size=k, replace=False)
        S = ItemSet.from_indices([int(j) for j in idx], m)
        views[0].eval(S)
        return S


class GreedyCPP(CPPMechanism):
    name = "greedy"
    deterministic = True

    def allocate(self, views, k, rng):
        return greedy_cpp(views, k).S


class BalancedPrefixCPP(CPPMechanism):
    """Random-permutation prefixes (balanced w.h.p. against any hidden
    bisection); returns the smallest prefix of size <= k reaching a fraction
    of the full-set value, else the size-k prefix."""

    name = "balanced_prefix"

    def __init__(self, threshold: float = 0.9):
        self.threshold = threshold

    def allocate(self, views, k, rng):
        m = views[0].m
        perm = [int(j) for j in rng.permutation(m)]
        total = sum(v.eval(ItemSet.full(m)) for v in views)
        mask = 0
        chosen = None
        for t, j in enumerate(perm[:k], start=1):
            mask |= 1 << j
            val = sum(v.eval(mask) for v in views)
            if val >= self.threshold * total:
                chosen = ItemSet(mask, m)
                break
        return chosen if chosen is not None else ItemSet(mask, m)


class ExhaustiveOptCPP(CPPMechanism):
    name = "exhaustive_opt"
    deterministic = True

    def allocate(self, views, k, rng):
        return exhaustive_opt_cpp(views, k).S


class PoissonMIDRCPP(CPPMechanism):
    """Distribution-valued direct-revelation mechanism: product-rounding
    lottery of the fractional optimizer over the declared valuation."""

    name = "poisson_midr"
    needs_descriptor = True

    def __init__(self, force: bool = False):
        self.force = force

    def allocate(self, oracles, k, rng):
        if len(oracles) != 1:
            raise GroundSetError("rounding solver is single-oracle")
        return poisson_midr_cpp(oracles[0], k, force=self.force).distribution


class VCGExhaustiveAuction(AuctionMechanism):
    name = "vcg"
    deterministic = True

    def allocate(self, views, rng):
        return vcg_auction_exhaustive(views)


class PayYourBidGreedyAuction(AuctionMechanism):
    """Greedy item-by-item assignment charged at the declared bundle value.

    Deliberately manipulable: understating the declaration keeps the
    allocation while cutting the payment.
    """

    name = "pay_your_bid_greedy"
    deterministic = True

    def allocate(self, views, rng):
        n = len(views)
        m = views[0].m
        bundles = [0] * n
        values = [0.0] * n
        for j in range(m):
            best_i = -1
            best_gain = GAIN_TOL
            best_val = 0.0
            for i in range(n):
                cand_val = views[i].eval(bundles[i] | (1 << j))
                gain = cand_val - values[i]
                if gain > best_gain:
                    best_gain = gain
                    best_i = i
                    best_val = cand_val
            if best_i >= 0:
                bundles[best_i] |= 1 << j
                values[best_i] = best_val
        sets = tuple(ItemSet(b, m) for b in bundles)
        return Outcome(sets, tuple(values))


@dataclass
class EmpiricalReport:
    mechanism: str
    kind: str
    trials: int
    seed: int
    welfare_mean: float
    welfare_stderr: float
    feasible: bool
    query_total: int
    per_trial: list[dict]

    def to_dict(self, include_trials: bool = True) -> dict:
        d = {
            "mechanism": self.mechanism,
            "kind": self.kind,
            "trials": self.trials,
            "seed": self.seed,
            "welfare_mean": self.welfare_mean,
            "welfare_stderr": self.welfare_stderr,
            "feasible": self.feasible,
            "query_total": self.query_total,
        }
        if include_trials:
            d["per_trial"] = self.per_trial
        return d

    def csv_rows(self) -> list[list]:
        header = ["trial", "welfare", "queries", "feasible", "payments"]
        rows: list[list] = [header]
        for rec in self.per_trial:
            rows.append(
                [
                    rec["trial"],
                    rec["welfare"],
                    rec["queries"],
                    int(rec["feasible"]),
                    ";".join(f"{p!r}" for p in rec.get("payments", [])),
                ]
            )
        return rows


def run_mechanism(mech, instance, trials: int, seed: int) -> EmpiricalReport:
    """Seeded repeated runs with per-trial welfare, query counts, and
    feasibility flags.  Deterministic for fixed (mechanism, instance, seed).
    """
    oracles = instance.oracles
    if getattr(mech, "needs_descriptor", False):
        views = oracles
    else:
        views = tuple(o.restricted_view() for o in oracles)
    children = np.random.SeedSequence(seed).spawn(trials)
    records: list[dict] = []
    all_feasible = True
    query_total = 0
    welfare_sum = 0.0
    welfare_sq = 0.0
    is_cpp = isinstance(instance, CPPInstance)
    for t in range(trials):
        rng = np.random.default_rng(children[t])
        before = sum(o.query_count for o in oracles)
        if is_cpp:
            out = mech.allocate(views, instance.k, rng)
        else:
            out = mech.allocate(views, rng)
        queries = sum(o.query_count for o in oracles) - before
        query_total += queries
        payments: list[float] = []
        if isinstance(out, DistributionOverOutcomes):
            feasible = sum(out.x) <= instance.k + 1e-9
            realized = out.sample(rng)
            welfare = sum(o.eval(realized) for o in oracles)
            sets_hex = [realized.to_hex()]
        elif is_cpp:
            feasible = len(out) <= instance.k
            welfare = sum(o.eval(out) for o in oracles)
            sets_hex = [out.to_hex()]
        else:
            feasible = True  # Outcome construction already enforces disjointness
            welfare = sum(o.eval(S) for o, S in zip(oracles, out.sets))
            payments = list(out.payments)
            sets_hex = [S.to_hex() for S in out.sets]
        all_feasible &= feasible
        welfare_sum += welfare
        welfare_sq += welfare * welfare
        records.append(
            {
                "trial": t,
                "welfare": welfare,
                "queries": queries,
                "feasible": feasible,
                "payments": payments,
                "sets": sets_hex,
            }
        )
    mean = welfare_sum / trials
    if trials > 1:
        var = max(0.0, (welfare_sq - trials * mean * mean) / (trials - 1))
        stderr = math.sqrt(var / trials)
    else:
        stderr = 0.0
    return EmpiricalReport(
        mechanism=getattr(mech, "name", type(mech).__name__),
        kind="cpp" if is_cpp else "auction",
        trials=trials,
        seed=seed,
        welfare_mean=mean,
        welfare_stderr=stderr,
        feasible=all_feasible,
        query_total=query_total,
        per_trial=records,
    )

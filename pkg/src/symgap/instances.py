"""Hard-instance families: two-block symmetric valuations, bisection
sequences, polar-player auctions, and level parameter schedules.

The central object is the perturbed two-block surface

    psi(x, y)       = 1 - (1 - phi(x)) (1 - phi(y))
    psi_tilde(x, y) = psi at the beta-coupled arguments:
        |x - y| <= beta : ((x+y)/2, (x+y)/2)
        x - y  >  beta  : (x - beta/2, y + beta/2)
        y - x  >  beta  : (x + beta/2, y - beta/2)

applied to block occupancy fractions x = |S ∩ A|/|A|, y = |S ∩ B|/|B|.
Inside the beta band the value depends on x + y only, which is what makes
the hidden bisection (A, B) invisible to balanced queries.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .setfn import (
    GroundSetError,
    ItemSet,
    OracleContractError,
    ValuationOracle,
    make_budget_additive,
    make_coverage,
    make_polar,
    random_subset,
)


class Phi:
    """Normalized concave profile on [0, 1]: phi(0) = 0, nondecreasing, concave."""

    kind: str

    def value(self, t):
        raise NotImplementedError

    def __call__(self, t):
        return self.value(t)

    def to_param_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PhiAlpha(Phi):
    """phi(t) = min(t / alpha, 1): linear ramp saturating at t = alpha."""

    alpha: float
    kind: str = field(default="alpha", init=False)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise OracleContractError(f"alpha must be in (0, 1], got {self.alpha}")

    def value(self, t):
        if isinstance(t, (float, int)):
            v = t / self.alpha
            return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)
        return np.clip(np.asarray(t, dtype=float) / self.alpha, 0.0, 1.0)

    def to_param_dict(self) -> dict:
        return {"kind": "alpha", "alpha": self.alpha}


@dataclass(frozen=True)
class PhiTable(Phi):
    """Piecewise-linear concave profile given by knots; validated on build."""

    knots_t: tuple[float, ...]
    knots_v: tuple[float, ...]
    kind: str = field(default="table", init=False)

    def __post_init__(self):
        t = np.asarray(self.knots_t, dtype=float)
        v = np.asarray(self.knots_v, dtype=float)
        if t.size < 2 or t.size != v.size:
            raise OracleContractError("need matching knot arrays with >= 2 knots")
        if t[0] != 0.0 or t[-1] != 1.0 or (np.diff(t) <= 0).any():
            raise OracleContractError("knots_t must increase from 0 to 1")
        if abs(v[0]) > 1e-12:
            raise OracleContractError("phi(0) must be 0")
        if (v < -1e-12).any() or (v > 1.0 + 1e-12).any():
            raise OracleContractError("phi values must lie in [0, 1]")
        slopes = np.diff(v) / np.diff(t)
        if (slopes < -1e-12).any():
            raise OracleContractError("phi must be nondecreasing")
        if (np.diff(slopes) > 1e-12).any():
            raise OracleContractError("phi must be concave (slopes nonincreasing)")

    def value(self, t):
        out = np.interp(np.asarray(t, dtype=float), self.knots_t, self.knots_v)
        if np.ndim(t) == 0:
            return float(out)
        return out

    def to_param_dict(self) -> dict:
        return {
            "kind": "table",
            "knots_t": list(self.knots_t),
            "knots_v": list(self.knots_v),
        }


def phi_from_param_dict(d: dict) -> Phi:
    if d["kind"] == "alpha":
        return PhiAlpha(d["alpha"])
    if d["kind"] == "table":
        return PhiTable(tuple(d["knots_t"]), tuple(d["knots_v"]))
    raise ValueError(f"unknown phi kind {d['kind']!r}")


def phi_alpha(alpha: float, t):
    """Convenience: min(t/alpha, 1) evaluated at t (scalar or array)."""
    return PhiAlpha(alpha).value(t)


def psi(phi: Phi, x, y):
    """psi(x, y) = 1 - (1 - phi(x))(1 - phi(y)); the product composition surface."""
    px, py = phi.value(x), phi.value(y)
    return 1.0 - (1.0 - px) * (1.0 - py)


def psi_tilde(phi: Phi, beta: float, x, y):
    """The beta-band perturbation of psi (vectorized; beta = 0 degenerates to psi)."""
    if beta < 0:
        raise OracleContractError(f"beta must be >= 0, got {beta}")
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        d = x - y
        if -beta <= d <= beta:
            mid = 0.5 * (x + y)
            p = phi.value(mid)
            return 1.0 - (1.0 - p) * (1.0 - p)
        if d > beta:
            return psi(phi, x - 0.5 * beta, y + 0.5 * beta)
        return psi(phi, x + 0.5 * beta, y - 0.5 * beta)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mid = psi(phi, 0.5 * (x + y), 0.5 * (x + y))
    hi = psi(phi, x - 0.5 * beta, y + 0.5 * beta)
    lo = psi(phi, x + 0.5 * beta, y - 0.5 * beta)
    return np.where(np.abs(x - y) <= beta, mid, np.where(x - y > beta, hi, lo))


@dataclass(frozen=True)
class TwoBlockValuation:
    """Descriptor of lam * psi_tilde(|S∩A|/|A|, |S∩B|/|B|) on ground [0, m).

    beta = 0 is allowed here (the unperturbed product-of-blocks surface);
    the adversarial family built by make_symgap_valuation requires beta > 0.
    """

    A: ItemSet
    B: ItemSet
    phi: Phi
    beta: float
    lam: float = 1.0
    kind: str = "symgap"

    def __post_init__(self):
        if self.A.m != self.B.m:
            raise GroundSetError("A and B must share a ground set")
        if len(self.A) == 0 or len(self.B) == 0:
            raise OracleContractError("blocks must be nonempty")
        if len(self.A) != len(self.B):
            raise OracleContractError("blocks must have equal size")
        if (self.A & self.B).mask:
            raise OracleContractError("blocks must be disjoint")
        if self.beta < 0:
            raise OracleContractError("beta must be >= 0")
        if self.lam < 0:
            raise OracleContractError("lam must be >= 0")

    @property
    def m(self) -> int:
        return self.A.m

    @property
    def block_size(self) -> int:
        return len(self.A)

    def value_from_counts(self, a: int, b: int) -> float:
        n = self.block_size
        return self.lam * float(psi_tilde(self.phi, self.beta, a / n, b / n))

    def count_grid(self) -> np.ndarray:
        """(|A|+1) x (|B|+1) table of values over occupancy counts."""
        n = self.block_size
        xs = np.arange(n + 1) / n
        return self.lam * np.asarray(
            psi_tilde(self.phi, self.beta, xs[:, None], xs[None, :]), dtype=float
        )

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "params": {
                "A": self.A.to_hex(),
                "B": self.B.to_hex(),
                "m": self.m,
                "phi": self.phi.to_param_dict(),
                "beta": self.beta,
                "lam": self.lam,
            },
            "seed": None,
        }

    def oracle(self) -> ValuationOracle:
        n = self.block_size
        a_mask, b_mask = self.A.mask, self.B.mask
        lam, beta = self.lam, self.beta
        if isinstance(self.phi, PhiAlpha):
            alpha = self.phi.alpha

            def fn(mask: int) -> float:
                x = (mask & a_mask).bit_count() / n
                y = (mask & b_mask).bit_count() / n
                d = x - y
                if -beta <= d <= beta:
                    u = v = 0.5 * (x + y)
                elif d > beta:
                    u = x - 0.5 * beta
                    v = y + 0.5 * beta
                else:
                    u = x + 0.5 * beta
                    v = y - 0.5 * beta
                pu = u / alpha
                pu = 0.0 if pu < 0.0 else (1.0 if pu > 1.0 else pu)
                pv = v / alpha
                pv = 0.0 if pv < 0.0 else (1.0 if pv > 1.0 else pv)
                return lam * (1.0 - (1.0 - pu) * (1.0 - pv))

        else:
            phi = self.phi

            def fn(mask: int) -> float:
                x = (mask & a_mask).bit_count() / n
                y = (mask & b_mask).bit_count() / n
                return lam * float(psi_tilde(phi, beta, x, y))

        return ValuationOracle(self.m, fn, self.descriptor())


def make_symgap_valuation(
    A: ItemSet, B: ItemSet, phi: Phi, beta: float, lam: float = 1.0
) -> TwoBlockValuation:
    """The hidden-bisection adversarial valuation; requires beta > 0."""
    if beta <= 0:
        raise OracleContractError(f"adversarial family needs beta > 0, got {beta}")
    return TwoBlockValuation(A, B, phi, float(beta), float(lam), kind="symgap")


def make_scaled_symgap_valuation(
    A: ItemSet, B: ItemSet, phi: Phi, beta: float, lam: float
) -> TwoBlockValuation:
    return make_symgap_valuation(A, B, phi, beta, lam)


def two_block_product_instance(block_size: int, alpha: float) -> TwoBlockValuation:
    """Unperturbed product of two saturating blocks on 2*block_size items.

    f_i(S) = min(|S ∩ M_i| / (alpha * block_size), 1) and
    f = 1 - (1 - f_1)(1 - f_2); beta = 0.  This is the instance whose
    exponential extension is concave at alpha = 1 and loses a constant
    factor at alpha = 1/2.
    """
    if block_size <= 0:
        raise OracleContractError("block_size must be positive")
    m = 2 * block_size
    A = ItemSet((1 << block_size) - 1, m)
    B = ItemSet(((1 << block_size) - 1) << block_size, m)
    return TwoBlockValuation(A, B, PhiAlpha(alpha), 0.0, 1.0, kind="two_block_product")


def reconstruct_block_oracle(descriptor: dict) -> ValuationOracle:
    p = descriptor["params"]
    val = TwoBlockValuation(
        ItemSet.from_hex(p["A"], p["m"]),
        ItemSet.from_hex(p["B"], p["m"]),
        phi_from_param_dict(p["phi"]),
        p["beta"],
        p.get("lam", 1.0),
        kind=descriptor["kind"],
    )
    return val.oracle()


@dataclass(frozen=True)
class BisectionSequence:
    """Nested uniform bisections: level ell is the full ground set; each
    level j < ell splits the previous A-part into equal halves (A_j, B_j)."""

    m: int
    ell: int
    levels: tuple[tuple[ItemSet, ItemSet], ...]  # index 0 -> level ell-1, ... last -> level 0

    def level(self, j: int) -> tuple[ItemSet, ItemSet]:
        """(A_j, B_j) for 0 <= j < ell."""
        if not 0 <= j < self.ell:
            raise GroundSetError(f"level {j} outside [0, {self.ell})")
        return self.levels[self.ell - 1 - j]

    def A(self, j: int) -> ItemSet:
        """A_j; A_ell is the full ground set."""
        if j == self.ell:
            return ItemSet.full(self.m)
        return self.level(j)[0]

    def B(self, j: int) -> ItemSet:
        if j == self.ell:
            return ItemSet.full(self.m)
        return self.level(j)[1]


def sample_bisection_sequence(
    m: int, ell: int, rng: np.random.Generator
) -> BisectionSequence:
    """Sample the nested bisections by shuffle-then-split at every level."""
    if ell < 1:
        raise GroundSetError(f"ell must be >= 1, got {ell}")
    if m % (1 << ell):
        raise GroundSetError(f"m = {m} not divisible by 2^ell = {1 << ell}")
    current = list(range(m))
    levels = []
    for _ in range(ell):
        perm = rng.permutation(len(current))
        half = len(current) // 2
        a_items = [current[int(i)] for i in perm[:half]]
        b_items = [current[int(i)] for i in perm[half:]]
        levels.append(
            (ItemSet.from_indices(a_items, m), ItemSet.from_indices(b_items, m))
        )
        current = a_items
    return BisectionSequence(m, ell, tuple(levels))


def balancedness(S: ItemSet, A: ItemSet, B: ItemSet, beta: float) -> tuple[float, bool]:
    """(|x - y|, |x - y| <= beta) for x, y the occupancy fractions of S in A, B."""
    x = S.intersection_size(A) / len(A)
    y = S.intersection_size(B) / len(B)
    dev = abs(x - y)
    return dev, dev <= beta


@dataclass(frozen=True)
class CPPLevelParams:
    """Parameter schedule per recursion level: m = 400^ell, k = 200^ell,
    n = 2^ell, beta = n / sqrt(m) = 10^-ell.  Desk scale stops at ell = 2."""

    ell: int

    def __post_init__(self):
        if self.ell not in (1, 2):
            raise GroundSetError(
                f"paper-profile levels are ell in {{1, 2}} at desk scale, got {self.ell}"
            )

    @property
    def m(self) -> int:
        return 400**self.ell

    @property
    def k(self) -> int:
        return 200**self.ell

    @property
    def n(self) -> int:
        return 2**self.ell

    @property
    def beta(self) -> float:
        return self.n / np.sqrt(self.m)

    def to_dict(self) -> dict:
        return {"ell": self.ell, "m": self.m, "k": self.k, "n": self.n, "beta": self.beta}


@dataclass(frozen=True)
class CPPInstance:
    """Public-project instance: pick one set of size <= k, all players consume it."""

    oracles: tuple[ValuationOracle, ...]
    k: int

    def __post_init__(self):
        if not self.oracles:
            raise OracleContractError("need at least one player")
        m = self.oracles[0].m
        if any(o.m != m for o in self.oracles):
            raise GroundSetError("player ground sets differ")
        if not 0 < self.k <= m:
            raise GroundSetError(f"k = {self.k} outside (0, {m}]")

    @property
    def m(self) -> int:
        return self.oracles[0].m

    @property
    def n(self) -> int:
        return len(self.oracles)

    def welfare(self, S) -> float:
        return sum(o.eval(S) for o in self.oracles)


@dataclass(frozen=True)
class AuctionInstance:
    """Combinatorial auction: disjoint bundles per player, items may stay unallocated."""

    oracles: tuple[ValuationOracle, ...]

    def __post_init__(self):
        if not self.oracles:
            raise OracleContractError("need at least one player")
        m = self.oracles[0].m
        if any(o.m != m for o in self.oracles):
            raise GroundSetError("player ground sets differ")

    @property
    def m(self) -> int:
        return self.oracles[0].m

    @property
    def n(self) -> int:
        return len(self.oracles)


@dataclass(frozen=True)
class BasicAuctionDescriptor:
    n: int
    m: int
    omega: float
    seed: int
    A_sets: tuple[ItemSet, ...]

    def to_dict(self) -> dict:
        return {
            "kind": "basic_auction",
            "n": self.n,
            "m": self.m,
            "omega": self.omega,
            "seed": self.seed,
            "A_sets": [A.to_hex() for A in self.A_sets],
        }


def make_basic_auction(
    n: int, m: int, omega: float, seed: int
) -> tuple[AuctionInstance, BasicAuctionDescriptor]:
    """n polar players with independent uniformly random favorite sets of size m/n.

    The expected union of the favorite sets is m(1 - (1 - 1/n)^n) > m/2, which
    is what gives socially-efficient outcomes their counting advantage.
    """
    if n < 1 or m < n or m % n:
        raise GroundSetError(f"need n | m with n >= 1, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    A_sets = tuple(random_subset(m, m // n, rng) for _ in range(n))
    oracles = tuple(make_polar(A, omega) for A in A_sets)
    return AuctionInstance(oracles), BasicAuctionDescriptor(n, m, omega, seed, A_sets)


def expected_union_size(n: int, m: int) -> float:
    """Closed form E|A_1 ∪ ... ∪ A_n| = m (1 - (1 - 1/n)^n) for independent
    uniform size-(m/n) favorite sets."""
    return m * (1.0 - (1.0 - 1.0 / n) ** n)


def random_cpp_instance(
    rng: np.random.Generator,
    m_max: int = 16,
    k_max: int = 4,
    n_max: int = 3,
) -> CPPInstance:
    """Random small public-project instance mixing the concrete oracle families."""
    m = int(rng.integers(4, m_max + 1))
    m -= m % 2  # keep even so a symgap split is always available
    k = int(rng.integers(1, min(k_max, m) + 1))
    n = int(rng.integers(1, n_max + 1))
    oracles = []
    for _ in range(n):
        family = rng.choice(["coverage", "budget_additive", "symgap"])
        if family == "coverage":
            u = int(rng.integers(2, 9))
            weights = rng.uniform(0.1, 1.0, size=u).tolist()
            cover = [
                sorted(int(e) for e in rng.choice(u, size=rng.integers(1, u + 1), replace=False))
                for _ in range(m)
            ]
            oracles.append(make_coverage(weights, cover))
        elif family == "budget_additive":
            w = rng.uniform(0.1, 1.0, size=m)
            budget = float(rng.uniform(0.5, 0.9) * w.sum())
            oracles.append(make_budget_additive(w.tolist(), budget))
        else:
            half = m // 2
            perm = rng.permutation(m)
            A = ItemSet.from_indices([int(j) for j in perm[:half]], m)
            B = ItemSet.from_indices([int(j) for j in perm[half:]], m)
            alpha = float(rng.choice([0.3, 0.5, 1.0]))
            beta = float(rng.choice([0.05, 0.1, 0.25]))
            oracles.append(make_symgap_valuation(A, B, PhiAlpha(alpha), beta).oracle())
    return CPPInstance(tuple(oracles), k)

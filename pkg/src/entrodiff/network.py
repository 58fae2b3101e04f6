"""Reversible mass-action reaction networks and their entropy certificates.

A network is stored as two nonnegative integer stoichiometry matrices
``alpha`` (reactants) and ``beta`` (products), each of shape ``(S, N_R)``,
plus forward/backward rate constants. Net production rates are

    R_i(u) = sum_n (beta_in - alpha_in) * (kf_n prod_j u_j**alpha_jn
                                          - kb_n prod_j u_j**beta_jn)

The text format is line based::

    # comment
    species: A B C
    reaction: 2 A + B <-> C ; kf=1.5 kb=0.2

Empty complexes are written ``0``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "CertificateReport",
    "ConservationVector",
    "DetailedBalanceViolated",
    "EntropyParams",
    "NetworkSyntaxError",
    "ReactionNetwork",
    "check_entropy_condition",
    "check_quasi_positivity",
    "conservation_vectors",
    "detailed_balance_tolerance",
    "lipschitz_bound",
    "mass_action_rates",
    "parse_network",
    "reaction_fluxes",
    "serialize_network",
    "solve_detailed_balance_mu",
]

RateFunction = Callable[[np.ndarray], np.ndarray]

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_TERM = re.compile(r"\s*(?:(\d+)\s*\*?\s*)?([A-Za-z_][A-Za-z0-9_]*)\s*\Z")
_RATE = re.compile(r"\s*(kf|kb)\s*=\s*(\S+)\s*")

NULLSPACE_PIVOT_RTOL = 1e-10


class NetworkSyntaxError(ValueError):
    """Malformed network document; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.reason = message
        self.line = line
        self.column = column


class DetailedBalanceViolated(ValueError):
    """No potentials mu reproduce every log(kb/kf); the entropy condition is not certified."""

    def __init__(self, residual: float, tolerance: float, mu: np.ndarray):
        super().__init__(
            f"detailed balance residual {residual:.3e} exceeds tolerance {tolerance:.3e}"
        )
        self.residual = residual
        self.tolerance = tolerance
        self.mu = mu


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    species_names: tuple[str, ...]
    alpha: np.ndarray
    beta: np.ndarray
    k_forward: np.ndarray
    k_backward: np.ndarray

    def __post_init__(self):
        names = tuple(self.species_names)
        S = len(names)
        if S < 1:
            raise ValueError("a network needs at least one species")
        if len(set(names)) != S:
            raise ValueError("duplicate species name")
        alpha = np.asarray(self.alpha, dtype=np.int64).reshape(S, -1)
        beta = np.asarray(self.beta, dtype=np.int64).reshape(S, -1)
        if alpha.shape != beta.shape:
            raise ValueError(f"alpha {alpha.shape} and beta {beta.shape} differ in shape")
        n_r = alpha.shape[1]
        kf = np.asarray(self.k_forward, dtype=float).reshape(n_r)
        kb = np.asarray(self.k_backward, dtype=float).reshape(n_r)
        if (alpha < 0).any() or (beta < 0).any():
            raise ValueError("stoichiometric coefficients must be nonnegative")
        if not (np.all(kf > 0) and np.all(kb > 0) and np.all(np.isfinite(kf)) and np.all(np.isfinite(kb))):
            raise ValueError("rate constants must be finite and strictly positive")
        for n in range(n_r):
            if np.array_equal(alpha[:, n], beta[:, n]):
                raise ValueError(f"reaction {n} is a no-op (identical complexes)")
        for name, arr in (("alpha", alpha), ("beta", beta), ("k_forward", kf), ("k_backward", kb)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "species_names", names)

    @property
    def n_species(self) -> int:
        return len(self.species_names)

    @property
    def n_reactions(self) -> int:
        return int(self.alpha.shape[1])

    @property
    def stoichiometry(self) -> np.ndarray:
        """Net stoichiometric matrix ``beta - alpha`` of shape ``(S, N_R)``."""
        return self.beta - self.alpha

    def index(self, name: str) -> int:
        return self.species_names.index(name)

    def __eq__(self, other):
        if not isinstance(other, ReactionNetwork):
            return NotImplemented
        return (
            self.species_names == other.species_names
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.beta, other.beta)
            and np.array_equal(self.k_forward, other.k_forward)
            and np.array_equal(self.k_backward, other.k_backward)
        )

    def __hash__(self):
        return hash((self.species_names, self.alpha.tobytes(), self.beta.tobytes()))

    def __repr__(self):
        return f"ReactionNetwork(species={list(self.species_names)}, reactions={self.n_reactions})"


@dataclass(frozen=True, eq=False)
class EntropyParams:
    mu: np.ndarray
    residual: float = 0.0
    source: str = "user_supplied"

    def __post_init__(self):
        if self.source not in ("solved", "user_supplied"):
            raise ValueError(f"unknown source {self.source!r}")
        mu = np.array(self.mu, dtype=float).reshape(-1)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    def to_json(self) -> dict:
        return {"mu": self.mu.tolist(), "residual": self.residual, "source": self.source}


@dataclass(frozen=True, eq=False)
class ConservationVector:
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        q.setflags(write=False)
        object.__setattr__(self, "q", q)


@dataclass
class CertificateReport:
    verdict: bool
    max_violation: float
    witness: list[float] | None
    samples: int
    seed: int
    structural_proof: bool | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "verdict": "pass" if self.verdict else "fail",
            "max_violation": _json_float(self.max_violation),
            "witness": self.witness,
            "samples": self.samples,
            "seed": self.seed,
        }
        if self.structural_proof is not None:
            out["structural_proof"] = self.structural_proof
        out.update(self.extra)
        return out


def _json_float(x: float):
    if math.isfinite(x):
        return float(x)
    return "inf" if x > 0 else "-inf"


# ---------------------------------------------------------------------------
# DSL


def parse_network(text: str) -> ReactionNetwork:
    """Parse the line-based network format into a :class:`ReactionNetwork`."""
    species: list[str] | None = None
    alphas: list[np.ndarray] = []
    betas: list[np.ndarray] = []
    kfs: list[float] = []
    kbs: list[float] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        key, sep, body = line.partition(":")
        if not sep:
            raise NetworkSyntaxError("expected 'species:' or 'reaction:'", lineno, 1)
        key = key.strip()
        body_col = len(key) + 2 + (len(line) - len(line.lstrip()))
        if key == "species":
            if species is not None:
                raise NetworkSyntaxError("species declared twice", lineno, 1)
            names = body.split()
            if not names:
                raise NetworkSyntaxError("empty species list", lineno, body_col)
            seen = set()
            for name in names:
                col = line.index(name, body_col - 1) + 1
                if not _IDENT.match(name):
                    raise NetworkSyntaxError(f"invalid species name {name!r}", lineno, col)
                if name in seen:
                    raise NetworkSyntaxError(f"duplicate species name {name!r}", lineno, col)
                seen.add(name)
            species = names
        elif key == "reaction":
            if species is None:
                raise NetworkSyntaxError("reaction before species declaration", lineno, 1)
            a, b, kf, kb = _parse_reaction(body, species, lineno, body_col)
            alphas.append(a)
            betas.append(b)
            kfs.append(kf)
            kbs.append(kb)
        else:
            raise NetworkSyntaxError(f"unknown directive {key!r}", lineno, 1)

    if species is None:
        raise NetworkSyntaxError("no species declaration", 1, 1)
    S = len(species)
    alpha = np.array(alphas, dtype=np.int64).T.reshape(S, len(alphas))
    beta = np.array(betas, dtype=np.int64).T.reshape(S, len(betas))
    return ReactionNetwork(tuple(species), alpha, beta, np.array(kfs), np.array(kbs))


def _parse_reaction(body: str, species: list[str], lineno: int, col0: int):
    eq, semi, rates = body.partition(";")
    if not semi:
        raise NetworkSyntaxError("missing ';' before rate constants", lineno, col0 + len(body))
    if eq.count("<->") != 1:
        raise NetworkSyntaxError("a reaction needs exactly one '<->'", lineno, col0)
    lhs, rhs = eq.split("<->")
    a = _parse_complex(lhs, species, lineno, col0)
    b = _parse_complex(rhs, species, lineno, col0 + len(lhs) + 3)
    if np.array_equal(a, b):
        raise NetworkSyntaxError("no-op reaction (identical complexes)", lineno, col0)

    consts: dict[str, float] = {}
    rate_col = col0 + len(eq) + 1
    for token in rates.split():
        m = _RATE.fullmatch(token)
        if not m:
            raise NetworkSyntaxError(f"bad rate token {token!r}", lineno, rate_col)
        name, value = m.groups()
        if name in consts:
            raise NetworkSyntaxError(f"{name} given twice", lineno, rate_col)
        try:
            k = float(value)
        except ValueError:
            raise NetworkSyntaxError(f"{name} is not a number: {value!r}", lineno, rate_col) from None
        if not (math.isfinite(k) and k > 0):
            raise NetworkSyntaxError(f"{name} must be positive, got {value}", lineno, rate_col)
        consts[name] = k
    for name in ("kf", "kb"):
        if name not in consts:
            raise NetworkSyntaxError(f"missing {name}", lineno, rate_col)
    return a, b, consts["kf"], consts["kb"]


def _parse_complex(text: str, species: list[str], lineno: int, col: int) -> np.ndarray:
    counts = np.zeros(len(species), dtype=np.int64)
    if text.strip() in ("0", "∅"):
        return counts
    offset = 0
    for term in text.split("+"):
        term_col = col + offset + (len(term) - len(term.lstrip()))
        offset += len(term) + 1
        m = _TERM.match(term)
        if not m:
            raise NetworkSyntaxError(f"bad term {term.strip()!r}", lineno, term_col)
        coeff, name = m.groups()
        if name not in species:
            raise NetworkSyntaxError(f"unknown species {name!r}", lineno, term_col)
        n = int(coeff) if coeff is not None else 1
        if n == 0:
            raise NetworkSyntaxError("zero coefficient", lineno, term_col)
        counts[species.index(name)] += n
    return counts


def serialize_network(net: ReactionNetwork) -> str:
    """Canonical text form; ``parse_network(serialize_network(n)) == n``."""
    lines = ["species: " + " ".join(net.species_names)]
    for n in range(net.n_reactions):
        lhs = _format_complex(net.alpha[:, n], net.species_names)
        rhs = _format_complex(net.beta[:, n], net.species_names)
        kf = repr(float(net.k_forward[n]))
        kb = repr(float(net.k_backward[n]))
        lines.append(f"reaction: {lhs} <-> {rhs} ; kf={kf} kb={kb}")
    return "\n".join(lines) + "\n"


def _format_complex(col: np.ndarray, names: Sequence[str]) -> str:
    terms = []
    for c, name in zip(col, names):
        if c == 1:
            terms.append(name)
        elif c > 1:
            terms.append(f"{int(c)} {name}")
    return " + ".join(terms) if terms else "0"


# ---------------------------------------------------------------------------
# kinetics


def _monomials(stoich: np.ndarray, u: np.ndarray) -> np.ndarray:
    """prod_j u_j**stoich[j, n] for every column n; 0**0 == 1. Shape ``(N_R, ...)``."""
    out = np.ones((stoich.shape[1],) + u.shape[1:])
    for n in range(stoich.shape[1]):
        for j in np.flatnonzero(stoich[:, n]):
            e = int(stoich[j, n])
            out[n] *= u[j] if e == 1 else u[j] ** e
    return out


def reaction_fluxes(net: ReactionNetwork, u) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward mass-action fluxes, each of shape ``(N_R, ...)``."""
    u = _check_concentrations(net, u)
    rf = net.k_forward.reshape((-1,) + (1,) * (u.ndim - 1)) * _monomials(net.alpha, u)
    rb = net.k_backward.reshape((-1,) + (1,) * (u.ndim - 1)) * _monomials(net.beta, u)
    return rf, rb


def mass_action_rates(net: ReactionNetwork, u) -> np.ndarray:
    """Net production rates ``R(u)``; ``u`` has species on axis 0."""
    rf, rb = reaction_fluxes(net, u)
    return np.tensordot(net.stoichiometry.astype(float), rf - rb, axes=(1, 0))


def _check_concentrations(net: ReactionNetwork, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[:1] != (net.n_species,):
        raise ValueError(f"expected {net.n_species} species on axis 0, got shape {u.shape}")
    if np.any(u < 0) or np.any(np.isnan(u)):
        raise ValueError("concentrations must be nonnegative")
    return u


def lipschitz_bound(net: ReactionNetwork, B: float) -> float:
    """Lipschitz constant of ``R`` on the box ``[0, B]^S`` in the Euclidean norm.

    Each monomial ``prod u^a`` has gradient l1-norm at most ``sum(a) * B**(|a|-1)``
    on the box; the constant sums these over reactions weighted by the column
    norm of ``beta - alpha``.
    """
    if B < 0:
        raise ValueError("box size must be nonnegative")
    total = 0.0
    nu = net.stoichiometry.astype(float)
    for n in range(net.n_reactions):
        grad = 0.0
        for k, stoich in ((net.k_forward[n], net.alpha[:, n]), (net.k_backward[n], net.beta[:, n])):
            order = int(stoich.sum())
            if order > 0:
                grad += k * order * B ** (order - 1)
        total += np.linalg.norm(nu[:, n]) * grad
    return float(total)


# ---------------------------------------------------------------------------
# entropy structure


def detailed_balance_rhs(net: ReactionNetwork) -> np.ndarray:
    """``log(kb / kf)`` per reaction.

    At an equilibrium ``u* = exp(-mu)`` every reaction must balance,
    ``kf * prod(u*^alpha) = kb * prod(u*^beta)``, which is
    ``(beta - alpha)^T mu = log(kb / kf)``. This orientation is the one for
    which ``sum_i R_i(u)(log u_i + mu_i) <= 0``.
    """
    return np.log(net.k_backward / net.k_forward)


def detailed_balance_tolerance(net: ReactionNetwork) -> float:
    rhs = detailed_balance_rhs(net)
    return 1e-10 * max(1.0, float(np.linalg.norm(rhs)))


def solve_detailed_balance_mu(net: ReactionNetwork) -> EntropyParams:
    """Minimal-norm potentials with ``(beta - alpha)^T mu = log(kb / kf)``.

    Raises :class:`DetailedBalanceViolated` when the least-squares residual
    exceeds :func:`detailed_balance_tolerance`.
    """
    S = net.n_species
    if net.n_reactions == 0:
        return EntropyParams(np.zeros(S), 0.0, "solved")
    nu_t = net.stoichiometry.T.astype(float)
    rhs = detailed_balance_rhs(net)
    mu, *_ = np.linalg.lstsq(nu_t, rhs, rcond=None)
    residual = float(np.linalg.norm(nu_t @ mu - rhs))
    tol = detailed_balance_tolerance(net)
    if residual > tol:
        raise DetailedBalanceViolated(residual, tol, mu)
    return EntropyParams(mu, residual, "solved")


def _left_nullspace(nu: np.ndarray, rtol: float = NULLSPACE_PIVOT_RTOL) -> np.ndarray:
    """Rows spanning ``{q : q @ nu = 0}`` by Gauss-Jordan elimination with full pivoting."""
    A = np.array(nu.T, dtype=float)  # N_R x S; we want its right null space
    m, n = A.shape
    cols = np.arange(n)
    rank = 0
    max_pivot = np.abs(A).max() if A.size else 0.0
    for r in range(min(m, n)):
        sub = np.abs(A[r:, r:])
        if sub.size == 0:
            break
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[i, j] <= rtol * max_pivot or sub[i, j] == 0.0:
            break
        i += r
        j += r
        A[[r, i]] = A[[i, r]]
        A[:, [r, j]] = A[:, [j, r]]
        cols[[r, j]] = cols[[j, r]]
        A[r] /= A[r, r]
        for k in range(m):
            if k != r and A[k, r] != 0.0:
                A[k] -= A[k, r] * A[r]
        rank += 1
    # reduced form [I F; 0 0] in permuted columns -> null vectors [-F; I]
    free = n - rank
    basis = np.zeros((free, n))
    F = A[:rank, rank:]
    for f in range(free):
        vec = np.zeros(n)
        vec[:rank] = -F[:, f]
        vec[rank + f] = 1.0
        basis[f, cols] = vec
    return basis


def conservation_vectors(net: ReactionNetwork) -> list[ConservationVector]:
    """Orthonormal basis of the left null space of ``beta - alpha``."""
    raw = _left_nullspace(net.stoichiometry)
    if raw.shape[0] == 0:
        return []
    q, _ = np.linalg.qr(raw.T)
    out = []
    for col in q.T:
        # sign convention: first nonzero entry positive
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            col = -col
        col = np.where(np.abs(col) < 1e-15, 0.0, col)
        out.append(ConservationVector(col))
    return out


def _rates_fn(net: ReactionNetwork, rates: RateFunction | None) -> RateFunction:
    if rates is not None:
        return lambda u: np.asarray(rates(u), dtype=float)
    return lambda u: mass_action_rates(net, u)


def _log_uniform(rng: np.random.Generator, n: int, S: int) -> np.ndarray:
    return 10.0 ** rng.uniform(-6.0, 6.0, size=(S, n))


def _zero_masks(rng: np.random.Generator, n: int, S: int) -> np.ndarray:
    """``(S, n)`` boolean masks, each with a nonempty zeroed subset.

    The first ``2**S - 1`` columns enumerate every nonempty subset when that
    fits, so all boundary faces of the orthant are visited.
    """
    masks = rng.random((S, n)) < 0.5
    empty = ~masks.any(axis=0)
    masks[rng.integers(0, S, size=n)[empty], np.flatnonzero(empty)] = True
    n_enum = 2**S - 1
    if S <= 12 and n_enum <= n:
        bits = np.arange(1, n_enum + 1)
        masks[:, :n_enum] = (bits[None, :] >> np.arange(S)[:, None]) & 1 == 1
    return masks


def _entropy_production(R: np.ndarray, u: np.ndarray, mu: np.ndarray):
    """Per-sample ``sum_i R_i (log u_i + mu_i)`` and its rounding scale.

    At ``u_i = 0`` the term is the limit of ``R_i log u_i``: ``-inf`` for
    ``R_i > 0``, ``+inf`` for ``R_i < 0``, 0 otherwise.
    """
    pos = u > 0
    logs = np.log(np.where(pos, u, 1.0)) + mu[:, None]
    finite_terms = np.where(pos, R * logs, 0.0)
    edge = np.where(pos, 0.0, np.where(R > 0, -np.inf, np.where(R < 0, np.inf, 0.0)))
    with np.errstate(invalid="ignore"):
        value = finite_terms.sum(axis=0) + edge.sum(axis=0)
    value = np.where(np.isnan(value), np.inf, value)
    scale = np.abs(finite_terms).sum(axis=0)
    return value, scale


def check_entropy_condition(
    net: ReactionNetwork,
    params: EntropyParams,
    sample_count: int = 10_000,
    seed: int = 0,
    rates: RateFunction | None = None,
    rtol: float = 1e-12,
) -> CertificateReport:
    """Sample ``sum_i R_i(u) (log u_i + mu_i) <= 0`` over the nonnegative orthant.

    ``sample_count`` log-uniform interior points in ``[1e-6, 1e6]^S`` are
    evaluated together with the same number of boundary points (random
    coordinates zeroed). A sample violates the condition when its value
    exceeds ``rtol`` times the sum of the absolute terms.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be positive")
    mu = np.asarray(params.mu, dtype=float)
    S = net.n_species
    if mu.shape != (S,):
        raise ValueError(f"mu has length {mu.size}, network has {S} species")
    rng = np.random.default_rng(seed)
    interior = _log_uniform(rng, sample_count, S)
    boundary = np.where(_zero_masks(rng, sample_count, S), 0.0, _log_uniform(rng, sample_count, S))
    u = np.concatenate([interior, boundary], axis=1)
    R = _rates_fn(net, rates)(u)
    value, scale = _entropy_production(R, u, mu)
    excess = value - rtol * scale
    worst = int(np.argmax(excess))
    verdict = bool(excess[worst] <= 0.0)
    return CertificateReport(
        verdict=verdict,
        max_violation=float(np.max(value)),
        witness=None if verdict else u[:, worst].tolist(),
        samples=int(u.shape[1]),
        seed=seed,
    )


def check_quasi_positivity(
    net: ReactionNetwork,
    sample_count: int = 10_000,
    seed: int = 0,
    rates: RateFunction | None = None,
    atol: float = 1e-15,
) -> CertificateReport:
    """Check ``R_i(u) >= -atol`` at sampled points with ``u_i = 0``.

    For mass-action rates every consuming monomial of ``R_i`` contains the
    factor ``u_i``, so the property holds structurally; the report flags this.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be positive")
    S = net.n_species
    rng = np.random.default_rng(seed)
    masks = _zero_masks(rng, sample_count, S)
    u = np.where(masks, 0.0, _log_uniform(rng, sample_count, S))
    R = _rates_fn(net, rates)(u)
    deficit = np.where(masks, -R, -np.inf)
    worst_per_sample = deficit.max(axis=0)
    worst = int(np.argmax(worst_per_sample))
    max_violation = float(worst_per_sample[worst])
    verdict = bool(max_violation <= atol)
    structural = rates is None and _structurally_quasi_positive(net)
    return CertificateReport(
        verdict=verdict,
        max_violation=max_violation,
        witness=None if verdict else u[:, worst].tolist(),
        samples=sample_count,
        seed=seed,
        structural_proof=structural,
    )


def _structurally_quasi_positive(net: ReactionNetwork) -> bool:
    nu = net.stoichiometry
    # consuming species i in the forward direction needs alpha_i >= 1, backward needs beta_i >= 1
    fwd_ok = np.all((nu >= 0) | (net.alpha >= 1))
    bwd_ok = np.all((nu <= 0) | (net.beta >= 1))
    return bool(fwd_ok and bwd_ok)

"""Two-state Markovian arrival process: representation and analysis.

A two-state MAP is characterized by a pair of 2x2 rate matrices
``(D0, D1)``: ``D0`` holds the rates of transitions without a loss
(negative diagonal, nonnegative off-diagonal) and ``D1`` the rates of
loss-generating transitions (all nonnegative).  ``D = D0 + D1`` is the
generator of the underlying Markov process.  The process observed at
loss epochs is a Markov chain with transition matrix
``P* = (-D0)^{-1} D1``, and the stationary inter-loss time is
phase-type with representation ``{phi, D0}`` where ``phi`` is the
stationary law of ``P*``.

Every two-state MAP admits a unique canonical representation with four
parameters ``(x, y, u, v)``; the template depends on the sign of
``gamma``, the non-unit eigenvalue of ``P*``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    ConstraintViolatedError,
    DegenerateVarianceError,
    NegativeRateError,
    NotAGeneratorError,
    SingularSystemError,
    UnstableRateMatrixError,
)

__all__ = [
    "CanonicalForm",
    "CanonicalMap2",
    "Map2",
    "PhaseType2",
    "StationaryObjects",
    "expand_canonical",
    "expm2",
    "lag1_correlation",
    "log_likelihood",
    "loss_rate",
    "ph_cdf",
    "ph_moments",
    "ph_pdf",
    "ph_quantile",
    "phase_type",
    "semi_markov_kernel",
    "simulate_map2",
    "stationary_objects",
    "validate_map2",
]

_E = np.ones(2)

#: Tolerance on generator row sums and stationarity residuals.
VALIDATION_TOL = 1e-10

#: Relative eigenvalue separation below which expm2 switches to its
#: scaling-and-squaring series fallback.
_EIG_SEP_RTOL = 1e-8


# ---------------------------------------------------------------------------
# domain types


class CanonicalForm(str, Enum):
    """Which canonical template applies, by the sign of gamma."""

    GAMMA_POSITIVE = "gamma_positive"
    GAMMA_NONPOSITIVE = "gamma_nonpositive"


@dataclass(frozen=True)
class CanonicalMap2:
    """Four-parameter canonical representation.

    Constraints: ``x, u, x+y, u+v <= 0`` and ``y, v >= 0``.
    """

    form: CanonicalForm
    x: float
    y: float
    u: float
    v: float

    def __post_init__(self):
        object.__setattr__(self, "form", CanonicalForm(self.form))
        for name in ("x", "y", "u", "v"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ConstraintViolatedError(f"{name} is not finite: {val}")
        if self.x > 0 or self.u > 0:
            raise ConstraintViolatedError(
                f"x and u must be <= 0, got x={self.x}, u={self.u}"
            )
        if self.y < 0 or self.v < 0:
            raise ConstraintViolatedError(
                f"y and v must be >= 0, got y={self.y}, v={self.v}"
            )
        if self.x + self.y > 0 or self.u + self.v > 0:
            raise ConstraintViolatedError(
                f"x+y and u+v must be <= 0, got {self.x + self.y}, {self.u + self.v}"
            )


@dataclass(frozen=True)
class Map2:
    """A validated two-state MAP given by its rate matrices.

    Use :func:`validate_map2` (or :func:`expand_canonical`) to build one;
    construction checks all sign, generator and stability requirements.
    """

    d0: np.ndarray
    d1: np.ndarray
    canonical: CanonicalMap2 | None = field(default=None, compare=False)

    def __post_init__(self):
        d0 = np.array(self.d0, dtype=float)
        d1 = np.array(self.d1, dtype=float)
        if d0.shape != (2, 2) or d1.shape != (2, 2):
            raise NegativeRateError(
                f"expected 2x2 matrices, got shapes {d0.shape} and {d1.shape}"
            )
        if not (np.isfinite(d0).all() and np.isfinite(d1).all()):
            raise NegativeRateError("rate matrices must have finite entries")
        if (d1 < 0).any():
            raise NegativeRateError(f"D1 has a negative entry:\n{d1}")
        if d0[0, 1] < 0 or d0[1, 0] < 0:
            raise NegativeRateError(f"D0 has a negative off-diagonal entry:\n{d0}")
        if d0[0, 0] >= 0 or d0[1, 1] >= 0:
            raise UnstableRateMatrixError(
                f"D0 diagonal entries must be negative:\n{d0}"
            )
        rowsums = (d0 + d1).sum(axis=1)
        scale = max(-d0[0, 0], -d0[1, 1])
        if np.abs(rowsums).max() > VALIDATION_TOL * max(scale, 1.0):
            raise NotAGeneratorError(
                f"row sums of D0 + D1 are {rowsums}, expected zero"
            )
        eig = np.linalg.eigvals(d0)
        if eig.real.max() >= 0 or abs(np.linalg.det(d0)) == 0.0:
            raise UnstableRateMatrixError(
                f"D0 must be stable and nonsingular, eigenvalues {eig}"
            )
        d0.flags.writeable = False
        d1.flags.writeable = False
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "d1", d1)

    @property
    def generator(self) -> np.ndarray:
        """The generator D = D0 + D1 of the underlying process."""
        return self.d0 + self.d1

    def to_dict(self) -> dict:
        """JSON-ready representation (see :mod:`maprisk.io`)."""
        out = {"d0": self.d0.tolist(), "d1": self.d1.tolist()}
        if self.canonical is not None:
            c = self.canonical
            out["canonical"] = {
                "form": c.form.value,
                "x": c.x,
                "y": c.y,
                "u": c.u,
                "v": c.v,
            }
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "Map2":
        canonical = None
        if "canonical" in doc and doc["canonical"] is not None:
            c = doc["canonical"]
            canonical = CanonicalMap2(
                CanonicalForm(c["form"]), c["x"], c["y"], c["u"], c["v"]
            )
        return cls(np.asarray(doc["d0"]), np.asarray(doc["d1"]), canonical)


@dataclass(frozen=True)
class StationaryObjects:
    """Stationary vectors and the loss-epoch chain of a two-state MAP.

    ``pi`` solves ``pi D = 0``; ``phi`` is the stationary law of the
    loss-epoch chain ``p_star``; ``gamma`` is the non-unit eigenvalue
    of ``p_star`` and lies in ``[-1, 1)``.
    """

    pi: np.ndarray
    phi: np.ndarray
    p_star: np.ndarray
    gamma: float


@dataclass(frozen=True)
class PhaseType2:
    """Stationary inter-loss-time law: absorption time of ``{phi, d0}``."""

    phi: np.ndarray
    d0: np.ndarray


# ---------------------------------------------------------------------------
# construction and validation


def validate_map2(d0, d1) -> Map2:
    """Validate a rate-matrix pair and return the model.

    Parameters
    ----------
    d0, d1 : array_like, shape (2, 2)
        Candidate rate matrices.

    Returns
    -------
    Map2

    Raises
    ------
    NegativeRateError
        An entry that must be nonnegative is negative.
    NotAGeneratorError
        Row sums of ``d0 + d1`` exceed the validation tolerance.
    UnstableRateMatrixError
        ``d0`` has a nonnegative diagonal entry or eigenvalue.
    """
    return Map2(np.asarray(d0, dtype=float), np.asarray(d1, dtype=float))


def expand_canonical(c: CanonicalMap2) -> Map2:
    """Expand canonical parameters into the rate-matrix pair.

    For the gamma-positive template ``D1`` has a zero upper-right entry;
    for the gamma-nonpositive template a zero upper-left entry.
    """
    # -(x + y) and -(u + v) reuse the rounded sums so assembled row sums
    # of D0 + D1 are exactly zero in floating point.
    xy = c.x + c.y
    uv = c.u + c.v
    d0 = np.array([[c.x, c.y], [0.0, c.u]])
    if c.form is CanonicalForm.GAMMA_POSITIVE:
        d1 = np.array([[-xy, 0.0], [c.v, -uv]])
    else:
        d1 = np.array([[0.0, -xy], [-uv, c.v]])
    return Map2(d0, d1, canonical=c)


# ---------------------------------------------------------------------------
# 2x2 matrix exponential


def _expm2_series(m: np.ndarray) -> np.ndarray:
    # scaling and squaring with an order-18 truncated series; scale so
    # that the scaled norm is below 0.5
    norm = np.abs(m).sum(axis=1).max()
    k = max(0, int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0)
    t = m / (2.0**k)
    acc = np.eye(2)
    term = np.eye(2)
    for j in range(1, 19):
        term = term @ t / j
        acc = acc + term
    for _ in range(k):
        acc = acc @ acc
    return acc


def expm2(a, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(a*t)`` of a 2x2 matrix.

    Uses the closed eigendecomposition form when the eigenvalues of
    ``a`` are well separated, and falls back to scaling-and-squaring
    with a truncated series otherwise.  Total on finite input.
    """
    a = np.asarray(a, dtype=float)
    m = a * t
    lam = np.linalg.eigvals(a)
    sep = abs(lam[0] - lam[1])
    norm = np.abs(a).sum(axis=1).max()
    if sep < _EIG_SEP_RTOL * max(norm, 1e-300):
        return _expm2_series(m)
    l1, l2 = lam[0] * t, lam[1] * t
    ident = np.eye(2)
    out = (np.exp(l1) * (m - l2 * ident) - np.exp(l2) * (m - l1 * ident)) / (l1 - l2)
    return out.real if np.iscomplexobj(out) else out


def _expm_d0_batch(d0: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """``exp(d0 * t)`` for an array of times, shape (len(ts), 2, 2).

    A validated D0 is a Metzler matrix, so its eigenvalues are real and
    the Lagrange interpolation form applies; near-defective matrices
    fall back to per-time scaling and squaring.
    """
    lam = np.linalg.eigvals(d0).real
    sep = abs(lam[0] - lam[1])
    norm = np.abs(d0).sum(axis=1).max()
    if sep < _EIG_SEP_RTOL * max(norm, 1e-300):
        return np.stack([_expm2_series(d0 * t) for t in ts])
    l1, l2 = lam
    a1 = (d0 - l2 * np.eye(2)) / (l1 - l2)
    a2 = np.eye(2) - a1
    e1 = np.exp(np.multiply.outer(ts, l1))
    e2 = np.exp(np.multiply.outer(ts, l2))
    return e1[:, None, None] * a1 + e2[:, None, None] * a2


# ---------------------------------------------------------------------------
# stationary analysis


def stationary_objects(m: Map2) -> StationaryObjects:
    """Stationary vectors ``pi``/``phi``, loss-epoch chain and gamma.

    Raises
    ------
    SingularSystemError
        The loss-epoch chain is degenerate (``P*`` has no coupling, so
        ``phi`` is not unique) or the loss rate vanishes.
    """
    d = m.generator
    # pi D = 0, pi e = 1 via the 2x2 closed form
    q12, q21 = d[0, 1], d[1, 0]
    tot = q12 + q21
    if tot <= 0:
        raise SingularSystemError(
            "generator has no transitions between states; pi is not unique"
        )
    pi = np.array([q21, q12]) / tot
    p_star = np.linalg.solve(-m.d0, m.d1)
    a, b = p_star[0, 1], p_star[1, 0]
    if a + b < 1e-12:
        raise SingularSystemError(
            "loss-epoch chain is reducible (P* ~ identity); phi is not unique"
        )
    phi = np.array([b, a]) / (a + b)
    gamma = float(np.trace(p_star) - 1.0)
    if abs(gamma) > 1.0 - 1e-9:
        warnings.warn(
            f"gamma = {gamma} is at the boundary of [-1, 1); "
            "the loss-epoch chain mixes arbitrarily slowly",
            RuntimeWarning,
            stacklevel=2,
        )
    lam = pi @ m.d1 @ _E
    if lam <= 0:
        raise SingularSystemError("loss rate pi D1 e is zero")
    return StationaryObjects(pi=pi, phi=phi, p_star=p_star, gamma=gamma)


def phase_type(m: Map2) -> PhaseType2:
    """The stationary inter-loss-time law ``{phi, D0}``."""
    return PhaseType2(phi=stationary_objects(m).phi, d0=m.d0)


def semi_markov_kernel(m: Map2, t: float) -> np.ndarray:
    """Semi-Markov kernel ``Q(t) = (I - exp(D0 t)) P*``.

    Entry ``(i, j)`` is the joint probability, from state ``i`` at a
    loss epoch, that the next loss arrives within ``t`` and leaves the
    chain in state ``j``.  ``Q(t) -> P*`` as ``t -> inf``.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    p_star = stationary_objects(m).p_star
    return (np.eye(2) - expm2(m.d0, t)) @ p_star


# ---------------------------------------------------------------------------
# inter-loss-time distribution


def ph_cdf(p: PhaseType2, t) -> np.ndarray | float:
    """``F(t) = 1 - phi exp(D0 t) e``, the inter-loss-time cdf."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if (ts < 0).any():
        raise ValueError("t must be >= 0")
    vals = 1.0 - _expm_d0_batch(p.d0, ts) @ _E @ p.phi
    return vals if np.ndim(t) else float(vals[0])


def ph_pdf(p: PhaseType2, t) -> np.ndarray | float:
    """Density ``phi exp(D0 t) (-D0) e`` of the inter-loss time."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if (ts < 0).any():
        raise ValueError("t must be >= 0")
    exit_rates = -p.d0 @ _E
    vals = _expm_d0_batch(p.d0, ts) @ exit_rates @ p.phi
    return vals if np.ndim(t) else float(vals[0])


def ph_quantile(p: PhaseType2, q: float) -> float:
    """Quantile of the inter-loss time, by bisection to |F(t)-q| < 1e-10."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    hi = 1.0
    while ph_cdf(p, hi) < q:
        hi *= 2.0
        if hi > 1e300:  # pragma: no cover - cdf(t) -> 1 for stable D0
            raise ArithmeticError("quantile bracket diverged")
    lo = 0.0
    while hi - lo > 1e-13 * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if ph_cdf(p, mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ph_moments(p: PhaseType2, n: int) -> float:
    """Raw moment ``E[T^n] = n! phi (-D0)^{-n} e``."""
    if n < 1 or n != int(n):
        raise ValueError(f"moment order must be a positive integer, got {n}")
    w = p.phi
    for _ in range(int(n)):
        # w <- w (-D0)^{-1} without forming the inverse
        w = np.linalg.solve(-p.d0.T, w)
    return float(math.factorial(int(n)) * (w @ _E))


def loss_rate(m: Map2) -> float:
    """Stationary loss rate ``lambda* = pi D1 e = 1 / E[T]``."""
    so = stationary_objects(m)
    return float(so.pi @ m.d1 @ _E)


def lag1_correlation(m: Map2) -> float:
    """Lag-1 correlation of consecutive stationary inter-loss times.

    ``rho = gamma (m2/2 - m1^2) / (m2 - m1^2)``; zero for renewal
    (exponential) streams.
    """
    so = stationary_objects(m)
    p = PhaseType2(so.phi, m.d0)
    m1 = ph_moments(p, 1)
    m2 = ph_moments(p, 2)
    var = m2 - m1 * m1
    if var <= 1e-14 * m2:
        raise DegenerateVarianceError("inter-loss time variance is zero")
    return float(so.gamma * (m2 / 2.0 - m1 * m1) / var)


# ---------------------------------------------------------------------------
# likelihood


def _scaled_matrix_product(mats: np.ndarray, left: np.ndarray) -> float:
    """log of ``left @ mats[0] @ ... @ mats[-1] @ e`` for nonnegative mats.

    Pairwise tree reduction with per-level renormalization, so traces of
    a million observations neither underflow nor overflow.
    """
    logscale = 0.0
    while len(mats) > 1:
        odd = None
        if len(mats) % 2:
            odd = mats[-1]
            mats = mats[:-1]
        prod = mats[0::2] @ mats[1::2]
        norms = np.abs(prod).max(axis=(1, 2))
        if (norms == 0.0).any():
            return -math.inf
        logscale += np.log(norms).sum()
        prod /= norms[:, None, None]
        if odd is not None:
            prod = np.concatenate([prod, odd[None]])
        mats = prod
    val = left @ mats[0] @ _E
    if val <= 0.0:
        return -math.inf
    return logscale + math.log(val)


def log_likelihood(m: Map2, times) -> float:
    """Log-likelihood of consecutive inter-loss times.

    The likelihood is ``phi exp(D0 t_1) D1 ... exp(D0 t_n) D1 e``,
    evaluated with renormalized partial products accumulated in log
    scale.

    Parameters
    ----------
    m : Map2
    times : array_like
        Nonempty sequence of nonnegative durations.
    """
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size == 0:
        raise ValueError("times must be a nonempty 1-d sequence")
    if (ts < 0).any():
        raise ValueError("durations must be >= 0")
    phi = stationary_objects(m).phi
    mats = _expm_d0_batch(m.d0, ts) @ m.d1
    return _scaled_matrix_product(mats, phi)


# ---------------------------------------------------------------------------
# simulation

_BLOCK = 1 << 16


def simulate_map2(m: Map2, n_losses: int, seed) -> np.ndarray:
    """Simulate consecutive stationary inter-loss times.

    The chain starts from ``phi`` at a loss epoch and is evolved jump by
    jump; deterministic for a fixed seed.

    Parameters
    ----------
    m : Map2
    n_losses : int
        Number of inter-loss times to return.
    seed : int or numpy.random.Generator or numpy.random.SeedSequence
    """
    if n_losses < 1:
        raise ValueError("n_losses must be >= 1")
    rng = np.random.default_rng(seed)
    so = stationary_objects(m)
    exit_rate = -np.diag(m.d0)
    # per state: sojourn scale, cumulative transition table over
    # (no-loss to other state, loss to state 0, loss to state 1)
    scales = 1.0 / exit_rate
    cumprob = np.empty((2, 3))
    dest = np.empty((2, 3), dtype=np.int64)
    is_loss = np.empty((2, 3), dtype=bool)
    for i in range(2):
        rates = np.array([m.d0[i, 1 - i], m.d1[i, 0], m.d1[i, 1]])
        cumprob[i] = np.cumsum(rates) / rates.sum()
        dest[i] = (1 - i, 0, 1)
        is_loss[i] = (False, True, True)

    out = np.empty(n_losses)
    state = int(rng.choice(2, p=so.phi))
    filled = 0
    t_accum = 0.0
    expo = rng.exponential(size=_BLOCK)
    unif = rng.random(size=_BLOCK)
    pos = 0
    while filled < n_losses:
        if pos == _BLOCK:
            expo = rng.exponential(size=_BLOCK)
            unif = rng.random(size=_BLOCK)
            pos = 0
        t_accum += expo[pos] * scales[state]
        u = unif[pos]
        pos += 1
        j = 0 if u < cumprob[state, 0] else (1 if u < cumprob[state, 1] else 2)
        loss = is_loss[state, j]
        state = int(dest[state, j])
        if loss:
            out[filled] = t_accum
            filled += 1
            t_accum = 0.0
    return out

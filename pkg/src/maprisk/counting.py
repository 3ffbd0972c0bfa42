"""Distribution and moments of the loss count over a fixed horizon.

``N(tau)`` is the stationary number of losses in an interval of length
``tau``.  Its matrix mass function ``P(n, tau)`` has no closed form and
is computed by uniformization: the continuous-time law is written as a
Poisson mixture of powers of the uniformized jump chain, truncated once
the residual Poisson tail is below a tolerance.  Mean, variance and the
adjacent-interval covariance do have closed forms and are evaluated
directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import SingularCorrectionError
from .map2 import CanonicalForm, CanonicalMap2, Map2, expand_canonical, expm2, stationary_objects

__all__ = [
    "CountMoments",
    "CountingDist",
    "SweepResult",
    "count_covariance",
    "count_distribution",
    "count_mean",
    "count_moments",
    "count_variance",
    "sample_canonical",
    "simulate_interval_counts",
    "vtm_ratio",
    "vtm_sweep",
]

_E = np.ones(2)


@dataclass(frozen=True)
class CountingDist:
    """Truncated distribution of the loss count over ``[0, tau]``.

    ``p_matrices[n]`` is the 2x2 matrix whose ``(i, j)`` entry is the
    probability of ``n`` losses and end state ``j`` from start state
    ``i``; ``mass[n] = pi P(n, tau) e``.  ``truncation_mass`` is the
    probability beyond ``n_max`` left out of ``mass``.
    """

    tau: float
    p_matrices: np.ndarray
    mass: np.ndarray
    truncation_mass: float

    @property
    def n_max(self) -> int:
        return len(self.mass) - 1

    def mean(self) -> float:
        return float(np.arange(len(self.mass)) @ self.mass)

    def variance(self) -> float:
        n = np.arange(len(self.mass))
        mu = self.mean()
        return float((n - mu) ** 2 @ self.mass)


@dataclass(frozen=True)
class CountMoments:
    """Closed-form count moments over one horizon."""

    mean: float
    variance: float
    vtm: float
    covariance: float


def _poisson_chernoff_nmax(lam: float, eps: float) -> int:
    # smallest n with exp(-lam) (e lam / n)^n < eps, searched by doubling
    n = max(8, int(lam))
    while n - lam <= 0 or -lam + n * (1.0 + math.log(lam / n)) > math.log(eps):
        n *= 2
    return n


def count_distribution(m: Map2, tau: float, eps: float = 1e-10) -> CountingDist:
    """Matrix mass function of the loss count by uniformization.

    Parameters
    ----------
    m : Map2
    tau : float
        Horizon length, > 0.
    eps : float
        Bound on the truncated (residual) probability mass.

    Notes
    -----
    The uniformization rate is ``1.01 * max(-D0_ii, -D_ii)`` so the
    jump-chain matrices stay strictly nonnegative.  The truncation point
    starts from a Chernoff bound on the Poisson tail and is tightened by
    direct summation of the Poisson weights.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    so = stationary_objects(m)
    d = m.generator
    theta = 1.01 * max(-m.d0[0, 0], -m.d0[1, 1], -d[0, 0], -d[1, 1])
    k0 = np.eye(2) + m.d0 / theta
    k1 = m.d1 / theta

    lam = theta * tau
    kmax = _poisson_chernoff_nmax(lam, eps)
    ks = np.arange(kmax + 1)
    logw = -lam + ks * math.log(lam) - gammaln(ks + 1.0)
    w = np.exp(logw)
    # tighten: keep the smallest kmax whose direct residual is < eps
    cum = np.cumsum(w)
    inside = np.nonzero(1.0 - cum < eps)[0]
    if inside.size:
        kmax = int(inside[0])
        w = w[: kmax + 1]
    residual = float(max(1.0 - w.sum(), 0.0))

    # u[n] after k jumps; step: u[n] <- u[n] k0 + u[n-1] k1
    p_acc = np.zeros((kmax + 1, 2, 2))
    u = np.zeros((kmax + 1, 2, 2))
    u[0] = np.eye(2)
    p_acc[0] = w[0] * u[0]
    for k in range(1, kmax + 1):
        a = u[:k] @ k0
        b = u[:k] @ k1
        u[0] = a[0]
        u[1 : k + 1] = b
        u[1:k] += a[1:]
        p_acc[: k + 1] += w[k] * u[: k + 1]
    mass = np.clip(p_acc @ _E @ so.pi, 0.0, None)
    return CountingDist(
        tau=float(tau),
        p_matrices=p_acc,
        mass=mass,
        truncation_mass=residual,
    )


def count_mean(m: Map2, tau: float) -> float:
    """``E[N(tau)] = lambda* tau``."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    so = stationary_objects(m)
    return float((so.pi @ m.d1 @ _E) * tau)


def _fundamental(m: Map2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    so = stationary_objects(m)
    d = m.generator
    epi = np.outer(_E, so.pi)
    corr = epi + d
    if abs(np.linalg.det(corr)) < 1e-300:
        raise SingularCorrectionError("e pi + D is singular")
    return so.pi, d, corr


def count_variance(m: Map2, tau: float) -> float:
    """Closed-form variance of the loss count over ``[0, tau]``."""
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    pi, d, corr = _fundamental(m)
    lam = pi @ m.d1 @ _E
    mean = lam * tau
    inv = np.linalg.inv(corr)
    lin = pi @ m.d1 @ inv @ m.d1 @ _E
    trans = pi @ m.d1 @ (np.eye(2) - expm2(d, tau)) @ inv @ inv @ m.d1 @ _E
    return float((1.0 + 2.0 * lam) * mean - 2.0 * lin * tau - 2.0 * trans)


def _moment_matrix(m: Map2, tau: float) -> np.ndarray:
    # asymptotic first-moment matrix of counts over (0, tau]
    so = stationary_objects(m)
    epi = np.outer(_E, so.pi)
    lam = so.pi @ m.d1 @ _E
    mean = lam * tau
    inv = np.linalg.inv(epi - m.generator)
    return (
        mean * epi
        + inv @ m.d1 @ epi
        + np.outer(_E, so.pi @ m.d1 @ inv)
        - 2.0 * lam * epi
    )


def count_covariance(m: Map2, tau: float) -> float:
    """Covariance of loss counts in adjacent intervals of length ``tau``.

    Uses the asymptotic first-moment matrix, so values for short
    horizons carry the asymptotic bias of that expansion.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    pi, d, _ = _fundamental(m)
    m1 = _moment_matrix(m, tau)
    return float(pi @ m1 @ m1 @ _E - (pi @ m1 @ _E) * (pi @ expm2(d, tau) @ m1 @ _E))


def vtm_ratio(m: Map2, tau: float) -> float:
    """Variance-to-mean ratio of the count; > 1 means overdispersion."""
    return count_variance(m, tau) / count_mean(m, tau)


def count_moments(m: Map2, tau: float) -> CountMoments:
    """Mean, variance, variance-to-mean ratio and adjacent covariance."""
    mean = count_mean(m, tau)
    var = count_variance(m, tau)
    return CountMoments(
        mean=mean,
        variance=var,
        vtm=var / mean,
        covariance=count_covariance(m, tau),
    )


# ---------------------------------------------------------------------------
# random-model sweep

#: log10 range of the canonical exit rates drawn by :func:`sample_canonical`.
SWEEP_RATE_DECADES = (-5.0, 5.0)


def sample_canonical(rng: np.random.Generator) -> CanonicalMap2:
    """Draw a random canonical parameter set.

    Exit rates ``-x`` and ``-u`` are log-uniform across
    ``SWEEP_RATE_DECADES``; ``y`` and ``v`` are uniform on ``[0, -x]``
    and ``[0, -u]``; the two templates are equally likely.  Degenerate
    draws (reducible loss-epoch chain) are rejected.
    """
    lo, hi = SWEEP_RATE_DECADES
    while True:
        x = -(10.0 ** rng.uniform(lo, hi))
        u = -(10.0 ** rng.uniform(lo, hi))
        y = rng.uniform(0.0, -x)
        v = rng.uniform(0.0, -u)
        form = (
            CanonicalForm.GAMMA_POSITIVE
            if rng.random() < 0.5
            else CanonicalForm.GAMMA_NONPOSITIVE
        )
        c = CanonicalMap2(form, x, y, u, v)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                stationary_objects(expand_canonical(c))
        except Exception:
            continue
        return c


@dataclass(frozen=True)
class SweepResult:
    """Variance-to-mean ratios for a batch of random models."""

    taus: np.ndarray
    params: list[CanonicalMap2]
    vtm: np.ndarray  # shape (n_models, len(taus))

    def fraction_below_one(self, tau: float) -> float:
        j = int(np.nonzero(np.isclose(self.taus, tau))[0][0])
        return float((self.vtm[:, j] < 1.0).mean())


def vtm_sweep(n_models: int, taus, seed) -> SweepResult:
    """Variance-to-mean ratios of ``n_models`` random canonical models.

    Returns the scatter data (one VtM value per model and horizon)
    together with the sampled parameters.
    """
    if n_models < 1:
        raise ValueError("n_models must be >= 1")
    taus = np.asarray(taus, dtype=float)
    rng = np.random.default_rng(seed)
    params = []
    vtm = np.empty((n_models, taus.size))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i in range(n_models):
            c = sample_canonical(rng)
            model = expand_canonical(c)
            params.append(c)
            for j, tau in enumerate(taus):
                vtm[i, j] = vtm_ratio(model, tau)
    return SweepResult(taus=taus, params=params, vtm=vtm)


# ---------------------------------------------------------------------------
# simulation cross-check


def simulate_interval_counts(m: Map2, tau: float, size: int, seed) -> np.ndarray:
    """Simulate independent stationary counts over windows of length ``tau``.

    Each replicate starts the underlying chain from ``pi`` at time 0 and
    counts losses up to ``tau``; replicates advance jump by jump in
    lockstep, so the cost scales with the maximum number of jumps.
    """
    if tau <= 0 or size < 1:
        raise ValueError("tau must be > 0 and size >= 1")
    rng = np.random.default_rng(seed)
    so = stationary_objects(m)
    exit_rate = -np.diag(m.d0)
    # transition law per state over (no-loss switch, loss to 0, loss to 1)
    prob = np.empty((2, 3))
    for i in range(2):
        rates = np.array([m.d0[i, 1 - i], m.d1[i, 0], m.d1[i, 1]])
        prob[i] = np.cumsum(rates) / rates.sum()
    state = (rng.random(size) >= so.pi[0]).astype(np.int64)
    t = np.zeros(size)
    counts = np.zeros(size, dtype=np.int64)
    active = np.arange(size)
    while active.size:
        st = state[active]
        t[active] += rng.exponential(size=active.size) / exit_rate[st]
        alive = t[active] <= tau
        active = active[alive]
        if not active.size:
            break
        st = state[active]
        u = rng.random(active.size)
        kind = (u[:, None] >= prob[st]).sum(axis=1)  # 0, 1 or 2
        loss = kind > 0
        state[active] = np.where(kind == 0, 1 - st, kind - 1)
        np.add.at(counts, active[loss], 1)
    return counts

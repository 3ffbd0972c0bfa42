"""Fitting a two-state MAP to a trace of inter-loss times.

The fit maximizes the exact trace likelihood over the four canonical
parameters, separately for the two canonical templates, and keeps the
better form.  Each search starts from a moments-matching solution (the
distance between theoretical and empirical first three moments plus the
lag-1 correlation), refined by a derivative-free simplex descent.

Constraints are enforced by construction: the search runs over
``theta = (a, c1, b, c2)`` with ``x = -exp(a)``, ``y = -x * sigmoid(c1)``,
``u = -exp(b)``, ``v = -u * sigmoid(c2)``, which keeps ``x, u, x+y,
u+v <= 0`` and ``y, v >= 0`` at every iterate, so no projection or
penalty is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateVarianceError, OptimizerFailedError, TraceTooShortError
from .map2 import (
    CanonicalForm,
    CanonicalMap2,
    Map2,
    _scaled_matrix_product,
    expand_canonical,
)

__all__ = [
    "EmpiricalSummary",
    "FitOptions",
    "FitResult",
    "empirical_summary",
    "fit_mle",
    "moments_match",
]


@dataclass(frozen=True)
class EmpiricalSummary:
    """Sample raw moments and lag-1 autocorrelation of a trace."""

    m1: float
    m2: float
    m3: float
    rho: float
    n: int


@dataclass
class FitOptions:
    """Options for :func:`fit_mle`.

    ``form`` is ``"auto"`` (solve both templates, keep the better) or a
    specific :class:`CanonicalForm` value.
    """

    restarts: int = 8
    max_iter: int = 2000
    tol: float = 1e-10
    seed: int = 0
    form: str = "auto"


@dataclass(frozen=True)
class FitResult:
    """Outcome of a maximum-likelihood fit."""

    model: Map2
    canonical: CanonicalMap2
    loglik: float
    form: CanonicalForm
    loglik_by_form: dict
    warm_start: CanonicalMap2
    delta_at_start: float
    converged: bool
    iterations: int
    options: FitOptions = field(repr=False, default_factory=FitOptions)

    def to_dict(self) -> dict:
        c = self.canonical
        return {
            "model": self.model.to_dict(),
            "loglik": self.loglik,
            "form": self.form.value,
            "loglik_by_form": {k.value: v for k, v in self.loglik_by_form.items()},
            "warm_start": {
                "form": self.warm_start.form.value,
                "x": self.warm_start.x,
                "y": self.warm_start.y,
                "u": self.warm_start.u,
                "v": self.warm_start.v,
            },
            "delta_at_start": self.delta_at_start,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def empirical_summary(times) -> EmpiricalSummary:
    """Raw sample moments and the lag-1 sample autocorrelation.

    The autocorrelation divides by the overall sample variance (the
    usual biased-denominator convention).
    """
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size < 4:
        raise TraceTooShortError("need at least 4 observations")
    if (ts < 0).any():
        raise ValueError("durations must be >= 0")
    m1 = float(ts.mean())
    var = float(ts.var())
    if var <= 0.0:
        raise DegenerateVarianceError("constant trace has no correlation structure")
    rho = float((ts[:-1] - m1) @ (ts[1:] - m1) / (ts.size * var))
    return EmpiricalSummary(
        m1=m1,
        m2=float((ts**2).mean()),
        m3=float((ts**3).mean()),
        rho=rho,
        n=ts.size,
    )


# ---------------------------------------------------------------------------
# the unconstrained parameterization


def _sigmoid(c: float) -> float:
    if c >= 0:
        return 1.0 / (1.0 + math.exp(-c))
    t = math.exp(c)
    return t / (1.0 + t)


def _theta_to_params(theta) -> tuple[float, float, float, float]:
    a, c1, b, c2 = theta
    x = -math.exp(a)
    u = -math.exp(b)
    return x, -x * _sigmoid(c1), u, -u * _sigmoid(c2)


def _params_to_theta(c: CanonicalMap2) -> np.ndarray:
    def logit(s):
        s = min(max(s, 1e-12), 1.0 - 1e-12)
        return math.log(s / (1.0 - s))

    return np.array(
        [
            math.log(-c.x),
            logit(c.y / (-c.x)),
            math.log(-c.u),
            logit(c.v / (-c.u)),
        ]
    )


def _canonical_stats(x, y, u, v, form):
    """(m1, m2, m3, rho) implied by canonical parameters, or None."""
    d0 = np.array([[x, y], [0.0, u]])
    if form is CanonicalForm.GAMMA_POSITIVE:
        d1 = np.array([[-x - y, 0.0], [v, -u - v]])
    else:
        d1 = np.array([[0.0, -x - y], [-u - v, v]])
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            p_star = np.linalg.solve(-d0, d1)
        except np.linalg.LinAlgError:
            return None
        pa, pb = p_star[0, 1], p_star[1, 0]
        if pa + pb < 1e-12 or not (math.isfinite(pa) and math.isfinite(pb)):
            return None
        phi = np.array([pb, pa]) / (pa + pb)
        gamma = p_star[0, 0] + p_star[1, 1] - 1.0
        w = phi
        moments = []
        for k in (1, 2, 3):
            w = np.linalg.solve(-d0.T, w)
            moments.append(math.factorial(k) * w.sum())
        m1, m2, m3 = moments
        var = m2 - m1 * m1
        if not (math.isfinite(var) and var > 0):
            return None
        rho = gamma * (m2 / 2.0 - m1 * m1) / var
    return m1, m2, m3, rho


def _delta(stats, summary: EmpiricalSummary) -> float:
    if stats is None:
        return math.inf
    m1, m2, m3, rho = stats
    try:
        val = (
            (rho - summary.rho) ** 2
            + ((m1 - summary.m1) / summary.m1) ** 2
            + ((m2 - summary.m2) / summary.m2) ** 2
            + ((m3 - summary.m3) / summary.m3) ** 2
        )
    except OverflowError:
        return math.inf
    return val if math.isfinite(val) else math.inf


def moments_match(
    summary: EmpiricalSummary,
    form: CanonicalForm | str,
    restarts: int = 8,
    seed: int = 0,
) -> CanonicalMap2:
    """Minimize the moment-distance objective over one canonical template.

    Runs a simplex descent from a scale-matched start plus ``restarts``
    random restarts and returns the best parameter set found.
    """
    form = CanonicalForm(form)
    rng = np.random.default_rng(seed)

    def objective(theta):
        if not np.all(np.isfinite(theta)) or np.abs(theta).max() > 500:
            return math.inf
        x, y, u, v = _theta_to_params(theta)
        return _delta(_canonical_stats(x, y, u, v, form), summary)

    base = math.log(1.0 / summary.m1)
    starts = [np.array([base, 0.0, base, 0.0])]
    for _ in range(max(restarts, 0)):
        starts.append(
            np.array(
                [
                    base + rng.normal(0.0, 2.0),
                    rng.normal(0.0, 2.0),
                    base + rng.normal(0.0, 2.0),
                    rng.normal(0.0, 2.0),
                ]
            )
        )
    best_theta, best_val = None, math.inf
    for s in starts:
        res = minimize(
            objective,
            s,
            method="Nelder-Mead",
            options={"maxiter": 2000, "fatol": 1e-14, "xatol": 1e-10},
        )
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    x, y, u, v = _theta_to_params(best_theta)
    return CanonicalMap2(form, x, y, u, v)


# ---------------------------------------------------------------------------
# canonical-form likelihood (triangular D0 fast path)


def _offdiag_exp(x, y, u, ts, ex, eu):
    # upper-right entry of exp(D0 t): y (e^{xt} - e^{ut}) / (x - u),
    # with a series branch where the difference cancels
    z = (x - u) * ts
    small = np.abs(z) < 1e-4
    if x == u:
        return y * ts * eu
    direct = y * (ex - eu) / (x - u)
    series = y * ts * eu * (1.0 + z / 2.0 + z * z / 6.0)
    return np.where(small, series, direct)


def _loglik_canonical(x, y, u, v, form, ts: np.ndarray) -> float:
    stats = _canonical_stats(x, y, u, v, form)
    if stats is None:
        return -math.inf
    d0 = np.array([[x, y], [0.0, u]])
    if form is CanonicalForm.GAMMA_POSITIVE:
        d1 = np.array([[-x - y, 0.0], [v, -u - v]])
    else:
        d1 = np.array([[0.0, -x - y], [-u - v, v]])
    p_star = np.linalg.solve(-d0, d1)
    pa, pb = p_star[0, 1], p_star[1, 0]
    phi = np.array([pb, pa]) / (pa + pb)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ex = np.exp(x * ts)
        eu = np.exp(u * ts)
        e12 = _offdiag_exp(x, y, u, ts, ex, eu)
        mats = np.zeros((ts.size, 2, 2))
        mats[:, 0, 0] = ex
        mats[:, 0, 1] = e12
        mats[:, 1, 1] = eu
        mats = mats @ d1
        out = _scaled_matrix_product(mats, phi)
    return out if math.isfinite(out) else -math.inf


def _loglik_theta(theta, form, ts) -> float:
    if not np.all(np.isfinite(theta)) or np.abs(theta).max() > 500:
        return -math.inf
    x, y, u, v = _theta_to_params(theta)
    return _loglik_canonical(x, y, u, v, form, ts)


def fit_mle(times, options: FitOptions | None = None) -> FitResult:
    """Fit a two-state MAP by direct likelihood maximization.

    Both canonical templates are solved (unless ``options.form`` pins
    one) from the moments-matching warm start plus random multistarts;
    the template with the higher likelihood wins.  The stationary
    loss-epoch law is computed from the parameters rather than
    optimized, so the stationarity equation holds by construction.

    Raises
    ------
    OptimizerFailedError
        No candidate produced a finite likelihood.
    """
    opts = options or FitOptions()
    ts = np.asarray(times, dtype=float)
    summary = empirical_summary(ts)  # validates length and sign
    rng = np.random.default_rng(opts.seed)

    if opts.form == "auto":
        forms = [CanonicalForm.GAMMA_POSITIVE, CanonicalForm.GAMMA_NONPOSITIVE]
    else:
        forms = [CanonicalForm(opts.form)]

    best = None
    loglik_by_form: dict[CanonicalForm, float] = {}
    chosen_warm = None
    chosen_delta = math.inf
    total_iters = 0
    for form in forms:
        warm = moments_match(summary, form, restarts=opts.restarts, seed=opts.seed)
        delta0 = _delta(
            _canonical_stats(warm.x, warm.y, warm.u, warm.v, form), summary
        )
        theta_warm = _params_to_theta(warm)
        warm_ll = _loglik_theta(theta_warm, form, ts)

        starts = [theta_warm]
        base = math.log(1.0 / summary.m1)
        for _ in range(max(opts.restarts, 0)):
            starts.append(
                np.array(
                    [
                        base + rng.normal(0.0, 2.0),
                        rng.normal(0.0, 2.0),
                        base + rng.normal(0.0, 2.0),
                        rng.normal(0.0, 2.0),
                    ]
                )
            )

        form_best_ll = warm_ll
        form_best_theta = theta_warm
        form_converged = False
        for s in starts:
            f0 = -_loglik_theta(s, form, ts)
            if not math.isfinite(f0):
                continue
            res = minimize(
                lambda th: -_loglik_theta(th, form, ts),
                s,
                method="Nelder-Mead",
                options={
                    "maxiter": opts.max_iter,
                    "fatol": opts.tol * max(abs(f0), 1.0),
                    "xatol": 1e-9,
                },
            )
            total_iters += res.nit
            cand_ll = -res.fun
            norm_new = float(np.linalg.norm(res.x))
            norm_old = float(np.linalg.norm(form_best_theta))
            if cand_ll > form_best_ll or (
                cand_ll == form_best_ll and norm_new < norm_old
            ):
                form_best_ll = cand_ll
                form_best_theta = res.x
                form_converged = bool(res.success)
        loglik_by_form[form] = form_best_ll
        if best is None or form_best_ll > best[1]:
            x, y, u, v = _theta_to_params(form_best_theta)
            best = (CanonicalMap2(form, x, y, u, v), form_best_ll, form_converged)
            chosen_warm = warm
            chosen_delta = delta0

    if best is None or not math.isfinite(best[1]):
        raise OptimizerFailedError("no feasible likelihood value was found")
    canonical, loglik, converged = best
    return FitResult(
        model=expand_canonical(canonical),
        canonical=canonical,
        loglik=loglik,
        form=canonical.form,
        loglik_by_form=loglik_by_form,
        warm_start=chosen_warm,
        delta_at_start=chosen_delta,
        converged=converged,
        iterations=total_iters,
        options=opts,
    )

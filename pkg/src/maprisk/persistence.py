"""Persistence of short and long inter-loss periods.

For a threshold ``s``, a gap is *short* when it is below ``s`` and
*long* otherwise (a gap exactly equal to ``s`` counts as long, matching
the strict inequality in the short event; the convention matters for
integer-valued data).  The module evaluates, in closed form, the
conditional transition probabilities between short and long gaps and
the mass functions of the spell lengths: ``S`` counts consecutive short
gaps before a long one, ``L`` consecutive long gaps before a short one.
Empirical counterparts operate on observed traces.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DegenerateConditioningError,
    EmptyTraceError,
    InsufficientDataError,
)
from .map2 import Map2, expm2, stationary_objects

__all__ = [
    "PersistenceReport",
    "SpellDist",
    "SpellKind",
    "empirical_persistence",
    "empirical_spells",
    "percentile_threshold",
    "spell_distribution",
    "transition_probs",
]

_E = np.ones(2)


class SpellKind(str, Enum):
    SHORT = "short"
    LONG = "long"


@dataclass(frozen=True)
class PersistenceReport:
    """Transition probabilities between short and long gaps.

    ``p01`` is the probability the next gap is long given the previous
    was short; ``p11`` given the previous was long.  For empirical
    reports ``n_short``/``n_long`` carry the conditioning counts.
    """

    s: float
    p01: float
    p11: float
    n_short: int | None = None
    n_long: int | None = None


@dataclass(frozen=True)
class SpellDist:
    """Mass function of a spell length up to ``n_max``, plus tail mass."""

    s: float
    kind: SpellKind
    mass: np.ndarray
    residual: float

    @property
    def n_max(self) -> int:
        return len(self.mass) - 1


def transition_probs(m: Map2, s: float) -> PersistenceReport:
    """Closed-form short/long transition probabilities at threshold ``s``.

    Raises
    ------
    DegenerateConditioningError
        The conditioning event has numerically no mass (``s`` below or
        above the whole support).
    """
    if s <= 0:
        raise ValueError(f"s must be > 0, got {s}")
    so = stationary_objects(m)
    phi, p_star = so.phi, so.p_star
    es = expm2(m.d0, s)
    long_mass = float(phi @ es @ _E)
    short_mass = 1.0 - long_mass
    if short_mass < 1e-14 or long_mass < 1e-14:
        raise DegenerateConditioningError(
            f"threshold s={s} leaves no probability on one side "
            f"(P(short)={short_mass:.3g})"
        )
    num01 = phi @ (np.eye(2) - es) @ p_star @ es @ p_star @ _E
    num11 = phi @ es @ p_star @ es @ p_star @ _E
    return PersistenceReport(
        s=float(s), p01=float(num01 / short_mass), p11=float(num11 / long_mass)
    )


def spell_distribution(
    m: Map2, s: float, kind: SpellKind | str, n_max: int = 100
) -> SpellDist:
    """Mass function of the spell length ``S`` or ``L`` at threshold ``s``.

    ``P(S=0)`` is the probability the first gap is already long;
    ``P(S=n)`` the probability of exactly ``n`` short gaps followed by a
    long one (and symmetrically for ``L``).  Masses are reported for
    ``n = 0..n_max`` together with the residual tail so the truncation
    stays visible; the full series sums to one.
    """
    if s <= 0:
        raise ValueError(f"s must be > 0, got {s}")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    kind = SpellKind(kind)
    so = stationary_objects(m)
    phi, p_star = so.phi, so.p_star
    es = expm2(m.d0, s)
    long_step = es @ p_star
    short_step = (np.eye(2) - es) @ p_star
    long0 = float(phi @ es @ _E)
    mass = np.empty(n_max + 1)
    if kind is SpellKind.SHORT:
        mass[0] = long0
        tail_vec = long_step @ _E
        step = short_step
    else:
        mass[0] = 1.0 - long0
        tail_vec = short_step @ _E
        step = long_step
    w = phi
    for n in range(1, n_max + 1):
        w = w @ step
        mass[n] = w @ tail_vec
    residual = float(max(1.0 - mass.sum(), 0.0))
    return SpellDist(s=float(s), kind=kind, mass=mass, residual=residual)


# ---------------------------------------------------------------------------
# empirical counterparts


def _as_trace(times) -> np.ndarray:
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size == 0:
        raise EmptyTraceError("times must be a nonempty 1-d sequence")
    return ts


def empirical_persistence(times, s: float) -> PersistenceReport:
    """Plug-in transition probabilities from consecutive gap pairs."""
    ts = _as_trace(times)
    if ts.size < 2:
        raise InsufficientDataError("need at least 2 observations")
    prev_long = ts[:-1] >= s
    next_long = ts[1:] >= s
    n_short = int((~prev_long).sum())
    n_long = int(prev_long.sum())
    if n_short == 0:
        raise InsufficientDataError(f"no gap below s={s} to condition on")
    if n_long == 0:
        raise InsufficientDataError(f"no gap at or above s={s} to condition on")
    p01 = float(next_long[~prev_long].mean())
    p11 = float(next_long[prev_long].mean())
    return PersistenceReport(
        s=float(s), p01=p01, p11=p11, n_short=n_short, n_long=n_long
    )


def empirical_spells(
    times, s: float, kind: SpellKind | str, n_max: int = 100
) -> SpellDist:
    """Spell-length frequencies from maximal runs in a trace.

    The trace is cut into maximal runs delimited by threshold
    crossings: every long gap closes one short-spell observation (the
    number of immediately preceding consecutive short gaps) and every
    short gap closes one long-spell observation.  The unfinished run at
    the end of the trace is discarded rather than counted as a censored
    spell.
    """
    ts = _as_trace(times)
    kind = SpellKind(kind)
    is_long = ts >= s
    closes_on = is_long if kind is SpellKind.SHORT else ~is_long
    lengths = []
    run = 0
    for closes in closes_on:
        if closes:
            lengths.append(run)
            run = 0
        else:
            run += 1
    if not lengths:
        raise InsufficientDataError(
            f"no {'long' if kind is SpellKind.SHORT else 'short'} gap "
            f"closes a spell at s={s}"
        )
    counts = np.bincount(np.minimum(lengths, n_max + 1), minlength=n_max + 2)
    total = counts.sum()
    return SpellDist(
        s=float(s),
        kind=kind,
        mass=counts[: n_max + 1] / total,
        residual=float(counts[n_max + 1] / total),
    )


def percentile_threshold(times, p: float) -> float:
    """Nearest-rank percentile of a trace.

    Returns the smallest observation whose rank is at least
    ``ceil(p/100 * n)``; with integer-day data this is itself always an
    observed value.
    """
    ts = _as_trace(times)
    if not 0.0 < p < 100.0:
        raise ValueError(f"p must be in (0, 100), got {p}")
    rank = int(np.ceil(p / 100.0 * ts.size))
    return float(np.sort(ts)[max(rank, 1) - 1])

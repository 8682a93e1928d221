"""How much one raw component leaks through the other components' channels.

The leakage of component 1 through the full release vector is bounded by
exp(alpha_1 + alpha_max * (d - 1) * Delta_ind), where Delta_ind is the worst
total variation between the conditional laws of (X^2, ..., X^d) given two
values of X^1.  The bound is vacuous as alpha_max grows; the brute-force audit
here exists precisely to report the true finite leakage alongside it.

Pure functions over immutable inputs; thread-safe.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .measures import DiscreteDist

__all__ = [
    "LeakageProfile",
    "delta_ind",
    "effective_level",
    "misprediction_floor",
    "audit_marginal_leakage",
    "conditional_release_density",
]


@dataclass(frozen=True)
class LeakageProfile:
    alpha1: float
    alpha_max: float
    d: int
    delta_ind: float
    effective_alpha: float

    def __post_init__(self):
        if not (0.0 <= self.delta_ind <= 2.0 + 1e-12):
            raise ValueError(f"delta_ind out of [0, 2]: {self.delta_ind}")

    def to_json(self) -> dict:
        return {
            "alpha1": self.alpha1,
            "alpha_max": self.alpha_max,
            "d": self.d,
            "delta_ind": self.delta_ind,
            "effective_alpha": self.effective_alpha,
        }


def delta_ind(P: DiscreteDist) -> float:
    """Sup over pairs (x1, x1') of d_TV between conditional laws of the rest.

    Exact on the finite support; 0 iff X^1 is independent of the others.
    Conditioning points must carry positive marginal mass.
    """
    if P.d < 2:
        return 0.0
    m1 = P.probs.sum(axis=tuple(range(1, P.d)))
    if np.any(m1 <= 0.0):
        bad = P.supports[0][np.flatnonzero(m1 <= 0.0)[0]]
        raise ValueError(f"zero-mass conditioning point x1={bad!r}")
    cond = P.probs / m1.reshape((-1,) + (1,) * (P.d - 1))
    worst = 0.0
    k = len(P.supports[0])
    for a in range(k):
        for b in range(a + 1, k):
            worst = max(worst, float(np.abs(cond[a] - cond[b]).sum()))
    return worst


def effective_level(alpha1: float, alpha_max: float, d: int, delta: float) -> LeakageProfile:
    """Exponent alpha_1 + alpha_max (d-1) Delta_ind bounding leakage about X^1."""
    if alpha1 < 0 or alpha_max < 0:
        raise ValueError("privacy levels must be nonnegative")
    if d < 1:
        raise ValueError("d must be >= 1")
    eff = alpha1 + alpha_max * (d - 1) * delta
    return LeakageProfile(alpha1, alpha_max, d, delta, eff)


def misprediction_floor(alpha: float) -> float:
    """Minimal average error of any binary test on an alpha-private view: 1/(1+e^a)."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return 1.0 / (1.0 + math.exp(alpha))


def _x1_index(P: DiscreteDist, x1) -> int:
    hits = np.flatnonzero(np.isclose(P.supports[0], float(x1), rtol=0.0, atol=1e-12))
    if hits.size != 1:
        raise ValueError(f"value {x1!r} not on axis-1 support")
    return int(hits[0])


def conditional_release_density(P: DiscreteDist, channels, x1) -> np.ndarray:
    """m(z | X^1 = x1) as a dense table over the product output alphabet.

    Finite channels only: sums the conditional law of (X^2, ..., X^d) given x1
    against the per-axis transition rows.
    """
    for ch in channels:
        if getattr(ch, "transition_table", None) is None:
            raise ValueError("audit requires finite channels")
    i1 = _x1_index(P, x1)
    m1 = float(P.probs[i1].sum()) if P.d > 1 else float(P.probs[i1])
    if m1 <= 0.0:
        raise ValueError(f"zero-mass conditioning point x1={x1!r}")
    t1 = np.asarray(channels[0].transition_table, dtype=float)[i1]  # (z1,)
    if P.d == 1:
        return t1
    cond = P.probs[i1] / m1  # over axes 2..d
    rest = cond
    for ax in range(1, P.d):
        table = np.asarray(channels[ax].transition_table, dtype=float)
        rest = np.tensordot(rest, table, axes=([0], [0]))
    return np.multiply.outer(t1, rest)


def audit_marginal_leakage(P: DiscreteDist, channels, x1, x1p) -> float:
    """Exact sup over z of m(z|X^1=x1) / m(z|X^1=x1'), finite channels."""
    num = conditional_release_density(P, channels, x1)
    den = conditional_release_density(P, channels, x1p)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    ratio[(num == 0) & (den == 0)] = 1.0
    return float(np.max(ratio))


def leakage_report(P: DiscreteDist, channels) -> dict:
    """Worst-pair audit plus the closed-form bound, JSON-ready."""
    alphas = [ch.alpha for ch in channels]
    alpha_max = max(alphas[1:]) if len(alphas) > 1 else 0.0
    dlt = delta_ind(P)
    prof = effective_level(alphas[0], alpha_max, P.d, dlt)
    worst = 1.0
    sup1 = P.supports[0]
    for a, b in itertools.permutations(range(len(sup1)), 2):
        worst = max(worst, audit_marginal_leakage(P, channels, sup1[a], sup1[b]))
    return {
        "delta_ind": dlt,
        "effective_alpha": prof.effective_alpha,
        "audited_sup": worst,
        "floor": misprediction_floor(math.log(worst) if worst >= 1.0 else 0.0),
        "bound": math.exp(prof.effective_alpha),
        "violation": worst > math.exp(prof.effective_alpha) * (1.0 + 1e-9),
    }

"""Synthetic raw-data generators with known ground truths.

Heavy-tailed vectors come from a shared-factor mixture of sign-symmetric
Pareto variables, which keeps every cross moment in closed form; densities come
from box-truncated mixtures with exact evaluators.  Ground truths (gamma,
covariance, correlation, pi(x0)) are closed-form and cached on the model, so
MSE experiments always score against a stable target.

Sampling is deterministic given (seed, n): generators consume an explicit RNG
stream and nothing else.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .measures import DiscreteDist

__all__ = [
    "ParetoFactorModel",
    "HolderDensityModel",
    "DiscreteTableModel",
    "sample_heavy_tailed",
    "sample_holder_density",
    "model_from_json",
    "dump_csv",
]


@dataclass(frozen=True)
class ParetoFactorModel:
    """Sign-symmetric Pareto components coupled through a shared factor.

    coupling="mixture": component j equals scale_j * (I_j W + (1 - I_j) V_j)
    where W and the V_j are sign-symmetric Pareto variables (tail indices
    min(a) and a_j) and I_j ~ Bernoulli(rho) are independent.

    coupling="power": component j equals scale_j * sign * U^(1/a_j) for one
    shared Pareto(1) magnitude U and one shared sign.  Marginals are exactly
    sign-symmetric Pareto(a_j); the extremes are comonotone, which realizes
    the worst-case truncation-bias decay for the product moment (the mixture
    coupling cannot: its cross bias is governed by the shared factor's own
    tail, which the moment class forces to be light).  ``rho`` is ignored.

    symmetric=False drops the random sign and keeps raw magnitudes, giving a
    positive heavy tail: a symmetric law has zero truncation bias for the
    mean, which makes it useless for exercising truncation tuning at d=1.

    At scale=1 the per-axis scales are chosen so E|X^j|^{k_j} = 1 exactly;
    ``scale`` multiplies all components.
    """

    ks: tuple[float, ...]
    a: tuple[float, ...]
    rho: float = 0.0
    scale: float = 1.0
    coupling: str = "mixture"
    symmetric: bool = True

    def __init__(
        self,
        ks: Sequence[float],
        a: Sequence[float],
        rho: float = 0.0,
        scale: float = 1.0,
        coupling: str = "mixture",
        symmetric: bool = True,
    ):
        ks = tuple(float(k) for k in ks)
        a = tuple(float(x) for x in a)
        if len(a) != len(ks):
            raise ValueError("need one tail index per component")
        for aj, kj in zip(a, ks):
            if aj <= kj:
                raise ValueError(f"tail index {aj} must exceed moment order {kj}")
        if not (0.0 <= rho <= 1.0):
            raise ValueError("rho must lie in [0, 1]")
        if scale <= 0:
            raise ValueError("scale must be positive")
        if coupling not in ("mixture", "power"):
            raise ValueError(f"unknown coupling {coupling!r}")
        if coupling == "power" and sum(1.0 / x for x in a) >= 1.0:
            raise ValueError("power coupling needs sum 1/a_j < 1 for a finite product moment")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "rho", float(rho))
        object.__setattr__(self, "scale", float(scale))
        object.__setattr__(self, "coupling", coupling)
        object.__setattr__(self, "symmetric", bool(symmetric))

    @property
    def d(self) -> int:
        return len(self.ks)

    @property
    def a_shared(self) -> float:
        return min(self.a)

    def _abs_moment(self, tail: float, order: float) -> float:
        # E |Pareto(tail)|^order for unit-scale magnitude >= 1
        if order >= tail:
            raise ValueError("moment of this order is infinite")
        return tail / (tail - order)

    def component_scales(self) -> np.ndarray:
        """Per-axis scales making E|X^j|^{k_j} = scale^{k_j} at the given scale."""
        out = []
        for j, k in enumerate(self.ks):
            if self.coupling == "power":
                m = self._abs_moment(self.a[j], k)
            else:
                m = self.rho * self._abs_moment(self.a_shared, k) + (
                    1.0 - self.rho
                ) * self._abs_moment(self.a[j], k)
            out.append(self.scale * m ** (-1.0 / k))
        return np.asarray(out)

    # --- exact ground truths ---

    def _axis_abs_mean(self, j: int) -> float:
        if self.coupling == "power":
            return self._abs_moment(self.a[j - 1], 1.0)
        return self.rho * self._abs_moment(self.a_shared, 1.0) + (
            1.0 - self.rho
        ) * self._abs_moment(self.a[j - 1], 1.0)

    def mean(self, j: int) -> float:
        if self.symmetric:
            return 0.0
        return float(self.component_scales()[j - 1]) * self._axis_abs_mean(j)

    def abs_moment(self, j: int) -> float:
        """E |X^j|^{k_j}; equals scale^{k_j} by construction."""
        return self.scale ** self.ks[j - 1]

    def gamma(self) -> float:
        """E prod_j X^j; zero for odd d under sign symmetry."""
        if self.symmetric and self.d % 2 == 1:
            return 0.0
        s = self.component_scales()
        if self.coupling == "power":
            # E U^p for U ~ Pareto(1) is 1/(1 - p), here p = sum 1/a_j < 1
            p = sum(1.0 / aj for aj in self.a)
            return float(np.prod(s)) / (1.0 - p)
        if self.symmetric:
            return float(np.prod(s)) * self.rho**self.d * self._abs_moment(self.a_shared, self.d)
        # asymmetric mixture: sum over which components picked the shared factor
        total = 0.0
        for picks in itertools.product((0, 1), repeat=self.d):
            w = 1.0
            shared_count = sum(picks)
            for j, p_j in enumerate(picks):
                w *= self.rho if p_j else (1.0 - self.rho)
                if not p_j:
                    w *= self._abs_moment(self.a[j], 1.0)
            if shared_count:
                w *= self._abs_moment(self.a_shared, float(shared_count))
            total += w
        return float(np.prod(s)) * total

    def variance(self, j: int) -> float:
        s = self.component_scales()[j - 1]
        if self.coupling == "power":
            m2 = self._abs_moment(self.a[j - 1], 2.0)
        else:
            m2 = self.rho * self._abs_moment(self.a_shared, 2.0) + (
                1.0 - self.rho
            ) * self._abs_moment(self.a[j - 1], 2.0)
        return s * s * m2 - self.mean(j) ** 2

    def covariance(self) -> float:
        if self.d != 2:
            raise ValueError("covariance defined for d=2")
        return self.gamma() - self.mean(1) * self.mean(2)

    def correlation(self) -> float:
        if self.d != 2:
            raise ValueError("correlation defined for d=2")
        return self.covariance() / math.sqrt(self.variance(1) * self.variance(2))

    def to_json(self) -> dict:
        return {
            "kind": "pareto_factor",
            "ks": list(self.ks),
            "a": list(self.a),
            "rho": self.rho,
            "scale": self.scale,
            "coupling": self.coupling,
            "symmetric": self.symmetric,
        }


def _pareto_mag(rng, tail: float, size) -> np.ndarray:
    return rng.random(size) ** (-1.0 / tail)


def _sym_pareto(rng, tail: float, size) -> np.ndarray:
    mag = _pareto_mag(rng, tail, size)
    sign = rng.integers(0, 2, size=size) * 2.0 - 1.0
    return sign * mag


def sample_heavy_tailed(model: ParetoFactorModel, n: int, rng) -> np.ndarray:
    """(n, d) iid rows from the shared-factor Pareto model."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = model.d
    if model.coupling == "power":
        u = rng.random(n)  # U = u^-1 ~ Pareto(1)
        if model.symmetric:
            sign = rng.integers(0, 2, size=n) * 2.0 - 1.0
        else:
            sign = np.ones(n)
        X = np.empty((n, d))
        for j in range(d):
            X[:, j] = sign * u ** (-1.0 / model.a[j])
        return X * model.component_scales()
    w = _pareto_mag(rng, model.a_shared, n) if not model.symmetric else _sym_pareto(rng, model.a_shared, n)
    X = np.empty((n, d))
    for j in range(d):
        if model.symmetric:
            v = _sym_pareto(rng, model.a[j], n)
        else:
            v = _pareto_mag(rng, model.a[j], n)
        pick = rng.random(n) < model.rho
        X[:, j] = np.where(pick, w, v)
    return X * model.component_scales()


@dataclass(frozen=True)
class HolderDensityModel:
    """Box-truncated product density with an exact evaluator.

    beta=1 uses a double-exponential (kinked) peak mixed with a wide Gaussian
    background, so the smoothness class membership is tight at the peak; a pure
    Gaussian mixture is infinitely smooth and its kernel bias would decay
    faster than the beta=1 rate.  beta in {2, 3} uses Gaussian mixtures.
    """

    beta: float
    d: int = 1
    box: float = 3.0
    # Gaussian mixture parameters (beta 2 or 3)
    weights: tuple[float, ...] = (0.6, 0.4)
    mus: tuple[float, ...] = (0.0, 0.8)
    sigmas: tuple[float, ...] = (0.55, 1.1)
    # kink parameters (beta 1): peak weight and its scale
    kink_b: float = 0.6
    kink_weight: float = 0.7

    def __post_init__(self):
        if self.beta not in (1.0, 2.0, 3.0, 1, 2, 3):
            raise ValueError("supported smoothness orders: 1, 2, 3")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")

    # --- 1-d building blocks (product across axes) ---

    def _axis_density_raw(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if int(self.beta) == 1:
            peak = (1.0 / (2.0 * self.kink_b)) * np.exp(-np.abs(x) / self.kink_b)
            bg_sigma = 1.2
            bg = np.exp(-0.5 * (x / bg_sigma) ** 2) / (bg_sigma * math.sqrt(2 * math.pi))
            return self.kink_weight * peak + (1.0 - self.kink_weight) * bg
        dens = np.zeros_like(x)
        for w, mu, s in zip(self.weights, self.mus, self.sigmas):
            dens += w * np.exp(-0.5 * ((x - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        return dens

    def _axis_cdf_raw(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if int(self.beta) == 1:
            lap = np.where(x < 0, 0.5 * np.exp(x / self.kink_b), 1.0 - 0.5 * np.exp(-x / self.kink_b))
            bg = ndtr(x / 1.2)
            return self.kink_weight * lap + (1.0 - self.kink_weight) * bg
        cdf = np.zeros_like(x)
        for w, mu, s in zip(self.weights, self.mus, self.sigmas):
            cdf += w * ndtr((x - mu) / s)
        return cdf

    def _axis_norm(self) -> float:
        lo, hi = self._axis_cdf_raw(np.array([-self.box, self.box]))
        return float(hi - lo)

    def density(self, x) -> np.ndarray:
        """Exact truncated density at points of shape (n, d) (or (n,) when d=1)."""
        x = np.asarray(x, dtype=float)
        if self.d == 1:
            pts = x.reshape(-1)
            inside = np.abs(pts) <= self.box
            vals = np.where(inside, self._axis_density_raw(pts) / self._axis_norm(), 0.0)
            return vals
        pts = x.reshape(-1, self.d)
        inside = np.all(np.abs(pts) <= self.box, axis=1)
        per_axis = self._axis_density_raw(pts) / self._axis_norm()
        return np.where(inside, np.prod(per_axis, axis=1), 0.0)

    def density_at(self, x0) -> float:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        vals = self.density(x0.reshape(1, -1) if self.d > 1 else x0)
        return float(np.asarray(vals).ravel()[0])

    def axis_bin_mass(self, edges: np.ndarray) -> np.ndarray:
        """Exact per-bin probabilities on one axis (for goodness-of-fit tests)."""
        edges = np.clip(np.asarray(edges, dtype=float), -self.box, self.box)
        cdf = self._axis_cdf_raw(edges)
        return np.diff(cdf) / self._axis_norm()

    def _sample_axis(self, n: int, rng) -> np.ndarray:
        out = np.empty(0)
        while out.size < n:
            want = n - out.size
            draw = int(want * 1.4) + 16
            if int(self.beta) == 1:
                pick = rng.random(draw) < self.kink_weight
                vals = np.where(
                    pick,
                    rng.laplace(0.0, self.kink_b, size=draw),
                    rng.normal(0.0, 1.2, size=draw),
                )
            else:
                comp = rng.choice(len(self.weights), size=draw, p=np.asarray(self.weights))
                vals = rng.normal(np.asarray(self.mus)[comp], np.asarray(self.sigmas)[comp])
            vals = vals[np.abs(vals) <= self.box]
            out = np.concatenate([out, vals])
        return out[:n]

    def to_json(self) -> dict:
        return {
            "kind": "holder_density",
            "beta": float(self.beta),
            "d": self.d,
            "box": self.box,
            "weights": list(self.weights),
            "mus": list(self.mus),
            "sigmas": list(self.sigmas),
            "kink_b": self.kink_b,
            "kink_weight": self.kink_weight,
        }


def sample_holder_density(model: HolderDensityModel, n: int, rng) -> np.ndarray:
    """(n, d) iid rows from the truncated product density."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cols = [model._sample_axis(n, rng) for _ in range(model.d)]
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class DiscreteTableModel:
    """Sampling wrapper around a finite discrete distribution."""

    dist: DiscreteDist

    def sample(self, n: int, rng) -> np.ndarray:
        flat = self.dist.probs.ravel()
        idx = rng.choice(flat.size, size=n, p=flat)
        coords = np.unravel_index(idx, self.dist.probs.shape)
        cols = [np.asarray(self.dist.supports[ax])[coords[ax]] for ax in range(self.dist.d)]
        return np.stack(cols, axis=1)

    def to_json(self) -> dict:
        return {"kind": "discrete_table", "dist": self.dist.to_json()}


def model_from_json(obj):
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj["kind"]
    if kind == "pareto_factor":
        return ParetoFactorModel(
            ks=obj["ks"],
            a=obj["a"],
            rho=obj["rho"],
            scale=obj.get("scale", 1.0),
            coupling=obj.get("coupling", "mixture"),
            symmetric=obj.get("symmetric", True),
        )
    if kind == "holder_density":
        return HolderDensityModel(
            beta=obj["beta"],
            d=obj["d"],
            box=obj["box"],
            weights=tuple(obj["weights"]),
            mus=tuple(obj["mus"]),
            sigmas=tuple(obj["sigmas"]),
            kink_b=obj["kink_b"],
            kink_weight=obj["kink_weight"],
        )
    if kind == "discrete_table":
        return DiscreteTableModel(DiscreteDist.from_json(obj["dist"]))
    raise ValueError(f"unknown model kind {kind!r}")


def dump_csv(path: str, X: np.ndarray) -> None:
    """Write raw data as CSV with header x1..xd."""
    X = np.asarray(X, dtype=float)
    header = ",".join(f"x{j + 1}" for j in range(X.shape[1]))
    with open(path, "w") as f:
        f.write(header + "\n")
        for row in X:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")

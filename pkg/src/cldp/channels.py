"""Privacy channels: construction, sampling, density evaluation, auditing.

Laplace parameterization: L(b) has density (1/(2b)) exp(-|x|/b), so the
truncated-value mechanism with level alpha uses scale b = 2T/alpha and its
conditional density is q(z|x) = (alpha/(4T)) exp(-(alpha/(2T)) |z - clamp(x)|).
The exponent is negative; a positive sign would not integrate to one.

Channel specs are immutable and shareable.  ``privatize`` takes an explicit
per-call RNG stream (no ambient randomness): identical stream state implies an
identical release, which is the contract the experiment harness relies on for
determinism under any parallelism degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import legendre

__all__ = [
    "PrivacyBudget",
    "KernelFn",
    "make_kernel",
    "kernel_order",
    "LaplaceTruncChannel",
    "KernelLaplaceChannel",
    "MultiTruncChannel",
    "MultiBandwidthChannel",
    "RandomizedResponseChannel",
    "make_rr_channel",
    "make_identity_channel",
    "make_constant_channel",
    "privatize",
    "privacy_audit",
    "compose_ldp_level",
    "AuditResult",
    "channel_to_json",
    "channel_from_json",
]


@dataclass(frozen=True)
class PrivacyBudget:
    """Per-component privacy levels alpha = (alpha_1, ..., alpha_d), in nats."""

    alphas: tuple[float, ...]

    def __init__(self, alphas: Sequence[float]):
        a = tuple(float(x) for x in alphas)
        if any(x < 0 for x in a):
            raise ValueError("privacy levels must be nonnegative")
        object.__setattr__(self, "alphas", a)

    @property
    def d(self) -> int:
        return len(self.alphas)

    def exp_minus_one(self) -> np.ndarray:
        """e^{alpha_j} - 1 per component."""
        return np.expm1(np.asarray(self.alphas))

    def total(self) -> float:
        """Sum of the component levels (the induced joint LDP level)."""
        return float(sum(self.alphas))

    def prod_alpha_sq(self) -> float:
        """prod_j alpha_j^2, the effective-sample-size multiplier."""
        return float(np.prod(np.square(np.asarray(self.alphas))))


def compose_ldp_level(budget: PrivacyBudget) -> float:
    """LDP level of the product channel acting on the whole vector."""
    return budget.total()


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def kernel_order(beta: float) -> int:
    """Largest integer strictly below beta (the smoothness-class derivative count).

    For beta = 2 this is 1: the class only controls derivatives of order < beta,
    so the matching kernel must keep the beta-th moment free for the bias to
    attain the h^beta law.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    return int(math.ceil(beta)) - 1


@dataclass(frozen=True)
class KernelFn:
    """A kernel on [-1, 1] with vanishing moments 1..order and sup bound kappa."""

    order: int
    kappa: float
    coeffs: tuple[float, ...] = ()  # monomial coefficients, low to high degree
    eval_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) <= 1.0
        if self.eval_fn is not None:
            vals = np.where(inside, self.eval_fn(u), 0.0)
        else:
            vals = np.where(inside, np.polynomial.polynomial.polyval(u, np.asarray(self.coeffs)), 0.0)
        return vals if vals.ndim else float(vals)

    def moment(self, l: int, nodes: int = 64) -> float:
        """Quadrature of K(u) u^l over [-1, 1] (exact for polynomial kernels)."""
        x, w = legendre.leggauss(nodes)
        return float(np.sum(w * self(x) * x**l))


def make_kernel(order: int) -> KernelFn:
    """Polynomial kernel on [-1, 1] with integral 1 and moments 1..order zero.

    Built as the minimal-degree combination of Legendre polynomials solving the
    moment constraints; the sup bound is computed exactly from the polynomial's
    critical points.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    m = order  # polynomial degree
    # moment matrix A[l, k] = integral of P_k(u) u^l over [-1, 1]
    A = np.zeros((m + 1, m + 1))
    for k in range(m + 1):
        ck = np.zeros(k + 1)
        ck[k] = 1.0
        poly = legendre.leg2poly(ck)  # monomial coefficients of P_k
        for l in range(m + 1):
            # integral of u^(l + j) over [-1,1]
            A[l, k] = sum(
                c * ((1.0 - (-1.0) ** (l + j + 1)) / (l + j + 1)) for j, c in enumerate(poly)
            )
    b = np.zeros(m + 1)
    b[0] = 1.0
    leg_coeffs = np.linalg.solve(A, b)
    mono = legendre.leg2poly(leg_coeffs)
    kappa = _poly_sup(mono)
    return KernelFn(order=order, kappa=kappa, coeffs=tuple(float(c) for c in mono))


def _poly_sup(mono_coeffs: np.ndarray) -> float:
    """Exact sup of |polynomial| over [-1, 1] via critical points."""
    p = np.polynomial.Polynomial(mono_coeffs)
    candidates = [-1.0, 1.0]
    if len(mono_coeffs) > 1:
        roots = p.deriv().roots()
        candidates.extend(float(r.real) for r in roots if abs(r.imag) < 1e-12 and -1 <= r.real <= 1)
    return float(max(abs(p(c)) for c in candidates))


def validate_kernel(k: KernelFn, tol: float = 1e-8, nodes: int = 64) -> None:
    """Check normalization, vanishing moments, sup bound, and support."""
    if abs(k.moment(0, nodes) - 1.0) > tol:
        raise ValueError(f"kernel does not integrate to 1 (got {k.moment(0, nodes)})")
    for l in range(1, k.order + 1):
        if abs(k.moment(l, nodes)) > tol:
            raise ValueError(f"kernel moment {l} does not vanish (got {k.moment(l, nodes)})")
    grid = np.linspace(-1, 1, 4001)
    if np.max(np.abs(k(grid))) > k.kappa * (1 + 1e-12) + 1e-15:
        raise ValueError("kernel exceeds its declared sup bound")
    outside = np.array([-1.5, 1.5, 2.0])
    if np.any(k(outside) != 0.0):
        raise ValueError("kernel support exceeds [-1, 1]")


# ---------------------------------------------------------------------------
# channel variants
# ---------------------------------------------------------------------------


def _check_finite_scalar(x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"raw value must be finite, got {x!r}")
    return x


@dataclass(frozen=True)
class LaplaceTruncChannel:
    """Clamp to [-T, T] and add Laplace noise of scale 2T/alpha."""

    T: float
    alpha: float

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("truncation T must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @property
    def scale(self) -> float:
        return 2.0 * self.T / self.alpha

    def privatize(self, x, rng) -> float:
        x = _check_finite_scalar(x)
        return float(np.clip(x, -self.T, self.T) + rng.laplace(0.0, self.scale))

    def privatize_array(self, xs: np.ndarray, rng) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if not np.all(np.isfinite(xs)):
            raise ValueError("raw values must be finite")
        return np.clip(xs, -self.T, self.T) + rng.laplace(0.0, self.scale, size=xs.shape)

    def density(self, z, x) -> np.ndarray:
        c = np.clip(np.asarray(x, dtype=float), -self.T, self.T)
        z = np.asarray(z, dtype=float)
        return (1.0 / (2.0 * self.scale)) * np.exp(-np.abs(z - c) / self.scale)

    def default_x_grid(self, n: int = 61) -> np.ndarray:
        return np.union1d(np.linspace(-self.T - 1.0, self.T + 1.0, n), [-self.T, 0.0, self.T])

    def default_z_grid(self, n: int = 121) -> np.ndarray:
        span = self.T + 8.0 * self.scale
        return np.union1d(np.linspace(-span, span, n), [-self.T, 0.0, self.T])


@dataclass(frozen=True)
class KernelLaplaceChannel:
    """Release (1/h) K((x - x0)/h) plus Laplace noise of scale 2 kappa/(alpha h)."""

    h: float
    x0: float
    kernel: KernelFn
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.h < 1.0):
            raise ValueError("bandwidth h must lie in (0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @property
    def scale(self) -> float:
        return 2.0 * self.kernel.kappa / (self.alpha * self.h)

    def _clean(self, x):
        return self.kernel((np.asarray(x, dtype=float) - self.x0) / self.h) / self.h

    def privatize(self, x, rng) -> float:
        x = _check_finite_scalar(x)
        return float(self._clean(x) + rng.laplace(0.0, self.scale))

    def privatize_array(self, xs: np.ndarray, rng) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if not np.all(np.isfinite(xs)):
            raise ValueError("raw values must be finite")
        return self._clean(xs) + rng.laplace(0.0, self.scale, size=xs.shape)

    def density(self, z, x) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return (1.0 / (2.0 * self.scale)) * np.exp(-np.abs(z - self._clean(x)) / self.scale)

    def default_x_grid(self, n: int = 61) -> np.ndarray:
        return np.union1d(
            np.linspace(self.x0 - self.h - 1.0, self.x0 + self.h + 1.0, n),
            [self.x0 - self.h, self.x0, self.x0 + self.h],
        )

    def default_z_grid(self, n: int = 121) -> np.ndarray:
        peak = self.kernel.kappa / self.h
        span = peak + 8.0 * self.scale
        return np.union1d(np.linspace(-span, span, n), [-peak, 0.0, peak])


def _validate_beta_n(alpha: float, card: int, beta_n: float | None) -> float:
    expected = alpha / card
    if beta_n is None:
        return expected
    if not math.isclose(beta_n, expected, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(
            f"beta_n={beta_n!r} inconsistent with alpha/card(grid)={expected!r}"
        )
    return float(beta_n)


@dataclass(frozen=True)
class MultiTruncChannel:
    """One clamp-plus-Laplace release per truncation level, noise scale 2T/beta_n.

    The per-level budget beta_n = alpha / card(grid) keeps the joint release at
    level alpha even though every level carries information about the same raw value.
    """

    grid: tuple[float, ...]
    alpha: float
    beta_n: float = None  # type: ignore[assignment]

    def __post_init__(self):
        g = tuple(float(t) for t in self.grid)
        if len(g) == 0 or any(t <= 0 for t in g):
            raise ValueError("truncation grid must be nonempty and positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "beta_n", _validate_beta_n(self.alpha, len(g), self.beta_n))

    def scales(self) -> np.ndarray:
        return 2.0 * np.asarray(self.grid) / self.beta_n

    def privatize(self, x, rng) -> np.ndarray:
        x = _check_finite_scalar(x)
        ts = np.asarray(self.grid)
        return np.clip(x, -ts, ts) + rng.laplace(0.0, self.scales())

    def privatize_array(self, xs: np.ndarray, rng) -> np.ndarray:
        """Releases with shape xs.shape + (card(grid),)."""
        xs = np.asarray(xs, dtype=float)
        if not np.all(np.isfinite(xs)):
            raise ValueError("raw values must be finite")
        ts = np.asarray(self.grid)
        clean = np.clip(xs[..., None], -ts, ts)
        return clean + rng.laplace(0.0, 1.0, size=clean.shape) * self.scales()

    def level_density(self, level: int, z, x) -> np.ndarray:
        t = self.grid[level]
        b = 2.0 * t / self.beta_n
        c = np.clip(np.asarray(x, dtype=float), -t, t)
        return (1.0 / (2.0 * b)) * np.exp(-np.abs(np.asarray(z, dtype=float) - c) / b)

    def default_x_grid(self, n: int = 61) -> np.ndarray:
        tmax = max(self.grid)
        return np.union1d(
            np.linspace(-tmax - 1.0, tmax + 1.0, n),
            np.concatenate([[-t, t] for t in self.grid] + [[0.0]]),
        )

    def level_z_grid(self, level: int, n: int = 121) -> np.ndarray:
        t = self.grid[level]
        b = 2.0 * t / self.beta_n
        span = t + 8.0 * b
        return np.union1d(np.linspace(-span, span, n), [-t, 0.0, t])


@dataclass(frozen=True)
class MultiBandwidthChannel:
    """One kernel-Laplace release per candidate bandwidth, noise scale 2 kappa/(h beta_n)."""

    grid: tuple[float, ...]
    alpha: float
    x0: float
    kernel: KernelFn
    beta_n: float = None  # type: ignore[assignment]

    def __post_init__(self):
        g = tuple(float(h) for h in self.grid)
        if len(g) == 0 or any(not (0.0 < h <= 1.0) for h in g):
            raise ValueError("bandwidth grid entries must lie in (0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "beta_n", _validate_beta_n(self.alpha, len(g), self.beta_n))

    def scales(self) -> np.ndarray:
        return 2.0 * self.kernel.kappa / (np.asarray(self.grid) * self.beta_n)

    def _clean(self, x):
        hs = np.asarray(self.grid)
        x = np.asarray(x, dtype=float)
        return self.kernel((x[..., None] - self.x0) / hs) / hs

    def privatize(self, x, rng) -> np.ndarray:
        x = _check_finite_scalar(x)
        return self._clean(np.asarray(x)) + rng.laplace(0.0, self.scales())

    def privatize_array(self, xs: np.ndarray, rng) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if not np.all(np.isfinite(xs)):
            raise ValueError("raw values must be finite")
        clean = self._clean(xs)
        return clean + rng.laplace(0.0, 1.0, size=clean.shape) * self.scales()

    def level_density(self, level: int, z, x) -> np.ndarray:
        h = self.grid[level]
        b = 2.0 * self.kernel.kappa / (h * self.beta_n)
        c = self.kernel((np.asarray(x, dtype=float) - self.x0) / h) / h
        return (1.0 / (2.0 * b)) * np.exp(-np.abs(np.asarray(z, dtype=float) - c) / b)

    def default_x_grid(self, n: int = 61) -> np.ndarray:
        hmax = max(self.grid)
        return np.union1d(
            np.linspace(self.x0 - hmax - 1.0, self.x0 + hmax + 1.0, n), [self.x0]
        )

    def level_z_grid(self, level: int, n: int = 121) -> np.ndarray:
        h = self.grid[level]
        b = 2.0 * self.kernel.kappa / (h * self.beta_n)
        peak = self.kernel.kappa / h
        span = peak + 8.0 * b
        return np.union1d(np.linspace(-span, span, n), [-peak, 0.0, peak])


@dataclass(frozen=True, eq=False)
class RandomizedResponseChannel:
    """Finite-alphabet channel given by an explicit row-stochastic table."""

    input_support: tuple[float, ...]
    output_support: tuple[float, ...]
    transition_table: np.ndarray
    alpha: float

    def __post_init__(self):
        table = np.asarray(self.transition_table, dtype=float)
        if table.shape != (len(self.input_support), len(self.output_support)):
            raise ValueError("transition table shape does not match supports")
        if np.any(table < 0):
            raise ValueError("transition probabilities must be nonnegative")
        if np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition rows must each sum to 1")
        table = table.copy()
        table.flags.writeable = False
        object.__setattr__(self, "transition_table", table)
        object.__setattr__(self, "input_support", tuple(float(x) for x in self.input_support))
        object.__setattr__(self, "output_support", tuple(float(z) for z in self.output_support))

    def _row(self, x) -> int:
        x = _check_finite_scalar(x)
        sup = np.asarray(self.input_support)
        hits = np.flatnonzero(np.isclose(sup, x, rtol=0.0, atol=1e-12))
        if hits.size != 1:
            raise ValueError(f"value {x!r} not in channel input support")
        return int(hits[0])

    def privatize(self, x, rng) -> float:
        row = self.transition_table[self._row(x)]
        idx = rng.choice(len(self.output_support), p=row)
        return float(self.output_support[idx])

    def density(self, z, x) -> float:
        iz = np.flatnonzero(np.isclose(np.asarray(self.output_support), float(z), atol=1e-12))
        if iz.size != 1:
            raise ValueError(f"value {z!r} not in channel output support")
        return float(self.transition_table[self._row(x), int(iz[0])])


def make_rr_channel(input_support: Sequence[float], alpha: float) -> RandomizedResponseChannel:
    """Randomized response keeping the true symbol with probability e^a/(e^a + m - 1)."""
    m = len(input_support)
    if m < 2:
        raise ValueError("randomized response needs at least 2 symbols")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    stay = math.exp(alpha) / (math.exp(alpha) + m - 1)
    off = 1.0 / (math.exp(alpha) + m - 1)
    table = np.full((m, m), off)
    np.fill_diagonal(table, stay)
    return RandomizedResponseChannel(tuple(input_support), tuple(input_support), table, alpha)


def make_identity_channel(support: Sequence[float]) -> RandomizedResponseChannel:
    return RandomizedResponseChannel(tuple(support), tuple(support), np.eye(len(support)), math.inf)


def make_constant_channel(support: Sequence[float], symbol_index: int = 0) -> RandomizedResponseChannel:
    m = len(support)
    table = np.zeros((m, m))
    table[:, symbol_index] = 1.0
    return RandomizedResponseChannel(tuple(support), tuple(support), table, 0.0)


def privatize(ch, x, rng):
    """Release a single raw value through ``ch`` using the supplied RNG stream."""
    return ch.privatize(x, rng)


# ---------------------------------------------------------------------------
# auditing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditResult:
    max_ratio: float
    arg_x: float
    arg_xp: float
    arg_z: object

    def to_json(self) -> dict:
        z = self.arg_z
        if isinstance(z, (tuple, list, np.ndarray)):
            z = [float(v) for v in z]
        else:
            z = float(z)
        return {
            "max_ratio": self.max_ratio,
            "arg": {"x": self.arg_x, "xp": self.arg_xp, "z": z},
        }


def privacy_audit(ch, x_grid=None, z_grid=None) -> AuditResult:
    """Grid supremum of the conditional-density likelihood ratio q(z|x)/q(z|x').

    For the Laplace mechanism with the extremal points (+-T, z=T) on the grids
    the supremum equals e^alpha exactly; for randomized response the full
    alphabets are enumerated, so the audit is exact.
    """
    if isinstance(ch, RandomizedResponseChannel):
        xs = np.asarray(ch.input_support) if x_grid is None else np.asarray(x_grid, dtype=float)
        zs = np.asarray(ch.output_support) if z_grid is None else np.asarray(z_grid, dtype=float)
        dens = np.array([[ch.density(z, x) for z in zs] for x in xs])
        best = (-math.inf, 0, 0, 0)
        for iz in range(len(zs)):
            col = dens[:, iz]
            ix = int(np.argmax(col))
            ixp = int(np.argmin(col))
            if col[ixp] == 0.0:
                ratio = math.inf if col[ix] > 0 else 1.0
            else:
                ratio = col[ix] / col[ixp]
            if ratio > best[0]:
                best = (ratio, ix, ixp, iz)
        return AuditResult(best[0], float(xs[best[1]]), float(xs[best[2]]), float(zs[best[3]]))

    if isinstance(ch, (MultiTruncChannel, MultiBandwidthChannel)):
        xs = ch.default_x_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
        n_levels = len(ch.grid)
        best = (-math.inf, 0.0, 0.0, None)
        for x in xs:
            for xp in xs:
                ratio = 1.0
                argz = []
                for lev in range(n_levels):
                    zs = ch.level_z_grid(lev) if z_grid is None else np.asarray(z_grid, dtype=float)
                    r = ch.level_density(lev, zs, x) / ch.level_density(lev, zs, xp)
                    k = int(np.argmax(r))
                    ratio *= float(r[k])
                    argz.append(float(zs[k]))
                if ratio > best[0]:
                    best = (ratio, float(x), float(xp), tuple(argz))
        return AuditResult(*best)

    # scalar-release channels with closed-form densities
    xs = ch.default_x_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    zs = ch.default_z_grid() if z_grid is None else np.asarray(z_grid, dtype=float)
    dens = ch.density(zs[None, :], xs[:, None])  # (x, z)
    best = (-math.inf, 0, 0, 0)
    for iz in range(len(zs)):
        col = dens[:, iz]
        ix = int(np.argmax(col))
        ixp = int(np.argmin(col))
        ratio = col[ix] / col[ixp]
        if ratio > best[0]:
            best = (float(ratio), ix, ixp, iz)
    return AuditResult(best[0], float(xs[best[1]]), float(xs[best[2]]), float(zs[best[3]]))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def channel_to_json(ch) -> dict:
    if isinstance(ch, LaplaceTruncChannel):
        return {"variant": "laplace_trunc", "alpha": ch.alpha, "T": ch.T}
    if isinstance(ch, KernelLaplaceChannel):
        return {
            "variant": "kernel_laplace",
            "alpha": ch.alpha,
            "h": ch.h,
            "x0": ch.x0,
            "kernel_order": ch.kernel.order,
        }
    if isinstance(ch, MultiTruncChannel):
        return {"variant": "multi_trunc", "alpha": ch.alpha, "grid": list(ch.grid), "beta_n": ch.beta_n}
    if isinstance(ch, MultiBandwidthChannel):
        return {
            "variant": "multi_bandwidth",
            "alpha": ch.alpha,
            "grid": list(ch.grid),
            "beta_n": ch.beta_n,
            "x0": ch.x0,
            "kernel_order": ch.kernel.order,
        }
    if isinstance(ch, RandomizedResponseChannel):
        return {
            "variant": "randomized_response",
            "alpha": None if math.isinf(ch.alpha) else ch.alpha,
            "input_support": list(ch.input_support),
            "output_support": list(ch.output_support),
            "transition_table": np.asarray(ch.transition_table).tolist(),
        }
    raise TypeError(f"unknown channel type {type(ch)!r}")


def channel_from_json(obj: dict):
    variant = obj["variant"]
    if variant == "laplace_trunc":
        return LaplaceTruncChannel(T=obj["T"], alpha=obj["alpha"])
    if variant == "kernel_laplace":
        return KernelLaplaceChannel(
            h=obj["h"], x0=obj["x0"], kernel=make_kernel(obj["kernel_order"]), alpha=obj["alpha"]
        )
    if variant == "multi_trunc":
        return MultiTruncChannel(grid=tuple(obj["grid"]), alpha=obj["alpha"], beta_n=obj.get("beta_n"))
    if variant == "multi_bandwidth":
        return MultiBandwidthChannel(
            grid=tuple(obj["grid"]),
            alpha=obj["alpha"],
            x0=obj["x0"],
            kernel=make_kernel(obj["kernel_order"]),
            beta_n=obj.get("beta_n"),
        )
    if variant == "randomized_response":
        alpha = obj["alpha"]
        return RandomizedResponseChannel(
            tuple(obj["input_support"]),
            tuple(obj["output_support"]),
            np.asarray(obj["transition_table"]),
            math.inf if alpha is None else alpha,
        )
    raise ValueError(f"unknown channel variant {variant!r}")

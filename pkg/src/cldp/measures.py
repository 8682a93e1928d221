"""Finite discrete distributions on product spaces, marginals, and divergences.

Conventions used throughout the package:

* Total variation is the **unnormalized** L1 distance ``sum |p - q|``, with
  values in [0, 2].  Halving it to the "probability of distinguishing"
  convention would silently change every contraction bound downstream by a
  factor of 4, so the L1 convention is fixed here and documented prominently.
* KL divergence uses natural logarithms (nats).
* Zero-mass handling: ``0 * log(0/0) = 0``; positive mass where the reference
  measure vanishes raises instead of returning ``inf`` so modeling mistakes
  surface in tests.

All values are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DiscreteDist",
    "SubsetIndex",
    "marginal",
    "tv_distance",
    "divergence",
    "pushforward",
    "nonempty_subsets",
]


@dataclass(frozen=True)
class SubsetIndex:
    """A nonempty subset of axis indices, 1-based as in {1, ..., d}."""

    members: tuple[int, ...]

    def __init__(self, members: Iterable[int]):
        mem = tuple(int(m) for m in members)
        if len(mem) == 0:
            raise ValueError("empty marginal")
        if any(m < 1 for m in mem):
            raise ValueError(f"axis indices are 1-based, got {mem}")
        if any(b <= a for a, b in zip(mem, mem[1:])):
            raise ValueError(f"members must be strictly increasing, got {mem}")
        object.__setattr__(self, "members", mem)

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)


def nonempty_subsets(d: int) -> list[SubsetIndex]:
    """All 2^d - 1 nonempty subsets of {1, ..., d}, sorted by (size, members)."""
    out = []
    for size in range(1, d + 1):
        for combo in itertools.combinations(range(1, d + 1), size):
            out.append(SubsetIndex(combo))
    return out


class DiscreteDist:
    """Probability table over a finite product support.

    ``supports`` holds one strictly increasing array of real support points per
    axis; ``probs`` is the dense mass table with one axis per component.
    Masses must be nonnegative and sum to 1; a total within 1e-9 of 1 is
    renormalized once at construction, anything further off is rejected.
    """

    __slots__ = ("supports", "probs")

    def __init__(self, supports: Sequence[Sequence[float]], probs):
        sups = tuple(np.asarray(s, dtype=float) for s in supports)
        for ax, s in enumerate(sups):
            if s.ndim != 1 or s.size == 0:
                raise ValueError(f"axis {ax + 1}: support must be a nonempty 1-d array")
            if np.any(np.diff(s) <= 0):
                raise ValueError(f"axis {ax + 1}: support points must be strictly increasing")
        p = np.asarray(probs, dtype=float)
        shape = tuple(s.size for s in sups)
        if p.shape != shape:
            raise ValueError(f"probs shape {p.shape} does not match supports {shape}")
        if np.any(p < 0):
            raise ValueError("negative mass")
        total = float(p.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"masses sum to {total!r}, not 1")
        p = p / total
        p.flags.writeable = False
        for s in sups:
            s.flags.writeable = False
        object.__setattr__(self, "supports", sups)
        object.__setattr__(self, "probs", p)

    def __setattr__(self, name, value):  # immutable
        raise AttributeError("DiscreteDist is immutable")

    @property
    def d(self) -> int:
        return len(self.supports)

    def same_support(self, other: "DiscreteDist") -> bool:
        return self.d == other.d and all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.supports, other.supports)
        )

    def __eq__(self, other):
        return (
            isinstance(other, DiscreteDist)
            and self.same_support(other)
            and np.array_equal(self.probs, other.probs)
        )

    def __repr__(self):
        return f"DiscreteDist(d={self.d}, shape={self.probs.shape})"

    # --- serialization (documented JSON shape) ---

    def to_json(self) -> dict:
        """{"supports": [[...], ...], "probs": [{"idx": [...], "p": ...}, ...]}

        ``idx`` entries are 0-based indices into the per-axis support arrays;
        zero-mass cells are omitted.
        """
        entries = []
        for idx in np.ndindex(self.probs.shape):
            p = float(self.probs[idx])
            if p != 0.0:
                entries.append({"idx": [int(i) for i in idx], "p": p})
        return {"supports": [list(map(float, s)) for s in self.supports], "probs": entries}

    @classmethod
    def from_json(cls, obj) -> "DiscreteDist":
        if isinstance(obj, str):
            obj = json.loads(obj)
        supports = obj["supports"]
        shape = tuple(len(s) for s in supports)
        table = np.zeros(shape)
        for entry in obj["probs"]:
            table[tuple(entry["idx"])] = entry["p"]
        return cls(supports, table)


def _as_subset(S, d: int) -> SubsetIndex:
    if not isinstance(S, SubsetIndex):
        S = SubsetIndex(S)
    if S.members[-1] > d:
        raise ValueError(f"axis {S.members[-1]} out of range for d={d}")
    return S


def marginal(P: DiscreteDist, S) -> DiscreteDist:
    """Marginal law of the subvector with (1-based) axes in ``S``."""
    S = _as_subset(S, P.d)
    keep = [m - 1 for m in S.members]
    drop = tuple(ax for ax in range(P.d) if ax not in keep)
    table = P.probs.sum(axis=drop) if drop else P.probs
    return DiscreteDist([P.supports[ax] for ax in keep], table)


def _check_same_support(P: DiscreteDist, Q: DiscreteDist):
    if not P.same_support(Q):
        raise ValueError("distributions must share the same supports")


def tv_distance(P: DiscreteDist, Q: DiscreteDist) -> float:
    """Unnormalized total variation sum |p - q|, in [0, 2]."""
    _check_same_support(P, Q)
    return float(np.abs(P.probs - Q.probs).sum())


def divergence(P: DiscreteDist, Q: DiscreteDist, kind: str = "kl", l: float | None = None) -> float:
    """Divergence between P and Q.

    kind="kl":       sum P log(P/Q)                 (natural log)
    kind="jeffreys": kl(P,Q) + kl(Q,P)
    kind="fl":       sum Q |P/Q - 1|^l  for l > 1
    """
    _check_same_support(P, Q)
    p = P.probs.ravel()
    q = Q.probs.ravel()
    if kind == "kl":
        return _kl(p, q)
    if kind == "jeffreys":
        return _kl(p, q) + _kl(q, p)
    if kind == "fl":
        if l is None or l <= 1:
            raise ValueError(f"f_l divergence requires l > 1, got {l}")
        mask_p = p > 0
        if np.any(q[mask_p] == 0):
            raise ValueError("divergence undefined: P > 0 where Q = 0")
        mask = q > 0
        return float(np.sum(q[mask] * np.abs(p[mask] / q[mask] - 1.0) ** l))
    raise ValueError(f"unknown divergence kind {kind!r}")


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    if np.any(q[mask] == 0):
        raise ValueError("divergence undefined: P > 0 where Q = 0")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _transition_for_axis(channel, support: np.ndarray) -> np.ndarray:
    """Rows of the channel's finite transition table matching ``support``."""
    table = getattr(channel, "transition_table", None)
    if table is None:
        raise ValueError("pushforward requires finite output")
    in_sup = np.asarray(channel.input_support, dtype=float)
    rows = []
    for x in support:
        hits = np.flatnonzero(np.isclose(in_sup, x, rtol=0.0, atol=1e-12))
        if hits.size != 1:
            raise ValueError(f"channel input support does not cover point {x!r}")
        rows.append(hits[0])
    return np.asarray(table, dtype=float)[rows, :]


def pushforward(P: DiscreteDist, channels) -> DiscreteDist:
    """Exact law of Z = (Z^1, ..., Z^d) with Z^j ~ Q^j(.|X^j), conditionally
    independent across axes given X.  Finite-output channels only."""
    if len(channels) != P.d:
        raise ValueError(f"need {P.d} channels, got {len(channels)}")
    out = P.probs
    out_supports = []
    for ax, ch in enumerate(channels):
        t = _transition_for_axis(ch, P.supports[ax])
        # contract the current leading axis against its transition table and
        # push the output axis to the back, so axis order is restored after d steps
        out = np.tensordot(out, t, axes=([0], [0]))
        out_supports.append(np.asarray(ch.output_support, dtype=float))
    return DiscreteDist(out_supports, out)

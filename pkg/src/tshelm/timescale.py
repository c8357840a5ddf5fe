"""Bounded time scales built from finitely many closed intervals.

A time scale is stored as a sorted list of disjoint closed segments
``[l_i, r_i]``; isolated points are degenerate segments with ``l_i == r_i``.
The jump operators and graininess are computed from the segment structure
alone. The sampling :class:`Grid` is only used by downstream numerics.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TimeScaleDomainError",
    "TimeScale",
    "PointClass",
    "Grid",
    "Junction",
    "Subset",
    "RestrictedDomains",
    "sigma",
    "rho",
    "mu",
    "nu",
    "classify",
    "restricted_domains",
    "jump_regularity",
    "admissibility_report",
]

RIGHT_DENSE = "right-dense"
RIGHT_SCATTERED = "right-scattered"
LEFT_DENSE = "left-dense"
LEFT_SCATTERED = "left-scattered"

# scattered -> dense transitions break differentiability of rho,
# dense -> scattered transitions break differentiability of sigma
RS_LD = "RS&LD"
LS_RD = "LS&RD"

MIN_DENSE_INTERVALS = 4


class TimeScaleDomainError(ValueError):
    """Raised when a time is not a member of the time scale."""


@dataclass(frozen=True)
class PointClass:
    right: str
    left: str

    @property
    def right_scattered(self) -> bool:
        return self.right == RIGHT_SCATTERED

    @property
    def left_scattered(self) -> bool:
        return self.left == LEFT_SCATTERED

    def __str__(self) -> str:
        return f"({self.right}, {self.left})"


@dataclass(frozen=True)
class Junction:
    t: float
    kind: str

    @property
    def breaks(self) -> str:
        """Name of the jump operator losing differentiability at this point."""
        return "sigma" if self.kind == RS_LD else "rho"


class TimeScale:
    """Finite union of disjoint closed intervals.

    Parameters
    ----------
    segments : sequence of (l, r) pairs or reals
        Closed intervals; a bare real is an isolated point. Segments are
        sorted on construction and must be pairwise disjoint.
    dense_step : float, optional
        Sampling resolution on non-degenerate intervals. Defaults to
        ``(b - a) / 1000``.
    """

    def __init__(self, segments: Iterable, dense_step: float | None = None):
        segs = []
        for s in segments:
            if np.ndim(s) == 0:
                lo = hi = float(s)
            else:
                lo, hi = (float(x) for x in s)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"segment [{lo}, {hi}] is not finite")
            if lo > hi:
                raise ValueError(f"segment [{lo}, {hi}] has l > r")
            segs.append((lo, hi))
        if not segs:
            raise ValueError("a time scale needs at least one segment")
        segs.sort()
        for (l0, r0), (l1, r1) in zip(segs, segs[1:]):
            if not r0 < l1:
                raise ValueError(f"segments [{l0}, {r0}] and [{l1}, {r1}] overlap or touch")
        self._segments = tuple(segs)
        self._lefts = [s[0] for s in segs]
        span = segs[-1][1] - segs[0][0]
        if dense_step is None:
            dense_step = span / 1000.0 if span > 0 else 1.0
        dense_step = float(dense_step)
        if not dense_step > 0:
            raise ValueError("dense_step must be positive")
        self._dense_step = dense_step
        self._tol = 1e-12 * span
        if len(self.grid) < 3:
            raise ValueError("a time scale needs at least 3 points")

    @classmethod
    def points(cls, pts: Iterable[float], dense_step: float | None = None) -> "TimeScale":
        return cls([float(p) for p in pts], dense_step)

    @classmethod
    def interval(cls, lo: float, hi: float, dense_step: float | None = None) -> "TimeScale":
        return cls([(lo, hi)], dense_step)

    @classmethod
    def uniform(cls, lo: float, hi: float, h: float) -> "TimeScale":
        """The scale ``h*Z`` restricted to ``[lo, hi]``."""
        n = int(round((hi - lo) / h))
        if not math.isclose(lo + n * h, hi, rel_tol=0, abs_tol=1e-9 * max(1.0, abs(hi))):
            raise ValueError("hi - lo must be a multiple of h")
        return cls.points([lo + k * h for k in range(n)] + [hi])

    @property
    def segments(self) -> tuple[tuple[float, float], ...]:
        return self._segments

    @property
    def dense_step(self) -> float:
        return self._dense_step

    @property
    def a(self) -> float:
        return self._segments[0][0]

    @property
    def b(self) -> float:
        return self._segments[-1][1]

    @property
    def is_discrete(self) -> bool:
        return all(lo == hi for lo, hi in self._segments)

    def __repr__(self) -> str:
        parts = [f"{lo!r}" if lo == hi else f"[{lo!r}, {hi!r}]" for lo, hi in self._segments]
        return f"TimeScale({'; '.join(parts)}, dense_step={self._dense_step!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeScale):
            return NotImplemented
        return self._segments == other._segments and self._dense_step == other._dense_step

    def __hash__(self) -> int:
        return hash((self._segments, self._dense_step))

    def locate(self, t: float) -> tuple[int, float]:
        """Segment index containing ``t`` and ``t`` snapped onto it.

        Points within ``1e-12 * (b - a)`` of a segment are snapped to it.
        """
        t = float(t)
        i = bisect.bisect_right(self._lefts, t + self._tol) - 1
        if i >= 0:
            lo, hi = self._segments[i]
            if abs(t - lo) <= self._tol:
                return i, lo
            if abs(t - hi) <= self._tol:
                return i, hi
            if lo < t < hi:
                return i, t
        # not a member: name the nearest segment
        best = min(
            range(len(self._segments)),
            key=lambda k: min(abs(t - self._segments[k][0]), abs(t - self._segments[k][1])),
        )
        lo, hi = self._segments[best]
        raise TimeScaleDomainError(
            f"t={t!r} is not in the time scale (nearest segment #{best}: [{lo!r}, {hi!r}])"
        )

    def __contains__(self, t) -> bool:
        try:
            self.locate(t)
        except TimeScaleDomainError:
            return False
        return True

    def sigma(self, t: float) -> float:
        i, t = self.locate(t)
        if t < self._segments[i][1]:
            return t
        if i == len(self._segments) - 1:
            return self.b
        return self._segments[i + 1][0]

    def rho(self, t: float) -> float:
        i, t = self.locate(t)
        if t > self._segments[i][0]:
            return t
        if i == 0:
            return self.a
        return self._segments[i - 1][1]

    def mu(self, t: float) -> float:
        _, t = self.locate(t)
        return self.sigma(t) - t

    def nu(self, t: float) -> float:
        _, t = self.locate(t)
        return t - self.rho(t)

    def classify(self, t: float) -> PointClass:
        _, t = self.locate(t)
        right = RIGHT_SCATTERED if self.sigma(t) > t else RIGHT_DENSE
        left = LEFT_SCATTERED if self.rho(t) < t else LEFT_DENSE
        return PointClass(right, left)

    def structural_points(self) -> list[float]:
        """All segment endpoints, each once, in increasing order."""
        out = []
        for lo, hi in self._segments:
            out.append(lo)
            if hi != lo:
                out.append(hi)
        return out

    @cached_property
    def grid(self) -> "Grid":
        return Grid._build(self)

    def restricted_domains(self) -> "RestrictedDomains":
        return restricted_domains(self)

    def admissibility_report(self) -> list[Junction]:
        return admissibility_report(self)


@dataclass(frozen=True, eq=False)
class Grid:
    """Computational sampling of a time scale.

    Every segment endpoint and isolated point appears once; non-degenerate
    segments are split into an even number (at least four) of equal
    subintervals no longer than ``dense_step``.
    """

    timescale: TimeScale
    t: np.ndarray
    segment: np.ndarray
    is_sample: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    dense: tuple = field(default=())  # (start, stop, h) per non-degenerate segment, stop exclusive

    @classmethod
    def _build(cls, ts: TimeScale) -> "Grid":
        pts, seg, sample, dense = [], [], [], []
        for k, (lo, hi) in enumerate(ts.segments):
            if lo == hi:
                pts.append(np.array([lo]))
                seg.append(np.array([k]))
                sample.append(np.array([False]))
                continue
            m = max(MIN_DENSE_INTERVALS, math.ceil((hi - lo) / ts.dense_step - 1e-9))
            m += m % 2
            x = lo + (hi - lo) * np.arange(m + 1) / m
            x[0], x[-1] = lo, hi
            start = sum(len(p) for p in pts)
            dense.append((start, start + m + 1, (hi - lo) / m))
            pts.append(x)
            seg.append(np.full(m + 1, k))
            flags = np.ones(m + 1, dtype=bool)
            flags[0] = flags[-1] = False
            sample.append(flags)
        t = np.concatenate(pts)
        segment = np.concatenate(seg)
        is_sample = np.concatenate(sample)
        n = len(t)
        sig = t.copy()
        rh = t.copy()
        for i in range(n):
            lo, hi = ts.segments[segment[i]]
            if t[i] == hi and i + 1 < n:
                sig[i] = t[i + 1]
            if t[i] == lo and i > 0:
                rh[i] = t[i - 1]
        for arr in (t, segment, is_sample, sig, rh):
            arr.setflags(write=False)
        return cls(ts, t, segment, is_sample, sig, rh, tuple(dense))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def mu(self) -> np.ndarray:
        return self.sigma - self.t

    @property
    def nu(self) -> np.ndarray:
        return self.t - self.rho

    @property
    def right_scattered(self) -> np.ndarray:
        return self.sigma > self.t

    @property
    def left_scattered(self) -> np.ndarray:
        return self.rho < self.t

    @property
    def is_structural(self) -> np.ndarray:
        return ~self.is_sample

    def index(self, t: float) -> int:
        """Grid index of a member ``t``; raises if ``t`` is not a grid point."""
        _, ts = self.timescale.locate(t)
        i = int(np.searchsorted(self.t, ts))
        for j in (i - 1, i, i + 1):
            if 0 <= j < len(self.t) and abs(self.t[j] - ts) <= self.timescale._tol:
                return j
        raise TimeScaleDomainError(f"t={t!r} is in the time scale but not a grid point")

    def dense_segment_of(self, i: int):
        """(start, stop, h) of the dense segment holding grid index ``i``, or None."""
        for seg in self.dense:
            if seg[0] <= i < seg[1]:
                return seg
        return None

    @cached_property
    def junction_mask(self) -> np.ndarray:
        inner = restricted_domains(self.timescale).kk.mask(self)
        rs, ls = self.right_scattered, self.left_scattered
        m = inner & ((rs & ~ls) | (ls & ~rs))
        # interior sample points and the endpoints a, b are never junctions
        m &= self.is_structural
        m.setflags(write=False)
        return m

    @cached_property
    def rs_ld_mask(self) -> np.ndarray:
        m = self.junction_mask & self.right_scattered
        m.setflags(write=False)
        return m

    @cached_property
    def ls_rd_mask(self) -> np.ndarray:
        m = self.junction_mask & self.left_scattered
        m.setflags(write=False)
        return m


def sigma(T: TimeScale, t: float) -> float:
    """Forward jump ``inf{s in T : s > t}`` with ``sigma(b) = b``."""
    return T.sigma(t)


def rho(T: TimeScale, t: float) -> float:
    """Backward jump ``sup{s in T : s < t}`` with ``rho(a) = a``."""
    return T.rho(t)


def mu(T: TimeScale, t: float) -> float:
    return T.mu(t)


def nu(T: TimeScale, t: float) -> float:
    return T.nu(t)


def classify(T: TimeScale, t: float) -> PointClass:
    return T.classify(t)


@dataclass(frozen=True)
class Subset:
    """Membership predicate for a truncation of a time scale.

    The truncation removes the half-open range ``]lo, hi]`` (``drop_upper``)
    or ``[lo, hi[`` (``drop_lower``) from the parent scale.
    """

    timescale: TimeScale
    drop_lower: tuple[float, float] | None = None
    drop_upper: tuple[float, float] | None = None

    def __contains__(self, t) -> bool:
        try:
            _, t = self.timescale.locate(t)
        except TimeScaleDomainError:
            return False
        if self.drop_upper is not None and self.drop_upper[0] < t <= self.drop_upper[1]:
            return False
        if self.drop_lower is not None and self.drop_lower[0] <= t < self.drop_lower[1]:
            return False
        return True

    def mask(self, grid: Grid) -> np.ndarray:
        t = grid.t
        keep = np.ones(len(t), dtype=bool)
        if self.drop_upper is not None:
            lo, hi = self.drop_upper
            keep &= ~((t > lo) & (t <= hi))
        if self.drop_lower is not None:
            lo, hi = self.drop_lower
            keep &= ~((t >= lo) & (t < hi))
        return keep

    def __and__(self, other: "Subset") -> "Subset":
        return Subset(
            self.timescale,
            self.drop_lower or other.drop_lower,
            self.drop_upper or other.drop_upper,
        )


@dataclass(frozen=True)
class RestrictedDomains:
    upper: Subset  # T^kappa: natural domain of Delta-derivatives
    lower: Subset  # T_kappa: natural domain of nabla-derivatives
    kk: Subset  # intersection of both


def restricted_domains(T: TimeScale) -> RestrictedDomains:
    """The truncations ``T^k = T minus ]rho(b), b]``, ``T_k = T minus [a, sigma(a)[``."""
    upper = Subset(T, drop_upper=(T.rho(T.b), T.b))
    lower = Subset(T, drop_lower=(T.a, T.sigma(T.a)))
    return RestrictedDomains(upper, lower, upper & lower)


def jump_regularity(T: TimeScale, t: float) -> dict:
    c = T.classify(t)
    return {
        "sigma_continuous": not (c.right_scattered and not c.left_scattered),
        "rho_continuous": not (c.left_scattered and not c.right_scattered),
    }


def admissibility_report(T: TimeScale) -> list[Junction]:
    """Junction points of ``T^k_k`` where sigma or rho stops being differentiable.

    An empty list means the time scale is admissible for the Hamilton solver
    without any junction handling.
    """
    kk = restricted_domains(T).kk
    out = []
    for t in T.structural_points():
        if t not in kk:
            continue
        c = T.classify(t)
        if c.right_scattered and not c.left_scattered:
            out.append(Junction(t, RS_LD))
        elif c.left_scattered and not c.right_scattered:
            out.append(Junction(t, LS_RD))
    return out


def random_timescale(
    rng: np.random.Generator,
    n_segments: int,
    lo: float = 0.0,
    hi: float = 1.0,
    dense_fraction: float = 0.5,
    dense_step: float | None = None,
) -> TimeScale:
    """A random mixed time scale with ``n_segments`` pieces inside ``[lo, hi]``.

    Each piece is an interval with probability ``dense_fraction`` and an
    isolated point otherwise. Used by property tests and the selftest.
    """
    n = max(int(n_segments), 1)
    cuts = np.sort(rng.uniform(lo, hi, size=2 * n - 2))
    bounds = np.concatenate([[lo], cuts, [hi]]).reshape(n, 2)
    segs: list = []
    for s, (l, r) in enumerate(bounds):
        if r - l > 1e-6 * (hi - lo) and rng.random() < dense_fraction:
            segs.append((float(l), float(r)))
        else:
            segs.append(float(l) if s == 0 else float(r) if s == n - 1 else float(0.5 * (l + r)))
    if len(segs) < 3 and all(np.ndim(s) == 0 for s in segs):
        segs = [lo, 0.5 * (lo + hi), hi]
    return TimeScale(segs, dense_step)


def as_timescale(obj: TimeScale | Sequence) -> TimeScale:
    return obj if isinstance(obj, TimeScale) else TimeScale(obj)

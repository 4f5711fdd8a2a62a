"""Piecewise-linear breakpoint tables used for profiles and time series."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class PiecewiseLinear:
    """Piecewise-linear function given by breakpoints ``(s_k, v_k)``.

    Outside ``[s_0, s_last]`` the function is held constant at the end values.
    """

    __slots__ = ("s", "v")

    def __init__(self, points: Iterable[Sequence[float]]):
        pts = np.asarray(list(points), dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise ValueError("breakpoint table must be a non-empty list of [s, value] pairs")
        s, v = pts[:, 0].copy(), pts[:, 1].copy()
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(v))):
            raise ValueError("breakpoint table contains non-finite numbers")
        if np.any(np.diff(s) <= 0.0):
            raise ValueError("breakpoint abscissae must be strictly increasing")
        s.setflags(write=False)
        v.setflags(write=False)
        self.s = s
        self.v = v

    @classmethod
    def constant(cls, value: float) -> PiecewiseLinear:
        return cls([[0.0, value]])

    def __call__(self, x):
        out = np.interp(x, self.s, self.v)
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self) -> str:
        return f"PiecewiseLinear({self.points()!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, PiecewiseLinear):
            return NotImplemented
        return np.array_equal(self.s, other.s) and np.array_equal(self.v, other.v)

    def points(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.s, self.v)]

    def min(self) -> float:
        return float(self.v.min())

    def breakpoints_in(self, a: float, b: float) -> np.ndarray:
        inside = self.s[(self.s > a) & (self.s < b)]
        return np.concatenate(([a], inside, [b]))

    def integral(self, a: float, b: float) -> float:
        """Exact integral over ``[a, b]`` (trapezoid rule on the breakpoints)."""
        if b < a:
            return -self.integral(b, a)
        if b == a:
            return 0.0
        xs = self.breakpoints_in(a, b)
        ys = np.interp(xs, self.s, self.v)
        return float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)))

    def mean(self, a: float, b: float) -> float:
        """Average value over ``[a, b]``; the point value when ``a == b``."""
        if b == a:
            return self(a)
        return self.integral(a, b) / (b - a)

    def shifted(self, offset: float) -> PiecewiseLinear:
        return PiecewiseLinear(np.column_stack([self.s, self.v + offset]))


def merged_breakpoints(series: Iterable[PiecewiseLinear], a: float, b: float) -> np.ndarray:
    """Sorted union of the breakpoints of ``series`` inside ``[a, b]``, including the ends.

    The difference of two piecewise-linear functions is linear between consecutive
    entries, so sign checks on this grid are exact.
    """
    pts = [np.array([a, b])]
    for pl in series:
        pts.append(pl.s[(pl.s > a) & (pl.s < b)])
    return np.unique(np.concatenate(pts))


def negative_intervals(diff_at: np.ndarray, grid: np.ndarray, tol: float = 0.0) -> list[tuple[float, float]]:
    """Intervals where a piecewise-linear function (sampled exactly at ``grid``) is below ``-tol``."""
    below = diff_at < -tol
    intervals: list[tuple[float, float]] = []
    start = None
    for k in range(len(grid)):
        if below[k] and start is None:
            if k == 0:
                start = float(grid[0])
            else:
                d0, d1 = diff_at[k - 1], diff_at[k]
                w = (d0 + tol) / (d0 - d1)
                start = float(grid[k - 1] + w * (grid[k] - grid[k - 1]))
        elif not below[k] and start is not None:
            d0, d1 = diff_at[k - 1], diff_at[k]
            w = (d0 + tol) / (d0 - d1)
            intervals.append((start, float(grid[k - 1] + w * (grid[k] - grid[k - 1]))))
            start = None
    if start is not None:
        intervals.append((start, float(grid[-1])))
    return intervals

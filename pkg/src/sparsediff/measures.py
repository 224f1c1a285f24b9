"""Finite empirical measures."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted atoms.

    ``atoms`` is either a list of hashable labels or a 2-D array whose rows are
    points of R^d.  Masses are nonnegative and sum to one.
    """

    atoms: object
    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.ndim != 1 or np.any(m < 0) or (m.size and abs(m.sum() - 1.0) > 1e-9):
            raise ValueError("masses must be a nonnegative probability vector")

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise ValueError("empty sample")
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @classmethod
    def from_labels(cls, labels) -> "EmpiricalMeasure":
        """Group equal labels; atoms are returned in sorted order."""
        c = Counter(labels)
        if not c:
            raise ValueError("empty sample")
        keys = sorted(c)
        tot = sum(c.values())
        return cls(keys, np.array([c[k] / tot for k in keys]))

    def __len__(self):
        return len(self.masses)

    def as_dict(self) -> dict:
        return dict(zip(self.atoms, self.masses.tolist()))

    def expect(self, h) -> float:
        """Integral of a function applied row-wise to array atoms."""
        vals = np.asarray(h(self.atoms), dtype=float)
        return float(np.dot(vals, self.masses))

    def marginal(self, j: int) -> np.ndarray:
        return np.asarray(self.atoms)[:, j]


def tv_distance(mu: EmpiricalMeasure | dict, nu: EmpiricalMeasure | dict) -> float:
    """Total variation between two measures with hashable atoms."""
    a = mu.as_dict() if isinstance(mu, EmpiricalMeasure) else dict(mu)
    b = nu.as_dict() if isinstance(nu, EmpiricalMeasure) else dict(nu)
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)

"""Global path tracking: nearest path configuration, curvature- and
speed-adaptive look-ahead, and the PD tracking law."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kdtree import KDTree


@dataclass(frozen=True)
class TrackerParams:
    """Look-ahead and PD gains.  ``k_c = None`` means ``-s_base / pi``."""

    k_v: float = 5.0
    k_c: float = None
    s_base: int = 5
    s_min: int = 1
    s_max: int = 10
    K_P: float = 200.0
    K_D: float = 100.0

    def __post_init__(self):
        if self.s_min < 0 or self.s_min > self.s_max:
            raise ValueError("look-ahead bounds need 0 <= s_min <= s_max")
        if np.any(np.asarray(self.K_P) < 0) or np.any(np.asarray(self.K_D) < 0):
            raise ValueError("PD gains must be nonnegative")

    @property
    def curvature_gain(self):
        return -self.s_base / math.pi if self.k_c is None else self.k_c


class PathIndex:
    """KD-tree over the configurations of a timed path."""

    def __init__(self, configs):
        self.configs = np.atleast_2d(np.asarray(configs, dtype=float))
        self._tree = KDTree(self.configs)

    def __len__(self):
        return len(self.configs)


def nearest_config(index, q):
    """``(q_x, x)``: the closest path configuration (lowest index on ties)."""
    x, _ = index._tree.nearest(q)
    return index.configs[x], x


def path_curvature(configs, x):
    """Turning angle between the segments entering and leaving ``q_x``."""
    N = len(configs)
    if x <= 0 or x >= N - 1:
        return 0.0
    a = configs[x] - configs[x - 1]
    b = configs[x + 1] - configs[x]
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-15 or nb < 1e-15:
        return 0.0
    return float(np.arccos(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)))


def lookahead_step(N, x, speed, kappa, params):
    """Look-ahead length ``s`` for a path of ``N`` configs at index ``x``."""
    if x >= N - 1:
        return 0
    s = int(params.k_v * speed + params.curvature_gain * kappa + params.s_base)
    s_max = min(params.s_max, N - 1 - x)
    return max(min(s, s_max), min(params.s_min, s_max))


def lookahead(configs, q, qd, params, index=None):
    """Next target configuration on the path; returns ``(q_next, x, s)``."""
    configs = np.asarray(configs)
    if index is None:
        index = PathIndex(configs)
    _, x = nearest_config(index, q)
    kappa = path_curvature(configs, x)
    s = lookahead_step(len(configs), x, float(np.linalg.norm(qd)), kappa, params)
    return configs[x + s], x, s


def pd_velocity(q_next, q, qd_e, params):
    """``K_P (q_next - q) + K_D qd_e``."""
    return params.K_P * (np.asarray(q_next) - q) + params.K_D * np.asarray(qd_e)


def tracking_velocity(q_next, q, qd_ref, params):
    """PD law with the error derivative taken at the commanded velocity.

    Writing the error rate as ``qd_ref - qd`` and solving
    ``qd = K_P e + K_D (qd_ref - qd)`` for ``qd`` gives a law that stays
    stable at any sampling period, unlike a backward difference of ``e``.
    ``qd_ref`` is the path's own velocity at the look-ahead target.
    """
    return (params.K_P * (np.asarray(q_next) - q) + params.K_D * np.asarray(qd_ref)) / (1.0 + params.K_D)


class ErrorRate:
    """Backward difference of the tracking error (zero on the first call)."""

    def __init__(self, dt):
        self.dt = dt
        self._prev = None

    def __call__(self, e):
        e = np.asarray(e, dtype=float)
        rate = np.zeros_like(e) if self._prev is None else (e - self._prev) / self.dt
        self._prev = e.copy()
        return rate

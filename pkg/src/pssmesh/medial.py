"""Shrinking-ball medial axis transform over oriented point sets.

One ball per input point: start with a huge radius, repeatedly find the
nearest other point inside the ball and shrink so the ball stays tangent at
the surface point, until the radius settles. Interior balls are pushed along
-normal, exterior along +normal. Balls whose final touching pair subtends a
small angle at the center are noise (near-tangent contacts) and get discarded,
keeping the last accepted radius.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


@dataclass
class MedialBalls:
    """Per-point shrinking-ball results (arrays indexed by surface point)."""

    orientation: str                   # "interior" or "exterior"
    centers: np.ndarray                # (N, 3)
    radii: np.ndarray                  # (N,)
    touch_index: np.ndarray            # (N,) index of touching point, -1 = none
    converged: np.ndarray              # (N,) bool
    discarded: np.ndarray              # (N,) bool, denoised away
    surface_index: np.ndarray = field(default=None)   # (N,) original ids

    def __post_init__(self):
        if self.surface_index is None:
            self.surface_index = np.arange(len(self.radii), dtype=np.int64)

    @property
    def kept(self) -> np.ndarray:
        """Balls that converged and survived denoising."""
        return self.converged & ~self.discarded

    def __len__(self):
        return len(self.radii)


def shrinking_ball_transform(points: np.ndarray, normals: np.ndarray,
                             orientation: str = "interior",
                             init_radius: float | None = None,
                             denoise_angle: float = 30.0,
                             max_iter: int = 30,
                             rel_tol: float = 1e-4) -> MedialBalls:
    """Medial ball per oriented point; see module docstring.

    ``init_radius`` defaults to the bounding-box diagonal of ``points``.
    ``denoise_angle`` is in degrees. Normals must be unit length.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    if len(points) != len(normals):
        raise ValueError("points and normals must have equal length")
    n = len(points)
    if orientation not in ("interior", "exterior"):
        raise ValueError(f"orientation must be interior or exterior, got {orientation!r}")
    if n == 0:
        z3 = np.zeros((0, 3))
        z = np.zeros(0)
        return MedialBalls(orientation, z3, z, np.zeros(0, dtype=np.int64),
                           np.zeros(0, dtype=bool), np.zeros(0, dtype=bool))
    lens = np.linalg.norm(normals, axis=1)
    if np.abs(lens - 1.0).max() > 1e-6:
        bad = int(np.argmax(np.abs(lens - 1.0)))
        raise ValueError(f"normal {bad} is not unit length (|n|={lens[bad]:.6f})")

    if init_radius is None:
        lo, hi = points.min(axis=0), points.max(axis=0)
        init_radius = float(np.linalg.norm(hi - lo))
        if init_radius <= 0:
            init_radius = 1.0
    direction = normals if orientation == "exterior" else -normals
    cos_limit = np.cos(np.deg2rad(denoise_angle))

    tree = cKDTree(points)
    radii = np.full(n, float(init_radius))
    touch = np.full(n, -1, dtype=np.int64)
    converged = np.zeros(n, dtype=bool)
    discarded = np.zeros(n, dtype=bool)
    active = np.arange(n)

    for _ in range(max_iter):
        if len(active) == 0:
            break
        p = points[active]
        m = direction[active]
        r = radii[active]
        c = p + r[:, None] * m
        dist, idx = tree.query(c, k=2)
        # drop the surface point itself from the candidates
        self_hit = idx[:, 0] == active
        q_idx = np.where(self_hit, idx[:, 1], idx[:, 0])
        q_dist = np.where(self_hit, dist[:, 1], dist[:, 0])

        no_neighbor = ~np.isfinite(q_dist) | (q_idx >= n)
        empty = q_dist >= r * (1.0 - 1e-9)
        stop_conv = empty & ~no_neighbor

        q = points[np.clip(q_idx, 0, n - 1)]
        pq = q - p
        denom = 2.0 * (pq * m).sum(axis=1)
        bad_side = denom <= 1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            r_new = (pq * pq).sum(axis=1) / denom
        r_new = np.where(np.isfinite(r_new), r_new, 0.0)   # masked rows only

        c_new = p + r_new[:, None] * m
        v1 = p - c_new
        v2 = q - c_new
        nv = np.linalg.norm(v1, axis=1) * np.linalg.norm(v2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cosang = (v1 * v2).sum(axis=1) / np.where(nv > 0, nv, 1.0)
        noisy = cosang > cos_limit          # separation angle below threshold

        live = ~(no_neighbor | stop_conv | bad_side)
        converged[active[stop_conv | (bad_side & ~no_neighbor)]] = True
        discard_now = live & noisy
        discarded[active[discard_now]] = True
        converged[active[discard_now]] = True    # terminated on purpose

        accept = live & ~noisy
        acc_ids = active[accept]
        settled = np.abs(r_new[accept] - r[accept]) < rel_tol * r[accept]
        radii[acc_ids] = r_new[accept]
        touch[acc_ids] = q_idx[accept]
        converged[acc_ids[settled]] = True

        active = acc_ids[~settled]

    centers = points + radii[:, None] * direction
    return MedialBalls(orientation, centers, radii, touch, converged, discarded)

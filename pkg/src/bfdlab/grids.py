"""Velocity-space lattice and sphere quadrature.

Every integral in the package is built from two rules: a midpoint rule on a
cell-centered cubic lattice (volume integrals over the truncated velocity
box) and a product Gauss rule on the unit sphere (the angular measure of the
collision integral).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VelocityGrid:
    """Cell-centered cubic lattice on [-L, L]^3.

    Nodes sit at cell centers, v = -L + (i + 1/2) h per axis with
    h = 2L / N, so the lattice is symmetric about the origin and contains
    no node at v = 0 (N is even).  The cell quadrature weight is h^3.
    """

    half_width: float
    points_per_axis: int
    spacing: float
    axis: np.ndarray     # (N,) per-axis node coordinates
    nodes: np.ndarray    # (N^3, 3) node coordinates, C-order over (ix, iy, iz)

    @property
    def cell_weight(self) -> float:
        return self.spacing ** 3

    @property
    def size(self) -> int:
        return self.points_per_axis ** 3

    def node_index(self, ix: int, iy: int, iz: int) -> int:
        n = self.points_per_axis
        return (ix * n + iy) * n + iz

    def squared_speeds(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.nodes, self.nodes)


def build_grid(half_width: float, points_per_axis: int) -> VelocityGrid:
    """Build the truncated velocity lattice.

    Rejects odd or tiny axis counts (the midpoint lattice needs an even N to
    stay origin-symmetric) and non-finite or non-positive half widths.
    """
    if not np.isfinite(half_width) or half_width <= 0.0:
        raise ValueError(f"half_width must be finite and positive, got {half_width}")
    n = int(points_per_axis)
    if n != points_per_axis or n < 4:
        raise ValueError(f"points_per_axis must be an integer >= 4, got {points_per_axis}")
    if n % 2 != 0:
        raise ValueError(f"points_per_axis must be even, got {n}")
    h = 2.0 * half_width / n
    axis = -half_width + (np.arange(n) + 0.5) * h
    xs, ys, zs = np.meshgrid(axis, axis, axis, indexing="ij")
    nodes = np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])
    return VelocityGrid(float(half_width), n, h, axis, nodes)


def integrate_grid(values: np.ndarray, grid: VelocityGrid) -> float:
    """Midpoint-rule volume integral of node samples."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.size,):
        raise ValueError(f"expected {grid.size} node values, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("node values must be finite")
    return float(values.sum() * grid.cell_weight)


def trilinear_sample(values: np.ndarray, grid: VelocityGrid, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of node samples at arbitrary points.

    Points outside the node hull [-L + h/2, L - h/2]^3 return 0, the
    compact-support convention for the truncated distribution.  Accepts a
    single point (3,) or a batch (..., 3).
    """
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    pts = np.atleast_2d(points)
    if pts.shape[-1] != 3:
        raise ValueError("points must have trailing dimension 3")
    if not np.all(np.isfinite(pts)):
        raise ValueError("sample points must be finite")
    values = np.asarray(values, dtype=float).reshape(
        grid.points_per_axis, grid.points_per_axis, grid.points_per_axis
    )
    n = grid.points_per_axis
    u = (pts + grid.half_width) / grid.spacing - 0.5
    inside = np.all((u >= 0.0) & (u <= n - 1.0), axis=-1)
    uc = np.clip(u, 0.0, n - 1.0)
    i0 = np.minimum(uc.astype(np.int64), n - 2)
    t = uc - i0
    ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]

    def corner(dx, dy, dz):
        return values[ix + dx, iy + dy, iz + dz]

    c00 = corner(0, 0, 0) * (1 - tx) + corner(1, 0, 0) * tx
    c10 = corner(0, 1, 0) * (1 - tx) + corner(1, 1, 0) * tx
    c01 = corner(0, 0, 1) * (1 - tx) + corner(1, 0, 1) * tx
    c11 = corner(0, 1, 1) * (1 - tx) + corner(1, 1, 1) * tx
    c0 = c00 * (1 - ty) + c10 * ty
    c1 = c01 * (1 - ty) + c11 * ty
    out = (c0 * (1 - tz) + c1 * tz) * inside
    return float(out[0]) if single else out.reshape(points.shape[:-1])


@dataclass(frozen=True)
class SphereQuadrature:
    """Quadrature rule for the area measure on the unit sphere.

    `order` is the guaranteed polynomial exactness degree: every spherical
    polynomial of total degree <= order integrates exactly (up to roundoff).
    Weights are positive and sum to 4 pi.
    """

    directions: np.ndarray  # (K, 3) unit vectors
    weights: np.ndarray     # (K,) positive weights
    order: int

    @property
    def size(self) -> int:
        return self.weights.size


# Fixed generic rotation applied to every sphere rule.  Axis-aligned
# direction components (exact 0 or 1) lock the trilinear interpolation of
# post-collision points onto half-lattice phases for entire pair classes,
# and those coherent errors stall the h-convergence of the collision sums;
# a detuned frame makes the phases equidistribute.  Exactness and the
# antipodal pairing are rotation-invariant.
_DETUNE_ANGLES = (0.5810162186537823, 1.2296557356346824, 2.3999632297286533)


def _detune_rotation() -> np.ndarray:
    a, b, c = _DETUNE_ANGLES
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    rz1 = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rz2 = np.array([[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]])
    return rz2 @ ry @ rz1


def build_sphere_quadrature(order: int) -> SphereQuadrature:
    """Product Gauss rule in (cos(theta), phi) with exactness degree >= order.

    Uses n Gauss-Legendre nodes in cos(theta) and 2n uniform azimuthal
    nodes, n = ceil((order + 1) / 2); the resulting rule is exact for all
    spherical polynomials of degree 2n - 1.  The node frame is detuned from
    the coordinate axes (see _detune_rotation).
    """
    m = int(order)
    if m != order or m < 1:
        raise ValueError(f"unsupported sphere quadrature order {order!r}; need an integer >= 1")
    n_polar = (m + 2) // 2
    mu, wmu = np.polynomial.legendre.leggauss(n_polar)
    n_azim = 2 * n_polar
    phi = 2.0 * np.pi * np.arange(n_azim) / n_azim
    wphi = 2.0 * np.pi / n_azim
    s = np.sqrt(1.0 - mu**2)
    dirs = np.empty((n_polar * n_azim, 3))
    wts = np.empty(n_polar * n_azim)
    k = 0
    for i in range(n_polar):
        for j in range(n_azim):
            dirs[k, 0] = s[i] * np.cos(phi[j])
            dirs[k, 1] = s[i] * np.sin(phi[j])
            dirs[k, 2] = mu[i]
            wts[k] = wmu[i] * wphi
            k += 1
    dirs = dirs @ _detune_rotation().T
    return SphereQuadrature(dirs, wts, 2 * n_polar - 1)


def antipodal_half(sphere: SphereQuadrature):
    """Split an antipodally symmetric rule into one hemisphere.

    Returns (directions, weights) covering half the nodes when every node
    has its antipode in the rule with equal weight, else None.  Collision
    sums use the half set and fold in the mirrored direction analytically.
    """
    dirs, wts = sphere.directions, sphere.weights
    order = np.lexsort((dirs[:, 2], dirs[:, 1], dirs[:, 0]))
    key = np.round(dirs[order] * 1e12).astype(np.int64)
    anti = np.round(-dirs * 1e12).astype(np.int64)
    # locate each node's antipode by binary search in the sorted key table
    idx = np.empty(sphere.size, dtype=np.int64)
    for i in range(sphere.size):
        lo = np.searchsorted(key[:, 0], anti[i, 0], side="left")
        hi = np.searchsorted(key[:, 0], anti[i, 0], side="right")
        found = -1
        for j in range(lo, hi):
            if key[j, 1] == anti[i, 1] and key[j, 2] == anti[i, 2]:
                found = order[j]
                break
        if found < 0:
            return None
        idx[i] = found
    if not np.allclose(wts, wts[idx], rtol=1e-13, atol=0.0):
        return None
    keep = []
    for i in range(sphere.size):
        d = dirs[i]
        if d[2] > 0 or (d[2] == 0 and (d[0] > 0 or (d[0] == 0 and d[1] > 0))):
            keep.append(i)
    if 2 * len(keep) != sphere.size:
        return None
    keep = np.array(keep, dtype=np.int64)
    return np.ascontiguousarray(dirs[keep]), np.ascontiguousarray(wts[keep])

"""Ellipsoid calculus against unions of half-spaces.

An ellipsoid is written as ``{x : (x - q)^T S^{-1} (x - q) <= 1}`` with
center ``q`` and a symmetric positive definite shape matrix ``S``; the
principal semi-axes are the square roots of the eigenvalues of ``S``.
An unsafe region is a union of closed half-spaces ``{x : c . x >= b}``
(the unsafe side is where the normal points).

The operations here are exactly the ones an online safety check needs:
signed clearance between an ellipsoid and a hyperplane, first-violation
tests against a union of half-spaces, and the minimum-volume ellipsoid
covering the unsafe cap cut off a given ellipsoid, which drives the
severity metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CenterUnsafeError, DimensionError
from .linalg import as_vector, check_symmetric, is_positive_definite

__all__ = [
    "Ellipsoid",
    "HalfSpace",
    "UnsafeSet",
    "ContainedMarker",
    "EmptyMarker",
    "CONTAINED",
    "EMPTY",
    "distance_to_hyperplane",
    "intersects_unsafe",
    "min_volume_intersection",
    "volume",
    "cap_shrink_factor",
]

# Caps with |alpha| within this margin of 1 are treated as the full
# ellipsoid / the empty set; the covering formula degenerates there.
_ALPHA_EDGE = 1e-12


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """Ellipsoid with center ``center`` and SPD shape matrix ``shape``."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        c = as_vector(self.center, name="center")
        s = check_symmetric(self.shape, name="shape")
        if s.shape[0] != c.shape[0]:
            raise DimensionError(
                f"center has dimension {c.shape[0]} but shape matrix is {s.shape}"
            )
        if not is_positive_definite(s):
            raise DimensionError("shape matrix must be positive definite")
        c.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", s)

    @classmethod
    def trusted(cls, center: np.ndarray, shape: np.ndarray) -> "Ellipsoid":
        """Constant-time constructor for already-validated data.

        Skips the SPD check and stores the arrays by reference; callers
        own the guarantee that ``shape`` is symmetric positive definite
        and that neither array will be mutated.
        """
        e = object.__new__(cls)
        c = np.asarray(center, dtype=float)
        if c.flags.writeable:
            c.flags.writeable = False
        object.__setattr__(e, "center", c)
        object.__setattr__(e, "shape", shape)
        return e

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def support(self, direction: np.ndarray) -> float:
        """Support value ``max {d . x : x in E}`` for a direction d."""
        d = as_vector(direction, self.dim, "direction")
        return float(d @ self.center) + math.sqrt(max(float(d @ self.shape @ d), 0.0))

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of points (rows) inside the ellipsoid."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        diff = p - self.center
        q = np.einsum("ij,ij->i", diff, np.linalg.solve(self.shape, diff.T).T)
        return q <= 1.0 + tol


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Closed half-space ``{x : normal . x >= offset}`` (the unsafe side)."""

    normal: np.ndarray
    offset: float
    name: str = ""

    def __post_init__(self):
        nvec = as_vector(self.normal, name="normal")
        norm = float(np.linalg.norm(nvec))
        if norm <= 1e-12:
            raise DimensionError("half-space normal must be non-zero")
        if not np.isfinite(self.offset):
            raise DimensionError("half-space offset must be finite")
        nvec.flags.writeable = False
        object.__setattr__(self, "normal", nvec)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.normal))

    def margin(self, x: np.ndarray) -> float:
        """``normal . x - offset``; >= 0 means x is on the unsafe side."""
        return float(self.normal @ np.asarray(x, dtype=float)) - self.offset


@dataclass(frozen=True, eq=False)
class UnsafeSet:
    """Union of half-spaces sharing one state dimension.  May be empty."""

    half_spaces: tuple[HalfSpace, ...]
    # Stacked views used by vectorised checks, derived in __post_init__.
    normals: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)
    norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        hs = tuple(self.half_spaces)
        if hs:
            dims = {h.dim for h in hs}
            if len(dims) != 1:
                raise DimensionError(f"half-spaces mix dimensions {sorted(dims)}")
            normals = np.vstack([h.normal for h in hs])
            offsets = np.array([h.offset for h in hs])
        else:
            normals = np.zeros((0, 0))
            offsets = np.zeros(0)
        norms = np.linalg.norm(normals, axis=1) if hs else np.zeros(0)
        for arr in (normals, offsets, norms):
            arr.flags.writeable = False
        object.__setattr__(self, "half_spaces", hs)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "norms", norms)

    def __len__(self) -> int:
        return len(self.half_spaces)

    def __iter__(self):
        return iter(self.half_spaces)

    @property
    def dim(self) -> int | None:
        return self.half_spaces[0].dim if self.half_spaces else None

    def member_index(self, x: np.ndarray) -> int | None:
        """Index of the first half-space containing x, or None."""
        if not self.half_spaces:
            return None
        x = np.asarray(x, dtype=float)
        bad = np.flatnonzero(self.normals @ x - self.offsets >= 0.0)
        return int(bad[0]) if bad.size else None


class ContainedMarker:
    """The ellipsoid lies entirely inside the half-space."""

    def __repr__(self):  # pragma: no cover
        return "CONTAINED"


class EmptyMarker:
    """The ellipsoid does not meet the half-space at all."""

    def __repr__(self):  # pragma: no cover
        return "EMPTY"


CONTAINED = ContainedMarker()
EMPTY = EmptyMarker()


def distance_to_hyperplane(e: Ellipsoid, h: HalfSpace) -> float:
    """Signed clearance between an ellipsoid and the hyperplane
    ``{x : normal . x = offset}``.

    Computed from the support function of the ellipsoid:

        d = (|offset - normal . center| - sqrt(normal^T S normal)) / ||normal||

    When the center is on the safe side (``normal . center < offset``),
    ``d <= 0`` exactly when the ellipsoid touches or crosses into the
    half-space.  Callers are expected to check the center side first;
    for a center on the unsafe side the value is the clearance to the
    boundary hyperplane, not to the half-space.
    """
    if e.dim != h.dim:
        raise DimensionError(f"ellipsoid dim {e.dim} != half-space dim {h.dim}")
    c = h.normal
    reach = math.sqrt(max(float(c @ e.shape @ c), 0.0))
    return (abs(h.offset - float(c @ e.center)) - reach) / h.norm


def intersects_unsafe(e: Ellipsoid, u: UnsafeSet) -> tuple[bool, int | None]:
    """First half-space of ``u`` the ellipsoid reaches, if any.

    Returns ``(True, i)`` for the first index ``i`` (in declaration
    order) whose clearance is <= 0, else ``(False, None)``.  Empty
    unsafe sets never intersect.

    Raises:
        CenterUnsafeError: if the center already lies in ``u``; the
            clearance convention above is only meaningful for safe
            centers, so this is a contract violation by the caller.
    """
    if not len(u):
        return (False, None)
    if u.dim != e.dim:
        raise DimensionError(f"ellipsoid dim {e.dim} != unsafe-set dim {u.dim}")
    inside = u.member_index(e.center)
    if inside is not None:
        raise CenterUnsafeError(
            f"ellipsoid center is inside unsafe half-space {inside}", inside
        )
    for i, h in enumerate(u):
        if distance_to_hyperplane(e, h) <= 0.0:
            return (True, i)
    return (False, None)


def _cap_alpha(e: Ellipsoid, h: HalfSpace) -> tuple[float, float]:
    """Normalised cut depth alpha and the support length sqrt(c^T S c)."""
    c = h.normal
    reach = math.sqrt(max(float(c @ e.shape @ c), 0.0))
    alpha = (float(c @ e.center) - h.offset) / reach
    return alpha, reach


def min_volume_intersection(e: Ellipsoid, h: HalfSpace):
    """Minimum-volume ellipsoid covering the unsafe cap ``e ∩ h``.

    With ``alpha = (normal . center - offset) / sqrt(normal^T S normal)``:

    * ``alpha >= 1``: the ellipsoid lies inside the half-space, return
      :data:`CONTAINED`;
    * ``alpha <= -1``: the intersection is empty, return :data:`EMPTY`;
    * otherwise return the covering ellipsoid of the cap on the unsafe
      side ``normal . x >= offset``.

    For shallow cuts (``alpha > 1/n``) the original ellipsoid is already
    the minimum-volume cover of the cap and is returned unchanged, so
    the cover never has larger determinant than ``e``.  The
    one-dimensional case reduces to exact interval arithmetic.
    """
    if e.dim != h.dim:
        raise DimensionError(f"ellipsoid dim {e.dim} != half-space dim {h.dim}")
    n = e.dim
    alpha, reach = _cap_alpha(e, h)
    if alpha >= 1.0 - _ALPHA_EDGE:
        return CONTAINED
    if alpha <= -1.0 + _ALPHA_EDGE:
        return EMPTY

    if n == 1:
        c0 = float(h.normal[0])
        r = math.sqrt(float(e.shape[0, 0]))
        lo, hi = float(e.center[0]) - r, float(e.center[0]) + r
        bound = h.offset / c0
        lo, hi = (max(lo, bound), hi) if c0 > 0 else (lo, min(hi, bound))
        half = 0.5 * (hi - lo)
        return Ellipsoid(np.array([0.5 * (lo + hi)]), np.array([[half * half]]))

    if alpha > 1.0 / n:
        # Shallow cut: the cap occupies all but a thin sliver, no
        # smaller covering ellipsoid exists.
        return Ellipsoid(e.center, e.shape)

    s_cbar = e.shape @ (h.normal / reach)
    q = e.center + ((1.0 - n * alpha) / (n + 1.0)) * s_cbar
    coeff = (2.0 * (1.0 - n * alpha)) / ((n + 1.0) * (1.0 - alpha))
    core = e.shape - coeff * np.outer(s_cbar, s_cbar)
    scale = (n * n * (1.0 - alpha * alpha)) / (n * n - 1.0)
    return Ellipsoid(q, scale * core)


def cap_shrink_factor(alpha: float, n: int) -> float:
    """det(cover of cap) / det(original) as a function of cut depth.

    Closed form for the covering ellipsoid returned by
    :func:`min_volume_intersection` in dimension ``n >= 2``; clamped to
    [0, 1] at the edges and equal to 1 for shallow cuts.
    """
    if alpha >= 1.0:
        return 1.0
    if alpha <= -1.0:
        return 0.0
    if n == 1:
        half = 0.5 * (1.0 + min(alpha, 1.0))
        return half * half
    if alpha > 1.0 / n:
        return 1.0
    base = (n * n * (1.0 - alpha * alpha)) / (n * n - 1.0)
    tail = (n - 1.0) * (1.0 + alpha) / ((n + 1.0) * (1.0 - alpha))
    return (base**n) * tail


def volume(e: Ellipsoid) -> float:
    """Lebesgue volume: ``vol(unit ball in R^n) * sqrt(det S)``."""
    n = e.dim
    sign, logdet = np.linalg.slogdet(e.shape)
    if sign <= 0:
        raise DimensionError("shape matrix must have positive determinant")
    unit = math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)
    return unit * math.exp(0.5 * logdet)

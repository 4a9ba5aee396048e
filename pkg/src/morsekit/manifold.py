"""Implicit submanifolds of R^n given by regular constraint equations.

A manifold is the zero set of n-d constraint fields inside an axis-aligned
box.  Points are accepted as "on the manifold" when every constraint residual
is below a projection tolerance and the constraint Jacobian has smallest
singular value at least ``regularity_tol`` (so tangent spaces and charts are
well defined).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, ManifoldFileError, NotRegularPoint
from .expressions import Hinge3, Node, ScalarField

__all__ = [
    "ImplicitManifold",
    "PointOnM",
    "eval_constraints",
    "tangent_basis",
    "tangent_bases",
    "project_to_manifold",
    "sample_points",
    "load_manifold",
    "parse_manifold_text",
    "manifold_to_text",
    "coords_array",
]

DEFAULT_REGULARITY_TOL = 1e-6
DEFAULT_PROJECTION_TOL = 1e-10


@dataclass
class PointOnM:
    """A concrete witness of a point on the manifold."""

    coords: np.ndarray
    residual: float

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)


@dataclass
class ImplicitManifold:
    """A d-dimensional submanifold of R^n cut out by n-d constraints.

    Parameters
    ----------
    ambient_dim : int
        Dimension n of the ambient space.
    intrinsic_dim : int
        Dimension d of the manifold, 0 < d < n.
    constraints : list[ScalarField]
        The n-d constraint fields c_1..c_{n-d}; the manifold is their common
        zero set intersected with the domain box.
    domain : (n, 2) array
        Axis-aligned bounding box [lo_i, hi_i] containing the manifold.
    regularity_tol : float
        Minimum singular value of the constraint Jacobian accepted as a
        regular point.
    """

    ambient_dim: int
    intrinsic_dim: int
    constraints: list[ScalarField] = field(default_factory=list)
    domain: np.ndarray = None
    regularity_tol: float = DEFAULT_REGULARITY_TOL

    def __post_init__(self):
        n, d = self.ambient_dim, self.intrinsic_dim
        if not (0 < d < n):
            raise ValueError(f"need 0 < intrinsic_dim < ambient_dim, got d={d}, n={n}")
        if len(self.constraints) != n - d:
            raise ValueError(
                f"expected {n - d} constraints, got {len(self.constraints)}")
        for c in self.constraints:
            if c.ambient_dim != n:
                raise ValueError("constraint ambient dimension mismatch")
        self.domain = np.asarray(self.domain, dtype=float)
        if self.domain.shape != (n, 2):
            raise ValueError(f"domain must have shape ({n}, 2)")
        if np.any(self.domain[:, 1] <= self.domain[:, 0]):
            raise ValueError("domain box must have positive extent on every axis")
        if self.regularity_tol <= 0:
            raise ValueError("regularity_tol must be positive")

    # -- basic geometry -----------------------------------------------------

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.intrinsic_dim

    @property
    def box_diameter(self) -> float:
        return float(np.linalg.norm(self.domain[:, 1] - self.domain[:, 0]))

    def in_domain(self, pts: np.ndarray, slack: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(pts)
        pad = slack * np.maximum(1.0, np.abs(self.domain)).max()
        lo = self.domain[:, 0] - pad
        hi = self.domain[:, 1] + pad
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def constraint_jets(self, pts: np.ndarray, order: int = 2):
        """Stacked jets of all constraints: values (m, N), grads (m, N, n),
        Hessians (m, N, n, n).  Lower orders return None in the tail slots."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals, grads, hesses = [], [], []
        for c in self.constraints:
            if order >= 2:
                v, g, h = c.jet(pts)
            elif order == 1:
                v, g = c.value_grad(pts)
                h = None
            else:
                v, g, h = c.value(pts), None, None
            vals.append(v)
            grads.append(g)
            hesses.append(h)
        V = np.stack(vals)
        G = np.stack(grads) if order >= 1 else None
        H = np.stack(hesses) if order >= 2 else None
        return V, G, H

    def residuals(self, pts: np.ndarray) -> np.ndarray:
        V, _, _ = self.constraint_jets(pts, order=0)
        return np.max(np.abs(V), axis=0)


def coords_array(samples) -> np.ndarray:
    """Normalize a list of PointOnM or a raw array into an (N, n) array."""
    if isinstance(samples, np.ndarray):
        return np.atleast_2d(samples)
    return np.array([p.coords for p in samples], dtype=float)


# ---------------------------------------------------------------------------
# Constraint evaluation and tangent spaces
# ---------------------------------------------------------------------------

def eval_constraints(M: ImplicitManifold, x) -> np.ndarray:
    """Constraint values (c_1(x), ..., c_{n-d}(x)) at a single point."""
    x = np.asarray(x, dtype=float)
    out = np.array([c.evaluate_checked(x) for c in M.constraints])
    return out


def constraint_jacobians(M: ImplicitManifold, pts: np.ndarray) -> np.ndarray:
    """Batched constraint Jacobians, shape (N, m, n)."""
    _, G, _ = M.constraint_jets(pts, order=1)
    return np.swapaxes(G, 0, 1)


def tangent_bases(M: ImplicitManifold, pts: np.ndarray):
    """Orthonormal tangent bases at a batch of points.

    Returns (bases, min_sv): bases has shape (N, d, n) with orthonormal rows
    spanning the kernel of the constraint Jacobian, min_sv the smallest
    singular value of the Jacobian at each point.  No regularity check is
    applied here; callers decide how to treat near-singular points.
    """
    J = constraint_jacobians(M, pts)
    U, S, Vh = np.linalg.svd(J)
    bases = Vh[:, M.codim:, :]
    return bases, S[:, -1]


def tangent_basis(M: ImplicitManifold, x: PointOnM | np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space at one regular point, (d, n)."""
    coords = x.coords if isinstance(x, PointOnM) else np.asarray(x, dtype=float)
    bases, min_sv = tangent_bases(M, coords[None, :])
    if not np.isfinite(min_sv[0]) or min_sv[0] < M.regularity_tol:
        raise NotRegularPoint(
            f"constraint Jacobian nearly singular at {coords.tolist()}: "
            f"min singular value {min_sv[0]:.3e} < {M.regularity_tol:.3e}")
    return bases[0]


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

def _project_batch(M: ImplicitManifold, X0: np.ndarray,
                   projection_tol: float, max_iterations: int):
    """Gauss-Newton projection of a batch of points onto the constraint set.

    Returns (X, residual, converged, travel).  Points whose Jacobian becomes
    numerically singular or whose iterates leave the reals are frozen and
    reported as not converged.
    """
    X = np.array(X0, dtype=float)
    N = X.shape[0]
    res = np.full(N, np.inf)
    converged = np.zeros(N, dtype=bool)
    active = np.arange(N)

    for _ in range(max_iterations):
        Xa = X[active]
        V, G, _ = M.constraint_jets(Xa, order=1)
        C = V.T                      # (A, m)
        J = np.swapaxes(G, 0, 1)     # (A, m, n)
        ra = np.max(np.abs(C), axis=1)
        finite = np.all(np.isfinite(C), axis=1) & np.all(
            np.isfinite(J.reshape(len(active), -1)), axis=1)
        ra = np.where(finite, ra, np.inf)
        res[active] = ra

        done = ra <= projection_tol
        converged[active[done]] = True
        JJT = J @ np.swapaxes(J, 1, 2)
        det = np.linalg.det(JJT)
        step_ok = finite & ~done & np.isfinite(det) & (np.abs(det) > 0)
        if not np.any(step_ok):
            break
        lam = np.linalg.solve(JJT[step_ok], C[step_ok][..., None])[..., 0]
        step = -np.einsum("pmk,pm->pk", J[step_ok], lam)
        X[active[step_ok]] += step
        active = active[step_ok]
        if active.size == 0:
            break

    travel = np.linalg.norm(X - X0, axis=1)
    return X, res, converged, travel


def project_to_manifold(M: ImplicitManifold, x0, projection_tol: float =
                        DEFAULT_PROJECTION_TOL, max_iterations: int = 100
                        ) -> PointOnM:
    """Project an ambient point onto the manifold by Gauss-Newton iteration.

    The returned point satisfies ``max_j |c_j| <= projection_tol`` and lies
    within ``2 * ||c(x0)|| / regularity_tol`` of the start.  Points where the
    constraint gradient vanishes (for the circle: its center) have no stable
    projection direction and raise NotRegularPoint.
    """
    x0 = np.asarray(x0, dtype=float)
    c0 = np.array([c.value(x0) for c in M.constraints])
    X, res, converged, travel = _project_batch(
        M, x0[None, :], projection_tol, max_iterations)
    if not converged[0]:
        J = constraint_jacobians(M, x0[None, :])[0]
        sv = np.linalg.svd(J, compute_uv=False)
        if not np.all(np.isfinite(sv)) or sv[-1] < M.regularity_tol:
            raise NotRegularPoint(
                f"projection from {x0.tolist()} stalled at a point with "
                "singular constraint Jacobian")
        raise ConvergenceError(
            f"projection from {x0.tolist()} did not reach tolerance "
            f"{projection_tol:g} in {max_iterations} iterations "
            f"(residual {res[0]:.3e})")
    bound = 2.0 * float(np.linalg.norm(c0)) / M.regularity_tol
    if travel[0] > bound:
        raise ConvergenceError(
            f"projection travelled {travel[0]:.3e}, beyond the bound "
            f"{bound:.3e} for a well-posed projection")
    return PointOnM(X[0], float(res[0]))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

class _SpatialHash:
    """Uniform-grid hash for deterministic radius-based deduplication."""

    def __init__(self, radius: float):
        self.radius = radius
        self.cells: dict[tuple, list[np.ndarray]] = {}

    def _cell(self, x: np.ndarray) -> tuple:
        return tuple(np.floor(x / self.radius).astype(int))

    def try_insert(self, x: np.ndarray) -> bool:
        cell = self._cell(x)
        ndim = len(cell)
        for offset in np.ndindex(*(3,) * ndim):
            neighbor = tuple(c + o - 1 for c, o in zip(cell, offset))
            for y in self.cells.get(neighbor, ()):
                if np.linalg.norm(x - y) < self.radius:
                    return False
        self.cells.setdefault(cell, []).append(x)
        return True

    def near(self, x: np.ndarray) -> list[np.ndarray]:
        cell = self._cell(x)
        out = []
        for offset in np.ndindex(*(3,) * len(cell)):
            neighbor = tuple(c + o - 1 for c, o in zip(cell, offset))
            out.extend(self.cells.get(neighbor, ()))
        return out


def sample_points(M: ImplicitManifold, grid_density: int,
                  projection_tol: float = DEFAULT_PROJECTION_TOL
                  ) -> list[PointOnM]:
    """Project a grid_density^n lattice of the domain box onto the manifold.

    Converged points are kept when they stay inside the (slightly padded)
    box and within the projection travel bound; survivors are deduplicated
    in lattice order at spacing h/2 with h = box_diameter / grid_density.
    The result is deterministic and order-stable for fixed inputs.
    """
    if grid_density < 2:
        raise ValueError("grid_density must be at least 2")
    n = M.ambient_dim
    axes = [np.linspace(M.domain[i, 0], M.domain[i, 1], grid_density)
            for i in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    lattice = np.stack([m.reshape(-1) for m in mesh], axis=1)

    X, res, converged, travel = _project_batch(M, lattice, projection_tol, 100)
    C0 = np.stack([c.value(lattice) for c in M.constraints])
    norms0 = np.linalg.norm(C0, axis=0)
    bound = 2.0 * norms0 / M.regularity_tol
    keep = converged & (travel <= bound) & M.in_domain(X)

    h = M.box_diameter / grid_density
    dedupe = _SpatialHash(h / 2.0)
    out: list[PointOnM] = []
    for i in np.flatnonzero(keep):
        if dedupe.try_insert(X[i]):
            out.append(PointOnM(X[i], float(res[i])))
    return out


# ---------------------------------------------------------------------------
# Definition files
# ---------------------------------------------------------------------------

_CORE_KEYS = ("ambient_dim", "intrinsic_dim", "constraint", "domain",
              "regularity_tol")
_TOLERANCE_KEYS = ("projection_tol", "membership_threshold", "critical_tol",
                   "degenerate_tol", "dedupe_radius")


def _contains_hinge(node: Node) -> bool:
    if isinstance(node, Hinge3):
        return True
    return any(_contains_hinge(getattr(node, name))
               for name in getattr(node, "__dataclass_fields__", {})
               if isinstance(getattr(node, name), Node))


def parse_manifold_text(text: str):
    """Parse a manifold definition document.

    Returns (manifold, extra_tolerances).  The format is line-oriented
    ``key = value`` with ``#`` comments; ``constraint`` may repeat, in order;
    ``domain`` lists per-axis ``lo hi`` pairs separated by ``;``.
    """
    entries: list[tuple[str, str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ManifoldFileError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        entries.append((key, value, lineno))

    values = {k: v for k, v, _ in entries if k != "constraint"}
    for key, _, lineno in entries:
        if key not in _CORE_KEYS and key not in _TOLERANCE_KEYS:
            raise ManifoldFileError(f"line {lineno}: unknown key {key!r}")

    for required in ("ambient_dim", "intrinsic_dim", "domain"):
        if required not in values:
            raise ManifoldFileError(f"missing required key {required!r}")

    try:
        n = int(values["ambient_dim"])
        d = int(values["intrinsic_dim"])
    except ValueError as exc:
        raise ManifoldFileError(f"dimensions must be integers: {exc}") from exc

    constraints = []
    for key, value, lineno in entries:
        if key != "constraint":
            continue
        f = ScalarField.parse(value, n)
        if _contains_hinge(f.node):
            raise ManifoldFileError(
                f"line {lineno}: hinge3 is not allowed in constraints")
        constraints.append(f)

    groups = [g.strip() for g in values["domain"].split(";")]
    if len(groups) != n:
        raise ManifoldFileError(
            f"domain must give {n} 'lo hi' pairs separated by ';'")
    box = np.empty((n, 2))
    for i, g in enumerate(groups):
        parts = g.split()
        if len(parts) != 2:
            raise ManifoldFileError(f"domain axis {i + 1}: expected 'lo hi'")
        box[i] = [float(parts[0]), float(parts[1])]

    regularity_tol = float(values.get("regularity_tol", DEFAULT_REGULARITY_TOL))
    extras = {k: float(values[k]) for k in _TOLERANCE_KEYS if k in values}

    manifold = ImplicitManifold(
        ambient_dim=n, intrinsic_dim=d, constraints=constraints,
        domain=box, regularity_tol=regularity_tol)
    return manifold, extras


def load_manifold(path):
    return parse_manifold_text(Path(path).read_text(encoding="utf-8"))


def manifold_to_text(M: ImplicitManifold, extras: dict | None = None) -> str:
    lines = [
        f"ambient_dim = {M.ambient_dim}",
        f"intrinsic_dim = {M.intrinsic_dim}",
    ]
    for c in M.constraints:
        lines.append(f"constraint = {c.to_text()}")
    domain = " ; ".join(f"{repr(float(lo))} {repr(float(hi))}" for lo, hi in M.domain)
    lines.append(f"domain = {domain}")
    lines.append(f"regularity_tol = {repr(M.regularity_tol)}")
    for key, value in (extras or {}).items():
        lines.append(f"{key} = {repr(float(value))}")
    return "\n".join(lines) + "\n"

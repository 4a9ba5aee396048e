"""Built-in test manifolds with known global parametrizations.

These are the shapes the verification layer can cross-check independently:
the unit circle, the unit sphere, and a torus of radii R=2, r=1 whose
symmetry axis is the y-axis (so the ambient height x3 is the classical
four-critical-point example).  The torus is encoded by its polynomial
quartic form to keep constraints square-root free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .expressions import ScalarField
from .manifold import ImplicitManifold

__all__ = ["Parametrization", "LibraryManifold", "circle", "sphere", "torus",
           "LIBRARY", "library_by_constraints"]

TORUS_R = 2.0
TORUS_TUBE = 1.0


@dataclass(frozen=True)
class Parametrization:
    """A smooth map from a parameter box onto (part of) a manifold.

    ``mapping`` takes an (N, k) parameter array to (N, n) ambient points.
    ``periods`` holds the period of each parameter or None; ``param_box``
    is the (k, 2) sweep window, shrunk away from any parametric
    singularities (e.g. sphere poles).
    """

    name: str
    dims: int
    mapping: Callable[[np.ndarray], np.ndarray]
    periods: tuple
    param_box: np.ndarray

    def __call__(self, params: np.ndarray) -> np.ndarray:
        params = np.atleast_2d(np.asarray(params, dtype=float))
        return self.mapping(params)


@dataclass(frozen=True)
class LibraryManifold:
    name: str
    manifold: ImplicitManifold
    euler_characteristic: int
    parametrizations: tuple


def _circle_map(t: np.ndarray) -> np.ndarray:
    th = t[:, 0]
    return np.stack([np.cos(th), np.sin(th)], axis=1)


def _sphere_map_z(t: np.ndarray) -> np.ndarray:
    th, ph = t[:, 0], t[:, 1]
    s = np.sin(th)
    return np.stack([s * np.cos(ph), s * np.sin(ph), np.cos(th)], axis=1)


def _sphere_map_x(t: np.ndarray) -> np.ndarray:
    th, ph = t[:, 0], t[:, 1]
    s = np.sin(th)
    return np.stack([np.cos(th), s * np.cos(ph), s * np.sin(ph)], axis=1)


def _torus_map(t: np.ndarray) -> np.ndarray:
    th, ph = t[:, 0], t[:, 1]
    s = TORUS_R + TORUS_TUBE * np.cos(th)
    return np.stack([s * np.sin(ph), TORUS_TUBE * np.sin(th), s * np.cos(ph)],
                    axis=1)


def circle() -> LibraryManifold:
    M = ImplicitManifold(
        ambient_dim=2, intrinsic_dim=1,
        constraints=[ScalarField.parse("x1^2 + x2^2 - 1", 2)],
        domain=np.array([[-1.5, 1.5], [-1.5, 1.5]]))
    param = Parametrization(
        name="circle-angle", dims=1, mapping=_circle_map,
        periods=(2.0 * np.pi,),
        param_box=np.array([[0.0, 2.0 * np.pi]]))
    return LibraryManifold("circle", M, 0, (param,))


def sphere() -> LibraryManifold:
    M = ImplicitManifold(
        ambient_dim=3, intrinsic_dim=2,
        constraints=[ScalarField.parse("x1^2 + x2^2 + x3^2 - 1", 3)],
        domain=np.array([[-1.5, 1.5]] * 3))
    # two angle patches so every point is interior to a regular patch:
    # the z-axis poles of the first patch sit mid-patch in the second
    margin = 0.2
    patch_z = Parametrization(
        name="sphere-angles-zpole", dims=2, mapping=_sphere_map_z,
        periods=(None, 2.0 * np.pi),
        param_box=np.array([[margin, np.pi - margin], [0.0, 2.0 * np.pi]]))
    patch_x = Parametrization(
        name="sphere-angles-xpole", dims=2, mapping=_sphere_map_x,
        periods=(None, 2.0 * np.pi),
        param_box=np.array([[margin, np.pi - margin], [0.0, 2.0 * np.pi]]))
    return LibraryManifold("sphere", M, 2, (patch_z, patch_x))


def torus() -> LibraryManifold:
    # (x^2+y^2+z^2+R^2-r^2)^2 = 4R^2(x^2+z^2), axis along y
    M = ImplicitManifold(
        ambient_dim=3, intrinsic_dim=2,
        constraints=[ScalarField.parse(
            "(x1^2 + x2^2 + x3^2 + 3)^2 - 16*(x1^2 + x3^2)", 3)],
        domain=np.array([[-3.2, 3.2], [-1.2, 1.2], [-3.2, 3.2]]))
    param = Parametrization(
        name="torus-angles", dims=2, mapping=_torus_map,
        periods=(2.0 * np.pi, 2.0 * np.pi),
        param_box=np.array([[0.0, 2.0 * np.pi], [0.0, 2.0 * np.pi]]))
    return LibraryManifold("torus", M, 0, (param,))


LIBRARY = {"circle": circle, "sphere": sphere, "torus": torus}


def library_by_constraints(M: ImplicitManifold) -> LibraryManifold | None:
    """Identify a manifold as one of the built-in shapes by its canonical
    constraint text, enabling oracle cross-checks for file-loaded inputs."""
    key = tuple(c.to_text() for c in M.constraints)
    for factory in LIBRARY.values():
        lib = factory()
        if tuple(c.to_text() for c in lib.manifold.constraints) == key:
            return lib
    return None

"""Parameter vector, temperature-dependent conductivity and the linear Dirichlet lift."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ParameterError

# admissible box for (g_x, g_y, c); mu0 and mu1 are fixed
PARAM_BOUNDS = ((0.0, 1.0), (0.0, 1.0), (1.0, 2.0))
MU0 = 1.0
MU1 = 0.5


class ParameterVector(NamedTuple):
    gx: float
    gy: float
    c: float
    mu0: float = MU0
    mu1: float = MU1

    @classmethod
    def parse(cls, text: str) -> "ParameterVector":
        """Parse ``"gx,gy,c"`` or the full five-component form."""
        try:
            values = [float(v) for v in text.replace(" ", "").split(",") if v]
        except ValueError as exc:
            raise ParameterError(f"cannot parse parameter {text!r}") from exc
        if len(values) not in (3, 5):
            raise ParameterError(f"expected 3 or 5 components, got {len(values)}")
        return cls(*values)

    @classmethod
    def from_list(cls, values) -> "ParameterVector":
        return cls(*[float(v) for v in values])

    def to_list(self) -> list[float]:
        return [float(v) for v in self]

    @property
    def gradient(self) -> np.ndarray:
        return np.array([self.gx, self.gy])

    def in_domain(self, tol: float = 1e-12) -> bool:
        box = all(lo - tol <= v <= hi + tol for v, (lo, hi) in zip(self[:3], PARAM_BOUNDS))
        return box and abs(self.mu0 - MU0) <= tol and abs(self.mu1 - MU1) <= tol

    def check_domain(self) -> "ParameterVector":
        if not self.in_domain():
            raise ParameterError(f"parameter {self.to_list()} outside the admissible domain")
        return self

    def check_physical(self) -> "ParameterVector":
        """Weaker check used by the solvers: finite values, ``c >= 0`` and a
        positive conductivity floor ``mu1``."""
        if not all(np.isfinite(self)) or self.c < 0 or self.mu1 <= 0:
            raise ParameterError(f"parameter {self.to_list()} gives a non-positive conductivity")
        return self


def conductivity(u, p: ParameterVector):
    """``max(mu1, mu0 + c*u)``; accepts scalars or arrays and any ``c``."""
    return np.maximum(p.mu1, p.mu0 + p.c * np.asarray(u, dtype=float))


def critical_temperature(p: ParameterVector) -> float:
    """Location of the kink of the conductivity law."""
    return (p.mu1 - p.mu0) / p.c


def lift_components(mesh) -> tuple[np.ndarray, np.ndarray]:
    """Parameter-independent lift vectors: nodal x and nodal y coordinates."""
    return mesh.nodes[:, 0].copy(), mesh.nodes[:, 1].copy()


def dirichlet_lift(mesh, p: ParameterVector) -> tuple[np.ndarray, np.ndarray]:
    """Nodal values of ``g_x*x + g_y*y`` on all nodes and its constant gradient."""
    ux, uy = lift_components(mesh)
    return p.gx * ux + p.gy * uy, p.gradient

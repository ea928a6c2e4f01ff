"""Monte Carlo propagation of uniformly distributed parameters: sampling,
centered moment fields, the sampling-error estimate and moment errors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ReduxError
from .fem import l2_norm
from .galerkin_rb import rel_error
from .mesh import Mesh
from .model import ParameterVector
from .parallel import parallel_map

K_MAX = 7
GENERATOR = "numpy.random.PCG64 via SeedSequence(seed).spawn(n_p)"


@dataclass
class SampleSet:
    seed: int
    samples: list
    generator: str = GENERATOR

    @property
    def n_p(self) -> int:
        return len(self.samples)


def sample_parameters(seed: int, n_p: int = 1000) -> SampleSet:
    """``g_x, g_y ~ U[0, 1]`` and ``c ~ U[1, 2]``, one independent stream per sample.

    Sample ``j`` depends only on ``(seed, j)``, so any prefix of a larger set
    equals the smaller set.
    """
    if n_p < 2:
        raise ParameterError("n_p must be at least 2")
    samples = []
    for child in np.random.SeedSequence(int(seed)).spawn(n_p):
        gx, gy, c = np.random.default_rng(child).random(3)
        samples.append(ParameterVector(float(gx), float(gy), float(1.0 + c)))
    return SampleSet(int(seed), samples)


@dataclass
class MomentFields:
    tag: str
    n_p: int
    mean: np.ndarray
    centered: dict = field(default_factory=dict)  # k -> nodal field, k >= 2

    @property
    def k_max(self) -> int:
        return max(self.centered, default=1)

    def moment(self, k: int) -> np.ndarray:
        """``m^k`` with the convention ``m^1 = mean``."""
        return self.mean if k == 1 else self.centered[k]


def moments_from_fields(fields, k_max: int = K_MAX, tag: str = "FE") -> MomentFields:
    """Two-pass estimator: mean first, then centered powers with divisor ``n_p``."""
    F = np.asarray(fields, dtype=float)
    if F.ndim != 2 or F.shape[0] < 1:
        raise ParameterError("fields must be a non-empty (n_p, n_nodes) array")
    if k_max < 1:
        raise ParameterError("k_max must be at least 1")
    n_p = F.shape[0]
    mean = F.sum(axis=0) / n_p
    D = F - mean
    centered = {}
    P = D.copy()
    for k in range(2, k_max + 1):
        P = P * D
        centered[k] = P.sum(axis=0) / n_p
    return MomentFields(tag, n_p, mean, centered)


def monte_carlo_moments(
    solve, samples, k_max: int = K_MAX, tag: str = "FE", threads: int | None = None
) -> MomentFields:
    """Moments of the nodal temperature fields ``solve(p)`` over the samples."""
    params = samples.samples if isinstance(samples, SampleSet) else list(samples)

    def run(item):
        j, p = item
        try:
            return np.asarray(solve(p), dtype=float)
        except ReduxError as exc:
            raise type(exc)(f"{tag} solve failed at sample {j} (p={list(p)}): {exc}") from exc

    fields = parallel_map(run, list(enumerate(params)), threads)
    return moments_from_fields(np.vstack(fields), k_max, tag)


def e_mc(moments: MomentFields, mesh: Mesh) -> float | None:
    """Normalized root-mean-square Monte Carlo error of the mean; ``None`` for a
    vanishing mean field."""
    if 2 not in moments.centered:
        raise ParameterError("E_MC needs the second centered moment")
    denom = np.sqrt(moments.n_p) * l2_norm(mesh, moments.mean)
    if denom == 0.0:
        return None
    return l2_norm(mesh, np.sqrt(np.clip(moments.centered[2], 0.0, None))) / denom


def moment_errors(moments: MomentFields, reference: MomentFields, mesh: Mesh,
                  k_max: int | None = None) -> list:
    """Relative L2 errors ``E^k`` for ``k = 1..k_max`` (``None`` where the
    reference moment vanishes but the approximation does not)."""
    k_max = min(moments.k_max, reference.k_max) if k_max is None else k_max
    return [rel_error(mesh, moments.moment(k), reference.moment(k)) for k in range(1, k_max + 1)]


def error_cdf(errors) -> tuple[np.ndarray, np.ndarray]:
    """Empirical distribution ``P(t) = #{delta <= t} / N`` as step points.

    Failed solves (``inf`` or ``None``) count in ``N`` but never in the
    numerator, so the curve then stays below one.
    """
    vals = np.array([np.inf if v is None else v for v in errors], dtype=float)
    if not len(vals):
        raise ParameterError("error list is empty")
    N = len(vals)
    finite = np.sort(vals[np.isfinite(vals)])
    t = np.unique(finite)
    counts = np.searchsorted(finite, t, side="right")
    return t, counts / N


def cdf_value(errors, t: float) -> float:
    vals = np.array([np.inf if v is None else v for v in errors], dtype=float)
    return float(np.count_nonzero(vals <= t) / len(vals))

"""
Chebyshev kernel polynomial method for the local density of states.

Moments mu_m = [T_m(eta H)]_{0 alpha, 0 alpha} come from the three-term
recursion on the coordinate vector of the center orbital; the Jackson-damped
series is then evaluated on any energy grid without touching H again.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import InvalidParameterError, OutOfWindowError, SizeLimitError, SpectralWindowError
from .geometry import ShiftVector
from .hamiltonian import DENSE_LIMIT, ClusterHamiltonian

logger = logging.getLogger(__name__)

WINDOW_GUARD = 1e-6
MOMENT_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class KernelCoefficients:
    """Jackson damping factors g_m^p, m = 0..p."""

    p: int
    g: np.ndarray
    kernel: str = "jackson"


@dataclass(frozen=True, eq=False)
class MomentTable:
    mu: np.ndarray
    j: int
    alpha: str
    b: ShiftVector
    r: float
    eta: float

    @property
    def p(self) -> int:
        return len(self.mu) - 1

    def truncated(self, p: int) -> MomentTable:
        """The first p + 1 moments; they do not depend on the order they were computed to."""
        if p > self.p:
            raise InvalidParameterError(f"Cannot truncate {self.p + 1} moments to order {p}")
        return MomentTable(self.mu[: p + 1].copy(), self.j, self.alpha, self.b, self.r, self.eta)


@dataclass(frozen=True)
class LdosSample:
    epsilon: float
    value: float
    j: int
    alpha: str
    b: ShiftVector
    r: float
    p: int


KERNELS = ("jackson", "printed")


def jackson_coefficients(p: int, kernel: str = "jackson") -> KernelCoefficients:
    """
    Damping factors g_m^p with the factor 2 - delta_{m0} folded in.

    ``kernel="jackson"`` is the standard Jackson kernel
    ((p - m + 1) cos(q m) + sin(q m) cot(q)) / (p + 1), q = pi / (p + 1).
    ``kernel="printed"`` replaces cot(q) by arctan(q); it keeps g_0 = 1 and
    the normalization but only damps to first order, so its broadening error
    decays like 1/p instead of 1/p^2.
    """
    if int(p) != p or p < 1:
        raise InvalidParameterError(f"Polynomial order p must be a positive integer, got {p}")
    if kernel not in KERNELS:
        raise InvalidParameterError(f"Unknown kernel {kernel!r}; choose from {KERNELS}")
    p = int(p)
    m = np.arange(p + 1)
    q = np.pi / (p + 1)
    tail = 1.0 / np.tan(q) if kernel == "jackson" else np.arctan(q)
    g = (p - m + 1) * np.cos(q * m) + np.sin(q * m) * tail
    g = np.where(m == 0, 1.0, 2.0) * g / (p + 1)
    # m = 0 collapses to (p + 1) / (p + 1)
    g[0] = 1.0
    if kernel == "jackson":
        # the cot form vanishes exactly at m = p
        g[p] = 0.0
    return KernelCoefficients(p=p, g=g, kernel=kernel)


def chebyshev_values(x, p: int) -> np.ndarray:
    """T_m(x) for m = 0..p by the three-term recursion, shape ``(len(x), p + 1)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    values = np.empty((len(x), p + 1))
    values[:, 0] = 1.0
    if p >= 1:
        values[:, 1] = x
    for m in range(1, p):
        values[:, m + 1] = 2.0 * x * values[:, m] - values[:, m - 1]
    return values


def chebyshev_moments(H: ClusterHamiltonian, alpha: str, p: int) -> MomentTable:
    """Diagonal Chebyshev moments [T_m(eta H)]_{0 alpha, 0 alpha}, m = 0..p."""
    if int(p) != p or p < 1:
        raise InvalidParameterError(f"Polynomial order p must be a positive integer, got {p}")
    p = int(p)
    index = H.center_index(alpha)
    eta = H.window.eta
    scaled = (H.matrix * eta).tocsr()

    start = time.perf_counter()
    mu = np.empty(p + 1)
    v_prev = np.zeros(H.n, dtype=scaled.dtype)
    v_prev[index] = 1.0
    v = scaled @ v_prev
    mu[0] = 1.0
    mu[1] = v[index].real
    for m in range(1, p):
        v_next = 2.0 * (scaled @ v) - v_prev
        v_prev, v = v, v_next
        mu[m + 1] = v[index].real

    if not np.all(np.isfinite(mu)):
        raise SpectralWindowError(f"Chebyshev recursion produced non-finite moments for orbital {alpha!r}")
    worst = float(np.max(np.abs(mu)))
    if worst > 1.0 + MOMENT_TOLERANCE:
        raise SpectralWindowError(f"|mu_m| reached {worst:.6g} > 1 for orbital {alpha!r}: eta={eta:.6g} does not bound the spectrum")
    logger.debug(f"Moments p={p} alpha={alpha} j={H.j} b={H.b.frac}: {time.perf_counter() - start:.3f}s")
    return MomentTable(mu=mu, j=H.j, alpha=alpha, b=H.b, r=H.r, eta=eta)


def scaled_energies(epsilons, eta: float) -> np.ndarray:
    """eta * epsilons, rejecting energies outside the guarded window."""
    epsilons = np.atleast_1d(np.asarray(epsilons, dtype=float))
    scaled = eta * epsilons
    bad = np.abs(scaled) > 1.0 - WINDOW_GUARD
    if np.any(bad):
        offending = [float(e) for e in epsilons[bad]]
        raise OutOfWindowError(
            f"{len(offending)} energies outside the scaled window |eta e| <= 1 - {WINDOW_GUARD:g} (eta={eta:.6g}): {offending[:10]}",
            offending,
        )
    return scaled


def ldos_values(moments: MomentTable, kernel: KernelCoefficients, epsilons) -> np.ndarray:
    """Vectorized Jackson-damped LDoS at ``epsilons`` (eV^-1)."""
    if kernel.p != moments.p:
        raise InvalidParameterError(f"Kernel order {kernel.p} does not match moment order {moments.p}")
    epsilons = np.atleast_1d(np.asarray(epsilons, dtype=float))
    scaled = scaled_energies(epsilons, moments.eta)
    # row sums along the contiguous axis use pairwise summation
    series = np.sum(chebyshev_values(scaled, kernel.p) * (kernel.g * moments.mu), axis=1)
    return moments.eta * series / (np.pi * np.sqrt(1.0 - scaled**2))


def reconstruct(moments: MomentTable, kernel: KernelCoefficients, epsilons) -> list[LdosSample]:
    values = ldos_values(moments, kernel, epsilons)
    epsilons = np.atleast_1d(np.asarray(epsilons, dtype=float))
    return [
        LdosSample(float(e), float(v), moments.j, moments.alpha, moments.b, moments.r, moments.p)
        for e, v in zip(epsilons, values)
    ]


def kernel_delta(kernel: KernelCoefficients, eta: float, epsilon, e) -> np.ndarray:
    """chi_p(epsilon, e) = eta chi_hat_p(eta epsilon, eta e)."""
    epsilon = np.atleast_1d(np.asarray(epsilon, dtype=float))
    scaled = scaled_energies(epsilon, eta)
    t_eps = chebyshev_values(scaled, kernel.p)
    t_e = chebyshev_values(eta * np.atleast_1d(np.asarray(e, dtype=float)), kernel.p)
    series = (t_eps * kernel.g) @ t_e.T
    result = eta * series / (np.pi * np.sqrt(1.0 - scaled**2))[:, None]
    return result.squeeze()


def dense_oracle(H: ClusterHamiltonian, alpha: str, g: Callable[[float], float], max_dim: int = DENSE_LIMIT) -> float:
    """sum_i |<e_{0 alpha}, psi_i>|^2 g(lambda_i) from a full eigendecomposition."""
    if H.n > max_dim:
        raise SizeLimitError(f"Dense oracle limited to n <= {max_dim}, got {H.n}")
    index = H.center_index(alpha)
    evals, evecs = scipy.linalg.eigh(H.matrix.toarray())
    weights = np.abs(evecs[index, :]) ** 2
    values = np.array([g(float(lam)) for lam in evals], dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidParameterError("Test function is not finite at every eigenvalue")
    return float(np.sum(weights * values))

"""Fractional-programming beamformer updates for multi-user MISO downlink.

Shapes: ``H`` and ``F`` are (MN, K) with one column per user; ``noise`` is a
length-K vector (a scalar is broadcast).  The reported sum rate is in bits,
the FP surrogate uses natural logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NumericalFailure(RuntimeError):
    """The beamformer solve could not meet its tolerances."""


def _noise(noise, K):
    return np.broadcast_to(np.asarray(noise, dtype=float), (K,))


def _gram(H, F):
    # cross[k, i] = h_k^H f_i
    return H.conj().T @ F


def sinrs(H, F, noise) -> np.ndarray:
    cross = np.abs(_gram(H, F)) ** 2
    signal = np.diag(cross).copy()
    interference = cross.sum(axis=1) - signal
    return signal / (interference + _noise(noise, H.shape[1]))


def sinr(H, F, noise, k: int) -> float:
    return float(sinrs(H, F, noise)[k])


def sum_rate(H, F, noise) -> float:
    """Sum rate in bits per channel use."""
    return float(np.sum(np.log2(1.0 + sinrs(H, F, noise))))


def update_epsilon(H, F, noise) -> np.ndarray:
    return sinrs(H, F, noise)


def update_mu(H, F, noise) -> np.ndarray:
    cross = _gram(H, F)
    a = np.diag(cross).conj()
    b = _noise(noise, H.shape[1]) + np.sum(np.abs(cross) ** 2, axis=1)
    return a / b


def lagrangian_value(H, F, eps, mu, noise) -> float:
    cross = _gram(H, F)
    a = np.diag(cross).conj()
    b = _noise(noise, H.shape[1]) + np.sum(np.abs(cross) ** 2, axis=1)
    eps = np.asarray(eps, dtype=float)
    mu = np.asarray(mu, dtype=complex)
    inner = 2.0 * np.real(mu.conj() * a) - np.abs(mu) ** 2 * b
    return float(np.sum(np.log1p(eps) - eps + (1.0 + eps) * inner))


@dataclass(frozen=True, eq=False)
class SurrogateMatrices:
    C: np.ndarray
    D: np.ndarray
    M: np.ndarray


def build_surrogates(H, eps, mu, noise) -> SurrogateMatrices:
    eps = np.asarray(eps, dtype=float)
    mu = np.asarray(mu, dtype=complex)
    weights = (1.0 + eps) * np.abs(mu) ** 2
    C = (H * weights) @ H.conj().T
    C = 0.5 * (C + C.conj().T)
    D = H * ((1.0 + eps) * mu.conj())
    M = np.diag(weights * _noise(noise, H.shape[1]))
    return SurrogateMatrices(C, D, M)


def quadratic_cost(F, surrogates: SurrogateMatrices) -> float:
    """q(F) = Tr(M) + Tr(F^H C F) - 2 Re Tr(F^H D), the quantity the F-update minimises."""
    S = surrogates
    return float(
        np.trace(S.M).real
        + np.real(np.trace(F.conj().T @ S.C @ F))
        - 2.0 * np.real(np.trace(F.conj().T @ S.D))
    )


def matched_filter(H, power: float) -> np.ndarray:
    """f_k = sqrt(P/K) h_k / ||h_k||; zero columns stay zero."""
    K = H.shape[1]
    norms = np.linalg.norm(H, axis=0)
    scale = np.divide(math.sqrt(power / K), norms, out=np.zeros_like(norms), where=norms > 0)
    return H * scale


def solve_beamformer(
    surrogates: SurrogateMatrices,
    power: float,
    rtol: float = 1e-10,
    max_iter: int = 200,
) -> tuple[np.ndarray, float]:
    """Minimise q(F) subject to trace(F F^H) <= P.

    Returns ``(F, lam)`` with ``F = (C + lam I)^{-1} D``.  ``lam`` is zero when
    the unconstrained minimiser (pseudo-inverse solution when C is singular)
    already meets the budget; otherwise it is found by bisection on the
    decreasing power curve in the eigenbasis of C.
    """
    if not power > 0:
        raise ValueError("power budget must be positive")
    C, D = surrogates.C, surrogates.D
    lam_c, U = np.linalg.eigh(C)
    lam_c = np.clip(lam_c, 0.0, None)
    proj = U.conj().T @ D
    num = np.sum(np.abs(proj) ** 2, axis=1)
    total = num.sum()
    if total == 0.0:
        return np.zeros_like(D), 0.0

    top = lam_c.max()
    rank_tol = top * C.shape[0] * np.finfo(float).eps * 10 if top > 0 else 0.0
    in_range = lam_c > rank_tol
    # D outside range(C) makes the unconstrained problem unbounded
    bounded = num[~in_range].sum() <= 1e-20 * total
    if bounded:
        p0 = float(np.sum(num[in_range] / lam_c[in_range] ** 2))
        if p0 <= power:
            inv = np.where(in_range, 1.0 / np.where(in_range, lam_c, 1.0), 0.0)
            return U @ (inv[:, None] * proj), 0.0

    def g(lam):
        return float(np.sum(num / (lam_c + lam) ** 2))

    lo, hi = 0.0, 1.0
    expansions = 0
    while g(hi) >= power:
        lo, hi = hi, 2.0 * hi
        expansions += 1
        if expansions > 2000:
            raise NumericalFailure("could not bracket the Lagrange multiplier")
    lam = hi
    for _ in range(max_iter):
        lam = 0.5 * (lo + hi)
        val = g(lam)
        if abs(val - power) <= rtol * power:
            break
        if val > power:
            lo = lam
        else:
            hi = lam
        if hi - lo < 1e-12 * (1.0 + lam):
            break
    else:
        # cap reached; fall back to the feasible end of the bracket
        lam = hi
    if g(lam) > power * (1.0 + 1e-8):
        lam = hi
    F = U @ (proj / (lam_c + lam)[:, None])
    residual = abs(np.sum(np.abs(F) ** 2) - power)
    if residual > 1e-8 * power:
        raise NumericalFailure(f"power residual {residual:.3e} after bisection (lambda={lam:.6g})")
    return F, float(lam)

"""Antenna position optimisation with the beamformer held fixed.

With the FP auxiliaries and the beamformer frozen, the surrogate objective
splits into one term per antenna.  Revolving angles are optimised one antenna
at a time and layer heights one layer at a time, each by a constrained grid
search that seeds an Adam ascent.

Gradients come in two flavours: ``grad_psi``/``grad_z`` assemble the
closed-form sinusoidal expressions (local term plus the coupling through the
other antennas), while the optimiser itself runs on compiled kernels that
evaluate the same derivative in complex form for a single moving block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .channel import Scenario, build_channel, path_phases
from .geometry import (
    SPACING_ATOL,
    TWO_PI,
    AntennaLayout,
    ArrayConfig,
    check_feasible,
    wrapped_angular_distance,
)

# ---------------------------------------------------------------------------
# Adam


@dataclass(frozen=True)
class AdamHyperparams:
    step_size: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eta: float = 1e-8

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.eta > 0:
            raise ValueError("eta must be positive")


@dataclass(frozen=True)
class AdamState:
    m: float = 0.0
    v: float = 0.0
    t: int = 0


@numba.njit(cache=True)
def _adam_update(m, v, t, g, x, alpha, beta1, beta2, eta):
    t += 1
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    # ascent: we maximise
    return m, v, t, x + alpha * m_hat / (math.sqrt(v_hat) + eta)


def adam_step(state: AdamState, hyper: AdamHyperparams, grad: float, x: float):
    """One bias-corrected Adam ascent step. Returns ``(new_state, new_x)``."""
    m, v, t, x_new = _adam_update(
        float(state.m), float(state.v), int(state.t), float(grad), float(x),
        hyper.step_size, hyper.beta1, hyper.beta2, hyper.eta,
    )
    return AdamState(m, v, t), x_new


# ---------------------------------------------------------------------------
# options


@dataclass(frozen=True)
class PositionOptions:
    """Settings shared by the revolving-angle and height optimisers.

    ``z_window`` is the half-width of the height search window in
    wavelengths.  ``adam_steps = 0`` gives pure grid search.
    """

    sweeps: int = 3
    adam_steps: int = 100
    num_candidates: int = 64
    z_window: float = 1.0
    z_points: int = 21
    psi_step: float = 0.01
    z_step: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eta: float = 1e-8
    tol: float = 1e-6

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.adam_steps < 0:
            raise ValueError("adam_steps must be >= 0")
        if self.num_candidates < 2 or self.z_points < 2:
            raise ValueError("grids need at least two points")
        if not (self.tol > 0 and self.z_window > 0):
            raise ValueError("tol and z_window must be positive")
        # validates the Adam fields
        AdamHyperparams(self.psi_step, self.beta1, self.beta2, self.eta)
        AdamHyperparams(self.z_step, self.beta1, self.beta2, self.eta)


def psi_candidates(current: float, num_candidates: int) -> np.ndarray:
    """Current angle followed by ``num_candidates`` points evenly spread on the ring."""
    ring = TWO_PI * np.arange(num_candidates) / num_candidates
    return np.concatenate([[current], ring])


def z_candidates(current: float, half_width: float, points: int) -> np.ndarray:
    window = current + np.linspace(-half_width, half_width, points)
    return np.concatenate([[current], window])


# ---------------------------------------------------------------------------
# objective and its per-antenna decomposition


@dataclass(frozen=True, eq=False)
class PerAntennaCoefficients:
    c: np.ndarray
    d: np.ndarray


def _weights(eps, mu):
    eps = np.asarray(eps, dtype=float)
    mu = np.asarray(mu, dtype=complex)
    return 1.0 + eps, (1.0 + eps) * np.abs(mu) ** 2


def beam_covariance(F) -> np.ndarray:
    """Sum over users of f_k f_k^H."""
    return F @ F.conj().T


def per_antenna_coeffs(H, F, eps, mu, s: int) -> PerAntennaCoefficients:
    w, A = _weights(eps, mu)
    mu = np.asarray(mu, dtype=complex)
    G = beam_covariance(F)
    coupling = G[s] @ H - G[s, s] * H[s]
    c = w * mu * F[s] - 0.5 * A * coupling
    d = A * G[s, s].real
    return PerAntennaCoefficients(c, d)


def per_antenna_objective(coeffs: PerAntennaCoefficients, h_s, eps, mu, noise,
                          num_antennas: int) -> float:
    _, A = _weights(eps, mu)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), A.shape)
    h_s = np.asarray(h_s, dtype=complex)
    terms = (2.0 * np.real(h_s.conj() * coeffs.c) - coeffs.d * np.abs(h_s) ** 2
             - A * noise / num_antennas)
    return float(terms.sum())


def total_objective(H, F, eps, mu, noise) -> float:
    """Position-dependent part of the FP surrogate."""
    w, A = _weights(eps, mu)
    mu = np.asarray(mu, dtype=complex)
    cross = H.conj().T @ F
    a = np.diag(cross).conj()
    b = np.asarray(noise, dtype=float) + np.sum(np.abs(cross) ** 2, axis=1)
    return float(np.sum(w * 2.0 * np.real(mu.conj() * a) - A * b))


# ---------------------------------------------------------------------------
# closed-form gradients


def _gradient_terms(config, layout, scenario, F, eps, mu, s, dproj):
    """Local and coupling parts of d f / d x for antenna ``s``.

    ``dproj`` is the (K, L) derivative of the projection t_s . Xi_{k,l} with
    respect to the coordinate x being differentiated.
    """
    kappa = config.wavenumber
    L = scenario.num_paths
    H = build_channel(config, layout, scenario)
    proj = path_phases(config, layout, scenario)  # (MN, K, L)
    beta = scenario.gains
    w, A = _weights(eps, mu)
    coeffs = per_antenna_coeffs(H, F, eps, mu, s)

    # derivative of 2 Re{h* c}
    bc = beta.conj() * coeffs.c[:, None]
    local_c = -(2.0 * kappa / math.sqrt(L)) * np.sum(
        np.abs(bc) * dproj * np.sin(kappa * proj[s] + np.angle(bc))
    )

    # derivative of -d |h|^2; diagonal l == l' terms vanish
    mag = np.abs(beta[:, :, None] * beta[:, None, :].conj())
    arg = (kappa * (proj[s][:, :, None] - proj[s][:, None, :])
           + np.angle(beta)[:, None, :] - np.angle(beta)[:, :, None])
    ddiff = dproj[:, :, None] - dproj[:, None, :]
    local_d = (kappa / L) * np.sum(coeffs.d[:, None, None] * mag * ddiff * np.sin(arg))

    # coupling through c_{k,s'} of every other antenna
    G = beam_covariance(F)
    others = np.arange(H.shape[0]) != s
    Gcol = G[others, s]  # G_{s', s}
    amp = Gcol[:, None, None, None] * beta.conj()[None, :, :, None] * beta[None, :, None, :]
    arg = (kappa * (proj[others][:, :, :, None] - proj[s][None, :, None, :])
           + np.angle(amp))
    cross = -(kappa / L) * np.sum(
        A[None, :, None, None] * np.abs(amp) * dproj[None, :, None, :] * np.sin(arg)
    )
    return local_c + local_d, cross


def psi_gradient_terms(config, layout, scenario, F, eps, mu, m, n):
    """(local, coupling) parts of (1/R) d f / d psi_{m,n}."""
    psi = layout.psi[m, n]
    tangent = scenario.phi_x * math.sin(psi) - scenario.phi_y * math.cos(psi)
    s = m * config.antennas_per_layer + n
    local, cross = _gradient_terms(config, layout, scenario, F, eps, mu, s,
                                   -config.radius * tangent)
    return local / config.radius, cross / config.radius


def grad_psi(config, layout, scenario, F, eps, mu, m, n) -> float:
    """Tangential gradient (1/R) d f / d psi_{m,n}."""
    local, cross = psi_gradient_terms(config, layout, scenario, F, eps, mu, m, n)
    return float(local + cross)


def grad_z(config, layout, scenario, F, eps, mu, m) -> float:
    """d f / d z_m with every antenna of layer m moving together."""
    N = config.antennas_per_layer
    total = 0.0
    for n in range(N):
        local, cross = _gradient_terms(config, layout, scenario, F, eps, mu,
                                       m * N + n, scenario.theta)
        total += local + cross
    return float(total)


# ---------------------------------------------------------------------------
# compiled kernels for a single moving block


@numba.njit(cache=True)
def _psi_value_grad(psi, base, ax, ay, t, A, gss):
    # value of the psi-dependent part of f for one antenna, and d/dpsi
    c = math.cos(psi)
    s = math.sin(psi)
    K, L = base.shape
    val = 0.0
    grad = 0.0
    for k in range(K):
        h = 0j
        dh = 0j
        for l in range(L):
            ph = ax[k, l] * c + ay[k, l] * s
            e = base[k, l] * complex(math.cos(ph), -math.sin(ph))
            h += e
            dh += e * complex(0.0, ax[k, l] * s - ay[k, l] * c)
        ag = A[k] * gss
        val += 2.0 * (h.conjugate() * t[k]).real - ag * (h.real * h.real + h.imag * h.imag)
        grad += 2.0 * (dh.conjugate() * (t[k] - ag * h)).real
    return val, grad


@numba.njit(cache=True)
def _psi_values(cands, base, ax, ay, t, A, gss):
    out = np.empty(cands.shape[0])
    for i in range(cands.shape[0]):
        out[i], _ = _psi_value_grad(cands[i], base, ax, ay, t, A, gss)
    return out


@numba.njit(cache=True)
def _z_value_grad(z, base, kth, t, A, Gss):
    # value of the z-dependent part of f for one rigid layer, and d/dz
    N, K, L = base.shape
    h = np.zeros((N, K), dtype=np.complex128)
    dh = np.zeros((N, K), dtype=np.complex128)
    for k in range(K):
        for l in range(L):
            ph = kth[k, l] * z
            rot = complex(math.cos(ph), -math.sin(ph))
            drot = rot * complex(0.0, -kth[k, l])
            for j in range(N):
                h[j, k] += base[j, k, l] * rot
                dh[j, k] += base[j, k, l] * drot
    val = 0.0
    grad = 0.0
    for k in range(K):
        for j in range(N):
            u = 0j
            for i in range(N):
                u += Gss[j, i] * h[i, k]
            hc = h[j, k].conjugate()
            val += 2.0 * (hc * t[j, k]).real - A[k] * (hc * u).real
            grad += 2.0 * (dh[j, k].conjugate() * (t[j, k] - A[k] * u)).real
    return val, grad


@numba.njit(cache=True)
def _z_values(cands, base, kth, t, A, Gss):
    out = np.empty(cands.shape[0])
    for i in range(cands.shape[0]):
        out[i], _ = _z_value_grad(cands[i], base, kth, t, A, Gss)
    return out


@numba.njit(cache=True)
def _ring_distance(a, b):
    d = abs(a - b) % (2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)


@numba.njit(cache=True)
def _project_ring(x, others, gap, atol):
    """Push x to the boundary of its nearest too-close neighbour; (ok, x)."""
    nearest = -1
    best = np.inf
    for j in range(others.shape[0]):
        d = _ring_distance(x, others[j])
        if d < gap - atol and d < best:
            best = d
            nearest = j
    if nearest < 0:
        return True, x
    signed = (x - others[nearest] + math.pi) % (2.0 * math.pi) - math.pi
    side = 1.0 if signed >= 0.0 else -1.0
    x = (others[nearest] + side * gap) % (2.0 * math.pi)
    for j in range(others.shape[0]):
        if _ring_distance(x, others[j]) < gap - atol:
            return False, x
    return True, x


@numba.njit(cache=True)
def _project_line(x, others, gap, atol):
    nearest = -1
    best = np.inf
    for j in range(others.shape[0]):
        d = abs(x - others[j])
        if d < gap - atol and d < best:
            best = d
            nearest = j
    if nearest < 0:
        return True, x
    side = 1.0 if x >= others[nearest] else -1.0
    x = others[nearest] + side * gap
    for j in range(others.shape[0]):
        if abs(x - others[j]) < gap - atol:
            return False, x
    return True, x


@numba.njit(cache=True)
def _ascend_psi(x0, steps, alpha, beta1, beta2, eta, tol, radius, others, gap, atol,
                base, ax, ay, t, A, gss):
    fx, g = _psi_value_grad(x0, base, ax, ay, t, A, gss)
    x = x0
    best_x = x0
    best_f = fx
    m = 0.0
    v = 0.0
    it = 0
    for _ in range(steps):
        m, v, it, xn = _adam_update(m, v, it, g / radius, x, alpha, beta1, beta2, eta)
        xn = xn % (2.0 * math.pi)
        ok, xn = _project_ring(xn, others, gap, atol)
        if not ok:
            break
        fn, g = _psi_value_grad(xn, base, ax, ay, t, A, gss)
        if fn > best_f:
            best_x = xn
            best_f = fn
        done = abs(fn - fx) < tol
        x = xn
        fx = fn
        if done:
            break
    return best_x, best_f


@numba.njit(cache=True)
def _ascend_z(x0, steps, alpha, beta1, beta2, eta, tol, others, gap, atol,
              base, kth, t, A, Gss):
    fx, g = _z_value_grad(x0, base, kth, t, A, Gss)
    x = x0
    best_x = x0
    best_f = fx
    m = 0.0
    v = 0.0
    it = 0
    for _ in range(steps):
        m, v, it, xn = _adam_update(m, v, it, g, x, alpha, beta1, beta2, eta)
        ok, xn = _project_line(xn, others, gap, atol)
        if not ok:
            break
        fn, g = _z_value_grad(xn, base, kth, t, A, Gss)
        if fn > best_f:
            best_x = xn
            best_f = fn
        done = abs(fn - fx) < tol
        x = xn
        fx = fn
        if done:
            break
    return best_x, best_f


# ---------------------------------------------------------------------------
# CGS-Adam drivers


@dataclass
class PositionUpdate:
    layout: AntennaLayout
    H: np.ndarray
    objective: list = field(default_factory=list)  # total objective before and after each sweep


def _pick(cands, values, current, distance):
    best = values.max()
    near = values >= best - 1e-12 * max(1.0, abs(best))
    idx = np.flatnonzero(near)
    return idx[np.argmin(distance(cands[idx], current))]


class _Frozen:
    """FP quantities that stay fixed during one position update."""

    def __init__(self, F, eps, mu):
        self.F = np.asarray(F, dtype=complex)
        self.w, self.A = _weights(eps, mu)
        self.mu = np.asarray(mu, dtype=complex)
        self.G = beam_covariance(self.F)

    def targets(self, H, rows):
        # t_{j,k} = w_k (mu_k F_{j,k} - |mu_k|^2 sum_{s' outside rows} G_{j,s'} h_{k,s'})
        outside = self.G[rows] @ H - self.G[np.ix_(rows, rows)] @ H[rows]
        return self.w * self.mu * self.F[rows] - self.A * outside


def cgs_adam_psi(config: ArrayConfig, layout: AntennaLayout, scenario: Scenario,
                 F, eps, mu, options: PositionOptions = PositionOptions()) -> PositionUpdate:
    """Optimise every revolving angle, antenna by antenna.

    Each antenna grid-searches the ring (keeping its current angle as a
    candidate and skipping angles too close to its layer neighbours), then
    runs Adam from the best candidate.  The best feasible point visited is
    kept, so the objective never decreases.
    """
    M, N = config.num_layers, config.antennas_per_layer
    R, kappa = config.radius, config.wavenumber
    gap = config.psi_min if N > 1 else 0.0
    noise = scenario.noise_variances
    fz = _Frozen(F, eps, mu)

    psi = layout.psi.copy()
    z = layout.z
    H = build_channel(config, layout, scenario)
    scaled = scenario.gains / math.sqrt(scenario.num_paths)
    ax = np.ascontiguousarray(kappa * R * scenario.phi_x)
    ay = np.ascontiguousarray(kappa * R * scenario.phi_y)
    theta = scenario.theta

    f_prev = total_objective(H, fz.F, eps, mu, noise)
    trace = [f_prev]
    for _ in range(options.sweeps):
        for m in range(M):
            base = np.ascontiguousarray(scaled * np.exp(-1j * kappa * z[m] * theta))
            for n in range(N):
                s = m * N + n
                others = np.delete(psi[m], n)
                t = np.ascontiguousarray(fz.targets(H, [s])[0])
                gss = float(fz.G[s, s].real)

                cands = psi_candidates(psi[m, n], options.num_candidates)
                if others.size:
                    dist = wrapped_angular_distance(cands[:, None], others[None, :])
                    cands = cands[np.all(dist >= gap - SPACING_ATOL, axis=1)]
                vals = _psi_values(cands, base, ax, ay, t, fz.A, gss)
                start = cands[_pick(cands, vals, psi[m, n], wrapped_angular_distance)]

                if options.adam_steps > 0:
                    start, _ = _ascend_psi(
                        float(start), options.adam_steps, options.psi_step, options.beta1,
                        options.beta2, options.eta, options.tol, R, others, gap,
                        SPACING_ATOL, base, ax, ay, t, fz.A, gss,
                    )
                psi[m, n] = start
                phase = ax * math.cos(start) + ay * math.sin(start)
                H[s] = np.sum(base * np.exp(-1j * phase), axis=1)
        f_new = total_objective(H, fz.F, eps, mu, noise)
        trace.append(f_new)
        if f_new - f_prev < options.tol:
            break
        f_prev = f_new
    return PositionUpdate(layout.with_psi(psi), H, trace)


def cgs_adam_z(config: ArrayConfig, layout: AntennaLayout, scenario: Scenario,
               F, eps, mu, options: PositionOptions = PositionOptions()) -> PositionUpdate:
    """Optimise layer heights one rigid layer at a time (grid window + Adam)."""
    M, N = config.num_layers, config.antennas_per_layer
    R, kappa = config.radius, config.wavenumber
    gap = config.z_min
    noise = scenario.noise_variances
    fz = _Frozen(F, eps, mu)

    z = layout.z.copy()
    H = build_channel(config, layout, scenario)
    scaled = scenario.gains / math.sqrt(scenario.num_paths)
    kth = np.ascontiguousarray(kappa * scenario.theta)
    half_width = options.z_window * config.wavelength

    f_prev = total_objective(H, fz.F, eps, mu, noise)
    trace = [f_prev]
    for _ in range(options.sweeps):
        for m in range(M):
            rows = np.arange(m * N, (m + 1) * N)
            cos_p = np.cos(layout.psi[m])[:, None, None]
            sin_p = np.sin(layout.psi[m])[:, None, None]
            horiz = kappa * R * (scenario.phi_x[None] * cos_p + scenario.phi_y[None] * sin_p)
            base = np.ascontiguousarray(scaled[None] * np.exp(-1j * horiz))
            t = np.ascontiguousarray(fz.targets(H, rows))
            Gss = np.ascontiguousarray(fz.G[np.ix_(rows, rows)])
            others = np.delete(z, m)

            cands = z_candidates(z[m], half_width, options.z_points)
            if others.size:
                dist = np.abs(cands[:, None] - others[None, :])
                cands = cands[np.all(dist >= gap - SPACING_ATOL, axis=1)]
            vals = _z_values(cands, base, kth, t, fz.A, Gss)
            start = cands[_pick(cands, vals, z[m], lambda a, b: np.abs(a - b))]

            if options.adam_steps > 0:
                start, _ = _ascend_z(
                    float(start), options.adam_steps, options.z_step, options.beta1,
                    options.beta2, options.eta, options.tol, others, gap, SPACING_ATOL,
                    base, kth, t, fz.A, Gss,
                )
            z[m] = start
            H[rows] = np.sum(base * np.exp(-1j * kth * start)[None], axis=2)
        f_new = total_objective(H, fz.F, eps, mu, noise)
        trace.append(f_new)
        if f_new - f_prev < options.tol:
            break
        f_prev = f_new
    return PositionUpdate(layout.with_z(z), H, trace)

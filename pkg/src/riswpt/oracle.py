"""
Brute-force references for small instances and the max-min power level.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from .model import PowerConstraints, RisPhases, compose_channel
from .solver import SolverConfig, initial_beamformer, initial_point, spmc_sca_admm


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform phase quantization used by ``grid_search``."""

    phase_levels: int = 8
    max_enumeration: int = 2 ** 22

    def __post_init__(self):
        if self.phase_levels < 2:
            raise ValueError("need at least two phase levels")

    @property
    def phases(self):
        return -np.pi + 2 * np.pi * np.arange(self.phase_levels) / self.phase_levels

    def size(self, n_phases):
        return self.phase_levels ** n_phases


@dataclass
class GridResult:
    alpha: np.ndarray
    theta: np.ndarray
    objective: float
    feasible: bool
    per_user_power: np.ndarray


def _all_phase_vectors(phases, n):
    if n == 0:
        return np.zeros((1, 0))
    return np.array(list(product(phases, repeat=n)))


def grid_search(channels, constraints, spec, P, chunk=4096):
    """Exhaustive search over quantized transmit and RIS phases.

    Among grid points meeting every minimum power exactly (no tolerance)
    the one with the largest total power is returned.  If none does,
    ``feasible`` is False and the point with the smallest worst-case
    shortfall is returned.
    """
    n_total = channels.M + channels.N
    size = spec.size(n_total)
    if size > spec.max_enumeration:
        raise EnumerationTooLarge(
            f"{spec.phase_levels}^{n_total} = {size} grid points exceed the cap of {spec.max_enumeration}")
    phases = spec.phases
    alphas = _all_phase_vectors(phases, channels.M)
    X = np.sqrt(P / channels.M) * np.exp(1j * alphas)           # (A, M)
    thetas = _all_phase_vectors(phases, channels.N)
    p, eta = constraints.p, constraints.eta

    best = (-np.inf, None, None, None)      # objective, theta idx, alpha idx, Q
    closest = (np.inf, None, None, None)    # shortfall, theta idx, alpha idx, Q
    for start in range(0, len(thetas), chunk):
        block = thetas[start:start + chunk]
        Hs = channels.H_d[None] + (channels.H_r[None] * np.exp(1j * block)[:, None, :]) @ channels.G
        Q = eta * np.abs(np.einsum("tkm,am->tak", Hs, X)) ** 2     # (T, A, K)
        total = Q.sum(axis=2)
        ok = np.all(Q >= p, axis=2)
        if np.any(ok):
            masked = np.where(ok, total, -np.inf)
            t, a = np.unravel_index(np.argmax(masked), masked.shape)
            if masked[t, a] > best[0]:
                best = (masked[t, a], start + t, a, Q[t, a])
        shortfall = np.max(p - Q, axis=2)
        t, a = np.unravel_index(np.argmin(shortfall), shortfall.shape)
        if shortfall[t, a] < closest[0]:
            closest = (shortfall[t, a], start + t, a, Q[t, a])

    feasible = best[1] is not None
    _, t, a, Q = best if feasible else closest
    return GridResult(alphas[a].copy(), thetas[t].copy(), float(np.sum(Q)), feasible, Q.copy())


def grid_max_min(channels, spec, P, eta=1.0, chunk=4096):
    """Largest ``min_k Q_k`` over the phase grid."""
    phases = spec.phases
    size = spec.size(channels.M + channels.N)
    if size > spec.max_enumeration:
        raise EnumerationTooLarge(f"{size} grid points exceed the cap of {spec.max_enumeration}")
    X = np.sqrt(P / channels.M) * np.exp(1j * _all_phase_vectors(phases, channels.M))
    thetas = _all_phase_vectors(phases, channels.N)
    best = 0.0
    for start in range(0, len(thetas), chunk):
        block = thetas[start:start + chunk]
        Hs = channels.H_d[None] + (channels.H_r[None] * np.exp(1j * block)[:, None, :]) @ channels.G
        Q = eta * np.abs(np.einsum("tkm,am->tak", Hs, X)) ** 2
        best = max(best, float(Q.min(axis=2).max()))
    return best


def max_min_search(channels, config=SolverConfig(), bisect_tol=1e-2, P=1.0, eta=1.0,
                   x0=None, ris0=None, optimize_ris=True):
    """Bisection for the largest uniform power level the solver can certify.

    Without ``x0`` and ``ris0`` the start is chosen by ``initial_point``.

    Returns
    -------
    q : float
        Largest level ``q`` for which a solve with ``p = q * ones`` ended
        feasible.  A heuristic lower bound on the max-min power.
    certificate : SolveResult
        The feasible solve that established ``q``.
    """
    K = channels.K
    if ris0 is None and x0 is None:
        x0, ris0 = initial_point(channels, P)
    ris0 = RisPhases.zeros(channels.N) if ris0 is None else ris0
    if x0 is None:
        x0 = initial_beamformer(compose_channel(channels, ris0), P)

    def attempt(q, start):
        res = spmc_sca_admm(channels, PowerConstraints(np.full(K, q), eta), start.beamformer, start.ris,
                            config, allow_infeasible_start=True, optimize_ris=optimize_ris)
        return res if res.all_feasible else None

    certificate = spmc_sca_admm(channels, PowerConstraints.none(K, eta), x0, ris0, config,
                                optimize_ris=optimize_ris)
    if not certificate.all_feasible:
        raise RuntimeError("unconstrained solve returned an infeasible point")
    lo = float(np.min(certificate.per_user_power))
    hi = float(np.max(certificate.per_user_power))
    if hi <= 0:
        return 0.0, certificate
    if hi <= lo:
        hi = 2 * lo
    while True:
        res = attempt(hi, certificate)
        if res is None:
            break
        lo, certificate = hi, res
        hi *= 2
    while hi - lo > bisect_tol * hi:
        q = 0.5 * (lo + hi)
        res = attempt(q, certificate)
        if res is None:
            hi = q
        else:
            lo, certificate = q, res
    return lo, certificate


def estimate_qmm(channels, config=SolverConfig(), bisect_tol=1e-2, P=1.0, **kwargs):
    return max_min_search(channels, config, bisect_tol, P, **kwargs)[0]


def projection_oracle(z, h, p, samples, rng):
    """Smallest distance from ``z`` to randomly drawn points with ``|h^H s|^2 >= p``.

    Points are drawn by fixing a random target ``h^H s = r e^{j nu}`` with
    ``r >= sqrt(p)``, taking the nearest point with that value and adding a
    random component orthogonal to ``h``.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    z = np.asarray(z, dtype=complex)
    h = np.asarray(h, dtype=complex)
    s0 = np.vdot(h, z)
    if abs(s0) ** 2 >= p:
        return 0.0
    nh = np.vdot(h, h).real
    nu = rng.uniform(-np.pi, np.pi, samples)
    r = np.sqrt(p) * (1 + np.where(rng.random(samples) < 0.5, 0.0, np.abs(rng.standard_normal(samples))))
    points = z + ((r * np.exp(1j * nu) - s0) / nh)[:, None] * h
    w = (rng.standard_normal((samples, z.size)) + 1j * rng.standard_normal((samples, z.size)))
    raw = np.linalg.norm(w, axis=1)
    w -= (w @ h.conj())[:, None] * h / nh
    # what survives the orthogonalization in one dimension is rounding noise
    norm = np.linalg.norm(w, axis=1)
    scale = np.abs(rng.standard_normal(samples)) * np.linalg.norm(points - z, axis=1) * 0.1
    w *= np.where(norm > 1e-8 * raw, scale / np.maximum(norm, 1e-300), 0.0)[:, None]
    points += w
    return float(np.min(np.linalg.norm(points - z, axis=1)))

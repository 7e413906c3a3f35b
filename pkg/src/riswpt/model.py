"""
Channel model, received power and the quantities shared by both
optimization blocks.

Sign convention for the RIS: element ``n`` applies the reflection
``beta[n] * exp(1j * theta[n])``.  The phase-shift vector is
``v = exp(-1j * theta)`` so that the cascaded term of user ``k`` reads
``v^H c_k``.
"""

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes do not fit together."""


def wrap_phase(angle):
    """Map angles into [-pi, pi)."""
    angle = np.asarray(angle, dtype=float)
    return (angle + np.pi) % (2 * np.pi) - np.pi


def phase_of(w):
    """Elementwise argument with ``arg(0) := 0``."""
    w = np.asarray(w, dtype=complex)
    out = np.angle(w)
    out[w == 0] = 0.0
    return out


@dataclass(frozen=True)
class ChannelSet:
    """Static channels of one RIS-aided MISO deployment.

    Parameters
    ----------
    H_d : ndarray, shape (K, M)
        BS to user direct channels, row ``k`` is ``h_{d,k}^H``.
    H_r : ndarray, shape (K, N)
        RIS to user channels, row ``k`` is ``h_{r,k}^H``.
    S : ndarray, shape (N, M)
        BS to RIS channels.
    beta : ndarray, shape (N,), optional
        Reflection amplitudes in [0, 1]; defaults to ones.
    sections : tuple of int, optional
        Element count of each RIS; defaults to a single RIS holding all
        ``N`` elements (or no RIS when ``N == 0``).
    """

    H_d: np.ndarray
    H_r: np.ndarray
    S: np.ndarray
    beta: np.ndarray = None
    sections: tuple = None
    G: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        H_d = np.array(self.H_d, dtype=complex, ndmin=2)
        K, M = H_d.shape
        H_r = np.array(self.H_r, dtype=complex).reshape(K, -1)
        N = H_r.shape[1]
        S = np.array(self.S, dtype=complex)
        if S.size == 0 and N == 0:
            S = np.zeros((0, M), complex)
        if S.shape != (N, M):
            raise DimensionError(f"S has shape {S.shape}, expected {(N, M)}")
        beta = np.ones(N) if self.beta is None else np.array(self.beta, dtype=float).ravel()
        if beta.shape != (N,):
            raise DimensionError(f"beta has length {beta.size}, expected {N}")
        if np.any(beta < 0) or np.any(beta > 1):
            raise ValueError("RIS amplitudes must lie in [0, 1]")
        sections = (N,) if self.sections is None else tuple(int(s) for s in self.sections)
        if N == 0 and self.sections is None:
            sections = ()
        if sum(sections) != N or any(s < 0 for s in sections):
            raise DimensionError(f"sections {sections} do not add up to N={N}")
        for name, value in (("H_d", H_d), ("H_r", H_r), ("S", S), ("beta", beta)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "sections", sections)
        G = beta[:, None] * S
        G.setflags(write=False)
        object.__setattr__(self, "G", G)

    @property
    def K(self):
        return self.H_d.shape[0]

    @property
    def M(self):
        return self.H_d.shape[1]

    @property
    def N(self):
        return self.H_r.shape[1]

    @property
    def L(self):
        return len(self.sections)

    def without_ris(self):
        """The same deployment with every RIS removed."""
        return ChannelSet(self.H_d, np.zeros((self.K, 0)), np.zeros((0, self.M)))

    def scaled(self, c):
        """Deployment whose effective channel is ``c`` times this one (``c > 0``)."""
        r = np.sqrt(c)
        return ChannelSet(c * self.H_d, r * self.H_r, r * self.S, self.beta, self.sections)


@dataclass(frozen=True)
class TxBeamformer:
    """Constant-envelope transmit beamformer ``x_m = sqrt(P/M) exp(j alpha_m)``."""

    alpha: np.ndarray
    P: float

    def __post_init__(self):
        if not self.P > 0:
            raise ValueError("transmit power must be positive")
        alpha = wrap_phase(np.atleast_1d(self.alpha).ravel())
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "P", float(self.P))

    @classmethod
    def from_vector(cls, x, P):
        return cls(phase_of(x), P)

    @property
    def M(self):
        return self.alpha.size

    @property
    def x(self):
        return np.sqrt(self.P / self.M) * np.exp(1j * self.alpha)


@dataclass(frozen=True)
class RisPhases:
    """RIS phase shifts ``theta`` in [-pi, pi)."""

    theta: np.ndarray

    def __post_init__(self):
        theta = wrap_phase(np.asarray(self.theta, dtype=float).ravel())
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, N):
        return cls(np.zeros(N))

    @property
    def N(self):
        return self.theta.size

    @property
    def v(self):
        return np.exp(-1j * self.theta)

    @property
    def psi(self):
        """Diagonal of the phase matrix, ``conj(v)``."""
        return np.exp(1j * self.theta)


@dataclass(frozen=True)
class PowerConstraints:
    """Per-user minimum received powers (watts) and conversion efficiency."""

    p: np.ndarray
    eta: float = 1.0

    def __post_init__(self):
        p = np.array(self.p, dtype=float, ndmin=1).ravel()
        if np.any(p < 0):
            raise ValueError("minimum powers must be non-negative")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "eta", float(self.eta))

    @classmethod
    def none(cls, K, eta=1.0):
        return cls(np.zeros(K), eta)

    @property
    def K(self):
        return self.p.size

    def channel_levels(self):
        """Thresholds on ``|h_k^H x|^2`` equivalent to ``Q_k >= p_k``."""
        if self.eta > 0:
            return self.p / self.eta
        return np.where(self.p > 0, np.inf, 0.0)


@dataclass
class SolveResult:
    """Outcome of one alternating solve.

    ``objective_trace[0]`` is the objective at the initial point and entry
    ``i`` the objective after outer iteration ``i``.
    """

    objective_trace: np.ndarray
    per_user_power: np.ndarray
    feasible: np.ndarray
    outer_iters: int
    inner_iters_x: int
    inner_iters_psi: int
    beamformer: TxBeamformer
    ris: RisPhases

    @property
    def objective(self):
        return float(self.objective_trace[-1])

    @property
    def all_feasible(self):
        return bool(np.all(self.feasible))


def compose_channel(channels, ris):
    """Effective channel ``H = H_r diag(exp(j theta)) G + H_d``."""
    if ris.N != channels.N:
        raise DimensionError(f"{ris.N} RIS phases for {channels.N} elements")
    return (channels.H_r * ris.psi) @ channels.G + channels.H_d


def received_powers(H, beamformer, eta=1.0):
    H = np.atleast_2d(H)
    if H.shape[1] != beamformer.M:
        raise DimensionError(f"H has {H.shape[1]} columns, beamformer has {beamformer.M} antennas")
    return eta * np.abs(H @ beamformer.x) ** 2


def total_power(Q):
    return float(np.sum(Q))


def check_feasibility(Q, constraints, tol=1e-9):
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    return np.asarray(Q) >= constraints.p - tol


def evaluate(channels, beamformer, ris, eta=1.0):
    """Per-user received powers of a complete configuration."""
    return received_powers(compose_channel(channels, ris), beamformer, eta)


def sca_bound_x(H, x_hat, x):
    """Linear minorant of ``||H x||^2`` expanded at ``x_hat``."""
    Hx_hat = H @ x_hat
    return float(2 * np.real(np.vdot(Hx_hat, H @ x)) - np.real(np.vdot(Hx_hat, Hx_hat)))


def build_ris_quadratic(channels, beamformer):
    """Lifted quadratic form of the RIS subproblem for a fixed beamformer.

    Returns
    -------
    l : ndarray, shape (K, N + 1)
        Row ``k`` is ``l_k = [c_k; a_k]`` with ``c_k = diag(h_{r,k}^*) G x``
        and ``a_k = h_{d,k}^H x``.
    L : ndarray, shape (N + 1, N + 1)
        ``sum_k l_k l_k^H``.
    """
    x = beamformer.x
    c = channels.H_r * (channels.G @ x)
    a = channels.H_d @ x
    l = np.column_stack([c, a])
    L = l.T @ l.conj()
    return l, L

"""
Alternating SCA/ADMM solver for constant-envelope sum-power maximization
with minimum received power constraints.

Each block (transmit phases, RIS phases) is handled the same way: the
convex quadratic objective is replaced by its linear minorant at the
current point, and the linearized problem is solved by consensus ADMM
with one local copy per user.  Both blocks have the shape

    max Re{s_hat^H R^H R s}  s.t.  |r_k s|^2 >= p_k,  |s_n| = const,

with ``R = H`` for the beamformer and ``R`` stacking ``l_k^H`` for the
lifted RIS vector ``b = [v; 1]``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .model import (
    RisPhases,
    SolveResult,
    TxBeamformer,
    build_ris_quadratic,
    check_feasibility,
    compose_channel,
    evaluate,
    phase_of,
)

log = logging.getLogger(__name__)

# objective weight of the block updates while no feasible point is known
SEEK_WEIGHT = 0.0


class InfeasibleConstraintError(ValueError):
    """A minimum-power constraint cannot be met by any point."""


class InfeasibleStartError(ValueError):
    """The initial point violates a minimum-power constraint."""


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    ``rho_x`` and ``rho_psi`` are relative penalties: the ADMM penalty used
    inside a block is ``rho * ||R||_2^2 / (2 K)``, which balances the
    linearized objective against the consensus term independently of the
    channel scale.  ``inner_stop_tol`` is relative to the entry modulus of
    the block variable.
    """

    rho_x: float = 1.0
    rho_psi: float = 1.0
    epsilon: float = 1e-4
    max_outer: int = 100
    max_inner: int = 500
    feasibility_tol: float = 1e-9
    inner_stop_tol: float = 1e-6
    warm_start: bool = False

    def __post_init__(self):
        for name in ("rho_x", "rho_psi", "epsilon", "inner_stop_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        if self.feasibility_tol < 0:
            raise ValueError("feasibility_tol must be non-negative")


@dataclass
class AdmmWorkspace:
    """Consensus ADMM state of one block.

    ``local`` and ``dual`` hold one row per user.
    """

    consensus: np.ndarray
    local: np.ndarray
    dual: np.ndarray
    rho: float
    iterations: int = 0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.local.shape != self.dual.shape or self.local.shape[1:] != self.consensus.shape:
            raise ValueError("local and dual copies must match the consensus variable")

    @classmethod
    def start(cls, init, K, rho):
        init = np.asarray(init, dtype=complex)
        return cls(init.copy(), np.tile(init, (K, 1)), np.zeros((K, init.size), complex), rho)

    def primal_residual(self):
        if self.local.shape[0] == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.local - self.consensus, axis=1)))


def _align(w, modulus):
    return modulus * np.exp(1j * phase_of(w))


def update_x(H, x_hat, workspace, P):
    """Closed-form global update of the beamformer block."""
    w = H.conj().T @ (H @ x_hat) + 2 * workspace.rho * np.sum(workspace.dual + workspace.local, axis=0)
    return _align(w, np.sqrt(P / w.size))


def update_b(L, b_hat, workspace):
    """Closed-form global update of the lifted RIS block."""
    w = L @ b_hat + 2 * workspace.rho * np.sum(workspace.dual + workspace.local, axis=0)
    return _align(w, 1.0)


def project_min_power(z, h, p):
    """Euclidean projection of ``z`` onto ``{e : |h^H e|^2 >= p}``.

    When ``h^H z == 0`` every boundary phase is equally close and the
    phase 0 is used.
    """
    z = np.asarray(z, dtype=complex)
    h = np.asarray(h, dtype=complex)
    return _project_rows(z[None, :], h.conj()[None, :], np.array([float(p)]))[0]


def _project_rows(Z, R, levels):
    """Row-wise projection of ``Z[k]`` onto ``|R[k] @ e|^2 >= levels[k]``."""
    s = np.einsum("kn,kn->k", R, Z)
    mag = np.abs(s)
    short = mag ** 2 < levels
    if not np.any(short):
        return Z
    norms = np.einsum("kn,kn->k", R.conj(), R).real
    bad = short & ((norms == 0) | ~np.isfinite(levels))
    if np.any(bad):
        raise InfeasibleConstraintError(
            f"minimum power of users {np.flatnonzero(bad).tolist()} cannot be reached")
    out = Z.copy()
    root = np.sqrt(levels[short])
    m, sk, nk = mag[short], s[short], norms[short]
    safe = np.where(m > 0, m, 1.0)
    # h h^H z / |h^H z| = conj(R) * s / |s|; phase of s taken as 0 when s == 0
    unit = np.where(m > 0, sk / safe, 1.0)
    out[short] += ((root - m) / nk * unit)[:, None] * R[short].conj()
    return out


def update_duals(workspace):
    """Scaled dual ascent on the consensus constraints, in place."""
    workspace.dual += workspace.local - workspace.consensus
    return workspace.dual


def _penalty(R, rho):
    K = max(R.shape[0], 1)
    scale = np.linalg.norm(R, 2) ** 2 if R.size else 0.0
    return rho * scale / (2 * K) if scale > 0 else rho


def _consensus_admm(R, s_init, levels, modulus, rho, config, workspace, global_update, direction):
    """Run consensus ADMM on one block.

    ``direction`` is the gradient of the linear minorant.  When its aligned
    point already meets every floor it is the exact block maximizer, and
    it is returned without iterating (``iterations == 0``).
    """
    K, n = R.shape
    reuse = (config.warm_start and workspace is not None
             and workspace.consensus.shape == (n,) and workspace.local.shape[0] == K)
    if reuse:
        workspace.consensus = np.array(s_init, dtype=complex)
        workspace.rho = _penalty(R, rho)
    else:
        fresh = AdmmWorkspace.start(s_init, K, _penalty(R, rho))
        if workspace is None:
            workspace = fresh
        else:
            _copy_into(workspace, fresh)
    workspace.iterations = 0
    if np.any(direction):
        candidate = _align(direction, modulus)
        if np.all(np.abs(R @ candidate) ** 2 >= levels):
            workspace.consensus = candidate
            workspace.local = np.tile(candidate, (K, 1))
            workspace.dual = np.zeros((K, n), complex)
            return workspace
    tol = config.inner_stop_tol * modulus * np.sqrt(n)
    for _ in range(config.max_inner):
        previous = workspace.consensus
        workspace.consensus = global_update(workspace)
        workspace.local = _project_rows(workspace.consensus - workspace.dual, R, levels)
        update_duals(workspace)
        workspace.iterations += 1
        if (workspace.primal_residual() < tol
                and np.linalg.norm(workspace.consensus - previous) < tol):
            break
    return workspace


def admm_x_block(H, x_init, constraints, config, workspace=None, objective_weight=1.0):
    """Maximize the linear minorant of ``||H x||^2`` expanded at ``x_init``.

    ``x_init`` is both the expansion point and the ADMM starting point.
    Pass a workspace to read the iteration count or to warm start.
    ``objective_weight`` scales the objective against the consensus
    penalty; 0 turns the run into a pure feasibility search.
    """
    H = np.atleast_2d(H)
    x_hat = np.asarray(x_init, dtype=complex)
    P = float(np.vdot(x_hat, x_hat).real)
    pull = objective_weight * x_hat
    ws = _consensus_admm(
        H, x_hat, constraints.channel_levels(), np.sqrt(P / x_hat.size), config.rho_x, config,
        workspace, lambda ws: update_x(H, pull, ws, P), H.conj().T @ (H @ pull))
    return ws.consensus.copy()


def admm_psi_block(l_vectors, L, b_init, constraints, config, workspace=None, objective_weight=1.0):
    """Maximize the linear minorant of ``b^H L b`` expanded at ``b_init``."""
    b_hat = np.asarray(b_init, dtype=complex)
    R = np.asarray(l_vectors, dtype=complex).conj()
    pull = objective_weight * b_hat
    ws = _consensus_admm(
        R, b_hat, constraints.channel_levels(), 1.0, config.rho_psi, config,
        workspace, lambda ws: update_b(L, pull, ws), L @ pull)
    return ws.consensus.copy()


def _copy_into(target, source):
    target.consensus, target.local, target.dual = source.consensus, source.local, source.dual
    target.rho, target.iterations = source.rho, source.iterations


def recover_ris_phases(b):
    """RIS phases from the lifted vector ``b = t [v; 1]``."""
    b = np.asarray(b, dtype=complex)
    v = b[:-1] / b[-1]
    return RisPhases(-np.angle(v))


def initial_beamformer(H, P):
    """Phases of the principal right singular vector of ``H``."""
    H = np.atleast_2d(H)
    _, _, vh = np.linalg.svd(H)
    return TxBeamformer(phase_of(vh[0].conj()), P)


def initial_point(channels, P, starts=8, passes=5, theta0=None, seed=0):
    """Screen several starting points and keep the one with the largest total power.

    Candidates are zero RIS phases, ``theta0`` when given and random phase
    draws.  Each is polished by ``passes`` rounds of the unconstrained
    fixed-point updates ``x <- phase(H^H H x)``, ``b <- phase(L b)``, which
    never decrease the total power.  Deterministic for a fixed ``seed``.

    Returns
    -------
    (TxBeamformer, RisPhases)
    """
    rng = np.random.default_rng(seed)
    N = channels.N
    candidates = [np.zeros(N)] + ([np.asarray(theta0, dtype=float)] if theta0 is not None else [])
    candidates += [rng.uniform(-np.pi, np.pi, N) for _ in range(max(starts - len(candidates), 0))]
    if N == 0:
        candidates = candidates[:1]
    best = None
    for theta in candidates:
        ris = RisPhases(theta)
        bf = initial_beamformer(compose_channel(channels, ris), P)
        for _ in range(passes):
            H = compose_channel(channels, ris)
            bf = TxBeamformer(phase_of(H.conj().T @ (H @ bf.x)), P)
            if N:
                _, L = build_ris_quadratic(channels, bf)
                ris = recover_ris_phases(np.exp(1j * phase_of(L @ np.append(ris.v, 1.0))))
        value = float(np.sum(evaluate(channels, bf, ris)))
        if best is None or value > best[0]:
            best = (value, bf, ris)
    return best[1], best[2]


def _violation(Q, p):
    return float(np.max(p - Q, initial=0.0))


class _Incumbent:
    def __init__(self, channels, constraints, tol, beamformer, ris):
        self.channels, self.constraints, self.tol = channels, constraints, tol
        self.beamformer, self.ris = beamformer, ris
        self.Q = evaluate(channels, beamformer, ris, constraints.eta)

    @property
    def feasible(self):
        return bool(np.all(check_feasibility(self.Q, self.constraints, self.tol)))

    @property
    def objective(self):
        return float(np.sum(self.Q))

    def offer(self, beamformer=None, ris=None):
        """Keep the candidate if it is at least as good; return whether it was kept."""
        beamformer = beamformer or self.beamformer
        ris = ris or self.ris
        Q = evaluate(self.channels, beamformer, ris, self.constraints.eta)
        feasible = bool(np.all(check_feasibility(Q, self.constraints, self.tol)))
        if feasible:
            keep = not self.feasible or np.sum(Q) >= self.objective
        else:
            p = self.constraints.p
            keep = not self.feasible and _violation(Q, p) < _violation(self.Q, p)
        if keep:
            self.beamformer, self.ris, self.Q = beamformer, ris, Q
        return keep


def spmc_sca_admm(channels, constraints, x0, ris0, config=SolverConfig(), allow_infeasible_start=False,
                  optimize_ris=True):
    """Jointly optimize transmit and RIS phases.

    Parameters
    ----------
    channels : ChannelSet
    constraints : PowerConstraints
    x0 : TxBeamformer
        Starting beamformer; its power ``P`` is kept throughout.
    ris0 : RisPhases
    config : SolverConfig
    allow_infeasible_start : bool
        If False an infeasible start raises ``InfeasibleStartError``.  If
        True the solver first moves toward feasibility, accepting any
        candidate that lowers the worst constraint violation, and the
        objective trace is only guaranteed non-decreasing once a feasible
        point has been reached.
    optimize_ris : bool
        If False the RIS phases stay at ``ris0`` and only the beamformer
        is optimized.

    Returns
    -------
    SolveResult
        The best iterate encountered.  A block update that lowers the
        objective or breaks feasibility is discarded.
    """
    if constraints.K != channels.K:
        raise ValueError(f"{constraints.K} power constraints for {channels.K} users")
    inc = _Incumbent(channels, constraints, config.feasibility_tol, x0, ris0)
    if not inc.feasible and not allow_infeasible_start:
        raise InfeasibleStartError(
            f"initial point violates minimum power by {_violation(inc.Q, constraints.p):.3e} W")
    P = x0.P
    trace = [inc.objective]
    ws_x = AdmmWorkspace.start(x0.x, channels.K, 1.0)
    ws_b = AdmmWorkspace.start(np.append(ris0.v, 1.0), channels.K, 1.0)
    inner_x = inner_psi = 0
    outer = 0
    for outer in range(1, config.max_outer + 1):
        before, was_feasible = inc.objective, inc.feasible
        shortfall_before = _violation(inc.Q, constraints.p)
        H = compose_channel(channels, inc.ris)
        weight = 1.0 if inc.feasible else SEEK_WEIGHT
        x = admm_x_block(H, inc.beamformer.x, constraints, config, ws_x, weight)
        inner_x += ws_x.iterations
        kept_x = inc.offer(beamformer=TxBeamformer.from_vector(x, P))

        kept_psi = False
        if optimize_ris:
            l, L = build_ris_quadratic(channels, inc.beamformer)
            weight = 1.0 if inc.feasible else SEEK_WEIGHT
            b = admm_psi_block(l, L, np.append(inc.ris.v, 1.0), constraints, config, ws_b, weight)
            inner_psi += ws_b.iterations
            kept_psi = inc.offer(ris=recover_ris_phases(b))

        trace.append(inc.objective)
        log.debug("outer %d: objective %.6e feasible %s", outer, inc.objective, inc.feasible)
        if not (kept_x or kept_psi):
            break
        if was_feasible:
            if inc.objective - before <= config.epsilon * abs(before):
                break
        elif not inc.feasible:
            shortfall = _violation(inc.Q, constraints.p)
            if shortfall_before - shortfall <= config.epsilon * shortfall_before:
                break

    return SolveResult(
        objective_trace=np.array(trace),
        per_user_power=inc.Q,
        feasible=check_feasibility(inc.Q, constraints, config.feasibility_tol),
        outer_iters=outer,
        inner_iters_x=inner_x,
        inner_iters_psi=inner_psi,
        beamformer=inc.beamformer,
        ris=inc.ris,
    )

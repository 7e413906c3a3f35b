"""
Seeded channel generation for the two-RIS, multi-user deployment.

Layout (2-D, meters): the BS sits at the origin with its ULA along the
x-axis.  RIS 1 is at distance ``d1`` and angle ``delta0`` from the array
axis, RIS 2 at distance ``d2`` and angle ``delta2``; both RIS arrays are
parallel to the BS array.  The users served by RIS 1 are centered at
distance ``d3`` from it in direction ``delta1``; those served by RIS 2 at
distance ``d4`` in the mirrored direction ``pi - delta1``.  Users inside
a group sit on a line parallel to the x-axis, ``user_spacing`` apart.

Every link draws from its own PCG64 stream seeded by
``SeedSequence([seed, link kind, indices...])``, so changing one
dimension of the scenario does not reshuffle the other links.
"""

from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml
from scipy.constants import speed_of_light

from .model import ChannelSet

BS = "bs"

# link kinds in the seed sequence
_BS_RIS, _BS_USER, _RIS_USER, _RIS_PHASE = 1, 2, 3, 4


def steering_vector(count, spacing_wavelengths, angle):
    """ULA response ``exp(j 2 pi spacing m sin(angle))``, ``m = 0..count-1``."""
    if count < 1:
        raise ValueError("array needs at least one element")
    m = np.arange(count)
    return np.exp(2j * np.pi * spacing_wavelengths * m * np.sin(angle))


def reference_gain(f_c, d0=1.0):
    """Free-space power gain ``(lambda / (4 pi d0))^2`` at the reference distance."""
    return (speed_of_light / f_c / (4 * np.pi * d0)) ** 2


def pathloss_gain(d, n_exp, f_c, d0=1.0, ref_gain_db=None):
    """Amplitude gain of a link of length ``d`` with pathloss exponent ``n_exp``.

    The power gain at ``d0`` is the free-space value unless ``ref_gain_db``
    is given.
    """
    if not d > 0:
        raise ValueError(f"link distance must be positive, got {d}")
    c0 = reference_gain(f_c, d0) if ref_gain_db is None else 10 ** (ref_gain_db / 10)
    return np.sqrt(c0) * (d / d0) ** (-n_exp / 2)


def _gaussian(rows, cols, rng):
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def rician_matrix(rows, cols, factor, los, rng):
    """Unit-power Rician fading around the line-of-sight matrix ``los``."""
    if factor < 0:
        raise ValueError("Rician factor must be non-negative")
    los = np.broadcast_to(np.asarray(los, dtype=complex), (rows, cols))
    scatter = _gaussian(rows, cols, rng)
    return np.sqrt(factor / (1 + factor)) * los + np.sqrt(1 / (1 + factor)) * scatter


def rayleigh_matrix(rows, cols, rng):
    return rician_matrix(rows, cols, 0.0, np.ones((rows, cols)), rng)


def link_rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass(frozen=True)
class ScenarioConfig:
    """Deployment parameters.

    ``ris_elements`` lists the element count of each RIS (one or two).
    ``user_groups[k]`` is the RIS index serving user ``k``; by default the
    first half of the users belong to RIS 0 and the rest to RIS 1.
    ``blocked_links`` holds ``(source, user)`` pairs drawn as Rayleigh,
    where ``source`` is ``"bs"`` or a RIS index; by default these are all
    direct links and all cross-group RIS links.  Links not listed are
    Rician with factor ``rician_hr``.

    ``ref_gain_db`` is the power gain of every link at 1 m.  With 0 dB the
    pathloss is ``d^-n``; ``None`` selects the free-space value
    ``(lambda / 4 pi)^2``, which weakens each two-hop RIS path by that
    factor a second time relative to the direct links.
    """

    M: int = 8
    K: int = 8
    ris_elements: tuple = (16, 16)
    carrier_freq: float = 755e6
    tx_power: float = 10.0
    rician_g: float = 2.0
    rician_hr: float = 2.0
    pathloss_exp: float = 3.0
    ref_gain_db: float = 0.0
    d1: float = 8.0
    d2: float = 7.0
    d3: float = 4.0
    d4: float = 5.0
    delta0: float = np.pi / 4
    delta1: float = np.pi / 4
    delta2: float = np.pi / 3
    element_spacing: float = 0.5
    user_spacing: float = 0.5
    user_groups: tuple = None
    blocked_links: tuple = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ris_elements", tuple(int(n) for n in self.ris_elements))
        if self.user_groups is not None:
            object.__setattr__(self, "user_groups", tuple(int(g) for g in self.user_groups))
        if self.blocked_links is not None:
            links = tuple(sorted({(_source(s), int(k)) for s, k in self.blocked_links}, key=str))
            object.__setattr__(self, "blocked_links", links)
        if self.M < 1 or self.K < 1:
            raise ValueError("M and K must be positive")
        if not 1 <= self.L <= 2 or any(n < 0 for n in self.ris_elements):
            raise ValueError("one or two RISs with non-negative element counts are supported")
        for name in ("carrier_freq", "tx_power", "d1", "d2", "d3", "d4", "element_spacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rician_g < 0 or self.rician_hr < 0:
            raise ValueError("Rician factors must be non-negative")
        if self.user_groups is not None and (
                len(self.user_groups) != self.K or any(not 0 <= g < self.L for g in self.user_groups)):
            raise ValueError("user_groups must assign each user to an existing RIS")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def L(self):
        return len(self.ris_elements)

    @property
    def N(self):
        return sum(self.ris_elements)

    def groups(self):
        if self.user_groups is not None:
            return self.user_groups
        return tuple(k * self.L // self.K for k in range(self.K))

    def blocked(self):
        if self.blocked_links is not None:
            return set(self.blocked_links)
        groups = self.groups()
        out = {(BS, k) for k in range(self.K)}
        out |= {(l, k) for k in range(self.K) for l in range(self.L) if l != groups[k]}
        return out

    def replace(self, **changes):
        return type(self)(**{**asdict(self), **changes})

    def with_ris_total(self, N):
        """Same scenario with ``N`` elements split as evenly as possible over the RISs."""
        base, extra = divmod(int(N), self.L)
        return self.replace(ris_elements=tuple(base + (l < extra) for l in range(self.L)))

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)


def _source(s):
    return BS if str(s).lower() == BS else int(s)


def save_scenario(config, path):
    with open(path, "w") as fh:
        yaml.safe_dump({"scenario": config.to_dict()}, fh, sort_keys=False)


def load_scenario(path):
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return ScenarioConfig.from_dict(data.get("scenario", data))


@dataclass(frozen=True)
class Layout:
    """Coordinates (meters) of the BS, the RIS centers and the users."""

    bs: np.ndarray
    ris: np.ndarray
    users: np.ndarray = field(repr=False)


def layout(config):
    bs = np.zeros(2)
    ris = [config.d1 * np.array([np.cos(config.delta0), np.sin(config.delta0)]),
           config.d2 * np.array([np.cos(config.delta2), np.sin(config.delta2)])][:config.L]
    directions = [config.delta1, np.pi - config.delta1]
    offsets = [config.d3, config.d4]
    groups = config.groups()
    users = np.zeros((config.K, 2))
    for l in range(config.L):
        members = [k for k in range(config.K) if groups[k] == l]
        center = ris[l] + offsets[l] * np.array([np.cos(directions[l]), np.sin(directions[l])])
        shift = (np.arange(len(members)) - (len(members) - 1) / 2) * config.user_spacing
        users[members] = center + shift[:, None] * np.array([1.0, 0.0])
    return Layout(bs, np.array(ris), users)


def _distance(a, b):
    d = float(np.linalg.norm(np.asarray(b) - np.asarray(a)))
    if not d > 0:
        raise ValueError("scenario geometry places two nodes at the same point")
    return d


def _axis_angle(src, dst):
    """Angle from broadside of an x-axis ULA at ``src`` toward ``dst``."""
    u = (np.asarray(dst) - np.asarray(src)) / _distance(src, dst)
    return np.arcsin(np.clip(u[0], -1.0, 1.0))


def build_scenario(config):
    """Draw the channels of one realization; deterministic in ``config``."""
    geo = layout(config)
    blocked = config.blocked()
    s, n, fc = config.element_spacing, config.pathloss_exp, config.carrier_freq
    M, K = config.M, config.K

    def gain(a, b):
        return pathloss_gain(_distance(a, b), n, fc, ref_gain_db=config.ref_gain_db)

    H_d = np.zeros((K, M), complex)
    for k in range(K):
        rng = link_rng(config.seed, _BS_USER, k)
        if (BS, k) in blocked:
            row = rayleigh_matrix(1, M, rng)
        else:
            los = steering_vector(M, s, _axis_angle(geo.bs, geo.users[k]))[None, :]
            row = rician_matrix(1, M, config.rician_hr, los, rng)
        H_d[k] = gain(geo.bs, geo.users[k]) * row[0]

    S_blocks, H_r_blocks = [], []
    for l, N_l in enumerate(config.ris_elements):
        pos = geo.ris[l]
        if N_l == 0:
            S_blocks.append(np.zeros((0, M)))
            H_r_blocks.append(np.zeros((K, 0)))
            continue
        arrive = steering_vector(N_l, s, _axis_angle(pos, geo.bs))
        depart = steering_vector(M, s, _axis_angle(geo.bs, pos))
        los = np.outer(arrive, depart.conj())
        S_l = rician_matrix(N_l, M, config.rician_g, los, link_rng(config.seed, _BS_RIS, l))
        S_blocks.append(gain(geo.bs, pos) * S_l)

        H_rl = np.zeros((K, N_l), complex)
        for k in range(K):
            rng = link_rng(config.seed, _RIS_USER, l, k)
            if (l, k) in blocked:
                row = rayleigh_matrix(1, N_l, rng)
            else:
                los = steering_vector(N_l, s, _axis_angle(pos, geo.users[k]))[None, :]
                row = rician_matrix(1, N_l, config.rician_hr, los, rng)
            H_rl[k] = gain(pos, geo.users[k]) * row[0]
        H_r_blocks.append(H_rl)

    return ChannelSet(
        H_d=H_d,
        H_r=np.hstack(H_r_blocks),
        S=np.vstack(S_blocks),
        beta=np.ones(config.N),
        sections=config.ris_elements,
    )


def random_ris_phases(config):
    """Uniform phases on [-pi, pi) from the scenario's own stream."""
    return np.concatenate([
        link_rng(config.seed, _RIS_PHASE, l).uniform(-np.pi, np.pi, N_l)
        for l, N_l in enumerate(config.ris_elements)
    ]) if config.N else np.zeros(0)

"""Stochastic particle (DSMC) integrator for the homogeneous inelastic
Boltzmann equation, in original variables or in self-similar (rescaled)
variables where an anti-drift -div(v g) is added.

Collisions use the no-time-counter scheme: with n particles of weight
rho/n, an unordered pair {i, j} collides at rate (rho/n) |u_ij| (unit
kernel normalization), so over a step dt the expected number of
candidate pairs at the majorant rate is

    M = n * rho * u_max * dt / 2,

each candidate accepted with probability |u|/u_max. The anti-drift is
split around the collision substep (Strang), and its characteristics
are integrated exactly: velocities scale by exp(dt).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    RestitutionLaw,
    delta_energy,
    make_kernel,
    post_collisional,
    sample_sigma,
)

__all__ = [
    "FRAME_ORIGINAL",
    "FRAME_RESCALED",
    "SimConfig",
    "ParticleEnsemble",
    "CollisionTally",
    "init_ensemble",
    "collide_step",
    "drift_rescale_step",
    "advance",
    "run",
    "RunOutput",
]

FRAME_ORIGINAL = "original"
FRAME_RESCALED = "rescaled"


@dataclass
class SimConfig:
    e: float = 0.8
    kernel: dict = field(default_factory=lambda: {"kind": "isotropic"})
    dim: int = 3
    particles: int = 10000
    dt: float | None = None  # None: 0.01 / (rho * u_max) at init
    t_final: float = 1.0
    frame: str = FRAME_ORIGINAL
    initial: dict = field(default_factory=lambda: {"kind": "gaussian", "temperature": 1.0})
    seed: int = 0
    cadence: float = 0.05
    rho: float = 1.0
    snapshot_times: tuple = ()
    bins: int = 64
    u_max_safety: float = 4.0
    refresh_interval: int = 200
    replicas: int = 1

    def validate(self):
        errs = []
        if not 0.0 <= self.e <= 1.0:
            errs.append(f"restitution out of [0,1]: {self.e}")
        if self.dim < 2:
            errs.append("dim must be >= 2")
        if self.particles < 2:
            errs.append("particles must be >= 2")
        if self.dt is not None and self.dt <= 0:
            errs.append("dt must be positive")
        if self.t_final <= 0:
            errs.append("t_final must be positive")
        if self.frame not in (FRAME_ORIGINAL, FRAME_RESCALED):
            errs.append(f"unknown frame: {self.frame}")
        if self.rho <= 0:
            errs.append("rho must be positive")
        if self.cadence <= 0:
            errs.append("cadence must be positive")
        return errs


class ParticleEnsemble:
    """Weighted velocity particles with a frame tag.

    Total mass rho = weight * count is invariant; the majorant u_max
    tracks (an upper estimate of) the largest pairwise relative speed.
    """

    def __init__(self, velocities, weight, frame, rng, u_max, time=0.0):
        self.v = np.asarray(velocities, dtype=float)
        if self.v.ndim != 2 or len(self.v) < 2:
            raise ValueError("need an (n, dim) velocity array with n >= 2")
        self.weight = float(weight)
        self.frame = frame
        self.rng = rng
        self.u_max = float(u_max)
        self.time = float(time)
        self.collisions = 0
        self.candidates = 0
        self.majorant_violations = 0
        self.collision_denergy = 0.0  # cumulative tallies for the ledger
        self.drift_denergy = 0.0

    @property
    def n(self):
        return len(self.v)

    @property
    def dim(self):
        return self.v.shape[1]

    @property
    def mass(self):
        return self.weight * self.n

    @property
    def momentum(self):
        return self.weight * self.v.sum(axis=0)

    @property
    def energy(self):
        return self.weight * float(np.sum(self.v * self.v))

    def copy(self):
        dup = ParticleEnsemble(
            self.v.copy(), self.weight, self.frame, self.rng, self.u_max, self.time
        )
        dup.collisions = self.collisions
        dup.candidates = self.candidates
        dup.majorant_violations = self.majorant_violations
        dup.collision_denergy = self.collision_denergy
        dup.drift_denergy = self.drift_denergy
        return dup


@dataclass
class CollisionTally:
    denergy: float = 0.0
    denergy_sq: float = 0.0  # sum of squared per-pair energy increments
    candidates: int = 0
    accepted: int = 0
    violations: int = 0


def _sample_initial(spec, n, dim, rng):
    kind = spec.get("kind")
    if kind == "gaussian":
        t = float(spec.get("temperature", 1.0))
        return rng.normal(scale=math.sqrt(t), size=(n, dim))
    if kind == "uniform_ball":
        r = float(spec.get("radius", 1.0))
        z = rng.normal(size=(n, dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return r * z * rng.random(n)[:, None] ** (1.0 / dim)
    if kind == "two_bump":
        center = np.asarray(spec.get("center", [2.0] + [0.0] * (dim - 1)), dtype=float)
        if center.shape != (dim,):
            raise ValueError("two_bump center must have length dim")
        width = float(spec.get("width", 0.3))
        v = rng.normal(scale=width, size=(n, dim))
        signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        return v + signs[:, None] * center[None, :]
    if kind == "from_file":
        path = spec["path"]
        try:
            v = np.loadtxt(path, delimiter=",", ndmin=2)
        except Exception as exc:
            raise ValueError(f"could not read initial velocities from {path}: {exc}")
        if v.shape[1] != dim:
            raise ValueError(f"{path}: expected {dim} columns, got {v.shape[1]}")
        return v[:n] if len(v) >= n else v
    raise ValueError(f"unknown initial condition kind: {kind!r}")


def _pairwise_max_speed(v, rng, frac=0.01, cap=512):
    m = min(max(2, int(frac * len(v))), cap, len(v))
    idx = rng.choice(len(v), size=m, replace=False)
    sub = v[idx]
    d = np.linalg.norm(sub[:, None, :] - sub[None, :, :], axis=2)
    return float(d.max())


def init_ensemble(config):
    """Sample the initial condition, center momentum exactly, set the
    particle weight for total mass rho, and seed the relative-speed
    majorant from a subsample."""
    errs = config.validate()
    if errs:
        raise ValueError("; ".join(errs))
    rng = np.random.default_rng(config.seed)
    v = _sample_initial(config.initial, config.particles, config.dim, rng)
    v = v - v.mean(axis=0, keepdims=True)  # zero momentum exactly
    weight = config.rho / len(v)
    u_max = config.u_max_safety * max(_pairwise_max_speed(v, rng), 1e-12)
    return ParticleEnsemble(v, weight, config.frame, rng, u_max)


def _independent_prefix(pairs):
    """Boolean mask of pairs whose two particles do not appear in any
    earlier pair of the batch (so they can be collided in parallel)."""
    flat = pairs.ravel()  # interleaved i0, j0, i1, j1, ...
    uniq, first = np.unique(flat, return_index=True)
    firstpos = first[np.searchsorted(uniq, flat)]
    pos = np.arange(len(flat))
    fresh = (firstpos == pos).reshape(-1, 2)
    return fresh[:, 0] & fresh[:, 1]


def collide_step(ens, dt, law, kernel):
    """One no-time-counter collision substep.

    Candidate count uses stochastic rounding of n rho u_max dt / 2;
    acceptance is |u|/u_max against the majorant that generated the
    count. Accepted pairs are applied in duplicate-free groups so a
    particle hit twice in one step sees its updated velocity. Mass and
    momentum are conserved pairwise; energy increments are tallied from
    the realized velocity updates.
    """
    n = ens.n
    rho = ens.mass
    tally = CollisionTally()
    expected = 0.5 * n * rho * ens.u_max * dt
    m_cand = int(expected) + (1 if ens.rng.random() < expected - int(expected) else 0)
    tally.candidates = m_cand
    if m_cand == 0:
        return tally
    u_max_used = ens.u_max

    i = ens.rng.integers(0, n, size=m_cand)
    j = ens.rng.integers(0, n, size=m_cand)
    clash = i == j
    while np.any(clash):
        j[clash] = ens.rng.integers(0, n, size=int(clash.sum()))
        clash = i == j

    ru = np.linalg.norm(ens.v[i] - ens.v[j], axis=1)
    over = ru > ens.u_max
    if np.any(over):
        tally.violations = int(over.sum())
        ens.u_max = 1.05 * float(ru[over].max())
    accept = ens.rng.random(m_cand) * u_max_used < ru
    pairs = np.stack([i[accept], j[accept]], axis=1)

    w = ens.weight
    while len(pairs):
        free = _independent_prefix(pairs)
        batch, pairs = pairs[free], pairs[~free]
        bi, bj = batch[:, 0], batch[:, 1]
        vi, vj = ens.v[bi], ens.v[bj]
        u = vi - vj
        runow = np.linalg.norm(u, axis=1)
        live = runow > 0.0
        if not np.all(live):
            batch, bi, bj = batch[live], bi[live], bj[live]
            vi, vj, u, runow = vi[live], vj[live], u[live], runow[live]
        if len(batch) == 0:
            continue
        sigma = sample_sigma(ens.rng, u / runow[:, None], kernel)
        vp, vsp = post_collisional(vi, vj, sigma, law)
        de = w * (
            np.sum(vp * vp, axis=1) + np.sum(vsp * vsp, axis=1)
            - np.sum(vi * vi, axis=1) - np.sum(vj * vj, axis=1)
        )
        ens.v[bi] = vp
        ens.v[bj] = vsp
        tally.denergy += float(de.sum())
        tally.denergy_sq += float(np.sum(de * de))
        tally.accepted += len(batch)

    ens.collisions += tally.accepted
    ens.candidates += tally.candidates
    ens.majorant_violations += tally.violations
    ens.collision_denergy += tally.denergy
    return tally


def drift_rescale_step(ens, dt):
    """Exact anti-drift transport: velocities scale by exp(dt); only
    meaningful in the rescaled frame."""
    if ens.frame != FRAME_RESCALED:
        raise RuntimeError("drift step called on an original-frame ensemble")
    if dt == 0.0:
        return 0.0
    e_before = ens.energy
    factor = math.exp(dt)
    ens.v *= factor
    ens.u_max *= factor
    de = ens.energy - e_before
    ens.drift_denergy += de
    return de


def advance(ens, dt, law, kernel):
    """One full step: collisions only in the original frame; Strang
    half-drift / collide / half-drift in the rescaled frame."""
    if ens.frame == FRAME_RESCALED:
        drift_rescale_step(ens, 0.5 * dt)
        tally = collide_step(ens, dt, law, kernel)
        drift_rescale_step(ens, 0.5 * dt)
    else:
        tally = collide_step(ens, dt, law, kernel)
    ens.time += dt
    return tally


# ---------------------------------------------------------------------------
# run driver
# ---------------------------------------------------------------------------

MOMENT_SPEED_POWERS = (3, 4, 6, 8)  # |v|^k columns in the moment series


@dataclass
class RunOutput:
    config: SimConfig
    times: np.ndarray
    mass: np.ndarray
    momentum: np.ndarray  # (steps, dim)
    energy: np.ndarray
    speed_moments: dict  # power -> array
    snapshots: list  # (time, velocities copy) pairs
    tallies: dict
    metadata: dict

    def moment_rows(self):
        rows = []
        for k in range(len(self.times)):
            row = [self.times[k], self.mass[k], *self.momentum[k], self.energy[k]]
            row += [self.speed_moments[p][k] for p in MOMENT_SPEED_POWERS]
            rows.append(row)
        return rows


def _record(ens, rec):
    rec["times"].append(ens.time)
    rec["mass"].append(ens.mass)
    rec["momentum"].append(ens.momentum.copy())
    rec["energy"].append(ens.energy)
    speeds = np.linalg.norm(ens.v, axis=1)
    for p in MOMENT_SPEED_POWERS:
        rec[f"m{p}"].append(ens.weight * float(np.sum(speeds**p)))


def default_dt(config, ens):
    return 0.01 / (ens.mass * ens.u_max)


def run(config, law=None, kernel=None, snapshot_copy=True):
    """Deterministic (config, seed) -> observables driver.

    Records mass/momentum/energy/|v|^k moments at the configured
    cadence, keeps velocity snapshots at snapshot_times and t_final,
    and refreshes the majorant periodically from a subsample.
    """
    law = law or RestitutionLaw(config.e)
    kernel = kernel or make_kernel(config.kernel, config.dim)
    ens = init_ensemble(config)
    auto_dt = config.dt is None
    dt = config.dt if not auto_dt else default_dt(config, ens)

    rec = {"times": [], "mass": [], "momentum": [], "energy": []}
    for p in MOMENT_SPEED_POWERS:
        rec[f"m{p}"] = []
    _record(ens, rec)

    snap_times = sorted(set(list(config.snapshot_times) + [config.t_final]))
    snapshots = []
    out_times = np.arange(1, int(math.ceil(config.t_final / config.cadence - 1e-9)) + 1) * config.cadence
    out_times = np.unique(np.concatenate([out_times, np.asarray(snap_times)]))
    out_times = out_times[(out_times <= config.t_final + 1e-12) & (out_times > 1e-12)]
    # collapse float-level duplicates (cadence multiples vs snapshot times)
    keep = np.ones(len(out_times), dtype=bool)
    keep[1:] = np.diff(out_times) > 1e-9
    out_times = out_times[keep]

    halvings = 0
    steps = 0
    next_refresh = config.refresh_interval
    for t_out in out_times:
        while ens.time < t_out - 1e-12:
            step = min(dt, t_out - ens.time)
            tally = advance(ens, step, law, kernel)
            steps += 1
            if tally.candidates > 50 and tally.accepted > 0.5 * tally.candidates:
                dt *= 0.5
                halvings += 1
            if steps >= next_refresh:
                next_refresh += config.refresh_interval
                est = _pairwise_max_speed(ens.v, ens.rng)
                ens.u_max = min(ens.u_max, max(2.0 * est, 1e-12))
                if auto_dt:
                    # keep the per-step collision probability fixed as
                    # the relative-speed scale drifts (cooling/heating)
                    dt = default_dt(config, ens) / 2.0**halvings
        _record(ens, rec)
        for st in snap_times:
            if abs(ens.time - st) <= 1e-9 and snapshot_copy:
                snapshots.append((ens.time, ens.v.copy()))
                break

    tallies = {
        "collisions": ens.collisions,
        "candidates": ens.candidates,
        "acceptance": ens.collisions / max(ens.candidates, 1),
        "majorant_violations": ens.majorant_violations,
        "collision_denergy": ens.collision_denergy,
        "drift_denergy": ens.drift_denergy,
        "dt_final": dt,
        "dt_halvings": halvings,
        "u_max_final": ens.u_max,
        "steps": steps,
    }
    metadata = {
        "seed": config.seed,
        "frame": config.frame,
        "e": config.e,
        "dim": config.dim,
        "particles": config.particles,
        "rho": config.rho,
        "kernel": config.kernel,
    }
    return RunOutput(
        config=config,
        times=np.asarray(rec["times"]),
        mass=np.asarray(rec["mass"]),
        momentum=np.asarray(rec["momentum"]),
        energy=np.asarray(rec["energy"]),
        speed_moments={p: np.asarray(rec[f"m{p}"]) for p in MOMENT_SPEED_POWERS},
        snapshots=snapshots,
        tallies=tallies,
        metadata=metadata,
    ), ens

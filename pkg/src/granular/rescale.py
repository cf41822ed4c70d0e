"""Exact changes of variables between original solutions f and
rescaled solutions g.

With scaling rate c_star (fixed to 1 by convention in all presets),

    K(t) = (1 + c t)^N,   T(t) = ln(1 + c t)/c,   V(t) = 1 + c t,

and g(T(t), w) is the law of V(t) v when v is distributed by f(t, .).
At the particle level both maps are exact velocity scalings, so moments
transfer as |.|^k norms times V^{+-k}.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .dsmc import FRAME_ORIGINAL, FRAME_RESCALED, ParticleEnsemble

__all__ = [
    "ScalingState",
    "scaling_functions",
    "forward_map",
    "inverse_map",
    "transfer_moment_series",
]


@dataclass(frozen=True)
class ScalingState:
    c_star: float = 1.0
    dim: int = 3

    def __post_init__(self):
        if self.c_star <= 0:
            raise ValueError("c_star must be positive")


def scaling_functions(t, state=ScalingState()):
    """(K, T, V) at original time t >= 0; K = V^N identically."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    v = 1.0 + state.c_star * np.asarray(t, dtype=float)
    k = v**state.dim
    tau = np.log(v) / state.c_star
    return k, tau, v


def forward_map(ens, state=ScalingState()):
    """Original-frame ensemble at time t -> rescaled ensemble at
    tau = T(t): velocities scale by V(t), weights unchanged."""
    if ens.frame != FRAME_ORIGINAL:
        raise ValueError("forward_map expects an original-frame ensemble")
    _, tau, v_fac = scaling_functions(ens.time, state)
    out = ParticleEnsemble(
        ens.v * v_fac, ens.weight, FRAME_RESCALED, ens.rng, ens.u_max * v_fac, float(tau)
    )
    return out


def inverse_map(ens, state=ScalingState()):
    """Rescaled ensemble at tau -> original ensemble at t with
    T(t) = tau, i.e. t = (exp(c tau) - 1)/c; exact inverse of
    forward_map up to floating-point rounding."""
    if ens.frame != FRAME_RESCALED:
        raise ValueError("inverse_map expects a rescaled-frame ensemble")
    c = state.c_star
    t = (math.exp(c * ens.time) - 1.0) / c
    v_fac = 1.0 + c * t  # = exp(c tau)
    out = ParticleEnsemble(
        ens.v / v_fac, ens.weight, FRAME_ORIGINAL, ens.rng, ens.u_max / v_fac, t
    )
    return out


def transfer_moment_series(times, values, k, direction, state=ScalingState(), target_times=None):
    """Transfer a |.|^k moment series between frames.

    direction "g2f": input sampled in rescaled time tau, output at
    t = (exp(c tau) - 1)/c with value * V^{-k}; "f2g" is the inverse.
    Returns (target_times, transferred_values, source_times). With
    target_times given, resamples by monotone cubic interpolation in
    the source time variable and refuses to extrapolate.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    c = state.c_star
    if direction == "g2f":
        t_nat = (np.exp(c * times) - 1.0) / c
        fac = (1.0 + c * t_nat) ** (-k)
    elif direction == "f2g":
        t_nat = np.log(1.0 + c * times) / c
        fac = (1.0 + c * times) ** k
    else:
        raise ValueError("direction must be 'g2f' or 'f2g'")
    out_vals = values * fac
    if target_times is None:
        return t_nat, out_vals, times
    target_times = np.asarray(target_times, dtype=float)
    if target_times.min() < t_nat.min() - 1e-12 or target_times.max() > t_nat.max() + 1e-12:
        raise ValueError("target times extrapolate outside the sampled window")
    interp = PchipInterpolator(t_nat, out_vals)
    return target_times, interp(target_times), times

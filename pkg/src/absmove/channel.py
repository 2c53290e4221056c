"""Air-to-ground channel: urban-macro path loss, angular Rician K, outage.

All link math is deterministic. The mean channel gain follows the urban-macro
median path-loss formulas (LoS and NLoS branches, no shadowing term); small
scale fading enters only through the closed-form outage probability of a
Rician (LoS) or Rayleigh (NLoS) envelope.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ive

from .env import Environment, is_los, los_blocked_mask

SPEED_OF_LIGHT = 299792458.0
# 3D distance floor of the path-loss model's validity range, metres.
MIN_MODEL_DISTANCE = 10.0
# Effective environment height of the urban-macro model, metres.
_H_ENV = 1.0

_MARCUM_TOL = 1e-10
_MARCUM_MAX_TERMS = 20000


class ModelValidityWarning(UserWarning):
    """A link was evaluated outside the path-loss model's validity range."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ChannelParams:
    """Link-budget constants plus the angle-dependent Rician K model.

    ``a1`` and ``a2`` are derived from the K bounds when omitted:
    K(theta) = a1 * exp(a2 * theta) with K(0) = k_min and K(pi/2) = k_max
    (both given in dB).
    """

    tx_power_dbm: float = 5.0
    noise_dbm: float = -112.0
    carrier_ghz: float = 2.0
    k_min_db: float = 0.0
    k_max_db: float = 30.0
    snr_threshold_db: float = 3.0
    outage_threshold: float = 0.1
    abs_alt: float = 90.0
    gu_alt: float = 1.0
    a1: float | None = None
    a2: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.outage_threshold <= 1.0):
            raise ValueError(f"outage_threshold must be in (0, 1], got {self.outage_threshold}")
        if self.carrier_ghz <= 0.0:
            raise ValueError("carrier frequency must be positive")
        if not (self.abs_alt > self.gu_alt >= 0.0):
            raise ValueError("need abs_alt > gu_alt >= 0")
        if self.k_max_db < self.k_min_db:
            raise ValueError("k_max_db must be >= k_min_db")
        k_min_lin = 10.0 ** (self.k_min_db / 10.0)
        k_max_lin = 10.0 ** (self.k_max_db / 10.0)
        if self.a1 is None:
            object.__setattr__(self, "a1", k_min_lin)
        if self.a2 is None:
            object.__setattr__(self, "a2", math.log(k_max_lin / k_min_lin) / (math.pi / 2.0))
        # The explicit coefficients must agree with the dB bounds.
        if abs(self.a1 - k_min_lin) > 1e-9 * k_min_lin:
            raise ValueError("a1 inconsistent with k_min_db")
        if abs(self.a1 * math.exp(self.a2 * math.pi / 2.0) - k_max_lin) > 1e-9 * k_max_lin:
            raise ValueError("a2 inconsistent with k_max_db")

    @property
    def snr_gap_db(self) -> float:
        """Transmit power over noise floor, in dB."""
        return self.tx_power_dbm - self.noise_dbm


def _path_loss_db(params: ChannelParams, d2d, d3d, h_bs: float, h_ut: float, los):
    """Median urban-macro path loss in dB for broadcastable distance arrays."""
    d3d = np.asarray(d3d, dtype=float)
    d2d = np.asarray(d2d, dtype=float)
    below = d3d < MIN_MODEL_DISTANCE
    if np.any(below):
        warnings.warn(
            f"{int(np.count_nonzero(below))} link(s) below the {MIN_MODEL_DISTANCE:.0f} m "
            "3D distance floor; clamped",
            ModelValidityWarning,
            stacklevel=3,
        )
        d3d = np.maximum(d3d, MIN_MODEL_DISTANCE)
    fc = params.carrier_ghz
    log_d3d = np.log10(d3d)
    log_fc = math.log10(fc)
    # Breakpoint distance uses antenna heights above the effective environment.
    d_bp = (
        4.0
        * max(h_bs - _H_ENV, 0.0)
        * max(h_ut - _H_ENV, 0.0)
        * (fc * 1e9)
        / SPEED_OF_LIGHT
    )
    pl1 = 28.0 + 22.0 * log_d3d + 20.0 * log_fc
    pl2 = (
        28.0
        + 40.0 * log_d3d
        + 20.0 * log_fc
        - 9.0 * math.log10(d_bp**2 + (h_bs - h_ut) ** 2)
    )
    pl_los = np.where(d2d <= d_bp, pl1, pl2)
    los = np.asarray(los, dtype=bool)
    if los.all():
        return pl_los
    pl_nlos = np.maximum(
        pl_los, 13.54 + 39.08 * log_d3d + 20.0 * log_fc - 0.6 * (h_ut - 1.5)
    )
    return np.where(los, pl_los, pl_nlos)


def mean_gain(params: ChannelParams, env: Environment, p, q) -> float:
    """Mean channel gain (linear) between a transmitter p and receiver q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    los = is_los(env, p, q)
    d2d = math.hypot(p[0] - q[0], p[1] - q[1])
    d3d = float(np.linalg.norm(p - q))
    pl = _path_loss_db(params, d2d, d3d, float(p[2]), float(q[2]), los)
    return float(10.0 ** (-pl / 10.0))


def rician_k(params: ChannelParams, p, q) -> float:
    """LoS Rician K factor (linear) from the elevation angle of p above q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p[2] <= q[2]:
        raise ValueError("transmitter must be above the receiver")
    d2d = math.hypot(p[0] - q[0], p[1] - q[1])
    theta = math.atan2(p[2] - q[2], d2d)
    return params.a1 * math.exp(params.a2 * theta)


def snr(params: ChannelParams, gain):
    """Mean SNR (linear) from a linear mean gain."""
    return np.asarray(gain, dtype=float) * 10.0 ** (params.snr_gap_db / 10.0)


def marcum_q1(a, b, tol: float = _MARCUM_TOL, max_terms: int = _MARCUM_MAX_TERMS):
    """First-order Marcum Q function, elementwise over broadcastable arrays.

    Uses the scaled Bessel series
        Q1(a, b) = exp(-(b-a)^2/2) * sum_k (a/b)^k * ive(k, a*b),   a <= b,
    and the reflection Q1(a, b) = 1 + exp(-(b-a)^2/2) * ive(0, a*b) - Q1(b, a)
    for a > b. Terms are positive and decreasing; truncation error is bounded
    by a Bessel ratio estimate and kept below ``tol`` in absolute value.
    """
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    scalar = a_arr.ndim == 0
    aa = np.atleast_1d(a_arr).astype(float).ravel()
    bb = np.atleast_1d(b_arr).astype(float).ravel()
    if np.any(aa < 0.0) or np.any(bb < 0.0) or np.any(~np.isfinite(aa)):
        raise ValueError("marcum_q1 requires finite a >= 0 and b >= 0")
    out = np.ones_like(aa)  # b == 0 (or b == inf handled below) defaults

    finite_b = np.isfinite(bb)
    out[~finite_b] = 0.0
    work = (bb > 0.0) & finite_b
    if np.any(work):
        aw, bw = aa[work], bb[work]
        flip = aw > bw
        lo = np.where(flip, bw, aw)
        hi = np.where(flip, aw, bw)
        z = lo * hi
        rho = lo / hi
        pref = np.exp(-0.5 * (hi - lo) ** 2)

        s = np.zeros_like(z)
        rho_pow = np.ones_like(z)
        active = np.ones(z.shape, dtype=bool)
        k = 0
        while np.any(active):
            if k > max_terms:
                raise RuntimeError("marcum_q1 series failed to converge")
            za = z[active]
            term = rho_pow[active] * ive(k, za)
            s[active] += term
            # Next-term ratio bound: I_{k+1}(z)/I_k(z) <= z/(k + sqrt(k^2+z^2)).
            ratio = rho[active] * za / (k + np.sqrt(k * k + za * za) + 1e-300)
            ratio = np.minimum(ratio, 0.999999)
            tail = pref[active] * term * ratio / (1.0 - ratio)
            done = (tail <= tol) & (k >= 1)
            if np.any(done):
                idx = np.flatnonzero(active)
                active[idx[done]] = False
            rho_pow *= rho
            k += 1

        q_small = pref * s
        res = np.where(flip, 1.0 + pref * ive(0, z) - q_small, q_small)
        out[work] = np.clip(res, 0.0, 1.0)

    result = out.reshape(a_arr.shape) if not scalar else out[0]
    return float(result) if scalar else result


def outage_probability(params: ChannelParams, snr_mean, k):
    """Probability that instantaneous SNR falls below the service threshold.

    ``snr_mean`` and ``k`` are linear. A Rician envelope with factor k gives
    P_out = 1 - Q1(sqrt(2k), sqrt(2(k+1) g / g_mean)); k = 0 collapses to the
    Rayleigh closed form 1 - exp(-g / g_mean). Zero mean SNR is certain outage.
    """
    snr_arr, k_arr = np.broadcast_arrays(
        np.asarray(snr_mean, dtype=float), np.asarray(k, dtype=float)
    )
    scalar = snr_arr.ndim == 0
    snr_v = np.atleast_1d(snr_arr).astype(float)
    k_v = np.atleast_1d(k_arr).astype(float)
    if np.any(snr_v < 0.0) or np.any(k_v < 0.0):
        raise ValueError("mean SNR and K factor must be non-negative")
    gamma_th = 10.0 ** (params.snr_threshold_db / 10.0)
    out = np.ones_like(snr_v)
    pos = snr_v > 0.0
    if np.any(pos):
        a = np.sqrt(2.0 * k_v[pos])
        b = np.sqrt(2.0 * (k_v[pos] + 1.0) * gamma_th / snr_v[pos])
        out[pos] = 1.0 - marcum_q1(a, b)
    result = out.reshape(snr_arr.shape) if not scalar else out[0]
    return float(result) if scalar else result


def coverage_mask(params: ChannelParams, env: Environment, p, qs) -> np.ndarray:
    """Vectorized full-chain coverage test from one transmitter to many points.

    Chain per link: LoS geometry -> branch path loss -> mean SNR -> angular
    K factor (zero when blocked) -> outage, compared against the threshold.
    """
    p = np.asarray(p, dtype=float)
    qs = np.asarray(qs, dtype=float)
    if qs.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    if np.ptp(qs[:, 2]) != 0.0:
        raise ValueError("coverage_mask expects a uniform receiver altitude")
    blocked = los_blocked_mask(env, p, qs)
    dx = qs[:, 0] - p[0]
    dy = qs[:, 1] - p[1]
    dz = p[2] - qs[:, 2]
    d2d = np.hypot(dx, dy)
    d3d = np.sqrt(d2d * d2d + dz * dz)
    los = ~blocked
    pl = _path_loss_db(params, d2d, d3d, float(p[2]), float(qs[0, 2]), los)
    snr_v = 10.0 ** ((params.snr_gap_db - pl) / 10.0)
    theta = np.arctan2(dz, d2d)
    k_v = np.where(los, params.a1 * np.exp(params.a2 * theta), 0.0)
    p_out = outage_probability(params, snr_v, k_v)
    return p_out < params.outage_threshold


def is_covered(params: ChannelParams, env: Environment, p, q) -> bool:
    """True when the outage probability of the p->q link is below threshold."""
    q = np.asarray(q, dtype=float)
    return bool(coverage_mask(params, env, p, q[None, :])[0])


def sample_rician_power(k, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw |h|^2 for a unit-mean-power Rician fading coefficient.

    h = sqrt(k/(k+1)) + sqrt(1/(2(k+1))) * (x + jy) with x, y standard normal;
    k = 0 reduces to Rayleigh fading. Used by the Monte-Carlo outage checks.
    """
    k = float(k)
    mean = math.sqrt(k / (k + 1.0))
    sigma = math.sqrt(1.0 / (2.0 * (k + 1.0)))
    re = mean + sigma * rng.standard_normal(size)
    im = sigma * rng.standard_normal(size)
    return re * re + im * im

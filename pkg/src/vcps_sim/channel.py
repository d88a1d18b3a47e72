"""V2I link model: SNR, Shannon rate, slot-wise upload time and the
distributionally robust reliability constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .domain import ChannelParams


class InfeasibleLinkError(ValueError):
    """No transmit power can meet the reliability target."""


@dataclass(frozen=True)
class LinkAllocation:
    tx_power: float  # W
    bandwidth: float  # Hz
    fading_gain: float  # |h|^2 sample
    distance: float  # m


@dataclass(frozen=True)
class TransmissionRecord:
    start: float
    duration: float | None  # None when undelivered
    delivered: bool


def snr(alloc: LinkAllocation, params: ChannelParams) -> float:
    if not alloc.distance > 0:
        raise ValueError("distance must be > 0")
    return (
        alloc.fading_gain
        * params.antenna_const
        * alloc.distance ** (-params.path_loss_exp)
        * alloc.tx_power
        / params.noise_w
    )


def snr_array(power, fading, distance, params: ChannelParams) -> np.ndarray:
    distance = np.asarray(distance, float)
    if np.any(distance <= 0):
        raise ValueError("distance must be > 0")
    return np.asarray(fading) * params.antenna_const * distance ** (-params.path_loss_exp) * np.asarray(power) / params.noise_w


def shannon_rate(bandwidth, snr_value):
    """Achievable rate in bit/s: bandwidth * log2(1 + SNR)."""
    if np.any(np.asarray(bandwidth) < 0):
        raise ValueError("bandwidth must be >= 0")
    return np.asarray(bandwidth) * np.log2(1.0 + np.asarray(snr_value))


def rate(alloc: LinkAllocation, params: ChannelParams) -> float:
    return float(shannon_rate(alloc.bandwidth, snr(alloc, params)))


def transmission_time(
    size: float,
    start: float,
    slot_rate: Sequence[float] | Callable[[int], float],
    slot_length: float = 1.0,
    horizon: int | None = None,
    coverage_end: float | None = None,
) -> TransmissionRecord:
    """Upload time of ``size`` bits starting at ``start`` under a per-slot constant rate.

    ``slot_rate`` gives the rate during slot ``i`` (time ``[i*L, (i+1)*L)``),
    either as a sequence (its length is the horizon) or as a callable together
    with ``horizon``. The upload is undelivered if the horizon or
    ``coverage_end`` arrives before the last bit.
    """
    if not size > 0:
        raise ValueError("size must be > 0")
    if callable(slot_rate):
        if horizon is None:
            raise ValueError("horizon is required with a callable rate")
        get = slot_rate
    else:
        rates = list(slot_rate)
        horizon = len(rates) if horizon is None else min(horizon, len(rates))
        get = rates.__getitem__
    end_time = horizon * slot_length
    if coverage_end is not None:
        end_time = min(end_time, coverage_end)

    left = float(size)
    now = float(start)
    i = int(math.floor(now / slot_length))
    while i < horizon and now < end_time:
        seg_end = min((i + 1) * slot_length, end_time)
        z = float(get(i))
        if z > 0:
            need = left / z
            if now + need <= seg_end:
                return TransmissionRecord(start, now + need - start, True)
            left -= z * (seg_end - now)
        now = seg_end
        i += 1
    return TransmissionRecord(start, None, False)


# --- reliability ----------------------------------------------------------


def fading_threshold(power: float, distance: float, params: ChannelParams) -> float:
    """Smallest fading gain |h|^2 for which SNR reaches the target at ``power``."""
    num = params.noise_w * params.snr_target * distance**params.path_loss_exp
    if num == 0:
        return 0.0
    if power <= 0:
        return math.inf
    return num / (params.antenna_const * power)


def cantelli_lower(threshold: float, mean: float, variance: float) -> float:
    """Worst-case Pr(X >= threshold) over all laws with the given mean and variance."""
    if threshold >= mean:
        return 0.0
    gap2 = (mean - threshold) ** 2
    return gap2 / (variance + gap2)


def reliability(power: float, distance: float, params: ChannelParams) -> float:
    a = fading_threshold(power, distance, params)
    return cantelli_lower(a, params.fading_mean, params.fading_var)


def reliability_holds(power: float, distance: float, params: ChannelParams) -> bool:
    if power < 0:
        raise ValueError("power must be >= 0")
    # relative slack absorbs round-off when evaluating exactly at the power floor
    return reliability(power, distance, params) >= params.reliability * (1.0 - 1e-12)


def min_reliable_power(distance: float, params: ChannelParams) -> float:
    """Smallest transmit power meeting the worst-case reliability target.

    Raises :class:`InfeasibleLinkError` when the target cannot be met by any
    finite power, i.e. when the required fading threshold is not positive.
    """
    d = params.reliability
    if not 0 < d < 1:
        raise ValueError("reliability must be in (0, 1)")
    a_star = params.fading_mean - math.sqrt(d * params.fading_var / (1.0 - d))
    if a_star <= 0:
        raise InfeasibleLinkError(
            f"reliability {d} unreachable: fading threshold {a_star:.4g} <= 0"
        )
    return params.noise_w * params.snr_target * distance**params.path_loss_exp / (params.antenna_const * a_star)


def power_floor(distance: float, params: ChannelParams) -> float:
    """Like :func:`min_reliable_power` but returns ``inf`` when infeasible."""
    try:
        return min_reliable_power(distance, params)
    except InfeasibleLinkError:
        return math.inf


def sample_fading(rng: np.random.Generator, params: ChannelParams, size) -> np.ndarray:
    """Gamma-distributed |h|^2 with the configured mean and variance."""
    m, v = params.fading_mean, params.fading_var
    if v == 0:
        return np.full(size, m)
    return rng.gamma(m * m / v, v / m, size=size)

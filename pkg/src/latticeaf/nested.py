"""Self-similar nested lattice codes with dithered modulo encoding and
MMSE-scaled lattice decoding.

The coarse (shaping) lattice is ``M`` times the fine (coding) lattice, so
messages are base-``M`` digit vectors of the fine-lattice coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import (
    Lattice,
    coefficients,
    estimate_metrics,
    mod_lattice,
    quantize_nearest,
    sample_uniform_voronoi,
)

# exact per-dimension second moments of the unit-scale tagged lattices
_EXACT_SECOND_MOMENT = {"zn": 1.0 / 12.0, "e8": 929.0 / 12960.0}


class CodecError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NestedPair:
    fine: Lattice
    coarse: Lattice
    nesting_ratio: int
    source_power: float

    @property
    def dimension(self) -> int:
        return self.fine.dimension

    @property
    def num_messages(self) -> int:
        return self.nesting_ratio**self.dimension

    @property
    def coding_rate(self) -> float:
        """Bits per dimension, from the covolume ratio."""
        n = self.dimension
        return math.log2(self.coarse.covolume / self.fine.covolume) / n


@dataclass(frozen=True)
class Codeword:
    message: np.ndarray
    coset_leader: np.ndarray
    dither: np.ndarray
    channel_input: np.ndarray


def base_second_moment(base: Lattice, rng=None, num_samples=200_000) -> float:
    if base.kind in _EXACT_SECOND_MOMENT:
        return _EXACT_SECOND_MOMENT[base.kind] * base.scale**2
    rng = np.random.default_rng(0) if rng is None else rng
    return estimate_metrics(base, num_samples, rng).second_moment


def build_nested_pair(
    base: Lattice,
    nesting_ratio: int,
    source_power: float,
    rng: np.random.Generator | None = None,
    num_samples: int = 200_000,
) -> NestedPair:
    """Scale ``base`` into a pair ``(c*base, M*c*base)`` whose coarse lattice
    has second moment ``source_power`` per dimension.

    The calibration is exact for Z^n and E8 and Monte Carlo otherwise (seeded
    with ``rng``, default seed 0).
    """
    if int(nesting_ratio) != nesting_ratio or nesting_ratio < 2:
        raise CodecError("nesting ratio must be an integer >= 2")
    if not source_power > 0:
        raise CodecError("source power must be positive")
    m = int(nesting_ratio)
    if m**base.dimension >= 2**62:
        raise CodecError("message set too large for integer indexing")
    s2 = base_second_moment(base, rng, num_samples)
    c = math.sqrt(source_power / s2) / m
    return NestedPair(base.scaled(c), base.scaled(m * c), m, float(source_power))


def _digits(pair: NestedPair, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.int64)
    if np.any(w < 0) or np.any(w >= pair.num_messages):
        raise CodecError(f"message index out of range [0, {pair.num_messages})")
    powers = pair.nesting_ratio ** np.arange(pair.dimension, dtype=np.int64)
    return (w[..., None] // powers) % pair.nesting_ratio


def message_to_coset(pair: NestedPair, w) -> np.ndarray:
    """Coset leader in ``fine ∩ V(coarse)`` for message index ``w``."""
    d = _digits(pair, w).astype(float)
    return mod_lattice(pair.coarse, d @ pair.fine.generator.T)


def coset_to_message(pair: NestedPair, t) -> np.ndarray | int:
    """Inverse of :func:`message_to_coset`; accepts any coset representative."""
    z = np.rint(coefficients(pair.fine, t)).astype(np.int64) % pair.nesting_ratio
    powers = pair.nesting_ratio ** np.arange(pair.dimension, dtype=np.int64)
    w = z @ powers
    return int(w) if np.ndim(w) == 0 else w


def encode(
    pair: NestedPair,
    w,
    rng: np.random.Generator | None = None,
    dither=None,
    convention: str = "minus",
) -> Codeword:
    """Dithered modulo encoding ``x = [t - u] mod coarse``.

    ``convention="plus"`` uses ``[t + u]`` instead; that variant does not
    invert with the decoder below and exists for inspection only.
    """
    t = message_to_coset(pair, w)
    if dither is None:
        if rng is None:
            raise CodecError("need an rng or an explicit dither")
        size = None if t.ndim == 1 else t.shape[0]
        dither = sample_uniform_voronoi(pair.coarse, rng, size)
    u = np.broadcast_to(np.asarray(dither, dtype=float), t.shape)
    if convention == "minus":
        x = mod_lattice(pair.coarse, t - u)
    elif convention == "plus":
        x = mod_lattice(pair.coarse, t + u)
    else:
        raise CodecError(f"unknown sign convention {convention!r}")
    return Codeword(np.asarray(w), t, np.array(u), x)


def decode(pair: NestedPair, y_scaled, dither, alpha: float) -> np.ndarray:
    """``[Q_fine(alpha*y + u)] mod coarse`` for a gain-normalized observation."""
    if not 0 < alpha <= 1:
        raise CodecError("alpha must lie in (0, 1]")
    v = alpha * np.asarray(y_scaled, dtype=float) + dither
    return mod_lattice(pair.coarse, quantize_nearest(pair.fine, v))


def decode_message(pair: NestedPair, y_scaled, dither, alpha: float):
    return coset_to_message(pair, decode(pair, y_scaled, dither, alpha))


def mmse_alpha(gamma: float) -> float:
    """``gamma / (1 + gamma)``; an infinite ``gamma`` gives 1."""
    if not gamma > 0:
        raise CodecError("gamma must be positive")
    if math.isinf(gamma):
        return 1.0
    return gamma / (1.0 + gamma)


def awgn_errors(
    pair: NestedPair,
    snr: float,
    trials: int,
    rng: np.random.Generator,
    alpha: float | None = None,
) -> int:
    """Message errors of the codec over ``y = x + z`` with ``P_s / var(z) = snr``."""
    if alpha is None:
        alpha = mmse_alpha(snr)
    w = rng.integers(0, pair.num_messages, trials)
    cw = encode(pair, w, rng)
    sd = math.sqrt(pair.source_power / snr)
    y = cw.channel_input + sd * rng.standard_normal(cw.channel_input.shape)
    w_hat = decode_message(pair, y, cw.dither, alpha)
    return int(np.count_nonzero(w_hat != w))

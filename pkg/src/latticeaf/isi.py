"""Non-layered AF networks as Gaussian ISI channels.

Relays add one symbol of delay, so copies of the source symbol reach the
destination over paths of different relay counts and the end-to-end channel
has memory.  This module reduces a DAG to tap coefficients plus coloured
noise, evaluates the MMSE-DFE capacity, and simulates the link with the
feedback filter replaced by modulo-lattice precoding behind a block
interleaver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, signal
from scipy.linalg import toeplitz
from scipy.stats import binomtest

from .lattice import mod_lattice, sample_uniform_voronoi
from .nested import (
    Codeword,
    NestedPair,
    coset_to_message,
    decode,
    message_to_coset,
    mmse_alpha,
)
from .network import RelayNetwork, amplification_gains, network_delta


class IsiError(ValueError):
    pass


def _padd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) < len(b):
        a, b = b, a
    out = a.copy()
    out[: len(b)] += b
    return out


def _delay(p: np.ndarray, gain: float) -> np.ndarray:
    return np.concatenate(([0.0], gain * p))


@dataclass(frozen=True, eq=False)
class IsiChannel:
    taps: np.ndarray  # h_0 .. h_L
    source_power: float
    noise_transfer: dict = field(default_factory=dict)  # relay -> delay taps

    def __post_init__(self):
        taps = np.atleast_1d(np.asarray(self.taps, dtype=float))
        if taps.ndim != 1 or not np.all(np.isfinite(taps)):
            raise IsiError("taps must be a finite 1-d sequence")
        if not self.source_power > 0:
            raise IsiError("source power must be positive")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(
            self,
            "noise_transfer",
            {k: np.asarray(v, dtype=float) for k, v in self.noise_transfer.items()},
        )

    @property
    def max_delay(self) -> int:
        return len(self.taps) - 1

    def noise_autocorrelation(self, max_lag: int) -> np.ndarray:
        """``r[m] = E[z_e(t) z_e(t+m)]`` for ``m = 0..max_lag``."""
        r = np.zeros(max_lag + 1)
        r[0] = 1.0
        for g in self.noise_transfer.values():
            full = np.correlate(g, g, mode="full")[len(g) - 1 :]
            m = min(len(full), max_lag + 1)
            r[:m] += full[:m]
        return r


def reduce_to_isi(
    net: RelayNetwork, delta: float | None = None, beta: dict | None = None
) -> IsiChannel:
    """Delay-indexed transfer of a DAG under amplify-and-forward.

    Each relay scales its input by ``beta`` and delays it one symbol, so a
    path through ``k`` relays contributes to tap ``k``.  Gains default to the
    layered rule with coherent received powers.
    """
    if beta is None:
        beta = amplification_gains(net, network_delta(net, delta))
    sig = {}
    noise = {}
    for j in net.order[1:]:
        s = np.zeros(1)
        nz = {}
        for i in net.parents[j]:
            h = net.gains[(i, j)]
            if i == net.source:
                s = _padd(s, np.array([h]))
                continue
            s = _padd(s, _delay(sig[i], h * beta[i]))
            for r, g in noise[i].items():
                nz[r] = _padd(nz.get(r, np.zeros(1)), _delay(g, h * beta[i]))
        if j != net.destination:
            nz[j] = _padd(nz.get(j, np.zeros(1)), np.array([1.0]))
        sig[j] = s
        noise[j] = nz
    d = net.destination
    return IsiChannel(sig[d], net.powers[net.source], noise[d])


def noise_psd(ch: IsiChannel, omega) -> np.ndarray:
    """``1 + sum_j |G_j(e^{-i w})|^2`` on the given frequencies."""
    omega = np.asarray(omega, dtype=float)
    s = np.ones_like(omega)
    for g in ch.noise_transfer.values():
        s += np.abs(np.polyval(g[::-1], np.exp(-1j * omega))) ** 2
    return s


def _log_snr_density(ch: IsiChannel, omega):
    h = np.polyval(ch.taps[::-1], np.exp(-1j * np.asarray(omega)))
    return np.log2(1.0 + ch.source_power * np.abs(h) ** 2 / noise_psd(ch, omega))


def capacity_quad(ch: IsiChannel) -> float:
    """Flat-input capacity by adaptive quadrature (integrand is even)."""
    val, _ = integrate.quad(
        lambda w: float(_log_snr_density(ch, w)),
        0.0,
        math.pi,
        epsabs=1e-13,
        epsrel=1e-12,
        limit=500,
    )
    return val / (2 * math.pi)


def capacity_grid(ch: IsiChannel, num_points: int) -> float:
    """Same integral by the periodic trapezoid rule on ``num_points`` nodes."""
    w = 2 * math.pi * np.arange(num_points) / num_points - math.pi
    return 0.5 * float(np.mean(_log_snr_density(ch, w)))


@dataclass(frozen=True)
class FiniteDfe:
    feedforward: np.ndarray  # unbiased, applied as r(t) = sum_k f_k y(t-k)
    postcursor: np.ndarray  # r(t+delay) ~ x(t) + sum_l b_l x(t-l) + n
    delay: int
    snr: float  # unbiased
    mse: float  # biased MMSE


def mmse_dfe(ch: IsiChannel, ff_len: int = 64, trim: float = 1e-9) -> FiniteDfe:
    """Finite-length MMSE-DFE with ideal post-cursor cancellation.

    The decision delay maximizing the SNR is chosen, preferring the larger
    delay among ties; trailing post-cursor taps below ``trim`` relative to
    the largest are dropped into the noise.
    """
    h = ch.taps
    nu = len(h) - 1
    nf = int(ff_len)
    if nf < 1:
        raise IsiError("feedforward length must be positive")
    p = ch.source_power
    H = np.zeros((nf, nf + nu))
    for i in range(nf):
        H[i, i : i + nu + 1] = h
    rz = ch.noise_autocorrelation(nf - 1)
    Rz = toeplitz(rz)
    best = None
    for delta in range(nf + nu):
        Hr = H[:, : delta + 1]
        A = p * Hr @ Hr.T + Rz
        hd = H[:, delta]
        w = np.linalg.solve(A, p * hd)
        mse = p - p * float(hd @ w)
        snr_b = p / mse
        if best is None or snr_b >= best[0] * (1 - 1e-10):
            best = (snr_b, delta, w, mse)
    snr_b, delta, w, mse = best
    gain = 1.0 - mse / p
    w_u = w / gain
    post = (w_u @ H)[delta + 1 :]
    if len(post):
        keep = np.nonzero(np.abs(post) > trim * max(1.0, np.max(np.abs(post))))[0]
        post = post[: keep[-1] + 1] if len(keep) else post[:0]
    return FiniteDfe(w_u, post, delta, snr_b - 1.0, mse)


@dataclass(frozen=True)
class DfeReport:
    snr_mmse_dfe: float
    c_isi: float
    feedforward_taps: np.ndarray
    postcursor_taps: np.ndarray
    decision_delay: int
    fir_snr: float

    @property
    def fir_capacity(self) -> float:
        return 0.5 * math.log2(1 + self.fir_snr)


def isi_capacity(ch: IsiChannel, ff_len: int = 64) -> DfeReport:
    """Capacity of the ISI channel with flat input power and the matching
    unbiased MMSE-DFE SNR, plus a finite FIR realization of the filters."""
    if not np.any(ch.taps):
        return DfeReport(0.0, 0.0, np.zeros(ff_len), np.zeros(0), 0, 0.0)
    c = capacity_quad(ch)
    dfe = mmse_dfe(ch, ff_len)
    return DfeReport(
        2.0 ** (2 * c) - 1.0, c, dfe.feedforward, dfe.postcursor, dfe.delay, dfe.snr
    )


# ---------------------------------------------------------------------------
# precoding and interleaving


def precode_dirty_paper(
    pair: NestedPair,
    w,
    interference,
    alpha: float,
    rng: np.random.Generator | None = None,
    dither=None,
) -> Codeword:
    """``x = [t - u - alpha*s] mod coarse`` for interference ``s`` known at
    the encoder.  The receiver runs the ordinary decoder on ``x + s + n``."""
    t = message_to_coset(pair, w)
    if dither is None:
        size = None if t.ndim == 1 else t.shape[0]
        dither = sample_uniform_voronoi(pair.coarse, rng, size)
    u = np.broadcast_to(np.asarray(dither, dtype=float), t.shape)
    x = mod_lattice(pair.coarse, t - u - alpha * np.asarray(interference, dtype=float))
    return Codeword(np.asarray(w), t, np.array(u), x)


def interleave(block, memory: int = 0) -> np.ndarray:
    """Rows are codewords; transmit column by column."""
    block = np.asarray(block)
    if block.ndim != 2:
        raise IsiError("block must be rows x columns")
    if block.shape[0] <= memory:
        raise IsiError(
            f"interleaver depth {block.shape[0]} must exceed channel memory {memory}"
        )
    return block.T.reshape(-1)


def deinterleave(seq, rows: int) -> np.ndarray:
    seq = np.asarray(seq)
    if seq.size % rows:
        raise IsiError("sequence length is not a multiple of the depth")
    return seq.reshape(-1, rows).T


def causality_violations(rows: int, cols: int, memory: int, guard_rows: int) -> list:
    """Interfering symbols not yet encoded when their victim is encoded.

    Guard rows carry known zeros and are not decoded; message rows are
    encoded in row order.  Symbols preceding the block belong to earlier,
    already encoded blocks.  Returns ``(victim, source)`` index pairs as
    ``(row, col)`` tuples.
    """
    bad = []
    for j in range(guard_rows, rows):
        for c in range(cols):
            tau = c * rows + j
            for l in range(1, memory + 1):
                src = tau - l
                if src < 0:
                    continue
                sc, sj = divmod(src, rows)
                if sj >= guard_rows and sj >= j:
                    bad.append(((j, c), (sj, sc)))
    return bad


@dataclass(frozen=True)
class LinkStats:
    messages: int
    message_errors: int
    digits: int
    digit_errors: int
    guard_rows: int
    rows: int
    alpha: float

    @property
    def message_error_rate(self) -> float:
        return self.message_errors / self.messages

    @property
    def digit_error_rate(self) -> float:
        return self.digit_errors / self.digits

    def confidence_interval(self, level: float = 0.95) -> tuple:
        ci = binomtest(self.message_errors, self.messages).proportion_ci(
            level, method="wilson"
        )
        return ci.low, ci.high


def _digit_errors(pair, w_hat, w) -> int:
    m = pair.nesting_ratio
    powers = m ** np.arange(pair.dimension, dtype=np.int64)
    a = (np.asarray(w_hat)[..., None] // powers) % m
    b = (np.asarray(w)[..., None] // powers) % m
    return int(np.count_nonzero(a != b))


def simulate_isi_link(
    ch: IsiChannel,
    pair: NestedPair,
    num_blocks: int,
    rng: np.random.Generator,
    ff_len: int = 64,
    message_rows: int = 8,
    noise_on: bool = True,
    alpha: float | None = None,
    dfe: FiniteDfe | None = None,
) -> LinkStats:
    """Interleaved precoding over the ISI channel, decoded after the
    feedforward filter.

    Each block holds ``guard + message_rows`` rows of ``n`` symbols, where
    ``guard`` equals the post-cursor span; guard rows are zero.  Blocks are
    sent back to back as one continuous stream.
    """
    if not np.isclose(pair.source_power, ch.source_power, rtol=1e-9):
        raise IsiError("codec power does not match the channel input power")
    if dfe is None:
        dfe = mmse_dfe(ch, ff_len)
    if alpha is None:
        alpha = mmse_alpha(dfe.snr) if noise_on else 1.0
    n = pair.dimension
    b = dfe.postcursor
    guard = len(b)
    J = guard + message_rows
    B = int(num_blocks)

    X = np.zeros((B, J, n))
    w = rng.integers(0, pair.num_messages, (B, message_rows))
    U = sample_uniform_voronoi(pair.coarse, rng, B * message_rows).reshape(
        B, message_rows, n
    )
    for k in range(message_rows):
        j = guard + k
        s = np.zeros((B, n))
        for l in range(1, guard + 1):
            s += b[l - 1] * X[:, j - l, :]
        X[:, j, :] = precode_dirty_paper(pair, w[:, k], s, alpha, dither=U[:, k]).channel_input

    stream = X.transpose(0, 2, 1).reshape(-1)  # per-block interleave()
    tail = dfe.delay + len(ch.taps)
    stream = np.concatenate((stream, np.zeros(tail)))
    y = signal.lfilter(ch.taps, [1.0], stream)
    if noise_on:
        y += rng.standard_normal(len(y))
        for key in sorted(ch.noise_transfer):
            g = ch.noise_transfer[key]
            white = rng.standard_normal(len(y) + len(g) - 1)
            y += np.convolve(white, g, mode="valid")
    r = signal.lfilter(dfe.feedforward, [1.0], y)
    r = r[dfe.delay : dfe.delay + B * J * n].reshape(B, n, J).transpose(0, 2, 1)

    r_msg = r[:, guard:, :].reshape(-1, n)
    t_hat = decode(pair, r_msg, U.reshape(-1, n), alpha)
    w_hat = coset_to_message(pair, t_hat).reshape(B, message_rows)
    return LinkStats(
        messages=w.size,
        message_errors=int(np.count_nonzero(w_hat != w)),
        digits=w.size * n,
        digit_errors=_digit_errors(pair, w_hat, w),
        guard_rows=guard,
        rows=J,
        alpha=alpha,
    )

"""Finite-dimensional lattices: closest-point search, modulo reduction,
Voronoi sampling and second-moment / channel-goodness estimates.

Generator matrices hold basis vectors in their *columns*, so a lattice point
is ``G @ z`` for an integer vector ``z``.  Every routine accepts either a
single ``(n,)`` vector or a batch shaped ``(m, n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Lattice",
    "LatticeMetrics",
    "GoodnessReport",
    "integer_lattice",
    "checkerboard_lattice",
    "gosset_lattice",
    "hexagonal_lattice",
    "make_lattice",
    "quantize_nearest",
    "mod_lattice",
    "coefficients",
    "contains",
    "sample_uniform_voronoi",
    "estimate_metrics",
    "channel_error_probability",
    "measure_channel_goodness",
    "source_coding_figure",
]

# relative tolerance for membership tests and tie detection
TOL = 1e-9

KINDS = ("zn", "dn", "e8")


class LatticeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Lattice:
    """Full-rank lattice ``{G z : z in Z^n}``.

    ``kind`` marks lattices with a closed-form quantizer (``"zn"``, ``"dn"``,
    ``"e8"``); ``scale`` is then the factor applied to the canonical
    generator of that family.
    """

    generator: np.ndarray
    kind: str | None = None
    scale: float = 1.0
    _r: np.ndarray = field(init=False, repr=False)
    _q: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = np.array(self.generator, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise LatticeError("generator must be a square matrix")
        if not np.all(np.isfinite(g)):
            raise LatticeError("generator has non-finite entries")
        if self.kind is not None and self.kind not in KINDS:
            raise LatticeError(f"unknown lattice kind {self.kind!r}")
        q, r = np.linalg.qr(g)
        # positive diagonal keeps the search centres well defined
        signs = np.where(np.diag(r) < 0, -1.0, 1.0)
        q = q * signs
        r = signs[:, None] * r
        if np.min(np.abs(np.diag(r))) <= TOL * max(1.0, np.max(np.abs(r))):
            raise LatticeError("generator is not full rank")
        g.setflags(write=False)
        object.__setattr__(self, "generator", g)
        object.__setattr__(self, "_q", q)
        object.__setattr__(self, "_r", r)

    @property
    def dimension(self) -> int:
        return self.generator.shape[0]

    @property
    def covolume(self) -> float:
        """Volume of the fundamental Voronoi region, ``|det G|``."""
        return float(np.prod(np.diag(self._r)))

    def scaled(self, c: float) -> "Lattice":
        if not c > 0:
            raise LatticeError("scale factor must be positive")
        return Lattice(c * self.generator, kind=self.kind, scale=c * self.scale)

    def __repr__(self):
        tag = self.kind or "generic"
        return f"Lattice({tag}, n={self.dimension}, scale={self.scale:g})"


# ---------------------------------------------------------------------------
# constructors


def _dn_generator(n: int) -> np.ndarray:
    rows = np.zeros((n, n))
    rows[0, :2] = (-1.0, -1.0)
    for i in range(1, n):
        rows[i, i - 1] = 1.0
        rows[i, i] = -1.0
    return rows.T


def _e8_generator() -> np.ndarray:
    rows = np.zeros((8, 8))
    rows[0, 0] = 2.0
    for i in range(1, 7):
        rows[i, i - 1] = -1.0
        rows[i, i] = 1.0
    rows[7, :] = 0.5
    return rows.T


def integer_lattice(n: int, scale: float = 1.0) -> Lattice:
    return Lattice(scale * np.eye(n), kind="zn", scale=scale)


def checkerboard_lattice(n: int, scale: float = 1.0) -> Lattice:
    """D_n: integer points with even coordinate sum (n >= 2)."""
    if n < 2:
        raise LatticeError("D_n needs n >= 2")
    return Lattice(scale * _dn_generator(n), kind="dn", scale=scale)


def gosset_lattice(scale: float = 1.0) -> Lattice:
    """E8 = D8 union (D8 + 1/2)."""
    return Lattice(scale * _e8_generator(), kind="e8", scale=scale)


def hexagonal_lattice(scale: float = 1.0) -> Lattice:
    """A2 with unit minimal distance; quantized by the generic search."""
    g = np.array([[1.0, 0.5], [0.0, math.sqrt(3) / 2]])
    return Lattice(scale * g)


def make_lattice(family: str, n: int, scale: float = 1.0) -> Lattice:
    family = family.lower()
    if family == "zn":
        return integer_lattice(n, scale)
    if family == "dn":
        return checkerboard_lattice(n, scale)
    if family == "e8":
        if n != 8:
            raise LatticeError("E8 is only defined for n = 8")
        return gosset_lattice(scale)
    if family == "a2":
        if n != 2:
            raise LatticeError("A2 is only defined for n = 2")
        return hexagonal_lattice(scale)
    raise LatticeError(f"unknown lattice family {family!r}")


# ---------------------------------------------------------------------------
# closed-form quantizers (unit scale, batch of rows)


def _round_down_ties(x):
    # x.5 goes to x, matching lexicographic tie-breaking on Z
    return np.ceil(x - 0.5) + 0.0  # +0.0 clears negative zeros


def _quantize_zn(x):
    return _round_down_ties(x)


def _quantize_dn(x):
    f = _round_down_ties(x)
    odd = (np.sum(f, axis=-1) % 2) != 0
    if np.any(odd):
        fo = f[odd]
        xo = x[odd]
        resid = xo - fo
        k = np.argmax(np.abs(resid), axis=-1)
        rows = np.arange(len(k))
        step = np.where(resid[rows, k] >= 0, 1.0, -1.0)
        fo[rows, k] += step
        f[odd] = fo
    return f


def _quantize_e8(x):
    a = _quantize_dn(x)
    b = _quantize_dn(x - 0.5) + 0.5
    da = np.sum((x - a) ** 2, axis=-1)
    db = np.sum((x - b) ** 2, axis=-1)
    return np.where((db < da)[:, None], b, a)


_CLOSED_FORM = {"zn": _quantize_zn, "dn": _quantize_dn, "e8": _quantize_e8}


# ---------------------------------------------------------------------------
# generic closest point search


def _closest_coefficients(r: list, y: list, n: int) -> list:
    """Schnorr-Euchner depth-first search for ``argmin ||y - R z||``.

    ``r`` is upper triangular with positive diagonal.  Among minimizers
    (equal within ``TOL``) the lexicographically smallest ``z`` wins.
    """
    best_z = None
    best_d = math.inf
    z = [0] * n
    centre = [0.0] * n
    partial = [0.0] * (n + 1)  # partial[k]: distance of levels k..n-1
    step = [0] * n
    k = n - 1

    def set_centre(k):
        s = y[k]
        rk = r[k]
        for j in range(k + 1, n):
            s -= rk[j] * z[j]
        centre[k] = s / rk[k]
        zk = math.floor(centre[k] + 0.5)
        z[k] = zk
        step[k] = 1 if centre[k] >= zk else -1

    set_centre(k)
    while True:
        diff = (centre[k] - z[k]) * r[k][k]
        d = partial[k + 1] + diff * diff
        bound = best_d + TOL * (1.0 + best_d)
        if d <= bound:
            if k == 0:
                if best_z is None or d < best_d - TOL * (1.0 + best_d):
                    best_d, best_z = d, list(z)
                elif z < best_z:
                    best_d, best_z = min(d, best_d), list(z)
                # next sibling in zigzag order
                z[0] += step[0]
                step[0] = -step[0] - (1 if step[0] > 0 else -1)
            else:
                partial[k] = d
                k -= 1
                set_centre(k)
        else:
            k += 1
            if k == n:
                return best_z
            z[k] += step[k]
            step[k] = -step[k] - (1 if step[k] > 0 else -1)


def _search(lat: Lattice, x: np.ndarray) -> np.ndarray:
    n = lat.dimension
    r = lat._r.tolist()
    ys = x @ lat._q  # rows of Q^T x
    out = np.empty_like(x)
    for i, y in enumerate(ys.tolist()):
        out[i] = _closest_coefficients(r, y, n)
    return out @ lat.generator.T


# ---------------------------------------------------------------------------
# public operations


def _as_batch(lat: Lattice, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != lat.dimension:
        raise LatticeError(
            f"expected vectors of length {lat.dimension}, got shape {np.shape(x)}"
        )
    if not np.all(np.isfinite(arr)):
        raise LatticeError("input contains non-finite values")
    return arr, single


def quantize_nearest(lat: Lattice, x, *, exact: bool = False) -> np.ndarray:
    """Nearest lattice point to ``x``.

    Uses the coordinatewise closed form for tagged lattices unless
    ``exact=True`` forces the branch-and-bound search.
    """
    arr, single = _as_batch(lat, x)
    if lat.kind is not None and not exact:
        q = lat.scale * _CLOSED_FORM[lat.kind](arr / lat.scale)
    else:
        q = _search(lat, arr)
    return q[0] if single else q


def mod_lattice(lat: Lattice, x, **kw) -> np.ndarray:
    """``x - Q(x)``: the representative of ``x`` in the Voronoi cell."""
    arr = np.asarray(x, dtype=float)
    return arr - quantize_nearest(lat, arr, **kw)


def coefficients(lat: Lattice, x) -> np.ndarray:
    """Real coordinates of ``x`` in the lattice basis."""
    arr = np.asarray(x, dtype=float)
    return np.linalg.solve(lat.generator, arr.T).T


def contains(lat: Lattice, x) -> np.ndarray | bool:
    arr = np.asarray(x, dtype=float)
    gap = np.linalg.norm(arr - quantize_nearest(lat, arr), axis=-1)
    return gap <= TOL * (1.0 + np.linalg.norm(arr, axis=-1))


def sample_uniform_voronoi(lat: Lattice, rng: np.random.Generator, size=None):
    """Uniform draw from the fundamental Voronoi region.

    A uniform point of the fundamental parallelepiped reduced mod the lattice
    is exactly uniform on the cell, so no rejection is needed.
    """
    m = 1 if size is None else int(size)
    p = rng.random((m, lat.dimension)) @ lat.generator.T
    v = mod_lattice(lat, p)
    return v[0] if size is None else v


@dataclass(frozen=True)
class LatticeMetrics:
    second_moment: float
    normalized_second_moment: float
    mc_samples: int
    mc_std_error: float  # of second_moment
    nsm_std_error: float


def estimate_metrics(
    lat: Lattice, num_samples: int, rng: np.random.Generator, batch: int = 100_000
) -> LatticeMetrics:
    """Monte Carlo second moment per dimension and normalized second moment."""
    if num_samples < 1000:
        raise LatticeError("need at least 1000 samples")
    n = lat.dimension
    total = 0.0
    total_sq = 0.0
    left = num_samples
    while left > 0:
        m = min(batch, left)
        v = sample_uniform_voronoi(lat, rng, m)
        e = np.sum(v * v, axis=1) / n
        total += e.sum()
        total_sq += (e * e).sum()
        left -= m
    mean = total / num_samples
    var = max(total_sq / num_samples - mean * mean, 0.0)
    se = math.sqrt(var / (num_samples - 1))
    norm = lat.covolume ** (2.0 / n)
    return LatticeMetrics(mean, mean / norm, num_samples, se, se / norm)


def channel_error_probability(
    lat: Lattice,
    noise_variance: float,
    num_trials: int,
    rng: np.random.Generator,
    batch: int = 100_000,
) -> tuple[float, float]:
    """Estimate ``Pr[Z not in V]`` for i.i.d. Gaussian ``Z``.

    Returns the estimate and its binomial standard error.
    """
    if not noise_variance > 0:
        raise LatticeError("noise variance must be positive")
    sd = math.sqrt(noise_variance)
    errors = 0
    left = num_trials
    while left > 0:
        m = min(batch, left)
        z = sd * rng.standard_normal((m, lat.dimension))
        q = quantize_nearest(lat, z)
        errors += int(np.count_nonzero(np.any(q != 0.0, axis=1)))
        left -= m
    p = errors / num_trials
    return p, math.sqrt(p * (1 - p) / num_trials)


def source_coding_figure(nsm: float) -> float:
    """``log2(2 pi e G)`` in bits; zero for an ideal sphere-like cell."""
    return math.log2(2 * math.pi * math.e * nsm)


@dataclass(frozen=True)
class GoodnessReport:
    error_probability: float
    error_std: float
    trials: int
    source_coding_figure: float
    metrics: LatticeMetrics


def measure_channel_goodness(
    lat: Lattice,
    noise_variance: float,
    num_trials: int,
    rng: np.random.Generator,
    num_metric_samples: int = 100_000,
) -> GoodnessReport:
    """Both goodness figures for one lattice: Voronoi escape probability of
    Gaussian noise and the source-coding figure ``log2(2 pi e G)``."""
    p, se = channel_error_probability(lat, noise_variance, num_trials, rng)
    metrics = estimate_metrics(lat, num_metric_samples, rng)
    return GoodnessReport(
        p, se, num_trials, source_coding_figure(metrics.normalized_second_moment), metrics
    )

"""Gaussian relay networks under amplify-and-forward.

A network is a DAG of nonnegative link gains with a power budget per
transmitting node.  Every node sees unit-variance Gaussian noise.  For
layered networks (all source-destination paths of equal hop count) the whole
relay chain collapses to a scalar channel ``y = h x_s + noise``; this module
computes that channel exactly, together with the high-SNR bounds on
propagated noise and the resulting rate expressions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nested import mmse_alpha


class NetworkError(ValueError):
    """Invalid network description; ``where`` names the offending field."""

    def __init__(self, message: str, where: str | None = None):
        super().__init__(message if where is None else f"{where}: {message}")
        self.where = where


class NotLayeredError(NetworkError):
    pass


@dataclass(frozen=True, eq=False)
class RelayNetwork:
    nodes: tuple
    source: str
    destination: str
    gains: dict  # (i, j) -> h_ij > 0
    powers: dict  # node -> P_i > 0
    order: tuple = field(init=False, repr=False)
    parents: dict = field(init=False, repr=False)
    children: dict = field(init=False, repr=False)
    depth: dict = field(init=False, repr=False)  # node -> (min, max) hops from source

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(set(nodes)) != len(nodes):
            raise NetworkError("duplicate node id", "nodes")
        known = set(nodes)
        for role, node in (("source", self.source), ("destination", self.destination)):
            if node not in known:
                raise NetworkError(f"unknown node {node!r}", role)
        if self.source == self.destination:
            raise NetworkError("source and destination coincide", "destination")

        parents = {v: [] for v in nodes}
        children = {v: [] for v in nodes}
        gains = {}
        for (i, j), h in self.gains.items():
            where = f"edges[{i}->{j}]"
            if i not in known or j not in known:
                raise NetworkError("edge references an unknown node", where)
            if i == j:
                raise NetworkError("self loop", where)
            if not (math.isfinite(h) and h > 0):
                raise NetworkError(f"gain must be positive, got {h}", where)
            gains[(i, j)] = float(h)
            parents[j].append(i)
            children[i].append(j)
        if parents[self.source]:
            raise NetworkError("source has incoming edges", "source")
        if children[self.destination]:
            raise NetworkError("destination has outgoing edges", "destination")

        powers = {}
        for v, p in self.powers.items():
            if v not in known:
                raise NetworkError("power given for unknown node", f"powers[{v}]")
            if not (math.isfinite(p) and p > 0):
                raise NetworkError(f"power must be positive, got {p}", f"powers[{v}]")
            powers[v] = float(p)
        for v in nodes:
            if v != self.destination and v not in powers:
                raise NetworkError("missing power budget", f"powers[{v}]")

        order = _topological_order(nodes, parents, children)
        for v in parents:
            parents[v].sort()
            children[v].sort()

        reach_s = _reachable(self.source, children)
        reach_d = _reachable(self.destination, parents)
        for v in nodes:
            if v not in reach_s or v not in reach_d:
                raise NetworkError(
                    "node is not on any source-destination path", f"nodes[{v}]"
                )

        depth = {self.source: (0, 0)}
        for v in order[1:]:
            ds = [depth[u] for u in parents[v]]
            depth[v] = (min(d[0] for d in ds) + 1, max(d[1] for d in ds) + 1)

        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "depth", depth)

    @property
    def relays(self) -> list:
        return [v for v in self.order if v not in (self.source, self.destination)]

    @property
    def is_layered(self) -> bool:
        lo, hi = self.depth[self.destination]
        return lo == hi

    @property
    def num_layers(self) -> int:
        """Hop count of the longest source-destination path."""
        return self.depth[self.destination][1]

    @property
    def layers(self) -> list:
        """Node lists per layer, source first (layered networks only)."""
        self.require_layered()
        out = [[] for _ in range(self.num_layers + 1)]
        for v in self.order:
            out[self.depth[v][0]].append(v)
        return out

    def layer_of(self, v) -> int:
        self.require_layered()
        return self.depth[v][0]

    def require_layered(self):
        if not self.is_layered:
            raise NotLayeredError(
                "network is not layered (unequal path lengths); "
                "use latticeaf.isi.reduce_to_isi instead"
            )

    def scaled_powers(self, factor: float) -> "RelayNetwork":
        return RelayNetwork(
            self.nodes,
            self.source,
            self.destination,
            dict(self.gains),
            {v: factor * p for v, p in self.powers.items()},
        )


def _topological_order(nodes, parents, children) -> tuple:
    # Kahn's algorithm, lowest index first for a reproducible order
    index = {v: k for k, v in enumerate(nodes)}
    indeg = {v: len(parents[v]) for v in nodes}
    ready = sorted((v for v in nodes if indeg[v] == 0), key=index.get)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
                ready.sort(key=index.get)
    if len(order) != len(nodes):
        stuck = sorted(v for v in nodes if indeg[v] > 0)
        raise NetworkError(f"cycle detected among {stuck}", "edges")
    return tuple(order)


def _reachable(start, adjacency) -> set:
    seen = {start}
    stack = [start]
    while stack:
        for v in adjacency[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


# ---------------------------------------------------------------------------
# power accounting


def coherent_received_powers(net: RelayNetwork) -> dict:
    """``(sum_i h_ij sqrt(P_i))**2`` for every relay and the destination.

    Valid for any DAG; for layered networks these are the received powers
    that set the amplification gains.
    """
    out = {}
    for j in net.order[1:]:
        amp = sum(net.gains[(i, j)] * math.sqrt(net.powers[i]) for i in net.parents[j])
        out[j] = amp * amp
    return out


def received_powers(net: RelayNetwork) -> dict:
    """Received powers ``P_R`` of all relays plus ``P_d`` under the destination id."""
    net.require_layered()
    return coherent_received_powers(net)


def tight_delta(net: RelayNetwork) -> float:
    pr = coherent_received_powers(net)
    relays = net.relays
    if not relays:
        return 0.0
    return 1.0 / min(pr[r] for r in relays)


def network_delta(net: RelayNetwork, override: float | None = None) -> float:
    """Smallest ``delta`` with ``min_j P_R,j >= 1/delta`` over the relays.

    A user ``override`` may loosen (increase) it but not tighten it.
    """
    d = tight_delta(net)
    if override is None:
        return d
    if override < d * (1 - 1e-12):
        raise NetworkError(
            f"delta={override} violates the high-SNR condition (need >= {d})", "delta"
        )
    return float(override)


def amplification_gains(net: RelayNetwork, delta: float | None = None) -> dict:
    """``beta_i = sqrt(P_i / ((1 + delta) P_R,i))`` for every relay."""
    if delta is None:
        delta = tight_delta(net)
    pr = coherent_received_powers(net)
    return {
        r: math.sqrt(net.powers[r] / ((1.0 + delta) * pr[r])) for r in net.relays
    }


# ---------------------------------------------------------------------------
# simulation and exact noise transfer


def simulate_af(
    net: RelayNetwork,
    x_s,
    rng: np.random.Generator | None = None,
    noise_on: bool = True,
    delta: float | None = None,
    return_transmit: bool = False,
):
    """Push the source block ``x_s`` through the relays symbol by symbol.

    Each node receives ``sum_i h_ij x_i + z_j``; each relay retransmits
    ``beta_j y_j``.  Returns the destination samples (and, optionally, a dict
    of every relay's transmitted block).
    """
    net.require_layered()
    if noise_on and rng is None:
        raise NetworkError("noise_on requires an rng")
    beta = amplification_gains(net, delta)
    x_s = np.asarray(x_s, dtype=float)
    tx = {net.source: x_s}
    y_d = None
    for j in net.order[1:]:
        y = sum(net.gains[(i, j)] * tx[i] for i in net.parents[j])
        if noise_on:
            y = y + rng.standard_normal(x_s.shape)
        if j == net.destination:
            y_d = y
        else:
            tx[j] = beta[j] * y
    if return_transmit:
        return y_d, {r: tx[r] for r in net.relays}
    return y_d


def _transfer(net: RelayNetwork, beta: dict):
    """Signal amplitude and per-relay noise amplitudes at each node's input."""
    relays = net.relays
    col = {r: k for k, r in enumerate(relays)}
    sig = {}
    noise = {}
    for j in net.order[1:]:
        s = 0.0
        t = np.zeros(len(relays))
        for i in net.parents[j]:
            h = net.gains[(i, j)]
            if i == net.source:
                s += h
            else:
                b = beta[i]
                s += h * b * sig[i]
                t += h * b * noise[i]
        if j in col:
            t[col[j]] += 1.0
        sig[j] = s
        noise[j] = t
    return sig, noise, col


@dataclass(frozen=True)
class NoiseReport:
    total: float  # exact propagated noise power at the destination
    per_layer: dict  # source layer -> power contributed at the destination
    layer_checks: list  # (node, source_layer, actual, bound)
    series_bound: float  # delta P_d sum_k (1+delta)^-k
    linear_bound: float  # L delta P_d


def exact_propagated_noise(net: RelayNetwork, delta: float | None = None) -> NoiseReport:
    """Exact relay-noise power at every node, with the per-layer high-SNR
    bounds ``delta P_R,i / (1+delta)^k`` evaluated alongside."""
    net.require_layered()
    delta = network_delta(net, delta)
    beta = amplification_gains(net, delta)
    _, noise, col = _transfer(net, beta)
    pr = coherent_received_powers(net)
    layer = {v: net.depth[v][0] for v in net.nodes}

    checks = []
    for i in net.order[1:]:
        li = layer[i]
        for k in range(1, li):
            src = [col[r] for r in net.relays if layer[r] == li - k]
            actual = float(np.sum(noise[i][src] ** 2))
            checks.append((i, li - k, actual, delta * pr[i] / (1 + delta) ** k))

    d = net.destination
    L = net.num_layers
    per_layer = {}
    for r in net.relays:
        per_layer[layer[r]] = per_layer.get(layer[r], 0.0) + float(noise[d][col[r]] ** 2)
    p_d = pr[d]
    series = delta * p_d * sum((1 + delta) ** -k for k in range(1, L))
    return NoiseReport(
        float(np.sum(noise[d] ** 2)), per_layer, checks, series, L * delta * p_d
    )


# ---------------------------------------------------------------------------
# rates


def mac_cutset(p_d: float) -> float:
    """Destination multiple-access cut, in bits per channel use."""
    if p_d < 0:
        raise ValueError("received power must be nonnegative")
    return 0.5 * math.log2(1.0 + p_d)


def rate_laf(p_d: float, delta: float, num_layers: int) -> float:
    """Rate guaranteed by lattice-coded AF over ``num_layers`` hops, in bits."""
    if delta < 0 or num_layers < 1:
        raise ValueError("need delta >= 0 and at least one hop")
    snr = p_d / ((1 + delta) ** (num_layers - 1) * (1 + num_layers * delta * p_d))
    return 0.5 * math.log2(1.0 + snr)


@dataclass(frozen=True)
class EquivalentChannel:
    gain: float
    propagated_noise_power: float
    received_power: float
    source_power: float
    delta: float
    num_layers: int
    snr_lower_bound: float
    destination_noise_variance: float = 1.0

    @property
    def snr(self) -> float:
        """Exact SNR after normalizing by the end-to-end gain."""
        noise = self.destination_noise_variance + self.propagated_noise_power
        return self.gain**2 * self.source_power / noise

    @property
    def noise_variance(self) -> float:
        """Effective noise variance after dividing the output by ``gain``."""
        noise = self.destination_noise_variance + self.propagated_noise_power
        return noise / self.gain**2

    def gamma(self, mode: str = "mmse") -> float:
        """Decoder SNR; ``"paper"`` is the relay-noise-only value, ignoring the
        destination's own unit noise."""
        if mode == "mmse":
            return self.snr
        if mode == "paper":
            if self.propagated_noise_power == 0:
                return math.inf
            scale = (1 + self.delta) ** (self.num_layers - 1)
            return self.received_power / (scale * self.propagated_noise_power)
        raise ValueError(f"unknown alpha mode {mode!r}")

    def alpha(self, mode: str = "mmse") -> float:
        return mmse_alpha(self.gamma(mode))


def equivalent_gain(p_d: float, p_s: float, delta: float, num_layers: int) -> float:
    """End-to-end amplitude gain ``sqrt(P_d / (P_s (1+delta)^(L-1)))``."""
    return math.sqrt(p_d / (p_s * (1 + delta) ** (num_layers - 1)))


def equivalent_channel(net: RelayNetwork, delta: float | None = None) -> EquivalentChannel:
    net.require_layered()
    delta = network_delta(net, delta)
    p_d = received_powers(net)[net.destination]
    p_s = net.powers[net.source]
    L = net.num_layers
    scale = (1 + delta) ** (L - 1)
    noise = exact_propagated_noise(net, delta)
    return EquivalentChannel(
        gain=equivalent_gain(p_d, p_s, delta, L),
        propagated_noise_power=noise.total,
        received_power=p_d,
        source_power=p_s,
        delta=delta,
        num_layers=L,
        snr_lower_bound=p_d / (scale * (1 + L * delta * p_d)),
    )


# ---------------------------------------------------------------------------
# generators


def random_layered_network(
    rng: np.random.Generator,
    max_layers: int = 4,
    max_relays: int = 3,
    gain_range=(0.5, 2.0),
    power_range=(1.0, 10.0),
    edge_prob: float = 0.7,
) -> RelayNetwork:
    """Random layered network with ``1..max_layers`` hops."""
    hops = int(rng.integers(1, max_layers + 1))
    layers = [["s"]]
    for l in range(1, hops):
        layers.append([f"r{l}_{k}" for k in range(int(rng.integers(1, max_relays + 1)))])
    layers.append(["d"])
    edges = set()
    for a, b in zip(layers[:-1], layers[1:]):
        for i in a:
            for j in b:
                if rng.random() < edge_prob:
                    edges.add((i, j))
        for j in b:
            if not any((i, j) in edges for i in a):
                edges.add((a[int(rng.integers(len(a)))], j))
        for i in a:
            if not any((i, j) in edges for j in b):
                edges.add((i, b[int(rng.integers(len(b)))]))
    nodes = [v for layer in layers for v in layer]
    gains = {e: float(rng.uniform(*gain_range)) for e in sorted(edges)}
    powers = {v: float(rng.uniform(*power_range)) for v in nodes[:-1]}
    return RelayNetwork(tuple(nodes), "s", "d", gains, powers)


def tight_chain(
    delta: float, num_layers: int, relay_power: float = 2.0, source_power: float = 4.0,
    last_gain: float = 1.5,
) -> RelayNetwork:
    """Line network whose relays all receive exactly ``1/delta``."""
    if num_layers < 2:
        raise ValueError("a chain needs at least one relay")
    names = ["s"] + [f"r{k}" for k in range(1, num_layers)] + ["d"]
    powers = {"s": source_power}
    powers.update({v: relay_power for v in names[1:-1]})
    gains = {}
    for a, b in zip(names[:-2], names[1:-1]):
        gains[(a, b)] = math.sqrt(1.0 / (delta * powers[a]))
    gains[(names[-2], "d")] = last_gain
    return RelayNetwork(tuple(names), "s", "d", gains, powers)

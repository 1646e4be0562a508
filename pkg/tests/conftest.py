import itertools
import math

import numpy as np
import pytest

from latticeaf.network import RelayNetwork

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def brute_force_closest(generator, x):
    """Closest lattice point by enumerating every coefficient vector that
    could possibly beat the rounding solution.

    If ``lam*`` is the optimum then ``||x - lam*|| <= r0`` (distance to the
    rounded point), hence ``|z_i - c_i| <= ||row_i(G^-1)|| r0`` where ``c``
    solves ``G c = x``.  Ties go to the lexicographically smallest ``z``.
    """
    g = np.asarray(generator, dtype=float)
    ginv = np.linalg.inv(g)
    c = ginv @ x
    r0 = np.linalg.norm(x - g @ np.round(c))
    half = np.linalg.norm(ginv, axis=1) * r0
    ranges = [
        range(int(math.floor(ci - hi)), int(math.ceil(ci + hi)) + 1)
        for ci, hi in zip(c, half)
    ]
    best = None
    best_d = math.inf
    for z in itertools.product(*ranges):
        d = float(np.sum((x - g @ np.array(z, dtype=float)) ** 2))
        if best is None or d < best_d - 1e-9 * (1 + best_d):
            best, best_d = z, d
        elif abs(d - best_d) <= 1e-9 * (1 + best_d) and z < best:
            best = z
    return g @ np.array(best, dtype=float), np.array(best)


def all_paths(net):
    """Every source-destination path of a network, by depth-first search."""
    out = []

    def walk(path):
        v = path[-1]
        if v == net.destination:
            out.append(list(path))
            return
        for c in net.children[v]:
            walk(path + [c])

    walk([net.source])
    return out


def random_dag(rng, max_nodes=7, edge_prob=0.45):
    """Random DAG, pruned to the nodes lying on some source-destination path."""
    while True:
        k = int(rng.integers(0, max_nodes - 1))
        names = ["s"] + [f"v{i}" for i in range(k)] + ["d"]
        edges = {
            (a, b): float(rng.uniform(0.5, 2.0))
            for ia, a in enumerate(names)
            for b in names[ia + 1 :]
            if rng.random() < edge_prob
        }
        fwd = {"s"}
        for a in names:
            if a in fwd:
                fwd |= {b for (x, b) in edges if x == a}
        bwd = {"d"}
        for b in reversed(names):
            if b in bwd:
                bwd |= {a for (a, y) in edges if y == b}
        keep = [v for v in names if v in fwd and v in bwd]
        if "d" not in keep:
            continue
        gains = {e: h for e, h in edges.items() if e[0] in keep and e[1] in keep}
        powers = {v: float(rng.uniform(1.0, 10.0)) for v in keep[:-1]}
        return RelayNetwork(tuple(keep), "s", "d", gains, powers)


def tap_oracle(net, beta):
    """ISI taps as path products grouped by the number of relays on each path."""
    taps = {}
    for path in all_paths(net):
        g = 1.0
        for a, b in zip(path, path[1:]):
            g *= net.gains[(a, b)]
            if b != net.destination:
                g *= beta[b]
        delay = len(path) - 2
        taps[delay] = taps.get(delay, 0.0) + g
    out = np.zeros(max(taps) + 1)
    for k, v in taps.items():
        out[k] = v
    return out

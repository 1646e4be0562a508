"""Experiment orchestration: network files, seeding, Monte Carlo fan-out
and CSV reporting."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from . import isi, lattice, nested, network

COMMANDS = ("analyze", "simulate-layered", "simulate-isi", "lattice-info")
ALPHA_MODES = ("paper", "mmse")

# Monte Carlo trials are grouped into fixed-size units; each unit owns the
# stream derived from its index, so results do not depend on worker count.
UNIT_TRIALS = 1024
UNIT_BLOCKS = 64

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class ConfigError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{where}: {message}")
        self.where = where


# ---------------------------------------------------------------------------
# seeding


def _mix64(z: int) -> int:
    # splitmix64 finalizer, a bijection on 64-bit words
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


def derive_trial_seed(master: int, index: int) -> int:
    """64-bit seed for work unit ``index``; injective in ``index`` for a
    fixed ``master``."""
    return _mix64((_mix64(master & _MASK) + (index + 1) * _GOLDEN) & _MASK)


def derive_trial_seeds(master: int, indices) -> np.ndarray:
    """Vectorized :func:`derive_trial_seed`."""
    with np.errstate(over="ignore"):
        z = np.uint64(_mix64(master & _MASK)) + (
            np.asarray(indices, dtype=np.uint64) + np.uint64(1)
        ) * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def trial_rng(master: int, index: int) -> np.random.Generator:
    return np.random.default_rng(derive_trial_seed(master, index))


# ---------------------------------------------------------------------------
# network files

_TOP_FIELDS = {"nodes", "source", "destination", "edges", "powers"}
_EDGE_FIELDS = {"from", "to", "gain"}


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", where)
    return float(value)


def network_from_dict(doc: dict) -> network.RelayNetwork:
    if not isinstance(doc, dict):
        raise ParseError("top level must be a JSON object")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ParseError(f"unknown fields {sorted(unknown)}")
    missing = _TOP_FIELDS - set(doc)
    if missing:
        raise ParseError(f"missing fields {sorted(missing)}")
    nodes = doc["nodes"]
    if not isinstance(nodes, list) or not all(isinstance(v, str) for v in nodes):
        raise ParseError("must be an array of string ids", "nodes")
    for key in ("source", "destination"):
        if not isinstance(doc[key], str):
            raise ParseError("must be a node id string", key)
    if not isinstance(doc["edges"], list):
        raise ParseError("must be an array", "edges")
    gains = {}
    for k, e in enumerate(doc["edges"]):
        where = f"edges[{k}]"
        if not isinstance(e, dict):
            raise ParseError("edge must be an object", where)
        bad = set(e) - _EDGE_FIELDS
        if bad:
            raise ParseError(f"unknown fields {sorted(bad)}", where)
        if _EDGE_FIELDS - set(e):
            raise ParseError(f"missing fields {sorted(_EDGE_FIELDS - set(e))}", where)
        key = (e["from"], e["to"])
        if key in gains:
            raise ParseError(f"duplicate edge {e['from']}->{e['to']}", where)
        gain = _number(e["gain"], f"{where}.gain")
        if not gain > 0:
            raise ParseError(
                f"gain of edge {e['from']}->{e['to']} must be > 0, got {gain:g}",
                f"{where}.gain",
            )
        gains[key] = gain
    if not isinstance(doc["powers"], dict):
        raise ParseError("must be an object", "powers")
    powers = {v: _number(p, f"powers.{v}") for v, p in doc["powers"].items()}
    try:
        return network.RelayNetwork(
            tuple(nodes), doc["source"], doc["destination"], gains, powers
        )
    except network.NetworkError as exc:
        raise ParseError(str(exc)) from exc


def parse_network(path) -> network.RelayNetwork:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ParseError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return network_from_dict(doc)


def network_to_dict(net: network.RelayNetwork) -> dict:
    return {
        "nodes": list(net.nodes),
        "source": net.source,
        "destination": net.destination,
        "edges": [{"from": i, "to": j, "gain": h} for (i, j), h in net.gains.items()],
        "powers": dict(net.powers),
    }


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    network_file: str | None = None
    lattice: str = "zn"
    dim: int = 4
    ratio: int = 2
    trials: int = 10_000
    seed: int = 0
    alpha: str = "mmse"
    power_scales: tuple = (1.0,)
    ff_len: int = 64
    samples: int = 100_000
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.command.startswith("simulate") and self.ratio < 2:
            raise ConfigError("ratio must be >= 2")
        if self.alpha not in ALPHA_MODES:
            raise ConfigError(f"alpha must be one of {ALPHA_MODES}")
        if self.command != "lattice-info" and not self.network_file:
            raise ConfigError(f"{self.command} needs a network file")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.ff_len < 1:
            raise ConfigError("ff_len must be >= 1")
        if not all(s > 0 for s in self.power_scales):
            raise ConfigError("power scales must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


# ---------------------------------------------------------------------------
# CSV


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return "" if value is None else str(value)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


ANALYZE_COLUMNS = ["quantity", "node", "value"]
SIMULATE_LAYERED_COLUMNS = [
    "power_scale", "received_power", "delta", "num_layers", "gain",
    "propagated_noise", "snr", "snr_lower_bound", "alpha", "rate", "c_mac",
    "r_laf", "trials", "errors", "error_rate", "ci_low", "ci_high",
]
SIMULATE_ISI_COLUMNS = [
    "power_scale", "num_taps", "c_isi", "snr_mmse_dfe", "fir_snr",
    "decision_delay", "guard_rows", "alpha", "rate", "blocks", "messages",
    "errors", "error_rate", "ci_low", "ci_high", "digit_error_rate",
]
LATTICE_INFO_COLUMNS = [
    "lattice", "dim", "covolume", "second_moment", "second_moment_se",
    "normalized_second_moment", "nsm_se", "source_coding_figure_bits", "samples",
]


def _ci(errors, trials):
    ci = binomtest(errors, trials).proportion_ci(0.95, method="wilson")
    return ci.low, ci.high


# ---------------------------------------------------------------------------
# work units (module level so they pickle)


def _layered_unit(args):
    net, delta, pair, alpha, master, index, count = args
    rng = trial_rng(master, index)
    eq = network.equivalent_channel(net, delta)
    w = rng.integers(0, pair.num_messages, count)
    cw = nested.encode(pair, w, rng)
    y = network.simulate_af(net, cw.channel_input.reshape(-1), rng, delta=delta)
    y = y.reshape(cw.channel_input.shape) / eq.gain
    w_hat = nested.decode_message(pair, y, cw.dither, alpha)
    return int(np.count_nonzero(w_hat != w))


def _isi_unit(args):
    ch, pair, dfe, alpha, master, index, count = args
    rng = trial_rng(master, index)
    stats = isi.simulate_isi_link(ch, pair, count, rng, alpha=alpha, dfe=dfe)
    return stats.messages, stats.message_errors, stats.digits, stats.digit_errors


def _units(total, size):
    out = []
    k = 0
    while total > 0:
        out.append((k, min(size, total)))
        total -= size
        k += 1
    return out


def _fan_out(fn, jobs, workers):
    if workers == 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))  # map preserves submission order


# ---------------------------------------------------------------------------
# commands


def _build_pair(cfg, source_power):
    base = lattice.make_lattice(cfg.lattice, cfg.dim)
    return nested.build_nested_pair(base, cfg.ratio, source_power)


def analyze(net: network.RelayNetwork, ff_len: int = 64) -> list:
    rows = []

    def add(q, v, node=""):
        rows.append({"quantity": q, "node": node, "value": v})

    add("layered", net.is_layered)
    add("num_layers", net.num_layers)
    add("num_relays", len(net.relays))
    delta = network.network_delta(net)
    add("delta", delta)
    beta = network.amplification_gains(net, delta)
    if net.is_layered:
        pr = network.received_powers(net)
        for r in net.relays:
            add("received_power", pr[r], r)
        for r in net.relays:
            add("beta", beta[r], r)
        eq = network.equivalent_channel(net, delta)
        noise = network.exact_propagated_noise(net, delta)
        add("received_power_destination", eq.received_power, net.destination)
        add("gain", eq.gain)
        add("propagated_noise_exact", noise.total)
        add("propagated_noise_series", noise.series_bound)
        add("propagated_noise_bound", noise.linear_bound)
        add("snr", eq.snr)
        add("snr_lower_bound", eq.snr_lower_bound)
        add("c_mac", network.mac_cutset(eq.received_power))
        add("r_laf", network.rate_laf(eq.received_power, delta, eq.num_layers))
        add("rate_exact", 0.5 * math.log2(1 + eq.snr))
    else:
        for r in net.relays:
            add("beta", beta[r], r)
        ch = isi.reduce_to_isi(net, beta=beta)
        for l, h in enumerate(ch.taps):
            add("tap", h, str(l))
        w = np.linspace(-math.pi, math.pi, 257)
        s = isi.noise_psd(ch, w)
        add("noise_psd_min", float(s.min()))
        add("noise_psd_max", float(s.max()))
        add("noise_power", float(ch.noise_autocorrelation(0)[0]))
        rep = isi.isi_capacity(ch, ff_len)
        add("c_isi", rep.c_isi)
        add("snr_mmse_dfe", rep.snr_mmse_dfe)
        add("fir_snr", rep.fir_snr)
        add("decision_delay", rep.decision_delay)
    return rows


def simulate_layered(cfg: ExperimentConfig, net: network.RelayNetwork) -> list:
    if not net.is_layered:
        raise ConfigError("simulate-layered needs a layered network; use simulate-isi")
    rows = []
    for k, scale in enumerate(cfg.power_scales):
        sn = net.scaled_powers(scale)
        eq = network.equivalent_channel(sn)
        pair = _build_pair(cfg, eq.source_power)
        alpha = eq.alpha(cfg.alpha)
        master = derive_trial_seed(cfg.seed, k)
        jobs = [
            (sn, eq.delta, pair, alpha, master, i, c)
            for i, c in _units(cfg.trials, UNIT_TRIALS)
        ]
        errors = sum(_fan_out(_layered_unit, jobs, cfg.workers))
        lo, hi = _ci(errors, cfg.trials)
        rows.append({
            "power_scale": float(scale),
            "received_power": eq.received_power,
            "delta": eq.delta,
            "num_layers": eq.num_layers,
            "gain": eq.gain,
            "propagated_noise": eq.propagated_noise_power,
            "snr": eq.snr,
            "snr_lower_bound": eq.snr_lower_bound,
            "alpha": alpha,
            "rate": pair.coding_rate,
            "c_mac": network.mac_cutset(eq.received_power),
            "r_laf": network.rate_laf(eq.received_power, eq.delta, eq.num_layers),
            "trials": cfg.trials,
            "errors": errors,
            "error_rate": errors / cfg.trials,
            "ci_low": lo,
            "ci_high": hi,
        })
    return rows


def simulate_isi(cfg: ExperimentConfig, net: network.RelayNetwork) -> list:
    """``trials`` counts interleaver blocks."""
    rows = []
    for k, scale in enumerate(cfg.power_scales):
        sn = net.scaled_powers(scale)
        ch = isi.reduce_to_isi(sn)
        rep = isi.isi_capacity(ch, cfg.ff_len)
        dfe = isi.mmse_dfe(ch, cfg.ff_len)
        pair = _build_pair(cfg, ch.source_power)
        alpha = nested.mmse_alpha(dfe.snr)
        master = derive_trial_seed(cfg.seed, k)
        jobs = [
            (ch, pair, dfe, alpha, master, i, c)
            for i, c in _units(cfg.trials, UNIT_BLOCKS)
        ]
        parts = _fan_out(_isi_unit, jobs, cfg.workers)
        msgs = sum(p[0] for p in parts)
        errs = sum(p[1] for p in parts)
        digits = sum(p[2] for p in parts)
        derr = sum(p[3] for p in parts)
        lo, hi = _ci(errs, msgs)
        rows.append({
            "power_scale": float(scale),
            "num_taps": len(ch.taps),
            "c_isi": rep.c_isi,
            "snr_mmse_dfe": rep.snr_mmse_dfe,
            "fir_snr": dfe.snr,
            "decision_delay": dfe.delay,
            "guard_rows": len(dfe.postcursor),
            "alpha": alpha,
            "rate": pair.coding_rate,
            "blocks": cfg.trials,
            "messages": msgs,
            "errors": errs,
            "error_rate": errs / msgs,
            "ci_low": lo,
            "ci_high": hi,
            "digit_error_rate": derr / digits,
        })
    return rows


def lattice_info(cfg: ExperimentConfig) -> list:
    lat = lattice.make_lattice(cfg.lattice, cfg.dim)
    m = lattice.estimate_metrics(lat, cfg.samples, trial_rng(cfg.seed, 0))
    return [{
        "lattice": cfg.lattice,
        "dim": cfg.dim,
        "covolume": lat.covolume,
        "second_moment": m.second_moment,
        "second_moment_se": m.mc_std_error,
        "normalized_second_moment": m.normalized_second_moment,
        "nsm_se": m.nsm_std_error,
        "source_coding_figure_bits": lattice.source_coding_figure(
            m.normalized_second_moment
        ),
        "samples": cfg.samples,
    }]


def run_experiment(cfg: ExperimentConfig) -> str:
    """Run one command and return its CSV text (also written to ``cfg.out``)."""
    if cfg.command == "lattice-info":
        text = to_csv(LATTICE_INFO_COLUMNS, lattice_info(cfg))
    else:
        net = parse_network(cfg.network_file)
        if cfg.command == "analyze":
            text = to_csv(ANALYZE_COLUMNS, analyze(net, cfg.ff_len))
        elif cfg.command == "simulate-layered":
            text = to_csv(SIMULATE_LAYERED_COLUMNS, simulate_layered(cfg, net))
        else:
            text = to_csv(SIMULATE_ISI_COLUMNS, simulate_isi(cfg, net))
    if cfg.out:
        Path(cfg.out).write_text(text)
    return text

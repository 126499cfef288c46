"""Experiment configuration documents.

A run is described by a single JSON document.  The network block uses
the same field names as the model layer (queues, routes with id/path/
rate, capacity as a pool matrix, interference edges, or an explicit
schedule list), or names a bundled example.  Numbers are plain JSON
decimals, so parsing never depends on locale.

Validation errors carry the dotted path of the offending field so a
bad config fails with an actionable message instead of a traceback.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .model import (
    CapacityPolytope,
    InterferenceGraph,
    NetworkSpec,
    Route,
    cliques_to_polytope,
)
from .presets import example_names, load_example

KINDS = ("analyze", "simulate", "compare", "independence", "ldp", "balance")
ENGINES = ("store-forward", "prop-sched", "backpressure")

_U64 = 2**64


class ConfigError(ValueError):
    """Invalid experiment document; message starts with the field path."""

    def __init__(self, path: str, problem: str):
        self.path = path
        self.problem = problem
        super().__init__(f"{path}: {problem}")


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment: network, kind, and run settings."""

    kind: str
    spec: NetworkSpec
    polytope: CapacityPolytope
    graph: InterferenceGraph | None
    network_name: str | None
    seeds: tuple[int, ...]
    out_dir: str | None
    engine: str = "store-forward"
    horizon: float = 10_000.0
    warmup_fraction: float = 0.2
    batches: int = 20
    slot_arrivals: str = "poisson"
    initial: tuple[int, ...] | None = None
    pairs: tuple[tuple[int, int], ...] = ()
    checkpoints: int = 0
    samples: int = 100_000
    queue_vector: tuple[int, ...] | None = None
    scales: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512)
    checks: int = 1000
    document: dict = field(default_factory=dict, compare=False)

    def schedules(self) -> np.ndarray:
        return self.spec.schedule_list()


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc: dict) -> str:
    """Experiment identity: the document minus seeds and output paths.

    Seeds are recorded next to the hash in provenance blocks, so two runs
    of one experiment at different seeds or destinations share a hash.
    """
    core = {k: v for k, v in doc.items() if k not in ("seeds", "out")}
    return hashlib.sha256(canonical_json(core).encode("utf-8")).hexdigest()


def _expect(doc, key, types, path, required=True, default=None):
    if key not in doc:
        if required:
            raise ConfigError(f"{path}.{key}" if path else key, "required field is missing")
        return default
    val = doc[key]
    if types is not None and not isinstance(val, types):
        want = "/".join(t.__name__ for t in types) if isinstance(types, tuple) else types.__name__
        raise ConfigError(f"{path}.{key}" if path else key, f"expected {want}")
    return val

def _number(doc, key, path, required=True, default=None, positive=False):
    val = _expect(doc, key, (int, float), path, required, default)
    if val is None:
        return None
    if isinstance(val, bool):
        raise ConfigError(f"{path}.{key}" if path else key, "expected a number")
    if positive and val <= 0:
        raise ConfigError(f"{path}.{key}" if path else key, "must be positive")
    return val


def _parse_routes(raw, path):
    if not isinstance(raw, list) or not raw:
        raise ConfigError(path, "expected a nonempty list of routes")
    routes = []
    for i, r in enumerate(raw):
        rp = f"{path}[{i}]"
        if not isinstance(r, dict):
            raise ConfigError(rp, "expected an object with id/path/rate")
        rid = _expect(r, "id", str, rp, required=False, default=f"r{i}")
        hops = _expect(r, "path", list, rp)
        if not hops or not all(isinstance(h, int) and not isinstance(h, bool) for h in hops):
            raise ConfigError(f"{rp}.path", "expected a nonempty list of queue indices")
        rate = _number(r, "rate", rp, positive=True)
        routes.append(Route(id=rid, path=tuple(hops), rate=float(rate)))
    return routes


def _parse_capacity(raw, n, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object with matrix, edges, or schedules")
    keys = [k for k in ("matrix", "edges", "schedules") if k in raw]
    if len(keys) != 1:
        raise ConfigError(path, "give exactly one of matrix, edges, schedules")
    key = keys[0]
    val = raw[key]
    if key == "matrix":
        try:
            mat = np.asarray(val, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.matrix", "expected a 2-d numeric array") from None
        return CapacityPolytope(mat), None
    if key == "edges":
        if not isinstance(val, list):
            raise ConfigError(f"{path}.edges", "expected a list of [i, j] pairs")
        try:
            g = InterferenceGraph.from_edges(n, [tuple(e) for e in val])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.edges", str(exc)) from None
        return cliques_to_polytope(g), g
    try:
        sched = np.asarray(val, dtype=int)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.schedules", "expected a 2-d 0/1 array") from None
    if sched.ndim != 2 or sched.shape[1] != n:
        raise ConfigError(f"{path}.schedules", f"expected shape (*, {n})")
    return None, sched


def _parse_network(raw, path="network"):
    """Returns (spec, polytope, graph, name)."""
    if isinstance(raw, str):
        try:
            ex = load_example(raw)
        except KeyError:
            known = ", ".join(example_names())
            raise ConfigError(path, f"unknown example {raw!r}; known: {known}") from None
        return ex.spec, ex.polytope, ex.graph, ex.name
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an example name or a network object")
    n = _expect(raw, "queues", int, path)
    if n <= 0:
        raise ConfigError(f"{path}.queues", "must be a positive integer")
    routes = _parse_routes(_expect(raw, "routes", list, path), f"{path}.routes")
    cap_raw = _expect(raw, "capacity", dict, path)
    poly, extra = _parse_capacity(cap_raw, n, f"{path}.capacity")
    labels = raw.get("queue_labels")
    if isinstance(extra, InterferenceGraph):
        capacity, graph = extra, extra
    elif poly is not None:
        capacity, graph = poly, None
    else:
        capacity, graph = extra, None  # explicit schedule array, no polytope
    try:
        spec = NetworkSpec(n_queues=n, routes=routes, capacity=capacity, queue_labels=labels)
    except Exception as exc:
        raise ConfigError(path, str(exc)) from None
    return spec, poly, graph, None


def _parse_pairs(raw, n, path):
    pairs = []
    if not isinstance(raw, list):
        raise ConfigError(path, "expected a list of [queue, queue] pairs")
    for i, p in enumerate(raw):
        if (not isinstance(p, (list, tuple)) or len(p) != 2
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in p)):
            raise ConfigError(f"{path}[{i}]", "expected a [queue, queue] pair")
        j, k = p
        if not (0 <= j < n and 0 <= k < n) or j == k:
            raise ConfigError(f"{path}[{i}]", f"queue indices must be distinct and in 0..{n - 1}")
        pairs.append((j, k))
    return tuple(pairs)


def _parse_seeds(doc):
    raw = doc.get("seeds", [0])
    if isinstance(raw, int) and not isinstance(raw, bool):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("seeds", "expected a nonempty list of integers")
    seeds = []
    for i, s in enumerate(raw):
        if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < _U64:
            raise ConfigError(f"seeds[{i}]", "seeds are unsigned 64-bit integers")
        seeds.append(s)
    return tuple(seeds)


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "config document must be a JSON object")
    kind = _expect(doc, "kind", str, "")
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    spec, poly, graph, name = _parse_network(_expect(doc, "network", None, ""))
    seeds = _parse_seeds(doc)
    out_dir = _expect(doc, "out", str, "", required=False)

    sim = doc.get("sim", {})
    if not isinstance(sim, dict):
        raise ConfigError("sim", "expected an object")
    engine = _expect(sim, "engine", str, "sim", required=False, default="store-forward")
    if engine not in ENGINES:
        raise ConfigError("sim.engine", f"unknown engine {engine!r}; expected one of {', '.join(ENGINES)}")
    horizon = float(_number(sim, "horizon", "sim", required=False, default=10_000.0, positive=True))
    warmup = float(_number(sim, "warmup_fraction", "sim", required=False, default=0.2))
    batches = _expect(sim, "batches", int, "sim", required=False, default=20)
    slot_arrivals = _expect(sim, "slot_arrivals", str, "sim", required=False, default="poisson")
    checkpoints = _expect(sim, "checkpoints", int, "sim", required=False, default=0)
    initial = sim.get("initial")
    if initial is not None:
        if (not isinstance(initial, list) or len(initial) != spec.n_queues
                or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in initial)):
            raise ConfigError("sim.initial", f"expected {spec.n_queues} nonnegative integers")
        initial = tuple(initial)
    pairs = _parse_pairs(sim.get("pairs", []), spec.n_queues, "sim.pairs")

    ind = doc.get("independence", {})
    if not isinstance(ind, dict):
        raise ConfigError("independence", "expected an object")
    samples = _expect(ind, "samples", int, "independence", required=False, default=100_000)
    if kind == "independence":
        if "pairs" not in ind:
            raise ConfigError("independence.pairs", "required field is missing")
        pairs = _parse_pairs(ind["pairs"], spec.n_queues, "independence.pairs")
        if not pairs:
            raise ConfigError("independence.pairs", "need at least one queue pair")
        if samples <= 0:
            raise ConfigError("independence.samples", "must be positive")

    queue_vector = None
    scales = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512)
    if kind == "ldp":
        ldp = doc.get("ldp")
        if not isinstance(ldp, dict) or "queue_vector" not in ldp:
            raise ConfigError("ldp.queue_vector", "required field is missing")
        qv = ldp["queue_vector"]
        if (not isinstance(qv, list) or len(qv) != spec.n_queues
                or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in qv)):
            raise ConfigError("ldp.queue_vector", f"expected {spec.n_queues} nonnegative integers")
        queue_vector = tuple(qv)
        if "scales" in ldp:
            sc = ldp["scales"]
            if (not isinstance(sc, list) or not sc
                    or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 1 for x in sc)):
                raise ConfigError("ldp.scales", "expected a nonempty list of integers >= 1")
            scales = tuple(sc)

    checks = 1000
    if kind == "balance":
        bal = doc.get("balance", {})
        if not isinstance(bal, dict):
            raise ConfigError("balance", "expected an object")
        checks = _expect(bal, "checks", int, "balance", required=False, default=1000)
        if checks <= 0:
            raise ConfigError("balance.checks", "must be positive")

    if kind in ("simulate", "compare") and engine in ("prop-sched", "backpressure"):
        try:
            spec.schedule_list()
        except Exception as exc:
            raise ConfigError("sim.engine", f"{engine} needs enumerable schedules: {exc}") from None
    if poly is None and not (kind == "simulate" and engine == "backpressure"):
        raise ConfigError(
            "network.capacity",
            "a schedule-only capacity works only for backpressure simulation; "
            "give a pool matrix or interference edges",
        )

    return ExperimentConfig(
        kind=kind, spec=spec, polytope=poly, graph=graph, network_name=name,
        seeds=seeds, out_dir=out_dir, engine=engine, horizon=horizon,
        warmup_fraction=warmup, batches=batches, slot_arrivals=slot_arrivals,
        initial=initial, pairs=pairs, checkpoints=checkpoints, samples=samples,
        queue_vector=queue_vector, scales=scales, checks=checks, document=doc,
    )


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply key=value pairs with dotted paths, e.g. sim.horizon=5000."""
    out = json.loads(json.dumps(doc))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("override", f"{item!r} is not of the form key=value")
        key, _, text = item.partition("=")
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError("override", f"bad key {key!r}")
        node = out
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[parts[-1]] = _parse_override_value(text.strip())
    return out


def load_config(path: str, overrides=None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from None
    if overrides:
        doc = apply_overrides(doc, overrides)
    return parse_config(doc)

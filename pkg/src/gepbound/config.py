"""Experiment configuration: JSON ingestion, normalization, fingerprinting.

A config is a single JSON document with ``schema_version`` 1. ``load_config``
fills defaults and returns the normalized dict; ``fingerprint`` hashes its
canonical serialization, so the normalized echo re-ingests to the same value.
"""
from __future__ import annotations

import copy
import hashlib
import itertools
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .async_core import AsyncLayout, AsyncSystem, index_set
from .channel import Channel, ChannelError, SymbolDistribution, binary_xor_channel, pair_output_channel, validate_channel
from .codes import Code, CodeEnsemble, ConfigError
from .estimator import TrialPlan
from .rcu import EvalConfig
from .regions import RegionError, RegionPartition, SubDecoderRegions, coding_space
from .system import SyncSystem

SCHEMA_VERSION = 1
SEED_ENV = "GEPBOUND_SEED"
CONFIG_DIR = Path(__file__).parent / "configs"
LABELS = ("operation", "margin", "collision")

_PLAN_KEYS = {"trials", "fresh_codebooks", "seed", "exact_cap", "block_size"}
_EVAL_KEYS = {"state_cap", "allow_monte_carlo", "force_monte_carlo", "mc_samples", "tol", "partition_cap",
              "subset_cap"}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fingerprint(cfg: dict) -> str:
    """sha256 over the canonical JSON of a normalized config, output paths excluded."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()[:16]


def shipped_configs() -> list[Path]:
    return sorted(CONFIG_DIR.glob("*.json"))


def resolve_path(name) -> Path:
    """A file path, or the stem of a shipped config."""
    p = Path(name)
    if p.exists():
        return p
    shipped = CONFIG_DIR / f"{name}.json"
    if shipped.exists():
        return shipped
    raise ConfigError(f"config {name!r} not found (not a file and not a shipped config)")


def parse_seed(text: str) -> list[int]:
    try:
        seed = [int(s) for s in str(text).replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"seed {text!r} must be a comma-separated list of nonnegative integers") from None
    if not seed or any(s < 0 for s in seed):
        raise ConfigError(f"seed {text!r} must be a comma-separated list of nonnegative integers")
    return seed


def load_config(source, env=None) -> dict:
    """Read and normalize a config from a path, a shipped name or a dict.

    The master seed is replaced by ``GEPBOUND_SEED`` when that variable is set.
    """
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        path = resolve_path(source)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    cfg = normalize(raw)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        cfg["seed"] = parse_seed(env[SEED_ENV])
    build_sync(cfg)
    for _ in iter_async(cfg):
        pass
    return cfg


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return d[key]


def _vectors(items, where: str) -> list:
    try:
        return sorted({tuple(int(v) for v in g) for g in items})
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: coding vectors must be lists of integers") from None


def normalize(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    known = {"schema_version", "name", "channel", "users", "n", "regions", "priors", "sync", "async",
             "plan", "eval", "seed", "compare", "sweep", "output", "description"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level fields: {sorted(unknown)}")
    cfg = {"schema_version": SCHEMA_VERSION, "name": str(raw.get("name", "unnamed"))}
    if "description" in raw:
        cfg["description"] = str(raw["description"])
    cfg["channel"] = _norm_channel(_need(raw, "channel", "config"))
    users = _need(raw, "users", "config")
    if not isinstance(users, list) or len(users) != 2:
        raise ConfigError("users must be a list of two user entries")
    cfg["users"] = [_norm_user(u, i + 1) for i, u in enumerate(users)]
    cfg["n"] = int(_need(raw, "n", "config"))
    if "regions" in raw:
        cfg["regions"] = _norm_regions(raw["regions"], "regions")
        cfg["priors"] = _norm_priors(raw.get("priors"), "priors")
        sync = _need(raw, "sync", "config")
        cfg["sync"] = {"r12": [list(g) for g in _vectors(sync.get("r12", []), "sync.r12")],
                       "r1": [list(g) for g in _vectors(sync.get("r1", []), "sync.r1")]}
    elif "sync" in raw:
        raise ConfigError("sync sub-decoder choices need a regions entry")
    if "async" in raw:
        cfg["async"] = _norm_async(raw["async"])
    if "regions" not in cfg and "async" not in cfg:
        raise ConfigError("config needs a synchronous regions entry, an async entry, or both")
    plan = dict(raw.get("plan", {}))
    unknown = set(plan) - _PLAN_KEYS - {"seed"}
    if unknown:
        raise ConfigError(f"plan: unknown fields {sorted(unknown)}")
    plan.pop("seed", None)
    cfg["plan"] = {k: v for k, v in TrialPlan(**plan).to_dict().items() if k != "seed"}
    ev = dict(raw.get("eval", {}))
    unknown = set(ev) - _EVAL_KEYS
    if unknown:
        raise ConfigError(f"eval: unknown fields {sorted(unknown)}")
    cfg["eval"] = {k: v for k, v in EvalConfig(**ev).to_dict().items() if k != "seed"}
    cfg["seed"] = parse_seed(",".join(str(s) for s in np.atleast_1d(raw.get("seed", [0]))))
    slack = float(raw.get("compare", {}).get("sigma_slack", 3.0))
    if slack < 0:
        raise ConfigError("compare.sigma_slack must be nonnegative")
    cfg["compare"] = {"sigma_slack": slack}
    if "sweep" in raw:
        grid = raw["sweep"].get("grid", {})
        if not isinstance(grid, dict) or not grid:
            raise ConfigError("sweep.grid must map dotted field paths to value lists")
        cfg["sweep"] = {"grid": {str(k): list(v) for k, v in sorted(grid.items())}}
    cfg["output"] = {"dir": str(raw.get("output", {}).get("dir", "out"))}
    return cfg


def _norm_channel(ch: dict) -> dict:
    kind = _need(ch, "type", "channel")
    out = {"type": kind, "idle1": ch.get("idle1"), "idle2": ch.get("idle2")}
    for key in ("idle1", "idle2"):
        if out[key] is not None:
            out[key] = int(out[key])
    if kind == "xor":
        out["flip"] = float(_need(ch, "flip", "channel"))
        if not 0 <= out["flip"] <= 1:
            raise ConfigError(f"channel.flip={out['flip']} must lie in [0, 1]")
    elif kind == "pair_output":
        out["sizes"] = [int(v) for v in _need(ch, "sizes", "channel")]
    elif kind == "dense":
        t = np.asarray(_need(ch, "transition", "channel"), dtype=float)
        if t.ndim != 3:
            raise ConfigError(f"channel.transition must be a 3-d array, got {t.ndim} dimensions")
        out["transition"] = t.tolist()
    else:
        raise ConfigError(f"channel.type must be xor, pair_output or dense, got {kind!r}")
    return out


def _norm_user(u: dict, user: int) -> dict:
    codes = _need(u, "codes", f"users[{user - 1}]")
    if not codes:
        raise ConfigError(f"user {user} needs at least one code")
    out = []
    for k, c in enumerate(codes):
        where = f"users[{user - 1}].codes[{k}]"
        out.append({"dist": [float(p) for p in _need(c, "dist", where)], "rate": float(_need(c, "rate", where)),
                    "name": str(c.get("name", f"c{user}{k}"))})
    return {"codes": out}


def _norm_regions(r: dict, where: str) -> dict:
    out = {lab: [list(g) for g in _vectors(r.get(lab, []), f"{where}.{lab}")] for lab in LABELS}
    default = r.get("default")
    if default is not None and default not in LABELS:
        raise ConfigError(f"{where}.default must be one of {', '.join(LABELS)}")
    out["default"] = default
    return out


def _norm_priors(p, where: str):
    if p is None:
        return None
    try:
        return sorted([list(int(v) for v in g), float(q)] for g, q in p)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a list of [coding vector, probability] pairs") from None


def _norm_async(a: dict) -> dict:
    offsets = [int(t) for t in _need(a, "offsets", "async")]
    sets = []
    for k, d in enumerate(_need(a, "d_sets", "async")):
        where = f"async.d_sets[{k}]"
        sets.append({"name": str(d.get("name", f"D{k}")), "d": [list(ij) for ij in _vectors(_need(d, "d", where), where)],
                     "regions": _norm_regions(_need(d, "regions", where), f"{where}.regions")})
    return {"l": int(_need(a, "l", "async")), "offsets": offsets, "d_sets": sets,
            "priors": _norm_priors(a.get("priors"), "async.priors")}


# ---- object construction -------------------------------------------------------------

def build_channel(cfg: dict) -> Channel:
    ch = cfg["channel"]
    if ch["type"] == "xor":
        channel = binary_xor_channel(ch["flip"], ch["idle1"], ch["idle2"])
    elif ch["type"] == "pair_output":
        channel = pair_output_channel(*ch["sizes"], idle1=ch["idle1"], idle2=ch["idle2"])
    else:
        channel = Channel(np.array(ch["transition"], dtype=float), ch["idle1"], ch["idle2"])
    res = validate_channel(channel)
    if not res.ok:
        raise ChannelError("; ".join(res.problems))
    return channel


def build_ensembles(cfg: dict) -> tuple:
    out = []
    for user, u in enumerate(cfg["users"], start=1):
        codes = [Code(SymbolDistribution(np.array(c["dist"])), c["rate"], name=c["name"]) for c in u["codes"]]
        out.append(CodeEnsemble(user, codes))
    return tuple(out)


def _partition(regions: dict, space, priors) -> dict:
    labels = {}
    for lab in LABELS:
        for g in regions[lab]:
            g = tuple(g)
            if g not in space:
                raise RegionError(f"region {lab} names unknown coding vector {list(g)}")
            if g in labels:
                raise RegionError(f"coding vector {list(g)} is in both {labels[g]} and {lab}")
            labels[g] = lab
    missing = [g for g in space if g not in labels]
    if missing:
        if regions["default"] is None:
            raise RegionError(f"coding vectors {[list(g) for g in missing[:4]]} have no region and no default")
        for g in missing:
            labels[g] = regions["default"]
    pri = None
    if priors is not None:
        pri = {tuple(g): q for g, q in priors}
        bad = [g for g in pri if g not in space]
        if bad:
            raise RegionError(f"priors name unknown coding vector {list(bad[0])}")
    return labels, pri


def build_sync(cfg: dict) -> SyncSystem | None:
    if "regions" not in cfg:
        return None
    channel = build_channel(cfg)
    e1, e2 = build_ensembles(cfg)
    space = coding_space(len(e1), len(e2))
    labels, pri = _partition(cfg["regions"], space, cfg["priors"])
    part = RegionPartition.from_labels(labels, pri)
    return SyncSystem(channel, e1, e2, cfg["n"], part, cfg["sync"]["r12"], cfg["sync"]["r1"])


@dataclass
class AsyncCase:
    t2: int
    name: str
    dset: tuple
    system: AsyncSystem
    regions: SubDecoderRegions


def iter_async(cfg: dict):
    """Yield one AsyncCase per (offset, D set) of the config."""
    if "async" not in cfg:
        return
    a = cfg["async"]
    channel = build_channel(cfg)
    e1, e2 = build_ensembles(cfg)
    for t2 in a["offsets"]:
        layout = AsyncLayout(cfg["n"], a["l"], t2)
        pri = None if a["priors"] is None else {tuple(g): q for g, q in a["priors"]}
        system = AsyncSystem(channel, e1, e2, layout, pri)
        space = system.space
        for d in a["d_sets"]:
            labels, _ = _partition(d["regions"], space, None)
            regs = SubDecoderRegions(*(frozenset(g for g, lab in labels.items() if lab == name) for name in LABELS))
            yield AsyncCase(t2, d["name"], index_set(d["d"], layout), system, regs)


def trial_plan(cfg: dict, **override) -> TrialPlan:
    p = dict(cfg["plan"], seed=tuple(cfg["seed"]))
    p.update({k: v for k, v in override.items() if v is not None})
    return TrialPlan(**p)


def eval_config(cfg: dict) -> EvalConfig:
    return EvalConfig(**dict(cfg["eval"], seed=tuple(cfg["seed"])))


# ---- sweeps ----------------------------------------------------------------------------

def set_path(cfg: dict, path: str, value) -> dict:
    """Copy of cfg with the dotted field ``path`` set to ``value``."""
    out = copy.deepcopy(cfg)
    keys = path.split(".")
    node = out
    for k in keys[:-1]:
        if isinstance(node, list):
            k = int(k)
        elif k not in node:
            raise ConfigError(f"sweep path {path!r}: no field {k!r}")
        node = node[k]
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    elif last not in node:
        raise ConfigError(f"sweep path {path!r}: no field {last!r}")
    else:
        node[last] = value
    return out


def sweep_points(cfg: dict, grid: dict | None = None) -> list[tuple[dict, dict]]:
    """(assignment, normalized config) for every point of the grid, in grid order."""
    grid = grid if grid is not None else cfg.get("sweep", {}).get("grid")
    if not grid:
        raise ConfigError("no sweep grid: add sweep.grid to the config or pass --param")
    keys = sorted(grid)
    out = []
    for values in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, values))
        raw = cfg
        for k, v in point.items():
            raw = set_path(raw, k, v)
        raw = {k: v for k, v in raw.items() if k != "sweep"}
        out.append((point, load_config(raw, env={})))
    return out

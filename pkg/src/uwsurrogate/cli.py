"""``uwsim`` command-line front end.

Every command reads one YAML config (``--config``) whose top level holds the
global ``seed`` and one section per stage (``sim``, ``autoencoder``,
``diffusion``, ``metrics``, ``comms``, ``replay``, ``nlms``).  ``--set
section.key=value`` overrides single keys.  Each run writes
``<primary output>.manifest.json``.

Exit codes: 0 success, 2 usage error or unknown command, 3 invalid config or
input, 4 missing checkpoint.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import platform
import sys
from importlib import metadata as importlib_metadata
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import yaml

from . import rng as rngmod
from .errors import FormatError, InvalidInputError, UwSurrogateError

logger = logging.getLogger("uwsurrogate.cli")

MANIFEST_SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CHECKPOINT = 4


class ConfigError(UwSurrogateError):
    pass


class MissingCheckpointError(UwSurrogateError):
    pass


# -- config plumbing --------------------------------------------------------------

def _set_dotted(cfg: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    if not all(keys):
        raise ConfigError(f"bad override key {dotted!r}")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r} descends into a non-mapping")
    node[keys[-1]] = yaml.safe_load(raw)


def load_config(path: str | None, overrides: list[str], seed: int | None) -> dict[str, Any]:
    cfg: dict[str, Any] = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = yaml.safe_load(fh) or {}
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a mapping")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        _set_dotted(cfg, k.strip(), v)
    if seed is not None:
        cfg["seed"] = seed
    if "seed" not in cfg:
        raise ConfigError("a global seed is required (config key 'seed' or --seed)")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    return cfg


def _section(cfg: Mapping[str, Any], name: str) -> dict[str, Any]:
    sec = cfg.get(name, {}) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return dict(sec)


def _require(sec: Mapping[str, Any], key: str, section: str) -> Any:
    if key not in sec or sec[key] in (None, ""):
        raise ConfigError(f"missing {section}.{key}")
    return sec[key]


def _input_path(sec: Mapping[str, Any], key: str, section: str) -> Path:
    p = Path(_require(sec, key, section))
    if not p.exists():
        raise ConfigError(f"{section}.{key}: no such file {p}")
    return p


def _checkpoint_path(sec: Mapping[str, Any], key: str, section: str) -> Path:
    if key not in sec or not sec[key]:
        raise MissingCheckpointError(f"missing checkpoint setting {section}.{key}")
    p = Path(sec[key])
    if not p.exists():
        raise MissingCheckpointError(f"checkpoint not found: {p}")
    return p


def _pop_known(sec: dict[str, Any], keys: tuple[str, ...]) -> dict[str, Any]:
    return {k: sec.pop(k) for k in keys if k in sec}


# -- manifest ------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version(), "numpy": np.__version__}
    for mod in ("scipy", "torch", "yaml"):
        try:
            out[mod] = __import__(mod).__version__
        except Exception:  # pragma: no cover - optional at import time
            pass
    try:
        out["artifact"] = importlib_metadata.version("artifact")
    except importlib_metadata.PackageNotFoundError:  # running from a source tree
        out["artifact"] = "unknown"
    return out


def config_hash(cfg: Mapping[str, Any]) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def write_manifest(command: str, cfg: Mapping[str, Any], outputs: list[Path], extra: Mapping[str, Any] | None = None) -> Path:
    primary = outputs[0]
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "command": command,
        "seed": cfg["seed"],
        "config": cfg,
        "config_hash": config_hash(cfg),
        "versions": _versions(),
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    if extra:
        manifest["summary"] = dict(extra)
    path = primary.with_name(primary.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def validate_manifest(path: str | os.PathLike) -> bool:
    """True when every listed output exists with the recorded checksum."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        return False
    if data.get("config_hash") != config_hash(data.get("config", {})):
        return False
    for p, digest in data.get("outputs", {}).items():
        if not Path(p).exists() or _sha256(Path(p)) != digest:
            return False
    return True


# -- dataset helpers ------------------------------------------------------------------

def _load_tvirs(path: Path):
    from .formats import read_uatv

    tvirs = read_uatv(path)
    if not tvirs:
        raise ConfigError(f"{path} holds no records")
    return tvirs


def _split_indices(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < val_fraction < 1:
        raise ConfigError("val_fraction must lie in (0, 1)")
    order = rngmod.stream(seed, "split").permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    if n_val >= n:
        raise ConfigError("need at least two records to split into train and validation")
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def _features(tvirs, half: str | None = None) -> np.ndarray:
    """Features of normalized TVIRs; ``half`` picks one side of paired records."""
    from .autoencoder import features_from_tvirs
    from .channel_sim import split_pair

    if half is None:
        return features_from_tvirs(tvirs)
    pairs = [split_pair(t) for t in tvirs]
    side = 0 if half == "condition" else 1
    return features_from_tvirs([p[side] for p in pairs], normalize=False)


def _ae_features(tvirs, model_T: int) -> np.ndarray:
    """Single records as-is; paired records (2T snapshots) contribute both halves."""
    T = tvirs[0].num_snapshots
    if T == model_T:
        return _features(tvirs)
    if T == 2 * model_T:
        return np.concatenate([_features(tvirs, "condition"), _features(tvirs, "target")])
    raise ConfigError(f"records have {T} snapshots; expected {model_T} or {2 * model_T}")


# -- commands ------------------------------------------------------------------------

def cmd_sim_gen(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    from .channel_sim import GenerationConfig, generate_dataset

    sec = _section(cfg, "sim")
    out = Path(_require(sec, "output", "sim"))
    sec.pop("output")
    sec.setdefault("seed", cfg["seed"])
    gcfg = GenerationConfig.from_mapping(sec)
    records = generate_dataset(gcfg, out)
    dropped = sum(int(r.metadata.get("dropped_paths", 0)) for r in records)
    return [out], {"records": len(records), "dropped_paths": dropped}


def _ae_train_config(sec: dict[str, Any], seed: int, log_path: Path | None):
    from .autoencoder import AETrainConfig

    train = dict(sec.get("train", {}) or {})
    train.setdefault("seed", seed)
    if log_path is not None:
        train.setdefault("log_path", str(log_path))
    return AETrainConfig.from_mapping(train)


def cmd_ae_train(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    from .autoencoder import AutoencoderConfig, train_autoencoder

    sec = _section(cfg, "autoencoder")
    data_path = _input_path(sec, "dataset", "autoencoder")
    out = Path(_require(sec, "output", "autoencoder"))
    mcfg = AutoencoderConfig(**(sec.get("model", {}) or {}))
    tvirs = _load_tvirs(data_path)
    X = _ae_features(tvirs, mcfg.num_snapshots)
    tr, va = _split_indices(len(X), float(sec.get("val_fraction", 0.1)), cfg["seed"])
    log = out.with_suffix(".log.csv")
    tcfg = _ae_train_config(sec, cfg["seed"], log)
    model, hist = train_autoencoder(X[tr], X[va], tcfg, model_config=mcfg)
    model.save(out, {"train": tcfg.to_dict()})
    return [out, log], {"epochs": len(hist), "best_val": min(h.val_loss for h in hist) if hist else None}


def cmd_ae_finetune(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    from .autoencoder import AutoencoderModel, fine_tune_autoencoder, preset_config

    sec = _section(cfg, "autoencoder")
    ckpt = _checkpoint_path(sec, "checkpoint", "autoencoder")
    data_path = _input_path(sec, "dataset", "autoencoder")
    out = Path(_require(sec, "output", "autoencoder"))
    model = AutoencoderModel.load(ckpt)
    X = _ae_features(_load_tvirs(data_path), model.config.num_snapshots)
    tr, va = _split_indices(len(X), float(sec.get("val_fraction", 0.2)), cfg["seed"])
    log = out.with_suffix(".log.csv")
    overrides = dict(sec.get("train", {}) or {})
    overrides.setdefault("seed", cfg["seed"])
    overrides.setdefault("log_path", str(log))
    tcfg = preset_config(sec.get("preset", "keppel"), **overrides)
    tuned, hist = fine_tune_autoencoder(model, X[tr], X[va], tcfg)
    tuned.save(out, {"train": tcfg.to_dict(), "base": str(ckpt)})
    outputs = [out] + ([log] if log.exists() else [])
    return outputs, {"epochs": len(hist)}


def cmd_encode(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    """Latents as ``.npy``: ``(N, 128)``, or ``(N, 2, 128)`` (condition, target) for paired records."""
    from .autoencoder import AutoencoderModel

    sec = _section(cfg, "autoencoder")
    ckpt = _checkpoint_path(sec, "checkpoint", "autoencoder")
    data_path = _input_path(sec, "dataset", "autoencoder")
    out = Path(_require(sec, "latents", "autoencoder"))
    model = AutoencoderModel.load(ckpt)
    tvirs = _load_tvirs(data_path)
    T = model.config.num_snapshots
    if tvirs[0].num_snapshots == 2 * T:
        z = np.stack([model.encode_np(_features(tvirs, "condition")), model.encode_np(_features(tvirs, "target"))], axis=1)
    elif tvirs[0].num_snapshots == T:
        z = model.encode_np(_features(tvirs))
    else:
        raise ConfigError(f"records have {tvirs[0].num_snapshots} snapshots; expected {T} or {2 * T}")
    _save_npy(out, z.astype(np.float32))
    return [out], {"shape": list(z.shape)}


def _save_npy(path: Path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        np.save(fh, arr, allow_pickle=False)


def _load_latents(path: Path) -> np.ndarray:
    try:
        z = np.load(path, allow_pickle=False)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"cannot read latents from {path}: {exc}") from exc
    if z.shape[-1] != 128 and z.ndim < 2:
        raise ConfigError("latents must have a trailing dimension")
    return np.asarray(z, dtype=np.float64)


def _decode_to_tvirs(model, z: np.ndarray, metadata: dict[str, Any]):
    from .autoencoder import tvirs_from_features
    from .tvir import DEFAULT_DELAY_STEP, DEFAULT_TIME_STEP

    H = model.decode_np(np.asarray(z, dtype=np.float32))
    out = tvirs_from_features(H, DEFAULT_TIME_STEP, DEFAULT_DELAY_STEP)
    for t in out:
        t.metadata.update(metadata)
    return out


def cmd_decode(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    from .autoencoder import AutoencoderModel
    from .formats import write_uatv

    sec = _section(cfg, "autoencoder")
    ckpt = _checkpoint_path(sec, "checkpoint", "autoencoder")
    z = _load_latents(_input_path(sec, "latents", "autoencoder"))
    out = Path(_require(sec, "output", "autoencoder"))
    model = AutoencoderModel.load(ckpt)
    z = z.reshape(-1, z.shape[-1])
    write_uatv(out, _decode_to_tvirs(model, z, {"source": "decoded"}))
    return [out], {"records": len(z)}


def _pairs_from_latents(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if z.ndim != 3 or z.shape[1] != 2:
        raise ConfigError("diffusion pre-training needs paired latents of shape (N, 2, 128)")
    return z[:, 0], z[:, 1]


def _diff_train_config(sec: dict[str, Any], seed: int, log_path: Path, preset: str | None = None):
    from .diffusion import FINE_TUNE_PRESETS, DiffusionTrainConfig

    train = dict(sec.get("train", {}) or {})
    if preset is not None:
        if preset not in FINE_TUNE_PRESETS:
            raise ConfigError(f"unknown diffusion preset {preset!r}")
        train = {**FINE_TUNE_PRESETS[preset], **train}
    train.setdefault("seed", seed)
    train.setdefault("log_path", str(log_path))
    return DiffusionTrainConfig.from_mapping(train)


def cmd_diff_train(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    from .diffusion import train_diffusion

    sec = _section(cfg, "diffusion")
    z = _load_latents(_input_path(sec, "latents", "diffusion"))
    out = Path(_require(sec, "output", "diffusion"))
    zc, zt = _pairs_from_latents(z)
    tr, va = _split_indices(len(zc), float(sec.get("val_fraction", 0.1)), cfg["seed"])
    log = out.with_suffix(".log.csv")
    tcfg = _diff_train_config(sec, cfg["seed"], log)
    ld, hist = train_diffusion(zc[tr], zt[tr], zc[va], zt[va], tcfg)
    ld.save(out, {"train": tcfg.to_dict()})
    return [out, log], {"epochs": len(hist), "initial_val": hist[0].val_loss if hist else None,
                        "final_val": min(h.val_loss for h in hist) if hist else None}


def cmd_diff_finetune(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    from .diffusion import LatentDiffusion, fine_tune_generative

    sec = _section(cfg, "diffusion")
    ckpt = _checkpoint_path(sec, "checkpoint", "diffusion")
    z = _load_latents(_input_path(sec, "latents", "diffusion"))
    out = Path(_require(sec, "output", "diffusion"))
    z = z.reshape(-1, z.shape[-1])
    log = out.with_suffix(".log.csv")
    tcfg = _diff_train_config(sec, cfg["seed"], log, preset=sec.get("preset", "finetune"))
    ld, hist = fine_tune_generative(z, tcfg, model=LatentDiffusion.load(ckpt))
    ld.save(out, {"train": tcfg.to_dict(), "base": str(ckpt)})
    return [out, log], {"epochs": len(hist)}


def cmd_generate(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    from .autoencoder import AutoencoderModel
    from .diffusion import LatentDiffusion
    from .formats import write_uatv

    sec = _section(cfg, "diffusion")
    ckpt = _checkpoint_path(sec, "checkpoint", "diffusion")
    ae_ckpt = _checkpoint_path(sec, "autoencoder", "diffusion")
    cond_path = _input_path(sec, "conditions", "diffusion")
    out = Path(_require(sec, "output", "diffusion"))
    per_condition = int(sec.get("samples_per_condition", 1))
    count = sec.get("count")
    if per_condition < 1:
        raise ConfigError("samples_per_condition must be >= 1")
    ae = AutoencoderModel.load(ae_ckpt)
    ld = LatentDiffusion.load(ckpt)
    conds = _load_tvirs(cond_path)
    T = ae.config.num_snapshots
    if conds[0].num_snapshots == 2 * T:
        H = _features(conds, "condition")
    else:
        H = _features(conds)
    zc = ae.encode_np(H).astype(np.float64)
    zc = np.repeat(zc, per_condition, axis=0)
    if count is not None:
        count = int(count)
        if count < 1:
            raise ConfigError("count must be >= 1")
        zc = np.resize(zc, (count, zc.shape[1]))
    z = ld.sample(zc, rngmod.stream(cfg["seed"], "generate"))
    write_uatv(out, _decode_to_tvirs(ae, z, {"source": "generated"}))
    return [out], {"records": len(z)}


def cmd_metrics(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    from .metrics import (
        Characteristics,
        characteristics,
        empirical_cdf,
        histogram,
        significant_taps,
        write_characteristics_csv,
        write_two_column_csv,
    )

    sec = _section(cfg, "metrics")
    tvirs = _load_tvirs(_input_path(sec, "dataset", "metrics"))
    out_dir = Path(_require(sec, "output_dir", "metrics"))
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [characteristics(t) for t in tvirs]
    main = out_dir / "characteristics.csv"
    write_characteristics_csv(main, rows)
    outputs = [main]
    table = np.array([r.as_row() for r in rows])
    for k, name in enumerate(Characteristics.names()):
        cdf = empirical_cdf(table[:, k])
        p = out_dir / f"cdf_{name}.csv"
        write_two_column_csv(p, ("value", "cdf"), cdf.samples, cdf(cdf.samples))
        outputs.append(p)
    taps = np.concatenate([significant_taps(t) for t in tvirs])
    n_bins = int(sec.get("bins", 50))
    if len(taps):
        amp_hi = float(max(taps[:, 0].max(), 1.0)) * (1 + 1e-9)
        for col, name, rng_ in ((0, "amplitude", (0.0, amp_hi)), (1, "phase", (-np.pi, np.pi + 1e-12))):
            counts = histogram(taps[:, col], n_bins, rng_)
            edges = np.linspace(*rng_, n_bins + 1)
            p = out_dir / f"hist_{name}.csv"
            write_two_column_csv(p, ("bin_start", "count"), edges[:-1], counts)
            outputs.append(p)
    return outputs, {"records": len(rows), "significant_taps": int(len(taps))}


def cmd_ber(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    from .comms import evaluate, get_scheme, write_ber_csv

    sec = _section(cfg, "comms")
    tvirs = _load_tvirs(_input_path(sec, "dataset", "comms"))
    out = Path(_require(sec, "output", "comms"))
    schemes = sec.get("schemes", ["NOF1"])
    snrs = sec.get("snr_db", [0, 5, 10, 15, 20])
    trials = int(sec.get("trials", 1))
    limit = sec.get("max_channels")
    if limit is not None:
        tvirs = tvirs[: int(limit)]
    rows = []
    for name in schemes:
        rows.extend(evaluate(tvirs, get_scheme(name), snrs, seed=cfg["seed"], trials=trials))
    write_ber_csv(out, rows)
    return [out], {"rows": len(rows)}


def cmd_replay(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    from .baselines import direct_replay, stochastic_replay
    from .formats import write_uatv

    sec = _section(cfg, "replay")
    tvirs = _load_tvirs(_input_path(sec, "dataset", "replay"))
    out = Path(_require(sec, "output", "replay"))
    mode = sec.get("mode", "stochastic")
    produced = []
    if mode == "direct":
        for t in tvirs:
            r = direct_replay(t)
            produced.append(r.with_snapshots(r.snapshots, metadata={**r.metadata, "replay": "direct"}))
    elif mode == "stochastic":
        target_T = int(sec.get("num_snapshots", 20))
        for i, t in enumerate(tvirs):
            produced.extend(stochastic_replay(t, target_T, rngmod.stream(cfg["seed"], "replay", i)))
    else:
        raise ConfigError(f"unknown replay mode {mode!r}")
    write_uatv(out, produced)
    return [out], {"records": len(produced)}


def cmd_nlms(cfg: dict[str, Any]) -> tuple[list[Path], dict]:
    """Probe each channel in ``dataset`` with repeated m-sequences and track it with NLMS."""
    from .comms import apply_channel, msequence, nlms_estimate
    from .formats import write_uatv

    sec = _section(cfg, "nlms")
    tvirs = _load_tvirs(_input_path(sec, "dataset", "nlms"))
    out = Path(_require(sec, "output", "nlms"))
    order = int(sec.get("order", 13))
    mu = float(sec.get("mu", 0.5))
    snr = float(sec.get("snr_db", float("inf")))
    fs = float(sec.get("sample_rate", 12000.0))
    probe_seq = msequence(order)
    estimates = []
    for i, t in enumerate(tvirs):
        n = int(round(t.duration * fs))
        probe = np.resize(probe_seq, n)
        rx = apply_channel(probe, t, snr, rngmod.stream(cfg["seed"], "nlms", i), fs)
        est = nlms_estimate(
            probe, rx, num_taps=int(sec.get("num_taps", t.num_taps)), mu=mu,
            eps_reg=float(sec.get("eps_reg", 1e-6)),
            snapshot_interval=int(round(t.time_step * fs)), time_step=t.time_step, delay_step=1.0 / fs,
        )
        est.metadata.update({"source": "nlms", "index": i})
        estimates.append(est)
    write_uatv(out, estimates)
    return [out], {"records": len(estimates)}


COMMANDS: dict[str, Callable[[dict[str, Any]], tuple[list[Path], dict]]] = {
    "sim-gen": cmd_sim_gen,
    "ae-train": cmd_ae_train,
    "ae-finetune": cmd_ae_finetune,
    "diff-train": cmd_diff_train,
    "diff-finetune": cmd_diff_finetune,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "generate": cmd_generate,
    "metrics": cmd_metrics,
    "ber": cmd_ber,
    "replay": cmd_replay,
    "nlms": cmd_nlms,
}


def set_deterministic() -> None:
    import torch

    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uwsim", description="Underwater acoustic channel surrogate toolkit.")
    p.add_argument("command", choices=sorted(COMMANDS), help="pipeline stage to run")
    p.add_argument("-c", "--config", help="YAML config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. sim.count=10 (repeatable)")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, bit-reproducible execution")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(command: str, cfg: dict[str, Any]) -> int:
    if command not in COMMANDS:
        logger.error("unknown command %s", command)
        return EXIT_USAGE
    try:
        resolved = copy.deepcopy(cfg)
        outputs, summary = COMMANDS[command](resolved)
        manifest = write_manifest(command, cfg, outputs, summary)
    except MissingCheckpointError as exc:
        logger.error("%s", exc)
        return EXIT_CHECKPOINT
    except (ConfigError, InvalidInputError, FormatError, TypeError, KeyError) as exc:
        logger.error("invalid configuration or input: %s", exc)
        return EXIT_CONFIG
    logger.info("wrote %s", manifest)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.deterministic:
        set_deterministic()
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    cfg.setdefault("deterministic", bool(args.deterministic))
    return run(args.command, cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

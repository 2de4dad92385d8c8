"""Command-line experiment runner.

Usage::

    rplif <command> [--config run.json] [flags]

Commands: trace, train, eval-noise, firing-report, grad-check, ablate-alpha,
ablate-step. A JSON config file supplies any subset of the keys in
:data:`DEFAULTS`; unknown keys are rejected. Flags override config values.
Every command writes its artifacts plus ``manifest.json`` into ``--out``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from .autodiff import grad_check_smooth
from .errors import ConfigError, DataError, RPLIFError
from .model import Model, ModelSpec, load_checkpoint, save_checkpoint
from .neuron import NeuronConfig, format_trace_csv, run_trace
from .numerics import Rng
from .train import (
    TrainConfig,
    evaluate,
    firing_rates_csv,
    firing_report,
    histogram_csv,
    metrics_csv,
    train,
)

COMMANDS = ("trace", "train", "eval-noise", "firing-report", "grad-check", "ablate-alpha", "ablate-step")

ALPHA_GRID = (1.0, 1.4, 1.5, 1.6, 100.0)
STEP_GRID = (1, 2, 3, 4)

DEFAULTS = {
    "command": None,
    "seed": 0,
    "out": "runs/latest",
    "workers": 1,
    "neuron": {"mode": "multiplicative", "alpha": None, "beta": 0.5, "tau": 2.0, "v_init_th": 1.0, "step": 1},
    "model": {"layer_sizes": [784, 128, 10], "timesteps": 4},
    "train": {
        "lr0": 1e-3, "epochs": 3, "batch_size": 4, "beta1": 0.9, "beta2": 0.999,
        "eps": 1e-8, "logit_scale": 10.0, "chunk_size": 16,
    },
    "data": {
        "kind": "mnist",
        "dir": None,
        "train_limit": 10000,
        "test_limit": 10000,
        "poisson": {"n_per_class": 200, "test_per_class": 100, "neurons": 20, "low": 0.1, "high": 0.5},
    },
    "noise": None,
    "checkpoints": [],
    "currents": [1.2, 1.2, 1.2],
    "grad_check": {"layer_sizes": [6, 5, 3], "timesteps": 4, "batch": 3, "eps": 1e-5},
}

# keys whose value is free-form (not validated key-by-key)
_LEAF_KEYS = {"noise", "checkpoints", "currents", "command", "alpha"}


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

def _key_line(text: str, key: str):
    for n, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return n
    return None


def _merge(base: dict, override: dict, prefix: str, text: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            line = _key_line(text, key)
            where = f" (line {line})" if line else ""
            raise ConfigError(f"unknown config key '{path}'{where}")
        if isinstance(base[key], dict) and key not in _LEAF_KEYS:
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{path}' must be an object")
            out[key] = _merge(base[key], value, path + ".", text)
        else:
            out[key] = value
    return out


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return _merge(DEFAULTS, raw, "", text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rplif", description="RPLIF spiking-network experiments")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--mode", choices=("baseline", "multiplicative", "additive", "absolute"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--step", type=int)
    p.add_argument("--timesteps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--currents", help="comma-separated input currents (trace only)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--data-dir", help="directory holding the four MNIST IDX files")
    p.add_argument("--checkpoint", action="append", help="model checkpoint (repeatable)")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = load_config(args.config) if args.config else copy.deepcopy(DEFAULTS)
    if args.command:
        cfg["command"] = args.command
    if cfg["command"] not in COMMANDS:
        raise ConfigError(f"no valid command given (got {cfg['command']!r}); expected one of {COMMANDS}")
    for flag in ("mode", "alpha", "beta", "tau", "step"):
        value = getattr(args, flag)
        if value is not None:
            cfg["neuron"][flag] = value
    if args.mode is not None and args.alpha is None and args.mode != "multiplicative":
        cfg["neuron"]["alpha"] = None
    if args.timesteps is not None:
        cfg["model"]["timesteps"] = args.timesteps
    for flag in ("seed", "out", "workers"):
        value = getattr(args, flag)
        if value is not None:
            cfg[flag] = value
    if args.currents is not None:
        try:
            cfg["currents"] = [float(c) for c in args.currents.split(",") if c.strip()]
        except ValueError:
            raise ConfigError(f"--currents must be comma-separated numbers, got {args.currents!r}") from None
    if args.epochs is not None:
        cfg["train"]["epochs"] = args.epochs
    if args.data_dir is not None:
        cfg["data"]["dir"] = args.data_dir
    if args.checkpoint:
        cfg["checkpoints"] = list(args.checkpoint)
    if cfg["data"]["dir"] is None:
        cfg["data"]["dir"] = os.environ.get("RPLIF_MNIST_DIR", "data/mnist")
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def neuron_config(cfg: dict, **override) -> NeuronConfig:
    try:
        return NeuronConfig.from_dict({**cfg["neuron"], **override})
    except TypeError as exc:
        raise ConfigError(f"bad neuron config: {exc}") from None


def model_spec(cfg: dict, ncfg: NeuronConfig) -> ModelSpec:
    return ModelSpec(tuple(cfg["model"]["layer_sizes"]), ncfg, cfg["model"]["timesteps"], cfg["seed"])


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["train"], seed=cfg["seed"], workers=int(cfg["workers"]))


def check_paths(cfg: dict) -> None:
    cmd = cfg["command"]
    if cmd == "eval-noise" and not cfg["checkpoints"]:
        raise ConfigError("eval-noise needs at least one checkpoint (--checkpoint or 'checkpoints')")
    if cmd in ("train", "eval-noise", "firing-report", "ablate-alpha", "ablate-step") and cfg["data"]["kind"] == "mnist":
        d = Path(cfg["data"]["dir"])
        needed = ("test_images", "test_labels") if cmd in ("eval-noise", "firing-report") else tuple(data_mod.MNIST_FILES)
        for key in needed:
            if not (d / data_mod.MNIST_FILES[key]).is_file():
                raise DataError(f"missing MNIST file {d / data_mod.MNIST_FILES[key]}")
    for ckpt in cfg["checkpoints"]:
        if not Path(ckpt).is_file():
            raise DataError(f"checkpoint not found: {ckpt}")


def load_data(cfg: dict, need_train: bool = True):
    d = cfg["data"]
    if d["kind"] == "mnist":
        tr = data_mod.load_mnist(d["dir"], "train", d["train_limit"]) if need_train else None
        te = data_mod.load_mnist(d["dir"], "test", d["test_limit"])
        return tr, te
    if d["kind"] == "poisson":
        p = d["poisson"]
        rates = data_mod.default_rate_profiles(p["neurons"], p["low"], p["high"])
        rng = Rng(cfg["seed"])
        tr = data_mod.gen_poisson_patterns(p["n_per_class"], p["neurons"], cfg["model"]["timesteps"], rates, rng.split(1))
        te = data_mod.gen_poisson_patterns(p["test_per_class"], p["neurons"], cfg["model"]["timesteps"], rates, rng.split(2))
        return tr, te
    raise ConfigError(f"unknown data kind {d['kind']!r}; expected 'mnist' or 'poisson'")


def noise_specs(cfg: dict) -> list[data_mod.NoiseSpec]:
    """Noise settings with seeds derived from the run seed, including level 0 per kind."""
    if cfg["noise"] is None:
        entries = [(k, lvl) for k in data_mod.NOISE_KINDS for lvl in (0.0,) + data_mod.NOISE_LEVELS[k]]
    else:
        try:
            entries = [(e["kind"], float(e["level"])) for e in cfg["noise"]]
        except (TypeError, KeyError, ValueError):
            raise ConfigError("'noise' must be a list of {\"kind\": ..., \"level\": ...} objects") from None
    rng = Rng(cfg["seed"])
    return [data_mod.NoiseSpec(kind, level, rng.split(100 + n).seed) for n, (kind, level) in enumerate(entries)]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _write(out: Path, name: str, text: str, artifacts: dict) -> None:
    (out / name).write_text(text)
    artifacts[name] = out / name


def cmd_trace(cfg, out, artifacts):
    records = run_trace(neuron_config(cfg), cfg["currents"])
    _write(out, "trace.csv", format_trace_csv(records), artifacts)
    print("spikes:", "".join(str(r.s) for r in records))


def cmd_train(cfg, out, artifacts):
    tr, te = load_data(cfg)
    model = Model.create(model_spec(cfg, neuron_config(cfg)))
    history = train(model, tr, train_config(cfg), test=te, log=lambda m: print(
        f"epoch {m.epoch}: lr={m.lr:.3g} loss={m.train_loss:.4f} "
        f"train_acc={m.train_accuracy:.4f} test_acc={m.test_accuracy:.4f}"
    ))
    _write(out, "metrics.csv", metrics_csv(history), artifacts)
    report = firing_report(model, te, workers=cfg["workers"])
    _write(out, "firing_rates.csv", firing_rates_csv(report), artifacts)
    _write(out, "histogram.csv", histogram_csv(report), artifacts)
    save_checkpoint(model, out / "model.rplf")
    artifacts["model.rplf"] = out / "model.rplf"


def _model_label(path) -> str:
    return Path(path).parent.name + "/" + Path(path).stem if Path(path).parent.name else Path(path).stem


def cmd_eval_noise(cfg, out, artifacts):
    _, te = load_data(cfg, need_train=False)
    models = [(ckpt, load_checkpoint(ckpt)) for ckpt in cfg["checkpoints"]]
    specs = noise_specs(cfg)
    noisy = [(s, data_mod.Dataset(data_mod.apply_noise(te.images, s), te.labels)) for s in specs]
    lines = ["model,mode,noise,level_index,level,accuracy"]
    for ckpt, model in models:
        name, mode = _model_label(ckpt), model.spec.neuron_cfg.mode
        _, clean = evaluate(model, te, workers=cfg["workers"])
        lines.append(f"{name},{mode},clean,0,0.0,{_fmt(clean)}")
        for spec, ds in noisy:
            # level 0 is index 0; nonzero levels are ranked L1, L2, ... per kind
            nonzero = sorted({s.level for s in specs if s.kind == spec.kind and s.level > 0})
            level_index = nonzero.index(spec.level) + 1 if spec.level > 0 else 0
            _, acc = evaluate(model, ds, workers=cfg["workers"])
            lines.append(f"{name},{mode},{spec.kind},{level_index},{_fmt(spec.level)},{_fmt(acc)}")
        print(f"{name} ({mode}): clean accuracy {clean:.4f}")
    _write(out, "noise_accuracy.csv", "\n".join(lines) + "\n", artifacts)


def cmd_firing_report(cfg, out, artifacts):
    _, te = load_data(cfg, need_train=False)
    if cfg["checkpoints"]:
        models = [(Path(c).stem, load_checkpoint(c)) for c in cfg["checkpoints"]]
    else:
        models = [("untrained", Model.create(model_spec(cfg, neuron_config(cfg))))]
    summary = ["model,mode,layer,mean_rate"]
    for n, (name, model) in enumerate(models):
        tag = f"{n}_{name}"
        report = firing_report(model, te, workers=cfg["workers"])
        _write(out, f"firing_rates_{tag}.csv", firing_rates_csv(report), artifacts)
        _write(out, f"histogram_{tag}.csv", histogram_csv(report), artifacts)
        for layer, rate in enumerate(report.mean_rates):
            summary.append(f"{tag},{model.spec.neuron_cfg.mode},{layer},{_fmt(rate)}")
        print(f"{tag} ({model.spec.neuron_cfg.mode}): layer rates " + ", ".join(f"{r:.4f}" for r in report.mean_rates))
    _write(out, "firing_summary.csv", "\n".join(summary) + "\n", artifacts)


def cmd_grad_check(cfg, out, artifacts):
    gc = cfg["grad_check"]
    spec = ModelSpec(tuple(gc["layer_sizes"]), NeuronConfig(mode="baseline", tau=cfg["neuron"]["tau"]),
                     gc["timesteps"], cfg["seed"])
    model = Model.create(spec)
    rng = Rng(cfg["seed"]).split(7)
    for b in model.biases:
        b[:] = rng.uniform(-0.5, 0.5, b.shape)
    x = rng.uniform(0.0, 1.0, (gc["batch"], spec.layer_sizes[0]))
    err = grad_check_smooth(model, x, eps=gc["eps"])
    print(f"max relative error: {err:.3e}")
    _write(out, "grad_check.json", json.dumps({"max_relative_error": err}, indent=2, sort_keys=True) + "\n", artifacts)


def _sweep(cfg, out, artifacts, name, variants):
    tr, te = load_data(cfg)
    lines = [f"{name},mode,test_accuracy," + ",".join(f"rate_layer{l}" for l in range(len(cfg["model"]["layer_sizes"]) - 1))]
    for value, ncfg in variants:
        model = Model.create(model_spec(cfg, ncfg))
        train(model, tr, train_config(cfg))
        _, acc = evaluate(model, te, workers=cfg["workers"])
        rates = firing_report(model, te, workers=cfg["workers"]).mean_rates
        lines.append(f"{value},{ncfg.mode},{_fmt(acc)}," + ",".join(_fmt(r) for r in rates))
        print(f"{name}={value} ({ncfg.mode}): test accuracy {acc:.4f}")
    _write(out, f"ablate_{name}.csv", "\n".join(lines) + "\n", artifacts)


def cmd_ablate_alpha(cfg, out, artifacts):
    variants = []
    for alpha in ALPHA_GRID:
        mode = "baseline" if alpha == 1.0 else "absolute" if alpha >= 100 else "multiplicative"
        variants.append((alpha, neuron_config(cfg, mode=mode, alpha=alpha)))
    _sweep(cfg, out, artifacts, "alpha", variants)


def cmd_ablate_step(cfg, out, artifacts):
    base = neuron_config(cfg)
    mode = base.mode if base.mode != "baseline" else "multiplicative"
    alpha = base.alpha if base.mode != "baseline" else None
    variants = [(s, neuron_config(cfg, mode=mode, alpha=alpha, step=s)) for s in STEP_GRID]
    _sweep(cfg, out, artifacts, "step", variants)


_HANDLERS = {
    "trace": cmd_trace,
    "train": cmd_train,
    "eval-noise": cmd_eval_noise,
    "firing-report": cmd_firing_report,
    "grad-check": cmd_grad_check,
    "ablate-alpha": cmd_ablate_alpha,
    "ablate-step": cmd_ablate_step,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(cfg: dict, out: Path, artifacts: dict) -> None:
    resolved = {k: v for k, v in cfg.items() if k != "out"}
    manifest = {
        "command": cfg["command"],
        "seed": cfg["seed"],
        "config": resolved,
        "artifacts": {name: _sha256(path) for name, path in sorted(artifacts.items())},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run(cfg: dict) -> int:
    check_paths(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict = {}
    _HANDLERS[cfg["command"]](cfg, out, artifacts)
    write_manifest(cfg, out, artifacts)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(resolve_config(args))
    except RPLIFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

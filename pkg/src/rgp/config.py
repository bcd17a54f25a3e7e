"""Flat key=value run configuration.

One line per setting, ``key = value``; blank lines and ``#`` comments are
ignored. Unknown keys are a hard error so typos cannot silently fall
back to defaults. Every key has a documented default (see DEFAULTS), and
commands echo the fully resolved configuration into their output
directory as ``config_resolved.txt``.
"""

from __future__ import annotations

from pathlib import Path

from .denoiser import DenoiserConfig
from .fileio import write_text_atomic
from .trainer import TrainConfig

_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False}


def _parse_bool(raw: str) -> bool:
    try:
        return _BOOL_VALUES[raw.strip().lower()]
    except KeyError:
        raise ValueError(f"expected true/false, got {raw!r}") from None


def _parse_list(item_parser):
    def parse(raw: str):
        raw = raw.strip()
        if not raw:
            return tuple()
        return tuple(item_parser(part.strip()) for part in raw.split(","))

    return parse


_int_list = _parse_list(int)
_float_list = _parse_list(float)
_str_list = _parse_list(str)

# key -> (default as written in a config file, parser)
DEFAULTS: dict[str, tuple[str, object]] = {
    "seed": ("0", int),
    "data_dir": ("data", str),
    "out_dir": ("out", str),
    "checkpoint": ("out/model.rgp1", str),
    "classes": ("5", int),
    "patch_side": ("256", int),
    "knn_k": ("8", int),
    "synth.per_class": ("40", int),
    "synth.image_size": ("1024", int),
    "synth.noise_sigma": ("18.0", float),
    "gcn.dims": ("64,128,128", _int_list),
    "pool.n_keep": ("100", int),
    "tf.layers": ("2", int),
    "tf.heads": ("4", int),
    "train.epochs": ("60", int),
    "train.lr": ("0.001", float),
    "train.weight_decay": ("5e-05", float),
    "train.split": ("0.8", float),
    "denoiser.enabled": ("false", _parse_bool),
    "denoiser.hidden": ("256", int),
    "denoiser.layers": ("2", int),
    "denoiser.max_iters": ("200", int),
    "denoiser.lr": ("0.01", float),
    "denoiser.stop_rel_tol": ("0.0001", float),
    "denoiser.stop_patience": ("10", int),
    "denoiser.z_std": ("0.1", float),
    "denoiser.seed": ("0", int),
    "denoiser.dump_loss": ("false", _parse_bool),
    "corrupt.fraction": ("0.25", float),
    "corrupt.kinds": ("bright,saturate,hue,pixelate,defocus,motion", _str_list),
    "corrupt.severity_min": ("1", int),
    "corrupt.severity_max": ("5", int),
    "corrupt.apply_to": ("test", str),
    "experiment.fractions": ("0,0.1,0.25,0.5", _float_list),
    "experiment.seeds": ("0,1,2,3,4", _int_list),
    "experiment.kind_fractions": ("0.1,0.5", _float_list),
}


class RunConfig:
    def __init__(self, raw: dict[str, str]):
        unknown = sorted(set(raw) - set(DEFAULTS))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        self.raw = {key: raw.get(key, default) for key, (default, _) in DEFAULTS.items()}
        self.values = {}
        for key, (_, parser) in DEFAULTS.items():
            try:
                self.values[key] = parser(self.raw[key])
            except ValueError as exc:
                raise ValueError(f"config key {key}: {exc}") from None

    def __getitem__(self, key: str):
        return self.values[key]

    def override(self, key: str, raw_value: str) -> None:
        if key not in DEFAULTS:
            raise ValueError(f"unknown config key: {key}")
        self.raw[key] = raw_value
        self.values[key] = DEFAULTS[key][1](raw_value)

    def echo(self) -> str:
        return "\n".join(f"{key} = {self.raw[key]}" for key in sorted(self.raw)) + "\n"

    def write_resolved(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_text_atomic(out_dir / "config_resolved.txt", self.echo())


def parse_config_text(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in raw:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


def load_config(path: str | Path) -> RunConfig:
    return RunConfig(parse_config_text(Path(path).read_text()))


def default_config() -> RunConfig:
    return RunConfig({})


def denoiser_config(cfg: RunConfig) -> DenoiserConfig:
    return DenoiserConfig(
        hidden_width=cfg["denoiser.hidden"],
        n_layers=cfg["denoiser.layers"],
        max_iters=cfg["denoiser.max_iters"],
        learning_rate=cfg["denoiser.lr"],
        stop_rel_tol=cfg["denoiser.stop_rel_tol"],
        stop_patience=cfg["denoiser.stop_patience"],
        z_std=cfg["denoiser.z_std"],
        seed=cfg["denoiser.seed"],
    )


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["train.epochs"],
        learning_rate=cfg["train.lr"],
        weight_decay=cfg["train.weight_decay"],
        seed=cfg["seed"],
        denoiser_enabled=cfg["denoiser.enabled"],
        denoiser=denoiser_config(cfg),
        split_train=cfg["train.split"],
        n_classes=cfg["classes"],
        gcn_dims=tuple(cfg["gcn.dims"]),
        n_keep=cfg["pool.n_keep"],
        tf_layers=cfg["tf.layers"],
        n_heads=cfg["tf.heads"],
    )

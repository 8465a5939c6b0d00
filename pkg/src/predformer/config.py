"""Plain-text ``key = value`` run configuration.

Four sections: ``[model]``, ``[training]``, ``[data]`` and ``[run]``. Model
keys start from a named preset and every key may be overridden by a
command-line flag. Unknown sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass

import numpy as np

from .data import SHAPE_KINDS, ShapeSpec
from .errors import ConfigError
from .model import ModelConfig, VariantSpec
from .nn import DropSpec
from .presets import PRESETS, learning_rate
from .train import TrainConfig


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none", "off") else float(s)


def _opt_int(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else int(s)


def _kinds(s: str) -> tuple[str, ...]:
    return tuple(k.strip() for k in s.split(",") if k.strip())


# section -> key -> (parser, default); model defaults of None come from the preset
SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {
        "preset": (str, "desk"),
        "variant": (str, None),
        "layers": (int, None),
        "gtb_blocks": (_opt_int, "none"),
        "layer_skip": (_bool, None),
        "patch_size": (int, None),
        "gtb_dim": (int, None),
        "gtb_heads": (int, None),
        "swiglu_hidden_dim": (int, None),
        "attention_dropout": (float, None),
        "swiglu_dropout": (float, None),
        "drop_path_rate": (float, None),
        "drop_path_schedule": (str, None),
        "frames_in": (int, None),
        "frames_out": (int, None),
        "channels": (int, None),
        "height": (int, None),
        "width": (int, None),
        "pos_encoding": (str, None),
        "ffn": (str, None),
    },
    "training": {
        "batch_size": (int, "4"),
        "learning_rate": (float, None),
        "scheduler": (str, "onecycle"),
        "optimizer": (str, "adamw"),
        "weight_decay": (float, "1e-2"),
        "epochs": (int, "1"),
        "beta1": (float, "0.9"),
        "beta2": (float, "0.999"),
        "eps": (float, "1e-8"),
        "lr_min": (float, "1e-6"),
        "pct_start": (float, "0.3"),
        "div_factor": (float, "25"),
        "final_div_factor": (float, "1e4"),
        "grad_clip": (_opt_float, "none"),
    },
    "data": {
        "count": (int, "4"),
        "val_count": (int, "4"),
        "frames_total": (_opt_int, "auto"),
        "objects": (int, "2"),
        "kinds": (_kinds, ",".join(SHAPE_KINDS)),
        "size_min": (int, "6"),
        "size_max": (int, "8"),
        "speed_min": (int, "1"),
        "speed_max": (int, "3"),
    },
    "run": {
        "seed": (int, "0"),
        "dtype": (str, "float32"),
        "checkpoint_every": (int, "1"),
    },
}

_PRESET_KEYS = {
    "variant": lambda c: c.variant.kind,
    "layers": lambda c: str(c.variant.layers),
    "layer_skip": lambda c: str(c.variant.layer_skip).lower(),
    "patch_size": lambda c: str(c.patch),
    "gtb_dim": lambda c: str(c.dim),
    "gtb_heads": lambda c: str(c.heads),
    "swiglu_hidden_dim": lambda c: str(c.hidden),
    "attention_dropout": lambda c: str(c.drop.attn_dropout),
    "swiglu_dropout": lambda c: str(c.drop.ffn_dropout),
    "drop_path_rate": lambda c: str(c.drop.drop_path_rate),
    "drop_path_schedule": lambda c: c.drop.schedule,
    "frames_in": lambda c: str(c.T),
    "frames_out": lambda c: str(c.T_out),
    "channels": lambda c: str(c.C),
    "height": lambda c: str(c.H),
    "width": lambda c: str(c.W),
    "pos_encoding": lambda c: c.pe_kind,
    "ffn": lambda c: c.ffn_kind,
}


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    data: ShapeSpec
    count: int
    val_count: int
    frames_total: int
    seed: int
    dtype: type
    checkpoint_every: int
    raw: dict

    def check_data(self) -> None:
        """Synthetic sequences must fit the model's frame layout."""
        if self.model.C != 1:
            raise ConfigError("synthetic data is single-channel; set model.channels = 1")
        if self.frames_total != self.model.T + self.model.T_out:
            raise ConfigError(f"data.frames_total ({self.frames_total}) must equal frames_in + frames_out "
                              f"({self.model.T + self.model.T_out})")

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for section, keys in self.raw.items():
            cp[section] = dict(keys)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def read_ini(path) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    out = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; valid: {', '.join(SCHEMA)}")
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}; valid: {', '.join(SCHEMA[section])}")
        out[section] = dict(cp[section])
    return out


def parse_override(item: str) -> tuple[str, str, str]:
    """``section.key=value`` -> ``(section, key, value)``."""
    name, sep, value = item.partition("=")
    section, dot, key = name.strip().partition(".")
    if not sep or not dot:
        raise ConfigError(f"override must look like section.key=value, got {item!r}")
    if section not in SCHEMA or key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {name.strip()}")
    return section, key, value.strip()


def resolve(file_values: dict | None = None, overrides: list[tuple[str, str, str]] = ()) -> RunConfig:
    """Merge defaults, preset, file values and overrides (later wins) into typed configs."""
    raw = {s: {k: d for k, (_, d) in keys.items() if d is not None} for s, keys in SCHEMA.items()}
    layered = [(s, k, v) for s, kv in (file_values or {}).items() for k, v in kv.items()] + list(overrides)
    for s, k, v in layered:
        if k == "preset":
            raw[s][k] = v
    preset = raw["model"]["preset"]
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; valid: {', '.join(PRESETS)}")
    base = PRESETS[preset]()
    for key, get in _PRESET_KEYS.items():
        raw["model"][key] = get(base)
    raw["training"]["learning_rate"] = repr(learning_rate(preset))
    for s, k, v in layered:
        raw[s][k] = v

    def val(section, key):
        parser = SCHEMA[section][key][0]
        try:
            return parser(raw[section][key])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {section}.{key}: {raw[section][key]!r} ({e})") from None

    m = {k: val("model", k) for k in SCHEMA["model"]}
    t = {k: val("training", k) for k in SCHEMA["training"]}
    d = {k: val("data", k) for k in SCHEMA["data"]}
    r = {k: val("run", k) for k in SCHEMA["run"]}

    if m["gtb_blocks"] is not None:
        variant = VariantSpec.for_blocks(m["variant"], m["gtb_blocks"], m["layer_skip"])
        raw["model"]["layers"] = str(variant.layers)
    else:
        variant = VariantSpec(m["variant"], m["layers"], m["layer_skip"])
    model = ModelConfig(
        T=m["frames_in"], T_out=m["frames_out"], C=m["channels"], H=m["height"], W=m["width"],
        patch=m["patch_size"], dim=m["gtb_dim"], heads=m["gtb_heads"], hidden=m["swiglu_hidden_dim"],
        variant=variant,
        drop=DropSpec(m["attention_dropout"], m["swiglu_dropout"], m["drop_path_rate"], m["drop_path_schedule"]),
        pe_kind=m["pos_encoding"], ffn_kind=m["ffn"],
    )
    if t["optimizer"].lower() != "adamw":
        raise ConfigError(f"only the adamw optimizer is available, got {t['optimizer']!r}")
    train = TrainConfig(
        lr_max=t["learning_rate"], weight_decay=t["weight_decay"], betas=(t["beta1"], t["beta2"]),
        eps=t["eps"], epochs=t["epochs"], batch_size=t["batch_size"], scheduler=t["scheduler"],
        grad_clip=t["grad_clip"], seed=r["seed"], lr_min=t["lr_min"], pct_start=t["pct_start"],
        div_factor=t["div_factor"], final_div_factor=t["final_div_factor"],
    )
    spec = ShapeSpec(H=model.H, W=model.W, num_objects=d["objects"], kinds=d["kinds"],
                     size_min=d["size_min"], size_max=d["size_max"],
                     speed_min=d["speed_min"], speed_max=d["speed_max"], seed=r["seed"])
    frames_total = d["frames_total"] or model.T + model.T_out
    if r["dtype"] not in ("float32", "float64"):
        raise ConfigError(f"run.dtype must be float32 or float64, got {r['dtype']!r}")
    if d["count"] < 1 or d["val_count"] < 0 or r["checkpoint_every"] < 1:
        raise ConfigError("data.count >= 1, data.val_count >= 0 and run.checkpoint_every >= 1 are required")
    return RunConfig(model, train, spec, d["count"], d["val_count"], frames_total, r["seed"],
                     np.dtype(r["dtype"]).type, r["checkpoint_every"], raw)

"""Flat key-value configuration files.

Syntax: one ``key = value`` per line, ``#`` comments, keys dotted by module
(``train.batch_size``, ``mixstyle.alpha``, ...).  Every CLI flag has a config
twin and flags win.  ``mixstyle.enabled_at_eval`` must stay false: the
style-mixing transform is a train-time augmentation.
"""

from __future__ import annotations

from pathlib import Path

DEFAULTS: dict[str, str] = {
    "mixstyle.alpha": "0.3",
    "mixstyle.apply_prob": "0.5",
    "mixstyle.enabled_at_eval": "false",
    "augment.mixup_alpha": "0.5",
    "augment.dropstep_ratio": "0.25",
    "augment.dropstep_count": "1",
    "train.batch_size": "60",
    "train.ema": "0.999",
    "train.warmup_epochs": "50",
    "train.ssl_max": "2",
    "train.loss_mode": "independent",
    "train.weak_uses_attention_pool": "true",
    "eval.segment": "1.0",
    "eval.max_fpr": "0.1",
    "eval.hard_threshold": "0.5",
    "psds.dtc": "0.7",
    "psds.gtc": "0.7",
    "psds.emax": "100",
    "psds.alpha_st": "1",
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: Path | str | None) -> dict[str, str]:
    """Defaults overlaid with the file (if any), then validated."""
    cfg = dict(DEFAULTS)
    if path is not None:
        cfg.update(parse_config(Path(path).read_text(encoding="utf-8")))
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict[str, str]) -> None:
    if get_bool(cfg, "mixstyle.enabled_at_eval", default=False):
        raise ValueError("mixstyle.enabled_at_eval must be false (train-time only transform)")
    mode = cfg.get("train.loss_mode", "independent")
    if mode not in ("independent", "baseline"):
        raise ValueError(f"train.loss_mode must be independent or baseline, got {mode!r}")


def get_bool(cfg: dict[str, str], key: str, default: bool | None = None) -> bool:
    raw = cfg.get(key)
    if raw is None:
        if default is None:
            raise KeyError(key)
        return default
    lowered = raw.lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"{key}: expected a boolean, got {raw!r}")


def get_float(cfg: dict[str, str], key: str) -> float:
    return float(cfg[key])


def get_int(cfg: dict[str, str], key: str) -> int:
    return int(cfg[key])

import pytest

from hetsed.config import DEFAULTS, get_bool, get_float, get_int, load_config, parse_config


def test_parse_basic_syntax():
    cfg = parse_config("a.b = 1\n# comment\n\nc = hello  # trailing\n")
    assert cfg == {"a.b": "1", "c": "hello"}


def test_parse_rejects_bad_lines():
    with pytest.raises(ValueError, match="line 1"):
        parse_config("not a pair")


def test_defaults_cover_documented_keys():
    for key in (
        "mixstyle.alpha",
        "mixstyle.apply_prob",
        "mixstyle.enabled_at_eval",
        "augment.mixup_alpha",
        "augment.dropstep_ratio",
        "augment.dropstep_count",
        "train.batch_size",
        "train.ema",
        "train.warmup_epochs",
        "train.ssl_max",
        "train.loss_mode",
    ):
        assert key in DEFAULTS
    assert get_int(DEFAULTS, "train.batch_size") == 60
    assert get_float(DEFAULTS, "train.ema") == 0.999
    assert get_int(DEFAULTS, "train.warmup_epochs") == 50
    assert get_float(DEFAULTS, "train.ssl_max") == 2.0


def test_load_config_file_overrides_defaults(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("train.batch_size = 30\n")
    cfg = load_config(path)
    assert get_int(cfg, "train.batch_size") == 30
    assert get_float(cfg, "mixstyle.alpha") == 0.3


def test_mixstyle_eval_flag_must_stay_false(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("mixstyle.enabled_at_eval = true\n")
    with pytest.raises(ValueError, match="enabled_at_eval"):
        load_config(path)


def test_loss_mode_validated(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("train.loss_mode = sideways\n")
    with pytest.raises(ValueError, match="loss_mode"):
        load_config(path)


def test_get_bool_parsing():
    assert get_bool({"k": "true"}, "k") is True
    assert get_bool({"k": "off"}, "k") is False
    assert get_bool({}, "k", default=True) is True
    with pytest.raises(ValueError):
        get_bool({"k": "maybe"}, "k")
    with pytest.raises(KeyError):
        get_bool({}, "k")

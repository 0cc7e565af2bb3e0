import pytest

from descreg.config import (
    CONFIG_KEYS,
    calibrated_config,
    default_config,
    parse_config,
)
from descreg.errors import ConfigError


def test_defaults_cover_every_key():
    config = default_config()
    for key in CONFIG_KEYS:
        assert config[key] is not None or CONFIG_KEYS[key].default is None


def test_documented_training_defaults():
    config = default_config()
    assert config["lr"] == 0.02
    assert config["epochs"] == 12
    assert config["batch"] == 128
    assert config["momentum"] == 0.9
    assert config["weight_decay"] == 1e-4
    assert config["score_scale"] == 20.0
    assert config["head.depth"] == 1
    assert config["head.hidden"] == 128
    assert config["reg.tau"] == 0.03
    assert config["reg.lambda"] == 1.0
    assert config["reg.mode"] == "adaptive"
    assert config["reg.fixed_margin"] == 0.2
    assert config["embedding_source"] == "semantic"


def test_calibrated_config_overrides():
    config = calibrated_config()
    assert config["embedding_source"] == "description"
    assert config["head.depth"] == 2
    assert config["reg.tau"] == 1.0
    assert config["reg.triplets_per_class"] == 2
    # everything else stays at the documented defaults
    assert config["lr"] == 0.02
    assert config["epochs"] == 12
    assert config["reg.lambda"] == 1.0


def test_parse_config_values_comments_blanks():
    config = parse_config("# comment\n\nlr = 0.1\nreg.mode = off  # trailing\n")
    assert config["lr"] == 0.1
    assert config["reg.mode"] == "off"


def test_parse_config_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown"):
        parse_config("no.such.key = 1\n")


def test_parse_config_rejects_bad_syntax():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("lr 0.1\n")


def test_parse_config_type_errors():
    with pytest.raises(ConfigError):
        parse_config("epochs = twelve\n")
    with pytest.raises(ConfigError):
        parse_config("lr = -1\n")
    with pytest.raises(ConfigError):
        parse_config("reg.mode = sideways\n")


def test_set_validates_like_parse():
    config = default_config()
    config.set("reg.tau", 0.5)
    assert config["reg.tau"] == 0.5
    with pytest.raises(ConfigError):
        config.set("reg.tau", -1.0)
    with pytest.raises(ConfigError):
        config.set("bogus", 1)


def test_copy_is_independent():
    a = default_config()
    b = a.copy()
    b.set("lr", 0.5)
    assert a["lr"] == 0.02


def test_reproduce_modes_parsing():
    config = default_config()
    modes = config.reproduce_modes()
    assert "adaptive" in modes and "off" in modes
    config.set("repro.modes", "off, adaptive")
    assert config.reproduce_modes() == ["off", "adaptive"]
    config.set("repro.modes", "off, bogus")
    with pytest.raises(ConfigError):
        config.reproduce_modes()

import pytest

from predformer.config import parse_override, read_ini, resolve
from predformer.errors import ConfigError


def test_defaults_are_desk_preset():
    rc = resolve()
    assert rc.model.variant.kind == "binary_ts" and rc.model.variant.layers == 2
    assert (rc.model.H, rc.model.W, rc.model.dim) == (32, 32, 128)
    assert rc.train.lr_max == 5e-4 and rc.train.weight_decay == 1e-2 and rc.train.scheduler == "onecycle"
    assert rc.frames_total == 20


def test_preset_then_file_then_flags(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[model]\npreset = taxibj\nvariant = quad_stts\n\n[training]\nepochs = 7\n")
    rc = resolve(read_ini(p), [("training", "epochs", "9")])
    assert rc.model.patch == 4 and rc.model.C == 2  # from the preset
    assert rc.model.variant.kind == "quad_stts"  # from the file
    assert rc.train.epochs == 9  # flag wins


def test_gtb_blocks_sets_layers():
    rc = resolve(overrides=[("model", "variant", "quad_tsst"), ("model", "gtb_blocks", "8")])
    assert rc.model.variant.layers == 2
    assert "layers = 2" in rc.to_ini()


def test_unknown_key_and_section_rejected(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[model]\ngtb_dims = 64\n")
    with pytest.raises(ConfigError, match="gtb_dims"):
        read_ini(p)
    p.write_text("[optim]\nlr = 1\n")
    with pytest.raises(ConfigError, match="optim"):
        read_ini(p)
    with pytest.raises(ConfigError):
        parse_override("training.lr=1")
    with pytest.raises(ConfigError):
        parse_override("epochs=1")


def test_bad_values():
    with pytest.raises(ConfigError):
        resolve(overrides=[("training", "epochs", "many")])
    with pytest.raises(ConfigError):
        resolve(overrides=[("model", "variant", "tsts")])
    with pytest.raises(ConfigError):
        resolve(overrides=[("training", "optimizer", "sgd")])


def test_effective_config_round_trips(tmp_path):
    rc = resolve(overrides=[("model", "variant", "fac_st"), ("run", "seed", "5")])
    p = tmp_path / "eff.ini"
    p.write_text(rc.to_ini())
    again = resolve(read_ini(p))
    assert again.model == rc.model and again.train == rc.train and again.data == rc.data


def test_data_check():
    rc = resolve(overrides=[("model", "preset", "taxibj")])
    with pytest.raises(ConfigError, match="single-channel"):
        rc.check_data()


def test_learning_rate_follows_preset():
    assert resolve().train.lr_max == 5e-4
    assert resolve({"model": {"preset": "moving_mnist_analog"}}).train.lr_max == 1e-3
    assert resolve({"model": {"preset": "taxibj"}}).train.lr_max == 1e-3
    assert resolve({"model": {"preset": "taxibj"}}, [("training", "learning_rate", "2e-4")]).train.lr_max == 2e-4

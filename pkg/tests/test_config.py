import pytest

from sftpg.config import TrainConfig, apply_overrides, dump_config, load_config, parse_config_text


def test_defaults_follow_toy_settings():
    cfg = TrainConfig()
    assert (cfg.lam, cfg.n_critic, cfg.n_generator, cfg.gamma) == (0.1, 5, 1, None)
    assert (cfg.lr_generator, cfg.lr_critic, cfg.batch_m) == (5e-5, 1e-3, 64)
    assert (cfg.finetune_epochs, cfg.pretrain_epochs, cfg.eta_gp) == (300, 2000, 0.001)
    assert cfg.betas == (pytest.approx(0.01), pytest.approx(0.999))


def test_round_trip():
    cfg = TrainConfig(gamma=0.5, gen_hidden=(4, 5), eval_root=True, seed=3)
    assert parse_config_text(dump_config(cfg)) == cfg


def test_comments_alias_and_optional():
    cfg = parse_config_text("# toy\nlambda = 0.3  # paper name\ngamma = none\nbeta_max = 0.5\n")
    assert cfg.lam == 0.3 and cfg.gamma is None and cfg.betas[1] == 0.5


def test_image_preset():
    cfg = parse_config_text("preset = image")
    assert (cfg.lam, cfg.n_generator, cfg.gamma) == (1.0, 10, 0.1)


def test_load_and_override(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("T = 4\n")
    cfg = apply_overrides(load_config(p), ["n_critic=2", "estimator = pg"])
    assert (cfg.T, cfg.n_critic, cfg.estimator) == (4, 2, "pg")


@pytest.mark.parametrize("text", ["T = 0", "lam = -1", "gamma = 0", "dataset = spiral", "estimator = sgd",
                                  "bogus = 1", "missing equals", "eval_subsample = 20000", "T =",
                                  "eval_root = maybe", "data_dim = 3"])
def test_invalid_settings(text):
    with pytest.raises(ValueError):
        parse_config_text(text)


def test_regularizer_mapping():
    assert TrainConfig().regularizer == "baseline"
    assert TrainConfig(estimator="pg").regularizer == "gp"
    assert TrainConfig(estimator="pathwise_gp").regularizer == "gp"
    assert TrainConfig(estimator="pg", critic_reg="baseline").uses_baseline


def test_digest_ignores_seed():
    a, b = TrainConfig(seed=0), TrainConfig(seed=1)
    assert a.digest() == b.digest() and a.run_name() != b.run_name()
    assert TrainConfig(T=4).digest() != a.digest()

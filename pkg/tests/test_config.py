import dataclasses

import pytest

from maphdr.config import (DEFAULT_CONFIG_PATH, ConfigError, RunConfig, load_config, parse_overrides,
                           parse_text, serialize)


def test_default_file_matches_dataclass():
    assert load_config() == RunConfig()


def test_default_file_lists_every_key():
    keys = {line.split("=")[0].strip() for line in DEFAULT_CONFIG_PATH.read_text().splitlines()
            if line.split("#")[0].strip()}
    assert keys == {f.name for f in dataclasses.fields(RunConfig)}


def test_paper_values():
    cfg = RunConfig()
    assert (cfg.kappa, cfg.tikhonov, cfg.steering_reg, cfg.block_size, cfg.bfgs_iters, cfg.levels) == (
        10.0, 0.1, 0.01, 7, 10, 3)


def test_round_trip_key_set():
    cfg = RunConfig(alpha=0.25, levels=2, anchor="zero", support_prior="linear")
    text = serialize(cfg)
    assert parse_text(text) == cfg
    assert [l.split(" = ")[0] for l in serialize(parse_text(text)).splitlines()] == \
        [l.split(" = ")[0] for l in text.splitlines()]


def test_unknown_key():
    with pytest.raises(ConfigError, match="unknown config keys: bogus"):
        parse_text("alpha = 1\nbogus = 2\n")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="line 2: duplicate key alpha"):
        parse_text("alpha = 1\nalpha = 2\n")


@pytest.mark.parametrize("text,msg", [
    ("alpha\n", "expected key = value"),
    ("levels = two\n", "cannot parse"),
    ("alpha = -1\n", "alpha must be positive"),
    ("block_size = 4\n", "block"),
    ("omega_side = both\n", "omega_side"),
    ("support_prior = ising\n", "support_prior"),
])
def test_invalid(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_text(text)


def test_comments_and_base():
    base = RunConfig(seed=7)
    cfg = parse_text("# header\n\nlevels = 1   # coarse only\n", base)
    assert cfg.levels == 1 and cfg.seed == 7


def test_overrides():
    assert parse_overrides(["alpha=0.3", " levels = 2"]) == {"alpha": "0.3", "levels": "2"}
    with pytest.raises(ConfigError):
        parse_overrides(["alpha"])


def test_mrf_rule():
    w = RunConfig(beta_scale=0.5, gamma_scale=2.0).mrf(sigma=0.2)
    assert w.beta == pytest.approx(0.02) and w.gamma == pytest.approx(0.04)

import pytest

from splatdistill.config import ConfigError, dump_config, load_config, parse_config
from splatdistill.optim import RunConfig


def test_parse_overrides_both_levels():
    cfg = parse_config("""
# comment line
iterations = 12
setting=d   # trailing comment
lambda_2d = 0.25
fsd_mode = literal
""")
    assert cfg.iterations == 12 and cfg.setting == "d"
    assert cfg.distillation.lambda_2d == 0.25 and cfg.distillation.fsd_mode == "literal"
    assert cfg.lr_sh == RunConfig().lr_sh


def test_dump_round_trip(tmp_path):
    cfg = RunConfig(iterations=7, seed=3)
    cfg.distillation.guidance_2d = 2.0
    p = tmp_path / "run.cfg"
    p.write_text(dump_config(cfg))
    assert load_config(p).flat() == cfg.flat()


@pytest.mark.parametrize("text,match", [
    ("nope = 1", "unknown key"),
    ("iterations", "key=value"),
    ("iterations = many", "iterations"),
    ("lr_sh = fast", "lr_sh"),
])
def test_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)

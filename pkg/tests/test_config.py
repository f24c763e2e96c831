import pytest

from featslam import config
from featslam.errors import InvalidConfig


def test_parse_types_comments_and_blanks():
    text = "# world\nseed = 3\n\nn_frames = 12   # short\nmask_dropout = 0.25\ndegrade_region = 0, 0, 64 48\n"
    v = config.parse_config(text, config.WORLD_SCHEMA)
    assert v == {"seed": 3, "n_frames": 12, "mask_dropout": 0.25, "degrade_region": (0.0, 0.0, 64.0, 48.0)}


@pytest.mark.parametrize("text, key", [
    ("seed = 1\nsede = 2\n", "sede"),
    ("seed = 1\nseed = 2\n", "seed"),
    ("seed = 1.5\n", "seed"),
    ("seed = 1\nfx = nan\n", "fx"),
    ("seed = 1\ndegrade_region = 1 2 3\n", "degrade_region"),
])
def test_bad_lines_name_the_key(text, key):
    with pytest.raises(InvalidConfig) as exc:
        config.parse_config(text, config.WORLD_SCHEMA)
    assert exc.value.key == key and key in str(exc.value)


def test_line_without_equals():
    with pytest.raises(InvalidConfig, match="line 2"):
        config.parse_config("seed = 1\nn_frames 3\n", config.WORLD_SCHEMA)


def test_world_requires_seed_and_valid_pattern():
    with pytest.raises(InvalidConfig) as exc:
        config.world_config({"n_frames": 3})
    assert exc.value.key == "seed"
    with pytest.raises(InvalidConfig) as exc:
        config.world_config({"seed": 1, "trajectory_pattern": "spiral"})
    assert exc.value.key == "trajectory_pattern"


def test_world_round_trip():
    values = {"seed": 4, "n_frames": 9, "fx": 600.0, "degrade_region": (0.0, 0.0, 10.0, 10.0),
              "degrade_start": 2, "degrade_end": 3}
    cfg, deg = config.world_config(values), config.degradation(values)
    assert cfg.camera.fx == 600.0 and deg == ((0.0, 0.0, 10.0, 10.0), 2, 3, 0)
    text = config.format_config(config.world_values(cfg, deg))
    again = config.parse_config(text, config.WORLD_SCHEMA)
    assert config.world_config(again) == cfg and config.degradation(again) == deg


def test_degradation_requires_window():
    with pytest.raises(InvalidConfig) as exc:
        config.degradation({"degrade_region": (0, 0, 1, 1), "degrade_start": 3})
    assert exc.value.key == "degrade_end"
    with pytest.raises(InvalidConfig):
        config.degradation({"degrade_region": (0, 0, 1, 1), "degrade_start": 3, "degrade_end": 2})


def test_pipeline_config():
    with pytest.raises(InvalidConfig) as exc:
        config.pipeline_config({"c_base": 4.0})
    assert exc.value.key == "th"
    cfg = config.pipeline_config({"c_base": 4.0, "th": 1.2, "d_th": 2.0, "global_refine": False},
                                 line_policy="never")
    assert cfg.awareness.th == 1.2 and cfg.d_th == 2.0 and not cfg.run_global_refine
    assert cfg.line_policy == "never"
    with pytest.raises(InvalidConfig):
        config.pipeline_config({"c_base": 4.0, "th": 1.2, "grid_rows": 0})

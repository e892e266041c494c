import pytest

from stokeslab.config import ConfigError, ExperimentConfig, load_config, parse_config


def test_empty_text_gives_defaults():
    assert parse_config("") == ExperimentConfig()
    cfg = ExperimentConfig()
    assert (cfg.N, cfg.m, cfg.omega, cfg.eps, cfg.seed) == (48, 200, "0,0.3,0,0.3", 0.3, 0)


def test_comments_blank_lines_and_types():
    cfg = parse_config("""
        # a comment
        N = 16   # trailing comment
        m = 20
        spec_modes = 10
        T_list = 0.5, 0.25
        seed = 0x10
    """)
    assert cfg.N == 16 and cfg.m == 20
    assert cfg.T_list == (0.5, 0.25)
    assert cfg.seed == 16


def test_empty_list_value():
    assert parse_config("lambdas =").lambdas == ()


@pytest.mark.parametrize("text,key", [
    ("colour = red", "colour"),
    ("N = 16\nN = 17", "N"),
    ("N = sixteen", "N"),
    ("N = 2", "N"),
    ("N = 4\nm = 17", "m"),
    ("omega = 0.5,0.5,0,1", "omega"),
    ("omega = 0,2,0,1", "omega"),
    ("lambdas = 10, -1", "lambdas"),
    ("T_grid = 0.1, 0.3, 0.2", "T_grid"),
    ("eps = 1", "eps"),
    ("ratio = 0", "ratio"),
    ("seed = -1", "seed"),
    ("T_list =", "T_list"),
])
def test_invalid_entries_name_their_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key
    assert str(info.value).startswith(f"{key}:")


def test_first_failing_key_is_reported():
    # both m and eps are invalid; m comes first in declaration order
    with pytest.raises(ConfigError) as info:
        parse_config("eps = 2\nN = 4\nm = 100")
    assert info.value.key == "m"


def test_line_without_equals_sign():
    with pytest.raises(ConfigError) as info:
        parse_config("N 16")
    assert info.value.key == "line 1"


def test_config_error_is_a_value_error():
    assert issubclass(ConfigError, ValueError)


def test_dump_round_trip(tmp_path):
    cfg = parse_config("N = 16\nm = 20\nspec_modes = 10\nlambdas = 100.5, 200\nout = somewhere")
    path = tmp_path / "cfg.txt"
    path.write_text(cfg.dump())
    assert load_config(path) == cfg


def test_overrides_skip_none():
    cfg = ExperimentConfig().with_overrides(seed=7, out=None)
    assert cfg.seed == 7 and cfg.out == "results"

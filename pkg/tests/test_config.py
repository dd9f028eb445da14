import math

import pytest

from lcflow.config import ConfigError, Preset, RunConfig, load_config, parse_besov, parse_config
from lcflow.fields import Grid
from lcflow.littlewood_paley import BesovSpec


def test_example_config():
    cfg = parse_config("n = 2\nm = 64\npreset = shear 0.1")
    assert (cfg.n, cfg.m) == (2, 64)
    assert cfg.preset == Preset("shear", (0.1,))


def test_empty_file_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert (cfg.n, cfg.m, cfg.L, cfg.preset.kind) == (2, 64, 2 * math.pi, "zero")
    assert cfg.dt is None and cfg.grid == Grid(2, 64)
    assert cfg.specs() == (BesovSpec.critical(2, 2, 2, 4),)


def test_m_not_power_of_two():
    with pytest.raises(ConfigError) as info:
        parse_config("m = 63")
    assert info.value.errors[0][0] == 1
    assert "power of two" in info.value.errors[0][1]


def test_all_errors_reported_with_lines():
    text = "\n".join([
        "# a comment",
        "m = 63",
        "colour = blue",
        "T = -1",
        "preset = random-band 1 5 2 0.1",
        "dt = fast",
        "m = 64",
        "besov = 1 2",
    ])
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    lines = [ln for ln, _ in info.value.errors]
    assert lines == [2, 3, 4, 5, 6, 7, 8]
    assert "line 3: unknown key 'colour'" in str(info.value)


def test_values_and_comments():
    cfg = parse_config("""
        L = 2pi          # period
        dt = auto
        T = 0.5
        preset = random-band(7, 1, 4, 0.25)
        besov = 2 2 4
        besov = 0 2 2 inf
        output = runs/a
        stride = 4
        q1 = 6
    """)
    assert cfg.L == 2 * math.pi and cfg.dt is None and cfg.T == 0.5
    assert cfg.preset == Preset("random-band", (7, 1, 4, 0.25))
    assert cfg.besov == (BesovSpec.critical(2, 2, 2, 4), BesovSpec(0.0, 2, 2, math.inf))
    assert (cfg.output, cfg.stride, cfg.q1) == ("runs/a", 4, 6.0)


def test_preset_validation():
    for bad in ("preset = vortex", "preset = shear", "preset = zero 1", "preset = random-band 1 2 40 0.1",
                "preset = random-band -1 1 2 0.1", "preset = file"):
        with pytest.raises(ConfigError):
            parse_config(bad)


def test_preset_build(tmp_path):
    from lcflow.io import write_snapshot
    from lcflow.random_fields import shear_state

    g = Grid(2, 16)
    write_snapshot(tmp_path / "s.nlcf", shear_state(g, 0.5))
    cfg = parse_config(f"m = 16\npreset = file {tmp_path / 's.nlcf'}")
    assert cfg.initial_state().u[0][0, 1] == shear_state(g, 0.5).u[0][0, 1]
    with pytest.raises(ValueError):
        parse_config(f"m = 32\npreset = file {tmp_path / 's.nlcf'}").initial_state()


def test_other_invariants():
    for bad in ("n = 4", "q1 = 2", "snapshots = 1", "K = 4", "tol = 0", "eps = inf", "dt = -1",
                "seed = -3", "perturbation = -0.1", "x"):
        with pytest.raises(ConfigError):
            parse_config(bad)


def test_bytes_and_files(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_bytes("m = 32\n".encode())
    assert load_config(path).m == 32
    with pytest.raises(ConfigError):
        parse_config(b"\xff\xfe")


def test_parse_besov():
    assert parse_besov("2 2 4", 3) == BesovSpec.critical(3, 2, 2, 4)
    with pytest.raises(ValueError):
        parse_besov("1", 2)

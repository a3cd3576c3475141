import glob
import os

import pytest

from locality_lab.config import build_action, build_decomposition, build_mesh, load_config, parse_config
from locality_lab.errors import ConfigError

CONFIGS = sorted(glob.glob(os.path.join(os.path.dirname(__file__), "..", "configs", "*.toml")))


@pytest.mark.parametrize("path", [p for p in CONFIGS if "bad_" not in p], ids=os.path.basename)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.experiment and cfg.name


def test_unknown_key_reports_line_and_column():
    text = 'experiment = "localization"\n\n[mesh]\nkind = "circle"\n  n_sitez = 4\n'
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    e = info.value
    assert (e.line, e.column, e.key) == (5, 3, "n_sitez")
    assert "line 5, column 3" in str(e)


def test_unknown_potential_kind():
    with pytest.raises(ConfigError) as info:
        load_config(os.path.join(os.path.dirname(__file__), "..", "configs", "bad_potential.toml"))
    assert info.value.key == "kind" and info.value.line == 5


def test_parse_error_position():
    with pytest.raises(ConfigError) as info:
        parse_config('experiment = "annulus"\n[mesh\n')
    assert info.value.line == 2


@pytest.mark.parametrize(
    "snippet, key",
    [("[solver]\ntol = 0.0\n", "tol"), ("[semiclassical]\nhbar = -1.0\n", "hbar"), ('[locality]\nepsilon = "auto"\n', "epsilon")],
)
def test_nonpositive_values_rejected(snippet, key):
    with pytest.raises(ConfigError) as info:
        parse_config('experiment = "localization"\n' + snippet)
    assert info.value.key == key and info.value.line == 3


def test_wrong_type_and_unknown_experiment():
    with pytest.raises(ConfigError):
        parse_config('experiment = "localization"\n[mesh]\nn_sites = "64"\n')
    with pytest.raises(ConfigError):
        parse_config('experiment = "teleport"\n')
    with pytest.raises(ConfigError):
        parse_config('experiment = "annulus"\n[extras]\nx = 1\n')


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/x.toml")


def test_builders_from_cut_wave_config():
    cfg = load_config(os.path.join(os.path.dirname(__file__), "..", "configs", "cut_wave_localization.toml"))
    mesh = build_mesh(cfg)
    dec = build_decomposition(cfg, mesh)
    spec = build_action(cfg, mesh, dec)
    assert mesh.n_sites == 64 and spec.time_steps == 100 and spec.total_time == 0.37
    assert len(dec.sites("O")) > 0

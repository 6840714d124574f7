import math

import pytest
import yaml

from tricascade.config import RunConfig, dump_config, from_dict, load_config, to_dict
from tricascade.errors import ConfigError


def test_default_round_trip(tmp_path):
    cfg = RunConfig()
    path = tmp_path / "c.yaml"
    dump_config(cfg, path)
    assert load_config(path) == cfg


def test_partial_document_overrides():
    cfg = from_dict({"seed": 7, "model": {"branch_direct": 0.1}, "analysis": {"binning": {"bin_width_ps": 100}},
                     "channels": [{"accepted_lines": ["XX"], "efficiency": 0.5}]})
    assert cfg.seed == 7
    assert cfg.model.branch_direct == 0.1
    assert cfg.analysis.binning.bin_width_ps == 100
    assert len(cfg.channels) == 1 and cfg.channels[0].efficiency == 0.5
    assert cfg.excitation.pulse_areas_rad == (math.pi,) * 3


@pytest.mark.parametrize("doc", [
    {"sed": 1},
    {"model": {"branch_drect": 0.1}},
    {"channels": [{"efficency": 0.1}]},
    {"model": 3},
    {"simulation": {"method": "exact"}},
    {"channels": [{"accepted_lines": ["nope"]}]},
])
def test_bad_documents_rejected(doc):
    with pytest.raises(ConfigError):
        from_dict(doc)


def test_yaml_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_to_dict_is_plain_yaml():
    text = yaml.safe_dump(to_dict(RunConfig()))
    assert from_dict(yaml.safe_load(text)) == RunConfig()

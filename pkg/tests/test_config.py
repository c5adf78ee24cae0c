import json

import pytest

from rmask.config import combine_spec, dumps, load_config, train_config, validate, walk_config, with_defaults
from rmask.errors import ConfigError

MINIMAL = {"graph": {"edge_list": "e.txt", "features": "x.rmf"}}


def test_defaults_filled():
    doc = with_defaults(MINIMAL)
    assert doc["propagation"]["mode"] == "baseline" and doc["propagation"]["r"] == 0.5
    assert doc["combine"]["method"] == "s2gc_average"
    assert doc["train"]["patience"] == 100
    assert doc["output"]["directory"] == "out"
    assert "propagation" not in MINIMAL


@pytest.mark.parametrize("doc", [
    {**MINIMAL, "extra": 1},
    {"graph": {**MINIMAL["graph"], "weights": "w.txt"}},
    {**MINIMAL, "propagation": {"mode": "rmask", "depth": 3}},
    {**MINIMAL, "train": {"lr": 0.1}},
])
def test_unknown_keys_rejected(doc):
    with pytest.raises(ConfigError, match="Additional properties"):
        validate(doc)


@pytest.mark.parametrize("section,bad", [
    ("propagation", {"mode": "sgc"}),
    ("propagation", {"r": 1.5}),
    ("propagation", {"alpha": 1.0}),
    ("propagation", {"walks_T": 0}),
    ("combine", {"method": "max"}),
    ("train", {"dropout": 1.0}),
])
def test_out_of_range_values(section, bad):
    with pytest.raises(ConfigError, match=section):
        with_defaults({**MINIMAL, section: bad})


def test_missing_graph():
    with pytest.raises(ConfigError):
        validate({})


def test_patience_bound():
    with pytest.raises(ConfigError, match="patience"):
        with_defaults({**MINIMAL, "train": {"max_epochs": 5, "patience": 10}})


def test_load_resolves_relative_paths(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    (sub / "c.json").write_text(json.dumps({**MINIMAL, "output": {"directory": "res"}}))
    doc = load_config(sub / "c.json")
    assert doc["graph"]["edge_list"] == str(sub / "e.txt")
    assert doc["output"]["directory"] == str(sub / "res")


def test_seed_and_out_override(tmp_path, monkeypatch):
    (tmp_path / "c.json").write_text(json.dumps(MINIMAL))
    monkeypatch.chdir(tmp_path)
    doc = load_config(tmp_path / "c.json", seed=17, out="elsewhere")
    assert doc["propagation"]["seed"] == doc["train"]["seed"] == 17
    assert doc["output"]["directory"] == str(tmp_path / "elsewhere")


def test_effective_config_revalidates(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps(MINIMAL))
    doc = load_config(tmp_path / "c.json")
    again = json.loads(dumps(doc))
    validate(again)
    assert with_defaults(again) == doc


@pytest.mark.parametrize("text,match", [(None, "not found"), ("{", "not valid JSON")])
def test_unreadable(tmp_path, text, match):
    p = tmp_path / "c.json"
    if text is not None:
        p.write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_config(p)


def test_section_builders():
    doc = with_defaults({**MINIMAL, "propagation": {"mode": "rmask", "depth_H": 4, "walks_T": 3},
                         "combine": {"method": "gbp_weighted", "beta": 0.2}, "train": {"num_layers": 2}})
    assert walk_config(doc).depth == 4 and walk_config(doc).walks == 3
    assert combine_spec(doc).beta == 0.2
    assert train_config(doc).num_layers == 2

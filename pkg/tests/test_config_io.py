import json
from pathlib import Path

import pytest

from nddcert.config_io import ConfigError, dump_config, load_config, parse_config, save_config
from nddcert.core import SimulationConfig
from nddcert.recipes import fig2_network, fig4_network

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def test_shipped_configs_parse():
    for name in ("fig2.json", "cascade.json", "example2.json"):
        net, cfg = load_config(CONFIG_DIR / name)
        assert net.n >= 1
        assert cfg.t_final > 0


def test_shipped_fig2_config_contents():
    net, cfg = load_config(CONFIG_DIR / "fig2.json")
    assert net.n == 3
    assert net.unintended == "resource-competition"
    assert all(s.kind == "srna-feedback" for s in net.subsystems)
    assert all(s.nu == 1.0 for s in net.subsystems)  # shared top-level value
    assert net.edges[0].param("r_star") == 10.0


def test_round_trip_identity():
    net = fig4_network(0.01, 3e-4)
    cfg = SimulationConfig(t_final=80.0, store_points=250)
    doc = dump_config(net, cfg)
    net2, cfg2 = parse_config(json.dumps(doc))
    assert net2 == net
    assert cfg2 == cfg


def test_round_trip_custom_delta(tmp_path):
    base = fig2_network(10.0, 0.01)
    import dataclasses

    net = dataclasses.replace(base, unintended=((0.0, 1.0, 0.5), (1.0, 0.0, 1.0), (0.5, 1.0, 0.0)))
    path = tmp_path / "net.json"
    save_config(path, net, SimulationConfig())
    net2, _ = load_config(path)
    assert net2 == net


def test_backward_edge_reported_with_location():
    doc = {
        "subsystems": [
            {"kind": "srna-feedback", "params": {"alpha": 100, "lambda": 1, "beta": 1, "kappa": 1, "delta": 1}, "epsilon": 0.01},
            {"kind": "srna-feedback", "params": {"alpha": 100, "lambda": 1, "beta": 1, "kappa": 1, "delta": 1}, "epsilon": 0.01},
            {"kind": "srna-feedback", "params": {"alpha": 100, "lambda": 1, "beta": 1, "kappa": 1, "delta": 1}, "epsilon": 0.01},
        ],
        "edges": [{"from": 3, "to": 2, "type": "hill", "B": 1, "k": 1, "n": 1}],
        "unintended": "none",
    }
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    issues = err.value.issues
    assert any(i.code == "EdgeNotForward" and "edges[0]" in (i.location or "") for i in issues)


def test_unknown_family_reported():
    doc = {"subsystems": [{"kind": "mystery", "params": {}, "epsilon": 0.1}]}
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert any(i.code == "UnknownFamily" for i in err.value.issues)


def test_missing_gene_parameter_reported():
    doc = {
        "subsystems": [
            {"kind": "srna-feedback", "params": {"alpha": 100}, "epsilon": 0.01}
        ]
    }
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert any(i.code == "BadSubsystem" for i in err.value.issues)


def test_missing_edge_fields_reported():
    doc = {
        "subsystems": [
            {"kind": "srna-feedback", "params": {"alpha": 100, "lambda": 1, "beta": 1, "kappa": 1, "delta": 1}, "epsilon": 0.01}
        ],
        "edges": [{"to": 1, "type": "hill", "B": 1}],
    }
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert any(i.code == "MissingField" for i in err.value.issues)


def test_bad_json_text():
    with pytest.raises(ConfigError) as err:
        parse_config("{not json", source="inline")
    assert any(i.code == "BadJson" for i in err.value.issues)


def test_unknown_top_level_key():
    doc = {"subsystems": [], "surprise": 1}
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert any(i.code == "UnknownKey" for i in err.value.issues)


def test_per_subsystem_nu_overrides_shared_value():
    doc = {
        "nu": 0.5,
        "subsystems": [
            {"kind": "srna-feedback", "params": {"alpha": 100, "lambda": 1, "beta": 1, "kappa": 1, "delta": 1}, "epsilon": 0.01},
            {"kind": "srna-feedback", "params": {"alpha": 100, "lambda": 1, "beta": 1, "kappa": 1, "delta": 1}, "epsilon": 0.01, "nu": 0.125},
        ],
    }
    net, _ = parse_config(doc)
    assert net.subsystems[0].nu == 0.5
    assert net.subsystems[1].nu == 0.125

import json

import pytest

from bdsvie.config import ConfigError, load_config, parse_config


def test_defaults():
    cfg = parse_config({"problem": {"catalog": "martingale"}})
    s = cfg.solver
    assert (s.N, s.M, s.degree, s.tol, s.max_iter, s.seed) == (32, 8192, 2, 1e-4, 25, 42)
    assert cfg.build_problem().name == "martingale"


def test_inline_expressions():
    cfg = parse_config({"problem": {"f": "-y1", "g": "0", "xi": "wT", "C": 1.0, "alpha": 0.5}})
    spec = cfg.build_problem()
    assert spec.sources["f"] == ["-y1"]


@pytest.mark.parametrize("data, message", [
    ({"problem": {"catalog": "martingale"}, "extra": 1}, "unknown top-level"),
    ({"problem": {"catalog": "martingale", "colour": 1}}, "unknown key"),
    ({"problem": {"catalog": "martingale"}, "solver": {"NN": 3}}, "unknown key"),
    ({"problem": {"catalog": "nope"}}, "unknown catalog"),
    ({"problem": {"catalog": "martingale"}, "solver": {"N": 0}}, "solver.N"),
    ({"problem": {"catalog": "martingale"}, "solver": {"M": 3}}, "regression features"),
    ({"problem": {"catalog": "martingale"}, "solver": {"tol": 0}}, "tol"),
    ({"problem": {"catalog": "martingale"}, "verify": {"checks": ["magic"]}}, "unknown check"),
    ({"problem": {"catalog": "martingale"}, "verify": {"oracles": {"lipschitz-demo": {}}}}, "no closed-form"),
    ({"problem": {"catalog": "martingale"}, "verify": {"oracles": {"martingale": {"K": 1}}}}, "unknown key"),
    ({"problem": {"catalog": "martingale"}, "output": {"formats": ["xml"]}}, "output format"),
    ({"problem": {"catalog": "martingale", "alpha": 1.0}}, r"alpha must lie strictly inside \(0,1\)"),
    ({"problem": {"f": "y1 +", "g": "0", "xi": "wT", "C": 0, "alpha": 0.5}}, "position 4"),
    ({"problem": {"f": "wT", "g": "0", "xi": "wT", "C": 0, "alpha": 0.5}}, "not allowed"),
    ({"problem": {"f": "0", "g": "0", "xi": "wT"}}, "C and alpha"),
    ({"problem": {"catalog": "lipschitz-demo", "C": 1.0}, "solver": {"theta": 1.5}}, "theta"),
    ({"solver": {}}, "problem"),
])
def test_rejected(data, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(data)


def test_load_config_invalid_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)


def test_round_trip_to_dict(tmp_path):
    cfg = parse_config({"problem": {"catalog": "linear-drift", "rho": 2.0}, "solver": {"N": 8, "M": 100}})
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert load_config(p).to_dict() == cfg.to_dict()

import numpy as np
import pytest

from perturbed_td import ValidationError
from perturbed_td.config import ExperimentConfig, parse_config, parse_value
from perturbed_td.resource import PAPER_SPEC

PAPER_CONFIG = """
# resource experiment
N = 20
alpha = 0.9
c = [0.8, 0.9, 1, 1.1]
lambda = [0.090596, 0.048632, 0.015657, 0.005088]
mu = [0.483723, 0.444019, 0.024843, 0.335103]
policy = greedy
run_length = 50000   # per run
num_runs = 100
"""


def test_parse_values():
    assert parse_value("3") == 3 and isinstance(parse_value("3"), int)
    assert parse_value("1e-3") == 0.001
    assert parse_value("true") is True
    assert parse_value("[1, 2.5, x]") == [1, 2.5, "x"]
    assert parse_value("[]") == []
    assert parse_value("'quoted'") == "quoted"
    with pytest.raises(ValidationError):
        parse_value("[1, 2")


def test_parse_errors_carry_line():
    with pytest.raises(ValidationError, match="line 2"):
        parse_config("N = 3\njust words\n")


def test_paper_config_round_trip():
    cfg = ExperimentConfig.from_mapping(parse_config(PAPER_CONFIG))
    assert cfg.resource_spec() == PAPER_SPEC
    assert cfg.td_config().run_length == 50000
    assert cfg.mixing_weight == 0.9


def test_unknown_key_rejected():
    with pytest.raises(ValidationError, match="unknown"):
        ExperimentConfig.from_mapping({"gamma": 0.5})


def test_validation_before_compute():
    for bad in ({"policy": "best"}, {"fidelity": "x"}, {"mixing": 1.0}, {"threads": 0},
                {"m": 3}, {"lam": [0.9, 0.1, 0.1, 0.1]}, {"step_b": -1}):
        with pytest.raises(ValidationError):
            ExperimentConfig.from_mapping(bad)


def test_digest_ignores_output_and_threads():
    a = ExperimentConfig.from_mapping({"out": "x", "threads": 4})
    b = ExperimentConfig.from_mapping({"output": "y"})
    assert a.digest() == b.digest()
    assert a.digest() != ExperimentConfig.from_mapping({"seed": 1}).digest()


def test_mixing_file(tmp_path):
    path = tmp_path / "A.txt"
    np.savetxt(path, np.linspace(0.2, 0.8, 6))
    cfg = ExperimentConfig.from_mapping({"N": 2, "c": [1, 2], "lam": [0.1, 0.1],
                                         "mu": [0.2, 0.2], "mixing_file": str(path)})
    assert cfg.mixing_weights(6)[-1] == pytest.approx(0.8)
    with pytest.raises(ValidationError):
        cfg.mixing_weights(7)


def test_scalar_promoted_to_list():
    cfg = ExperimentConfig.from_mapping({"c": 1.0, "lam": 0.1, "mu": 0.2, "policies": "fair"})
    assert cfg.resource_spec().m == 1 and cfg.policies == ["fair"]

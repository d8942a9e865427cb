import numpy as np
import pytest

from semiparam.cli import build_parser, main
from semiparam.config import (
    ExperimentConfig,
    Phase,
    as_vector,
    config_from_dict,
    default_phases,
    load_config,
    validate_phases,
)
from semiparam.errors import ContractError

from conftest import CONFIGS


@pytest.mark.parametrize("name", ["phased.yaml", "virtual.yaml", "sine.yaml", "adaptive2.yaml"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert isinstance(cfg, ExperimentConfig)
    assert cfg.chain_path().exists()


def test_exponent_without_sign_is_a_number():
    cfg = config_from_dict({"sensors": {"jerk_var": "1.0e4"}, "gains": {"Lambda": ["2e1", 3]}})
    assert cfg.sensors.jerk_var == 1e4
    assert cfg.gains.Lambda == [20.0, 3]


def test_unknown_keys_rejected():
    with pytest.raises(ContractError):
        config_from_dict({"gains": {"lamda": 1}})
    with pytest.raises(ContractError):
        config_from_dict({"colour": "red"})
    with pytest.raises(ContractError):
        config_from_dict({"sensors": {"sigma_q": "small"}})


def test_phase_schedule_validation():
    validate_phases(default_phases(True))
    with pytest.raises(ContractError):
        validate_phases([])
    with pytest.raises(ContractError):
        validate_phases([Phase(1.0, 2.0, True, True, True, True)])
    with pytest.raises(ContractError):
        validate_phases([Phase(0.0, 2.0, True, True, True, True), Phase(3.0, 4.0, True, True, True, True)])
    with pytest.raises(ContractError):
        config_from_dict({"phases": [dict(start=0.0, end=0.0, np_learn=True, np_output=True,
                                          p_learn=True, transform=False)]})


def test_default_schedules_differ_only_in_phase3_learning():
    on, off = default_phases(True), default_phases(False)
    assert [p.transform for p in on] == [False, False, True, True]
    assert not any(p.transform for p in off)
    assert not on[2].np_learn and off[2].np_learn
    assert [(p.start, p.end) for p in on] == [(p.start, p.end) for p in off]


def test_as_vector():
    np.testing.assert_array_equal(as_vector(2.0, 3), [2, 2, 2])
    np.testing.assert_array_equal(as_vector([1, 2, 3, 4], 2), [1, 2])
    with pytest.raises(ContractError):
        as_vector([1, 2], 3)


def test_parser_subcommands():
    p = build_parser()
    a = p.parse_args(["phased-exp", "--config", "x.yaml", "--seed", "3", "--transform", "off"])
    assert (a.command, a.seed, a.transform) == ("phased-exp", 3, "off")
    assert p.parse_args(["sine-demo", "--config", "x.yaml"]).transform == "on"
    with pytest.raises(SystemExit):
        p.parse_args(["virtual-exp", "--config", "x.yaml", "--transform", "on"])
    with pytest.raises(SystemExit):
        p.parse_args(["validate"])


def test_sine_demo_cli_writes_outputs(tmp_path, capsys):
    assert main(["sine-demo", "--config", str(CONFIGS / "sine.yaml"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "transformed" in out
    assert any(tmp_path.rglob("*.csv"))

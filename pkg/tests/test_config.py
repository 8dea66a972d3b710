import json
import math

import pytest

from phononbs.config import config_from_dict, load_config
from phononbs.core import TWO_PI
from phononbs.errors import ParseError, ValidationError


def write(tmp_path, text, name="run.json"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_table_s1_profile():
    cfg = config_from_dict({"device": "table_s1"})
    d = cfg.device
    assert d.ladder.mode("b").g_m == pytest.approx(TWO_PI * 0.257)
    assert d.ladder.fsr == pytest.approx(TWO_PI * 12.62955)
    assert d.qubit.alpha == pytest.approx(TWO_PI * 218.0)
    assert d.ladder.labels == ("d", "a", "b", "c", "e")


def test_empty_file(tmp_path):
    with pytest.raises(ParseError):
        load_config(write(tmp_path, "  \n"))


def test_parse_error_location(tmp_path):
    with pytest.raises(ParseError) as info:
        load_config(write(tmp_path, '{\n  "device": "table_s1",\n  "rng_seed": ,\n}'))
    assert info.value.line == 3
    assert info.value.column > 1


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_config(tmp_path / "nope.json")


def test_unknown_key():
    with pytest.raises(ValidationError) as info:
        config_from_dict({"device": "table_s1", "chevron": {"tau_maks_us": 3}})
    assert info.value.field == "chevron.tau_maks_us"


def test_negative_t1():
    with pytest.raises(ValidationError) as info:
        config_from_dict({"device": {"profile": "table_s1", "qubit": {"t1_us": -1.0}}})
    assert "t1" in str(info.value)


def test_type_errors():
    with pytest.raises(ValidationError):
        config_from_dict({"rng_seed": "seven"})
    with pytest.raises(ValidationError):
        config_from_dict({"chevron": {"noise": True}})
    with pytest.raises(ValidationError):
        config_from_dict({"device": "no_such_profile"})
    with pytest.raises(ValidationError):
        config_from_dict({"operating_point": {"modulation_depth": 0.6, "detuning_tilde_mhz": 1.0,
                                              "reference_mode": "z"}})


def test_profile_override():
    cfg = config_from_dict({"device": {"profile": "table_s1", "qubit": {"omega_q_mhz": 6000.0},
                                       "ladder": {"g_mhz": 0.3}}})
    assert cfg.device.qubit.omega_q == pytest.approx(TWO_PI * 6000.0)
    assert cfg.device.qubit.alpha == pytest.approx(TWO_PI * 218.0)
    assert cfg.device.ladder.mode("c").g_m == pytest.approx(TWO_PI * 0.3)


def test_explicit_modes():
    dev = {"qubit": {"omega_q_mhz": 6000, "alpha_mhz": 200, "t1_us": 10, "t2_star_us": 8},
           "ladder": {"fsr_mhz": 10.0, "modes": [
               {"label": "x", "omega_mhz": 5990.0, "g_mhz": 0.2, "gamma_khz": 1.0},
               {"label": "y", "omega_mhz": 6000.0, "g_mhz": 0.25}]}}
    cfg = config_from_dict({"device": dev})
    assert cfg.device.ladder.labels == ("x", "y")
    assert cfg.device.ladder.mode("x").gamma_m == pytest.approx(TWO_PI * 1e-3)


def test_operating_point_and_defaults():
    cfg = config_from_dict({"operating_point": {"modulation_depth": 0.61, "detuning_tilde_mhz": 1.0}})
    op = cfg.point()
    assert op.reference_mode == "b" and op.delta_21 is None
    assert op.detuning_tilde == pytest.approx(TWO_PI)
    assert cfg.section("chevron")["delta_points"] == 71
    with pytest.raises(ValidationError):
        cfg.section("fit")
    with pytest.raises(ValidationError):
        config_from_dict({}).point()


def test_relative_paths(tmp_path):
    p = write(tmp_path, json.dumps({"fit": {"data": "sub/data.csv"}}))
    cfg = load_config(p)
    assert cfg.resolve(cfg.section("fit")["data"]) == tmp_path / "sub" / "data.csv"

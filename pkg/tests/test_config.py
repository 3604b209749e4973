import pytest

from mfgsolve.config import ConfigError, parse_config


def test_defaults_round_trip():
    cfg = parse_config("")
    assert cfg.command == "solve"
    assert cfg.seed == 0
    g = cfg.grid()
    assert g.dim == 1 and g.half_width == 8.0 and g.points_per_axis == 401
    model = cfg.model()
    assert model.epsilon == 0.25
    assert model.M == 1.0


def test_command_override():
    cfg = parse_config("command: solve", command="sweep")
    assert cfg.command == "sweep"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config("bogus: 1")
    with pytest.raises(ConfigError):
        parse_config("model: {bogus: 1}")


def test_type_errors_rejected():
    with pytest.raises(ConfigError):
        parse_config("grid: {points_per_axis: 'many'}")
    with pytest.raises(ConfigError):
        parse_config("model: {epsilon: 'x'}")
    with pytest.raises(ConfigError):
        parse_config("seed: 1.5")


def test_invalid_yaml_rejected():
    with pytest.raises(ConfigError):
        parse_config("model: [unclosed")


def test_invalid_model_values_rejected():
    with pytest.raises(ConfigError):
        parse_config("model: {epsilon: -0.5}")
    with pytest.raises(ValueError):
        parse_config("grid: {points_per_axis: 400}")  # even
    # supercritical coupling exponent is a config error too
    with pytest.raises(ConfigError):
        parse_config("model: {alpha: 5.0}")


def test_polynomial_product_parsing():
    text = """
model:
  potential:
    form: polynomial_product
    minima: [1.0, -1.0]
    exponents: [4.0, 2.0]
"""
    model = parse_config(text).model()
    assert model.potential.form == "polynomial_product"
    assert model.potential.exponents == (4.0, 2.0)


def test_solver_section():
    cfg = parse_config("solver: {theta: 0.7, recenter: true}")
    sc = cfg.solver()
    assert sc.theta == 0.7
    assert sc.recenter is True

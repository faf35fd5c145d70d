import json
import math

import numpy as np
import pytest

from twistedpde.algebra import preset_eq12
from twistedpde.config import ConfigError, RunConfig
from twistedpde.expr import Expression, ExpressionError, parse

BASE = {
    "operator": {"preset": "prop13", "n": 2},
    "domain": {"kind": "disk", "radius": 1.0},
    "f": "2 + x^2 + 0.5*y",
    "phi": 0.0,
}


# --- expressions -------------------------------------------------------------


@pytest.mark.parametrize("src, x, y, want", [
    ("1 + 2*3", 0.0, 0.0, 7.0),
    ("x^2 + y^2", 3.0, 4.0, 25.0),
    ("-2^2", 0.0, 0.0, -4.0),
    ("2^3^2", 0.0, 0.0, 512.0),
    ("sin(pi/2) + cos(0) + exp(0)", 0.0, 0.0, 3.0),
    ("e", 0.0, 0.0, math.e),
    ("(x - y) / 2", 5.0, 1.0, 2.0),
])
def test_expression_values(src, x, y, want):
    assert Expression(src)(x, y) == pytest.approx(want, rel=1e-15)


@pytest.mark.parametrize("src", [
    "__import__('os')",
    "x.real",
    "x**2",
    "x[0]",
    "tan(x)",
    "sin(x, y)",
    "z + 1",
    "lambda: 1",
    "'a'",
    "x if y else 1",
    "x // 2",
    "x % 2",
    "True",
    "",
    "1 +",
    "sin",
])
def test_expression_rejections(src):
    with pytest.raises(ExpressionError):
        Expression(src)


def test_expression_broadcasts():
    e = Expression("x * y + 1")
    x = np.linspace(0, 1, 5)
    assert np.array_equal(e(x, 2.0), 2 * x + 1)
    c = Expression("3")
    assert c.constant
    assert c(np.zeros(4), np.zeros(4)).shape == (4,)
    assert not e.constant


def test_parse_passes_numbers_through():
    assert parse(3) == 3.0 and isinstance(parse(3), float)
    assert isinstance(parse("x"), Expression)
    with pytest.raises(ExpressionError):
        parse(True)


# --- configs -----------------------------------------------------------------


def test_config_loads_preset():
    cfg = RunConfig.from_dict(BASE)
    assert cfg.operator.n == 2
    assert cfg.domain.to_dict() == {"kind": "disk", "radius": 1.0}
    assert cfg.f(1.0, 2.0) == pytest.approx(4.0)
    assert cfg.phi == 0.0
    assert cfg.continuity_steps == 10 and cfg.seed == 0 and cfg.h is None


def test_unknown_and_missing_keys():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({**BASE, "colour": "red"})
    for key in ("operator", "domain", "f", "phi"):
        doc = dict(BASE)
        del doc[key]
        with pytest.raises(ConfigError, match="missing"):
            RunConfig.from_dict(doc)


@pytest.mark.parametrize("patch", [
    {"operator": {"preset": "nope"}},
    {"operator": {"preset": "eq12", "n": 2, "extra": 1}},
    {"operator": {}},
    {"domain": {"kind": "square"}},
    {"h": -0.1},
    {"h": True},
    {"continuity_steps": 0},
    {"allow_below_threshold": "yes"},
    {"seed": -1},
    {"f": "__import__('os').system('true')"},
    {"phi": [1, 2]},
])
def test_invalid_values(patch):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**BASE, **patch})


def test_invalid_json():
    with pytest.raises(ConfigError, match="invalid JSON"):
        RunConfig.loads("{not json")


def test_operator_from_file_relative_to_config(tmp_path):
    (tmp_path / "ops").mkdir()
    (tmp_path / "ops" / "eq12.json").write_text(preset_eq12(2).dumps())
    doc = {**BASE, "operator": {"file": "ops/eq12.json"}}
    (tmp_path / "run.json").write_text(json.dumps(doc))
    cfg = RunConfig.load(tmp_path / "run.json")
    assert cfg.operator.to_dict() == preset_eq12(2).to_dict()
    with pytest.raises(ConfigError, match="cannot read"):
        RunConfig.from_dict({**BASE, "operator": {"file": "missing.json"}}, tmp_path)


def test_inline_operator():
    doc = {**BASE, "operator": {"inline": preset_eq12(2).to_dict()}}
    cfg = RunConfig.from_dict(doc)
    M = np.array([[1.5, 0.2], [0.2, 1.1]])
    assert cfg.operator.value(M) == preset_eq12(2).value(M)


def test_round_trip_is_bit_exact():
    doc = {**BASE, "h": 1 / 32, "f": 0.1 + 0.2, "seed": 7}
    text = RunConfig.from_dict(doc).dumps()
    again = RunConfig.loads(text)
    assert again.dumps() == text
    assert again.h == 1 / 32
    assert again.f == 0.1 + 0.2


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        RunConfig.load(tmp_path / "nope.json")

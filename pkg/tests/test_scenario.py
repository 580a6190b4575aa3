import pytest

from cumstl.lang import horizon
from cumstl.scenario import ScenarioError, bundled_scenarios, load, loads

BASE = """\
[scenario]
seed = 3

[plant]
model = linear
initial = 0, 0

[formula]
band = (x1 > 2 && x1 < 4)
phi = F[0,4] ${band}
"""


def test_bundled_scenarios_load():
    names = bundled_scenarios()
    assert {"vehicle2.scn", "linear_mpc.scn", "linear_smc.scn", "linear_loop.scn",
            "example3.scn"} <= set(names)
    for name in names:
        sc = load(name)
        assert sc.horizon >= 1


def test_vehicle_scenario_shape():
    sc = load("vehicle2")
    assert sc.system.n == 6 and sc.system.m == 4
    assert horizon(sc.formula) == 120
    assert sc.cost_name == "motion"


def test_interpolation_and_defaults():
    sc = loads(BASE)
    assert sc.formula_text == "F[0,4] (x1 > 2 && x1 < 4)"
    assert sc.seed == 3 and sc.synth.seed == 3 and sc.smc.seed == 3
    assert sc.mpc.h_m == 0 and sc.check == sc.formula
    assert sc.cost is None and sc.noise_std is None


def test_noise_variance():
    sc = loads(BASE + "\n[noise]\nvariance = 0.25\n")
    assert sc.noise_std == 0.5


def test_seed_override():
    sc = loads(BASE).with_seed(11)
    assert sc.synth.seed == 11 and sc.mpc.synth.seed == 11 and sc.smc.seed == 11


def _err(text):
    with pytest.raises(ScenarioError) as info:
        loads(text, "t.scn")
    return info.value


def test_bad_number_located():
    e = _err(BASE + "\n[synth]\nbeta = fast\n")
    assert e.line == 13 and e.field == "synth.beta"
    assert "t.scn:13" in str(e)


def test_unknown_option_and_section():
    assert _err(BASE + "\n[synth]\nbetta = 1\n").field == "synth.betta"
    assert _err(BASE + "\n[solver]\nx = 1\n").field == "solver"


def test_formula_error_located():
    e = _err(BASE.replace("F[0,4] ${band}", "F[0,4] x3 > 0"))
    assert e.field == "formula.phi" and e.line == 10


def test_bad_reference():
    assert _err(BASE.replace("${band}", "${nope}")).field == "formula.phi"


def test_initial_state_dimension():
    assert _err(BASE.replace("initial = 0, 0", "initial = 0")).field == "plant.initial"


def test_missing_sections_and_options():
    _err("[plant]\nmodel = linear\ninitial = 0, 0\n")
    assert _err(BASE.replace("model = linear\n", "")).field == "plant.model"


def test_parameter_not_for_plant():
    assert _err(BASE.replace("model = linear", "model = linear\nvehicles = 2")).field \
        == "plant.vehicles"


def test_syntax_error_has_line():
    e = _err("[plant]\nmodel = linear\nthis line is junk\n")
    assert e.line == 3


def test_invalid_solver_value():
    assert _err(BASE + "\n[smc]\ndelta = 0.9\n").field == "smc"


def test_missing_file():
    with pytest.raises(ScenarioError):
        load("/nonexistent/x.scn")

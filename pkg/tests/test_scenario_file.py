import pytest
import tomli

from conftest import SHIPPED, load, scenario_path
from gridsurge.errors import ModelError, ParseError, ValidationError
from gridsurge.scenario_file import (
    parse_scenario_file,
    parse_scenario_text,
    print_scenario,
    scenario_from_dict,
    scenario_to_dict,
    with_dt,
)

MINIMAL = """
[scenario]
name = "mini"
duration_s = 1.0

[[buses]]
id = "A"
kv = 0.48

[sources.g]
type = "genset"
bus = "A"
rated_kw = 500.0

[loads.ld]
bus = "A"
p_kw = 100.0
q_kvar = 0.0
class = "commercial"
"""


def opal_text():
    return scenario_path("opal-dos-5").read_text()


def test_opal_dos_5_fields():
    scn = load("opal-dos-5")
    [attack] = scn.attacks
    assert (attack.kind, attack.target, attack.delay_s) == ("dos_fixed_delay", "mgc->residential", 5.0)
    assert scn.duration_s == 60.0 and scn.dt_s == 0.001
    assert scn.policy.islanding_breaker == "BRK-PCC"
    assert "critical" not in scn.policy.shed_order


def test_minimal_defaults():
    scn = parse_scenario_text(MINIMAL)
    assert scn.name == "mini" and scn.dt_s == 0.001 and scn.attacks == ()
    assert scn.n_steps == 1000


def test_critical_sheddable_names_key():
    text = opal_text().replace('class = "critical"\nsheddable = false', 'class = "critical"\nsheddable = true')
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(text)
    assert info.value.key == "loads.critical.sheddable"


def test_duplicate_bus():
    text = MINIMAL + '\n[[buses]]\nid = "A"\nkv = 0.48\n'
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(text)
    assert "buses" in info.value.key


def test_unknown_key_rejected():
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(MINIMAL.replace("rated_kw = 500.0", "rated_kw = 500.0\nrated_mw = 0.5"))
    assert info.value.key == "sources.g.rated_mw"
    assert "unknown key" in str(info.value)


def test_missing_required_key():
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(MINIMAL.replace("duration_s = 1.0\n", ""))
    assert info.value.key == "scenario.duration_s"


def test_wrong_type():
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(MINIMAL.replace("p_kw = 100.0", 'p_kw = "lots"'))
    assert info.value.key == "loads.ld.p_kw"


def test_unknown_source_type():
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(MINIMAL.replace('type = "genset"', 'type = "turbine"'))
    assert info.value.key == "sources.g.type"


def test_model_error_for_dangling_bus():
    with pytest.raises(ModelError):
        parse_scenario_text(MINIMAL.replace('bus = "A"\np_kw', 'bus = "Z"\np_kw'))


def test_parse_error_location():
    text = MINIMAL.replace("duration_s = 1.0", "duration_s = = 1.0")
    with pytest.raises(ParseError) as info:
        parse_scenario_text(text)
    line = next(i for i, ln in enumerate(text.splitlines(), 1) if "= =" in ln)
    assert info.value.line == line
    assert info.value.column is not None and info.value.column > 1


@pytest.mark.parametrize("name", SHIPPED)
def test_round_trip(name):
    scn = load(name)
    again = parse_scenario_text(print_scenario(scn))
    assert again == scn
    assert scenario_from_dict(tomli.loads(print_scenario(scn))) == scn
    assert scenario_to_dict(again) == scenario_to_dict(scn)


def test_overrides():
    scn = parse_scenario_file(scenario_path("opal-dos-5"), {"attacks.0.delay_s": "2", "scenario.name": "tweak"})
    assert scn.attacks[0].delay_s == 2.0 and scn.name == "tweak"


def test_override_errors():
    with pytest.raises(ValidationError) as info:
        parse_scenario_file(scenario_path("opal-dos-5"), {"attacks.3.delay_s": "2"})
    assert info.value.key == "attacks.3"
    with pytest.raises(ValidationError):
        parse_scenario_file(scenario_path("opal-dos-5"), {"nothing.here": "1"})
    with pytest.raises(ValidationError) as info:
        parse_scenario_file(scenario_path("opal-dos-5"), {"loads.critical.sheddable": "true"})
    assert info.value.key == "loads.critical.sheddable"


def test_with_dt():
    scn = with_dt(load("opal-dos-0"), 0.002)
    assert scn.dt_s == 0.002 and scn.n_steps == 30000
    with pytest.raises(ValidationError):
        with_dt(load("opal-dos-0"), 0.0007)


def test_shipped_scenarios_present():
    for name in ("opal-dos-0", "opal-dos-2", "opal-dos-5", "opal-dos-15", "rtds-f1", "rtds-f2", "rtds-pq"):
        assert name in SHIPPED

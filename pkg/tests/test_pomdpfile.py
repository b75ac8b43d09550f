import numpy as np
import pytest

from asymlab.envs import GOOD, HeavenHellSpec, build_heavenhell
from asymlab.errors import PomdpSemanticError, PomdpSyntaxError
from asymlab.pomdp import validate
from asymlab.pomdpfile import (
    dump_pomdp_file,
    load_pomdp_file,
    load_pomdp_path,
)

GOODBAD = """\
# the good/bad POMDP
discount: 0.9
values: reward
states: G B
actions: g b
observations: g b
start: uniform

T: * : G : G 1.0
T: * : B : B 1.0
O: * : G : g 1.0
O: * : B : g 0.5
O: * : B : b 0.5
O0: G : g 1.0
O0: B : g 0.5
O0: B : b 0.5
R: g : * : * : * 1.0
"""


def test_load_goodbad(goodbad):
    pomdp, terminals = load_pomdp_file(GOODBAD, name="goodbad")
    assert terminals.is_empty
    assert validate(pomdp) == []
    assert pomdp == goodbad[0]
    assert pomdp.labels["states"] == ["G", "B"]
    assert pomdp.name == "goodbad"


def test_entries_may_span_lines():
    text = GOODBAD.replace(
        "R: g : * : * : * 1.0", "R: g :\n  * : * :\n * 1.0"
    )
    pomdp, _ = load_pomdp_file(text)
    assert pomdp.reward[:, GOOD].tolist() == [1.0, 1.0]


def test_numeric_declarations():
    text = """
    discount: 0.5
    states: 2
    actions: 1
    observations: 1
    start: 1 0
    T: 0 : * : 1 1.0
    O: * : * : 0 1.0
    """
    pomdp, _ = load_pomdp_file(text)
    assert pomdp.initial_observation is None
    assert pomdp.transition[:, 0, 1].tolist() == [1.0, 1.0]
    assert np.all(pomdp.reward == 0.0)


@pytest.mark.parametrize(
    "text, line, column",
    [
        ("discount 0.9\n", 1, 1),
        ("discount: 0.9\nstates: 2\nstart: 0.5\n", 3, 1),
        ("discount: zero\n", 1, 11),
        ("discount: 0.9\nT: 0 : 0 : 0 1.0\n", 2, 1),
    ],
)
def test_syntax_errors_carry_a_position(text, line, column):
    with pytest.raises(PomdpSyntaxError) as error:
        load_pomdp_file(text)
    assert (error.value.line, error.value.column) == (line, column)
    assert str(error.value).startswith(f"line {line}, column {column}: ")


def test_unknown_names_are_syntax_errors():
    text = GOODBAD.replace("T: * : B : B 1.0", "T: * : B : C 1.0")
    with pytest.raises(PomdpSyntaxError, match="Unknown state 'C'"):
        load_pomdp_file(text)


@pytest.mark.parametrize(
    "old, new, table",
    [
        ("discount: 0.9", "discount: 1.0", "discount"),
        ("discount: 0.9\n", "", "discount"),
        ("start: uniform", "start: 0.6 0.6", "start"),
        ("T: * : B : B 1.0", "T: * : B : B 0.5", "T"),
        ("O: * : B : b 0.5", "O: * : B : b 0.25", "O"),
        ("O0: B : b 0.5", "O0: B : b 0.1", "O0"),
        ("R: g : * : * : * 1.0", "R: g : * : G : * 1.0", "R"),
    ],
)
def test_semantic_errors_name_the_table(old, new, table):
    with pytest.raises(PomdpSemanticError) as error:
        load_pomdp_file(GOODBAD.replace(old, new))
    assert error.value.table == table


def test_row_errors_carry_coordinates():
    with pytest.raises(PomdpSemanticError) as error:
        load_pomdp_file(
            GOODBAD.replace("T: * : B : B 1.0", "T: g : B : B 1.0")
        )
    assert error.value.coordinates == (("a", 1), ("s", 1))


def test_missing_declarations():
    with pytest.raises(PomdpSemanticError) as error:
        load_pomdp_file("discount: 0.5\nstates: 2\n")
    assert error.value.table == "declarations"
    assert "actions, observations" in str(error.value)


def test_dump_and_load_reproduce_the_tables(goodbad, make_random_pomdp):
    pomdp, _ = goodbad
    loaded, _ = load_pomdp_file(dump_pomdp_file(pomdp))
    assert loaded == pomdp
    assert loaded.labels["actions"] == ["g", "b"]

    heavenhell, _ = build_heavenhell(HeavenHellSpec(3))
    assert load_pomdp_file(dump_pomdp_file(heavenhell))[0] == heavenhell

    compact = make_random_pomdp(3, state_only_observations=True)
    assert load_pomdp_file(dump_pomdp_file(compact))[0] == compact


def test_dump_refuses_state_dependent_observations(make_random_pomdp):
    with pytest.raises(PomdpSemanticError) as error:
        dump_pomdp_file(make_random_pomdp(0))
    assert error.value.table == "O"


def test_load_from_disk(tmpdir):
    path = tmpdir.join("goodbad.pomdp")
    path.write(GOODBAD)
    pomdp, _ = load_pomdp_path(str(path))
    assert pomdp.name == "goodbad.pomdp"
    assert pomdp.gamma == 0.9

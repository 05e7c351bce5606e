import copy
import json

import numpy as np
import pytest

from bnmodel import (ModelValidationError, free_parameters, free_parameters_for, generate_cpts, load_model,
                     model_from_dict, random_model, sample, save_model)
from conftest import model_path
from graph import is_acyclic


@pytest.mark.parametrize("name", ["asia", "cancer", "earthquake", "survey", "sachs", "child", "gauss6"])
def test_shipped_models_load(name):
    model = load_model(model_path(name))
    assert model.name == name
    assert is_acyclic(model.dag)


def test_reference_structure_sizes():
    asia = load_model(model_path("asia"))
    assert len(asia.dag.arcs) == 8
    assert free_parameters(asia).total == 18
    sachs = load_model(model_path("sachs"))
    assert len(sachs.dag.arcs) == 17
    assert free_parameters(sachs).total == 178
    child = load_model(model_path("child"))
    assert len(child.labels) == 20
    assert len(child.dag.arcs) == 25
    assert free_parameters(child).total == 230


def test_child_tables_are_transcribed():
    child = load_model(model_path("child"))
    assert child.cpts["BirthAsphyxia"].tolist() == [[0.1, 0.9]]
    assert child.parent_labels("ChestXray") == ["LungFlow", "LungParench"]
    row = child.combo_keys("ChestXray").index("High|Abnormal")
    assert child.cpts["ChestXray"][row].tolist() == [0.24, 0.33, 0.03, 0.34, 0.06]
    assert np.allclose(child.cpts["Disease"].sum(axis=1), 1.0)


def test_combo_keys_follow_alphabetical_parents(asia_model):
    assert asia_model.parent_labels("either") == ["lung", "tub"]
    assert asia_model.combo_keys("either") == ["yes|yes", "yes|no", "no|yes", "no|no"]
    assert asia_model.combo_keys("asia") == [""]


def asia_dict():
    with open(model_path("asia"), "r", encoding="utf-8") as f:
        return json.load(f)


def test_validation_errors_name_the_node():
    data = asia_dict()
    data["cpts"]["tub"]["rows"]["yes"] = [0.5, 0.4]
    with pytest.raises(ModelValidationError) as err:
        model_from_dict(data)
    assert err.value.node == "tub"

    data = asia_dict()
    del data["cpts"]["xray"]["rows"]["no"]
    with pytest.raises(ModelValidationError) as err:
        model_from_dict(data)
    assert err.value.node == "xray"

    data = asia_dict()
    del data["cpts"]["dysp"]
    with pytest.raises(ModelValidationError) as err:
        model_from_dict(data)
    assert err.value.node == "dysp"


def test_cyclic_model_rejected():
    data = asia_dict()
    data["arcs"].append(["dysp", "smoke"])
    data["cpts"]["smoke"]["rows"] = {"yes": [0.5, 0.5], "no": [0.5, 0.5]}
    with pytest.raises(ModelValidationError):
        model_from_dict(data)


def test_gaussian_validation(gauss_model):
    data = copy.deepcopy(gauss_model.to_dict())
    data["lingauss"]["d"]["sd"] = 0.0
    with pytest.raises(ModelValidationError) as err:
        model_from_dict(data)
    assert err.value.node == "d"

    data = copy.deepcopy(gauss_model.to_dict())
    data["lingauss"]["c"]["coeffs"] = {"a": 0.8}
    with pytest.raises(ModelValidationError) as err:
        model_from_dict(data)
    assert err.value.node == "c"


def test_sample_respects_deterministic_cpt(asia_model):
    data = sample(asia_model, 2000, seed=3)
    either = data.column(data.index_of("either"))
    lung = data.column(data.index_of("lung"))
    tub = data.column(data.index_of("tub"))
    states = data.variables[data.index_of("either")].states
    yes = states.index("yes")
    assert np.array_equal(either == yes, (lung == yes) | (tub == yes))


def test_sample_is_seeded(asia_model):
    assert sample(asia_model, 500, seed=9) == sample(asia_model, 500, seed=9)
    assert sample(asia_model, 500, seed=9) != sample(asia_model, 500, seed=10)
    with pytest.raises(ValueError):
        sample(asia_model, 0, seed=1)


def test_sample_marginals_match_cpts(asia_model):
    data = sample(asia_model, 20000, seed=5)
    smoke = data.column(data.index_of("smoke"))
    assert abs(float(np.mean(smoke == 1)) - 0.5) < 0.02


def test_gaussian_sample_recovers_slope(gauss_model):
    data = sample(gauss_model, 20000, seed=2)
    c = data.column(data.index_of("c"))
    d = data.column(data.index_of("d"))
    slope = np.polyfit(c, d, 1)[0]
    assert slope == pytest.approx(1.2, abs=0.03)


def test_generate_cpts_is_deterministic(asia_model):
    first = generate_cpts(asia_model.dag, asia_model.states, seed=4)
    second = generate_cpts(asia_model.dag, asia_model.states, seed=4)
    assert all(np.array_equal(first[k], second[k]) for k in first)
    assert all(np.allclose(t.sum(axis=1), 1.0) for t in first.values())
    with pytest.raises(ModelValidationError):
        generate_cpts(asia_model.dag, asia_model.states, seed=4, concentration=0.0)


def test_save_and_load(tmp_path, asia_model):
    path = tmp_path / "copy.json"
    save_model(asia_model, str(path))
    loaded = load_model(str(path))
    assert loaded.dag == asia_model.dag
    assert all(np.allclose(loaded.cpts[k], asia_model.cpts[k]) for k in asia_model.labels)


def test_load_model_errors(tmp_path):
    with pytest.raises(ModelValidationError):
        load_model(str(tmp_path / "nope.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ModelValidationError):
        load_model(str(bad))


def test_random_model_and_parameter_counts():
    model = random_model(5, seed=12)
    assert model.dag == random_model(5, seed=12).dag
    assert all(len(model.dag.parents(i)) <= 2 for i in range(5))
    data = sample(model, 50, seed=1)
    assert free_parameters_for(model.dag, data).total == free_parameters(model).total

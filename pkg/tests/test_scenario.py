"""Scenario file loading: validation messages with field paths, seeded
parameter draws, serialization round trips, and the deployment checks."""

import io

import numpy as np
import pytest
import yaml

from ltlcoord.scenario import (
    ScenarioError,
    bundled_scenario_path,
    load_scenario,
    serialize_scenario,
)


def doc(**over):
    base = {
        "dimension": 3,
        "seed": 1,
        "points": [{"id": "c1", "coords": [5.0, 0.0, 0.0]}],
        "agents": [
            {
                "id": 1,
                "position": [0.0, 0.0, 0.0],
                "formula": "G F a",
                "services": {"c1": ["a"]},
            }
        ],
    }
    base.update(over)
    return base


def load(d, **kw):
    return load_scenario(io.StringIO(yaml.safe_dump(d)), **kw)


class TestBundledFixture:
    def test_loads_with_expected_team(self):
        sc = load_scenario(bundled_scenario_path())
        assert [a.id for a in sc.agents] == [1, 2, 3, 4, 5]
        assert [p.id for p in sc.points] == ["c1", "c2", "c3", "c4"]
        assert sc.t_end == 1000.0 and sc.h == 0.005
        assert sc.mu_col == sc.mu_con == 0.1
        for a in sc.agents:
            m = a.model
            assert (m.radius, m.d_con) == (1.0, 4.0)
            assert (m.mu, m.mu_c, m.mu_a) == (25.0, 3.0, 0.1)
            assert 1.0 <= m.alpha <= 2.0
            assert 1.0 <= m.inertia[0, 0] <= 2.0
        assert [a.model.priority for a in sc.agents] == [1, 2, 3, 4, 5]

    def test_draws_are_reproducible(self):
        a = load_scenario(bundled_scenario_path())
        b = load_scenario(bundled_scenario_path())
        for x, y in zip(a.agents, b.agents):
            assert np.array_equal(x.model.inertia, y.model.inertia)
            assert x.model.alpha == y.model.alpha

    def test_seed_override_changes_draws(self):
        a = load_scenario(bundled_scenario_path())
        b = load_scenario(bundled_scenario_path(), seed=7)
        assert b.seed == 7
        assert not np.array_equal(a.agents[0].model.inertia, b.agents[0].model.inertia)

    def test_round_trip_is_identity(self):
        sc = load_scenario(bundled_scenario_path())
        text = serialize_scenario(sc)
        again = serialize_scenario(load_scenario(io.StringIO(text)))
        assert text == again


class TestDefaults:
    def test_run_settings_defaulted(self):
        sc = load(doc())
        assert sc.h == 0.005
        assert sc.decimation == 0.5
        assert sc.beta_bar_col == sc.beta_bar_con == 1.0
        assert sc.broadcast_delay == 0.0
        assert sc.fbar == "norm"

    def test_agent_defaults(self):
        sc = load(doc())
        a = sc.agents[0]
        assert np.array_equal(a.velocity, np.zeros(3))
        assert a.a_hat0 == 0.0
        assert a.model.radius == 1.0 and a.model.d_con == 4.0
        assert a.propositions == ("a",)

    def test_disturbance_opt_out(self):
        d = doc()
        d["agents"][0]["disturbance"] = "none"
        a = load(d).agents[0]
        assert a.model.alpha == 0.0

    def test_unseeded_draw_is_an_error(self):
        d = doc()
        del d["seed"]
        with pytest.raises(ScenarioError, match="no seed"):
            load(d)

    def test_unseeded_but_fully_explicit_loads(self):
        d = doc()
        del d["seed"]
        d["agents"][0]["inertia"] = 1.5
        d["agents"][0]["disturbance"] = {"alpha": 1.0, "omega1": 1.0, "omega2": 0.0}
        sc = load(d)
        assert sc.seed is None
        assert sc.agents[0].model.inertia[0, 0] == 1.5


class TestSchemaErrors:
    def test_missing_position_names_path(self):
        d = doc()
        del d["agents"][0]["position"]
        with pytest.raises(ScenarioError, match=r"agents\[0\].*position"):
            load(d)

    def test_bad_coords_length_names_path(self):
        d = doc(points=[{"id": "c1", "coords": [1.0, 2.0]}])
        with pytest.raises(ScenarioError, match=r"points\[0\]\.coords"):
            load(d)

    def test_unknown_key_rejected(self):
        with pytest.raises(ScenarioError, match="unknown key"):
            load(doc(gravity_mode="strong"))

    def test_non_numeric_field_names_path(self):
        d = doc()
        d["agents"][0]["radius"] = "big"
        with pytest.raises(ScenarioError, match=r"agents\[0\]\.radius"):
            load(d)

    def test_services_unknown_point(self):
        d = doc()
        d["agents"][0]["services"] = {"c9": ["a"]}
        with pytest.raises(ScenarioError, match=r"agents\[0\]\.services\.c9"):
            load(d)

    def test_duplicate_point_id(self):
        d = doc(
            points=[
                {"id": "c1", "coords": [5.0, 0.0, 0.0]},
                {"id": "c1", "coords": [6.0, 0.0, 0.0]},
            ]
        )
        with pytest.raises(ScenarioError, match="duplicate point id"):
            load(d)

    def test_formula_syntax_error_names_path(self):
        d = doc()
        d["agents"][0]["formula"] = "G &"
        with pytest.raises(ScenarioError, match=r"agents\[0\]\.formula"):
            load(d)

    def test_sensing_range_must_clear_diameter(self):
        d = doc()
        d["agents"][0]["sensing_range"] = 1.5
        with pytest.raises(ScenarioError, match="sensing_range"):
            load(d)


def two_agent_doc(gap, d_con=4.0):
    d = doc()
    d["agents"] = [
        {
            "id": 1,
            "position": [0.0, 0.0, 0.0],
            "priority": 1,
            "formula": "G F a",
            "services": {"c1": ["a"]},
            "sensing_range": d_con,
        },
        {
            "id": 2,
            "position": [gap, 0.0, 0.0],
            "priority": 2,
            "formula": "G F b",
            "services": {"c1": ["b"]},
            "sensing_range": d_con,
        },
    ]
    return d


class TestDeployment:
    def test_overlap_error_names_the_pair(self):
        with pytest.raises(ScenarioError, match="agents 1 and 2"):
            load(two_agent_doc(1.5))

    def test_disconnected_graph_rejected(self):
        with pytest.raises(ScenarioError, match="disconnected"):
            load(two_agent_doc(20.0))

    def test_connected_team_loads(self):
        sc = load(two_agent_doc(3.0))
        assert sc.n_agents == 2

    def test_priorities_must_be_a_permutation(self):
        d = two_agent_doc(3.0)
        d["agents"][1]["priority"] = 1
        with pytest.raises(ScenarioError, match="permutation"):
            load(d)

    def test_duplicate_agent_ids_rejected(self):
        d = two_agent_doc(3.0)
        d["agents"][1]["id"] = 1
        with pytest.raises(ScenarioError, match="unique"):
            load(d)


class TestAtomDeclaration:
    def test_undeclared_atom_warns_but_loads(self):
        d = doc()
        d["agents"][0]["formula"] = "G F a & F zz"
        with pytest.warns(UserWarning, match="zz"):
            sc = load(d)
        assert "zz" in sc.agents[0].propositions

    def test_declared_atoms_stay_silent(self, recwarn):
        load(doc())
        assert not [w for w in recwarn if issubclass(w.category, UserWarning)]

    def test_explicit_proposition_list_respected(self):
        d = doc()
        d["agents"][0]["propositions"] = ["a", "b"]
        sc = load(d)
        assert sc.agents[0].propositions == ("a", "b")


class TestInertiaForms:
    def test_isotropic_matrix_serializes_to_scalar(self):
        d = doc()
        d["agents"][0]["inertia"] = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]
        sc = load(d)
        out = yaml.safe_load(serialize_scenario(sc))
        assert out["agents"][0]["inertia"] == 2.0

    def test_anisotropic_matrix_round_trips(self):
        d = doc()
        mat = [[2.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 4.0]]
        d["agents"][0]["inertia"] = mat
        sc = load(d)
        assert np.array_equal(sc.agents[0].model.inertia, np.array(mat))
        out = yaml.safe_load(serialize_scenario(sc))
        assert out["agents"][0]["inertia"] == mat

    def test_wrong_shape_rejected(self):
        d = doc()
        d["agents"][0]["inertia"] = [[1.0, 0.0], [0.0, 1.0]]
        with pytest.raises(ScenarioError, match="inertia"):
            load(d)

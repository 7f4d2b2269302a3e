import numpy as np
import pytest

from gkgeom import flows as fl
from gkgeom import genlin as gl
from gkgeom import structures as st
from gkgeom import torusfield as tf


def test_flow_config_validation():
    with pytest.raises(ValueError):
        fl.FlowConfig(dt=0)
    with pytest.raises(ValueError):
        fl.FlowConfig(steps=0)
    with pytest.raises(ValueError):
        fl.FlowConfig(integrator="rk2")
    cfg = fl.FlowConfig(dt=0.1, steps=25)
    assert cfg.t_end == pytest.approx(2.5)
    assert cfg.cert_stride == 3


def test_flow_record_columns_and_csv(tmp_path):
    rec = fl.FlowRecord()
    rec.add({"t": 0.0, "a": 1.0})
    rec.add({"t": 0.5, "a": 3.0, "b": 2.0})
    assert rec.columns == ["t", "a", "b"]
    assert rec.max("a") == 3.0
    assert np.isnan(rec.column("b")[0])
    path = tmp_path / "m.csv"
    rec.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,a,b"
    assert lines[1].endswith(",")
    assert rec.summary()["t_final"] == 0.5


@pytest.mark.parametrize("integrator, shadow_tol", [("rk4", 1e-7), ("euler", 1e-3)])
def test_kaehler_flow_moves_omega_linearly(kaehler8, integrator, shadow_tol):
    pot = st.default_potential("kaehler")
    cfg = fl.FlowConfig(dt=0.1, steps=3, integrator=integrator, potential=pot, certify_nijenhuis=False)
    final, rec = fl.canonical_flow(kaehler8, cfg)
    K = st.potential_two_form(kaehler8, pot)
    assert tf.maxnorm(final.omega_I - kaehler8.omega_I - 0.3 * K) < 1e-12
    assert rec.max("I_drift") == 0.0
    assert rec.max("sigma_drift") < 1e-14
    assert rec.max("shadow_mismatch") < shadow_tol
    assert len(rec.rows) == 4
    assert final.meta["t"] == pytest.approx(0.3)


def test_joyce_flow_preserves_integrability(joyce8):
    cfg = fl.FlowConfig(dt=0.02, steps=2, certify_nijenhuis=True)
    final, rec = fl.canonical_flow(joyce8, cfg)
    assert tf.maxnorm(final.J - joyce8.J) > 1e-4
    assert rec.max("hamiltonian_residual") < 1e-6
    assert rec.max("N(J1)") < 1e-6 and rec.max("N(J2)") < 1e-6
    assert rec.max("[J1,J2]") <= 2 * rec.rows[0]["[J1,J2]"] + 1e-12
    assert rec.max("sigma_drift") < 1e-9
    assert rec.max("positivity") > 0


def test_non_closed_source_aborts_with_partial_record(kaehler8):
    rng = np.random.default_rng(0)
    K = gl.project_11(np.swapaxes(tf.antisymmetrize(rng.standard_normal(kaehler8.grid.shape + (4, 4)), kaehler8.grid), -1, -2), kaehler8.J)
    cfg = fl.FlowConfig(dt=0.1, steps=3, k_source=lambda s: K, certify_nijenhuis=False)
    with pytest.raises(st.FlowAbort) as info:
        fl.canonical_flow(kaehler8, cfg)
    rec = info.value.record
    assert "admissible" in rec.aborted
    assert len(rec.rows) == 1
    assert info.value.state is kaehler8


def test_positivity_loss_aborts(kaehler8):
    pot = st.default_potential("kaehler").scaled(20.0)
    cfg = fl.FlowConfig(dt=0.5, steps=10, potential=pot, certify_nijenhuis=False)
    with pytest.raises(st.FlowAbort) as info:
        fl.canonical_flow(kaehler8, cfg)
    assert info.value.record.aborted


def test_gkrf_step_limit(kaehler8):
    with pytest.raises(st.FlowAbort) as info:
        fl.gkrf_biherm(kaehler8, fl.FlowConfig(dt=1e4, steps=1))
    assert "Bismut-Ricci" in str(info.value)


def test_gkrf_formulations_agree_on_kaehler(kaehler8):
    cfg = fl.FlowConfig(dt=1e-3, steps=2, certify_nijenhuis=False)
    a, _ = fl.gkrf_generalized(kaehler8, cfg)
    b, _ = fl.gkrf_biherm(kaehler8, cfg)
    assert fl.terminal_difference(a, kaehler8) > 1e-6
    assert fl.terminal_difference(a, b) < 1e-10


def test_lee_vector_field_vanishes_on_kaehler(kaehler8):
    assert tf.maxnorm(fl.lee_vector_field(kaehler8)) < 1e-12


def test_bismut_ricci_of_kaehler_is_11(kaehler8):
    rho, rho11, rho20 = fl.bismut_ricci_map(kaehler8)
    assert tf.maxnorm(rho) > 1e-4
    assert tf.maxnorm(rho20) < 1e-12
    assert tf.maxnorm(rho - rho11) < 1e-12


def test_unknown_k_source(kaehler8):
    with pytest.raises(ValueError):
        fl.make_k_source(fl.FlowConfig(k_source="random"), kaehler8)

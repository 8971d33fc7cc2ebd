import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affectmesh import checks
from affectmesh.cfc import (INPUT_LAYOUT, CfcCell, CfcConfig, CfcModel, ClockRegression, EventFeatures,
                            MeshCfc, cell_step, encode_event, forward, load_state, load_weights, persist_state,
                            save_weights)

SMALL = CfcConfig(input_dim=30, encoder_out=8, n_cells=2, hidden=8, mlp_widths=(8,), seed=3)


def small_cell(seed=0, in_dim=4, hidden=6):
    rng = np.random.default_rng(seed)
    return CfcCell(in_dim, hidden, (8,), rng.uniform(math.log(0.5), math.log(300), hidden), rng)


def test_identity_at_zero_dt():
    assert checks.identity_check().ok


def test_interpolation_10k():
    assert checks.interpolation_check().ok


def test_midpoint_exact():
    r = checks.midpoint_check()
    assert r.ok, r.detail


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e5), st.integers(0, 50))
def test_interpolation_property(dt, seed):
    cell = small_cell(seed)
    rng = np.random.default_rng(seed)
    h = rng.normal(0, 3, cell.hidden)
    x = rng.normal(0, 1, cell.in_dim)
    out = cell_step(cell, h, x, dt)
    f = cell.target(x, h)
    assert np.all(out >= np.minimum(h, f) - 1e-12)
    assert np.all(out <= np.maximum(h, f) + 1e-12)


def test_long_dt_converges_to_target():
    cell = small_cell(1)
    h = np.full(cell.hidden, 5.0)
    x = np.ones(cell.in_dim)
    out = cell_step(cell, h, x, 1e7)
    assert np.allclose(out, cell.target(x, h), atol=1e-9)


def test_negative_dt_raises():
    cell = small_cell()
    with pytest.raises(ClockRegression):
        cell_step(cell, np.zeros(cell.hidden), np.zeros(cell.in_dim), -1.0)
    model = CfcModel(SMALL)
    with pytest.raises(ClockRegression):
        forward(model, None, np.zeros(30), -0.1)


def test_shape_mismatch_raises():
    cell = small_cell()
    with pytest.raises(ValueError):
        cell_step(cell, np.zeros(cell.hidden + 1), np.zeros(cell.in_dim), 1.0)
    with pytest.raises(ValueError):
        forward(CfcModel(SMALL), None, np.zeros(29), 1.0)


def test_layer_norm_only_on_output_path():
    model = CfcModel(SMALL)
    state = model.zero_state()
    x = np.linspace(-1, 1, 30)
    *_, s1 = forward(model, state, x, 2.0)
    # the carried state is the raw closed-form update, not its normalised view
    enc = np.tanh(x @ model.enc_W.T + model.enc_b)
    expected = cell_step(model.cells[0], state.hidden[0], enc, 2.0)
    assert np.allclose(s1.hidden[0], expected)
    assert abs(float(np.mean(s1.hidden[0]))) > 1e-6 or np.std(s1.hidden[0]) != pytest.approx(1.0)


def test_forward_outputs_in_range():
    model = CfcModel(SMALL)
    state = None
    rng = np.random.default_rng(0)
    for _ in range(20):
        traj, pat, pred, intent, state = forward(model, state, rng.normal(size=30), float(rng.exponential(30)))
        assert 0 <= traj.emotion <= 99 and 0 <= traj.energy <= 99
        assert 0 <= traj.confidence <= 1 and 0 <= traj.stability <= 1
        assert abs(traj.v_emotion) <= 0.5 and abs(traj.v_energy) <= 0.5
        assert all(0 <= p <= 1 for p in pat.scores)
        assert 0 <= pred.emotion_next <= 99 and 0 <= pred.exploration <= 1
        assert intent.label in ("maintain", "energize", "calm", "focus", "explore", "social")


def test_persistence_windows(tmp_path):
    model = CfcModel(SMALL)
    *_, state = forward(model, None, np.ones(30), 1.0)
    store = tmp_path / "state.json"
    persist_state(state, store, now=1000.0)
    back = load_state(store, now=1000.0 + 3600)
    assert back is not None
    assert all(np.array_equal(a, b) for a, b in zip(back.hidden, state.hidden))
    assert load_state(store, now=1000.0 + 25 * 3600) is None
    assert load_state(tmp_path / "missing.json", now=0.0) is None


def test_corrupt_store_is_discarded(tmp_path, caplog):
    store = tmp_path / "state.json"
    store.write_text("{not json")
    assert load_state(store, now=0.0) is None
    store.write_text('{"saved_at": 0, "last_event_time": 0, "hidden": [[NaN, 1.0]]}')
    assert load_state(store, now=0.0) is None


def test_weights_round_trip(tmp_path):
    model = CfcModel(SMALL)
    path = tmp_path / "w.npz"
    save_weights(model, path)
    back = load_weights(path)
    assert back.config == model.config
    for (n1, p1), (n2, p2) in zip(model.named_parameters(), back.named_parameters()):
        assert n1 == n2 and np.array_equal(p1, p2)


def test_parameter_count_groups():
    counts = CfcModel(SMALL).parameter_count()
    assert counts["total"] == sum(v for k, v in counts.items() if k != "total")
    assert {"encoder", "cells.0", "cells.1", "heads"} <= counts.keys()


def test_mesh_cfc_tau_halves():
    m = MeshCfc()
    tau = m.cell.tau
    assert len(tau) == 32
    assert np.all((tau[:16] >= 0.5) & (tau[:16] < 5.0))
    assert np.all((tau[16:] > 30.0) & (tau[16:] <= 300.0 + 1e-9))


def test_mesh_cfc_params_disjoint_from_personal():
    mesh, personal = MeshCfc(), CfcModel(SMALL)
    mesh_ids = {id(p) for _, p in mesh.named_parameters()}
    personal_ids = {id(p) for _, p in personal.named_parameters()}
    assert not mesh_ids & personal_ids
    assert all(n.startswith("mesh.") for n, _ in mesh.named_parameters())
    assert not any(n.startswith("mesh.") for n, _ in personal.named_parameters())


def test_fast_mix_monotone():
    m = MeshCfc()
    values = [m.fast_mix(dt) for dt in (0.0, 0.1, 1.0, 10.0, 100.0)]
    assert values[0] == 0.0
    assert values == sorted(values)
    assert values[-1] == pytest.approx(1.0, abs=1e-6)


def test_encode_event_layout():
    x = encode_event(EventFeatures("mood_dial", track_mood=(0.2, -0.3), hour=6.0, dt=60.0,
                                   dial=(0.9, 0.9), position=3))
    assert x.shape == (80,)
    assert tuple(x[INPUT_LAYOUT["track_mood"]]) == (0.2, -0.3)
    assert x[8 + 4] == 1.0 and x[8:16].sum() == 1.0
    assert x[16] == pytest.approx(1.0) and x[17] == pytest.approx(0.0, abs=1e-12)
    assert x[23] == 1.0 and np.all(x[25:] == 0)
    with pytest.raises(ValueError):
        encode_event(EventFeatures("play"), input_dim=10)


def test_zero_weights_give_head_bias_outputs():
    model = CfcModel(SMALL)
    for name, p in model.named_parameters():
        if not name.startswith("heads.") or name.endswith(".W"):
            if not name.endswith(("log_tau", "ln.gamma")):
                p[...] = 0.0
    for _, (w, _) in model.heads.items():
        w[...] = 0.0
    traj, _, _, intent, _ = forward(model, None, np.ones(30), 1.0)
    b = model.heads["intent"][1]
    assert np.allclose(intent.logits, b)


def test_zero_dt_repeat_is_identical():
    model = CfcModel(SMALL)
    x = np.linspace(0, 1, 30)
    out1 = forward(model, None, x, 5.0)
    out2 = forward(model, out1[-1], x, 0.0)
    assert all(np.array_equal(a, b) for a, b in zip(out1[-1].hidden, out2[-1].hidden))
    assert out1[:4] == out2[:4]

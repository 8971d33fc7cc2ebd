import pytest
from hypothesis import given, strategies as st

from affectmesh.affect import CircumplexPoint
from affectmesh.ere import EreState, FusionInput, FusionPath, fuse, mark_mesh_induced, outbound_mood, set_organic

PC = FusionPath.PLAYLIST_CORRELATION


def test_window_examples():
    s = mark_mesh_induced(EreState(), 100.0)
    assert s.isolated(159.9) and not s.isolated(160.0)
    s = mark_mesh_induced(s, 130.0)
    assert s.isolated(189.0) and not s.isolated(190.0)
    assert not s.isolated(191.0)
    assert not EreState().isolated(0.0)


def test_fusion_suppressed_inside_window():
    s = mark_mesh_induced(EreState(CircumplexPoint(0.1, 0.2)), 0.0, "peer")
    after = fuse(s, FusionInput(CircumplexPoint(0.9, 0.9), PC, 30.0))
    assert outbound_mood(after) == CircumplexPoint(0.1, 0.2)
    assert after.last_fusion is None


def test_fusion_rule():
    s = EreState(CircumplexPoint(0.0, 0.0))
    out = fuse(s, FusionInput(CircumplexPoint(1.0, 1.0), FusionPath.TRACK_CHANGE, 5.0))
    assert out.organic_mood.valence == pytest.approx(0.2) and out.organic_mood.arousal == pytest.approx(0.2)
    assert outbound_mood(out) == out.organic_mood
    fixed = fuse(EreState(CircumplexPoint(0.3, -0.4)), FusionInput(CircumplexPoint(0.3, -0.4), PC, 1.0))
    assert fixed.organic_mood.valence == pytest.approx(0.3)


def test_fresh_state_neutral():
    assert outbound_mood(EreState()) == CircumplexPoint(0.0, 0.0)


def test_dial_bypasses_isolation():
    s = mark_mesh_induced(EreState(), 0.0)
    s = set_organic(s, CircumplexPoint(-0.5, 0.5))
    assert outbound_mood(s) == CircumplexPoint(-0.5, 0.5)
    assert s.isolated(10.0)


@given(st.lists(st.tuples(st.floats(0, 60, exclude_max=True), st.floats(-1, 1), st.floats(-1, 1)), max_size=30))
def test_isolation_soundness(events):
    start = EreState(CircumplexPoint(0.25, -0.25))
    s = mark_mesh_induced(start, 0.0)
    for dt, v, a in sorted(events):
        s = fuse(s, FusionInput(CircumplexPoint(v, a), PC, dt))
        assert outbound_mood(s) == outbound_mood(start)


def test_fusion_path_validation():
    with pytest.raises(ValueError):
        FusionInput(CircumplexPoint(), "radio", 0.0)

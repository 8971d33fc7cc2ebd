import pytest
from hypothesis import given, strategies as st

from affectmesh.affect import (CircumplexPoint, LegacyPoint, MoodLookup, adjacent_expansion, from_legacy,
                               generate_default_lookup, nearest_anchor, round_half_up, to_legacy)

legacy = st.builds(LegacyPoint, st.integers(0, 99), st.integers(0, 99))
unit = st.floats(-1.0, 1.0, allow_nan=False)


@pytest.fixture(scope="module")
def lookup():
    return generate_default_lookup(1)


def test_circumplex_clamps_on_construction():
    p = CircumplexPoint(1.7, -3.0)
    assert (p.valence, p.arousal) == (1.0, -1.0)


def test_legacy_point_rejects_out_of_range_and_floats():
    with pytest.raises(ValueError):
        LegacyPoint(100, 0)
    with pytest.raises(TypeError):
        LegacyPoint(1.5, 2)


@pytest.mark.parametrize("p, q", [
    ((0.0, 0.0), (50, 50)),
    ((-1.0, -1.0), (0, 0)),
    ((1.0, 0.76), (99, 87)),
])
def test_to_legacy_examples(p, q):
    assert to_legacy(CircumplexPoint(*p)) == LegacyPoint(*q)


def test_round_half_up_is_not_bankers():
    assert round_half_up(49.5) == 50
    assert round_half_up(48.5) == 49


def test_from_legacy_examples():
    assert from_legacy(LegacyPoint(0, 0)) == CircumplexPoint(-1, -1)
    assert from_legacy(LegacyPoint(99, 99)) == CircumplexPoint(1, 1)
    p = from_legacy(LegacyPoint(50, 40))
    assert p.valence == pytest.approx(0.0101, abs=5e-5)
    assert p.arousal == pytest.approx(-0.1919, abs=5e-5)


@given(legacy)
def test_legacy_round_trip(q):
    assert to_legacy(from_legacy(q)) == q


@given(unit, unit, unit)
def test_to_legacy_monotone_per_axis(a, b, other):
    lo, hi = sorted((a, b))
    assert to_legacy(CircumplexPoint(lo, other)).emotion <= to_legacy(CircumplexPoint(hi, other)).emotion
    assert to_legacy(CircumplexPoint(other, lo)).energy <= to_legacy(CircumplexPoint(other, hi)).energy


@pytest.mark.parametrize("q, cell", [((0, 0), (0, 0)), ((99, 99), (19, 19)), ((63, 25), (12, 5))])
def test_nearest_anchor_examples(lookup, q, cell):
    assert nearest_anchor(lookup, LegacyPoint(*q)).id == cell


@given(legacy)
def test_nearest_anchor_total_and_idempotent(q):
    lk = generate_default_lookup(1)
    a = nearest_anchor(lk, q)
    assert nearest_anchor(lk, a.center) == a


def test_adjacent_expansion_sizes(lookup):
    mid = lookup.anchor(10, 10)
    assert adjacent_expansion(lookup, mid, 0) == {mid}
    assert len(adjacent_expansion(lookup, mid, 10)) == 25
    assert len(adjacent_expansion(lookup, lookup.anchor(0, 0), 10)) == 9
    with pytest.raises(ValueError):
        adjacent_expansion(lookup, mid, -1)


def test_lookup_generation_is_deterministic_and_complete(lookup):
    again = generate_default_lookup(1)
    assert again.to_text() == lookup.to_text()
    assert len(lookup) == 400
    assert all(a.search_terms and a.seed_genres for a in lookup)
    assert generate_default_lookup(2).to_text() != lookup.to_text()


def test_lookup_file_round_trip(tmp_path, lookup):
    path = tmp_path / "lookup.csv"
    lookup.save(path)
    assert MoodLookup.load(path) == lookup


def test_lookup_requires_400_anchors(lookup):
    with pytest.raises(ValueError):
        MoodLookup(list(lookup)[:399])

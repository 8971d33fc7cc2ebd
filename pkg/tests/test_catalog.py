import pytest

from affectmesh.catalog import AudioFeatures, Catalog, Track, generate, mei_prior, search
from affectmesh.genres import LOG_GENRES


def _track(energy, genre="pop", tid="x1"):
    return Track(tid, "t", "a", genre, 200.0, AudioFeatures(energy, 0.5, 0.5, 0.5, 120.0, -8.0))


@pytest.fixture(scope="module")
def cat():
    return generate(0, 1000)


@pytest.mark.parametrize("energy, prior", [(0.5, 0.0), (0.88, 0.76), (0.0, -1.0), (1.0, 1.0)])
def test_mei_prior_linear_map(energy, prior):
    assert mei_prior(_track(energy)) == pytest.approx(prior, abs=1e-12)


def test_mei_prior_monotone():
    values = [mei_prior(_track(e / 20)) for e in range(21)]
    assert values == sorted(values)


def test_generate_deterministic_unique_ids(cat):
    assert generate(0, 1000) == cat
    assert len({t.id for t in cat}) == 1000
    assert generate(1, 1000) != cat


def test_every_log_genre_present(cat):
    for g in LOG_GENRES:
        assert cat.by_genre(g.lower()), g
    small = generate(3, 500)
    assert all(small.by_genre(g.lower()) for g in LOG_GENRES)


def test_search_filters_and_orders(cat):
    assert search(cat, set()) == []
    pop = search(cat, {"pop"})
    assert pop and all(t.genre == "pop" for t in pop)
    assert [t.id for t in pop] == sorted(t.id for t in pop)
    assert len(search(cat, {"pop", "jazz"}, limit=5)) == 5
    assert search(cat, {"pop"}) == pop


def test_csv_round_trip(tmp_path, cat):
    path = tmp_path / "catalog.csv"
    cat.save(path)
    assert path.read_text().splitlines()[0] == ("id,title,artist,genre,duration,energy,valence,"
                                                "danceability,acousticness,tempo,loudness")
    assert Catalog.load(path) == cat


def test_track_invariants():
    with pytest.raises(ValueError):
        Track("a", "t", "a", "pop", 30.0, AudioFeatures(0.5, 0.5, 0.5, 0.5, 120, -8))
    with pytest.raises(ValueError):
        Track("a", "t", "a", "Pop", 200.0, AudioFeatures(0.5, 0.5, 0.5, 0.5, 120, -8))
    with pytest.raises(ValueError):
        AudioFeatures(1.2, 0.5, 0.5, 0.5, 120, -8)
    with pytest.raises(ValueError):
        Catalog([_track(0.5), _track(0.6)])

import pytest
from hypothesis import given, strategies as st

from affectmesh.paf import (REFERENCE_PROFILE, BehavioralSignal, LibraryEntry, LogFormatError, PafProfile, SignalKind,
                            TimeBand, apply, bundled_log_path, confidence, integrate_drift, maybe_reclassify, observe,
                            parse_log, replay, signed_signal, skip_kind, update)

AFT = TimeBand.AFTERNOON


def sig(kind, mei=0.0, uea=None, genre="pop", band=AFT, t=0.0):
    return BehavioralSignal(SignalKind(kind), genre, band, 0, mei, uea, t)


def test_row_one_prior_overestimated_gives_negative_signal():
    assert signed_signal(sig("skipMid", 0.40, 0.10)) < 0


def test_no_gap_completed_is_zero():
    assert signed_signal(sig("completed", 0.3, 0.3)) == 0.0
    assert signed_signal(sig("completed", 0.3, None)) == 0.0


def test_volume_is_unconditional():
    assert signed_signal(sig("volumeUp", 0.9, -0.9)) == 0.15
    assert signed_signal(sig("volumeDown", -0.9, 0.9)) == -0.15


@pytest.mark.parametrize("secs, kind", [(5, SignalKind.SKIP_EARLY), (14.9, SignalKind.SKIP_EARLY),
                                        (15, SignalKind.SKIP_MID), (60, SignalKind.SKIP_MID), (61, None)])
def test_skip_kind(secs, kind):
    assert skip_kind(secs) is kind


def test_update_examples():
    p = update(PafProfile(), "pop", AFT, 0.2, 0.0)
    b = p.bucket("pop", AFT)
    assert b.delta == pytest.approx(0.03) and b.n == 1
    p2 = update(p, "pop", AFT, 0.03, 1.0)
    assert p2.bucket("pop", AFT).delta == pytest.approx(0.03)
    deltas = []
    for i in range(100):
        p = update(p, "pop", AFT, 0.5, float(i))
        deltas.append(p.bucket("pop", AFT).delta)
    assert deltas == sorted(deltas) and deltas[-1] == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ValueError):
        update(p, "pop", AFT, 0.6, 0.0)


@pytest.mark.parametrize("n, c", [(22, 1.0), (6, 0.30), (0, 0.0), (20, 1.0)])
def test_confidence(n, c):
    assert confidence(n) == pytest.approx(c)


def test_apply_examples():
    assert apply(0.4, "pop", AFT, PafProfile()) == 0.4
    from affectmesh.paf import PafBucket
    prof = PafProfile({("pop", AFT): PafBucket(-0.1788, 22)})
    assert apply(0.40, "Pop", AFT, prof) == pytest.approx(0.2212)
    prof = PafProfile({("pop", AFT): PafBucket(0.5, 30)})
    assert apply(0.9, "pop", AFT, prof) == 1.0


@given(st.lists(st.tuples(st.sampled_from(list(SignalKind)), st.floats(-1, 1), st.floats(-1, 1)), max_size=60),
       st.floats(-1, 1))
def test_bounds_hold_for_any_log(rows, prior):
    p = PafProfile()
    for kind, mei, uea in rows:
        p = observe(p, sig(kind, mei, uea))
        b = p.bucket("pop", AFT)
        assert -0.5 <= b.delta <= 0.5
        assert -1 <= apply(prior, "pop", AFT, p) <= 1


def test_integrate_drift_band():
    p = integrate_drift(PafProfile(), "jazz", AFT, 0.0, 0.3, 0.0)
    assert p.bucket("jazz", AFT).delta > 0
    assert integrate_drift(PafProfile(), "jazz", AFT, 0.0, 0.05, 0.0) == PafProfile()
    assert integrate_drift(PafProfile(), "jazz", AFT, 0.0, 0.7, 0.0) == PafProfile()


def test_divergence_between_listeners():
    a = b = PafProfile()
    for i in range(25):
        a = observe(a, sig("favorite", 0.0, 0.5, t=i))
        b = observe(b, sig("favorite", 0.0, -0.5, t=i))
    assert apply(0.1, "pop", AFT, a) != apply(0.1, "pop", AFT, b)


def test_reclassification_debounce():
    lib = [LibraryEntry("t1", "pop", 0.4), LibraryEntry("t2", "jazz", -0.2)]
    p = PafProfile()
    for i in range(19):
        p = observe(p, sig("favorite", 0.0, 0.5, t=i))
    assert maybe_reclassify(p, lib, 100.0)[1] is None  # c < 1
    for i in range(3):
        p = observe(p, sig("favorite", 0.0, 0.5, t=i))
    p, job = maybe_reclassify(p, lib, 15 * 3600.0)
    assert job is not None and job.band is AFT
    assert job.arousal["t1"] > 0.4 and job.arousal["t2"] == -0.2
    for i in range(5):
        p = observe(p, sig("favorite", 0.0, 0.5, t=i))
    assert maybe_reclassify(p, lib, 16 * 3600.0)[1] is None


def test_time_bands():
    assert TimeBand.from_hour(5) is TimeBand.MORNING
    assert TimeBand.from_hour(12) is TimeBand.AFTERNOON
    assert TimeBand.from_hour(18) is TimeBand.EVENING
    assert TimeBand.from_hour(4.9) is TimeBand.NIGHT
    assert TimeBand.parse("eve") is TimeBand.EVENING
    with pytest.raises(ValueError):
        TimeBand.parse("dusk")


def test_genre_lowercased():
    assert sig("completed", genre="Cantopop").genre == "cantopop"


@pytest.fixture(scope="module")
def report():
    return replay(parse_log(bundled_log_path().read_text()))


def test_bundled_log_replay_matches_reference_counts(report):
    rows = {(r.genre, r.band): r for r in report.rows}
    assert report.matched_keys == 12 and not report.missing_keys
    for key, (_, conf, n) in REFERENCE_PROFILE.items():
        assert rows[key].n == n, key
        assert rows[key].conf == pytest.approx(conf), key


def test_replay_flags_extra_bucket(report):
    assert len(report.rows) == 13
    assert any("edm/eve" in f for f in report.flags)
    assert "edm/eve" in report.text()


def test_replay_deterministic(report):
    again = replay(parse_log(bundled_log_path().read_text()))
    assert again.profile == report.profile and again.text() == report.text()


def test_sign_calibration_covers_well_sampled_buckets(report):
    assert set(report.sign_agreement) == {("pop", "aft"), ("electronic", "eve"), ("jazz", "aft")}


def test_parse_log_errors():
    header = "idx,genre,band,signal,position,mei_a,uea_a\n"
    assert parse_log("") == []
    assert parse_log(header) == []
    with pytest.raises(LogFormatError) as err:
        parse_log(header + "1,pop,aft,skipMid,0,0.4,0.1\n2,pop,xx,skipMid,0,0.4,0.1\n3,pop,aft,wat,0,0,0\n")
    assert err.value.rows == [3, 4]
    with pytest.raises(LogFormatError):
        parse_log("a,b,c\n")
    vol = parse_log(header + "1,pop,aft,volumeUp,0,0.1,\n")
    assert vol[0].uea_a is None and signed_signal(vol[0]) == 0.15

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chi2

from geoloc.fusion import ClassLabel, Contact, CovarianceParams, bearing_covariance
from geoloc.tracker import (
    DEFAULT_GATE,
    LifecycleParams,
    NumericalDegeneracyError,
    TimeRegressionError,
    Track,
    TrackDatabase,
    TrackStatus,
    associate,
    lifecycle_step,
    mahalanobis_sq,
    predict,
    update,
)

P_ = ClassLabel.PERSON


def _track(mean=(0, 0, 0), P=None, tid=1, label=P_, t=0.0):
    P = np.eye(3) if P is None else P
    return Track(tid, np.array(mean, float), np.array(P, float), label, match_times=(t,), last_update=t, n_updates=1)


def _contact(pos=(0, 0, 0), R=None, t=1.0, label=P_, conf=0.9):
    R = np.eye(3) if R is None else R
    return Contact(np.array(pos, float), np.array(R, float), label, conf, 0, t)


def _spd(rng, scale=1.0):
    A = rng.normal(size=(3, 3))
    return scale * (A @ A.T + 0.1 * np.eye(3))


def test_gate_is_chi_square_quantile():
    # 14.16 is the 3-dof quantile at 0.9973 (three-sigma coverage)
    assert chi2.cdf(DEFAULT_GATE, 3) == pytest.approx(0.9973, abs=5e-5)


@pytest.mark.parametrize("dt", [0.0, 5.0, 1e6])
def test_predict_identity(dt):
    tr = _track(P=np.diag([1.0, 2.0, 3.0]))
    out = predict(tr, dt)
    assert np.array_equal(out.mean_utm, tr.mean_utm) and np.array_equal(out.covariance, tr.covariance)


def test_predict_chained_and_negative():
    tr = _track()
    out = tr
    for _ in range(100):
        out = predict(out, 0.3)
    assert np.array_equal(out.mean_utm, tr.mean_utm) and np.array_equal(out.covariance, tr.covariance)
    with pytest.raises(TimeRegressionError):
        predict(tr, -1e-9)


def test_update_symmetric_case():
    out = update(_track(P=4 * np.eye(3)), _contact((2, 0, 0), 4 * np.eye(3)))
    assert out.mean_utm == pytest.approx([1, 0, 0])
    assert out.covariance == pytest.approx(2 * np.eye(3))
    assert out.match_times == (0.0, 1.0) and out.last_update == 1.0


def test_update_uninformative_measurement():
    tr = _track((1, 2, 3), np.eye(3))
    out = update(tr, _contact((100, -50, 7), 1e12 * np.eye(3)))
    assert out.mean_utm == pytest.approx([1, 2, 3], abs=1e-9)


def _dense_kalman(m, P, z, R):
    """Textbook form with an explicit inverse."""
    K = P @ np.linalg.inv(P + R)
    return m + K @ (z - m), (np.eye(3) - K) @ P


def test_update_anisotropic_matches_dense_oracle():
    b = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    R = bearing_covariance(100, b, CovarianceParams())
    P = 25 * np.eye(3)
    out = update(_track(P=P), _contact((3, 1, 0), R))
    m_ref, P_ref = _dense_kalman(np.zeros(3), P, np.array([3, 1, 0.0]), R)
    assert out.mean_utm == pytest.approx(m_ref, rel=1e-9)
    assert np.allclose(out.covariance, P_ref, rtol=1e-9, atol=1e-12)
    # posterior variance along the bearing stays larger than across it
    assert b @ out.covariance @ b > np.array([0, 0, 1.0]) @ out.covariance @ np.array([0, 0, 1.0])


def test_update_info_form_oracle_1000_pairs(rng):
    worst = 0.0
    for _ in range(1000):
        P, R = _spd(rng, rng.uniform(0.01, 100)), _spd(rng, rng.uniform(0.01, 100))
        m, z = rng.normal(0, 10, 3), rng.normal(0, 10, 3)
        out = update(_track(m, P), _contact(z, R))
        info = np.linalg.inv(P) + np.linalg.inv(R)
        P_ref = np.linalg.inv(info)
        m_ref = P_ref @ (np.linalg.solve(P, m) + np.linalg.solve(R, z))
        worst = max(worst,
                    np.linalg.norm(out.covariance - P_ref) / np.linalg.norm(P_ref),
                    np.linalg.norm(out.mean_utm - m_ref) / max(np.linalg.norm(m_ref), 1.0))
    assert worst < 1e-6


@given(st.integers(0, 2**32 - 1))
def test_update_shrinks_and_stays_symmetric(seed):
    rng = np.random.default_rng(seed)
    P, R = _spd(rng), _spd(rng)
    out = update(_track(P=P), _contact(rng.normal(size=3), R))
    Pn = out.covariance
    assert np.trace(Pn) < np.trace(P)
    assert np.allclose(Pn, Pn.T, atol=1e-9)
    assert np.linalg.eigvalsh(Pn).min() > -1e-9
    assert np.linalg.eigvalsh(P - Pn).min() > -1e-9  # Loewner order


def test_update_errors():
    with pytest.raises(ValueError):
        update(_track(), _contact(label=ClassLabel.E_GATOR))
    with pytest.raises(TimeRegressionError):
        update(_track(t=5.0), _contact(t=5.0))
    with pytest.raises(NumericalDegeneracyError):
        update(_track(P=np.zeros((3, 3))), _contact(R=np.zeros((3, 3))))


def test_associate_trivial_and_gated():
    params = LifecycleParams()
    assert associate([_track()], [_contact()], params)[0] == [(0, 0)]
    far = _contact((1000, 0, 0), 0.01 * np.eye(3))
    assert associate([_track(P=0.01 * np.eye(3))], [far], params) == ([], [0], [0])
    other = _contact(label=ClassLabel.PICKUP_TRUCK)
    assert associate([_track()], [other], params) == ([], [0], [0])


def test_associate_crossed_matches_brute_force():
    params = LifecycleParams()
    tracks = [_track((0, 0, 0), 2 * np.eye(3), 1), _track((3, 0, 0), 2 * np.eye(3), 2)]
    contacts = [_contact((2.2, 0.5, 0)), _contact((0.9, -0.4, 0))]
    pairs, _, _ = associate(tracks, contacts, params)
    best = min(itertools.permutations(range(2)),
               key=lambda p: sum(mahalanobis_sq(tracks[i], contacts[j]) for i, j in enumerate(p)))
    assert pairs == sorted(enumerate(best))


def _brute_force(tracks, contacts, gate):
    """Max cardinality, then min summed distance, over all partial injections."""
    best = (0, 0.0, [])
    nt, nc = len(tracks), len(contacts)
    for k in range(min(nt, nc), 0, -1):
        for ti in itertools.combinations(range(nt), k):
            for cj in itertools.permutations(range(nc), k):
                ds = []
                for i, j in zip(ti, cj):
                    if tracks[i].class_label != contacts[j].class_label:
                        break
                    d = mahalanobis_sq(tracks[i], contacts[j])
                    if d > gate:
                        break
                    ds.append(d)
                else:
                    s = sum(ds)
                    if k > best[0] or (k == best[0] and s < best[1] - 1e-12):
                        best = (k, s, sorted(zip(ti, cj)))
        if best[0] == k:
            break
    return best


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 4))
def test_associate_matches_exhaustive(seed, nt, nc):
    rng = np.random.default_rng(seed)
    labels = [ClassLabel.PERSON, ClassLabel.E_GATOR]
    tracks = [_track(rng.uniform(0, 6, 3), np.eye(3), i + 1, labels[rng.integers(2)]) for i in range(nt)]
    contacts = [_contact(rng.uniform(0, 6, 3), np.eye(3), label=labels[rng.integers(2)]) for _ in range(nc)]
    pairs, un_c, un_t = associate(tracks, contacts, LifecycleParams())
    k, s, _ = _brute_force(tracks, contacts, DEFAULT_GATE)
    assert len(pairs) == k
    assert sum(mahalanobis_sq(tracks[i], contacts[j]) for i, j in pairs) == pytest.approx(s, abs=1e-9)
    assert len({i for i, _ in pairs}) == len(pairs) == len({j for _, j in pairs})
    assert sorted(un_c + [j for _, j in pairs]) == list(range(nc))
    assert sorted(un_t + [i for i, _ in pairs]) == list(range(nt))


def _run(times, params=LifecycleParams(), t_end=None):
    db, log = TrackDatabase(params), []
    for t in times:
        db, ev = lifecycle_step(db, [_contact(t=t)], t)
        log += ev
    if t_end is not None:
        db, ev = lifecycle_step(db, [], t_end)
        log += ev
    return db, log


def _when(log, kind):
    return [e.time for e in log if e.kind == kind]


def test_confirm_after_three_close_matches():
    db, log = _run([0, 10, 20])
    assert _when(log, "birth") == [0] and _when(log, "confirm") == [20]
    assert db.tracks[1].status is TrackStatus.CONFIRMED


def test_chain_restarts_after_long_gap():
    db, log = _run([0, 40, 50])
    assert _when(log, "confirm") == [] and db.tracks[1].chain_length == 2
    db, log = _run([0, 40, 50, 60])
    assert _when(log, "confirm") == [60]


def test_gap_exactly_max_gap_counts():
    assert _when(_run([0, 30, 60])[1], "confirm") == [60]
    assert _when(_run([0, 30.001, 60.002])[1], "confirm") == []


def test_death_after_timeout():
    db, log = _run([0, 10, 20], t_end=139.999)
    assert _when(log, "death") == []
    db, log = _run([0, 10, 20], t_end=140.0)
    assert _when(log, "death") == [140.0] and db.tracks[1].status is TrackStatus.DEAD
    # dead tracks are never matched again: a new contact spawns a fresh track
    db, ev = lifecycle_step(db, [_contact(t=141.0)], 141.0)
    assert [e.kind for e in ev] == ["birth"] and ev[0].track_id == 2


def test_candidate_dies_too():
    _, log = _run([0], t_end=120.0)
    assert _when(log, "death") == [120.0]


def test_status_transitions_are_monotone():
    db, log = _run([0, 10, 20, 30], t_end=200.0)
    kinds = [e.kind for e in log if e.track_id == 1]
    assert kinds.index("confirm") < kinds.index("death")
    assert kinds.count("confirm") == 1 and kinds.count("death") == 1


def test_contact_after_t_now_rejected():
    with pytest.raises(TimeRegressionError):
        lifecycle_step(TrackDatabase(), [_contact(t=5.0)], 4.0)


def test_params_validation():
    with pytest.raises(ValueError):
        LifecycleParams(n_confirm=0)
    with pytest.raises(ValueError):
        LifecycleParams(max_gap=0)
    with pytest.raises(ValueError):
        LifecycleParams(max_gap=30, death_timeout=30)


def test_single_step_n_confirm_one():
    db, ev = lifecycle_step(TrackDatabase(LifecycleParams(n_confirm=1)), [_contact(t=0.0)], 0.0)
    assert [e.kind for e in ev] == ["birth", "confirm"]


def test_confirmed_tracks_take_precedence():
    # a confirmed track and a candidate both gate to the one contact
    db = TrackDatabase()
    conf = Track(1, np.array([0.0, 0, 0]), np.eye(3), P_, TrackStatus.CONFIRMED, (0.0,), 0.0, 3, 3)
    cand = Track(2, np.array([0.5, 0, 0]), np.eye(3), P_, TrackStatus.CANDIDATE, (0.0,), 0.0, 1, 1)
    db.tracks = {1: conf, 2: cand}
    db.next_id = 3
    db, ev = lifecycle_step(db, [_contact((0.45, 0, 0), t=1.0)], 1.0)
    assert [(e.kind, e.track_id) for e in ev] == [("update", 1)]


def test_same_instant_duplicates_fold_into_one_track():
    c1, c2 = _contact((0, 0, 0), t=0.0), _contact((0.3, 0, 0), t=0.0)
    db, ev = lifecycle_step(TrackDatabase(), [c1, c2], 0.0)
    assert [e.kind for e in ev] == ["birth"] and len(db.tracks) == 1
    assert db.tracks[1].n_updates == 2 and db.tracks[1].match_times == (0.0,)


def test_confidence_running_mean():
    db = TrackDatabase()
    for t, c in [(0.0, 0.5), (1.0, 0.7), (2.0, 0.9)]:
        db, _ = lifecycle_step(db, [_contact(t=t, conf=c)], t)
    assert db.tracks[1].confidence == pytest.approx(0.7)


@st.composite
def _streams(draw):
    n = draw(st.integers(1, 25))
    times = sorted(draw(st.lists(st.integers(0, 300), min_size=n, max_size=n)))
    out = []
    for t in times:
        obj = draw(st.integers(0, 2))
        jitter = draw(st.floats(-0.5, 0.5))
        out.append(_contact((obj * 50 + jitter, 0, 0), 4 * np.eye(3), float(t)))
    return out


@given(_streams())
def test_batch_equals_per_timestamp(stream):
    t_end = stream[-1].timestamp
    batch, ev_b = lifecycle_step(TrackDatabase(), stream, t_end)
    inc, ev_i = TrackDatabase(), []
    for t in sorted({c.timestamp for c in stream}):
        inc, ev = lifecycle_step(inc, [c for c in stream if c.timestamp == t], t)
        ev_i += ev
    assert ev_b == ev_i
    assert batch.tracks.keys() == inc.tracks.keys()
    for k in batch.tracks:
        a, b = batch.tracks[k], inc.tracks[k]
        assert np.array_equal(a.mean_utm, b.mean_utm) and np.array_equal(a.covariance, b.covariance)
        assert (a.status, a.match_times, a.chain_length) == (b.status, b.match_times, b.chain_length)


@given(_streams())
def test_exclusive_tracks_when_contacts_separate(stream):
    # objects 50 m apart with 2 m sigma: every contact gates to one object only
    db, _ = lifecycle_step(TrackDatabase(), stream, stream[-1].timestamp)
    alive = db.alive()
    for a, b in itertools.combinations(alive, 2):
        assert abs(a.mean_utm[0] - b.mean_utm[0]) > 10

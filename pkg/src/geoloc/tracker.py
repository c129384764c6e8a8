"""Static-object tracker: zero-process-noise Kalman filter with gated
Hungarian association and a gap-limited confirmation rule.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from itertools import groupby

import numpy as np
from scipy.optimize import linear_sum_assignment

from .fusion import ClassLabel, Contact

# chi-square, 3 DOF, 3-sigma (99.73 %) coverage
DEFAULT_GATE = 14.16


class TimeRegressionError(ValueError):
    pass


class NumericalDegeneracyError(ArithmeticError):
    pass


class TrackStatus(enum.Enum):
    CANDIDATE = "candidate"
    CONFIRMED = "confirmed"
    DEAD = "dead"


@dataclass(frozen=True)
class Track:
    track_id: int
    mean_utm: np.ndarray
    covariance: np.ndarray
    class_label: ClassLabel
    status: TrackStatus = TrackStatus.CANDIDATE
    match_times: tuple[float, ...] = ()
    last_update: float = 0.0
    chain_length: int = 1  # matches in the current gap-limited chain
    n_updates: int = 0
    confidence: float = 1.0  # running mean of contact confidences

    @property
    def alive(self) -> bool:
        return self.status is not TrackStatus.DEAD


@dataclass(frozen=True)
class LifecycleParams:
    n_confirm: int = 3
    max_gap: float = 30.0
    death_timeout: float = 120.0
    gate_threshold: float = DEFAULT_GATE

    def __post_init__(self):
        if self.n_confirm < 1:
            raise ValueError("n_confirm must be >= 1")
        if not self.max_gap > 0:
            raise ValueError("max_gap must be positive")
        if not self.death_timeout > self.max_gap:
            raise ValueError("death_timeout must exceed max_gap")


@dataclass(frozen=True)
class TrackEvent:
    kind: str  # birth | confirm | update | death
    track_id: int
    time: float


@dataclass
class TrackDatabase:
    params: LifecycleParams = field(default_factory=LifecycleParams)
    tracks: dict[int, Track] = field(default_factory=dict)
    next_id: int = 1

    def copy(self) -> TrackDatabase:
        return TrackDatabase(self.params, dict(self.tracks), self.next_id)

    def alive(self) -> list[Track]:
        return [t for t in self.tracks.values() if t.alive]

    def confirmed(self) -> list[Track]:
        return [t for t in self.tracks.values() if t.status is TrackStatus.CONFIRMED]


def predict(track: Track, dt: float) -> Track:
    # constant-position model, zero process noise
    if dt < 0:
        raise TimeRegressionError(f"negative prediction interval {dt}")
    return track


def _kalman(mean, P, z, R):
    S = P + R
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e14:
        raise NumericalDegeneracyError("innovation covariance is singular")
    K = np.linalg.solve(S.T, P.T).T  # P S^-1
    I_K = np.eye(3) - K
    mean_new = mean + K @ (z - mean)
    P_new = I_K @ P @ I_K.T + K @ R @ K.T  # Joseph form
    return mean_new, (P_new + P_new.T) / 2.0


def update(track: Track, contact: Contact, *, record_match: bool = True) -> Track:
    if track.class_label != contact.class_label:
        raise ValueError("cannot update a track with a contact of another class")
    mean, P = _kalman(track.mean_utm, track.covariance, contact.position_utm, contact.covariance_utm)
    times = track.match_times
    if record_match:
        if times and contact.timestamp <= times[-1]:
            raise TimeRegressionError("contact is not newer than the track's last match")
        times = times + (contact.timestamp,)
    return replace(
        track, mean_utm=mean, covariance=P, match_times=times,
        last_update=max(track.last_update, contact.timestamp), n_updates=track.n_updates + 1,
        confidence=(track.confidence * track.n_updates + contact.confidence) / (track.n_updates + 1),
    )


def mahalanobis_sq(track: Track, contact: Contact) -> float:
    d = contact.position_utm - track.mean_utm
    S = track.covariance + contact.covariance_utm
    return float(d @ np.linalg.solve(S, d))


def associate(tracks: list[Track], contacts: list[Contact], params: LifecycleParams):
    """Class-exact, gated, minimum-cost one-to-one assignment.

    Returns ``(pairs, unmatched_contacts, unmatched_tracks)`` as index lists;
    ``pairs`` holds ``(track_index, contact_index)``.
    """
    nt, nc = len(tracks), len(contacts)
    if nt == 0 or nc == 0:
        return [], list(range(nc)), list(range(nt))
    cost = np.full((nt, nc), np.inf)
    for i, t in enumerate(tracks):
        for j, c in enumerate(contacts):
            if t.class_label == c.class_label:
                d2 = mahalanobis_sq(t, c)
                if d2 <= params.gate_threshold:
                    cost[i, j] = d2
    feasible = np.isfinite(cost)
    if not feasible.any():
        return [], list(range(nc)), list(range(nt))
    # infeasible entries priced above any feasible total: maximises the
    # number of gated matches first, then minimises their summed distance
    big = (cost[feasible].sum() + 1.0) * (min(nt, nc) + 1)
    rows, cols = linear_sum_assignment(np.where(feasible, cost, big))
    pairs = sorted((int(r), int(c)) for r, c in zip(rows, cols) if feasible[r, c])
    mt = {p[0] for p in pairs}
    mc = {p[1] for p in pairs}
    return pairs, [j for j in range(nc) if j not in mc], [i for i in range(nt) if i not in mt]


def _register_match(track: Track, t: float, params: LifecycleParams, events: list) -> Track:
    times = track.match_times
    chain = track.chain_length
    if len(times) >= 2:
        chain = chain + 1 if times[-1] - times[-2] <= params.max_gap else 1
    track = replace(track, chain_length=chain)
    events.append(TrackEvent("update", track.track_id, t))
    if track.status is TrackStatus.CANDIDATE and chain >= params.n_confirm:
        track = replace(track, status=TrackStatus.CONFIRMED)
        events.append(TrackEvent("confirm", track.track_id, t))
    return track


def _reap(db: TrackDatabase, t_now: float, events: list) -> None:
    for tid in sorted(db.tracks):
        tr = db.tracks[tid]
        if tr.alive and t_now - tr.last_update >= db.params.death_timeout:
            db.tracks[tid] = replace(tr, status=TrackStatus.DEAD)
            events.append(TrackEvent("death", tid, t_now))


def _ingest_group(db: TrackDatabase, contacts: list[Contact], t: float, events: list) -> None:
    params = db.params
    touched: list[int] = []
    remaining = list(range(len(contacts)))
    # confirmed tracks get first pick of the contacts, then candidates
    for status in (TrackStatus.CONFIRMED, TrackStatus.CANDIDATE):
        pool = [tr for tid, tr in sorted(db.tracks.items()) if tr.status is status]
        sub = [contacts[j] for j in remaining]
        pairs, un_c, _ = associate(pool, sub, params)
        for ti, cj in pairs:
            tr = update(pool[ti], sub[cj])
            db.tracks[tr.track_id] = _register_match(tr, t, params, events)
            touched.append(tr.track_id)
        remaining = [remaining[j] for j in un_c]

    for j in remaining:
        c = contacts[j]
        # same-instant duplicates (e.g. overlapping modules) fold into the
        # track they gate to instead of spawning a twin
        best, best_d = None, params.gate_threshold
        for tid in touched:
            tr = db.tracks[tid]
            if tr.class_label == c.class_label:
                d2 = mahalanobis_sq(tr, c)
                if d2 <= best_d:
                    best, best_d = tid, d2
        if best is not None:
            db.tracks[best] = update(db.tracks[best], c, record_match=False)
            continue
        tid = db.next_id
        db.next_id += 1
        db.tracks[tid] = Track(
            tid, c.position_utm.copy(), c.covariance_utm.copy(), c.class_label,
            match_times=(c.timestamp,), last_update=c.timestamp, n_updates=1, confidence=c.confidence,
        )
        events.append(TrackEvent("birth", tid, t))
        if params.n_confirm <= 1:
            db.tracks[tid] = replace(db.tracks[tid], status=TrackStatus.CONFIRMED)
            events.append(TrackEvent("confirm", tid, t))
        touched.append(tid)


def lifecycle_step(db: TrackDatabase, contacts: list[Contact], t_now: float):
    """Advance the database to ``t_now`` ingesting ``contacts``.

    Contacts are processed in timestamp groups, so one call with a batch is
    equivalent to consecutive calls per timestamp.
    """
    if any(c.timestamp > t_now for c in contacts):
        raise TimeRegressionError("contact timestamp lies after t_now")
    db = db.copy()
    events: list[TrackEvent] = []
    ordered = sorted(contacts, key=lambda c: c.timestamp)
    for t, group in groupby(ordered, key=lambda c: c.timestamp):
        _reap(db, t, events)
        _ingest_group(db, list(group), t, events)
    _reap(db, t_now, events)
    return db, events

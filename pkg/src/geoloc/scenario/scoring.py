from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..meshnet import CopState
from ..tracker import Track


@dataclass
class RunMetrics:
    n_objects: int = 0
    n_tracks: int = 0
    n_matched: int = 0
    precision: float = 1.0
    recall: float = 1.0
    vacuous: bool = False
    geoloc_error_mean: float = 0.0
    geoloc_error_max: float = 0.0
    latency_mean: float = 0.0
    latency_max: float = 0.0
    cop_objects: int = 0
    cop_consistency: float = 1.0

    def as_dict(self) -> dict:
        return asdict(self)


def _estimates(source) -> list[tuple[int, np.ndarray]]:
    if isinstance(source, CopState):
        return [(int(o.class_label), np.asarray(o.position_utm)) for o in source.objects]
    out = []
    for s in source:
        if isinstance(s, Track):
            out.append((int(s.class_label), np.asarray(s.mean_utm)))
        else:
            out.append((int(s[0]), np.asarray(s[1], float)))
    return out


def horizontal_error(p, obj) -> float:
    """Easting/northing distance; aerial and ground reports refer to
    different heights on the same object, so altitude is not scored."""
    return float(np.hypot(p[0] - obj.position_utm[0], p[1] - obj.position_utm[1]))


def greedy_match(estimates, objects, match_radius: float) -> list[tuple[int, int, float]]:
    """Nearest-first one-to-one matching of same-class pairs within the radius."""
    cands = []
    for i, (cls, p) in enumerate(estimates):
        for j, obj in enumerate(objects):
            if cls == int(obj.class_label):
                d = horizontal_error(p, obj)
                if d <= match_radius:
                    cands.append((d, i, j))
    cands.sort()
    used_i, used_j, out = set(), set(), []
    for d, i, j in cands:
        if i not in used_i and j not in used_j:
            used_i.add(i)
            used_j.add(j)
            out.append((i, j, d))
    return out


def score_tracks(source, objects, match_radius: float = 5.0) -> RunMetrics:
    if not match_radius > 0:
        raise ValueError("match_radius must be positive")
    est = _estimates(source)
    matches = greedy_match(est, objects, match_radius)
    m = RunMetrics(n_objects=len(objects), n_tracks=len(est), n_matched=len(matches))
    # empty denominators score 1.0 by convention and raise the vacuous flag
    m.precision = len(matches) / len(est) if est else 1.0
    m.recall = len(matches) / len(objects) if objects else 1.0
    m.vacuous = not est or not objects
    if matches:
        errs = np.array([d for _, _, d in matches])
        m.geoloc_error_mean = float(errs.mean())
        m.geoloc_error_max = float(errs.max())
    return m


def score_fleet(track_sets, objects, match_radius: float = 5.0) -> RunMetrics:
    """Pool per-robot track sets.

    Each robot is matched to the ground truth on its own, so two robots
    tracking the same object are not duplicates of each other. Precision
    pools matched tracks over all tracks; recall counts objects matched by
    at least one robot.
    """
    if not match_radius > 0:
        raise ValueError("match_radius must be positive")
    n_tracks, n_matched, errs, hit = 0, 0, [], set()
    for tracks in track_sets:
        est = _estimates(tracks)
        matches = greedy_match(est, objects, match_radius)
        n_tracks += len(est)
        n_matched += len(matches)
        errs.extend(d for _, _, d in matches)
        hit.update(j for _, j, _ in matches)
    m = RunMetrics(n_objects=len(objects), n_tracks=n_tracks, n_matched=n_matched)
    m.precision = n_matched / n_tracks if n_tracks else 1.0
    m.recall = len(hit) / len(objects) if objects else 1.0
    m.vacuous = not n_tracks or not objects
    if errs:
        m.geoloc_error_mean = float(np.mean(errs))
        m.geoloc_error_max = float(np.max(errs))
    return m


def cop_consistency(cop: CopState, objects, match_radius: float = 5.0) -> float:
    """Fraction of ground-truth objects represented by exactly one COP object.

    Every COP object is attributed to its nearest same-class object within
    the radius.
    """
    if not objects:
        return 1.0
    hits = np.zeros(len(objects), dtype=int)
    for o in cop.objects:
        best, best_d = None, match_radius
        for j, obj in enumerate(objects):
            if int(obj.class_label) == int(o.class_label):
                d = horizontal_error(o.position_utm, obj)
                if d <= best_d:
                    best, best_d = j, d
        if best is not None:
            hits[best] += 1
    return float(np.mean(hits == 1))

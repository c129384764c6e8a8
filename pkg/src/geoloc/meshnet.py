"""Lossy robot-to-COP links, the track-report wire format, and COP merging.

Wire record (little-endian, 77 bytes)::

    u32 length            bytes that follow this field (always 73)
    u32 robot_id
    u32 track_id
    u8  class             0 person, 1 e_gator, 2 pickup_truck
    f64 x3 position_utm   easting, northing, altitude
    f64 x3 covariance_diag
    f32 confidence
    f64 timestamp
    u32 payload_bytes     modelled thumbnail size
"""
from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field

import numpy as np

from .fusion import ClassLabel

_BODY = struct.Struct("<IIB3d3dfdI")
_LEN = struct.Struct("<I")
RECORD_SIZE = _LEN.size + _BODY.size

DEFAULT_PAYLOAD = 64 * 1024


class WireFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrackReport:
    robot_id: int
    track_id: int
    class_label: ClassLabel
    position_utm: tuple[float, float, float]
    covariance_diag: tuple[float, float, float]
    confidence: float
    timestamp: float
    payload_bytes: int = DEFAULT_PAYLOAD

    def __post_init__(self):
        if self.payload_bytes <= 0:
            raise ValueError("payload_bytes must be positive")
        if any(not c > 0 for c in self.covariance_diag):
            raise ValueError("covariance diagonal entries must be positive")
        object.__setattr__(self, "class_label", ClassLabel(self.class_label))
        object.__setattr__(self, "position_utm", tuple(float(v) for v in self.position_utm))
        object.__setattr__(self, "covariance_diag", tuple(float(v) for v in self.covariance_diag))
        # the wire carries f32 confidence; keep the in-memory value identical
        object.__setattr__(self, "confidence", float(np.float32(self.confidence)))

    @property
    def key(self) -> tuple[int, int]:
        return self.robot_id, self.track_id

    def encode(self) -> bytes:
        body = _BODY.pack(self.robot_id, self.track_id, int(self.class_label), *self.position_utm,
                          *self.covariance_diag, self.confidence, self.timestamp, self.payload_bytes)
        return _LEN.pack(len(body)) + body

    @classmethod
    def decode(cls, data: bytes) -> TrackReport:
        if len(data) < _LEN.size:
            raise WireFormatError("record shorter than its length prefix")
        (n,) = _LEN.unpack_from(data)
        if n != _BODY.size or len(data) != _LEN.size + n:
            raise WireFormatError(f"bad record length {n} (buffer {len(data)} bytes)")
        f = _BODY.unpack_from(data, _LEN.size)
        try:
            label = ClassLabel(f[2])
        except ValueError as e:
            raise WireFormatError(f"unknown class code {f[2]}") from e
        return cls(f[0], f[1], label, f[3:6], f[6:9], f[9], f[10], f[11])


def decode_stream(data: bytes) -> list[TrackReport]:
    out, off = [], 0
    while off < len(data):
        if off + _LEN.size > len(data):
            raise WireFormatError(f"truncated length prefix at offset {off}")
        (n,) = _LEN.unpack_from(data, off)
        out.append(TrackReport.decode(data[off:off + _LEN.size + n]))
        off += _LEN.size + n
    return out


@dataclass(frozen=True)
class LinkModel:
    latency_base: float = 0.05
    latency_jitter: float = 0.02
    loss_prob: float = 0.0
    bandwidth: float = 1.0e6  # bytes / s
    rng_seed: int = 0

    def __post_init__(self):
        if self.latency_base < 0 or self.latency_jitter < 0:
            raise ValueError("latencies must be non-negative")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must lie in [0, 1]")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class Delivery:
    seq: int
    t_send: float
    t_deliver: float | None  # None when dropped
    report: TrackReport

    @property
    def dropped(self) -> bool:
        return self.t_deliver is None


class Link:
    """One FIFO radio link. Dropped messages still occupy the channel."""

    def __init__(self, model: LinkModel, name: str = "link"):
        self.model = model
        self.name = name
        self.rng = np.random.default_rng(model.rng_seed)
        self.busy_until = 0.0
        self.last_delivery = -np.inf
        self.seq = 0

    def send(self, report: TrackReport, t_send: float) -> Delivery:
        if t_send < 0:
            raise ValueError("t_send must be non-negative")
        m = self.model
        # fixed two draws per message keeps streams aligned across configs
        u_loss, u_jit = self.rng.random(2)
        start = max(t_send, self.busy_until)
        self.busy_until = start + report.payload_bytes / m.bandwidth
        seq = self.seq
        self.seq += 1
        if u_loss < m.loss_prob:
            return Delivery(seq, t_send, None, report)
        latency = max(0.0, m.latency_base + (2.0 * u_jit - 1.0) * m.latency_jitter)
        t = max(self.busy_until + latency, self.last_delivery)
        self.last_delivery = t
        return Delivery(seq, t_send, t, report)


def send(report: TrackReport, link: Link, t_send: float) -> Delivery:
    return link.send(report, t_send)


# --- common operating picture ----------------------------------------------

@dataclass
class CopObject:
    object_id: int
    class_label: ClassLabel
    position_utm: np.ndarray
    # (robot_id, track_id) -> (position, covariance trace, report time)
    contributors: dict = field(default_factory=dict)
    last_seen: float = 0.0

    def refresh(self) -> None:
        w = np.array([1.0 / c[1] for c in self.contributors.values()])
        P = np.array([c[0] for c in self.contributors.values()])
        self.position_utm = (w[:, None] * P).sum(axis=0) / w.sum()


@dataclass
class CopState:
    objects: list[CopObject] = field(default_factory=list)
    robot_last_report: dict[int, float] = field(default_factory=dict)
    next_id: int = 1

    def owner(self, key) -> CopObject | None:
        for o in self.objects:
            if key in o.contributors:
                return o
        return None

    def snapshot(self) -> list[dict]:
        out = []
        for o in self.objects:
            out.append({
                "object_id": o.object_id,
                "class": o.class_label.name.lower(),
                "position_utm": [float(v) for v in o.position_utm],
                "contributors": [list(k) for k in sorted(o.contributors)],
                "last_seen": o.last_seen,
            })
        return out

    def to_geojson(self) -> dict:
        feats = []
        for s in self.snapshot():
            x, y, z = s["position_utm"]
            props = {k: v for k, v in s.items() if k != "position_utm"}
            props["altitude"] = z
            feats.append({"type": "Feature", "geometry": {"type": "Point", "coordinates": [x, y]},
                          "properties": props})
        return {"type": "FeatureCollection", "features": feats}


def cop_ingest(state: CopState, report: TrackReport, t: float, merge_radius: float = 5.0) -> CopState:
    """Fold one delivered report into the picture (mutates and returns ``state``)."""
    if t < report.timestamp:
        raise ValueError("report delivered before it was stamped")
    pos = np.array(report.position_utm)
    entry = (pos, float(sum(report.covariance_diag)), report.timestamp)
    obj = state.owner(report.key)
    if obj is None:
        best, best_d = None, merge_radius
        for o in state.objects:
            if o.class_label == report.class_label:
                d = float(np.linalg.norm(o.position_utm - pos))
                if d <= best_d:
                    best, best_d = o, d
        obj = best
        if obj is None:
            obj = CopObject(state.next_id, report.class_label, pos.copy())
            state.next_id += 1
            state.objects.append(obj)
    obj.contributors[report.key] = entry
    obj.refresh()
    obj.last_seen = max(obj.last_seen, t)
    state.robot_last_report[report.robot_id] = max(state.robot_last_report.get(report.robot_id, t), t)
    return state


# --- discrete-event network --------------------------------------------------

@dataclass(frozen=True)
class LogRecord:
    t: float
    event: str  # send | drop | deliver
    link: str
    seq: int
    report: TrackReport

    def to_json(self) -> dict:
        return {"t": self.t, "event": self.event, "link": self.link, "seq": self.seq,
                "wire": self.report.encode().hex()}

    @classmethod
    def from_json(cls, d: dict) -> LogRecord:
        return cls(float(d["t"]), str(d["event"]), str(d["link"]), int(d["seq"]),
                   TrackReport.decode(bytes.fromhex(d["wire"])))


class MeshNetwork:
    """Owns the delivery queue; deliveries are applied to the COP in time order."""

    def __init__(self, links: dict[str, Link], cop: CopState | None = None, merge_radius: float = 5.0):
        self.links = links
        self.cop = cop if cop is not None else CopState()
        self.merge_radius = merge_radius
        self.log: list[LogRecord] = []
        self.timeline: list[tuple[float, list[dict]]] = []
        self._queue: list = []
        self._n = 0

    def send(self, link_name: str, report: TrackReport, t: float) -> Delivery:
        d = self.links[link_name].send(report, t)
        self.log.append(LogRecord(t, "send", link_name, d.seq, report))
        if d.dropped:
            self.log.append(LogRecord(t, "drop", link_name, d.seq, report))
        else:
            heapq.heappush(self._queue, (d.t_deliver, self._n, link_name, d))
            self._n += 1
        return d

    def advance_to(self, t: float) -> None:
        while self._queue and self._queue[0][0] <= t:
            td, _, name, d = heapq.heappop(self._queue)
            self.log.append(LogRecord(td, "deliver", name, d.seq, d.report))
            cop_ingest(self.cop, d.report, td, self.merge_radius)
            self.timeline.append((td, self.cop.snapshot()))

    def flush(self) -> None:
        self.advance_to(np.inf)


def run_network(events, links: dict[str, Link], cop: CopState | None = None, merge_radius: float = 5.0):
    """Replay ``(t_send, link_name, report)`` sends through the links.

    Returns ``(timeline, log)``: COP snapshots after each delivery and the
    full send/drop/deliver record.
    """
    net = MeshNetwork(links, cop, merge_radius)
    last = -np.inf
    for t, name, report in events:
        if t < last:
            raise ValueError("send events must be time-ordered")
        last = t
        net.advance_to(t)
        net.send(name, report, t)
    net.flush()
    return net.timeline, net.log

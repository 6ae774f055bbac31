"""Synthetic DVS events from rendered intensity frames, and event frames.

Event streams are numpy structured arrays with fields x, y, t (microseconds)
and p (+1/-1), matching the on-disk record layout.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .geometry import to_local
from .world import ActorKind, WorldState

EVENT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<u4"), ("p", "i1")])
MAGIC = b"EVT1"
HEADER = struct.Struct("<4sHHI4x")
EPS = 1.0 / 255.0
# slack for float round-off when a log change is an exact multiple of C
_QUANT_SLACK = 1e-9


class Mode(str, Enum):
    COUNT = "count"
    POLARITY_SUM = "polarity_sum"


@dataclass(frozen=True)
class CameraConfig:
    """Top-down orthographic camera."""

    width: int = 128
    height: int = 128
    meters_per_pixel: float = 0.25
    center: tuple[float, float] = (0.0, 0.0)
    yaw: float = 0.0
    follow_ego: bool = False
    ahead: float = 16.0  # when following, image center sits this far in front of the ego
    background: float = 0.15
    vehicle_level: float = 0.85
    pedestrian_level: float = 0.95
    static_level: float = 0.6

    def __post_init__(self):
        if self.meters_per_pixel <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("camera field of view must be positive")
        if self.width > 1024 or self.height > 1024:
            raise ValueError("camera resolution is limited to 1024x1024")


@dataclass(frozen=True)
class IntensityFrame:
    values: np.ndarray  # (H, W) luminance in [eps, 1]
    t_us: int

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class EventFrame:
    values: np.ndarray  # (H, W), or (2, H, W) for split polarity
    window: tuple[int, int]
    mode: Mode


def render_intensity(world: WorldState, camera: CameraConfig = CameraConfig(), eps: float = EPS) -> IntensityFrame:
    """Flat-shaded raster of the actors as bright boxes on a dark road."""
    H, W, m = camera.height, camera.width, camera.meters_per_pixel
    if camera.follow_ego:
        e = world.ego
        cx = e.x + camera.ahead * math.cos(e.yaw)
        cy = e.y + camera.ahead * math.sin(e.yaw)
        cyaw = e.yaw
    else:
        (cx, cy), cyaw = camera.center, camera.yaw
    # pixel centres in camera frame: columns run along +x, rows run along -y
    u = (np.arange(W) - W / 2 + 0.5) * m
    v = -(np.arange(H) - H / 2 + 0.5) * m
    uu, vv = np.meshgrid(u, v)
    c, s = math.cos(cyaw), math.sin(cyaw)
    px = cx + c * uu - s * vv
    py = cy + s * uu + c * vv
    img = np.full((H, W), camera.background)
    levels = {ActorKind.VEHICLE: camera.vehicle_level, ActorKind.PEDESTRIAN: camera.pedestrian_level,
              ActorKind.STATIC: camera.static_level}
    for a in sorted(world.actors, key=lambda a: a.id):
        lx, ly = to_local(px, py, a.x, a.y, a.yaw)
        inside = (np.abs(lx) <= a.half_l) & (np.abs(ly) <= a.half_w)
        img[inside] = levels[a.kind]
    return IntensityFrame(np.clip(img, eps, 1.0), int(round(world.time * 1e6)))


class EventSynthesizer:
    """Per-pixel log-intensity threshold crossing with residual carry.

    The reference level only moves by whole multiples of the threshold, so a
    change split across several frames is never double counted.
    """

    def __init__(self, threshold: float = 0.2, eps: float = EPS):
        if threshold <= 0:
            raise ValueError("contrast threshold must be positive")
        self.C = threshold
        self.eps = eps
        self.ref: np.ndarray | None = None
        self.last: IntensityFrame | None = None

    def _log(self, frame: IntensityFrame) -> np.ndarray:
        return np.log(np.maximum(frame.values, self.eps))

    def reset(self, frame: IntensityFrame) -> None:
        self.ref = self._log(frame)
        self.last = frame

    def feed(self, frame: IntensityFrame) -> np.ndarray:
        if self.last is None:
            self.reset(frame)
            return np.empty(0, EVENT_DTYPE)
        if frame.shape != self.last.shape:
            raise ValueError(f"frame size mismatch {self.last.shape} vs {frame.shape}")
        if frame.t_us <= self.last.t_us:
            raise ValueError("frames must have increasing timestamps")
        lp, ln = self._log(self.last), self._log(frame)
        diff = ln - self.ref
        n = np.floor(np.abs(diff) / self.C + _QUANT_SLACK).astype(np.int64)
        sign = np.sign(diff).astype(np.int64)
        ys, xs = np.nonzero(n)
        counts = n[ys, xs]
        out = np.empty(int(counts.sum()), EVENT_DTYPE)
        if len(out):
            rep = np.repeat(np.arange(len(ys)), counts)
            k = np.arange(len(out)) - np.repeat(np.cumsum(counts) - counts, counts) + 1
            yy, xx = ys[rep], xs[rep]
            s = sign[yy, xx]
            level = self.ref[yy, xx] + s * k * self.C
            span = ln[yy, xx] - lp[yy, xx]
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(span != 0, (level - lp[yy, xx]) / span, 1.0)
            frac = np.clip(frac, 0.0, 1.0)
            t0, dt = self.last.t_us, frame.t_us - self.last.t_us
            t = np.clip(t0 + np.ceil(frac * dt - 1e-6), t0 + 1, frame.t_us)
            out["x"], out["y"], out["t"], out["p"] = xx, yy, t.astype(np.uint32), s
            out = out[np.lexsort((out["p"], out["x"], out["y"], out["t"]))]
        self.ref = self.ref + sign * n * self.C
        self.last = frame
        return out


def synthesize_events(prev: IntensityFrame, next: IntensityFrame, threshold_C: float = 0.2,
                      eps: float = EPS) -> np.ndarray:
    """Events between two frames, starting from a fresh reference at ``prev``."""
    syn = EventSynthesizer(threshold_C, eps)
    syn.reset(prev)
    return syn.feed(next)


def accumulate(events: np.ndarray, window: tuple[int, int], shape: tuple[int, int],
               mode: Mode | str = Mode.COUNT, normalize: bool = True,
               split_polarity: bool = False) -> EventFrame:
    """Histogram the events with t_start < t <= t_end into an (H, W) frame.

    With ``split_polarity`` the result is (2, H, W): positive then negative counts.
    """
    t0, t1 = window
    if t1 < t0:
        raise ValueError("window end precedes start")
    mode = Mode(mode)
    H, W = shape
    ev = events[(events["t"] > t0) & (events["t"] <= t1)]
    x, y = ev["x"].astype(np.intp), ev["y"].astype(np.intp)
    if split_polarity:
        frame = np.zeros((2, H, W))
        pos = ev["p"] > 0
        np.add.at(frame[0], (y[pos], x[pos]), 1.0)
        np.add.at(frame[1], (y[~pos], x[~pos]), 1.0)
    else:
        frame = np.zeros((H, W))
        w = np.ones(len(ev)) if mode == Mode.COUNT else ev["p"].astype(float)
        np.add.at(frame, (y, x), w)
    if normalize:
        peak = np.abs(frame).max(initial=0.0)
        if peak > 0:
            frame = frame / peak
    return EventFrame(frame, (t0, t1), mode)


def polarity_mask(events: np.ndarray, drop: str | None = None, seed: int | None = None) -> np.ndarray:
    """Drop all positive or all negative events; ``drop=None`` picks one at random."""
    if drop is None:
        drop = ("positive", "negative")[np.random.default_rng(seed).integers(2)]
    if drop == "positive":
        return events[events["p"] < 0]
    if drop == "negative":
        return events[events["p"] > 0]
    raise ValueError(f"drop must be 'positive' or 'negative', got {drop!r}")


def write_events(path, events: np.ndarray, width: int, height: int) -> None:
    events = np.asarray(events, EVENT_DTYPE)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, width, height, len(events)))
        fh.write(events.tobytes())


def read_events(path) -> tuple[np.ndarray, int, int]:
    """Returns (events, width, height)."""
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise ValueError("truncated event file header")
    magic, w, h, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    body = data[HEADER.size:]
    if len(body) != count * EVENT_DTYPE.itemsize:
        raise ValueError(f"expected {count} records, file holds {len(body) / EVENT_DTYPE.itemsize}")
    return np.frombuffer(body, EVENT_DTYPE).copy(), w, h


def write_pgm(path, values: np.ndarray, signed: bool | None = None) -> None:
    """8-bit binary PGM. Signed frames map [-1, 1] to [0, 255] with 0 at mid-grey."""
    v = np.asarray(values, float)
    if signed is None:
        signed = bool((v < 0).any())
    img = (v + 1.0) / 2.0 if signed else v
    img = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM as floats in [0, 1]."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4:
        while data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            i = data.index(b"\n", i) + 1
            continue
        j = i
        while not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    if tokens[0] != b"P5":
        raise ValueError("only binary P5 PGM is supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    i += 1
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    img = np.frombuffer(data[i:], dtype, count=w * h).reshape(h, w)
    return img.astype(float) / maxval


def frames_to_events(paths, threshold: float = 0.2, frame_dt_us: int = 50_000, eps: float = EPS):
    """Event stream for an ordered list of PGM frames.

    A frame whose file stem is an integer uses it as its timestamp in
    microseconds; otherwise frames are spaced ``frame_dt_us`` apart.
    """
    syn = EventSynthesizer(threshold, eps)
    chunks = []
    shape = None
    for idx, p in enumerate(paths):
        stem = Path(p).stem
        t = int(stem) if stem.isdigit() else idx * frame_dt_us
        vals = np.clip(read_pgm(p), eps, 1.0)
        shape = vals.shape
        chunks.append(syn.feed(IntensityFrame(vals, t)))
    if shape is None:
        raise ValueError("no frames given")
    events = np.concatenate(chunks) if chunks else np.empty(0, EVENT_DTYPE)
    return events, shape


def frame_sidecar(frame: EventFrame) -> str:
    return json.dumps({"window_us": list(frame.window), "mode": frame.mode.value,
                       "shape": list(frame.values.shape)})

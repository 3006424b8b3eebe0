"""Event-camera stream handling and frame binning.

An event stream is a time-ordered list of (t, x, y, polarity) tuples from a
contrast sensor.  Frames are produced by counting signed polarities inside a
fixed temporal window centered on a target timestamp and normalizing the
result to [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError

# 30 FPS frame interval
DEFAULT_WINDOW_S = 1.0 / 30.0


@dataclass
class EventStream:
    """Sorted polarity events with the emitting sensor's resolution.

    t is in microseconds (int64), x is the column, y the row, p in {+1, -1}.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    sensor_size: tuple  # (H, W)

    def __post_init__(self):
        self.t = np.asarray(self.t, np.int64)
        self.x = np.asarray(self.x, np.int64)
        self.y = np.asarray(self.y, np.int64)
        self.p = np.asarray(self.p, np.int64)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValidationError("event component arrays have unequal lengths")
        if n and np.any(np.diff(self.t) < 0):
            bad = int(np.argmax(np.diff(self.t) < 0)) + 1
            raise ValidationError(f"timestamps decrease at event index {bad}")
        h, w = self.sensor_size
        if n:
            if self.x.min() < 0 or self.x.max() >= w:
                raise ValidationError(f"x coordinate outside [0, {w})")
            if self.y.min() < 0 or self.y.max() >= h:
                raise ValidationError(f"y coordinate outside [0, {h})")
            if not np.all(np.isin(self.p, (-1, 1))):
                raise ValidationError("polarity values must be +1 or -1")

    def __len__(self):
        return len(self.t)


def bin_events(stream, center_t, delta_t=DEFAULT_WINDOW_S):
    """Accumulate one event frame around ``center_t`` (seconds).

    Events with t in [center_t - delta_t/2, center_t + delta_t/2) contribute
    their polarity to the pixel count (#ON - #OFF).  The count map is then
    scaled by its max absolute value into [-1, 1]; an empty window yields a
    zero frame.
    """
    if delta_t <= 0:
        raise ConfigError(f"delta_t must be positive, got {delta_t}")
    h, w = stream.sensor_size
    frame = np.zeros((h, w), np.float64)
    if len(stream):
        t_s = stream.t.astype(np.float64) * 1e-6
        lo = center_t - delta_t / 2.0
        hi = center_t + delta_t / 2.0
        sel = (t_s >= lo) & (t_s < hi)
        np.add.at(frame, (stream.y[sel], stream.x[sel]), stream.p[sel])
    peak = np.abs(frame).max()
    if peak > 0:
        frame /= peak
    return frame.astype(np.float32)


def read_event_file(path):
    """Parse a whitespace text file of ``t_us x y polarity`` lines."""
    t, x, y, p = [], [], [], []
    with open(path) as f:
        for i, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValidationError(f"{path}:{i}: expected 4 fields, got {len(parts)}")
            t.append(int(parts[0]))
            x.append(int(parts[1]))
            y.append(int(parts[2]))
            p.append(int(parts[3]))
    return t, x, y, p

"""Physical world: BS layout, random-waypoint users, path loss, fading, CPU rates."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .scenario import COMPUTE, SPEED, RngStreams, ScenarioConfig

MIN_DISTANCE = 1.0  # metres, keeps the path-loss log finite


def bs_grid(num_bs: int, area_side: float) -> np.ndarray:
    """Regular grid of BS positions, shape (N, 2).

    For a square N this is the usual sqrt(N) x sqrt(N) layout with a half-pitch
    margin (25 BSs in 2 km -> 400 m pitch, first site at 200 m).
    """
    cols = math.ceil(math.sqrt(num_bs))
    rows = math.ceil(num_bs / cols)
    px, py = area_side / cols, area_side / rows
    pts = [((c + 0.5) * px, (r + 0.5) * py) for r in range(rows) for c in range(cols)]
    return np.array(pts[:num_bs], dtype=float)


def path_loss_db(distance):
    d = np.maximum(np.asarray(distance, dtype=float), MIN_DISTANCE)
    return 127.0 + 30.0 * np.log10(d / 1000.0)


def large_scale_gain(distance):
    """Linear large-scale power gain for a distance in metres."""
    gain = 10.0 ** (-path_loss_db(distance) / 10.0)
    return float(gain) if np.ndim(gain) == 0 else gain


def sample_small_scale(rng: np.random.Generator, size=None):
    """Rayleigh block fading: unit-mean exponential power gain."""
    return rng.exponential(1.0, size)


def draw_compute_rates(rng: np.random.Generator, num_bs: int, lo: float, hi: float) -> np.ndarray:
    """Per-frame CPU rate of every BS, uniform on [lo, hi]."""
    if lo == hi:
        return np.full(num_bs, float(lo))
    return rng.uniform(lo, hi, num_bs)


@dataclass(frozen=True)
class RwpState:
    position: tuple[float, float]
    waypoint: tuple[float, float]
    speed: float


def rwp_advance(state: RwpState, duration: float, rng: np.random.Generator,
                area_side: float) -> RwpState:
    """Move along straight legs toward successive uniform waypoints.

    Pause time and static probability are zero: on reaching a waypoint a new
    one is drawn immediately and the leftover distance is spent on it.
    """
    x, y = state.position
    wx, wy = state.waypoint
    remaining = state.speed * duration
    while remaining > 0:
        dist = math.hypot(wx - x, wy - y)
        if dist <= remaining:
            x, y = wx, wy
            remaining -= dist
            wx, wy = rng.uniform(0.0, area_side, 2)
        else:
            frac = remaining / dist
            x += (wx - x) * frac
            y += (wy - y) * frac
            remaining = 0.0
    return RwpState((x, y), (wx, wy), state.speed)


def initial_rwp(rng: np.random.Generator, area_side: float, speed: float) -> RwpState:
    x, y, wx, wy = rng.uniform(0.0, area_side, 4)
    return RwpState((x, y), (wx, wy), speed)


class World:
    """Per-replication physical environment for one or many users.

    User ``i`` owns mobility substream ``i``; the single-user simulator is user 0.
    """

    def __init__(self, cfg: ScenarioConfig, streams: RngStreams, num_users: int = 1,
                 speeds=None):
        self.cfg = cfg
        self.streams = streams
        self.bs_positions = bs_grid(cfg.num_bs, cfg.area_side)
        if speeds is None:
            speeds = [cfg.user_speed] * num_users
        if len(speeds) != num_users:
            raise ValueError("need one speed per user")
        self._mob = [streams.mobility(i) for i in range(num_users)]
        self.users = [initial_rwp(rng, cfg.area_side, float(v))
                      for rng, v in zip(self._mob, speeds)]

    @property
    def num_users(self) -> int:
        return len(self.users)

    def positions(self) -> np.ndarray:
        return np.array([u.position for u in self.users])

    def distances(self) -> np.ndarray:
        """User-to-BS distances, shape (M, N)."""
        diff = self.positions()[:, None, :] - self.bs_positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def large_scale(self) -> np.ndarray:
        """H_n for every user and BS at the current positions, shape (M, N)."""
        return large_scale_gain(self.distances())

    def compute_rates(self, k: int) -> np.ndarray:
        lo, hi = self.cfg.compute_rate_range
        return draw_compute_rates(self.streams.generator(COMPUTE, k), self.cfg.num_bs, lo, hi)

    def advance(self, duration: float) -> None:
        side = self.cfg.area_side
        self.users = [rwp_advance(u, duration, rng, side) for u, rng in zip(self.users, self._mob)]


def draw_user_speeds(streams: RngStreams, num_users: int, choices) -> list[float]:
    rng = streams.generator(SPEED)
    return [float(v) for v in rng.choice(np.asarray(choices, dtype=float), num_users)]


def dump_trajectory(cfg: ScenarioConfig, path, frames: int | None = None) -> None:
    """Write (frame, x, y, distance to each BS) rows for the single user."""
    world = World(cfg, RngStreams(cfg.seed))
    frames = cfg.schedule.horizon if frames is None else frames
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "x", "y"] + [f"d_bs{n}" for n in range(cfg.num_bs)])
        for k in range(frames):
            x, y = world.users[0].position
            w.writerow([k, f"{x:.3f}", f"{y:.3f}"] + [f"{d:.3f}" for d in world.distances()[0]])
            world.advance(cfg.schedule.frame_duration)

"""Car-following episode ingestion, IDM synthesis, windowing, normalization.

Coordinate conventions: positions are 2-D world coordinates in meters, speeds
scalar m/s. Windows are normalized into an ego-centric frame where the
follower's last history position is the origin and the travel direction is +x.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

D = 2  # spatial dimensionality

CSV_HEADER = [
    "episode_id", "t", "x_lea", "y_lea", "v_lea",
    "x_fol", "y_fol", "v_fol", "scenario_tag",
]


class DataError(ValueError):
    pass


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class EpisodeInvariantError(DataError):
    pass


class GenerationError(DataError):
    pass


class DegenerateDirectionError(DataError):
    pass


@dataclass
class Episode:
    episode_id: str
    dt: float
    t: np.ndarray          # (N,) frame indices
    x_lea: np.ndarray      # (N, 2) leader positions [m]
    v_lea: np.ndarray      # (N,) leader speeds [m/s]
    x_fol: np.ndarray      # (N, 2) follower positions [m]
    v_fol: np.ndarray      # (N,) follower speeds [m/s]
    scenario_tag: str = "SYNTH"

    def __len__(self) -> int:
        return len(self.t)

    def validate(self):
        if self.dt <= 0:
            raise EpisodeInvariantError(f"{self.episode_id}: dt must be positive")
        if len(self.t) < 2:
            raise EpisodeInvariantError(f"{self.episode_id}: needs at least 2 frames")
        dts = np.diff(self.t)
        if np.any(dts <= 0):
            raise EpisodeInvariantError(
                f"{self.episode_id}: frame indices not strictly increasing")
        if np.any(dts != dts[0]):
            raise EpisodeInvariantError(
                f"{self.episode_id}: frame spacing not constant")
        if np.any(self.v_lea < 0) or np.any(self.v_fol < 0):
            raise EpisodeInvariantError(f"{self.episode_id}: negative speed")
        gaps = self.longitudinal_spacing()
        if np.any(gaps <= 0):
            bad = int(np.argmax(gaps <= 0))
            raise EpisodeInvariantError(
                f"{self.episode_id}: non-positive spacing at frame {bad}")
        return self

    def longitudinal_spacing(self) -> np.ndarray:
        """Leader-minus-follower separation projected on the travel direction."""
        heading = np.diff(self.x_fol, axis=0)
        heading = np.vstack([heading, heading[-1:]])
        norms = np.linalg.norm(heading, axis=1, keepdims=True)
        # stationary frames fall back to the leader-relative direction
        rel = self.x_lea - self.x_fol
        rel_norm = np.linalg.norm(rel, axis=1, keepdims=True)
        unit = np.where(norms > 1e-9, heading / np.maximum(norms, 1e-300),
                        rel / np.maximum(rel_norm, 1e-300))
        return np.sum(rel * unit, axis=1)


@dataclass
class SampleWindow:
    x_fol_his: np.ndarray   # (T_his, 2)
    v_fol_his: np.ndarray   # (T_his, 1)
    x_lea_his: np.ndarray   # (T_his, 2)
    v_lea_his: np.ndarray   # (T_his, 1)
    dx_his: np.ndarray      # (T_his, 2) leader minus follower
    dv_his: np.ndarray      # (T_his, 1) leader minus follower
    x_fol_fut: np.ndarray   # (T_fut, 2)
    x_lea_fut: np.ndarray   # (T_fut, 2)
    e_d: np.ndarray         # (2,) unit travel direction
    dt: float
    scenario_tag: str = "SYNTH"
    episode_id: str = ""
    frame_origin: Optional["FrameOrigin"] = None


@dataclass
class FrameOrigin:
    """Rigid transform used to normalize a window (world -> ego frame)."""
    origin: np.ndarray  # (2,) world position mapped to (0, 0)
    theta: float        # world heading angle rotated onto +x


@dataclass
class IDMParams:
    v0: float = 15.0        # desired speed [m/s]
    s0: float = 2.0         # minimum gap [m]
    headway: float = 1.5    # desired time headway [s]
    a_max: float = 1.5      # maximum acceleration [m/s^2]
    b_comf: float = 2.0     # comfortable deceleration [m/s^2]
    delta: float = 4.0      # acceleration exponent

    def validate(self):
        for name in ("v0", "s0", "headway", "a_max", "b_comf"):
            if getattr(self, name) <= 0:
                raise DataError(f"IDM parameter {name} must be positive")
        return self


def idm_acceleration(v: float, v_lead: float, gap: float, p: IDMParams) -> float:
    """IDM acceleration law for a follower at speed v behind a leader."""
    dv = v - v_lead  # closing rate
    s_star = p.s0 + v * p.headway + v * dv / (2.0 * math.sqrt(p.a_max * p.b_comf))
    s_star = max(s_star, 0.0)
    return p.a_max * (1.0 - (v / p.v0) ** p.delta - (s_star / gap) ** 2)


def idm_equilibrium_gap(v: float, p: IDMParams) -> float:
    """Steady-state gap at constant speed v (zero acceleration, zero closing rate)."""
    free = 1.0 - (v / p.v0) ** p.delta
    if free <= 0:
        raise DataError("equilibrium undefined at or above the desired speed")
    return (p.s0 + v * p.headway) / math.sqrt(free)


def _leader_speed_profile(profile: str, n: int, dt: float,
                          rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) * dt
    if profile == "constant":
        v = np.full(n, rng.uniform(8.0, 12.0))
    elif profile == "sinusoidal-speed":
        base = rng.uniform(8.0, 12.0)
        amp = rng.uniform(2.0, min(4.0, base - 1.0))
        period = rng.uniform(20.0, 40.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        v = base + amp * np.sin(2.0 * math.pi * t / period + phase)
    elif profile == "stop-and-go":
        # trapezoidal speed wave: accelerate, cruise, decelerate, creep
        v_hi = rng.uniform(8.0, 12.0)
        v_lo = rng.uniform(0.5, 2.0)
        accel = rng.uniform(0.8, 1.2)
        hold = rng.uniform(4.0, 8.0)
        phase = rng.uniform(0.0, 1.0)
        ramp = (v_hi - v_lo) / accel
        cycle = 2.0 * ramp + 2.0 * hold
        tau = (t + phase * cycle) % cycle
        v = np.where(
            tau < ramp, v_lo + accel * tau,
            np.where(tau < ramp + hold, v_hi,
                     np.where(tau < 2.0 * ramp + hold,
                              v_hi - accel * (tau - ramp - hold), v_lo)))
    else:
        raise DataError(f"unknown leader profile {profile!r}")
    return np.maximum(v, 0.0)


def generate_idm_episodes(n: int, horizon: int, dt: float,
                          idm_params: IDMParams = IDMParams(),
                          leader_profile: str = "constant",
                          seed: int = 0,
                          scenario_tag: str = "SYNTH") -> List[Episode]:
    """Synthesize leader/follower episodes by integrating the IDM law.

    The follower starts at its equilibrium gap for the leader's initial speed
    and is integrated semi-implicitly (speed first, then position) at step dt.
    Identical (params, seed) inputs give bit-identical output.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    if horizon < 2:
        raise DataError("horizon must be >= 2")
    idm_params.validate()
    rng = np.random.default_rng(seed)
    episodes = []
    for i in range(n):
        v_lead = _leader_speed_profile(leader_profile, horizon, dt, rng)
        x_lead = np.zeros(horizon)
        for k in range(1, horizon):
            x_lead[k] = x_lead[k - 1] + v_lead[k] * dt
        v_init = min(v_lead[0], 0.95 * idm_params.v0)
        gap0 = idm_equilibrium_gap(max(v_init, 0.5), idm_params)
        x_fol = np.zeros(horizon)
        v_fol = np.zeros(horizon)
        x_fol[0] = x_lead[0] - gap0
        v_fol[0] = v_init
        for k in range(1, horizon):
            gap = x_lead[k - 1] - x_fol[k - 1]
            if gap <= 0:
                raise GenerationError(
                    f"collision during integration of episode {i} at frame {k}")
            a = idm_acceleration(v_fol[k - 1], v_lead[k - 1], gap, idm_params)
            v_fol[k] = max(v_fol[k - 1] + a * dt, 0.0)
            x_fol[k] = x_fol[k - 1] + v_fol[k] * dt
        if np.any(x_lead - x_fol <= 0):
            raise GenerationError(f"collision in generated episode {i}")
        # shift so the follower starts at the origin; motion along +x
        offset = x_fol[0]
        episodes.append(Episode(
            episode_id=f"idm-{seed}-{i:04d}",
            dt=dt,
            t=np.arange(horizon),
            x_lea=np.stack([x_lead - offset, np.zeros(horizon)], axis=1),
            v_lea=v_lead,
            x_fol=np.stack([x_fol - offset, np.zeros(horizon)], axis=1),
            v_fol=v_fol,
            scenario_tag=scenario_tag,
        ).validate())
    return episodes


def save_episodes(episodes: Sequence[Episode], path: str):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for ep in episodes:
            for k in range(len(ep)):
                writer.writerow([
                    ep.episode_id, int(ep.t[k]),
                    repr(float(ep.x_lea[k, 0])), repr(float(ep.x_lea[k, 1])),
                    repr(float(ep.v_lea[k])),
                    repr(float(ep.x_fol[k, 0])), repr(float(ep.x_fol[k, 1])),
                    repr(float(ep.v_fol[k])), ep.scenario_tag,
                ])


def load_episodes(path: str, dt_expected: float,
                  strict: bool = True) -> List[Episode]:
    """Load episodes from CSV, grouped by episode_id with frames sorted.

    With strict=True any invariant violation raises; with strict=False
    offending episodes are collected and reported in a single exception-free
    pass via the returned (episodes, rejected) of load_episodes_report.
    """
    episodes, rejected = load_episodes_report(path, dt_expected)
    if strict and rejected:
        eid, reason = rejected[0]
        raise EpisodeInvariantError(f"episode {eid}: {reason}")
    return episodes


def load_episodes_report(path: str, dt_expected: float
                         ) -> Tuple[List[Episode], List[Tuple[str, str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header required")
        if header != CSV_HEADER:
            raise SchemaError(f"{path}: bad header {header!r}")
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(f"{path}:{lineno}: expected "
                                 f"{len(CSV_HEADER)} fields, got {len(row)}")
            try:
                rec = (float(row[1]), float(row[2]), float(row[3]),
                       float(row[4]), float(row[5]), float(row[6]),
                       float(row[7]), row[8])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if rec[3] < 0 or rec[6] < 0:
                raise ParseError(f"{path}:{lineno}: negative speed")
            rows.setdefault(row[0], []).append(rec)
    episodes, rejected = [], []
    for eid, recs in rows.items():
        recs.sort(key=lambda r: r[0])
        t_raw = np.array([r[0] for r in recs])
        frames, reason = _frame_indices(t_raw, dt_expected)
        if reason is not None:
            raise SchemaError(f"{path}: episode {eid}: {reason}")
        ep = Episode(
            episode_id=eid,
            dt=dt_expected,
            t=frames,
            x_lea=np.array([[r[1], r[2]] for r in recs]),
            v_lea=np.array([r[3] for r in recs]),
            x_fol=np.array([[r[4], r[5]] for r in recs]),
            v_fol=np.array([r[6] for r in recs]),
            scenario_tag=recs[0][7],
        )
        try:
            ep.validate()
        except EpisodeInvariantError as exc:
            rejected.append((eid, str(exc)))
            continue
        episodes.append(ep)
    return episodes, rejected


def _frame_indices(t_raw: np.ndarray, dt_expected: float):
    """Accept integer frame indices, or timestamps whose step must match dt."""
    if np.allclose(t_raw, np.round(t_raw), atol=1e-9):
        return np.round(t_raw).astype(int), None
    steps = np.diff(t_raw)
    if len(steps) and np.any(np.abs(steps - dt_expected) > 1e-6):
        return None, (f"timestamp step {steps[0]:.6f} s does not match "
                      f"dt={dt_expected} s")
    return np.round(t_raw / dt_expected).astype(int), None


def window_samples(episode: Episode, t_his: int, t_fut: int,
                   stride: int = 1) -> List[SampleWindow]:
    """Cut fixed-length (history, future) windows at offsets 0, stride, 2*stride..."""
    n = len(episode)
    total = t_his + t_fut
    windows = []
    for start in range(0, n - total + 1, stride):
        h = slice(start, start + t_his)
        f = slice(start + t_his, start + total)
        windows.append(SampleWindow(
            x_fol_his=episode.x_fol[h].copy(),
            v_fol_his=episode.v_fol[h, None].copy(),
            x_lea_his=episode.x_lea[h].copy(),
            v_lea_his=episode.v_lea[h, None].copy(),
            dx_his=(episode.x_lea[h] - episode.x_fol[h]),
            dv_his=(episode.v_lea[h, None] - episode.v_fol[h, None]),
            x_fol_fut=episode.x_fol[f].copy(),
            x_lea_fut=episode.x_lea[f].copy(),
            e_d=_travel_direction(episode.x_fol[h]),
            dt=episode.dt,
            scenario_tag=episode.scenario_tag,
            episode_id=episode.episode_id,
        ))
    return windows


def _travel_direction(x_his: np.ndarray) -> np.ndarray:
    d = x_his[-1] - x_his[-2]
    norm = np.linalg.norm(d)
    if norm < 1e-12:
        raise DegenerateDirectionError(
            "zero displacement over the last two history frames")
    return d / norm


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def normalize(sample: SampleWindow) -> SampleWindow:
    """Rigid transform into the ego frame: follower's last history point at the
    origin, travel direction along +x."""
    origin = sample.x_fol_his[-1].copy()
    d = sample.x_fol_his[-1] - sample.x_fol_his[-2]
    if np.linalg.norm(d) < 1e-12:
        raise DegenerateDirectionError(
            "zero displacement over the last two history frames")
    theta = math.atan2(d[1], d[0])
    rot = _rotation(-theta)

    def pos(a):
        return (a - origin) @ rot.T

    def vec(a):
        return a @ rot.T

    return SampleWindow(
        x_fol_his=pos(sample.x_fol_his),
        v_fol_his=sample.v_fol_his.copy(),
        x_lea_his=pos(sample.x_lea_his),
        v_lea_his=sample.v_lea_his.copy(),
        dx_his=vec(sample.dx_his),
        dv_his=sample.dv_his.copy(),
        x_fol_fut=pos(sample.x_fol_fut),
        x_lea_fut=pos(sample.x_lea_fut),
        e_d=np.array([1.0, 0.0]),
        dt=sample.dt,
        scenario_tag=sample.scenario_tag,
        episode_id=sample.episode_id,
        frame_origin=FrameOrigin(origin=origin, theta=theta),
    )


def denormalize(traj: np.ndarray, frame_origin: FrameOrigin) -> np.ndarray:
    """Map an ego-frame trajectory (..., 2) back to world coordinates."""
    rot = _rotation(frame_origin.theta)
    return traj @ rot.T + frame_origin.origin

"""Deterministic 2D world standing in for the robot and its sensors.

An arena of wall segments and small circular clutter (table legs,
railing bars) contains waypoint-walking humans and a wandering robot.
Humans are two leg circles swinging in anti-phase about a pelvis point;
the LiDARs see the legs while the camera detector reports the pelvis,
which recreates the cross-modal gap between scans and labels.  Every
random draw comes from named streams of one master seed, so an episode
is a pure function of its config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Point2D, Pose2D, compose, inverse, relative_pose, transform_point, wrap_angle
from .lidar import RawScan, SensorConfig, back_sensor, front_sensor
from .supervision import (
    CAMERA_DROPOUT,
    CAMERA_HEADING_SIGMA,
    CAMERA_POSITION_SIGMA,
    CameraConfig,
    PAN_LIMIT,
    PersonObservation,
)
from .util import rng_stream

SUBSTEP_RATE = 30.0  # Hz; least common multiple of the two scanner rates
TICK_RATE = 10.0  # Hz; back scans, camera, and ground truth land on ticks
TICK_DT = 1.0 / TICK_RATE


@dataclass(frozen=True)
class WorldConfig:
    name: str
    arena: tuple[float, float]  # width, height in meters
    static_circles: tuple = ()  # (x, y, radius) clutter
    static_segments: tuple = ()  # ((x1,y1),(x2,y2)) interior walls
    num_humans: int = 3
    human_speed: tuple[float, float] = (0.3, 1.4)  # m/s sampling range
    leg_radius: float = 0.07
    leg_separation: float = 0.25  # meters between leg centers
    gait_amplitude: float = 0.15  # longitudinal swing at full speed
    stride_length: float = 0.7  # meters per gait cycle
    robot_speed: tuple[float, float] = (0.1, 0.5)
    robot_turn_rate: float = 0.6  # rad/s command bound
    robot_radius: float = 0.3
    clearance: float = 0.3  # minimum gap humans/robot keep
    head_pan_sigma: float = math.radians(5.0)  # random-walk step per tick
    odom_noise: tuple[float, float, float] = (0.002, 0.002, 0.0015)  # sigma per tick
    cam_position_sigma: float = CAMERA_POSITION_SIGMA
    cam_heading_sigma: float = CAMERA_HEADING_SIGMA
    cam_dropout: float = CAMERA_DROPOUT
    rng_seed: int = 0

    def __post_init__(self):
        w, h = self.arena
        if w <= 1.0 or h <= 1.0:
            raise ValueError(f"arena {self.arena} too small to hold the robot")
        if self.num_humans < 0:
            raise ValueError("num_humans must be >= 0")
        lo, hi = self.human_speed
        if not 0 <= lo <= hi:
            raise ValueError(f"bad human_speed range {self.human_speed}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "arena": list(self.arena),
            "static_circles": [list(c) for c in self.static_circles],
            "static_segments": [[list(p), list(q)] for p, q in self.static_segments],
            "num_humans": self.num_humans,
            "human_speed": list(self.human_speed),
            "leg_radius": self.leg_radius,
            "leg_separation": self.leg_separation,
            "gait_amplitude": self.gait_amplitude,
            "stride_length": self.stride_length,
            "robot_speed": list(self.robot_speed),
            "robot_turn_rate": self.robot_turn_rate,
            "robot_radius": self.robot_radius,
            "clearance": self.clearance,
            "head_pan_sigma": self.head_pan_sigma,
            "odom_noise": list(self.odom_noise),
            "cam_position_sigma": self.cam_position_sigma,
            "cam_heading_sigma": self.cam_heading_sigma,
            "cam_dropout": self.cam_dropout,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorldConfig":
        d = dict(data)
        d["arena"] = tuple(d["arena"])
        d["static_circles"] = tuple(tuple(c) for c in d.get("static_circles", ()))
        d["static_segments"] = tuple(
            (tuple(p), tuple(q)) for p, q in d.get("static_segments", ())
        )
        d["human_speed"] = tuple(d["human_speed"])
        d["robot_speed"] = tuple(d["robot_speed"])
        d["odom_noise"] = tuple(d["odom_noise"])
        return cls(**d)

    def with_overrides(self, overrides: dict) -> "WorldConfig":
        """New config with some fields replaced (rejects unknown keys)."""
        merged = self.to_dict()
        for key in overrides:
            if key not in merged:
                raise ValueError(f"unknown world config field {key!r}")
        merged.update(overrides)
        return WorldConfig.from_dict(merged)


@dataclass
class HumanState:
    pose: Pose2D  # pelvis, world frame, heading = walk direction
    speed: float  # m/s, fixed per human
    phase: float  # gait phase, radians
    waypoint: tuple[float, float]


@dataclass
class WorldState:
    time: float
    robot_true: Pose2D
    robot_odom: Pose2D
    head_pan: float
    humans: list
    robot_cmd: tuple[float, float]  # commanded (v, omega)
    cmd_steps_left: int


# ---------------------------------------------------------------------------
# scene geometry

def world_segments(config: WorldConfig) -> np.ndarray:
    """All wall segments as (M, 4) rows x1,y1,x2,y2 (arena boundary first)."""
    w, h = config.arena
    segs = [(0, 0, w, 0), (w, 0, w, h), (w, h, 0, h), (0, h, 0, 0)]
    for (x1, y1), (x2, y2) in config.static_segments:
        segs.append((x1, y1, x2, y2))
    return np.asarray(segs, dtype=float)


def leg_circles(human: HumanState, config: WorldConfig) -> np.ndarray:
    """The two leg circles of one human, (2, 3) rows x,y,r."""
    swing = config.gait_amplitude * min(human.speed, 1.4) / 1.4
    c, s = math.cos(human.pose.heading), math.sin(human.pose.heading)
    half = config.leg_separation / 2
    longi = swing * math.sin(human.phase)
    x, y = human.pose.x, human.pose.y
    return np.array(
        [
            [x - s * half + c * longi, y + c * half + s * longi, config.leg_radius],
            [x + s * half - c * longi, y - c * half - s * longi, config.leg_radius],
        ]
    )


def scene_circles(state: WorldState, config: WorldConfig,
                  include_humans: bool = True) -> np.ndarray:
    parts = [np.asarray(config.static_circles, dtype=float).reshape(-1, 3)]
    if include_humans:
        for human in state.humans:
            parts.append(leg_circles(human, config))
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


def raycast_distances(origin, angles, segments: np.ndarray,
                      circles: np.ndarray) -> np.ndarray:
    """Nearest hit distance per ray angle; inf where nothing is hit."""
    ox, oy = origin
    angles = np.asarray(angles, dtype=float)
    ux, uy = np.cos(angles), np.sin(angles)
    best = np.full(angles.shape, np.inf)

    if segments.size:
        px, py = segments[:, 0], segments[:, 1]
        dx, dy = segments[:, 2] - px, segments[:, 3] - py
        denom = ux[:, None] * dy - uy[:, None] * dx  # cross(u, d)
        rx, ry = px - ox, py - oy
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (rx * dy - ry * dx) / denom
            s = (rx * uy[:, None] - ry * ux[:, None]) / denom
        valid = (np.abs(denom) > 1e-12) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0)
        t = np.where(valid, t, np.inf)
        best = np.minimum(best, t.min(axis=1))

    if circles.size:
        cx, cy, r = circles[:, 0], circles[:, 1], circles[:, 2]
        ex, ey = cx - ox, cy - oy
        b = ux[:, None] * ex + uy[:, None] * ey  # ray-parameter of the foot point
        cc = ex * ex + ey * ey - r * r
        disc = b * b - cc
        with np.errstate(invalid="ignore"):
            root = np.sqrt(np.maximum(disc, 0.0))
        t1, t2 = b - root, b + root
        t = np.where(t1 > 1e-9, t1, np.where(t2 > 1e-9, t2, np.inf))
        t = np.where(disc >= 0.0, t, np.inf)
        best = np.minimum(best, t.min(axis=1))
    return best


def raycast(state: WorldState, sensor: SensorConfig, sensor_id: str,
            config: WorldConfig) -> RawScan:
    """Scan the true world from a sensor mounted on the robot."""
    pose = compose(state.robot_true, sensor.mount_pose)
    angles = pose.heading + sensor.beam_angles()
    dists = raycast_distances(
        (pose.x, pose.y), angles, world_segments(config), scene_circles(state, config)
    )
    ranges = np.where(
        dists <= sensor.d_max, np.maximum(dists, sensor.d_min), np.nan
    )
    return RawScan(sensor_id=sensor_id, timestamp=state.time, ranges=ranges)


# ---------------------------------------------------------------------------
# motion

def _point_segment_dist(p, segments: np.ndarray) -> float:
    if not segments.size:
        return math.inf
    px, py = p
    ax, ay = segments[:, 0], segments[:, 1]
    dx, dy = segments[:, 2] - ax, segments[:, 3] - ay
    length2 = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / np.maximum(length2, 1e-12), 0, 1)
    qx, qy = ax + t * dx, ay + t * dy
    return float(np.sqrt((px - qx) ** 2 + (py - qy) ** 2).min())


def _position_clear(p, radius: float, config: WorldConfig, segments: np.ndarray,
                    others, robot_xy=None) -> bool:
    """Clearance test against walls, clutter, other agents, and the robot."""
    w, h = config.arena
    margin = radius
    if not (margin <= p[0] <= w - margin and margin <= p[1] <= h - margin):
        return False
    if _point_segment_dist(p, segments[4:]) < radius:  # interior walls only
        return False
    if _point_segment_dist(p, segments[:4]) < radius:
        return False
    for cx, cy, r in config.static_circles:
        if math.hypot(p[0] - cx, p[1] - cy) < r + radius:
            return False
    for q in others:
        if math.hypot(p[0] - q[0], p[1] - q[1]) < config.clearance:
            return False
    if robot_xy is not None:
        if math.hypot(p[0] - robot_xy[0], p[1] - robot_xy[1]) < (
            config.robot_radius + config.clearance
        ):
            return False
    return True


def _sample_clear_point(rng, config: WorldConfig, segments: np.ndarray, radius: float,
                        others, robot_xy=None, tries: int = 200):
    w, h = config.arena
    for _ in range(tries):
        p = (rng.uniform(radius, w - radius), rng.uniform(radius, h - radius))
        if _position_clear(p, radius, config, segments, others, robot_xy):
            return p
    raise RuntimeError(
        f"could not place an agent in arena {config.arena} after {tries} tries"
    )


def init_state(config: WorldConfig, rng) -> WorldState:
    segments = world_segments(config)
    robot_xy = _sample_clear_point(rng, config, segments,
                                   config.robot_radius + config.clearance, [])
    robot = Pose2D(robot_xy[0], robot_xy[1], rng.uniform(-math.pi, math.pi))
    humans = []
    placed = []
    for _ in range(config.num_humans):
        p = _sample_clear_point(rng, config, segments, config.clearance, placed,
                                (robot.x, robot.y))
        placed.append(p)
        wp = _sample_clear_point(rng, config, segments, config.clearance, [],
                                 (robot.x, robot.y))
        speed = rng.uniform(*config.human_speed)
        heading = math.atan2(wp[1] - p[1], wp[0] - p[0])
        humans.append(
            HumanState(
                pose=Pose2D(p[0], p[1], heading),
                speed=speed,
                phase=rng.uniform(0, 2 * math.pi),
                waypoint=wp,
            )
        )
    return WorldState(
        time=0.0,
        robot_true=robot,
        robot_odom=robot,
        head_pan=0.0,
        humans=humans,
        robot_cmd=(0.0, 0.0),
        cmd_steps_left=0,
    )


def step(state: WorldState, config: WorldConfig, rng,
         dt: float = TICK_DT) -> WorldState:
    """Advance the world by dt seconds.

    Noise sigmas in the config are per 0.1 s tick; sub-tick steps scale
    them by sqrt(dt / 0.1) so the per-tick variance is preserved.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    segments = world_segments(config)
    noise_scale = math.sqrt(dt / TICK_DT)

    # robot random walk with collision avoidance
    v, omega = state.robot_cmd
    steps_left = state.cmd_steps_left - 1
    if steps_left <= 0:
        v = rng.uniform(*config.robot_speed)
        omega = rng.uniform(-config.robot_turn_rate, config.robot_turn_rate)
        steps_left = max(1, int(round(2.0 / dt)))
    rt = state.robot_true
    heading = wrap_angle(rt.heading + omega * dt)
    candidate = (rt.x + v * math.cos(rt.heading) * dt,
                 rt.y + v * math.sin(rt.heading) * dt)
    human_xy = [(h.pose.x, h.pose.y) for h in state.humans]
    if _position_clear(candidate, config.robot_radius + config.clearance, config,
                       segments, human_xy):
        new_true = Pose2D(candidate[0], candidate[1], heading)
    else:  # blocked: pivot in place and draw a fresh command next substep
        new_true = Pose2D(rt.x, rt.y, wrap_angle(rt.heading + config.robot_turn_rate * dt))
        v = 0.0
        steps_left = 0

    # humans walk toward their waypoints
    new_humans = []
    occupied = []
    for idx, human in enumerate(state.humans):
        px, py = human.pose.x, human.pose.y
        wp = human.waypoint
        dist = math.hypot(wp[0] - px, wp[1] - py)
        if dist < 0.3:
            wp = _sample_clear_point(rng, config, segments, config.clearance, [],
                                     (new_true.x, new_true.y))
            dist = math.hypot(wp[0] - px, wp[1] - py)
        heading_h = math.atan2(wp[1] - py, wp[0] - px)
        cand = (px + human.speed * math.cos(heading_h) * dt,
                py + human.speed * math.sin(heading_h) * dt)
        neighbors = occupied + [(h.pose.x, h.pose.y) for h in state.humans[idx + 1:]]
        if _position_clear(cand, config.clearance, config, segments, neighbors,
                           (new_true.x, new_true.y)):
            pos = cand
            phase = human.phase + 2 * math.pi * (human.speed / config.stride_length) * dt
        else:  # blocked: stand still, swap destinations
            pos = (px, py)
            phase = human.phase
            wp = _sample_clear_point(rng, config, segments, config.clearance, [],
                                     (new_true.x, new_true.y))
        occupied.append(pos)
        new_humans.append(
            HumanState(
                pose=Pose2D(pos[0], pos[1], heading_h),
                speed=human.speed,
                phase=phase,
                waypoint=wp,
            )
        )

    # odometry integrates the true increment plus drift noise
    delta = relative_pose(state.robot_true, new_true)
    sx, sy, sh = config.odom_noise
    noise = rng.normal(0.0, 1.0, size=3)
    noisy = Pose2D(
        delta.x + sx * noise_scale * noise[0],
        delta.y + sy * noise_scale * noise[1],
        wrap_angle(delta.heading + sh * noise_scale * noise[2]),
    )
    new_odom = compose(state.robot_odom, noisy)

    # the head pans on a bounded random walk, reflecting at the mechanical
    # stops, so the camera wedge sweeps the room independently of the people
    pan = state.head_pan + config.head_pan_sigma * noise_scale * rng.normal()
    if pan > PAN_LIMIT:
        pan = 2.0 * PAN_LIMIT - pan
    elif pan < -PAN_LIMIT:
        pan = -2.0 * PAN_LIMIT - pan
    pan = float(np.clip(pan, -PAN_LIMIT, PAN_LIMIT))

    return WorldState(
        time=state.time + dt,
        robot_true=new_true,
        robot_odom=new_odom,
        head_pan=pan,
        humans=new_humans,
        robot_cmd=(v, omega),
        cmd_steps_left=steps_left,
    )


# ---------------------------------------------------------------------------
# camera detector and ground truth

def _pelvis_in_robot_frame(state: WorldState, human: HumanState) -> Pose2D:
    inv = inverse(state.robot_true)
    p = transform_point(inv, Point2D(human.pose.x, human.pose.y))
    return Pose2D(p.x, p.y, wrap_angle(human.pose.heading - state.robot_true.heading))


CAMERA_BODY_RADIUS = 0.2  # meters; how wide a person is as an occluder


def camera_detect(state: WorldState, cam: CameraConfig, config: WorldConfig,
                  rng) -> list:
    """Noisy pelvis observations for humans visible in the camera wedge.

    Visibility requires range within cam.max_range, bearing within the
    pan-adjusted FOV, and a line of sight blocked neither by static
    obstacles nor by another person's body.  Each visible human may drop
    out; survivors get position and heading jitter.  Draw order is fixed
    by human index.
    """
    segments = world_segments(config)
    statics = np.asarray(config.static_circles, dtype=float).reshape(-1, 3)
    bodies = np.array(
        [[h.pose.x, h.pose.y, CAMERA_BODY_RADIUS] for h in state.humans]
    ).reshape(-1, 3)
    out = []
    for idx, human in enumerate(state.humans):
        rel = _pelvis_in_robot_frame(state, human)
        rho = math.hypot(rel.x, rel.y)
        if rho < 1e-9 or rho > cam.max_range:
            continue
        bearing = math.atan2(rel.y, rel.x)
        if abs(wrap_angle(bearing - cam.pan)) > cam.hfov / 2:
            continue
        angle_world = state.robot_true.heading + bearing
        others = np.delete(bodies, idx, axis=0)
        occluders = np.concatenate([statics, others]) if others.size else statics
        hit = raycast_distances(
            (state.robot_true.x, state.robot_true.y), [angle_world],
            segments, occluders,
        )[0]
        if hit < rho - 1e-6:
            continue  # something solid sits in front of this person
        if rng.random() < config.cam_dropout:
            continue
        jitter = rng.normal(0.0, 1.0, size=3)
        pose = Pose2D(
            rel.x + config.cam_position_sigma * jitter[0],
            rel.y + config.cam_position_sigma * jitter[1],
            wrap_angle(rel.heading + config.cam_heading_sigma * jitter[2]),
        )
        out.append(PersonObservation(pose=pose, source="camera_detector"))
    return out


def ground_truth_observations(state: WorldState) -> list:
    """Exact pelvis poses of all humans, robot base frame."""
    return [
        PersonObservation(pose=_pelvis_in_robot_frame(state, h), source="ground_truth")
        for h in state.humans
    ]


# ---------------------------------------------------------------------------
# episode generation

def _pose_dict(pose: Pose2D) -> dict:
    return {"x": pose.x, "y": pose.y, "heading": pose.heading}


def generate_episode(config: WorldConfig, duration: float,
                     front: SensorConfig | None = None,
                     back: SensorConfig | None = None,
                     cam: CameraConfig | None = None):
    """Simulate and record one episode.

    The world advances at 30 Hz; front scans land on even substeps
    (15 Hz) and back scans plus camera/ground-truth ticks on every third
    substep (10 Hz).  Returns a datasets.Episode.
    """
    from .datasets import EPISODE_FORMAT, Episode

    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    front = front or front_sensor()
    back = back or back_sensor()
    cam = cam or CameraConfig()
    rng_world = rng_stream(config.rng_seed, "world")
    rng_cam = rng_stream(config.rng_seed, "camera")

    substeps = int(round(duration * SUBSTEP_RATE))
    dt = 1.0 / SUBSTEP_RATE
    state = init_state(config, rng_world)
    records = []
    for m in range(substeps):
        t = m / SUBSTEP_RATE
        state.time = t
        record = None
        if m % 2 == 0 or m % 3 == 0:
            record = {"timestamp": t, "odometry": _pose_dict(state.robot_odom)}
        if m % 2 == 0:
            record["front_scan"] = raycast(state, front, "front", config).ranges
        if m % 3 == 0:
            record["back_scan"] = raycast(state, back, "back", config).ranges
            record["head_pan"] = state.head_pan
            tick_cam = replace(cam, pan=state.head_pan)
            record["camera_detections"] = [
                _pose_dict(obs.pose)
                for obs in camera_detect(state, tick_cam, config, rng_cam)
            ]
            record["ground_truth"] = [
                _pose_dict(obs.pose) for obs in ground_truth_observations(state)
            ]
        if record is not None:
            records.append(record)
        state = step(state, config, rng_world, dt)

    header = {
        "format": EPISODE_FORMAT,
        "environment_name": config.name,
        "seed": config.rng_seed,
        "duration": duration,
        "tick_rate": TICK_RATE,
        "configs": {
            "world": config.to_dict(),
            "front_sensor": front.to_dict(),
            "back_sensor": back.to_dict(),
            "camera": {"hfov": cam.hfov, "max_range": cam.max_range},
        },
    }
    return Episode(header=header, records=records)


# ---------------------------------------------------------------------------
# environment presets

def _table_legs(cx: float, cy: float, half: float = 0.4,
                r: float = 0.025) -> list[tuple[float, float, float]]:
    return [
        (cx - half, cy - half, r),
        (cx + half, cy - half, r),
        (cx - half, cy + half, r),
        (cx + half, cy + half, r),
    ]


def environment_preset(name: str, seed: int, num_humans: int = 3) -> WorldConfig:
    """Three stock environments with distinct layouts and clutter.

    The rooms are deliberately small enough that people stay inside the
    camera's 6 m working range most of the time, which keeps the share of
    in-view persons the detector misses (and therefore mislabels) low.
    """
    if name == "hallway":
        segments = (
            ((1.6, 0.0), (1.6, 0.45)),
            ((4.8, 3.0), (4.8, 2.55)),
        )
        return WorldConfig(
            name=name, arena=(7.0, 3.0), static_segments=segments,
            num_humans=num_humans, rng_seed=seed,
        )
    if name == "lounge":
        circles = _table_legs(1.5, 1.2) + _table_legs(4.5, 3.3) + [(3.0, 2.2, 0.12)]
        segments = (((2.6, 0.0), (2.6, 0.8)),)
        return WorldConfig(
            name=name, arena=(6.0, 4.5), static_circles=tuple(circles),
            static_segments=segments, num_humans=num_humans, rng_seed=seed,
        )
    if name == "studio":
        circles = _table_legs(4.2, 1.1) + [(1.3, 3.0, 0.15)]
        return WorldConfig(
            name=name, arena=(5.5, 4.0), static_circles=tuple(circles),
            num_humans=num_humans, rng_seed=seed,
        )
    raise ValueError(f"unknown environment preset {name!r}; "
                     "expected hallway, lounge, or studio")

"""2D navigation simulator: bounded workspace with cylindrical obstacles
and labelled square regions, noisy differential-drive dynamics, the
labeling function and the 7-dimensional feature map."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

# Linear velocity in [-0.26, 0.26] m/s, angular in [-1.82, 1.82] rad/s.
# 23 actions: stop plus {half, full} forward speed times 11 evenly spaced
# turn rates.
U_MAX = 0.26
OMEGA_MAX = 1.82
N_ACTIONS = 23


def build_action_set() -> np.ndarray:
    omegas = np.linspace(-OMEGA_MAX, OMEGA_MAX, 11)
    rows = [(0.0, 0.0)]
    for u in (U_MAX / 2, U_MAX):
        rows.extend((u, w) for w in omegas)
    return np.array(rows)


ACTIONS = build_action_set()


class SamplingBudgetExceeded(RuntimeError):
    pass


class PlacementBudgetExceeded(RuntimeError):
    pass


def wrap_angle(theta: float) -> float:
    """Wrap into (-pi, pi]."""
    w = (theta + math.pi) % (2.0 * math.pi) - math.pi
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class AgentState:
    p1: float
    p2: float
    theta: float

    def position(self) -> np.ndarray:
        return np.array([self.p1, self.p2])


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float


@dataclass(frozen=True)
class Region:
    center: tuple
    half_width: float

    def contains(self, p1: float, p2: float) -> bool:
        return (abs(p1 - self.center[0]) <= self.half_width
                and abs(p2 - self.center[1]) <= self.half_width)


@dataclass(frozen=True)
class Environment:
    """Workspace geometry plus dynamics parameters.

    noise_scale is the standard deviation of the additive actuation noise;
    construct via make_environment to specify it as a variance instead.
    """

    bounds: tuple = (10.0, 10.0)
    obstacles: tuple = ()
    regions: dict = field(default_factory=dict)
    dt: float = 0.5
    noise_mean: float = 2e-3
    noise_scale: float = math.sqrt(1e-3)
    env_id: str = ""
    group: str = ""


def make_environment(bounds=(10.0, 10.0), obstacles=(), regions=None, dt=0.5,
                     noise_mean=2e-3, noise_var=None, noise_std=None,
                     env_id="", group="") -> Environment:
    """Environment constructor taking the noise spread as either a variance
    (default 1e-3) or a standard deviation."""
    if noise_var is not None and noise_std is not None:
        raise ValueError("give noise_var or noise_std, not both")
    if noise_std is None:
        noise_std = math.sqrt(1e-3 if noise_var is None else noise_var)
    return Environment(bounds=tuple(bounds), obstacles=tuple(obstacles),
                       regions=dict(regions or {}), dt=dt,
                       noise_mean=noise_mean, noise_scale=noise_std,
                       env_id=env_id, group=group)


def step_dynamics(env: Environment, x: AgentState, a: int, rng=None,
                  noise: bool = True) -> AgentState:
    """One Euler step of the unicycle model with additive actuation noise
    drawn as N(noise_mean, noise_scale^2) on each velocity channel.

    The position update uses the pre-update heading; positions clamp to the
    workspace bounds. Collisions are detected by the labeling function, not
    here.
    """
    u, omega = ACTIONS[a]
    if noise:
        u = u + rng.normal(env.noise_mean, env.noise_scale)
        omega = omega + rng.normal(env.noise_mean, env.noise_scale)
    theta = wrap_angle(x.theta + omega * env.dt)
    p1 = min(max(x.p1 + u * env.dt * math.cos(x.theta), 0.0), env.bounds[0])
    p2 = min(max(x.p2 + u * env.dt * math.sin(x.theta), 0.0), env.bounds[1])
    return AgentState(p1, p2, theta)


def label(env: Environment, x: AgentState) -> frozenset:
    """Atomic propositions holding at x: one atom per containing region,
    plus 'obs' when strictly inside any obstacle disk."""
    out = set()
    for name, region in env.regions.items():
        if region.contains(x.p1, x.p2):
            out.add(name)
    for ob in env.obstacles:
        if math.hypot(x.p1 - ob.center[0], x.p2 - ob.center[1]) < ob.radius:
            out.add("obs")
            break
    return frozenset(out)


def features(env: Environment, x: AgentState) -> np.ndarray:
    """[l1, rho1, l2, rho2, p1, p2, theta]: surface distance and relative
    bearing to the nearest and second-nearest obstacle, then the pose.

    Distance ties break by obstacle index order.
    """
    if len(env.obstacles) < 2:
        raise ValueError("feature map needs at least 2 obstacles")
    ranked = sorted(
        range(len(env.obstacles)),
        key=lambda i: (
            max(0.0, math.hypot(x.p1 - env.obstacles[i].center[0],
                                x.p2 - env.obstacles[i].center[1])
                - env.obstacles[i].radius),
            i,
        ),
    )
    out = []
    for i in ranked[:2]:
        ob = env.obstacles[i]
        dx, dy = ob.center[0] - x.p1, ob.center[1] - x.p2
        dist = max(0.0, math.hypot(dx, dy) - ob.radius)
        bearing = wrap_angle(math.atan2(dy, dx) - x.theta)
        out.extend([dist, bearing])
    out.extend([x.p1, x.p2, x.theta])
    return np.array(out)


def sample_initial_state(env: Environment, rng, budget: int = 10_000) -> AgentState:
    """Uniform rejection sample over obstacle-free, region-free space with
    heading uniform in (-pi, pi]."""
    for _ in range(budget):
        p1 = rng.uniform(0.0, env.bounds[0])
        p2 = rng.uniform(0.0, env.bounds[1])
        theta = wrap_angle(rng.uniform(-math.pi, math.pi))
        state = AgentState(p1, p2, theta)
        if not label(env, state):
            return state
    raise SamplingBudgetExceeded(f"no free state found in {budget} draws")


# Region layout used by the shipped task presets: centers sit exactly on
# cell centers of the default 12x12 discretization so each region is fully
# inside one cell.
GRID_SIDE_DEFAULT = 12
REGION_HALF_WIDTH = 0.35


def _cell_center(ix: int, iy: int, bounds=(10.0, 10.0), side=GRID_SIDE_DEFAULT):
    return ((ix + 0.5) * bounds[0] / side, (iy + 0.5) * bounds[1] / side)


DEFAULT_REGIONS = {
    "r1": Region(_cell_center(2, 2), REGION_HALF_WIDTH),
    "r2": Region(_cell_center(9, 2), REGION_HALF_WIDTH),
    "r3": Region(_cell_center(2, 9), REGION_HALF_WIDTH),
    "r4": Region(_cell_center(9, 9), REGION_HALF_WIDTH),
}

GROUP_OBSTACLE_COUNTS = {"A": (3, 5), "B": (10, 12)}
OBSTACLE_RADIUS_RANGE = (0.3, 0.6)


def _point_square_distance(p, center, half_width) -> float:
    dx = max(abs(p[0] - center[0]) - half_width, 0.0)
    dy = max(abs(p[1] - center[1]) - half_width, 0.0)
    return math.hypot(dx, dy)


def generate_environment(group: str, seed, regions=None, bounds=(10.0, 10.0),
                         env_id="", budget: int = 10_000) -> Environment:
    """Sample an environment of the given group: obstacle count uniform in
    the group's range, centers and radii rejection-sampled so obstacles are
    disjoint from every task region and from each other."""
    if group not in GROUP_OBSTACLE_COUNTS:
        raise ValueError(f"group must be one of {sorted(GROUP_OBSTACLE_COUNTS)}")
    regions = dict(DEFAULT_REGIONS if regions is None else regions)
    rng = np.random.default_rng(seed)
    lo, hi = GROUP_OBSTACLE_COUNTS[group]
    count = int(rng.integers(lo, hi + 1))
    obstacles: list[Obstacle] = []
    tries = 0
    while len(obstacles) < count:
        tries += 1
        if tries > budget:
            raise PlacementBudgetExceeded(
                f"could not place {count} obstacles in {budget} draws"
            )
        r = rng.uniform(*OBSTACLE_RADIUS_RANGE)
        c = (rng.uniform(r, bounds[0] - r), rng.uniform(r, bounds[1] - r))
        if any(_point_square_distance(c, reg.center, reg.half_width) <= r
               for reg in regions.values()):
            continue
        if any(math.hypot(c[0] - ob.center[0], c[1] - ob.center[1])
               <= r + ob.radius for ob in obstacles):
            continue
        obstacles.append(Obstacle(c, r))
    return Environment(bounds=tuple(bounds), obstacles=tuple(obstacles),
                       regions=regions, env_id=env_id, group=group)


def validate_environment(env: Environment, grid_side: int = GRID_SIDE_DEFAULT) -> None:
    """Raise ValueError on any violated geometry invariant."""
    wx, wy = env.bounds
    cw, ch = wx / grid_side, wy / grid_side
    names = list(env.regions)
    for i, a in enumerate(names):
        ra = env.regions[a]
        ix = int(ra.center[0] / cw)
        iy = int(ra.center[1] / ch)
        if not (ix * cw <= ra.center[0] - ra.half_width
                and ra.center[0] + ra.half_width <= (ix + 1) * cw
                and iy * ch <= ra.center[1] - ra.half_width
                and ra.center[1] + ra.half_width <= (iy + 1) * ch):
            raise ValueError(f"region {a} is not fully inside one grid cell")
        for b in names[i + 1 :]:
            rb = env.regions[b]
            if (abs(ra.center[0] - rb.center[0]) <= ra.half_width + rb.half_width
                    and abs(ra.center[1] - rb.center[1]) <= ra.half_width + rb.half_width):
                raise ValueError(f"regions {a} and {b} overlap")
        for k, ob in enumerate(env.obstacles):
            if _point_square_distance(ob.center, ra.center, ra.half_width) <= ob.radius:
                raise ValueError(f"region {a} intersects obstacle {k}")
    if env.group in GROUP_OBSTACLE_COUNTS:
        lo, hi = GROUP_OBSTACLE_COUNTS[env.group]
        if not lo <= len(env.obstacles) <= hi:
            raise ValueError(
                f"group {env.group} needs {lo}-{hi} obstacles, "
                f"got {len(env.obstacles)}"
            )


def env_to_json(env: Environment) -> dict:
    return {
        "bounds": list(env.bounds),
        "obstacles": [{"c": list(ob.center), "r": ob.radius}
                      for ob in env.obstacles],
        "regions": {name: {"c": list(r.center), "hw": r.half_width}
                    for name, r in env.regions.items()},
        "dt": env.dt,
        "noise": {"mean": env.noise_mean, "var": env.noise_scale ** 2},
        "id": env.env_id,
        "group": env.group,
    }


def env_from_json(data: dict) -> Environment:
    noise = data.get("noise", {})
    kwargs = {}
    if "std" in noise:
        kwargs["noise_std"] = noise["std"]
    elif "var" in noise:
        kwargs["noise_var"] = noise["var"]
    return make_environment(
        bounds=tuple(data["bounds"]),
        obstacles=[Obstacle(tuple(ob["c"]), ob["r"])
                   for ob in data.get("obstacles", [])],
        regions={name: Region(tuple(r["c"]), r["hw"])
                 for name, r in data.get("regions", {}).items()},
        dt=data.get("dt", 0.5),
        noise_mean=noise.get("mean", 2e-3),
        env_id=data.get("id", ""),
        group=data.get("group", ""),
        **kwargs,
    )


def save_environment(env: Environment, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(env_to_json(env), fh, indent=2)
        fh.write("\n")


def load_environment(path: str) -> Environment:
    with open(path) as fh:
        return env_from_json(json.load(fh))


def load_environment_dir(path: str) -> list:
    envs = []
    for name in sorted(os.listdir(path)):
        if name.endswith(".json"):
            envs.append(load_environment(os.path.join(path, name)))
    if not envs:
        raise FileNotFoundError(f"no environment .json files under {path}")
    return envs

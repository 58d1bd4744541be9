"""Procedural indoor floorplans, agent kinematics and the shortest-path oracle.

Coordinates are metres with x to the right and y up. Headings are measured
counter-clockwise from +x and stored as integer quarter-degrees so that turn
arithmetic is exact. The occupancy grid has 0.25 m cells centred on
multiples of the resolution, so axis-aligned walls on the 0.25 m lattice
run through cell centres.
"""
from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field, fields
from enum import IntEnum

import numpy as np

from monodream import kernels

RESOLUTION = 0.25
AGENT_RADIUS = 0.2
STOP_RADIUS = 0.5
TURN_DEADBAND = 7.5
WAYPOINT_RADIUS = 0.3
LOS_CLEARANCE = 0.3
MAX_COMPILED_ACTIONS = 1000
FORMAT_VERSION = 1

PALETTE: tuple[tuple[str, tuple[float, float, float]], ...] = (
    ("red", (0.85, 0.15, 0.15)),
    ("orange", (0.95, 0.55, 0.10)),
    ("yellow", (0.95, 0.90, 0.20)),
    ("green", (0.20, 0.70, 0.25)),
    ("cyan", (0.15, 0.80, 0.85)),
    ("blue", (0.15, 0.30, 0.90)),
    ("purple", (0.55, 0.20, 0.75)),
    ("pink", (0.95, 0.55, 0.75)),
    ("brown", (0.55, 0.35, 0.15)),
    ("white", (0.95, 0.95, 0.95)),
    ("olive", (0.50, 0.55, 0.10)),
    ("teal", (0.05, 0.50, 0.45)),
)
COLOR_NAMES = tuple(name for name, _ in PALETTE)


class ConfigError(ValueError):
    pass


class Unreachable(RuntimeError):
    pass


class CompileStall(RuntimeError):
    pass


class Action(IntEnum):
    STOP = 0
    FORWARD_25 = 1
    FORWARD_50 = 2
    FORWARD_75 = 3
    LEFT_15 = 4
    LEFT_30 = 5
    LEFT_45 = 6
    RIGHT_15 = 7
    RIGHT_30 = 8
    RIGHT_45 = 9

    @property
    def kind(self) -> str:
        if self is Action.STOP:
            return "stop"
        return self.name.split("_")[0].lower()

    @property
    def magnitude(self) -> int:
        """Centimetres for forward moves, degrees for turns, 0 for stop."""
        if self is Action.STOP:
            return 0
        return int(self.name.split("_")[1])

    @classmethod
    def forward(cls, cm: int) -> "Action":
        return cls[f"FORWARD_{cm}"]

    @classmethod
    def turn(cls, direction: str, degrees: int) -> "Action":
        return cls[f"{direction.upper()}_{degrees}"]


FORWARD_STEPS_CM = (75, 50, 25)
TURN_STEPS_DEG = (45, 30, 15)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading_q: int = 0  # quarter-degrees, in [0, 1440)

    def __post_init__(self):
        object.__setattr__(self, "heading_q", int(self.heading_q) % 1440)

    @classmethod
    def from_degrees(cls, x: float, y: float, heading: float) -> "Pose":
        q = round(heading * 4)
        if abs(q - heading * 4) > 1e-9:
            raise ValueError(f"heading {heading} is not a multiple of 0.25 degrees")
        return cls(float(x), float(y), q)

    @property
    def heading(self) -> float:
        return self.heading_q / 4.0

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class WorldConfig:
    rows: int = 2
    cols: int = 2
    room_min: float = 3.0
    room_max: float = 6.0
    size_step: float = 0.5
    door_width: float = 1.0
    door_margin: float = 0.5
    extra_door_prob: float = 0.25

    def validate(self) -> None:
        if self.rows < 2 or self.cols < 2:
            raise ConfigError(f"room grid must be at least 2x2, got {self.rows}x{self.cols}")
        if self.rows * self.cols > len(PALETTE):
            raise ConfigError(f"{self.rows * self.cols} rooms exceed the {len(PALETTE)}-colour palette")
        if not 3.0 <= self.room_min <= self.room_max <= 6.0:
            raise ConfigError("room sizes must lie within 3-6 m")
        if self.door_width < 1.0:
            raise ConfigError(f"door width {self.door_width} m is below the 1 m minimum")
        if self.room_min < self.door_width + 2 * self.door_margin:
            raise ConfigError("rooms too small to fit a door opening")
        for v in (self.room_min, self.room_max, self.size_step, self.door_width, self.door_margin):
            if abs(v / RESOLUTION - round(v / RESOLUTION)) > 1e-9:
                raise ConfigError(f"{v} is not on the {RESOLUTION} m lattice")

    def as_text(self) -> str:
        return ";".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))

    def hash(self) -> str:
        return hashlib.sha256(self.as_text().encode()).hexdigest()[:12]


@dataclass(frozen=True)
class Wall:
    x0: float
    y0: float
    x1: float
    y1: float
    left_color: int  # surface seen from the left of (x0,y0)->(x1,y1)
    right_color: int


@dataclass(frozen=True)
class Room:
    index: int
    x0: float
    y0: float
    x1: float
    y1: float
    color: int

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)

    @property
    def color_name(self) -> str:
        return COLOR_NAMES[self.color]


@dataclass(frozen=True)
class FloorPlan:
    seed: int
    config_hash: str
    rooms: tuple[Room, ...]
    walls: tuple[Wall, ...]
    cell_size: float = 1.0
    resolution: float = RESOLUTION
    wall_array: np.ndarray = field(init=False, repr=False, compare=False)
    occupancy: np.ndarray = field(init=False, repr=False, compare=False)
    planning_grid: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arr = np.array([[w.x0, w.y0, w.x1, w.y1] for w in self.walls], dtype=np.float64).reshape(-1, 4)
        arr.setflags(write=False)
        object.__setattr__(self, "wall_array", np.ascontiguousarray(arr))
        occ = _rasterize(self.walls, self.extent, self.resolution)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        plan = _dilate(occ)
        plan.setflags(write=False)
        object.__setattr__(self, "planning_grid", plan)

    @property
    def extent(self) -> tuple[float, float]:
        xs = [v for w in self.walls for v in (w.x0, w.x1)] + [r.x1 for r in self.rooms]
        ys = [v for w in self.walls for v in (w.y0, w.y1)] + [r.y1 for r in self.rooms]
        return (max(xs), max(ys))

    # --- grid helpers -------------------------------------------------------
    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        nx, ny = self.occupancy.shape
        i = min(max(int(round(x / self.resolution)), 0), nx - 1)
        j = min(max(int(round(y / self.resolution)), 0), ny - 1)
        return i, j

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (i * self.resolution, j * self.resolution)

    def nearest_free_cell(self, x: float, y: float, max_radius: int = 4, grid: np.ndarray | None = None):
        i0, j0 = self.cell_of(x, y)
        grid = self.planning_grid if grid is None else grid
        if not grid[i0, j0]:
            return i0, j0
        nx, ny = grid.shape
        best = None
        for r in range(1, max_radius + 1):
            for i in range(i0 - r, i0 + r + 1):
                for j in range(j0 - r, j0 + r + 1):
                    if 0 <= i < nx and 0 <= j < ny and not grid[i, j]:
                        cx, cy = self.cell_center(i, j)
                        d = (cx - x) ** 2 + (cy - y) ** 2
                        if best is None or d < best[0]:
                            best = (d, i, j)
            if best is not None:
                return best[1], best[2]
        return None

    def room_at(self, x: float, y: float) -> int:
        for room in self.rooms:
            if room.x0 < x < room.x1 and room.y0 < y < room.y1:
                return room.index
        return -1

    def clearance(self, x: float, y: float) -> float:
        return kernels.segment_clearance(x, y, x, y, self.wall_array)

    def is_free(self, x: float, y: float) -> bool:
        w, h = self.extent
        return 0.0 < x < w and 0.0 < y < h and self.clearance(x, y) >= AGENT_RADIUS

    # --- serialization ------------------------------------------------------
    def serialize(self) -> str:
        lines = [
            f"MONODREAM-FLOORPLAN v{FORMAT_VERSION}",
            f"header seed={self.seed} config={self.config_hash} cell_size={self.cell_size!r} "
            f"resolution={self.resolution!r} rooms={len(self.rooms)} walls={len(self.walls)}",
        ]
        for r in self.rooms:
            lines.append(f"room {r.index} {r.x0!r} {r.y0!r} {r.x1!r} {r.y1!r} {r.color}")
        for w in self.walls:
            lines.append(f"wall {w.x0!r} {w.y0!r} {w.x1!r} {w.y1!r} {w.left_color} {w.right_color}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "FloorPlan":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("MONODREAM-FLOORPLAN v"):
            raise ValueError("not a floorplan file")
        version = int(lines[0].rsplit("v", 1)[1])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported floorplan version {version}")
        header = dict(tok.split("=", 1) for tok in lines[1].split()[1:])
        rooms, walls = [], []
        for ln in lines[2:]:
            parts = ln.split()
            if parts[0] == "room":
                rooms.append(Room(int(parts[1]), *map(float, parts[2:6]), int(parts[6])))
            elif parts[0] == "wall":
                walls.append(Wall(*map(float, parts[1:5]), int(parts[5]), int(parts[6])))
            else:
                raise ValueError(f"unknown record {parts[0]!r}")
        if len(rooms) != int(header["rooms"]) or len(walls) != int(header["walls"]):
            raise ValueError("record count does not match header")
        return cls(
            seed=int(header["seed"]),
            config_hash=header["config"],
            rooms=tuple(rooms),
            walls=tuple(walls),
            cell_size=float(header["cell_size"]),
            resolution=float(header["resolution"]),
        )


def _rasterize(walls, extent, res) -> np.ndarray:
    """Mark every cell (closed 0.25 m square) that a wall segment touches."""
    w, h = extent
    nx = int(round(w / res)) + 1
    ny = int(round(h / res)) + 1
    occ = np.zeros((nx, ny), dtype=np.uint8)
    half = res / 2
    for wall in walls:
        x0, x1 = sorted((wall.x0, wall.x1))
        y0, y1 = sorted((wall.y0, wall.y1))
        if x0 != x1 and y0 != y1:
            raise ValueError("only axis-aligned walls are supported")
        i0 = max(int(math.ceil((x0 - half) / res - 1e-9)), 0)
        i1 = min(int(math.floor((x1 + half) / res + 1e-9)), nx - 1)
        j0 = max(int(math.ceil((y0 - half) / res - 1e-9)), 0)
        j1 = min(int(math.floor((y1 + half) / res + 1e-9)), ny - 1)
        occ[i0 : i1 + 1, j0 : j1 + 1] = 1
    return occ


def _dilate(occ: np.ndarray) -> np.ndarray:
    padded = np.pad(occ, 1, constant_values=1)
    out = np.zeros_like(occ)
    nx, ny = occ.shape
    for di in (0, 1, 2):
        for dj in (0, 1, 2):
            out |= padded[di : di + nx, dj : dj + ny]
    return np.ascontiguousarray(out)


# --- generation -------------------------------------------------------------


def generate_floorplan(seed: int, config: WorldConfig | None = None) -> FloorPlan:
    config = config or WorldConfig()
    config.validate()
    rng = np.random.default_rng([seed, 0x5EED])
    sizes = np.arange(config.room_min, config.room_max + 1e-9, config.size_step)
    widths = [float(rng.choice(sizes)) for _ in range(config.cols)]
    heights = [float(rng.choice(sizes)) for _ in range(config.rows)]
    xs = np.concatenate([[0.0], np.cumsum(widths)]).tolist()
    ys = np.concatenate([[0.0], np.cumsum(heights)]).tolist()
    colors = rng.permutation(len(PALETTE))[: config.rows * config.cols].tolist()

    def rid(r, c):
        return r * config.cols + c

    rooms = tuple(
        Room(rid(r, c), xs[c], ys[r], xs[c + 1], ys[r + 1], int(colors[rid(r, c)]))
        for r in range(config.rows)
        for c in range(config.cols)
    )

    # Random spanning tree (Kruskal over shuffled edges) plus extra doors.
    edges = []
    for r in range(config.rows):
        for c in range(config.cols):
            if c + 1 < config.cols:
                edges.append((rid(r, c), rid(r, c + 1)))
            if r + 1 < config.rows:
                edges.append((rid(r, c), rid(r + 1, c)))
    order = rng.permutation(len(edges))
    parent = list(range(len(rooms)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    doors = set()
    for k in order.tolist():
        a, b = edges[k]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            doors.add(edges[k])
    for k in order.tolist():
        if edges[k] not in doors and rng.random() < config.extra_door_prob:
            doors.add(edges[k])

    walls: list[Wall] = []
    res = RESOLUTION

    def door_span(lo, hi):
        first = lo + config.door_margin
        last = hi - config.door_margin - config.door_width
        n = int(round((last - first) / res))
        start = first + res * int(rng.integers(0, n + 1))
        return start, start + config.door_width

    def add_split(x0, y0, x1, y1, left, right, gap):
        if gap is None:
            walls.append(Wall(x0, y0, x1, y1, left, right))
            return
        g0, g1 = gap
        if x0 == x1:
            walls.append(Wall(x0, y0, x1, g0, left, right))
            walls.append(Wall(x0, g1, x1, y1, left, right))
        else:
            walls.append(Wall(x0, y0, g0, y1, left, right))
            walls.append(Wall(g1, y0, x1, y1, left, right))

    for r in range(config.rows):
        for c in range(config.cols):
            room = rooms[rid(r, c)]
            col = room.color
            # bottom edge (direction +x, left side is +y = inside when r == 0)
            if r == 0:
                add_split(room.x0, room.y0, room.x1, room.y0, col, col, None)
            if r == config.rows - 1:
                add_split(room.x0, room.y1, room.x1, room.y1, col, col, None)
            if c == 0:
                add_split(room.x0, room.y0, room.x0, room.y1, col, col, None)
            if c == config.cols - 1:
                add_split(room.x1, room.y0, room.x1, room.y1, col, col, None)
            if c + 1 < config.cols:
                other = rooms[rid(r, c + 1)]
                gap = door_span(room.y0, room.y1) if (room.index, other.index) in doors else None
                # direction +y: left side is -x (this room), right side is +x
                add_split(room.x1, room.y0, room.x1, room.y1, col, other.color, gap)
            if r + 1 < config.rows:
                other = rooms[rid(r + 1, c)]
                gap = door_span(room.x0, room.x1) if (room.index, other.index) in doors else None
                # direction +x: left side is +y (room above), right side is this room
                add_split(room.x0, room.y1, room.x1, room.y1, other.color, col, gap)

    plan = FloorPlan(seed=seed, config_hash=config.hash(), rooms=rooms, walls=tuple(walls))
    if not rooms_connected(plan):
        raise RuntimeError(f"generated plan {seed} is not connected")
    return plan


def box_plan(width: float, height: float, color: int = 5, seed: int = -1) -> FloorPlan:
    """Single closed rectangular room with its lower-left corner at the origin."""
    room = Room(0, 0.0, 0.0, width, height, color)
    walls = (
        Wall(0.0, 0.0, width, 0.0, color, color),
        Wall(width, 0.0, width, height, color, color),
        Wall(width, height, 0.0, height, color, color),
        Wall(0.0, height, 0.0, 0.0, color, color),
    )
    return FloorPlan(seed=seed, config_hash="custom", rooms=(room,), walls=walls)


def flood_fill(grid: np.ndarray, start: tuple[int, int]) -> np.ndarray:
    """4-connected reachability over free cells of ``grid``."""
    seen = np.zeros(grid.shape, dtype=bool)
    if grid[start]:
        return seen
    q = deque([start])
    seen[start] = True
    nx, ny = grid.shape
    while q:
        i, j = q.popleft()
        for ni, nj in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if 0 <= ni < nx and 0 <= nj < ny and not grid[ni, nj] and not seen[ni, nj]:
                seen[ni, nj] = True
                q.append((ni, nj))
    return seen


def rooms_connected(plan: FloorPlan) -> bool:
    cells = []
    for room in plan.rooms:
        cell = plan.nearest_free_cell(*room.center)
        if cell is None:
            return False
        cells.append(cell)
    reach = flood_fill(plan.planning_grid, cells[0])
    return all(reach[c] for c in cells)


# --- kinematics -------------------------------------------------------------


def step_action(plan: FloorPlan, pose: Pose, action: Action) -> tuple[Pose, bool]:
    """Apply one action. Returns the new pose and whether a forward move was blocked."""
    action = Action(action)
    if action is Action.STOP:
        return pose, False
    if action.kind == "left":
        return Pose(pose.x, pose.y, pose.heading_q + 4 * action.magnitude), False
    if action.kind == "right":
        return Pose(pose.x, pose.y, pose.heading_q - 4 * action.magnitude), False
    step = action.magnitude / 100.0
    theta = math.radians(pose.heading)
    nx = pose.x + step * math.cos(theta)
    ny = pose.y + step * math.sin(theta)
    if kernels.segment_clearance(pose.x, pose.y, nx, ny, plan.wall_array) < AGENT_RADIUS:
        return pose, True
    return Pose(nx, ny, pose.heading_q), False


def replay(plan: FloorPlan, start: Pose, actions) -> list[tuple[Pose, bool]]:
    """Poses after each action, with blocked flags."""
    out = []
    pose = start
    for a in actions:
        pose, blocked = step_action(plan, pose, a)
        out.append((pose, blocked))
    return out


# --- pathfinding ------------------------------------------------------------


def _grid_path(plan: FloorPlan, a, b, grid: np.ndarray | None = None) -> np.ndarray:
    grid = plan.planning_grid if grid is None else grid
    ca = plan.nearest_free_cell(*a, grid=grid)
    cb = plan.nearest_free_cell(*b, grid=grid)
    if ca is None or cb is None:
        raise Unreachable(f"no free cell near {a if ca is None else b}")
    cells = kernels.grid_astar(grid, ca[0], ca[1], cb[0], cb[1])
    if cells is None:
        raise Unreachable(f"no path between {a} and {b}")
    return cells


def path_cost(cells: np.ndarray, resolution: float = RESOLUTION) -> float:
    """Octile length of a cell path from its straight/diagonal move counts."""
    if len(cells) < 2:
        return 0.0
    steps = np.abs(np.diff(cells, axis=0)).sum(axis=1)
    n_diag = int((steps == 2).sum())
    n_straight = int((steps == 1).sum())
    return (n_straight + n_diag * math.sqrt(2.0)) * resolution


def geodesic_distance(plan: FloorPlan, a, b) -> float:
    """Octile A* distance on the wall occupancy grid, never below the straight line."""
    a = (float(a[0]), float(a[1]))
    b = (float(b[0]), float(b[1]))
    euclid = math.hypot(b[0] - a[0], b[1] - a[1])
    if euclid == 0.0:
        return 0.0
    return max(euclid, path_cost(_grid_path(plan, a, b, plan.occupancy), plan.resolution))


def visible(plan: FloorPlan, a, b, clearance: float = LOS_CLEARANCE) -> bool:
    return kernels.segment_clearance(a[0], a[1], b[0], b[1], plan.wall_array) >= clearance


def shortest_path(plan: FloorPlan, start, goal) -> list[tuple[float, float]]:
    """Line-of-sight smoothed A* polyline from start (Pose or point) to goal."""
    s = start.xy if isinstance(start, Pose) else (float(start[0]), float(start[1]))
    g = (float(goal[0]), float(goal[1]))
    if math.hypot(g[0] - s[0], g[1] - s[1]) < 1e-9:
        return [g]
    cells = _grid_path(plan, s, g)
    raw = [s] + [plan.cell_center(int(i), int(j)) for i, j in cells] + [g]
    pts = [raw[0]]
    for p in raw[1:]:
        if math.hypot(p[0] - pts[-1][0], p[1] - pts[-1][1]) > 1e-9:
            pts.append(p)
    out = [pts[0]]
    k = 0
    while k < len(pts) - 1:
        nxt = k + 1
        for m in range(len(pts) - 1, k + 1, -1):
            if visible(plan, pts[k], pts[m]):
                nxt = m
                break
        out.append(pts[nxt])
        k = nxt
    return out


def polyline_length(points) -> float:
    return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(points, points[1:]))


def _heading_error(pose: Pose, target) -> float:
    bearing = math.degrees(math.atan2(target[1] - pose.y, target[0] - pose.x))
    err = (bearing - pose.heading) % 360.0
    if err > 180.0:
        err -= 360.0
    return err  # in (-180, 180]


def _detour_target(plan: FloorPlan, pose: Pose, goal) -> tuple[float, float]:
    """Point 0.3 m out along the quantized heading whose 25 cm step is admissible
    and leaves the smallest geodesic distance to the goal."""
    best = None
    for k in range(24):
        q = k * 60
        cand, blocked = step_action(plan, Pose(pose.x, pose.y, q), Action.FORWARD_25)
        if blocked:
            continue
        try:
            d = geodesic_distance(plan, cand.xy, goal)
        except Unreachable:
            continue
        turn = abs(((q - pose.heading_q + 720) % 1440) - 720)
        key = (round(d, 9), turn, k)
        if best is None or key < best[0]:
            best = (key, q)
    if best is None:
        raise CompileStall(f"no admissible move from {pose}")
    theta = math.radians(best[1] / 4.0)
    return (pose.x + 0.3 * math.cos(theta), pose.y + 0.3 * math.sin(theta))


def path_to_actions(plan: FloorPlan, start: Pose, waypoints, stop_radius: float = STOP_RADIUS) -> list[Action]:
    """Greedily compile a waypoint polyline into discrete actions ending in STOP.

    When the quantized heading toward the next waypoint clips a wall, the
    compiler takes one admissible 25 cm detour step and replans from there.
    """
    waypoints = [tuple(map(float, w)) for w in waypoints]
    goal = waypoints[-1]
    pose = start
    actions: list[Action] = []
    wi = 1 if len(waypoints) > 1 else 0
    detour = None
    while True:
        if len(actions) >= MAX_COMPILED_ACTIONS:
            raise CompileStall(f"{MAX_COMPILED_ACTIONS} actions emitted without reaching the goal")
        if math.hypot(goal[0] - pose.x, goal[1] - pose.y) <= stop_radius:
            actions.append(Action.STOP)
            return actions
        while wi < len(waypoints) - 1 and math.hypot(waypoints[wi][0] - pose.x, waypoints[wi][1] - pose.y) <= WAYPOINT_RADIUS:
            wi += 1
        target = detour if detour is not None else waypoints[wi]
        err = _heading_error(pose, target)
        if abs(err) > TURN_DEADBAND:
            mag = next((m for m in TURN_STEPS_DEG if m <= abs(err)), 15)
            action = Action.turn("left" if err > 0 else "right", mag)
        else:
            remaining = math.hypot(target[0] - pose.x, target[1] - pose.y)
            action = None
            for cm in FORWARD_STEPS_CM:
                if cm / 100.0 <= remaining + 1e-9:
                    _, blocked = step_action(plan, pose, Action.forward(cm))
                    if not blocked:
                        action = Action.forward(cm)
                        break
            if action is None:
                if detour is not None:
                    raise CompileStall(f"detour from {pose} is blocked")
                detour = _detour_target(plan, pose, goal)
                continue
            if detour is not None:
                detour = None
                pose, _ = step_action(plan, pose, action)
                actions.append(action)
                waypoints = shortest_path(plan, pose, goal)
                wi = 1 if len(waypoints) > 1 else 0
                continue
        pose, _ = step_action(plan, pose, action)
        actions.append(action)

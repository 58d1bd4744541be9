import heapq
import math

import numpy as np
import pytest

from monodream.world import (
    Room, Wall,
    Action, ConfigError, FloorPlan, Pose, Unreachable, WorldConfig, box_plan, flood_fill, generate_floorplan,
    geodesic_distance, path_cost, path_to_actions, polyline_length, replay, rooms_connected, shortest_path,
    step_action, STOP_RADIUS,
)


def dijkstra(grid, s, g):
    """Independent octile Dijkstra without corner cutting."""
    nx, ny = grid.shape
    dist = {s: 0.0}
    pq = [(0.0, s)]
    while pq:
        d, (i, j) = heapq.heappop(pq)
        if (i, j) == g:
            return d
        if d > dist[(i, j)]:
            continue
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == dj == 0:
                    continue
                ni, nj = i + di, j + dj
                if not (0 <= ni < nx and 0 <= nj < ny) or grid[ni, nj]:
                    continue
                if di and dj and (grid[i + di, j] or grid[i, j + dj]):
                    continue
                nd = d + (math.sqrt(2) if di and dj else 1.0)
                if nd < dist.get((ni, nj), math.inf):
                    dist[(ni, nj)] = nd
                    heapq.heappush(pq, (nd, (ni, nj)))
    return None


def test_generation_deterministic():
    a = generate_floorplan(5, WorldConfig())
    b = generate_floorplan(5, WorldConfig())
    assert a.serialize() == b.serialize()
    assert generate_floorplan(6, WorldConfig()).serialize() != a.serialize()


@pytest.mark.parametrize("seed", range(10))
def test_generated_plans_connected(seed):
    plan = generate_floorplan(seed, WorldConfig(rows=3, cols=3))
    assert rooms_connected(plan)
    assert len({r.color for r in plan.rooms}) == 9


@pytest.mark.parametrize("cfg", [WorldConfig(rows=1), WorldConfig(rows=4, cols=4), WorldConfig(door_width=0.75),
                                 WorldConfig(room_min=2.5)])
def test_config_rejects_invalid(cfg):
    with pytest.raises(ConfigError):
        cfg.validate()


def test_serialize_round_trip(plan):
    again = FloorPlan.parse(plan.serialize())
    assert again.serialize() == plan.serialize()
    assert np.array_equal(again.occupancy, plan.occupancy)


def test_pose_rotation_closure():
    p = Pose(1.0, 2.0, 37)
    for act in (Action.LEFT_15, Action.LEFT_30, Action.LEFT_45, Action.RIGHT_15, Action.RIGHT_30, Action.RIGHT_45):
        q = p
        for _ in range(360 // act.magnitude):
            q, _ = step_action(box_plan(4, 4), q, act)
        assert q == p


def test_forward_blocked_by_wall(square_room):
    pose = Pose.from_degrees(3.6, 2.0, 0.0)
    new, blocked = step_action(square_room, pose, Action.FORWARD_50)
    assert blocked and new == pose
    new, blocked = step_action(square_room, Pose.from_degrees(2.0, 2.0, 0.0), Action.FORWARD_75)
    assert not blocked and new.x == pytest.approx(2.75)


def test_stop_is_identity(square_room):
    pose = Pose.from_degrees(1.0, 1.0, 45.0)
    assert step_action(square_room, pose, Action.STOP) == (pose, False)


def test_geodesic_equals_euclid_in_open_room(square_room):
    assert geodesic_distance(square_room, (1.0, 1.0), (3.0, 1.0)) == pytest.approx(2.0)
    assert geodesic_distance(square_room, (1.0, 1.0), (1.0, 1.0)) == 0.0


@pytest.mark.parametrize("seed", range(20))
def test_geodesic_matches_dijkstra(seed):
    plan = generate_floorplan(seed, WorldConfig())
    rng = np.random.default_rng(seed)
    free = np.argwhere(plan.occupancy == 0)
    for _ in range(3):
        s = tuple(free[rng.integers(len(free))])
        g = tuple(free[rng.integers(len(free))])
        a, b = plan.cell_center(*s), plan.cell_center(*g)
        ref = dijkstra(plan.occupancy, s, g)
        # the A* path cost is recounted from move counts; compare on that exact scale
        got = geodesic_distance(plan, a, b)
        euclid = math.hypot(b[0] - a[0], b[1] - a[1])
        assert abs(got - max(euclid, ref * plan.resolution)) < 1e-12


def test_geodesic_symmetric_and_triangle(plan, rng):
    free = np.argwhere(plan.planning_grid == 0)
    pts = [plan.cell_center(*free[rng.integers(len(free))]) for _ in range(3)]
    a, b, c = pts
    assert geodesic_distance(plan, a, b) == pytest.approx(geodesic_distance(plan, b, a), abs=1e-9)
    assert geodesic_distance(plan, a, c) <= geodesic_distance(plan, a, b) + geodesic_distance(plan, b, c) + 1e-9


def _custom(rooms, walls):
    return FloorPlan(seed=-2, config_hash="custom", rooms=tuple(rooms), walls=tuple(walls))


def test_unreachable_sealed_room():
    plan = _custom([Room(0, 0, 0, 6, 4, 0)], [Wall(0, 0, 6, 0, 0, 0), Wall(6, 0, 6, 4, 0, 0), Wall(6, 4, 0, 4, 0, 0),
                                               Wall(0, 4, 0, 0, 0, 0), Wall(3, 0, 3, 4, 0, 0)])
    with pytest.raises(Unreachable):
        geodesic_distance(plan, (1.0, 2.0), (5.0, 2.0))


def test_open_room_geodesic_example():
    plan = box_plan(6, 6)
    assert abs(geodesic_distance(plan, (1.0, 1.0), (4.0, 5.0)) - 5.0) <= 0.354


def test_start_at_goal_single_waypoint(square_room):
    assert shortest_path(square_room, Pose(1.0, 1.0), (1.0, 1.0)) == [(1.0, 1.0)]


def test_straight_corridor_two_waypoints():
    plan = box_plan(8, 1.5)
    assert len(shortest_path(plan, Pose(0.75, 0.75), (7.25, 0.75))) == 2


def test_l_corridor_three_waypoints():
    # L-shaped corridor 1.5 m wide: horizontal leg along y in [0, 1.5], vertical leg along x in [6.5, 8]
    walls = [Wall(0, 0, 8, 0, 0, 0), Wall(8, 0, 8, 8, 0, 0), Wall(8, 8, 6.5, 8, 0, 0), Wall(6.5, 8, 6.5, 1.5, 0, 0),
             Wall(6.5, 1.5, 0, 1.5, 0, 0), Wall(0, 1.5, 0, 0, 0, 0)]
    plan = _custom([Room(0, 0, 0, 8, 8, 0)], walls)
    start, goal = (0.75, 0.75), (7.25, 7.25)
    pts = shortest_path(plan, Pose(*start), goal)
    assert len(pts) == 3
    assert abs(polyline_length(pts) - (6.5 + 6.5)) <= 0.5


def test_shortest_path_length_tracks_geodesic(plan, rng):
    free = np.argwhere(plan.planning_grid == 0)
    ratios = []
    for _ in range(60):
        a = plan.cell_center(*free[rng.integers(len(free))])
        b = plan.cell_center(*free[rng.integers(len(free))])
        pts = shortest_path(plan, a, b)
        length = polyline_length(pts)
        geo = geodesic_distance(plan, a, b)
        assert pts[0] == a and pts[-1] == b
        assert length >= math.hypot(b[0] - a[0], b[1] - a[1]) - 1e-9
        if geo > 0:
            ratios.append(length / geo)
    # octile distance overestimates straight runs by up to 8.24 %, so single pairs can leave a 5 % band;
    # the typical pair stays inside it
    assert abs(np.median(ratios) - 1.0) < 0.05


def test_path_cost_counts():
    cells = np.array([[0, 0], [1, 1], [2, 1], [3, 2]])
    assert path_cost(cells) == pytest.approx((1 + 2 * math.sqrt(2)) * 0.25)


def test_compiled_actions_reach_goal(plan3x3, rng):
    free = np.argwhere(plan3x3.planning_grid == 0)
    for _ in range(25):
        s = plan3x3.cell_center(*free[rng.integers(len(free))])
        g = plan3x3.cell_center(*free[rng.integers(len(free))])
        start = Pose(s[0], s[1], 60 * int(rng.integers(24)))
        acts = path_to_actions(plan3x3, start, shortest_path(plan3x3, start, g))
        trace = replay(plan3x3, start, acts)
        assert acts[-1] is Action.STOP
        assert not any(blocked for _, blocked in trace)
        end = trace[-1][0]
        assert math.hypot(end.x - g[0], end.y - g[1]) <= STOP_RADIUS


def test_flood_fill_blocks():
    grid = np.zeros((3, 3), dtype=np.uint8)
    grid[:, 1] = 1
    seen = flood_fill(grid, (0, 0))
    assert seen[:, 0].all() and not seen[:, 2].any()

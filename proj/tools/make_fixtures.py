#!/usr/bin/env python3
"""Regenerates the scenario fixtures under fixtures/."""
import json
import math
import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
LANE = 3.5
CAR = {"length": 4.5, "width": 1.9, "wheelbase": 2.7}


def r(v):
    return round(v, 6)


def agent(x, y, heading, speed):
    c, s = math.cos(heading), math.sin(heading)
    return {"state": [r(x), r(y), r(c), r(s), r(speed * c), r(speed * s)], **CAR}


def straight_line(y, x0, x1, step=5.0):
    n = int(round((x1 - x0) / step))
    return [[r(x0 + k * step), r(y)] for k in range(n + 1)]


def rect(x0, x1, y0, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def scenario(lines, area, routes, center, others, horizon=40, dt=0.1):
    return {
        "version": 1,
        "dt": dt,
        "horizon": horizon,
        "map": {"reference_lines": lines, "drivable_area": area, "routes": routes},
        "center_agent": center,
        "other_agents": others,
    }


def parallel_road(lanes, x0=-20.0, x1=400.0):
    ys = [(k - (lanes - 1) / 2.0) * LANE for k in range(lanes)]
    half = lanes * LANE / 2.0
    lines = [straight_line(y, x0, x1) for y in ys]
    return ys, lines, [rect(x0, x1, -half, half)]


def curved_centerline(lead, radius, sweep, tail, step=1.0):
    """Straight lead-in along +x, arc of signed radius, straight exit."""
    pts, hs = [], []
    x, y, h = 0.0, 0.0, 0.0
    s = 0.0
    while s < lead:
        pts.append((x, y)); hs.append(h)
        x += step * math.cos(h); y += step * math.sin(h); s += step
    n = int(abs(radius) * sweep / step)
    for _ in range(n):
        pts.append((x, y)); hs.append(h)
        x += step * math.cos(h); y += step * math.sin(h); h += step / radius
    for _ in range(int(tail / step)):
        pts.append((x, y)); hs.append(h)
        x += step * math.cos(h); y += step * math.sin(h)
    return pts, hs


def offset(pts, hs, d):
    return [[r(x - d * math.sin(h)), r(y + d * math.cos(h))] for (x, y), h in zip(pts, hs)]


def pose_at(pts, hs, s_index, d=0.0):
    (x, y), h = pts[s_index], hs[s_index]
    return x - d * math.sin(h), y + d * math.cos(h), h


def main():
    OUT.mkdir(exist_ok=True)
    files = {}

    ys, lines, area = parallel_road(1, x1=300.0)
    files["straight.json"] = scenario(lines, area, [straight_line(0.0, 0.0, 250.0)], agent(0.0, 0.0, 0.0, 5.0), [])

    # Center agent 20 m behind a lead agent in the same lane.
    files["lead-brake.json"] = scenario(lines, area, [straight_line(0.0, 0.0, 250.0)], agent(0.0, 0.0, 0.0, 8.0),
                                        [agent(20.0, 0.0, 0.0, 8.0)])

    # Five parallel lanes, center agent in the middle one.
    ys, lines, area = parallel_road(5)
    files["multimodal.json"] = scenario(lines, area, [straight_line(0.0, 0.0, 350.0)], agent(0.0, 0.0, 0.0, 8.0), [])

    # Three lanes; stopped vehicles block the middle and right lanes ahead.
    ys, lines, area = parallel_road(3)
    files["bandit.json"] = scenario(lines, area, [straight_line(0.0, 0.0, 350.0)], agent(0.0, 0.0, 0.0, 8.0),
                                    [agent(30.0, ys[0], 0.0, 0.0), agent(30.0, ys[1], 0.0, 0.0)])

    # Curved two-lane roads; the other vehicles enter or sit in the bend.
    variants = [
        (30.0, 35.0, 1.2, 10.0), (25.0, -40.0, 1.1, 9.0), (35.0, 30.0, 1.3, 8.0), (20.0, -35.0, 1.2, 10.0),
        (30.0, 45.0, 1.0, 11.0), (25.0, -30.0, 1.3, 8.0), (40.0, 40.0, 1.1, 9.0), (30.0, -45.0, 1.0, 10.0),
        (20.0, 32.0, 1.4, 9.0), (35.0, -38.0, 1.2, 11.0),
    ]
    for k, (lead, radius, sweep, v) in enumerate(variants):
        pts, hs = curved_centerline(lead, radius, sweep, 80.0)
        lanes = [offset(pts, hs, -LANE / 2), offset(pts, hs, LANE / 2)]
        left = offset(pts, hs, LANE)
        right = offset(pts, hs, -LANE)
        poly = right + left[::-1]
        cx, cy, ch = pose_at(pts, hs, 2, -LANE / 2)
        others = []
        for s_idx, d in [(int(lead) - 6, LANE / 2), (int(lead) + 6, -LANE / 2), (int(lead) + 16, LANE / 2)]:
            ox, oy, oh = pose_at(pts, hs, s_idx, d)
            others.append(agent(ox, oy, oh, v))
        route = offset(pts, hs, -LANE / 2)[:-5]
        files[f"curved-{k:02d}.json"] = scenario(lanes, [poly], [route], agent(cx, cy, ch, v * 0.8), others)

    for name, data in files.items():
        (OUT / name).write_text(json.dumps(data, indent=1) + "\n")


if __name__ == "__main__":
    main()

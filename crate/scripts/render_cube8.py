#!/usr/bin/env python3
"""Render the cube8 fixture: 8 pinhole cameras around a unit cube whose 8
corners are the scene points. Writes COLMAP text files to fixtures/cube8."""

import itertools
import pathlib
import sys

import numpy as np

WIDTH, HEIGHT = 640, 480
FX = FY = 500.0
CX, CY = 320.0, 240.0


def look_at(center, target, up=(0.0, 0.0, 1.0)):
    z = np.asarray(target, float) - center
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z])  # rows: camera axes in world coordinates


def quat_wxyz(r):
    t = np.trace(r)
    if t > 0:
        s = 2.0 * np.sqrt(t + 1.0)
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * np.sqrt(1.0 + r[i, i] - r[j, j] - r[k, k])
        q = [0.0] * 4
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    q = np.asarray(q)
    return q if q[0] >= 0 else -q


def g(x):
    return "%.12g" % x


def main(out):
    out.mkdir(parents=True, exist_ok=True)
    points = [np.array(c) for c in itertools.product((-0.5, 0.5), repeat=3)]
    cams = []
    for i in range(8):
        a = 2.0 * np.pi * i / 8.0
        c = np.array([4.0 * np.cos(a), 4.0 * np.sin(a), 1.0 if i % 2 == 0 else -1.0])
        r = look_at(c, (0.0, 0.0, 0.0))
        # Round the pose to what the text files will hold, then render.
        q = np.array([float(g(v)) for v in quat_wxyz(r)])
        q /= np.linalg.norm(q)
        w, x, y, z = q
        r = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])
        t = np.array([float(g(v)) for v in -r @ c])
        cams.append((q, r, t))

    tracks = {k: [] for k in range(len(points))}
    images = ["# Image list with two lines of data per image:",
              "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
              "#   POINTS2D[] as (X, Y, POINT3D_ID)"]
    for i, (q, r, t) in enumerate(cams):
        image_id = i + 1
        obs = []
        for k, p in enumerate(points):
            pc = r @ p + t
            u = FX * pc[0] / pc[2] + CX
            v = FY * pc[1] / pc[2] + CY
            tracks[k].append((image_id, len(obs)))
            obs.append(f"{g(u)} {g(v)} {k + 1}")
        images.append(" ".join([str(image_id)] + [g(v) for v in q] + [g(v) for v in t] + ["1", f"frame_{i:06d}.jpg"]))
        images.append(" ".join(obs))

    pts = ["# 3D point list with one line of data per point:",
           "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)"]
    for k, p in enumerate(points):
        rgb = [int(255 * (v + 0.5)) for v in p]
        track = " ".join(f"{a} {b}" for a, b in tracks[k])
        pts.append(" ".join([str(k + 1)] + [g(v) for v in p] + [str(c) for c in rgb] + ["0", track]))

    cameras = ["# Camera list with one line of data per camera:",
               "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]",
               f"1 PINHOLE {WIDTH} {HEIGHT} {g(FX)} {g(FY)} {g(CX)} {g(CY)}"]

    for name, lines in (("cameras.txt", cameras), ("images.txt", images), ("points3D.txt", pts)):
        (out / name).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    root = pathlib.Path(__file__).resolve().parent.parent
    main(pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else root / "fixtures" / "cube8")

#!/usr/bin/env python3
"""Writes a small synthetic makeup dataset in the images/segs/landmarks layout.

Faces are drawn procedurally: skin ellipse, hair, brows, eyes, nose and lips,
with a matching 19-class parsing map. Makeup faces get saturated lips and an
eye-shadow ring; non-makeup faces keep lips close to the skin tone.

    python3 tools/make_fixture.py OUT_DIR --makeup 4 --non-makeup 4 --size 64 --seed 7
"""

import argparse
import pathlib

import numpy as np
from PIL import Image

SKIN, L_BROW, R_BROW, L_EYE, R_EYE, NOSE, U_LIP, L_LIP, NECK, HAIR = 1, 2, 3, 4, 5, 10, 12, 13, 14, 17


def ellipse(h, w, cy, cx, ry, rx):
    y, x = np.mgrid[0:h, 0:w]
    return ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1.0


def face(rng, size, makeup):
    s = size
    labels = np.zeros((s, s), np.uint8)
    img = np.zeros((s, s, 3), np.float64)
    img[:] = rng.uniform(40, 220, 3)

    cy, cx = s * (0.52 + rng.uniform(-0.02, 0.02)), s * (0.5 + rng.uniform(-0.02, 0.02))
    fry, frx = s * rng.uniform(0.36, 0.40), s * rng.uniform(0.28, 0.32)
    skin = np.array([rng.uniform(170, 235), rng.uniform(130, 190), rng.uniform(100, 160)])
    hair = rng.uniform(10, 90, 3)

    neck = ellipse(s, s, cy + fry * 0.9, cx, fry * 0.5, frx * 0.45)
    labels[neck] = NECK
    img[neck] = skin * 0.9
    hair_m = ellipse(s, s, cy - fry * 0.25, cx, fry * 0.85, frx * 1.12)
    labels[hair_m] = HAIR
    img[hair_m] = hair
    face_m = ellipse(s, s, cy + fry * 0.05, cx, fry, frx)
    labels[face_m] = SKIN
    img[face_m] = skin

    eye_y = cy - fry * 0.12
    eye_dx = frx * 0.42
    eye_ry, eye_rx = s * 0.028, s * 0.065
    points = []
    for lbl, brow, sign in ((L_EYE, L_BROW, -1), (R_EYE, R_BROW, 1)):
        ex = cx + sign * eye_dx
        if makeup:
            shadow = ellipse(s, s, eye_y - s * 0.01, ex, eye_ry * 3.2, eye_rx * 1.6) & face_m
            tint = np.array([rng.uniform(90, 170), rng.uniform(20, 80), rng.uniform(90, 180)])
            img[shadow] = 0.45 * img[shadow] + 0.55 * tint
        brow_m = ellipse(s, s, eye_y - s * 0.085, ex, s * 0.018, eye_rx * 1.25) & face_m
        labels[brow_m] = brow
        img[brow_m] = hair * 0.8
        eye_m = ellipse(s, s, eye_y, ex, eye_ry, eye_rx)
        labels[eye_m] = lbl
        img[eye_m] = [235, 235, 235]
        img[ellipse(s, s, eye_y, ex, eye_ry, eye_ry)] = [30, 20, 20]
        for t in np.linspace(0, 2 * np.pi, 6, endpoint=False):
            points.append((ex + eye_rx * np.cos(t), eye_y + eye_ry * np.sin(t)))
        for t in np.linspace(-1, 1, 5):
            points.append((ex + t * eye_rx * 1.2, eye_y - s * 0.085))

    nose_m = ellipse(s, s, cy + fry * 0.15, cx, s * 0.06, s * 0.035)
    labels[nose_m] = NOSE
    img[nose_m] = skin * 0.93
    for t in np.linspace(-0.1, 0.25, 9):
        points.append((cx + (t - 0.075) * s * 0.2, cy + fry * t))

    lip_y = cy + fry * 0.52
    lip_ry, lip_rx = s * 0.045, s * 0.11
    lips = ellipse(s, s, lip_y, cx, lip_ry, lip_rx)
    upper = lips & (np.mgrid[0:s, 0:s][0] < lip_y)
    labels[upper] = U_LIP
    labels[lips & ~upper] = L_LIP
    if makeup:
        lip_col = np.array([rng.uniform(160, 230), rng.uniform(10, 60), rng.uniform(30, 90)])
    else:
        lip_col = skin * np.array([0.95, 0.78, 0.78])
    img[lips] = lip_col
    for t in np.linspace(0, 2 * np.pi, 20, endpoint=False):
        points.append((cx + lip_rx * np.cos(t), lip_y + lip_ry * np.sin(t)))

    for t in np.linspace(np.pi * 0.05, np.pi * 0.95, 17):
        points.append((cx - frx * np.cos(t) * 0.98, cy + fry * 0.05 + fry * np.sin(t) * 0.98))

    img += rng.normal(0, 4, img.shape)
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    pts = np.clip(np.array(points[:68]), 0, s - 1)
    assert len(pts) == 68
    return img, labels, pts


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--makeup", type=int, default=4)
    ap.add_argument("--non-makeup", type=int, default=4)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--no-landmarks", action="store_true")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    root = pathlib.Path(args.out)
    for domain, n in (("makeup", args.makeup), ("non-makeup", args.non_makeup)):
        for sub in ("images", "segs") + (() if args.no_landmarks else ("landmarks",)):
            (root / sub / domain).mkdir(parents=True, exist_ok=True)
        for i in range(n):
            img, labels, pts = face(rng, args.size, domain == "makeup")
            stem = f"{domain.replace('-', '')}_{i:03d}"
            Image.fromarray(img, "RGB").save(root / "images" / domain / f"{stem}.png")
            Image.fromarray(labels, "L").save(root / "segs" / domain / f"{stem}.png")
            if not args.no_landmarks:
                with open(root / "landmarks" / domain / f"{stem}.txt", "w") as f:
                    for x, y in pts:
                        f.write(f"{x:.3f} {y:.3f}\n")


if __name__ == "__main__":
    main()

"""Independent reference for the end-to-end acceptance fixture.

Recomputes CAM alignment and concept counts for the handcrafted 2-image
dataset with numpy/scipy only. The printed values are frozen into
tests/acceptance.cpp.
"""
import math

import numpy as np
from scipy import ndimage

IMG = 8
CLASSES = ["Atelectasis", "Nodule"]
FEATURES = {
    "img_a": np.array([
        [[5, 4, 0, 0], [4, 3, 0, 0], [0, 0, 0, 1], [0, 0, 1, 2]],
        [[0, 0, 0, 3], [0, 1, 0, 0], [0, 0, 2, 0], [3, 0, 0, 4]],
    ], dtype=np.float64),
    "img_b": np.array([
        [[0, 0, 0, 0], [0, 6, 6, 0], [0, 6, 0, 0], [0, 0, 0, 5]],
        [[1, 0, 0, 1], [0, 0, 0, 0], [0, 0, 2, 2], [1, 0, 2, 3]],
    ], dtype=np.float64),
}
HEAD = np.array([[1.0, -0.5], [0.25, 1.0]])
BOXES = {
    "img_a": [("Atelectasis", 0, 0, 4, 4), ("Nodule", 4, 4, 4, 4)],
    "img_b": [("Nodule", 2, 2, 4, 2), ("Nodule", 4, 4, 2, 2)],
}
Q = 0.25


def bilinear(src, dh, dw):
    sh, sw = src.shape
    out = np.zeros((dh, dw))
    for i in range(dh):
        sy = min(max((i + 0.5) * sh / dh - 0.5, 0.0), sh - 1)
        y0 = int(math.floor(sy)); y1 = min(y0 + 1, sh - 1); fy = sy - y0
        for j in range(dw):
            sx = min(max((j + 0.5) * sw / dw - 0.5, 0.0), sw - 1)
            x0 = int(math.floor(sx)); x1 = min(x0 + 1, sw - 1); fx = sx - x0
            top = (1 - fx) * src[y0, x0] + fx * src[y0, x1]
            bot = (1 - fx) * src[y1, x0] + fx * src[y1, x1]
            out[i, j] = (1 - fy) * top + fy * bot
    return out


def box_mask(h, w, boxes, cell_w=1.0, cell_h=1.0):
    m = np.zeros((h, w), dtype=bool)
    for (_, x, y, bw, bh) in boxes:
        for r in range(h):
            for c in range(w):
                ox = min((c + 1) * cell_w, x + bw) - max(c * cell_w, x)
                oy = min((r + 1) * cell_h, y + bh) - max(r * cell_h, y)
                if ox > 0 and oy > 0:
                    m[r, c] = True
    return m


pairs = []
for img, boxes in BOXES.items():
    for k, name in enumerate(CLASSES):
        cls_boxes = [b for b in boxes if b[0] == name]
        if not cls_boxes:
            continue
        cam = np.maximum(0.0, np.tensordot(HEAD[k], FEATURES[img], axes=1))
        lo, hi = cam.min(), cam.max()
        norm = (cam - lo) / (hi - lo) if hi > lo else np.zeros_like(cam)
        up = bilinear(norm, IMG, IMG)
        u = box_mask(IMG, IMG, cls_boxes)
        iobb = up[u].sum() / u.sum()
        ior = up[u].sum() / up.sum()
        pairs.append((img, name, iobb, ior))
        print(f"pair {img} {name}: iobb={iobb!r} ior={ior!r}")

print("mean_iobb", repr(np.mean([p[2] for p in pairs])))
print("mean_ior", repr(np.mean([p[3] for p in pairs])))
for name in CLASSES:
    sel = [p for p in pairs if p[1] == name]
    print(f"class {name}: n={len(sel)} iobb={np.mean([p[2] for p in sel])!r} ior={np.mean([p[3] for p in sel])!r}")

# Dissection
C = 2
taus = []
for c in range(C):
    vals = np.sort(np.concatenate([FEATURES[i][c].ravel() for i in FEATURES]))
    n = len(vals)
    k = math.ceil((1 - Q) * n)
    taus.append(vals[k - 1])
print("tau", taus)

struct8 = np.ones((3, 3), dtype=int)
total = 0
unique = 0
per_channel = [[0, 0] for _ in range(C)]
for img, boxes in BOXES.items():
    region = box_mask(4, 4, boxes, IMG / 4, IMG / 4)
    for c in range(C):
        mask = FEATURES[img][c] >= taus[c]
        labels, n = ndimage.label(mask, structure=struct8)
        hits = sum(1 for l in range(1, n + 1) if np.any(region & (labels == l)))
        print(f"detect {img} ch{c}: components={n} overlapping={hits}")
        total += hits
        unique += hits > 0
        per_channel[c][0] += hits > 0
        per_channel[c][1] += hits
print("disjoint", total / len(BOXES), "unique", unique / len(BOXES), "per_channel", per_channel)

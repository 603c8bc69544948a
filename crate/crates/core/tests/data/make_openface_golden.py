"""Writes the 3-frame OpenFace fixture and the statistics expected from it.

The expected vector is computed here with numpy, independently of the Rust
implementation: population std, max - min ranges, per-eye landmark means
(first 28 eye landmarks are eye 0, the rest eye 1), frame-averaged face
landmark means, AU presence frequencies, and (max, range, std) per AU
intensity.
"""
import numpy as np

AU_R = ["AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU12",
        "AU14", "AU15", "AU17", "AU20", "AU23", "AU25", "AU26", "AU45"]
AU_C = AU_R[:16] + ["AU28", "AU45"]
N_EYE, N_FACE, FRAMES = 56, 68, 3

header = ["frame", "face_id", "timestamp", "confidence", "success"]
header += [f"gaze_{e}_{a}" for e in (0, 1) for a in "xyz"]
header += ["gaze_angle_x", "gaze_angle_y"]
header += [f"eye_lmk_{a}_{i}" for a in "xyXYZ" for i in range(N_EYE)]
header += [f"pose_{a}" for a in ("Tx", "Ty", "Tz", "Rx", "Ry", "Rz")]
header += [f"{a}_{i}" for a in "xyXYZ" for i in range(N_FACE)]
header += ["p_scale", "p_rx", "p_ry", "p_rz", "p_tx", "p_ty"] + [f"p_{i}" for i in range(34)]
header += [f"{a}_r" for a in AU_R] + [f"{a}_c" for a in AU_C]


def value(name, f):
    """Deterministic 3-decimal cell value for column `name` at frame `f`."""
    h = sum(ord(c) * (i + 1) for i, c in enumerate(name))
    if name.endswith("_c"):
        return float((h + f) % 2)
    if name.endswith("_r"):
        return round(((h * 7 + f * (h % 13 + 3) * 29) % 500) / 100.0, 3)
    if name == "frame":
        return float(f + 1)
    if name == "timestamp":
        return round(f * 0.033, 3)
    if name in ("confidence", "success"):
        return 1.0 if name == "success" else 0.98
    if name == "face_id":
        return 0.0
    return round(((h * 31 + f * (h % 97 + 11) * 37) % 20001 - 10000) / 1000.0, 3)


rows = [[value(n, f) for n in header] for f in range(FRAMES)]
data = {n: np.array([rows[f][i] for f in range(FRAMES)]) for i, n in enumerate(header)}


def sr(x):
    return [np.std(x), np.max(x) - np.min(x)]


gaze = []
for e in (0, 1):
    for a in "xyz":
        gaze += sr(data[f"gaze_{e}_{a}"])
gaze += sr(data["gaze_angle_x"]) + sr(data["gaze_angle_y"])
half = N_EYE // 2
eyes = {e: range(e * half, (e + 1) * half) for e in (0, 1)}


def eye_frame_mean(a, e):
    return np.mean([np.mean([data[f"eye_lmk_{a}_{i}"][f] for i in eyes[e]]) for f in range(FRAMES)])


for e in (0, 1):
    gaze += [eye_frame_mean(a, e) for a in "xy"]
for e in (0, 1):
    gaze += [eye_frame_mean(a, e) for a in "XYZ"]

head = []
for a in ("Tx", "Ty", "Tz", "Rx", "Ry", "Rz"):
    head += sr(data[f"pose_{a}"])
for a in "xyXYZ":
    per_frame = np.array([np.mean([data[f"{a}_{i}"][f] for i in range(N_FACE)]) for f in range(FRAMES)])
    head += sr(per_frame)

au = [np.mean(data[f"{a}_c"]) for a in AU_C]
for a in AU_R:
    x = data[f"{a}_r"]
    au += [np.max(x), np.max(x) - np.min(x), np.std(x)]

expected = gaze + head + au
assert (len(gaze), len(head), len(au)) == (26, 22, 69)

with open("openface_3frames.csv", "w") as fh:
    fh.write(", ".join(header) + "\n")
    for r in rows:
        fh.write(", ".join(repr(v) for v in r) + "\n")
with open("openface_3frames_expected.txt", "w") as fh:
    for v in expected:
        fh.write(repr(float(v)) + "\n")

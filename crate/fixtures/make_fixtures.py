#!/usr/bin/env python3
"""Regenerates the dataset-style fixture logs and their expected values.

Run from the repository root:  python3 fixtures/make_fixtures.py

Writes fixtures/{nusc,argo,waymo}/ and fixtures/expected/*.json. The expected
files are computed here with plain rotation-matrix math so the Rust tests
check the adapters against an independent implementation.
"""

import hashlib
import json
import math
import random
import shutil
import struct
import zlib
from pathlib import Path

ROOT = Path(__file__).resolve().parent


# ---- small math kit (scalar-first Hamilton quaternions) ---------------------

def quat_yaw(yaw):
    return [math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)]


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]


def quat_conj(q):
    return [q[0], -q[1], -q[2], -q[3]]


def quat_matrix(q):
    w, x, y, z = q
    return [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]


def matrix_quat(m):
    # Only used on matrices with a positive trace or a dominant diagonal.
    t = m[0][0] + m[1][1] + m[2][2]
    if t > 0:
        s = 2 * math.sqrt(t + 1)
        q = [0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
    elif m[0][0] > m[1][1] and m[0][0] > m[2][2]:
        s = 2 * math.sqrt(1 + m[0][0] - m[1][1] - m[2][2])
        q = [(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
    elif m[1][1] > m[2][2]:
        s = 2 * math.sqrt(1 + m[1][1] - m[0][0] - m[2][2])
        q = [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s]
    else:
        s = 2 * math.sqrt(1 + m[2][2] - m[0][0] - m[1][1])
        q = [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s]
    n = math.sqrt(sum(v * v for v in q))
    q = [v / n for v in q]
    return q if q[0] >= 0 else [-v for v in q]


def mat_vec(m, v):
    return [sum(m[i][k] * v[k] for k in range(3)) for i in range(3)]


def transpose(m):
    return [[m[j][i] for j in range(3)] for i in range(3)]


def to_local(translation, rotation, p):
    """Inverse of the pose (translation, rotation) applied to p."""
    d = [p[i] - translation[i] for i in range(3)]
    return mat_vec(transpose(quat_matrix(rotation)), d)


def to_parent(translation, rotation, p):
    r = mat_vec(quat_matrix(rotation), p)
    return [r[i] + translation[i] for i in range(3)]


def pose_rows(translation, rotation):
    m = quat_matrix(rotation)
    return [
        m[0][0], m[0][1], m[0][2], translation[0],
        m[1][0], m[1][1], m[1][2], translation[1],
        m[2][0], m[2][1], m[2][2], translation[2],
        0.0, 0.0, 0.0, 1.0,
    ]


# ---- file helpers -----------------------------------------------------------

def token(*parts):
    return hashlib.md5("/".join(parts).encode()).hexdigest()


def write_json(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def png(width, height, rgb):
    raw = b"".join(b"\x00" + bytes(rgb) * width for _ in range(height))

    def chunk(kind, data):
        body = kind + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body))

    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0))
        + chunk(b"IDAT", zlib.compress(raw))
        + chunk(b"IEND", b"")
    )


def sweep(seed, n, stride, intensity_max):
    rng = random.Random(seed)
    pts = []
    for _ in range(n):
        p = [rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-2, 3)]
        p = [struct.unpack("<f", struct.pack("<f", v))[0] for v in p]
        i = float(rng.randint(0, int(intensity_max)))
        extra = [float(rng.randint(0, 31))] * (stride - 4)
        pts.append(p + [i] + extra)
    blob = b"".join(struct.pack("<%df" % stride, *p) for p in pts)
    return pts, blob


def reset(path):
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)


# ---- scene description (shared by all three layouts) ------------------------

SCENE = "scene-0001"
CAMERA_TO_EGO_OPTICAL = [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]
LIDAR_T = [0.94, 0.0, 1.84]
LIDAR_Q = quat_yaw(-math.pi / 2)
CAM_T = [1.7, 0.0, 1.5]
CAM_Q = matrix_quat(CAMERA_TO_EGO_OPTICAL)
INTRINSICS = {"fx": 1266.4, "fy": 1266.4, "cx": 816.3, "cy": 491.5, "width": 1600, "height": 900}

# ego → global per frame: (timestamp µs, translation, yaw)
EGO = [
    (1532402927647951, [100.0, 50.0, 0.0], 0.0),
    (1532402928147847, [100.0, 50.0, 0.0], math.pi / 2),
    (1532402928647791, [103.5, 51.25, 0.125], 0.3),
]

# Global-frame boxes per frame: (instance, category, translation, (w, l, h), yaw).
BOXES = [
    [
        ("inst-car-1", "car", [104.0, 52.0, 1.0], (2.0, 4.0, 1.5), 0.0),
        ("inst-ped-1", "pedestrian", [98.5, 47.25, 0.9], (0.6, 0.7, 1.8), -2.5),
    ],
    [
        ("inst-car-1", "car", [100.0, 54.0, 0.0], (2.0, 4.0, 1.5), math.pi / 2),
        ("inst-ped-1", "pedestrian", [98.0, 47.5, 0.9], (0.6, 0.7, 1.8), -2.4),
    ],
    [
        ("inst-car-1", "car", [110.25, 55.5, 0.75], (2.0, 4.0, 1.5), 0.35),
        ("inst-cone-1", "traffic_cone", [107.0, 49.0, 0.4], (0.4, 0.4, 0.8), 0.0),
    ],
]

# Detector output, global frame: (frame, category, translation, (w,l,h), yaw, score).
DETECTIONS = [
    (0, "car", [104.1, 52.05, 1.0], (1.9, 4.1, 1.5), 0.02, 0.9),
    (0, "pedestrian", [98.4, 47.3, 0.9], (0.6, 0.7, 1.7), -2.5, 0.5),
    (2, "car", [140.0, 90.0, 0.5], (2.0, 4.5, 1.6), 1.0, 0.3),
]


def ego_pose(i):
    _, t, yaw = EGO[i]
    return t, quat_yaw(yaw)


def expected_ego_box(i, translation, size_wlh, yaw):
    et, eq = ego_pose(i)
    center = to_local(et, eq, translation)
    rotation = quat_mul(quat_conj(eq), quat_yaw(yaw))
    w, l, h = size_wlh
    return center, [l, w, h], rotation


# ---- nuScenes-style ---------------------------------------------------------

def make_nusc(out):
    reset(out)
    samples, sample_data, egos, anns = [], [], [], []
    sample_tokens = [token("sample", SCENE, str(i)) for i in range(len(EGO))]
    lidar_cs = token("cs", "LIDAR_TOP")
    cam_cs = token("cs", "CAM_FRONT")
    expected_points = {}
    for i, (ts, t, yaw) in enumerate(EGO):
        st = sample_tokens[i]
        samples.append({
            "token": st,
            "timestamp": ts,
            "prev": sample_tokens[i - 1] if i > 0 else "",
            "next": sample_tokens[i + 1] if i + 1 < len(EGO) else "",
        })
        ep = token("ego_pose", st)
        egos.append({"token": ep, "timestamp": ts, "translation": t, "rotation": quat_yaw(yaw)})

        pts, blob = sweep(i, 64, 5, 255)
        lidar_name = f"samples/LIDAR_TOP/{SCENE}__LIDAR_TOP__{ts}.pcd.bin"
        (out / lidar_name).parent.mkdir(parents=True, exist_ok=True)
        (out / lidar_name).write_bytes(blob)
        expected_points[st] = [
            to_parent(LIDAR_T, LIDAR_Q, p[:3]) + [p[3] / 255.0] for p in pts[:8]
        ]
        cam_name = f"samples/CAM_FRONT/{SCENE}__CAM_FRONT__{ts}.png"
        (out / cam_name).parent.mkdir(parents=True, exist_ok=True)
        (out / cam_name).write_bytes(png(16, 9, (40 * i, 90, 160)))
        for ch, cs, fn in (("LIDAR_TOP", lidar_cs, lidar_name), ("CAM_FRONT", cam_cs, cam_name)):
            sample_data.append({
                "token": token("sd", st, ch),
                "sample_token": st,
                "ego_pose_token": ep,
                "calibrated_sensor_token": cs,
                "timestamp": ts,
                "filename": fn,
                "is_key_frame": True,
            })
        for inst, cat, tr, size, byaw in BOXES[i]:
            anns.append({
                "token": token("ann", st, inst),
                "sample_token": st,
                "instance_token": token("instance", inst),
                "translation": tr,
                "size": list(size),
                "rotation": quat_yaw(byaw),
                "category_name": cat,
            })
    sensors = [
        {"token": lidar_cs, "channel": "LIDAR_TOP", "modality": "lidar",
         "translation": LIDAR_T, "rotation": LIDAR_Q},
        {"token": cam_cs, "channel": "CAM_FRONT", "modality": "camera",
         "translation": CAM_T, "rotation": CAM_Q,
         "camera_intrinsic": [[INTRINSICS["fx"], 0.0, INTRINSICS["cx"]],
                              [0.0, INTRINSICS["fy"], INTRINSICS["cy"]],
                              [0.0, 0.0, 1.0]],
         "width": INTRINSICS["width"], "height": INTRINSICS["height"]},
    ]
    categories = [{"token": token("category", c), "name": c}
                  for c in ("car", "pedestrian", "traffic_cone", "truck")]
    results = {st: [] for st in sample_tokens}
    for k, (i, cat, tr, size, yaw, score) in enumerate(DETECTIONS):
        st = sample_tokens[i]
        results[st].append({
            "sample_token": st, "instance_token": token("det", str(k)),
            "translation": tr, "size": list(size), "rotation": quat_yaw(yaw),
            "detection_name": cat, "detection_score": score,
        })
    write_json(out / "sample.json", samples)
    write_json(out / "sample_data.json", sample_data)
    write_json(out / "ego_pose.json", egos)
    write_json(out / "calibrated_sensor.json", sensors)
    write_json(out / "sample_annotation.json", anns)
    write_json(out / "category.json", categories)
    write_json(out / "scene.json", [{
        "token": token("scene", SCENE), "name": SCENE,
        "first_sample_token": sample_tokens[0], "last_sample_token": sample_tokens[-1],
        "nbr_samples": len(sample_tokens),
    }])
    write_json(out / "predictions" / "detector.json", {"meta": {"use_lidar": True}, "results": results})

    frames = []
    for i, st in enumerate(sample_tokens):
        boxes = []
        for inst, cat, tr, size, yaw in BOXES[i]:
            c, s, r = expected_ego_box(i, tr, size, yaw)
            boxes.append({"instance_id": token("instance", inst), "category": cat,
                          "center": c, "size": s, "rotation": r, "global_translation": tr})
        preds = []
        for k, (j, cat, tr, size, yaw, score) in enumerate(DETECTIONS):
            if j == i:
                c, s, r = expected_ego_box(i, tr, size, yaw)
                preds.append({"instance_id": token("det", str(k)), "category": cat,
                              "center": c, "size": s, "rotation": r, "confidence": score})
        et, eq = ego_pose(i)
        frames.append({"frame_id": st, "timestamp_ns": EGO[i][0] * 1000,
                       "ego_translation": et, "ego_rotation": eq,
                       "boxes": boxes, "predictions": {"detector": preds},
                       "first_points": expected_points[st]})
    return {
        "log_id": SCENE,
        "vocabulary": ["car", "pedestrian", "traffic_cone", "truck"],
        "camera": {"name": "CAM_FRONT", "ego_to_camera_translation": to_local(CAM_T, CAM_Q, [0, 0, 0]),
                   **INTRINSICS},
        "frames": frames,
    }


# ---- Argoverse-style --------------------------------------------------------

ARGO_T0 = 315967376859506000
ARGO_BOXES = [
    [("c1f0a8a4-0000-4000-8000-000000000001", "REGULAR_VEHICLE", [4.0, 2.0, 1.0], (4.0, 2.0, 1.5), 0.0),
     ("c1f0a8a4-0000-4000-8000-000000000002", "PEDESTRIAN", [-6.5, 3.25, 0.9], (0.7, 0.6, 1.8), 1.2)],
    [("c1f0a8a4-0000-4000-8000-000000000001", "REGULAR_VEHICLE", [4.5, 2.0, 1.0], (4.0, 2.0, 1.5), 0.05),
     ("c1f0a8a4-0000-4000-8000-000000000002", "PEDESTRIAN", [-6.25, 3.5, 0.9], (0.7, 0.6, 1.8), 1.25)],
    [("c1f0a8a4-0000-4000-8000-000000000001", "REGULAR_VEHICLE", [5.0, 2.125, 1.0], (4.0, 2.0, 1.5), 0.1),
     ("c1f0a8a4-0000-4000-8000-000000000003", "BOLLARD", [12.0, -3.0, 0.5], (0.3, 0.3, 1.0), 0.0)],
]


def make_argo(out):
    reset(out)
    header = ["timestamp_ns", "track_uuid", "category", "tx_m", "ty_m", "tz_m",
              "length_m", "width_m", "height_m", "qw", "qx", "qy", "qz"]
    rows, poses, frames = [], [], []
    for i, boxes in enumerate(ARGO_BOXES):
        ts = ARGO_T0 + i * 100_000_000
        pt = [2500.0 + 1.5 * i, -1200.0 + 0.25 * i, 12.0]
        pq = quat_yaw(-0.8 + 0.01 * i)
        poses.append([ts, *pt, *pq])
        pts, blob = sweep(100 + i, 48, 4, 255)
        (out / "sensors/lidar").mkdir(parents=True, exist_ok=True)
        (out / f"sensors/lidar/{ts}.bin").write_bytes(blob)
        (out / "sensors/cameras/ring_front_center").mkdir(parents=True, exist_ok=True)
        (out / f"sensors/cameras/ring_front_center/{ts}.png").write_bytes(png(16, 12, (200, 40 * i, 10)))
        expected = []
        for uuid, cat, c, (l, w, h), yaw in boxes:
            q = quat_yaw(yaw)
            rows.append([ts, uuid, cat, float(c[0]), float(c[1]), float(c[2]), l, w, h, *q])
            expected.append({"instance_id": uuid, "category": cat, "center": c,
                             "size": [l, w, h], "rotation": q,
                             "global_translation": to_parent(pt, pq, c)})
        frames.append({"frame_id": str(ts), "timestamp_ns": ts, "boxes": expected,
                       "first_points": [p[:3] + [p[3] / 255.0] for p in pts[:8]]})
    write_csv(out / "annotations.csv", header, rows)
    write_csv(out / "city_SE3_egovehicle.csv",
              ["timestamp_ns", "tx", "ty", "tz", "qw", "qx", "qy", "qz"], poses)
    write_csv(out / "calibration.csv",
              ["sensor_name", "tx_m", "ty_m", "tz_m", "qw", "qx", "qy", "qz",
               "fx_px", "fy_px", "cx_px", "cy_px", "width_px", "height_px"],
              [["ring_front_center", 1.63, 0.0, 1.42, *CAM_Q, 1773.0, 1773.0, 775.0, 1018.0, 1550, 2048]])
    pred_rows = [
        [ARGO_T0, "d0000000-0000-4000-8000-000000000001", "REGULAR_VEHICLE", 4.1, 2.0, 1.0,
         4.2, 2.0, 1.5, *quat_yaw(0.01), "", 0.9],
        [ARGO_T0 + 200_000_000, "d0000000-0000-4000-8000-000000000002", "PEDESTRIAN", 30.0, 1.0, 0.9,
         0.7, 0.6, 1.8, *quat_yaw(0.0), "", 0.3],
        [ARGO_T0 + 200_000_000, "d0000000-0000-4000-8000-000000000003", "BOLLARD", 12.0, -3.0, 0.5,
         0.3, 0.3, 1.0, *quat_yaw(0.0), "", 0.5],
    ]
    write_csv(out / "predictions/detector.csv", header + ["attributes", "score"], pred_rows)
    return {"frames": frames}


# ---- Waymo-style ------------------------------------------------------------

WAYMO_T0 = 1550083467346370
WAYMO_BOXES = [
    [("veh_0001", "TYPE_VEHICLE", [10.0, -2.0, 0.9], (4.6, 2.0, 1.7), 0.25),
     ("ped_0002", "TYPE_PEDESTRIAN", [6.0, 4.5, 0.9], (0.8, 0.8, 1.75), -1.5)],
    [("veh_0001", "TYPE_VEHICLE", [9.5, -2.0, 0.9], (4.6, 2.0, 1.7), 0.3),
     ("ped_0002", "TYPE_PEDESTRIAN", [5.75, 4.25, 0.9], (0.8, 0.8, 1.75), -1.45)],
    [("veh_0001", "TYPE_VEHICLE", [9.0, -2.0, 0.9], (4.6, 2.0, 1.7), math.pi),
     ("cyc_0003", "TYPE_CYCLIST", [15.0, 6.0, 1.0], (1.8, 0.7, 1.7), 2.0)],
]


def make_waymo(out):
    reset(out)
    lines, frames = [], []
    cam = {"name": "FRONT", "extrinsic": pose_rows([1.5, 0.0, 2.0], quat_yaw(0.0)),
           "intrinsic": [2055.6, 2055.6, 939.7, 641.1], "width": 1920, "height": 1280}
    for i, boxes in enumerate(WAYMO_BOXES):
        ts = WAYMO_T0 + i * 100_000
        pt = [-3000.0 + 0.8 * i, 500.0, 200.0]
        pq = quat_yaw(2.0)
        pts, blob = sweep(200 + i, 40, 4, 1)
        (out / "lidar").mkdir(parents=True, exist_ok=True)
        (out / f"lidar/{ts}.bin").write_bytes(blob)
        (out / "camera/FRONT").mkdir(parents=True, exist_ok=True)
        (out / f"camera/FRONT/{ts}.png").write_bytes(png(12, 8, (10, 200, 40 * i)))
        labels, expected = [], []
        for bid, cat, c, (l, w, h), yaw in boxes:
            labels.append({"id": bid, "type": cat, "box": {
                "center_x": c[0], "center_y": c[1], "center_z": c[2],
                "length": l, "width": w, "height": h, "heading": yaw}})
            expected.append({"instance_id": bid, "category": cat, "center": c,
                             "size": [l, w, h], "rotation": quat_yaw(yaw),
                             "global_translation": to_parent(pt, pq, c)})
        preds = {"detector": []}
        if i == 0:
            preds["detector"] = [
                {"id": "det_a", "type": "TYPE_VEHICLE", "score": 0.9, "box": {
                    "center_x": 10.1, "center_y": -2.0, "center_z": 0.9,
                    "length": 4.5, "width": 2.0, "height": 1.7, "heading": 0.25}},
                {"id": "det_b", "type": "TYPE_PEDESTRIAN", "score": 0.5, "box": {
                    "center_x": 6.0, "center_y": 4.4, "center_z": 0.9,
                    "length": 0.8, "width": 0.8, "height": 1.7, "heading": -1.5}},
                {"id": "det_c", "type": "TYPE_VEHICLE", "score": 0.3, "box": {
                    "center_x": 62.0, "center_y": 10.0, "center_z": 1.0,
                    "length": 4.0, "width": 1.9, "height": 1.6, "heading": 0.0}},
            ]
        lines.append({
            "context_name": "segment-0001", "timestamp_micros": ts,
            "pose": pose_rows(pt, pq), "lidar": f"lidar/{ts}.bin",
            "images": {"FRONT": f"camera/FRONT/{ts}.png"},
            "camera_calibrations": [cam], "laser_labels": labels, "predictions": preds,
        })
        frames.append({"frame_id": str(ts * 1000), "timestamp_ns": ts * 1000, "boxes": expected,
                       "first_points": [p[:4] for p in pts[:8]]})
    (out / "frames.jsonl").write_text("".join(json.dumps(l, sort_keys=True) + "\n" for l in lines))
    return {"frames": frames}


def main():
    write_json(ROOT / "expected" / "nusc.json", make_nusc(ROOT / "nusc"))
    write_json(ROOT / "expected" / "argo.json", make_argo(ROOT / "argo"))
    write_json(ROOT / "expected" / "waymo.json", make_waymo(ROOT / "waymo"))


if __name__ == "__main__":
    main()

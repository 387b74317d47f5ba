"""File formats for the vision pipeline: templates, scenes, depth, poses.

Feature sets, templates, intrinsics, and object poses serialize to JSON.
Depth maps use the portable float map (PFM) format: single-channel float32,
rows stored bottom-up, little-endian (negative scale), readable by standard
image tooling.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ParseError
from .mathcore import EulerAngles, Pose
from .vision import (CameraIntrinsics, DepthMap, FeatureSet, ObjectPose,
                     Template)


def save_feature_set(fs: FeatureSet, path):
    data = {
        "keypoints": fs.keypoints.tolist(),
        "descriptors": fs.descriptors.tolist(),
        "descriptor_dtype": str(fs.descriptors.dtype),
    }
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_feature_set(path) -> FeatureSet:
    with open(path) as fh:
        data = json.load(fh)
    try:
        dtype = np.dtype(data.get("descriptor_dtype", "float64"))
        return FeatureSet(np.array(data["keypoints"], dtype=float),
                          np.array(data["descriptors"], dtype=dtype))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad feature-set file {path}: {exc}") from exc


def save_template(t: Template, path):
    data = {
        "width": t.width,
        "height": t.height,
        "metric_scale": t.metric_scale,
        "keypoints": t.features.keypoints.tolist(),
        "descriptors": t.features.descriptors.tolist(),
        "descriptor_dtype": str(t.features.descriptors.dtype),
    }
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_template(path) -> Template:
    with open(path) as fh:
        data = json.load(fh)
    try:
        dtype = np.dtype(data.get("descriptor_dtype", "float64"))
        fs = FeatureSet(np.array(data["keypoints"], dtype=float),
                        np.array(data["descriptors"], dtype=dtype))
        return Template(fs, float(data["width"]), float(data["height"]),
                        float(data.get("metric_scale", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad template file {path}: {exc}") from exc


def save_intrinsics(K: CameraIntrinsics, path):
    data = {"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy,
            "width": K.width, "height": K.height}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)


def load_intrinsics(path) -> CameraIntrinsics:
    with open(path) as fh:
        data = json.load(fh)
    try:
        return CameraIntrinsics(float(data["fx"]), float(data["fy"]),
                                float(data["cx"]), float(data["cy"]),
                                int(data["width"]), int(data["height"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad intrinsics file {path}: {exc}") from exc


def save_depth_pfm(depth: DepthMap, path):
    d = depth.depth.astype(np.float32)
    h, w = d.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.flipud(d).tobytes())


def load_depth_pfm(path) -> DepthMap:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"Pf":
            raise ParseError(f"{path}: not a single-channel PFM file", line=1)
        dims = fh.readline().split()
        if len(dims) != 2:
            raise ParseError(f"{path}: bad dimensions line", line=2)
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        data = fh.read(w * h * 4)
        if len(data) != w * h * 4:
            raise ParseError(f"{path}: truncated pixel data", line=4)
        arr = np.frombuffer(data, dtype="<f4" if scale < 0 else ">f4")
        grid = np.flipud(arr.reshape(h, w)).astype(float)
    return DepthMap(grid)


def object_pose_dict(op: ObjectPose) -> dict:
    deg = np.degrees(op.euler.as_array())
    return {
        "position_m": op.pose.position.tolist(),
        "rotation": op.pose.rotation.tolist(),
        "euler_rad": {"phi": op.euler.phi, "theta": op.euler.theta, "psi": op.euler.psi},
        "euler_deg": {"phi": deg[0], "theta": deg[1], "psi": deg[2]},
        "gimbal_lock": op.euler.gimbal_lock,
        "inlier_count": op.inlier_count,
        "reprojection_rmse_px": op.reprojection_rmse,
    }


def save_object_pose(op: ObjectPose, path):
    with open(path, "w") as fh:
        json.dump(object_pose_dict(op), fh, indent=2)


def load_object_pose(path) -> ObjectPose:
    with open(path) as fh:
        data = json.load(fh)
    try:
        e = data["euler_rad"]
        return ObjectPose(
            Pose(np.array(data["position_m"], dtype=float),
                 np.array(data["rotation"], dtype=float)),
            EulerAngles(float(e["phi"]), float(e["theta"]), float(e["psi"]),
                        bool(data.get("gimbal_lock", False))),
            int(data["inlier_count"]),
            float(data["reprojection_rmse_px"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad object-pose file {path}: {exc}") from exc

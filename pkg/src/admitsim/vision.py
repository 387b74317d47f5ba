"""Planar pose estimation: matching, DLT homography, RANSAC, depth fusion.

The pipeline recovers a textured planar object's 6-DOF pose from a template
image and a scene view:

  1. descriptor matching with a ratio test,
  2. robust homography estimation (normalized DLT inside RANSAC),
  3. template reference points mapped into the scene and lifted to 3D with
     the depth map and pinhole intrinsics,
  4. object frame from the lifted direction vectors, then Euler angles.

Feature extraction itself sits behind FeatureSet; tests drive the geometry
with synthetic scenes (see synthetic_scene) so the pipeline is exercised
independently of any particular detector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (ConsensusFailed, DegenerateConfiguration, NoDepth,
                     PointAtInfinity, TooFewMatches)
from .mathcore import (EulerAngles, Pose, euler_from_rotation,
                       orthonormal_frame, rotation_from_axes)


@dataclass(frozen=True)
class FeatureSet:
    """Keypoint pixel coordinates (n, 2) and descriptors (n, d).

    Descriptors with an unsigned-integer dtype are treated as binary
    (Hamming distance); float descriptors use Euclidean distance.
    """

    keypoints: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self):
        kp = np.atleast_2d(np.asarray(self.keypoints, dtype=float))
        desc = np.atleast_2d(np.asarray(self.descriptors))
        if kp.shape[0] != desc.shape[0]:
            raise ValueError("keypoints and descriptors must have equal length")
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "descriptors", desc)

    def __len__(self):
        return self.keypoints.shape[0]


@dataclass(frozen=True)
class Correspondence:
    template_point: tuple
    scene_point: tuple
    match_score: float


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be > 0")


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth in meters; 0 marks invalid."""

    depth: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=float)
        if d.ndim != 2:
            raise ValueError("depth must be a 2-D grid")
        if np.any(~np.isfinite(d)) or np.any(d < 0):
            raise ValueError("depth must be finite and non-negative")
        object.__setattr__(self, "depth", d)

    @property
    def shape(self):
        return self.depth.shape


@dataclass(frozen=True)
class ObjectPose:
    pose: Pose
    euler: EulerAngles
    inlier_count: int
    reprojection_rmse: float


def _pairwise_distances(da, db):
    if np.issubdtype(da.dtype, np.unsignedinteger):
        # Hamming distance over bits.
        xor = da[:, None, :] ^ db[None, :, :]
        return np.unpackbits(xor, axis=2).sum(axis=2).astype(float)
    da = da.astype(float)
    db = db.astype(float)
    sq = (np.sum(da * da, axis=1)[:, None] + np.sum(db * db, axis=1)[None, :]
          - 2.0 * da @ db.T)
    return np.sqrt(np.maximum(sq, 0.0))


def match_features(template: FeatureSet, scene: FeatureSet, ratio=0.75):
    """Nearest-neighbor matching with the ratio test.

    A template descriptor matches its nearest scene descriptor only when
    the best distance is under ratio times the second best. Raises
    TooFewMatches when fewer than 4 survive.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    if template.descriptors.shape[1] != scene.descriptors.shape[1]:
        raise ValueError("descriptor lengths differ")
    dists = _pairwise_distances(template.descriptors, scene.descriptors)
    matches = []
    for i in range(dists.shape[0]):
        row = dists[i]
        if row.shape[0] < 2:
            best = int(np.argmin(row))
            if row[best] == 0.0:
                matches.append(Correspondence(tuple(template.keypoints[i]),
                                              tuple(scene.keypoints[best]),
                                              float(row[best])))
            continue
        order = np.argsort(row, kind="stable")
        best, second = int(order[0]), int(order[1])
        if row[best] < ratio * row[second]:
            matches.append(Correspondence(tuple(template.keypoints[i]),
                                          tuple(scene.keypoints[best]),
                                          float(row[best])))
    if len(matches) < 4:
        raise TooFewMatches(f"only {len(matches)} matches passed the ratio test")
    return matches


def normalize_homography(H):
    """Scale to unit Frobenius norm with a deterministic sign convention."""
    H = np.asarray(H, dtype=float)
    n = np.linalg.norm(H)
    if n < 1e-300:
        raise DegenerateConfiguration("zero homography")
    H = H / n
    if abs(H[2, 2]) > 1e-12:
        sign = np.sign(H[2, 2])
    else:
        flat = H.reshape(-1)
        sign = np.sign(flat[np.argmax(np.abs(flat))])
    return H * sign


def apply_homography(H, p):
    """Map (x, y) through H with the projective division x' = a/c, y' = b/c."""
    x, y = float(p[0]), float(p[1])
    a, b, c = np.asarray(H, dtype=float) @ np.array([x, y, 1.0])
    if abs(c) <= 1e-12:
        raise PointAtInfinity(f"point ({x:g}, {y:g}) maps to infinity")
    return (a / c, b / c)


def _apply_homography_many(H, pts):
    ph = np.column_stack([pts, np.ones(len(pts))])
    q = ph @ np.asarray(H, dtype=float).T
    w = q[:, 2]
    bad = np.abs(w) <= 1e-12
    w = np.where(bad, 1.0, w)
    out = q[:, :2] / w[:, None]
    out[bad] = np.inf
    return out


def _hartley_normalization(pts):
    c = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - c) ** 2, axis=1)))
    if rms < 1e-12:
        raise DegenerateConfiguration("coincident points")
    s = np.sqrt(2.0) / rms
    T = np.array([[s, 0.0, -s * c[0]],
                  [0.0, s, -s * c[1]],
                  [0.0, 0.0, 1.0]])
    return (pts - c) * s, T


def estimate_homography_dlt(correspondences):
    """Least-squares DLT homography with Hartley point normalization.

    Exact (reprojection < 1e-9 px) for noiseless inputs. Raises
    DegenerateConfiguration for rank-deficient point sets, e.g. when the
    template points are collinear.
    """
    if len(correspondences) < 4:
        raise DegenerateConfiguration("need at least 4 correspondences")
    src = np.array([c.template_point for c in correspondences], dtype=float)
    dst = np.array([c.scene_point for c in correspondences], dtype=float)
    src_n, Ts = _hartley_normalization(src)
    dst_n, Td = _hartley_normalization(dst)
    n = len(src_n)
    A = np.zeros((2 * n, 9))
    x, y = src_n[:, 0], src_n[:, 1]
    u, v = dst_n[:, 0], dst_n[:, 1]
    A[0::2, 0] = x
    A[0::2, 1] = y
    A[0::2, 2] = 1.0
    A[0::2, 6] = -u * x
    A[0::2, 7] = -u * y
    A[0::2, 8] = -u
    A[1::2, 3] = x
    A[1::2, 4] = y
    A[1::2, 5] = 1.0
    A[1::2, 6] = -v * x
    A[1::2, 7] = -v * y
    A[1::2, 8] = -v
    _, svals, Vt = np.linalg.svd(A)
    # Rank 8 required: a second vanishing singular value means the points
    # do not determine a homography (collinear/coincident configurations).
    if svals[7] < 1e-9 * max(svals[0], 1e-300):
        raise DegenerateConfiguration("point configuration is degenerate")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    H = normalize_homography(H)
    if abs(np.linalg.det(H)) <= 1e-12:
        raise DegenerateConfiguration("estimated homography is singular")
    return H


def reprojection_errors(H, correspondences):
    src = np.array([c.template_point for c in correspondences], dtype=float)
    dst = np.array([c.scene_point for c in correspondences], dtype=float)
    proj = _apply_homography_many(H, src)
    return np.linalg.norm(proj - dst, axis=1)


def ransac_homography(correspondences, threshold_px=3.0, max_iters=2000,
                      seed=0, confidence=0.99):
    """RANSAC over 4-point DLT models; returns (H, inlier_mask).

    The consensus model is refit by DLT on all inliers and the mask is
    recomputed against the refit model, so the returned mask and homography
    are mutually consistent. Deterministic under the seed; iterations stop
    early once the adaptive confidence bound is reached.
    """
    n = len(correspondences)
    if n < 4:
        raise ConsensusFailed(f"need at least 4 correspondences, got {n}")
    rng = np.random.default_rng(seed)
    src = np.array([c.template_point for c in correspondences], dtype=float)
    dst = np.array([c.scene_point for c in correspondences], dtype=float)

    best_mask = None
    best_count = 0
    best_err = np.inf
    needed = max_iters
    it = 0
    while it < min(max_iters, needed):
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        subset = [correspondences[i] for i in idx]
        try:
            H = estimate_homography_dlt(subset)
        except DegenerateConfiguration:
            continue
        proj = _apply_homography_many(H, src)
        err = np.linalg.norm(proj - dst, axis=1)
        mask = err < threshold_px
        count = int(mask.sum())
        mean_err = float(err[mask].mean()) if count else np.inf
        if count > best_count or (count == best_count and mean_err < best_err):
            best_count = count
            best_mask = mask
            best_err = mean_err
            if count >= 4:
                ratio = count / n
                if ratio >= 1.0:
                    break
                denom = np.log(max(1e-12, 1.0 - ratio ** 4))
                needed = int(np.ceil(np.log(1.0 - confidence) / denom))
    if best_mask is None or best_count < 4:
        raise ConsensusFailed(f"best consensus has {best_count} inliers")

    inliers = [correspondences[i] for i in np.flatnonzero(best_mask)]
    H = estimate_homography_dlt(inliers)
    err = reprojection_errors(H, correspondences)
    mask = err < threshold_px
    if int(mask.sum()) < 4:
        # Refit degraded the consensus; fall back to the minimal-model mask.
        mask = best_mask
        H = estimate_homography_dlt([correspondences[i] for i in np.flatnonzero(mask)])
    return H, mask


def reference_points(w, h):
    """Template-frame reference points: center, right-edge middle, top middle."""
    if w <= 0 or h <= 0:
        raise ValueError("template dimensions must be > 0")
    return (w / 2.0, h / 2.0), (float(w), h / 2.0), (w / 2.0, 0.0)


def _depth_at(depth: DepthMap, u, v):
    """Depth at a subpixel location via bilinear interpolation of 1/z.

    Inverse depth is linear in pixel coordinates for a planar surface, so
    bilinear interpolation is exact there. Falls back to the median of
    valid depths in a 5x5 window when any interpolation corner is invalid.
    """
    d = depth.depth
    hpx, wpx = d.shape
    if not (0 <= u <= wpx - 1 and 0 <= v <= hpx - 1):
        raise NoDepth(f"pixel ({u:.1f}, {v:.1f}) out of bounds")
    x0 = int(np.floor(u))
    y0 = int(np.floor(v))
    x1 = min(x0 + 1, wpx - 1)
    y1 = min(y0 + 1, hpx - 1)
    corners = d[[y0, y0, y1, y1], [x0, x1, x0, x1]]
    if np.all(corners > 0):
        fx = u - x0
        fy = v - y0
        inv = 1.0 / corners
        top = inv[0] * (1 - fx) + inv[1] * fx
        bot = inv[2] * (1 - fx) + inv[3] * fx
        return 1.0 / (top * (1 - fy) + bot * fy)
    yc = int(round(v))
    xc = int(round(u))
    window = d[max(0, yc - 2):yc + 3, max(0, xc - 2):xc + 3]
    valid = window[window > 0]
    if valid.size == 0:
        raise NoDepth(f"no valid depth in 5x5 window at ({u:.1f}, {v:.1f})")
    return float(np.median(valid))


def backproject(pixel, depth: DepthMap, K: CameraIntrinsics):
    """Lift a pixel to camera-frame 3D: (z (u-cx)/fx, z (v-cy)/fy, z)."""
    u, v = float(pixel[0]), float(pixel[1])
    z = _depth_at(depth, u, v)
    return np.array([z * (u - K.cx) / K.fx, z * (v - K.cy) / K.fy, z])


@dataclass(frozen=True)
class Template:
    """Reference view of the planar object: features plus pixel dimensions."""

    features: FeatureSet
    width: float   # px
    height: float  # px
    metric_scale: float = 0.0  # m per px, 0 when unknown


def estimate_object_pose(template: Template, scene: FeatureSet,
                         depth: DepthMap, K: CameraIntrinsics,
                         ratio=0.75, threshold_px=3.0, max_iters=2000,
                         seed=0) -> ObjectPose:
    """Full pipeline from feature sets to the object's camera-frame pose.

    Component failures propagate with a stage label prefixed to the message.
    """
    try:
        matches = match_features(template.features, scene, ratio)
    except TooFewMatches as exc:
        raise TooFewMatches(f"matching: {exc}") from exc
    try:
        H, mask = ransac_homography(matches, threshold_px, max_iters, seed)
    except ConsensusFailed as exc:
        raise ConsensusFailed(f"homography: {exc}") from exc
    inliers = [matches[i] for i in np.flatnonzero(mask)]
    rmse = float(np.sqrt(np.mean(reprojection_errors(H, inliers) ** 2)))

    p_c, p_x, p_y = reference_points(template.width, template.height)
    try:
        sc = apply_homography(H, p_c)
        sx = apply_homography(H, p_x)
        sy = apply_homography(H, p_y)
    except PointAtInfinity as exc:
        raise PointAtInfinity(f"perspective transform: {exc}") from exc
    try:
        c3 = backproject(sc, depth, K)
        x3 = backproject(sx, depth, K)
        y3 = backproject(sy, depth, K)
    except NoDepth as exc:
        raise NoDepth(f"depth fusion: {exc}") from exc

    i, j, k = orthonormal_frame(x3 - c3, y3 - c3)
    R = rotation_from_axes(i, j, k)
    euler = euler_from_rotation(R)
    return ObjectPose(Pose(c3, R), euler, int(mask.sum()), rmse)

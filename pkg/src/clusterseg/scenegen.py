"""Synthetic RGB-D scene generation.

Scenes are lists of analytic primitives (spheres and oriented boxes)
authored directly in the camera frame. Rendering is exact per-pixel ray
casting with a z-buffer: the nearest positive hit wins, ties closer than
1e-9 m resolve to the lower instance ID. Each frame carries RGB, depth,
XYZ, the modal instance-ID map, per-object amodal masks, and per-object
occlusion scores (visible pixels / amodal pixels).

Scene JSON schema (see scene_to_json / scene_from_json):

    {
      "camera": {"fx", "fy", "ppx", "ppy", "width", "height"},
      "background_depth": <meters> | null,
      "objects": [
        {"kind": "sphere" | "box",
         "quaternion": [w, x, y, z],
         "translation": [x, y, z],
         "half_extents": [hx, hy, hz],
         "albedo": [r, g, b]},
        ...
      ]
    }
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ClusterSegError, MaskContainmentError, PlacementError, ShapeMismatchError
from .geometry import CameraIntrinsics, compute_object_feature, depth_to_xyz, feature_distance
from .seeding import STREAM_SCENE, stream_rng

# Two hits closer than this along one ray count as a tie; lower ID wins.
DEPTH_TIE_EPS = 1e-9
# Hits closer than this to the camera are discarded as self-intersections.
RAY_MIN_T = 1e-9

SURFACE_SAMPLE_COUNT = 4096


@dataclass(frozen=True)
class Primitive:
    """One analytic object: a sphere or an oriented box.

    quaternion is (w, x, y, z), unit within 1e-9; translation is the object
    center in the camera frame (meters). For spheres all three half extents
    must equal the radius.
    """

    kind: str
    quaternion: tuple
    translation: tuple
    half_extents: tuple
    albedo: tuple

    def __post_init__(self):
        if self.kind not in ("sphere", "box"):
            raise ClusterSegError(f"unknown primitive kind {self.kind!r}")
        q = np.asarray(self.quaternion, dtype=np.float64)
        if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ClusterSegError("quaternion must be a unit 4-vector (w, x, y, z)")
        he = np.asarray(self.half_extents, dtype=np.float64)
        if he.shape != (3,) or np.any(he <= 0):
            raise ClusterSegError("half_extents must be three positive values")
        if self.kind == "sphere" and (he[0] != he[1] or he[1] != he[2]):
            raise ClusterSegError("sphere half_extents must replicate the radius")

    @property
    def rotation(self) -> np.ndarray:
        """3x3 rotation matrix of the unit quaternion."""
        w, x, y, z = self.quaternion
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])


@dataclass(frozen=True)
class Scene:
    """Objects (instance IDs 1..K in list order) plus the camera.

    background_depth is the depth of a flat backdrop perpendicular to the
    optical axis, or None for an empty background (depth 0 = no hit).
    """

    objects: tuple
    camera: CameraIntrinsics
    background_depth: float | None = None


@dataclass
class FrameBundle:
    """One rendered frame with modal and amodal ground truth."""

    rgb: np.ndarray            # H x W x 3 in [0, 1]
    depth: np.ndarray          # H x W meters, 0 = no hit
    xyz: np.ndarray            # H x W x 3 camera-frame points
    instance_map: np.ndarray   # H x W int, 0 = background
    amodal_masks: np.ndarray   # K x H x W bool
    occlusion_scores: np.ndarray  # K floats in [0, 1]


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for sample_scene."""

    count_range: tuple = (2, 8)
    size_range: tuple = (0.06, 0.18)
    x_range: tuple = (-0.35, 0.35)
    y_range: tuple = (-0.35, 0.35)
    z_range: tuple = (0.9, 1.8)
    min_feature_separation: float = 0.1
    max_attempts: int = 200
    sphere_prob: float = 0.5
    background_depth: float | None = 2.5
    camera: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics(64.0, 64.0, 32.0, 32.0, 64, 64))


def surface_points(prim: Primitive, n: int = SURFACE_SAMPLE_COUNT) -> np.ndarray:
    """Deterministic ~n-point sample of the primitive's surface, camera frame.

    Spheres use a Fibonacci spiral plus the six axis extremes (exactly n
    points); rotation is skipped since it cannot change a sphere. Boxes get
    an endpoint-inclusive grid on each face sized by face area, so the
    rotated corners, and therefore the camera-frame bounds, are sampled
    exactly; the count is then approximately n.
    """
    t = np.asarray(prim.translation, dtype=np.float64)
    he = np.asarray(prim.half_extents, dtype=np.float64)
    if prim.kind == "sphere":
        r = he[0]
        m = n - 6
        i = np.arange(m, dtype=np.float64)
        z = 1.0 - (2.0 * i + 1.0) / m
        phi = i * np.pi * (3.0 - np.sqrt(5.0))
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        pts = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
        extremes = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0],
                             [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64)
        return np.vstack([extremes, pts]) * r + t

    areas = np.array([he[1] * he[2], he[2] * he[0], he[0] * he[1]])  # faces normal to x, y, z
    weights = np.repeat(areas, 2)
    weights = weights / weights.sum()
    faces = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            share = weights[2 * axis + (0 if sign > 0 else 1)]
            m = max(4, int(round(n * share)))
            g = max(2, int(round(np.sqrt(m))))
            a_axis, b_axis = [i for i in range(3) if i != axis]
            a = np.linspace(-he[a_axis], he[a_axis], g)
            b = np.linspace(-he[b_axis], he[b_axis], g)
            aa, bb = np.meshgrid(a, b)
            face = np.zeros((g * g, 3))
            face[:, axis] = sign * he[axis]
            face[:, a_axis] = aa.ravel()
            face[:, b_axis] = bb.ravel()
            faces.append(face)
    local = np.vstack(faces)
    return local @ prim.rotation.T + t


def object_feature_of(prim: Primitive, n: int = SURFACE_SAMPLE_COUNT) -> np.ndarray:
    """Object feature of a primitive from its fixed surface sample."""
    return compute_object_feature(surface_points(prim, n))


def _min_z_bound(prim: Primitive) -> float:
    # Conservative under any rotation: center z minus the bounding radius.
    he = np.asarray(prim.half_extents, dtype=np.float64)
    radius = he[0] if prim.kind == "sphere" else float(np.linalg.norm(he))
    return float(prim.translation[2]) - radius


def sample_scene(seed: int, cfg: GeneratorConfig = GeneratorConfig()) -> Scene:
    """Randomly populate a Scene; deterministic for a fixed seed.

    Objects whose feature lands within cfg.min_feature_separation of an
    already placed object's feature are rejection-resampled so no two
    instances are indistinguishable in feature space.
    """
    rng = stream_rng(seed, STREAM_SCENE)
    count = int(rng.integers(cfg.count_range[0], cfg.count_range[1] + 1))
    objects = []
    features = []
    for _ in range(count):
        for attempt in range(cfg.max_attempts):
            kind = "sphere" if rng.random() < cfg.sphere_prob else "box"
            if kind == "sphere":
                r = rng.uniform(*cfg.size_range)
                he = (r, r, r)
            else:
                he = tuple(rng.uniform(*cfg.size_range) for _ in range(3))
            q = rng.normal(size=4)
            norm = np.linalg.norm(q)
            if norm < 1e-12:
                continue
            q = q / norm
            trans = (rng.uniform(*cfg.x_range), rng.uniform(*cfg.y_range),
                     rng.uniform(*cfg.z_range))
            albedo = tuple(rng.uniform(0.25, 0.95, size=3))
            prim = Primitive(kind=kind, quaternion=tuple(q), translation=trans,
                             half_extents=he, albedo=albedo)
            if _min_z_bound(prim) <= 0.05:
                continue
            xi = object_feature_of(prim)
            if any(feature_distance(xi, other) < cfg.min_feature_separation
                   for other in features):
                continue
            objects.append(prim)
            features.append(xi)
            break
        else:
            raise PlacementError(
                f"could not place object {len(objects) + 1} within {cfg.max_attempts} attempts")
    return Scene(objects=tuple(objects), camera=cfg.camera,
                 background_depth=cfg.background_depth)


def _ray_directions(intr: CameraIntrinsics) -> np.ndarray:
    # dz is fixed at 1 so the ray parameter t equals z-depth directly.
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    dx = (u[None, :] - intr.ppx) / intr.fx
    dy = (v[:, None] - intr.ppy) / intr.fy
    dx, dy = np.broadcast_arrays(dx, dy)
    return np.stack([dx, dy, np.ones_like(dx)], axis=-1)


def _intersect_sphere(prim: Primitive, dirs: np.ndarray):
    c = np.asarray(prim.translation, dtype=np.float64)
    r = prim.half_extents[0]
    dd = np.einsum("hwc,hwc->hw", dirs, dirs)
    dc = np.einsum("hwc,c->hw", dirs, c)
    disc = dc * dc - dd * (c @ c - r * r)
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = (dc - sq) / dd
    t_far = (dc + sq) / dd
    t = np.where(t_near > RAY_MIN_T, t_near, t_far)
    t = np.where(hit & (t > RAY_MIN_T), t, np.inf)
    t_safe = np.where(np.isfinite(t), t, 1.0)
    n = (dirs * t_safe[..., None] - c) / r
    return t, n


def _intersect_box(prim: Primitive, dirs: np.ndarray):
    R = prim.rotation
    he = np.asarray(prim.half_extents, dtype=np.float64)
    o_local = -(R.T @ np.asarray(prim.translation, dtype=np.float64))
    d_local = np.einsum("ij,hwj->hwi", R.T, dirs)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = (-he - o_local) / d_local
        hi = (he - o_local) / d_local
    parallel = d_local == 0.0
    inside = np.abs(o_local) <= he
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
    t1 = np.minimum(lo, hi)
    t2 = np.maximum(lo, hi)
    t_near = t1.max(axis=-1)
    t_far = t2.min(axis=-1)
    hit = (t_far >= t_near) & (t_far > RAY_MIN_T)
    t = np.where(t_near > RAY_MIN_T, t_near, t_far)
    t = np.where(hit, t, np.inf)
    # Normal of the face whose slab bounds the entry (or exit, if inside).
    face_axis = np.argmax(np.where(np.isfinite(t1), t1, -np.inf), axis=-1)
    entry = t_near > RAY_MIN_T
    axis_onehot = np.eye(3)[face_axis]
    d_axis = np.take_along_axis(d_local, face_axis[..., None], axis=-1)[..., 0]
    exit_axis = np.argmin(np.where(np.isfinite(t2), t2, np.inf), axis=-1)
    exit_onehot = np.eye(3)[exit_axis]
    d_exit = np.take_along_axis(d_local, exit_axis[..., None], axis=-1)[..., 0]
    n_local = np.where(entry[..., None],
                       -np.sign(d_axis)[..., None] * axis_onehot,
                       np.sign(d_exit)[..., None] * exit_onehot)
    n = np.einsum("ij,hwj->hwi", R, n_local)
    return t, n


def render(scene: Scene) -> FrameBundle:
    """Ray-cast the scene into a FrameBundle. Deterministic and bit-exact."""
    intr = scene.camera
    H, W = intr.height, intr.width
    dirs = _ray_directions(intr)
    K = len(scene.objects)
    t_maps = np.full((K, H, W), np.inf)
    normals = np.zeros((K, H, W, 3))
    for k, prim in enumerate(scene.objects):
        if prim.kind == "sphere":
            t_maps[k], normals[k] = _intersect_sphere(prim, dirs)
        else:
            t_maps[k], normals[k] = _intersect_box(prim, dirs)

    best_t = np.full((H, W), np.inf)
    winner = np.zeros((H, W), dtype=np.int32)
    for k in range(K):
        closer = t_maps[k] < best_t - DEPTH_TIE_EPS
        best_t = np.where(closer, t_maps[k], best_t)
        winner = np.where(closer, k + 1, winner)

    fg = winner > 0
    depth = np.where(fg, best_t, 0.0)
    if scene.background_depth is not None:
        depth = np.where(fg, depth, scene.background_depth)

    rgb = np.zeros((H, W, 3))
    if scene.background_depth is not None:
        rgb[:] = 0.15
    inv_len = 1.0 / np.linalg.norm(dirs, axis=-1)
    for k, prim in enumerate(scene.objects):
        sel = winner == k + 1
        if not np.any(sel):
            continue
        lambert = -np.einsum("hwc,hwc->hw", normals[k], dirs) * inv_len
        shade = 0.2 + 0.8 * np.clip(lambert, 0.0, 1.0)
        rgb[sel] = np.asarray(prim.albedo) * shade[sel, None]
    rgb = np.clip(rgb, 0.0, 1.0)

    amodal = np.isfinite(t_maps)
    occ = np.zeros(K)
    for k in range(K):
        occ[k] = occlusion_score(winner == k + 1, amodal[k])

    return FrameBundle(rgb=rgb.astype(np.float32), depth=depth,
                       xyz=depth_to_xyz(depth, intr), instance_map=winner,
                       amodal_masks=amodal, occlusion_scores=occ)


def occlusion_score(modal: np.ndarray, amodal: np.ndarray) -> float:
    """Visible-pixel count over amodal-pixel count; 0 for an empty amodal mask."""
    modal = np.asarray(modal, dtype=bool)
    amodal = np.asarray(amodal, dtype=bool)
    if modal.shape != amodal.shape:
        raise ShapeMismatchError(f"mask shapes differ: {modal.shape} vs {amodal.shape}")
    if np.any(modal & ~amodal):
        raise MaskContainmentError("modal mask is not a subset of the amodal mask")
    total = int(amodal.sum())
    if total == 0:
        return 0.0
    return float(int(modal.sum()) / total)


def scene_to_json(scene: Scene) -> str:
    """Serialize a Scene to its documented JSON form."""
    doc = {
        "camera": {"fx": scene.camera.fx, "fy": scene.camera.fy,
                   "ppx": scene.camera.ppx, "ppy": scene.camera.ppy,
                   "width": scene.camera.width, "height": scene.camera.height},
        "background_depth": scene.background_depth,
        "objects": [
            {"kind": p.kind,
             "quaternion": list(p.quaternion),
             "translation": list(p.translation),
             "half_extents": list(p.half_extents),
             "albedo": list(p.albedo)}
            for p in scene.objects
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def scene_from_json(text: str) -> Scene:
    """Parse the documented JSON form back into a Scene."""
    try:
        doc = json.loads(text)
        cam = doc["camera"]
        intr = CameraIntrinsics(fx=float(cam["fx"]), fy=float(cam["fy"]),
                                ppx=float(cam["ppx"]), ppy=float(cam["ppy"]),
                                width=int(cam["width"]), height=int(cam["height"]))
        bg = doc["background_depth"]
        objects = tuple(
            Primitive(kind=o["kind"],
                      quaternion=tuple(float(x) for x in o["quaternion"]),
                      translation=tuple(float(x) for x in o["translation"]),
                      half_extents=tuple(float(x) for x in o["half_extents"]),
                      albedo=tuple(float(x) for x in o["albedo"]))
            for o in doc["objects"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ClusterSegError(f"malformed scene JSON: {exc}") from exc
    return Scene(objects=objects, camera=intr,
                 background_depth=None if bg is None else float(bg))

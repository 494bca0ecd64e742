"""Per-pixel ground truth for a rendered scene.

Four maps are produced from a Scene + FrameBundle:

  xi_map   HxWx9  every pixel of object k carries k's object feature
  eta_gt   HxW    1 on the fraction of each object's pixels nearest its
                  2D mass center (the seeding candidates), else 0
  b_map    HxW    half the minimum feature distance from the pixel's
                  object to any other object (the enclosing radius)
  fg_mask  HxW    1 where any object is visible

Background pixels are zero in every map.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ClusterSegError
from .geometry import FEATURE_DIM
from .scenegen import FrameBundle, Scene, SURFACE_SAMPLE_COUNT, object_feature_of

DEFAULT_CANDIDATE_FRACTION = 0.20
DEFAULT_SINGLE_OBJECT_RADIUS = 1.0


@dataclass
class Annotation:
    """Ground-truth maps plus the per-object features they were built from."""

    xi_map: np.ndarray         # H x W x 9
    eta_gt: np.ndarray         # H x W bool
    b_map: np.ndarray          # H x W >= 0
    fg_mask: np.ndarray        # H x W bool
    per_object_xi: np.ndarray  # K x 9
    instance_map: np.ndarray   # H x W int, copied from the frame


def make_xi_map(scene: Scene, frame: FrameBundle,
                sample_count: int = SURFACE_SAMPLE_COUNT):
    """Scatter per-object features over the instance map.

    Returns (xi_map, per_object_xi). Features come from each primitive's
    fixed deterministic surface sample so occlusion cannot change them and
    all pixels of one object share one exact value.
    """
    H, W = frame.instance_map.shape
    K = len(scene.objects)
    per_object = np.zeros((K, FEATURE_DIM))
    for k, prim in enumerate(scene.objects):
        per_object[k] = object_feature_of(prim, sample_count)
    xi_map = np.zeros((H, W, FEATURE_DIM))
    for k in range(K):
        xi_map[frame.instance_map == k + 1] = per_object[k]
    return xi_map, per_object


def make_centroid_candidates(instance_map: np.ndarray, fraction: float) -> np.ndarray:
    """Mark, per object, the pixels nearest its 2D mass center.

    For each object the max(1, round(fraction * N)) modal pixels closest to
    the mean pixel coordinate are marked, ties broken by (row, col).
    Rounding is half-away-from-zero.
    """
    if not 0.10 <= fraction <= 0.30:
        raise ClusterSegError(f"fraction must lie in [0.10, 0.30], got {fraction}")
    out = np.zeros(instance_map.shape, dtype=bool)
    for k in np.unique(instance_map):
        if k == 0:
            continue
        rows, cols = np.nonzero(instance_map == k)
        n = rows.size
        take = max(1, int(np.floor(fraction * n + 0.5)))
        c_row = rows.mean()
        c_col = cols.mean()
        dist = np.hypot(rows - c_row, cols - c_col)
        order = np.lexsort((cols, rows, dist))
        keep = order[:take]
        out[rows[keep], cols[keep]] = True
    return out


def make_bgt_map(per_object_xi: np.ndarray, instance_map: np.ndarray,
                 single_object_radius: float = DEFAULT_SINGLE_OBJECT_RADIUS) -> np.ndarray:
    """Enclosing-radius map: half the minimum feature distance to any other object.

    With a single object the minimum is empty, so a fixed positive radius is
    used instead.
    """
    K = per_object_xi.shape[0]
    b_map = np.zeros(instance_map.shape)
    if K == 0:
        return b_map
    if K == 1:
        radii = np.array([single_object_radius])
    else:
        diff = per_object_xi[:, None, :] - per_object_xi[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        radii = 0.5 * dist.min(axis=1)
    for k in range(K):
        b_map[instance_map == k + 1] = radii[k]
    return b_map


def annotate(scene: Scene, frame: FrameBundle,
             fraction: float = DEFAULT_CANDIDATE_FRACTION,
             single_object_radius: float = DEFAULT_SINGLE_OBJECT_RADIUS) -> Annotation:
    """Build the full Annotation for one frame."""
    xi_map, per_object = make_xi_map(scene, frame)
    return Annotation(
        xi_map=xi_map,
        eta_gt=make_centroid_candidates(frame.instance_map, fraction),
        b_map=make_bgt_map(per_object, frame.instance_map, single_object_radius),
        fg_mask=frame.instance_map > 0,
        per_object_xi=per_object,
        instance_map=frame.instance_map.copy(),
    )

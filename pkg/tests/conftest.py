import numpy as np
import pytest

from clusterseg.annotation import annotate
from clusterseg.geometry import CameraIntrinsics
from clusterseg.scenegen import GeneratorConfig, render, sample_scene


def small_config(**overrides) -> GeneratorConfig:
    defaults = dict(
        count_range=(2, 4),
        size_range=(0.08, 0.18),
        camera=CameraIntrinsics(32.0, 32.0, 16.0, 16.0, 32, 32),
    )
    defaults.update(overrides)
    return GeneratorConfig(**defaults)


def make_example(seed=0, **overrides):
    """(scene, frame, annotation) for one small generated scene."""
    scene = sample_scene(seed, small_config(**overrides))
    frame = render(scene)
    return scene, frame, annotate(scene, frame)


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel instances by first appearance so partitions compare equal."""
    out = np.zeros_like(labels)
    mapping = {}
    flat = labels.ravel()
    canon = out.ravel()
    for i in range(flat.size):
        lab = flat[i]
        if lab == 0:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        canon[i] = mapping[lab]
    return out


def same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.array_equal(canonical_labels(a), canonical_labels(b)))


@pytest.fixture
def example_scene():
    return make_example(seed=3)

"""Shared scene fixtures: synthetic images, registries, mock backends."""

from __future__ import annotations

import pytest

from uvgpt.engine import LoadedImage
from uvgpt.registry import Capability, ModelDescriptor, Registry, Vocabulary
from uvgpt.testing import SceneObject, build_scene
from uvgpt.types import BBox, ImageRef
from uvgpt.workers import TruthStore, mock_backends

COMMON_CLASSES = frozenset(
    {"dog", "cat", "frog", "bird", "guitar", "lemon", "sheep",
     "tower", "boat", "bridge", "cup", "fork"}
)


def make_descriptor(name, caps, vocab=None, latency=0.0, reliability=1.0):
    return ModelDescriptor(
        name=name,
        capabilities=frozenset(caps),
        vocabulary=vocab or Vocabulary.open_vocab(),
        latency_cost=latency,
        reliability=reliability,
    )


def standard_registry() -> Registry:
    """Fixed-vocabulary fast detector, open slow detector, open segmenter."""
    return Registry(
        [
            make_descriptor(
                "yolo-mock",
                {Capability.DETECT},
                Vocabulary.fixed(COMMON_CLASSES),
                latency=0.5,
                reliability=0.98,
            ),
            make_descriptor(
                "dino-mock",
                {Capability.DETECT},
                Vocabulary.open_vocab(),
                latency=2.0,
                reliability=0.95,
            ),
            make_descriptor(
                "sam-mock",
                {Capability.SEGMENT},
                Vocabulary.open_vocab(),
                latency=1.0,
                reliability=0.97,
            ),
        ]
    )


class SceneEnv:
    """One or more synthetic scenes plus registry and mock backends."""

    def __init__(self, scenes, registry=None, faulty=()):
        self.registry = registry or standard_registry()
        self.images: list[LoadedImage] = []
        fixtures = {}
        for stem, (width, height, objects) in scenes.items():
            image, truth = build_scene(width, height, objects)
            self.images.append(
                LoadedImage(ref=ImageRef(stem, width, height), raster=image)
            )
            fixtures[stem] = truth
        self.truth = TruthStore(fixtures)
        self.backends = mock_backends(self.registry, self.truth, faulty=faulty)


@pytest.fixture
def bird_scene():
    return SceneEnv(
        {"birdy": (64, 48, [SceneObject("bird", BBox(10, 8, 20, 16), 0.9,
                                        color=(180, 40, 40))])}
    )


@pytest.fixture
def empty_scene():
    return SceneEnv({"plains": (64, 48, [SceneObject("cloud", BBox(1, 1, 8, 6), 0.9)])})


@pytest.fixture
def flock_scene():
    objects = [
        SceneObject("sheep", BBox(2 + 12 * i, 6, 10, 8), 0.8 + 0.02 * i)
        for i in range(5)
    ]
    objects.append(SceneObject("goat", BBox(2, 26, 10, 8), 0.85))
    return SceneEnv({"flock": (72, 48, objects)})


@pytest.fixture
def harbor_scene():
    return SceneEnv(
        {
            "harbor": (
                96,
                64,
                [
                    SceneObject("bridge", BBox(4, 4, 90, 50), 0.88),
                    SceneObject("boat", BBox(30, 40, 15, 10), 0.93),
                ],
            )
        }
    )

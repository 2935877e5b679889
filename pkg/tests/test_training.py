import numpy as np
import pytest

from orthosonar.training import TRAIN_CLASSES, _random_object, generate_training_set, simulate_patches


def test_random_objects_match_their_class():
    rng = np.random.default_rng(0)
    for label in TRAIN_CLASSES:
        for _ in range(20):
            assert _random_object(label, rng, -3.0, 10.0).label == label
    with pytest.raises(ValueError):
        _random_object("boat", rng, -3.0, 10.0)


def test_patches_are_deterministic():
    a = simulate_patches("cylindrical_piling", 3, seed=5)
    b = simulate_patches("cylindrical_piling", 3, seed=5)
    assert len(a) == 3
    for p, q in zip(a, b):
        np.testing.assert_array_equal(p.pixels, q.pixels)
        assert p.footprint == q.footprint


def test_cylinder_footprint_is_small():
    for p in simulate_patches("cylindrical_piling", 5, seed=1):
        # the near half of a 0.25-0.35 m radius cylinder
        assert p.footprint[1] < 1.5


def test_training_set_labels():
    data = generate_training_set(2, seed=0)
    assert [l for _, l in data] == [c for c in TRAIN_CLASSES for _ in range(2)]

import numpy as np
import pytest

from evolift import skeleton as sk


@pytest.fixture(scope="session")
def tree():
    return sk.default_tree()


@pytest.fixture
def pose(tree):
    return sk.neutral_pose()


def random_valid_pose(rng, tree, f32_lattice=False):
    """Random pose with bone lengths in [80, 500] mm; lattice poses hold
    exactly float32-representable coordinates (what the file formats store),
    for which bones/FK round trips are bit-exact."""
    bones = rng.uniform(-1.0, 1.0, (tree.n_bones, 3))
    norms = np.linalg.norm(bones, axis=1, keepdims=True)
    while np.any(norms < 1e-3):
        bones = rng.uniform(-1.0, 1.0, (tree.n_bones, 3))
        norms = np.linalg.norm(bones, axis=1, keepdims=True)
    bones = bones / norms * rng.uniform(80.0, 500.0, (tree.n_bones, 1))
    if f32_lattice:
        bones = bones.astype(np.float32).astype(np.float64)
    return sk.forward_kinematics(bones, tree)


def jittered_pose(rng, tree, base=None, bones=(1, 4, 11, 14), sigma=0.3):
    """Neutral pose with a few limb orientations perturbed; stays frame-safe."""
    p = sk.neutral_pose() if base is None else base
    for b in bones:
        sph = sk.spherical_of_pose(p, tree)
        p = sk.set_bone_orientation(p, tree, b, sph[b, 1] + rng.normal(0, sigma),
                                    sph[b, 2] + rng.normal(0, sigma))
    return p


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from egolift.rng import Rng
from egolift.skeleton import SkeletonTree, build_skeleton, rest_pose, sample_pose


def test_default_humanoid_counts():
    tree = build_skeleton()
    assert tree.n_joints == 15
    assert tree.n_limbs == 14
    assert tree.names[0] == "head"


def test_two_joint_chain():
    tree = build_skeleton({"parents": [-1, 0], "bone_lengths": [0.0, 10.0]})
    assert list(tree.parents) == [-1, 0]
    assert tree.n_limbs == 1


def test_topological_indexing_holds_for_generated_configs():
    # brute-force validation over a family of random chains/trees
    for seed in range(50):
        rng = Rng(seed)
        n = 2 + seed % 9
        parents = [-1] + [rng.integer(i) for i in range(1, n)]
        tree = build_skeleton({"parents": parents})
        for i in range(1, tree.n_joints):
            assert 0 <= tree.parents[i] < i


def test_rejects_cyclic_or_forward_parents():
    with pytest.raises(ValueError):
        build_skeleton({"parents": [-1, 2, 1]})
    with pytest.raises(ValueError):
        build_skeleton({"parents": [-1, 1]})


def test_rejects_nonpositive_bone_lengths():
    with pytest.raises(ValueError):
        build_skeleton({"parents": [-1, 0], "bone_lengths": [0.0, 0.0]})


def test_rest_pose_is_t_pose_layout():
    tree = build_skeleton()
    pose = rest_pose(tree)
    assert np.array_equal(pose[0], [0.0, 0.0, 0.0])
    # arms horizontal, mirrored; legs below the spine
    l_hand, r_hand = pose[5], pose[8]
    assert l_hand[0] < -60 and r_hand[0] > 60
    assert abs(l_hand[1] - r_hand[1]) < 1e-12
    assert pose[11][1] > 140 and pose[14][1] > 140


def test_sample_pose_deterministic_for_fixed_seed():
    tree = build_skeleton()
    a = sample_pose(tree, Rng(42))
    b = sample_pose(tree, Rng(42))
    assert np.array_equal(a, b)


def test_bone_lengths_preserved_over_1000_samples():
    tree = build_skeleton()
    worst = 0.0
    for seed in range(1000):
        pose = sample_pose(tree, Rng(seed))
        for parent, child in tree.limbs:
            got = np.linalg.norm(pose[child] - pose[parent])
            rel = abs(got - tree.bone_lengths[child]) / tree.bone_lengths[child]
            worst = max(worst, rel)
    assert worst < 1e-6, worst


def test_root_stays_at_origin():
    tree = build_skeleton()
    for seed in range(20):
        assert np.array_equal(sample_pose(tree, Rng(seed))[0], np.zeros(3))


def test_tree_dict_round_trip():
    tree = build_skeleton()
    clone = SkeletonTree.from_dict(tree.to_dict())
    assert np.array_equal(clone.parents, tree.parents)
    assert np.array_equal(clone.bone_lengths, tree.bone_lengths)
    assert np.array_equal(clone.rest_dirs, tree.rest_dirs)
    assert clone.names == tree.names

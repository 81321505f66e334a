import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egoindex.errors import (DimensionMismatch, NoDescriptors, NoLocalizedFrames,
                             UnlocalizableFrame)
from egoindex.localization import (LocalDescriptor, LocationModel, VocabularyTree, build_tree,
                                   classify_frame, descend, localization_histogram,
                                   quantize_counts, quantize_frame, tree_size)

from oracles import brute_nn


def test_node_count():
    assert tree_size(10, 3) == 1111
    tree = build_tree(np.random.default_rng(0).normal(size=(400, 4)), 10, 3, seed=0)
    assert tree.n_nodes == 1111
    assert tree.centroids.shape == (1111, 4)


def test_two_clouds_split_at_first_level():
    rng = np.random.default_rng(1)
    a = rng.normal(-10, 0.1, (50, 2))
    b = rng.normal(10, 0.1, (50, 2))
    tree = build_tree(np.vstack([a, b]), 2, 1, seed=3)
    kids = tree.centroids[1:3]
    expected = sorted([a.mean(0).tolist(), b.mean(0).tolist()])
    np.testing.assert_allclose(sorted(kids.tolist()), expected, atol=1e-9)


def test_padding_with_fewer_distinct_points_than_branching():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    tree = build_tree(x, 4, 2, seed=0)
    assert tree.n_nodes == 21
    # first level: the two distinct points plus two copies of the root mean
    lvl1 = tree.centroids[1:5]
    root = x.mean(0)
    assert sorted(map(tuple, lvl1[:2])) == [(0.0, 0.0), (1.0, 0.0)]
    np.testing.assert_allclose(lvl1[2:], [root, root])
    # every signature is still defined
    sig = quantize_frame(x, tree)
    assert abs(sig.sum() - 1.0) < 1e-12


def test_single_descriptor_gives_constant_tree():
    tree = build_tree([[3.0, -1.0]], 3, 2, seed=0)
    np.testing.assert_allclose(tree.centroids, np.tile([3.0, -1.0], (13, 1)))


def test_no_descriptors():
    with pytest.raises(NoDescriptors):
        build_tree([], 10, 3)


def toy_tree():
    return VocabularyTree(2, 2, np.array([[0.0], [-5.0], [5.0], [-7.0], [-3.0], [3.0], [7.0]]))


def test_toy_tree_descent_and_counts():
    tree = toy_tree()
    x = np.array([[-8.0], [-2.0], [4.0], [6.9], [2.0]])
    paths = descend(tree, x)
    assert paths.tolist() == [[0, 1, 3], [0, 1, 4], [0, 2, 5], [0, 2, 6], [0, 2, 5]]
    np.testing.assert_array_equal(quantize_counts(x, tree), [5, 2, 3, 1, 1, 2, 1])
    np.testing.assert_allclose(quantize_frame(x, tree), np.array([5, 2, 3, 1, 1, 2, 1]) / 15)


def test_descent_ties_take_lowest_child():
    tree = toy_tree()
    assert descend(tree, [[0.0]])[0].tolist() == [0, 1, 4]


def test_descend_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        descend(toy_tree(), [[1.0, 2.0]])


def test_empty_frame_signature_is_zero():
    assert not np.any(quantize_frame(np.empty((0, 1)), toy_tree()))


def test_local_descriptor_input():
    tree = toy_tree()
    descs = [LocalDescriptor(4, np.array([v])) for v in (-8.0, 2.0)]
    np.testing.assert_array_equal(quantize_counts(descs, tree), [2, 1, 1, 1, 0, 1, 0])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 60))
def test_parent_count_is_sum_of_children(seed, n):
    rng = np.random.default_rng(seed)
    tree = build_tree(rng.normal(size=(200, 3)), 3, 2, seed=seed)
    counts = quantize_counts(rng.normal(size=(n, 3)), tree)
    assert counts[0] == n
    for node in range(tree_size(3, 1)):
        assert counts[node] == counts[tree.children(node)].sum()


def test_build_is_deterministic():
    x = np.random.default_rng(2).normal(size=(300, 5))
    t1, t2 = build_tree(x, 4, 2, seed=9), build_tree(x, 4, 2, seed=9)
    np.testing.assert_array_equal(t1.centroids, t2.centroids)
    assert VocabularyTree.from_dict(t1.to_dict()).centroids.tolist() == t1.centroids.tolist()


# --- 1-NN classification ----------------------------------------------------------

def test_classify_matches_brute_force():
    rng = np.random.default_rng(3)
    train = rng.dirichlet(np.ones(12), size=40)
    labels = np.arange(40) % 5
    model = LocationModel(train, labels, 5)
    for sig in rng.dirichlet(np.ones(12), size=50):
        assert classify_frame(sig, model) == brute_nn(sig, train, labels)


def test_classify_tie_goes_to_lowest_class():
    model = LocationModel([[1.0, 0.0], [0.0, 1.0]], [1, 0], 2)
    assert classify_frame([0.5, 0.5], model) == 0


def test_classify_errors():
    model = LocationModel([[1.0, 0.0]], [0], 1)
    with pytest.raises(UnlocalizableFrame):
        classify_frame([0.0, 0.0], model)
    with pytest.raises(DimensionMismatch):
        classify_frame([1.0, 0.0, 0.0], model)


def test_model_requires_every_class():
    with pytest.raises(ValueError):
        LocationModel([[1.0, 0.0]], [0], 2)


def test_localization_histogram():
    frames = [(k, c) for k, c in enumerate([0, 0, 1, 3, 3])]
    np.testing.assert_allclose(localization_histogram(frames, 4), [0.4, 0.2, 0.0, 0.4])
    np.testing.assert_allclose(localization_histogram(frames + [(9, None)], 4),
                               [0.4, 0.2, 0.0, 0.4])
    with pytest.raises(NoLocalizedFrames):
        localization_histogram([(0, None)], 4)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=50), st.randoms(use_true_random=False))
def test_histogram_permutation_invariant(classes, rnd):
    frames = list(enumerate(classes))
    shuffled = frames[:]
    rnd.shuffle(shuffled)
    h = localization_histogram(frames, 6)
    np.testing.assert_array_equal(h, localization_histogram(shuffled, 6))
    assert abs(h.sum() - 1) < 1e-12

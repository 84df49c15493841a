import numpy as np
import pytest

from ledsna.core import Instance
from ledsna.errors import ContractViolation
from ledsna.segmentation import (
    SegmentGraph,
    SegmentMap,
    build_adjacency,
    grid_segment,
    segments_connected,
    slic_segment,
)

from oracles import all_segments_connected, brute_force_adjacency


def _image(pixels):
    return Instance.from_image(np.asarray(pixels, dtype=np.uint8))


def test_grid_exact_tiling():
    inst = _image(np.zeros((4, 4, 3)))
    seg = grid_segment(inst, 2, 2)
    assert seg.n_segments == 4
    expected = np.array(
        [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]]
    )
    assert np.array_equal(seg.labels, expected)


def test_grid_degenerate_single_cell():
    inst = _image(np.zeros((3, 5, 3)))
    seg = grid_segment(inst, 1, 1)
    assert seg.n_segments == 1
    assert np.all(seg.labels == 0)


def test_grid_floor_division_boundaries():
    # image 3 high x 5 wide, 2x2 grid: widths {2,3}, heights {1,2}
    inst = _image(np.zeros((3, 5, 3)))
    seg = grid_segment(inst, 2, 2)
    widths = set()
    heights = set()
    for s in range(4):
        ys, xs = np.nonzero(seg.labels == s)
        widths.add(xs.max() - xs.min() + 1)
        heights.add(ys.max() - ys.min() + 1)
    assert widths == {2, 3}
    assert heights == {1, 2}


def test_grid_rejects_oversized():
    inst = _image(np.zeros((3, 3, 3)))
    with pytest.raises(ContractViolation):
        grid_segment(inst, 4, 1)
    with pytest.raises(ContractViolation):
        grid_segment(inst, 0, 1)


def test_segment_map_requires_gapless_labels():
    with pytest.raises(ContractViolation):
        SegmentMap(labels=np.array([[0, 2], [2, 0]]), n_segments=3)


def test_adjacency_2x2_grid():
    inst = _image(np.zeros((4, 4, 3)))
    graph = build_adjacency(grid_segment(inst, 2, 2))
    assert graph.n_vertices == 4
    assert graph.edges == frozenset({(0, 1), (0, 2), (1, 3), (2, 3)})


def test_adjacency_single_segment():
    graph = build_adjacency(np.zeros((3, 3), dtype=int))
    assert graph.n_vertices == 1
    assert graph.edges == frozenset()


def test_adjacency_matches_brute_force_on_random_maps():
    rng = np.random.default_rng(5)
    for _ in range(25):
        h, w = rng.integers(1, 9, size=2)
        n = int(rng.integers(1, 7))
        labels = rng.integers(0, n, size=(h, w))
        graph = build_adjacency(labels)
        assert set(graph.edges) == brute_force_adjacency(labels)


def test_grid_graph_edge_count():
    rng = np.random.default_rng(6)
    for _ in range(10):
        r, c = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        inst = _image(np.zeros((r * 2, c * 2, 3)))
        graph = build_adjacency(grid_segment(inst, r, c))
        assert len(graph.edges) == 2 * r * c - r - c


def test_adjacency_is_irreflexive_and_normalized():
    rng = np.random.default_rng(7)
    labels = rng.integers(0, 5, size=(6, 6))
    graph = build_adjacency(labels)
    for a, b in graph.edges:
        assert a < b
    # neighbor lists are symmetric by construction
    for v, nbrs in enumerate(graph.neighbors):
        for u in nbrs:
            assert v in graph.neighbors[u]


def test_segment_graph_rejects_self_loop():
    with pytest.raises(ContractViolation):
        SegmentGraph(n_vertices=2, edges=frozenset({(1, 1)}))


def test_slic_uniform_image_single_segment():
    inst = _image(np.full((8, 8, 3), 77))
    seg = slic_segment(inst, k=1)
    assert seg.n_segments == 1
    assert np.all(seg.labels == 0)


def test_slic_two_tone_halves():
    img = np.zeros((8, 8, 3), dtype=np.uint8)
    img[:, 4:] = 255
    inst = _image(img)
    seg = slic_segment(inst, k=2, compactness=10.0)
    assert seg.n_segments == 2
    # connected-component oracle on the color field: the halves
    left = seg.labels[:, :4]
    right = seg.labels[:, 4:]
    assert len(np.unique(left)) == 1
    assert len(np.unique(right)) == 1
    assert left[0, 0] != right[0, 0]


def test_slic_invariants_on_random_images():
    rng = np.random.default_rng(8)
    for trial in range(6):
        h, w = int(rng.integers(6, 20)), int(rng.integers(6, 20))
        img = rng.integers(0, 256, size=(h, w, 3)).astype(np.uint8)
        inst = _image(img)
        k = int(rng.integers(1, 9))
        seg = slic_segment(inst, k=k, compactness=float(rng.uniform(1, 30)))
        assert 1 <= seg.n_segments <= 2 * k
        assert set(np.unique(seg.labels)) == set(range(seg.n_segments))
        assert all_segments_connected(seg.labels)  # hand flood-fill oracle
        assert segments_connected(seg.labels)


def test_slic_deterministic():
    rng = np.random.default_rng(9)
    img = rng.integers(0, 256, size=(16, 12, 3)).astype(np.uint8)
    inst = _image(img)
    a = slic_segment(inst, k=5, compactness=12.0, iterations=10)
    b = slic_segment(inst, k=5, compactness=12.0, iterations=10)
    assert np.array_equal(a.labels, b.labels)


def test_slic_rejects_bad_k():
    inst = _image(np.zeros((4, 4, 3)))
    with pytest.raises(ContractViolation):
        slic_segment(inst, k=17)
    with pytest.raises(ContractViolation):
        slic_segment(inst, k=0)


def test_segments_connected_detects_split_region():
    labels = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    assert not segments_connected(labels)
    assert not all_segments_connected(labels)

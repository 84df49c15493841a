"""Superpixel segmentation and the adjacency graph over segments.

SLIC is implemented directly (k-means in CIELAB+xy with compactness
weighting, then a connectivity pass that merges orphaned fragments into
the largest adjacent segment) so the output is deterministic and every
segment is 4-connected with gapless labels.  ``grid_segment`` provides a
trivial rectangular segmentation for tests and baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .core import Instance
from .errors import ContractViolation

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SegmentMap:
    """Per-pixel segment labels.  Labels are exactly {0..n_segments-1}."""

    labels: np.ndarray  # (H, W) int64
    n_segments: int

    def __post_init__(self):
        arr = self.labels
        if arr.ndim != 2:
            raise ContractViolation("segment labels must form a 2-D map")
        present = np.unique(arr)
        expected = np.arange(self.n_segments)
        if present.shape != expected.shape or not np.array_equal(present, expected):
            raise ContractViolation(
                f"labels must be exactly 0..{self.n_segments - 1}, found {present.tolist()[:8]}..."
            )

    @classmethod
    def from_labels(cls, labels) -> "SegmentMap":
        arr = np.ascontiguousarray(np.asarray(labels, dtype=np.int64))
        arr.flags.writeable = False
        return cls(labels=arr, n_segments=int(arr.max()) + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class SegmentGraph:
    """Undirected adjacency graph over segments; edges stored as (a, b), a < b."""

    n_vertices: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        for a, b in self.edges:
            if a == b:
                raise ContractViolation("self-loops are not allowed")
            if not (0 <= a < b < self.n_vertices):
                raise ContractViolation(f"edge ({a}, {b}) outside vertex range")

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return tuple(tuple(sorted(v)) for v in adj)


def grid_segment(image: Instance, rows: int, cols: int) -> SegmentMap:
    """Tile the image into rows x cols rectangles, row-major labels.

    Cell boundaries sit at floor-divided coordinates, so cell sizes differ
    by at most one pixel.
    """
    if image.kind != "image":
        raise ContractViolation("grid_segment requires an image instance")
    h, w = image.image.shape[:2]
    if rows < 1 or cols < 1:
        raise ContractViolation("rows and cols must be at least 1")
    if rows > h or cols > w:
        raise ContractViolation(f"grid {rows}x{cols} exceeds image {h}x{w}")
    row_bounds = np.array([i * h // rows for i in range(rows + 1)])
    col_bounds = np.array([j * w // cols for j in range(cols + 1)])
    band_y = np.searchsorted(row_bounds, np.arange(h), side="right") - 1
    band_x = np.searchsorted(col_bounds, np.arange(w), side="right") - 1
    labels = band_y[:, None] * cols + band_x[None, :]
    return SegmentMap.from_labels(labels)


def build_adjacency(segment_map: SegmentMap | np.ndarray) -> SegmentGraph:
    """Edges join segments with at least one 4-neighboring pixel pair."""
    if isinstance(segment_map, SegmentMap):
        labels = segment_map.labels
        n = segment_map.n_segments
    else:
        labels = np.asarray(segment_map)
        if labels.ndim != 2:
            raise ContractViolation("label map must be 2-D")
        n = int(labels.max()) + 1
    pairs = []
    horiz = np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1)
    vert = np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1)
    for arr in (horiz, vert):
        if arr.size:
            diff = arr[arr[:, 0] != arr[:, 1]]
            if diff.size:
                pairs.append(np.sort(diff, axis=1))
    if pairs:
        uniq = np.unique(np.concatenate(pairs, axis=0), axis=0)
        edges = frozenset((int(a), int(b)) for a, b in uniq)
    else:
        edges = frozenset()
    return SegmentGraph(n_vertices=n, edges=edges)


def segments_connected(labels: np.ndarray) -> bool:
    """True when every segment forms a single 4-connected region."""
    labels = np.asarray(labels)
    for seg in np.unique(labels):
        _, count = ndimage.label(labels == seg, structure=_FOUR_CONN)
        if count != 1:
            return False
    return True


# --- SLIC ------------------------------------------------------------------

_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def _rgb_to_lab(image: np.ndarray) -> np.ndarray:
    srgb = image.astype(np.float64) / 255.0
    linear = np.where(srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T / _D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def _center_grid(k: int, h: int, w: int) -> tuple[int, int]:
    """Pick a rows x cols seeding grid with k <= rows*cols <= 2k when possible."""
    rows = max(1, min(int(round(math.sqrt(k * h / w))), h, k))
    cols = max(1, min(math.ceil(k / rows), w))
    return rows, cols


def _seed_centers(lab: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Centers at cell midpoints, nudged to the lowest-gradient 3x3 position."""
    h, w = lab.shape[:2]
    grad = np.full((h, w), np.inf)
    if h >= 3 and w >= 3:
        dy = lab[2:, 1:-1] - lab[:-2, 1:-1]
        dx = lab[1:-1, 2:] - lab[1:-1, :-2]
        grad[1:-1, 1:-1] = (dy**2).sum(axis=2) + (dx**2).sum(axis=2)
    centers = []
    for r in range(rows):
        for c in range(cols):
            cy = min(int((r + 0.5) * h / rows), h - 1)
            cx = min(int((c + 0.5) * w / cols), w - 1)
            best = (cy, cx)
            best_grad = grad[cy, cx]
            for yy in range(max(cy - 1, 0), min(cy + 2, h)):
                for xx in range(max(cx - 1, 0), min(cx + 2, w)):
                    if grad[yy, xx] < best_grad:
                        best_grad = grad[yy, xx]
                        best = (yy, xx)
            centers.append((float(best[0]), float(best[1])))
    coords = np.array(centers)
    feats = np.array([lab[int(y), int(x)] for y, x in coords])
    return np.concatenate([feats, coords], axis=1)  # (m, 5): L a b y x


def slic_segment(
    image: Instance,
    k: int,
    compactness: float = 10.0,
    iterations: int = 10,
) -> SegmentMap:
    """SLIC superpixels: local k-means over (L, a, b, y, x).

    The spatial term is scaled by compactness/S with S the expected segment
    spacing.  After the assignment iterations, fragments that are not their
    cluster's largest component are merged into the largest adjacent
    segment, which keeps every output segment 4-connected.  The final
    segment count lies in [1, 2k].
    """
    if image.kind != "image":
        raise ContractViolation("slic_segment requires an image instance")
    if compactness <= 0:
        raise ContractViolation("compactness must be positive")
    if iterations < 1:
        raise ContractViolation("iterations must be at least 1")
    h, w = image.image.shape[:2]
    if k < 1 or k > h * w:
        raise ContractViolation(f"k must be in [1, {h * w}], got {k}")

    lab = _rgb_to_lab(image.image)
    rows, cols = _center_grid(k, h, w)
    centers = _seed_centers(lab, rows, cols)
    m = centers.shape[0]
    step_y = h / rows
    step_x = w / cols
    spacing = math.sqrt(step_y * step_x)
    spatial_scale = (compactness / spacing) ** 2
    wy = max(1, math.ceil(2 * step_y))
    wx = max(1, math.ceil(2 * step_x))

    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    assignment = np.zeros((h, w), dtype=np.int64)

    for _ in range(iterations):
        best = np.full((h, w), np.inf)
        assignment.fill(-1)
        for ci in range(m):
            cl, ca, cb, cy, cx = centers[ci]
            y0, y1 = max(0, int(cy) - wy), min(h, int(cy) + wy + 1)
            x0, x1 = max(0, int(cx) - wx), min(w, int(cx) + wx + 1)
            patch = lab[y0:y1, x0:x1]
            d_lab = (
                (patch[..., 0] - cl) ** 2
                + (patch[..., 1] - ca) ** 2
                + (patch[..., 2] - cb) ** 2
            )
            d_xy = (ys[y0:y1, None] - cy) ** 2 + (xs[None, x0:x1] - cx) ** 2
            dist = d_lab + spatial_scale * d_xy
            window_best = best[y0:y1, x0:x1]
            better = dist < window_best
            window_best[better] = dist[better]
            assignment[y0:y1, x0:x1][better] = ci

        unassigned = assignment < 0
        if unassigned.any():
            uy, ux = np.nonzero(unassigned)
            d_lab = ((lab[uy, ux][:, None, :] - centers[None, :, :3]) ** 2).sum(axis=2)
            d_xy = (uy[:, None] - centers[None, :, 3]) ** 2 + (
                ux[:, None] - centers[None, :, 4]
            ) ** 2
            assignment[uy, ux] = np.argmin(d_lab + spatial_scale * d_xy, axis=1)

        flat = assignment.ravel()
        counts = np.bincount(flat, minlength=m).astype(np.float64)
        occupied = counts > 0
        sums = np.zeros((m, 5))
        for ch in range(3):
            sums[:, ch] = np.bincount(flat, weights=lab[..., ch].ravel(), minlength=m)
        sums[:, 3] = np.bincount(flat, weights=yy.ravel(), minlength=m)
        sums[:, 4] = np.bincount(flat, weights=xx.ravel(), minlength=m)
        centers[occupied] = sums[occupied] / counts[occupied, None]

    labels = _enforce_connectivity(assignment)
    return SegmentMap.from_labels(labels)


def _enforce_connectivity(cluster_map: np.ndarray) -> np.ndarray:
    """Merge every non-largest fragment of a cluster into the largest
    adjacent segment, then relabel segments gaplessly in raster order."""
    h, w = cluster_map.shape
    comp_map = np.full((h, w), -1, dtype=np.int64)
    comp_cluster: list[int] = []
    next_comp = 0
    for cid in np.unique(cluster_map):
        comp, count = ndimage.label(cluster_map == cid, structure=_FOUR_CONN)
        mask = comp > 0
        comp_map[mask] = comp[mask] - 1 + next_comp
        comp_cluster.extend([int(cid)] * count)
        next_comp += count

    n_comp = next_comp
    comp_sizes = np.bincount(comp_map.ravel(), minlength=n_comp)

    # Largest component per cluster survives; ties go to the lowest comp id.
    kept = np.zeros(n_comp, dtype=bool)
    best_for_cluster: dict[int, int] = {}
    for comp_id in range(n_comp):
        cid = comp_cluster[comp_id]
        cur = best_for_cluster.get(cid)
        if cur is None or comp_sizes[comp_id] > comp_sizes[cur]:
            best_for_cluster[cid] = comp_id
    for comp_id in best_for_cluster.values():
        kept[comp_id] = True

    # Component adjacency from 4-neighboring pixel pairs.
    neighbor_sets: list[set[int]] = [set() for _ in range(n_comp)]
    pair_blocks = []
    for a, b in (
        (comp_map[:, :-1].ravel(), comp_map[:, 1:].ravel()),
        (comp_map[:-1, :].ravel(), comp_map[1:, :].ravel()),
    ):
        diff = a != b
        if diff.any():
            pair_blocks.append(np.sort(np.stack([a[diff], b[diff]], axis=1), axis=1))
    if pair_blocks:
        for u, v in np.unique(np.concatenate(pair_blocks, axis=0), axis=0):
            neighbor_sets[u].add(int(v))
            neighbor_sets[v].add(int(u))

    region_of = np.full(n_comp, -1, dtype=np.int64)
    region_ids = np.nonzero(kept)[0]
    region_size = {}
    for comp_id in region_ids:
        region_of[comp_id] = comp_id
        region_size[int(comp_id)] = int(comp_sizes[comp_id])

    pending = [c for c in range(n_comp) if not kept[c]]
    while pending:
        deferred = []
        for comp_id in pending:
            resolved = [n for n in neighbor_sets[comp_id] if region_of[n] >= 0]
            if not resolved:
                deferred.append(comp_id)
                continue
            # Largest adjacent segment wins; ties go to the lowest region id.
            target = max(
                (region_of[n] for n in resolved),
                key=lambda r: (region_size[int(r)], -int(r)),
            )
            region_of[comp_id] = target
            region_size[int(target)] += int(comp_sizes[comp_id])
        if len(deferred) == len(pending):
            raise AssertionError("orphan fragments could not reach any kept segment")
        pending = deferred

    merged = region_of[comp_map]
    first_seen = {}
    order = []
    for value in merged.ravel():
        if value not in first_seen:
            first_seen[value] = len(order)
            order.append(value)
    remap = np.zeros(n_comp, dtype=np.int64)
    for new_id, old_id in enumerate(order):
        remap[old_id] = new_id
    return remap[merged]

"""Dependency-respecting perturbation sampling and proximity weights.

Image masks activate connected sets of segments grown by randomized DFS
over the segment graph; text masks toggle whole token groups.  Each mask
gets a proximity weight against the all-ones mask of the explained
instance via an exponential kernel.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import blackbox as bb
from .core import (
    Instance,
    InterpretableSpace,
    Mask,
    all_ones_mask,
    as_mask,
    recover_image,
    recover_text,
)
from .errors import ContractViolation
from .segmentation import SegmentGraph

DEFAULT_N_SAMPLES = 1000


@dataclass(frozen=True)
class DependencyGroups:
    """A partition of token indices; tokens in one group toggle together."""

    groups: tuple[tuple[int, ...], ...]
    n_tokens: int

    def __post_init__(self):
        seen: set[int] = set()
        for group in self.groups:
            if not group:
                raise ContractViolation("dependency groups must be non-empty")
            for idx in group:
                if not 0 <= idx < self.n_tokens:
                    raise ContractViolation(f"token index {idx} outside 0..{self.n_tokens - 1}")
                if idx in seen:
                    raise ContractViolation(f"token index {idx} appears in more than one group")
                seen.add(idx)
        missing = set(range(self.n_tokens)) - seen
        if missing:
            raise ContractViolation(f"token index {min(missing)} not covered by any group")

    @classmethod
    def from_lists(cls, groups: Sequence[Sequence[int]], n_tokens: int) -> "DependencyGroups":
        return cls(tuple(tuple(sorted(int(i) for i in g)) for g in groups), n_tokens)


def window_grouper(window: int = 1) -> Callable[[int], list[list[int]]]:
    """Built-in provider: consecutive runs of ``window`` tokens per group.

    window=1 yields singleton groups, i.e. independent per-token sampling.
    """
    if window < 1:
        raise ContractViolation("window must be at least 1")

    def provider(n_tokens: int) -> list[list[int]]:
        return [list(range(i, min(i + window, n_tokens))) for i in range(0, n_tokens, window)]

    return provider


def file_groups_provider(path: str | Path) -> Callable[[int], list[list[int]]]:
    """External provider reading {"n_tokens": int, "groups": [[int,...],...]}."""
    spec = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        declared = int(spec["n_tokens"])
        groups = [[int(i) for i in g] for g in spec["groups"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ContractViolation(f"{path}: malformed dependency-group file: {exc}") from exc

    def provider(n_tokens: int) -> list[list[int]]:
        if n_tokens != declared:
            raise ContractViolation(
                f"{path}: declares {declared} tokens but instance has {n_tokens}"
            )
        return groups

    return provider


def group_tokens(
    instance: Instance,
    provider: Callable[[int], list[list[int]]] | None = None,
) -> DependencyGroups:
    """Partition the instance's token indices using the given provider."""
    if instance.kind != "text":
        raise ContractViolation("group_tokens requires a text instance")
    n_tokens = len(instance.tokens)
    if provider is None:
        provider = window_grouper(1)
    return DependencyGroups.from_lists(provider(n_tokens), n_tokens)


def sample_connected(
    graph: SegmentGraph,
    n_samples: int,
    size_sampler: Callable[[random.Random], int] | None = None,
    seed: int = 0,
    mode: str = "connected",
) -> list[Mask]:
    """Sample masks whose active vertices induce a connected subgraph.

    Each mask draws a target size, picks a uniform start vertex and grows
    by randomized DFS until the size is reached or the frontier empties.
    ``mode="clique"`` instead grows a strict clique (every two active
    vertices adjacent), kept for ablation.
    """
    n = graph.n_vertices
    if n < 1:
        raise ContractViolation("graph must have at least one vertex")
    if n_samples < 1:
        raise ContractViolation("n_samples must be at least 1")
    if mode not in ("connected", "clique"):
        raise ContractViolation(f"unknown sampling mode {mode!r}")
    rng = random.Random(seed)
    if size_sampler is None:
        size_sampler = lambda r: r.randint(1, n)
    neighbors = graph.neighbors
    masks = []
    for _ in range(n_samples):
        target = size_sampler(rng)
        if not 1 <= target <= n:
            raise ContractViolation(f"size sampler produced {target}, outside 1..{n}")
        start = rng.randrange(n)
        if mode == "connected":
            active: set[int] = set()
            stack = [start]
            while stack and len(active) < target:
                v = stack.pop()
                if v in active:
                    continue
                active.add(v)
                fresh = [u for u in neighbors[v] if u not in active]
                rng.shuffle(fresh)
                stack.extend(fresh)
        else:
            active = {start}
            candidates = set(neighbors[start])
            while len(active) < target and candidates:
                v = rng.choice(sorted(candidates))
                active.add(v)
                candidates = {u for u in candidates if u in neighbors[v]} - active
        mask = np.zeros(n, dtype=np.uint8)
        mask[sorted(active)] = 1
        masks.append(mask)
    return masks


def sample_groups(groups: DependencyGroups, n_samples: int, seed: int = 0) -> list[Mask]:
    """One i.i.d. uniform bit per group; tokens toggle atomically on recovery."""
    if len(groups.groups) < 1:
        raise ContractViolation("at least one group is required")
    if n_samples < 1:
        raise ContractViolation("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(n_samples, len(groups.groups)), dtype=np.uint8)
    return [bits[i] for i in range(n_samples)]


def proximity(reference: Mask, sample: Mask, sigma: float, metric: str = "l2") -> float:
    """exp(-D(reference, sample)^2 / sigma^2) with D cosine or Euclidean."""
    if sigma <= 0:
        raise ContractViolation("sigma must be positive")
    ref = as_mask(reference).astype(np.float64)
    sam = as_mask(sample, ref.shape[0]).astype(np.float64)
    if metric == "l2":
        d_sq = float(np.sum((ref - sam) ** 2))
    elif metric == "cosine":
        ref_norm = float(np.linalg.norm(ref))
        if ref_norm == 0.0:
            raise ContractViolation("cosine proximity requires a non-zero reference mask")
        sam_norm = float(np.linalg.norm(sam))
        sim = 0.0 if sam_norm == 0.0 else float(ref @ sam) / (ref_norm * sam_norm)
        d_sq = (1.0 - sim) ** 2
    else:
        raise ContractViolation(f"unknown proximity metric {metric!r}")
    return float(np.exp(-d_sq / sigma**2))


def default_sigma(metric: str, d_prime: int) -> float:
    """Kernel widths scaled for binary masks: 0.25*d' for l2, 25 for cosine.

    Squared l2 distances between masks are integers up to d', so sigma must
    grow with d' (not sqrt(d')) to keep mid-distance samples from being
    weighted out of the fit entirely.
    """
    if metric == "l2":
        return 0.25 * d_prime
    if metric == "cosine":
        return 25.0
    raise ContractViolation(f"unknown proximity metric {metric!r}")


def default_metric(space: InterpretableSpace) -> str:
    return "l2" if space.kind == "image-segments" else "cosine"


@dataclass(frozen=True)
class PerturbationSet:
    """Masks with their black-box labels and proximity weights.

    The last row is always the all-ones mask of the explained instance, so
    ``labels[-1]`` is f(x).
    """

    masks: np.ndarray  # (N, d') uint8
    labels: np.ndarray  # (N,) float64
    weights: np.ndarray  # (N,) float64
    instance_mask: np.ndarray  # (d',) uint8

    def __post_init__(self):
        n = self.masks.shape[0]
        if n < 1:
            raise ContractViolation("perturbation set must contain at least one sample")
        if self.labels.shape != (n,) or self.weights.shape != (n,):
            raise ContractViolation("masks, labels and weights must have equal length")
        if self.masks.shape[1] != self.instance_mask.shape[0]:
            raise ContractViolation("mask width must equal d'")
        if not np.all(np.isfinite(self.labels)):
            raise ContractViolation("labels must be finite")
        if np.any(self.labels < 0) or np.any(self.labels > 1):
            raise ContractViolation("labels must be class probabilities in [0, 1]")
        if not np.all(self.weights > 0):
            raise ContractViolation("weights must be strictly positive")

    @property
    def n_samples(self) -> int:
        return self.masks.shape[0]

    @property
    def d_prime(self) -> int:
        return self.masks.shape[1]

    @property
    def f_at_instance(self) -> float:
        return float(self.labels[-1])


def build_perturbation_set(
    instance: Instance,
    space: InterpretableSpace,
    sampler_input: SegmentGraph | DependencyGroups,
    adapter,
    n_samples: int = DEFAULT_N_SAMPLES,
    sigma: float | None = None,
    seed: int = 0,
    metric: str | None = None,
    hide_color=None,
    batch_size: int = 64,
    parallelism: int = 1,
    size_sampler: Callable[[random.Random], int] | None = None,
    mode: str = "connected",
) -> PerturbationSet:
    """Sample masks, query the black box on recovered instances and weight
    each sample by proximity to the explained point.

    The all-ones mask is appended last with its true label so the surrogate
    always sees the explained point itself.
    """
    if metric is None:
        metric = default_metric(space)
    if sigma is None:
        sigma = default_sigma(metric, space.d_prime)

    if space.kind == "image-segments":
        if not isinstance(sampler_input, SegmentGraph):
            raise ContractViolation("image sampling requires a SegmentGraph")
        masks = sample_connected(
            sampler_input, n_samples, size_sampler=size_sampler, seed=seed, mode=mode
        )
    else:
        if not isinstance(sampler_input, DependencyGroups):
            raise ContractViolation("text sampling requires DependencyGroups")
        masks = sample_groups(sampler_input, n_samples, seed=seed)
    masks.append(all_ones_mask(space.d_prime))

    if getattr(adapter, "wants_masks", False):
        items: list = masks
        kind = "mask"
    elif space.kind == "image-segments":
        items = [
            recover_image(m, space.segment_map, instance, hide_color=hide_color) for m in masks
        ]
        kind = "image"
    else:
        items = [recover_text(m, space, instance) for m in masks]
        kind = "text"

    labels = _query_batched(adapter, items, kind, batch_size, parallelism)

    reference = all_ones_mask(space.d_prime)
    weights = np.array([proximity(reference, m, sigma, metric) for m in masks])
    return PerturbationSet(
        masks=np.stack(masks).astype(np.uint8),
        labels=labels,
        weights=weights,
        instance_mask=reference,
    )


def _query_batched(adapter, items: list, kind: str, batch_size: int, parallelism: int) -> np.ndarray:
    batches = [items[i : i + batch_size] for i in range(0, len(items), batch_size)]
    if parallelism > 1 and getattr(adapter, "parallel_safe", False) and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(lambda chunk: bb.query(adapter, chunk, kind), batches))
    else:
        results = [bb.query(adapter, chunk, kind) for chunk in batches]
    return np.concatenate(results)

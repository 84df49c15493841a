"""Domain types and the mapping between instances and binary feature masks.

An instance is either an RGB image or a token sequence.  Its interpretable
representation is a binary vector with one bit per superpixel segment
(images) or per token group (text).  Recovery turns a bit vector back into
a concrete instance by hiding the deactivated features.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ContractViolation

if TYPE_CHECKING:
    from .segmentation import SegmentMap

# Binary masks are plain numpy vectors of 0/1 (dtype uint8).
Mask = np.ndarray


def as_mask(bits, d_prime: int | None = None) -> Mask:
    """Validate and normalize a 0/1 vector into a uint8 mask."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ContractViolation(f"mask must be 1-D, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ContractViolation("mask entries must be 0 or 1")
    if d_prime is not None and arr.shape[0] != d_prime:
        raise ContractViolation(
            f"mask length {arr.shape[0]} does not match d'={d_prime}"
        )
    return arr.astype(np.uint8)


def all_ones_mask(d_prime: int) -> Mask:
    return np.ones(d_prime, dtype=np.uint8)


@dataclass(frozen=True)
class Instance:
    """One classifiable input: an RGB raster or a token sequence."""

    id: str
    image: np.ndarray | None = None
    tokens: tuple[str, ...] | None = None

    def __post_init__(self):
        if (self.image is None) == (self.tokens is None):
            raise ContractViolation("instance payload must be exactly one of image/tokens")
        if self.image is not None:
            img = self.image
            if img.ndim != 3 or img.shape[2] != 3:
                raise ContractViolation(f"image must have shape (H, W, 3), got {img.shape}")
            if img.shape[0] < 1 or img.shape[1] < 1:
                raise ContractViolation("image must be at least 1x1")
            if img.dtype != np.uint8:
                raise ContractViolation("image channels must be 8-bit (uint8)")
        elif any(not tok for tok in self.tokens):
            raise ContractViolation("tokens must be non-empty strings")

    @classmethod
    def from_image(cls, pixels, id: str = "") -> "Instance":
        img = np.ascontiguousarray(np.asarray(pixels, dtype=np.uint8))
        img.flags.writeable = False
        return cls(id=id, image=img)

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], id: str = "") -> "Instance":
        # Source instances carry at least one token; only recovery may
        # produce an empty sequence (built directly, not through here).
        if len(tokens) < 1:
            raise ContractViolation("text instance requires at least one token")
        return cls(id=id, tokens=tuple(tokens))

    @property
    def kind(self) -> str:
        return "image" if self.image is not None else "text"


@dataclass(frozen=True)
class InterpretableSpace:
    """Binary feature space an instance is explained in.

    ``d_prime`` counts interpretable features: segments for images, token
    groups for text.  For text, ``groups[j]`` lists the token indices that
    bit j toggles; groups partition the token indices.
    """

    kind: str  # "image-segments" | "text-groups"
    d_prime: int
    groups: tuple[tuple[int, ...], ...] | None = None
    segment_map: "SegmentMap | None" = None

    def __post_init__(self):
        if self.kind == "image-segments":
            if self.segment_map is None:
                raise ContractViolation("image space requires a segment map")
            if self.d_prime != self.segment_map.n_segments:
                raise ContractViolation("d' must equal the segment count")
        elif self.kind == "text-groups":
            if not self.groups:
                raise ContractViolation("text space requires token groups")
            if self.d_prime != len(self.groups):
                raise ContractViolation("d' must equal the number of groups")
        else:
            raise ContractViolation(f"unknown space kind {self.kind!r}")


def image_space(segment_map: "SegmentMap") -> InterpretableSpace:
    return InterpretableSpace(
        kind="image-segments",
        d_prime=segment_map.n_segments,
        segment_map=segment_map,
    )


def text_space(groups: Sequence[Sequence[int]]) -> InterpretableSpace:
    normalized = tuple(tuple(sorted(g)) for g in groups)
    return InterpretableSpace(kind="text-groups", d_prime=len(normalized), groups=normalized)


def mean_color(image: np.ndarray) -> np.ndarray:
    """Per-image mean color, rounded to the nearest 8-bit value."""
    return np.rint(image.reshape(-1, 3).mean(axis=0)).astype(np.uint8)


def recover_image(
    mask: Mask,
    segment_map: "SegmentMap",
    original: Instance,
    hide_color: Sequence[int] | None = None,
) -> Instance:
    """Rebuild an image from a mask: kept segments copy the original,
    hidden segments are filled with ``hide_color`` (default: mean color).
    """
    if original.kind != "image":
        raise ContractViolation("recover_image requires an image instance")
    img = original.image
    labels = segment_map.labels
    if labels.shape != img.shape[:2]:
        raise ContractViolation(
            f"segment map shape {labels.shape} does not match image {img.shape[:2]}"
        )
    bits = as_mask(mask, segment_map.n_segments)
    if hide_color is None:
        fill = mean_color(img)
    else:
        fill = np.asarray(hide_color, dtype=np.uint8)
        if fill.shape != (3,):
            raise ContractViolation("hide_color must be an RGB triple")
    keep = bits[labels].astype(bool)  # (H, W) True where the segment is active
    out = np.where(keep[..., None], img, fill[None, None, :])
    return Instance.from_image(out, id=original.id)


def recover_text(mask: Mask, space: InterpretableSpace, original: Instance) -> Instance:
    """Rebuild a token sequence keeping only the tokens of active groups.

    Order is preserved; the result may be empty and is then represented by
    an empty ``tokens`` tuple (bypassing the non-empty Instance invariant,
    since classifiers must accept the empty perturbation).
    """
    if original.kind != "text":
        raise ContractViolation("recover_text requires a text instance")
    if space.kind != "text-groups":
        raise ContractViolation("recover_text requires a text-groups space")
    bits = as_mask(mask, space.d_prime)
    active: set[int] = set()
    for j, group in enumerate(space.groups):
        if bits[j]:
            active.update(group)
    kept = tuple(tok for i, tok in enumerate(original.tokens) if i in active)
    return Instance(id=original.id, tokens=kept)

"""Netpbm readers/writers and plain-text instance loading.

Images travel as binary PPM (P6, maxval 255).  Precomputed label maps are
accepted as binary PGM (P5, one gray level per segment id, so at most 256
segments) or as a JSON 2-D integer array.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import Instance
from .errors import ContractViolation


def _read_header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset of the byte right after the single
    whitespace character that terminates the last token.
    """
    tokens: list[bytes] = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] not in (0x0A, 0x0D):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise ContractViolation("truncated Netpbm header")
        tokens.append(data[start:i])
    if i >= n or not data[i : i + 1].isspace():
        raise ContractViolation("Netpbm header must end with whitespace")
    return tokens, i + 1


def parse_ppm(data: bytes) -> np.ndarray:
    """Decode binary PPM (P6, maxval 255) bytes into an (H, W, 3) uint8 array."""
    tokens, offset = _read_header_tokens(data, 4)
    if tokens[0] != b"P6":
        raise ContractViolation(f"expected P6 magic, got {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ContractViolation(f"only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise ContractViolation("PPM dimensions must be at least 1x1")
    expected = width * height * 3
    raster = data[offset : offset + expected]
    if len(raster) != expected:
        raise ContractViolation(
            f"PPM raster truncated: expected {expected} bytes, got {len(raster)}"
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def ppm_bytes(image: np.ndarray) -> bytes:
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractViolation(f"expected (H, W, 3) image, got shape {img.shape}")
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + img.tobytes()


def read_ppm(path: str | Path, id: str | None = None) -> Instance:
    raw = Path(path).read_bytes()
    return Instance.from_image(parse_ppm(raw), id=id if id is not None else Path(path).name)


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    Path(path).write_bytes(ppm_bytes(image))


def parse_pgm(data: bytes) -> np.ndarray:
    """Decode binary PGM (P5, maxval <= 255) into an (H, W) integer array."""
    tokens, offset = _read_header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ContractViolation(f"expected P5 magic, got {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not (0 < maxval <= 255):
        raise ContractViolation(f"PGM maxval must be in 1..255, got {maxval}")
    expected = width * height
    raster = data[offset : offset + expected]
    if len(raster) != expected:
        raise ContractViolation(
            f"PGM raster truncated: expected {expected} bytes, got {len(raster)}"
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(np.int64)


def read_pgm(path: str | Path) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes())


def write_pgm(path: str | Path, labels: np.ndarray) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ContractViolation("label map must be 2-D")
    if arr.min() < 0 or arr.max() > 255:
        raise ContractViolation("PGM label export supports at most 256 segments")
    h, w = arr.shape
    header = b"P5\n%d %d\n255\n" % (w, h)
    Path(path).write_bytes(header + arr.astype(np.uint8).tobytes())


def read_label_json(path: str | Path) -> np.ndarray:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    arr = np.asarray(data)
    if arr.ndim != 2 or not np.issubdtype(arr.dtype, np.integer):
        raise ContractViolation("JSON label map must be a 2-D integer array")
    return arr.astype(np.int64)


def write_label_json(path: str | Path, labels: np.ndarray) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ContractViolation("label map must be 2-D")
    Path(path).write_text(json.dumps(arr.astype(int).tolist()), encoding="utf-8")


def read_label_map(path: str | Path) -> np.ndarray:
    """Dispatch on extension: .pgm for P5 maps, .json for integer matrices."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".json":
        return read_label_json(path)
    raise ContractViolation(f"unsupported label-map extension {suffix!r} (use .pgm or .json)")


def read_text_instances(path: str | Path, per_line: bool = False) -> list[Instance]:
    """Load text instances from a UTF-8 file.

    With ``per_line`` each non-blank line is one instance, otherwise the
    whole file is a single instance.  Tokenization is whitespace splitting.
    """
    content = Path(path).read_text(encoding="utf-8")
    name = Path(path).name
    if per_line:
        instances = []
        for lineno, line in enumerate(content.splitlines()):
            tokens = line.split()
            if tokens:
                instances.append(Instance.from_tokens(tokens, id=f"{name}:{lineno}"))
        if not instances:
            raise ContractViolation(f"{path}: no non-blank lines")
        return instances
    tokens = content.split()
    if not tokens:
        raise ContractViolation(f"{path}: no tokens")
    return [Instance.from_tokens(tokens, id=name)]

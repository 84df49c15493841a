"""Uniform access to the classifier being explained.

Adapters expose ``predict(batch, kind)`` plus the capability flags
``wants_masks`` (consume binary masks directly instead of recovered
instances), ``parallel_safe`` and ``retries``.  Built-in desk-scale
classifiers make the pipeline self-contained; external models attach via
a newline-delimited-JSON subprocess protocol or an HTTP endpoint.
"""

from __future__ import annotations

import base64
import json
import math
import shlex
import subprocess
from pathlib import Path

import numpy as np
import requests

from .core import Instance
from .errors import BlackBoxError, ContractViolation, TransportError
from .ppm import ppm_bytes

DEFAULT_BATCH_SIZE = 64
DEFAULT_RETRIES = 2


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def query(adapter, batch: list, kind: str) -> np.ndarray:
    """Run one batch through an adapter with retry on transient failures.

    Predictions come back aligned index-for-index with the batch; length
    mismatches, non-finite values and values outside [0, 1] are rejected.
    """
    if not batch:
        raise ContractViolation("batch must be non-empty")
    attempts = getattr(adapter, "retries", DEFAULT_RETRIES) + 1
    predictions = None
    for attempt in range(attempts):
        try:
            predictions = adapter.predict(batch, kind)
            break
        except TransportError:
            if attempt == attempts - 1:
                raise
    arr = np.asarray(predictions, dtype=np.float64)
    if arr.shape != (len(batch),):
        raise BlackBoxError(
            f"adapter returned {arr.shape[0] if arr.ndim == 1 else 'non-vector'} predictions "
            f"for a batch of {len(batch)}"
        )
    for i, value in enumerate(arr):
        if not np.isfinite(value):
            raise BlackBoxError("non-finite prediction", batch_index=i)
        if not 0.0 <= value <= 1.0:
            raise BlackBoxError(f"prediction {value} outside [0, 1]", batch_index=i)
    return arr


class ConstantClassifier:
    """f = p for every input; useful as the degenerate test classifier."""

    wants_masks = False
    parallel_safe = True
    retries = DEFAULT_RETRIES

    def __init__(self, p: float):
        if not 0.0 <= p <= 1.0:
            raise ContractViolation("constant prediction must lie in [0, 1]")
        self.p = float(p)

    def predict(self, batch: list, kind: str) -> list[float]:
        return [self.p] * len(batch)


class QuadraticLogitClassifier:
    """sigmoid(m'Qm + q'm + b) on the segment-activation pattern m.

    A deterministic nonlinear stand-in for a deep classifier; it consumes
    masks directly (wants_masks), so recovery is bypassed.
    """

    wants_masks = True
    parallel_safe = True
    retries = DEFAULT_RETRIES

    def __init__(self, quad: np.ndarray, lin: np.ndarray, bias: float):
        quad = np.asarray(quad, dtype=np.float64)
        lin = np.asarray(lin, dtype=np.float64)
        if quad.ndim != 2 or quad.shape[0] != quad.shape[1]:
            raise ContractViolation("quadratic term must be a square matrix")
        if lin.shape != (quad.shape[0],):
            raise ContractViolation("linear term must match the quadratic dimension")
        if not np.allclose(quad, quad.T):
            raise ContractViolation("quadratic term must be symmetric")
        self.quad = quad
        self.lin = lin
        self.bias = float(bias)

    @property
    def d_prime(self) -> int:
        return self.quad.shape[0]

    def score(self, mask) -> float:
        m = np.asarray(mask, dtype=np.float64)
        if m.shape != (self.d_prime,):
            raise BlackBoxError(f"mask length {m.shape} does not match d'={self.d_prime}")
        return float(m @ self.quad @ m + self.lin @ m + self.bias)

    def predict(self, batch: list, kind: str) -> list[float]:
        if kind != "mask":
            raise BlackBoxError("quadratic-logit classifier consumes masks")
        return [_sigmoid(self.score(m)) for m in batch]


def builtin_quadratic_logit(d_prime: int, seed: int = 0) -> QuadraticLogitClassifier:
    """Draw a deterministic symmetric Q, vector q and bias b from the seed."""
    if d_prime < 1:
        raise ContractViolation("d_prime must be at least 1")
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d_prime, d_prime))
    quad = (a + a.T) / (2.0 * math.sqrt(d_prime))
    lin = rng.normal(size=d_prime) / math.sqrt(d_prime)
    bias = float(rng.normal())
    return QuadraticLogitClassifier(quad, lin, bias)


class LazyQuadraticLogit:
    """Quadratic-logit whose dimension binds to the first batch seen.

    Lets the CLI name a quadratic black box before the segmentation has
    fixed d'.
    """

    wants_masks = True
    parallel_safe = True
    retries = DEFAULT_RETRIES

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._inner: QuadraticLogitClassifier | None = None

    def predict(self, batch: list, kind: str) -> list[float]:
        if kind != "mask":
            raise BlackBoxError("quadratic-logit classifier consumes masks")
        if self._inner is None:
            self._inner = builtin_quadratic_logit(len(np.asarray(batch[0])), self.seed)
        return self._inner.predict(batch, kind)


DEFAULT_LEXICON = {
    "good": 1.0,
    "great": 1.5,
    "excellent": 2.0,
    "love": 1.5,
    "nice": 1.0,
    "fine": 0.5,
    "bad": -1.0,
    "poor": -1.0,
    "awful": -1.5,
    "hate": -1.5,
    "terrible": -2.0,
}


class LexiconSentimentClassifier:
    """sigmoid of the summed lexicon weights of the present tokens."""

    wants_masks = False
    parallel_safe = True
    retries = DEFAULT_RETRIES

    def __init__(self, weights: dict[str, float] | None = None):
        self.weights = dict(DEFAULT_LEXICON if weights is None else weights)

    def predict(self, batch: list, kind: str) -> list[float]:
        if kind != "text":
            raise BlackBoxError("lexicon classifier consumes token sequences")
        out = []
        for item in batch:
            tokens = item.tokens if isinstance(item, Instance) else item
            total = sum(self.weights.get(tok.lower(), 0.0) for tok in tokens)
            out.append(_sigmoid(total))
        return out


class SubprocessClassifier:
    """Long-lived external classifier speaking NDJSON over stdin/stdout.

    Requests: {"id": n, "kind": "image"|"text", "batch": [...]} with images
    as base64 PPM bytes and text as token arrays.  Responses: {"id": n,
    "predictions": [...]}.  A dead or unresponsive process is restarted and
    the request retried as a transport failure.
    """

    wants_masks = False
    parallel_safe = False

    def __init__(self, cmdline: str, retries: int = DEFAULT_RETRIES):
        self.args = shlex.split(cmdline)
        if not self.args:
            raise ContractViolation("subprocess command line is empty")
        self.retries = retries
        self._proc: subprocess.Popen | None = None
        self._next_id = 0

    def _ensure_process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.args,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,  # stderr passes through for logging
                text=True,
            )
        return self._proc

    def _reset(self):
        if self._proc is not None:
            try:
                self._proc.kill()
            except OSError:
                pass
            self._proc = None

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @staticmethod
    def _encode(item, kind: str):
        if kind == "image":
            img = item.image if isinstance(item, Instance) else item
            return base64.b64encode(ppm_bytes(img)).decode("ascii")
        if kind == "text":
            return list(item.tokens if isinstance(item, Instance) else item)
        raise BlackBoxError(f"subprocess protocol has no kind {kind!r}")

    def predict(self, batch: list, kind: str) -> list[float]:
        request_id = self._next_id
        self._next_id += 1
        payload = {
            "id": request_id,
            "kind": kind,
            "batch": [self._encode(item, kind) for item in batch],
        }
        proc = self._ensure_process()
        try:
            proc.stdin.write(json.dumps(payload) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            self._reset()
            raise TransportError(f"subprocess pipe failed: {exc}") from exc
        if not line:
            self._reset()
            raise TransportError("subprocess closed its output stream")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BlackBoxError(f"malformed subprocess response: {exc}") from exc
        if response.get("id") != request_id:
            raise BlackBoxError(
                f"response id {response.get('id')} does not match request {request_id}"
            )
        if "predictions" not in response:
            raise BlackBoxError("subprocess response lacks predictions")
        return response["predictions"]


class HttpClassifier:
    """POSTs PredictRequest JSON to an HTTP endpoint; non-200 is transient."""

    wants_masks = False
    parallel_safe = True

    def __init__(self, url: str, retries: int = DEFAULT_RETRIES, timeout: float = 30.0):
        self.url = url
        self.retries = retries
        self.timeout = timeout
        self._next_id = 0

    def predict(self, batch: list, kind: str) -> list[float]:
        request_id = self._next_id
        self._next_id += 1
        payload = {
            "id": request_id,
            "kind": kind,
            "batch": [SubprocessClassifier._encode(item, kind) for item in batch],
        }
        try:
            resp = requests.post(self.url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"HTTP request failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"HTTP endpoint returned status {resp.status_code}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise BlackBoxError(f"malformed HTTP response: {exc}") from exc
        if "predictions" not in body:
            raise BlackBoxError("HTTP response lacks predictions")
        return body["predictions"]


def parse_blackbox_spec(spec: str):
    """Build an adapter from builtin:<name>[:args] | subprocess:<cmdline> | http:<url>."""
    if spec.startswith(("http://", "https://")):
        return HttpClassifier(_with_predict_path(spec))
    scheme, _, rest = spec.partition(":")
    if scheme == "builtin":
        name, _, args = rest.partition(":")
        if name == "constant":
            if not args:
                raise ContractViolation("builtin:constant requires a probability argument")
            return ConstantClassifier(float(args))
        if name == "quadratic":
            seed = int(args) if args else 0
            return LazyQuadraticLogit(seed)
        if name == "lexicon":
            if args:
                weights = json.loads(Path(args).read_text(encoding="utf-8"))
                return LexiconSentimentClassifier({str(k): float(v) for k, v in weights.items()})
            return LexiconSentimentClassifier()
        raise ContractViolation(f"unknown builtin classifier {name!r}")
    if scheme == "subprocess":
        if not rest:
            raise ContractViolation("subprocess spec requires a command line")
        return SubprocessClassifier(rest)
    if scheme == "http":
        url = rest if rest.startswith(("http://", "https://")) else f"http://{rest}"
        return HttpClassifier(_with_predict_path(url))
    raise ContractViolation(f"unknown black-box spec {spec!r}")


def _with_predict_path(url: str) -> str:
    from urllib.parse import urlparse

    if urlparse(url).path in ("", "/"):
        return url.rstrip("/") + "/predict"
    return url

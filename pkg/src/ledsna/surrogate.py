"""Local surrogate models: kernel epsilon-SVR and a weighted ridge baseline.

The SVR dual is solved by sequential minimal optimization.  Writing
beta_i = alpha_i - alpha_hat_i, the dual is

    max  y'beta - eps*||beta||_1 - (1/2) beta' K beta
    s.t. sum(beta) = 0,  -C_i <= beta_i <= C_i,

with per-sample box limits C_i = C * pi_i carrying the proximity weights.
The solver keeps the alpha and alpha_hat halves separate (2N bounded
variables) and repeatedly optimizes the maximally KKT-violating pair in
closed form.  Attributions are toggle sensitivities of the fitted model
at the explained point; for the linear baseline these are exactly the
coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .core import Instance, InterpretableSpace, Mask, all_ones_mask, as_mask
from .errors import ContractViolation, ConvergenceError
from .metrics import FidelityReport, approx_error, r_squared
from .sampling import DependencyGroups, PerturbationSet, build_perturbation_set
from .segmentation import SegmentGraph, build_adjacency

DEFAULT_TOL = 1e-3
# Pair updates, not full sweeps; N=1000 problems need a few 10^4 of them.
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class KernelSpec:
    """Kernel for the SVR expansion; gamma may stay None until fitting
    resolves it to 1/d'."""

    kind: str  # "gaussian" | "linear"
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "linear"):
            raise ContractViolation(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and self.gamma is not None:
            if not np.isfinite(self.gamma) or self.gamma <= 0:
                raise ContractViolation("gaussian gamma must be finite and positive")


def _resolve_kernel(spec: KernelSpec, d_prime: int) -> KernelSpec:
    if spec.kind == "gaussian" and spec.gamma is None:
        return replace(spec, gamma=1.0 / d_prime)
    return spec


def kernel_eval(spec: KernelSpec, u, v) -> float:
    """Pointwise kernel value; gaussian yields exp(-gamma*||u-v||^2)."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation("kernel arguments must have equal length")
    if spec.kind == "linear":
        return float(a @ b)
    if spec.gamma is None:
        raise ContractViolation("gaussian kernel requires gamma")
    return float(np.exp(-spec.gamma * np.sum((a - b) ** 2)))


def kernel_matrix(spec: KernelSpec, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    a = np.asarray(rows, dtype=np.float64)
    b = np.asarray(cols, dtype=np.float64)
    if spec.kind == "linear":
        return a @ b.T
    if spec.gamma is None:
        raise ContractViolation("gaussian kernel requires gamma")
    sq = (
        np.sum(a**2, axis=1)[:, None]
        + np.sum(b**2, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


def smo_solve(
    K: np.ndarray,
    y: np.ndarray,
    c_box: np.ndarray,
    epsilon: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[np.ndarray, float, int]:
    """Solve the epsilon-SVR dual by maximal-violating-pair SMO.

    Returns (beta, bias, iterations).  Convergence means every KKT
    violation is below tol; otherwise ConvergenceError carries the largest
    remaining violation.
    """
    n = y.shape[0]
    a_up = np.zeros(n)  # alpha: pushes predictions up
    a_dn = np.zeros(n)  # alpha_hat: pushes predictions down
    residual = y.astype(np.float64).copy()  # y - K beta

    neg_inf = -np.inf
    pos_inf = np.inf
    for iteration in range(max_iter):
        up_vals = np.where(a_up < c_box, residual - epsilon, neg_inf)
        dn_vals = np.where(a_dn > 0.0, residual + epsilon, neg_inf)
        cand_up = np.concatenate([up_vals, dn_vals])
        i_ext = int(np.argmax(cand_up))
        m_val = cand_up[i_ext]

        lo_up = np.where(a_up > 0.0, residual - epsilon, pos_inf)
        lo_dn = np.where(a_dn < c_box, residual + epsilon, pos_inf)
        cand_dn = np.concatenate([lo_up, lo_dn])
        j_ext = int(np.argmin(cand_dn))
        big_m_val = cand_dn[j_ext]

        violation = m_val - big_m_val
        if violation <= tol:
            bias = (m_val + big_m_val) / 2.0
            return a_up - a_dn, float(bias), iteration

        # i raises beta[ni] by delta, j lowers beta[nj] by delta.
        i_is_up = i_ext < n
        ni = i_ext if i_is_up else i_ext - n
        room_i = (c_box[ni] - a_up[ni]) if i_is_up else a_dn[ni]

        j_is_up = j_ext < n
        nj = j_ext if j_is_up else j_ext - n
        room_j = a_up[nj] if j_is_up else (c_box[nj] - a_dn[nj])

        eta = K[ni, ni] + K[nj, nj] - 2.0 * K[ni, nj]
        if eta > 1e-12:
            delta = min(violation / eta, room_i, room_j)
        else:
            delta = min(room_i, room_j)

        if i_is_up:
            a_up[ni] += delta
        else:
            a_dn[ni] -= delta
        if j_is_up:
            a_up[nj] -= delta
        else:
            a_dn[nj] += delta

        if ni != nj:
            residual -= delta * (K[:, ni] - K[:, nj])
        if iteration % 1000 == 999:
            # refresh to stop incremental-update rounding from accumulating
            residual = y - K @ (a_up - a_dn)

    raise ConvergenceError("SVR solver did not converge", max_violation=float(violation))


def dual_objective(K: np.ndarray, y: np.ndarray, epsilon: float, beta: np.ndarray) -> float:
    """Value of the maximized SVR dual at beta."""
    return float(y @ beta - epsilon * np.sum(np.abs(beta)) - 0.5 * beta @ K @ beta)


@dataclass(frozen=True)
class SvrModel:
    """Kernel expansion over the retained (nonzero dual) training masks."""

    dual_coeffs: np.ndarray  # (n_support,)
    bias: float
    support_masks: np.ndarray  # (n_support, d')
    kernel: KernelSpec
    epsilon: float
    C: float
    box_limits: np.ndarray  # (n_support,) per-sample limits C*pi

    @property
    def d_prime(self) -> int:
        return self.support_masks.shape[1]


def fit_svr(
    data: PerturbationSet,
    kernel: KernelSpec,
    C: float = 1.0,
    epsilon: float = 0.001,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SvrModel:
    """Fit the epsilon-SVR on a perturbation set.

    Proximity weights enter as per-sample box limits C_i = C * pi_i, so
    far samples get proportionally less pull on the fit.
    """
    if data.n_samples < 2:
        raise ContractViolation("fit_svr requires at least two samples")
    if C <= 0:
        raise ContractViolation("C must be positive")
    if epsilon < 0:
        raise ContractViolation("epsilon must be non-negative")
    spec = _resolve_kernel(kernel, data.d_prime)
    x = data.masks.astype(np.float64)
    gram = kernel_matrix(spec, x, x)
    c_box = C * data.weights
    beta, bias, _ = smo_solve(gram, data.labels, c_box, epsilon, tol=tol, max_iter=max_iter)
    support = np.nonzero(beta)[0]
    return SvrModel(
        dual_coeffs=beta[support],
        bias=bias,
        support_masks=data.masks[support].copy(),
        kernel=spec,
        epsilon=float(epsilon),
        C=float(C),
        box_limits=c_box[support],
    )


def svr_predict(model: SvrModel, mask) -> float:
    bits = np.asarray(mask, dtype=np.float64)
    if bits.shape != (model.d_prime,):
        raise ContractViolation(f"mask length {bits.shape} does not match d'={model.d_prime}")
    return float(svr_predict_many(model, bits[None, :])[0])


def svr_predict_many(model: SvrModel, masks: np.ndarray) -> np.ndarray:
    if model.dual_coeffs.shape[0] == 0:
        return np.full(masks.shape[0], model.bias)
    k = kernel_matrix(model.kernel, np.asarray(masks, dtype=np.float64), model.support_masks)
    return k @ model.dual_coeffs + model.bias


@dataclass(frozen=True)
class LinearModel:
    """Weighted ridge fit: the locally linear baseline."""

    coeffs: np.ndarray  # (d',)
    intercept: float
    lam: float


def fit_ridge(data: PerturbationSet, lam: float = 1.0) -> LinearModel:
    """Minimize sum_i pi_i (f_i - theta.z_i - b)^2 + lam*||theta||^2.

    Closed-form normal equations; the intercept is not penalized.
    """
    if lam < 0:
        raise ContractViolation("lambda must be non-negative")
    z = data.masks.astype(np.float64)
    n, d = z.shape
    design = np.concatenate([z, np.ones((n, 1))], axis=1)
    weighted = design * data.weights[:, None]
    normal = design.T @ weighted
    target = weighted.T @ data.labels
    if lam == 0 and np.linalg.matrix_rank(normal) < d + 1:
        raise ContractViolation("normal equations are singular; use lambda > 0")
    normal[:d, :d] += lam * np.eye(d)
    theta = np.linalg.solve(normal, target)
    return LinearModel(coeffs=theta[:d], intercept=float(theta[d]), lam=float(lam))


def linear_predict(model: LinearModel, mask) -> float:
    bits = np.asarray(mask, dtype=np.float64)
    if bits.shape != model.coeffs.shape:
        raise ContractViolation("mask length does not match the model")
    return float(model.coeffs @ bits + model.intercept)


SurrogateModel = Union[SvrModel, LinearModel]


def surrogate_predict_many(model: SurrogateModel, masks: np.ndarray) -> np.ndarray:
    arr = np.asarray(masks, dtype=np.float64)
    if isinstance(model, SvrModel):
        return svr_predict_many(model, arr)
    return arr @ model.coeffs + model.intercept


def attribute(model: SurrogateModel, reference: Mask) -> np.ndarray:
    """Toggle sensitivity at the explained point.

    attribution_j = g(reference) - g(reference with bit j cleared); for a
    linear model this equals coefficient j exactly, so it is returned
    directly.
    """
    ref = as_mask(reference)
    if not np.all(ref == 1):
        raise ContractViolation("attributions are defined at the all-ones reference mask")
    if isinstance(model, LinearModel):
        if ref.shape != model.coeffs.shape:
            raise ContractViolation("reference length does not match the model")
        return model.coeffs.copy()
    d = ref.shape[0]
    toggled = np.ones((d, d), dtype=np.float64) - np.eye(d)
    base = svr_predict(model, ref)
    return base - svr_predict_many(model, toggled)


@dataclass(frozen=True)
class Explanation:
    """Attribution scores plus fidelity of the surrogate around x."""

    attributions: np.ndarray
    top_k: tuple[int, ...]
    g_at_x: float
    f_at_x: float
    err: float
    r_squared: float
    surrogate_kind: str
    fidelity: FidelityReport

    def __post_init__(self):
        if self.err < 0:
            raise ContractViolation("err must be non-negative")
        if self.r_squared > 1.0:
            raise ContractViolation("r_squared cannot exceed 1")


@dataclass(frozen=True)
class ExplainConfig:
    """Knobs of the explanation pipeline with their defaults."""

    surrogate_kind: str = "svr"  # "svr" | "ridge"
    kernel: str = "gaussian"  # "gaussian" | "linear"
    gamma: float | None = None  # None resolves to 1/d'
    c: float = 1.0
    epsilon: float = 0.001
    lam: float = 1.0
    n_samples: int = 1000
    sigma: float | None = None  # None resolves by metric
    metric: str | None = None  # None resolves by modality
    k: int = 4
    seed: int = 0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    batch_size: int = 64
    parallelism: int = 1
    mode: str = "connected"

    def __post_init__(self):
        if self.surrogate_kind not in ("svr", "ridge"):
            raise ContractViolation(f"unknown surrogate kind {self.surrogate_kind!r}")
        if self.n_samples < 1:
            raise ContractViolation("n_samples must be at least 1")
        if self.k < 1:
            raise ContractViolation("top-K must be at least 1")


def top_k_features(attributions: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the k largest attributions, descending; ties by index."""
    order = np.argsort(-attributions, kind="stable")
    return tuple(int(i) for i in order[: min(k, attributions.shape[0])])


def explain_set(data: PerturbationSet, config: ExplainConfig) -> Explanation:
    """Fit the configured surrogate on an existing perturbation set and
    score it; lets callers fit several surrogates on the same samples."""
    if config.surrogate_kind == "svr":
        kernel = KernelSpec(kind=config.kernel, gamma=config.gamma)
        model: SurrogateModel = fit_svr(
            data,
            kernel,
            C=config.c,
            epsilon=config.epsilon,
            tol=config.tol,
            max_iter=config.max_iter,
        )
    else:
        model = fit_ridge(data, lam=config.lam)

    reference = all_ones_mask(data.d_prime)
    g_at_x = float(surrogate_predict_many(model, reference[None, :])[0])
    f_at_x = data.f_at_instance
    scores = attribute(model, reference)
    predictions = surrogate_predict_many(model, data.masks)
    report = r_squared(data.labels, predictions)
    err = approx_error(f_at_x, g_at_x)
    report = replace(report, err=err)
    return Explanation(
        attributions=scores,
        top_k=top_k_features(scores, config.k),
        g_at_x=g_at_x,
        f_at_x=f_at_x,
        err=err,
        r_squared=report.r_squared,
        surrogate_kind=config.surrogate_kind,
        fidelity=report,
    )


def explain(
    instance: Instance,
    space: InterpretableSpace,
    adapter,
    config: ExplainConfig = ExplainConfig(),
    groups: DependencyGroups | None = None,
    hide_color=None,
) -> Explanation:
    """Run the full local-explanation pipeline on one instance.

    Samples dependency-respecting perturbations, queries the black box,
    fits the configured surrogate and reports attributions with fidelity
    metrics over the perturbation set.
    """
    data = sample_for_space(
        instance, space, adapter, config, groups=groups, hide_color=hide_color
    )
    return explain_set(data, config)


def sample_for_space(
    instance: Instance,
    space: InterpretableSpace,
    adapter,
    config: ExplainConfig,
    groups: DependencyGroups | None = None,
    hide_color=None,
) -> PerturbationSet:
    """Build the perturbation set an explanation is fit on."""
    if space.kind == "image-segments":
        sampler_input: SegmentGraph | DependencyGroups = build_adjacency(space.segment_map)
    else:
        if groups is None:
            groups = DependencyGroups(space.groups, max(max(g) for g in space.groups) + 1)
        sampler_input = groups
    return build_perturbation_set(
        instance,
        space,
        sampler_input,
        adapter,
        n_samples=config.n_samples,
        sigma=config.sigma,
        seed=config.seed,
        metric=config.metric,
        hide_color=hide_color,
        batch_size=config.batch_size,
        parallelism=config.parallelism,
        mode=config.mode,
    )

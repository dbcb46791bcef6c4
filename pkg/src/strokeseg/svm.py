"""Soft-margin kernel SVM trained by sequential minimal optimization.

Kernels: linear, RBF, and a product kernel that applies separate RBF
bandwidths to the modality and spatial sub-vectors (equivalent to the
product of two RBF kernels).  Decision values are calibrated per class with
a Platt sigmoid and combined one-vs-rest into a normalized posterior.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DegenerateLabels, SingleClassInput
from .features import TrainingSet
from .volume import NUM_CLASSES

SPATIAL_DIMS = 3


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its bandwidth parameters.

    kind "product" uses gamma1 on the leading modality dimensions and
    gamma2 on the trailing three spatial dimensions.
    """

    kind: str  # linear | rbf | product
    gamma: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None

    def __post_init__(self):
        if self.kind == "linear":
            return
        if self.kind == "rbf":
            if self.gamma is None or self.gamma <= 0:
                raise ValueError("rbf kernel needs gamma > 0")
        elif self.kind == "product":
            if (
                self.gamma1 is None
                or self.gamma2 is None
                or self.gamma1 <= 0
                or self.gamma2 <= 0
            ):
                raise ValueError("product kernel needs gamma1, gamma2 > 0")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")


def kernel_eval(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> float:
    """Scalar kernel value between two feature vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if spec.kind == "linear":
        return float(a @ b)
    diff = a - b
    if spec.kind == "rbf":
        return float(np.exp(-spec.gamma * (diff @ diff)))
    split = len(a) - SPATIAL_DIMS
    d_mod = diff[:split] @ diff[:split]
    d_spa = diff[split:] @ diff[split:]
    return float(np.exp(-spec.gamma1 * d_mod - spec.gamma2 * d_spa))


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared distances, clamped at zero against GEMM round-off."""
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    d2 = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kernel values between every row of a and every row of b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if spec.kind == "linear":
        return a @ b.T
    if spec.kind == "rbf":
        return np.exp(-spec.gamma * _sq_dists(a, b))
    split = a.shape[1] - SPATIAL_DIMS
    expo = -spec.gamma1 * _sq_dists(a[:, :split], b[:, :split])
    expo -= spec.gamma2 * _sq_dists(a[:, split:], b[:, split:])
    return np.exp(expo)


@njit(cache=True)
def _smo_solve(Q, y, C, tol, max_pairs):
    """Minimize 0.5 a'Qa - sum(a) over 0 <= a <= C, y'a = 0.

    Max-violating-pair working-set selection; returns (alpha, bias,
    final KKT gap, pair updates used).
    """
    n = y.shape[0]
    alpha = np.zeros(n, dtype=np.float64)
    grad = np.full(n, -1.0, dtype=np.float64)  # Q@alpha - 1
    gap = np.inf
    it = 0
    while it < max_pairs:
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * grad[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < gmin:
                    gmin = v
                    j = t
        gap = gmax - gmin
        if i < 0 or j < 0 or gap <= tol:
            break
        quad = Q[i, i] + Q[j, j] - 2.0 * y[i] * y[j] * Q[i, j]
        if quad <= 1e-12:
            quad = 1e-12
        step = gap / quad
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        if step > lim_i:
            step = lim_i
        if step > lim_j:
            step = lim_j
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        if alpha[i] < 0.0:
            alpha[i] = 0.0
        elif alpha[i] > C:
            alpha[i] = C
        if alpha[j] < 0.0:
            alpha[j] = 0.0
        elif alpha[j] > C:
            alpha[j] = C
        for t in range(n):
            grad[t] += step * (y[i] * Q[t, i] - y[j] * Q[t, j])
        it += 1

    # bias: average of -y*grad over free vectors, else midpoint of the gap
    num = 0.0
    cnt = 0
    for t in range(n):
        if 0.0 < alpha[t] < C:
            num += -y[t] * grad[t]
            cnt += 1
    if cnt > 0:
        bias = num / cnt
    else:
        gmax = -np.inf
        gmin = np.inf
        for t in range(n):
            v = -y[t] * grad[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > gmax:
                    gmax = v
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < gmin:
                    gmin = v
        bias = (gmax + gmin) / 2.0
    return alpha, bias, gap, it


@dataclass
class BinarySvmModel:
    """Support vectors with dual coefficients alpha_i * y_i and a bias."""

    support_vectors: np.ndarray  # (s, d) float64
    dual_coef: np.ndarray  # (s,) float64
    bias: float
    C: float
    kernel: KernelSpec
    converged: bool = True
    kkt_gap: float = 0.0
    iterations: int = 0
    # full-problem diagnostics kept for feasibility checks
    alpha: np.ndarray = field(default=None, repr=False)
    train_y: np.ndarray = field(default=None, repr=False)


def smo_train_binary(
    features: np.ndarray,
    y: np.ndarray,
    C: float,
    kernel: KernelSpec,
    tol: float = 1e-3,
    max_pairs: int = 100_000,
) -> BinarySvmModel:
    """Train one soft-margin SVM on +-1 labels via SMO."""
    features = np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not ((y > 0).any() and (y < 0).any()):
        raise SingleClassInput("binary SVM needs both labels present")
    if C <= 0:
        raise ValueError("C must be positive")
    K = kernel_matrix(kernel, features, features)
    Q = (y[:, None] * y[None, :]) * K
    alpha, bias, gap, iters = _smo_solve(
        np.ascontiguousarray(Q), y, float(C), float(tol), int(max_pairs)
    )
    converged = gap <= tol
    if not converged:
        warnings.warn(
            f"SMO hit the {max_pairs}-update cap with KKT gap {gap:.3g}",
            RuntimeWarning,
        )
    sv = alpha > 0
    return BinarySvmModel(
        support_vectors=features[sv].copy(),
        dual_coef=(alpha * y)[sv].copy(),
        bias=float(bias),
        C=float(C),
        kernel=kernel,
        converged=bool(converged),
        kkt_gap=float(gap),
        iterations=int(iters),
        alpha=alpha,
        train_y=y,
    )


def smo_train_binary_ts(ts: TrainingSet, positive_class: int, C, kernel, **kw):
    y = np.where(ts.labels == positive_class, 1.0, -1.0)
    return smo_train_binary(ts.features, y, C, kernel, **kw)


def svm_decision(model: BinarySvmModel, feature: np.ndarray) -> float:
    return float(svm_decision_batch(model, np.atleast_2d(feature))[0])


def svm_decision_batch(model: BinarySvmModel, X: np.ndarray) -> np.ndarray:
    """Unthresholded decision sum(alpha_i y_i K(x_i, x)) + b for each row."""
    if len(model.support_vectors) == 0:
        return np.full(len(X), model.bias)
    K = kernel_matrix(model.kernel, np.asarray(X, dtype=np.float64), model.support_vectors)
    return K @ model.dual_coef + model.bias


def dual_objective(model: BinarySvmModel, features: np.ndarray) -> float:
    """0.5 a'Qa - sum(a) of the stored solution (for oracle comparisons)."""
    K = kernel_matrix(model.kernel, features, features)
    ay = model.alpha * model.train_y
    return float(0.5 * ay @ K @ ay - model.alpha.sum())


@dataclass(frozen=True)
class PlattCalibration:
    A: float
    B: float


_P_FLOOR = np.nextafter(0.0, 1.0)
_P_CEIL = np.nextafter(1.0, 0.0)


def platt_apply(calib: PlattCalibration, decision) -> np.ndarray:
    """Sigmoid probability 1 / (1 + exp(A*f + B)), evaluated stably.

    Outputs are clamped into the open interval (saturated float64 sigmoids
    would otherwise round to exactly 0 or 1).
    """
    f = np.asarray(decision, dtype=np.float64)
    z = calib.A * f + calib.B
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = np.exp(-z[pos]) / (1.0 + np.exp(-z[pos]))
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return np.clip(out, _P_FLOOR, _P_CEIL)


def platt_fit(decisions, labels, max_iter: int = 100) -> PlattCalibration:
    """Fit the sigmoid by damped Newton on the smoothed cross-entropy.

    Targets are (N+ + 1)/(N+ + 2) for positives and 1/(N- + 2) for
    negatives.  Degenerate inputs (all decisions equal) fall back to A=0
    with B matching the class prior.
    """
    f = np.asarray(decisions, dtype=np.float64)
    lab = np.asarray(labels)
    if len(f) < 2 or not ((lab > 0).any() and (lab < 0).any()):
        raise DegenerateLabels("platt fit needs both labels and >= 2 samples")
    n_pos = int((lab > 0).sum())
    n_neg = int((lab < 0).sum())
    t = np.where(lab > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    if np.ptp(f) == 0.0:
        return PlattCalibration(A=0.0, B=math.log((n_neg + 1.0) / (n_pos + 1.0)))

    A = 0.0
    B = math.log((n_neg + 1.0) / (n_pos + 1.0))

    def objective(a, b):
        z = a * f + b
        # log(1 + exp(z)) with the sign split keeps large z finite
        softplus = np.where(z >= 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(z)))
        return float(np.sum(t * z + softplus - z))  # = -sum t*log(p) + (1-t)*log(1-p)

    sigma = 1e-12
    obj = objective(A, B)
    for _ in range(max_iter):
        p = platt_apply(PlattCalibration(A, B), f)
        # with p = 1/(1+exp(z)): dL/dz = t - p, d2L/dz2 = p(1-p)
        d1 = t - p
        w = p * (1.0 - p)
        g_a = float(np.sum(d1 * f))
        g_b = float(np.sum(d1))
        if abs(g_a) < 1e-9 and abs(g_b) < 1e-9:
            break
        h11 = float(np.sum(w * f * f)) + sigma
        h22 = float(np.sum(w)) + sigma
        h12 = float(np.sum(w * f))
        det = h11 * h22 - h12 * h12
        dA = -(h22 * g_a - h12 * g_b) / det
        dB = -(h11 * g_b - h12 * g_a) / det
        # backtracking line search on the Newton direction
        step = 1.0
        while step >= 1e-10:
            new_obj = objective(A + step * dA, B + step * dB)
            if new_obj < obj + 1e-4 * step * (g_a * dA + g_b * dB):
                A += step * dA
                B += step * dB
                obj = new_obj
                break
            step *= 0.5
        else:
            break
    return PlattCalibration(A=float(A), B=float(B))


@dataclass
class MulticlassSvm:
    """One calibrated binary SVM per tissue class (one-vs-rest)."""

    models: list  # [(BinarySvmModel, PlattCalibration)] indexed by class

    @property
    def converged(self) -> bool:
        return all(m.converged for m, _ in self.models)


def svm_train_multiclass(
    ts: TrainingSet, C: float, kernel: KernelSpec, **kw
) -> MulticlassSvm:
    models = []
    for c in range(NUM_CLASSES):
        model = smo_train_binary_ts(ts, c, C, kernel, **kw)
        y = np.where(ts.labels == c, 1, -1)
        decisions = svm_decision_batch(model, ts.features.astype(np.float64))
        calib = platt_fit(decisions, y)
        models.append((model, calib))
    return MulticlassSvm(models=models)


def svm_posterior_batch(mc: MulticlassSvm, X: np.ndarray) -> np.ndarray:
    """Per-class Platt probabilities renormalized to sum to one."""
    X = np.asarray(X, dtype=np.float64)
    probs = np.empty((len(X), NUM_CLASSES), dtype=np.float64)
    for c, (model, calib) in enumerate(mc.models):
        probs[:, c] = platt_apply(calib, svm_decision_batch(model, X))
    total = probs.sum(axis=1)
    dead = total <= 0.0
    total[dead] = 1.0
    probs /= total[:, None]
    probs[dead] = 1.0 / NUM_CLASSES
    return probs


def svm_posterior(mc: MulticlassSvm, feature: np.ndarray) -> np.ndarray:
    return svm_posterior_batch(mc, np.atleast_2d(feature))[0]

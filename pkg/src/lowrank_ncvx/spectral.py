"""Spectral initialization: surrogate matrices assembled from observations,
optional preprocessing of the samples, and factor extraction from the leading
eigen- or singular pairs.

Every initializer is split into two layers: a public ``init_*`` entry that
assembles the surrogate from an instance, and a ``*_from_surrogate`` core
that turns an explicit surrogate matrix into factors.  The second layer is
what makes the population-limit checks direct: feeding the analytic
expectation of the surrogate must return the planted truth exactly, up to
the family's ambiguity.

PSD families symmetrize their surrogate, (Y + Y^T)/2, because the Bernoulli
mask is sampled entrywise and need not be symmetric; the symmetrization is
unbiased and exact when the observation set is complete.

Decompositions here are dense.  Weighted surrogates can be indefinite with
norm dominated by a few hugely negative samples (the reciprocal in T* on a
near-zero y), where shifted power iterations stall; at initialization sizes
a full eigendecomposition is exact and cheap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    FactorPoint,
    SubspaceEstimate,
    cosine_sq,
    derive_seed,
)
from . import problems


def _eig_top(Y, r):
    """Leading r eigenpairs of a symmetric/Hermitian matrix, descending."""
    vals, vecs = np.linalg.eigh(Y)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    gap = float(vals[r - 1] - vals[r]) if r < vals.shape[0] else float(vals[r - 1])
    return SubspaceEstimate(basis=vecs[:, :r], values=vals[:r].copy(), gap=gap)


def _svd_top(Y, r):
    """Leading r singular triples as a (left, right) pair of estimates."""
    u, s, vt = np.linalg.svd(Y, full_matrices=False)
    gap = float(s[r - 1] - s[r]) if r < s.shape[0] else float(s[r - 1])
    left = SubspaceEstimate(basis=u[:, :r], values=s[:r].copy(), gap=gap)
    right = SubspaceEstimate(basis=vt[:r].conj().T, values=s[:r].copy(), gap=gap)
    return left, right


@dataclass
class SpectralEstimate:
    """An initial factor point plus the spectral diagnostics it came from."""

    point: FactorPoint
    subspaces: tuple
    scale: float
    prep: str = "identity"

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")
        if not isinstance(self.subspaces, tuple):
            self.subspaces = (self.subspaces,)


# ---------------------------------------------------------------------------
# Preprocessing of phase retrieval samples
# ---------------------------------------------------------------------------

_PREP_TAGS = ("identity", "trim", "subset", "median", "optimal_weak", "optimal_uniform")


@dataclass(frozen=True)
class Preprocessing:
    """Sample transform T applied before assembling (1/m) sum T(y_i) a_i a_i^T.

    trim(gamma)      keep y_i, zeroed when |y_i| exceeds gamma * mean(y)
    subset(c)        indicator of the ceil(c m) largest samples
    median(gamma)    keep y_i, zeroed when y_i exceeds gamma * median(y)
    optimal_uniform  T*(y) = 1 - 1/y on mean-normalized samples
    optimal_weak(a)  the weak-threshold deformation of T*, needs a > 1/2
    """

    tag: str
    gamma: float = None
    c: float = None
    alpha: float = None

    def __post_init__(self):
        if self.tag not in _PREP_TAGS:
            raise ValueError(f"unknown preprocessing tag {self.tag!r}")
        if self.tag in ("trim", "median") and not (self.gamma is not None and self.gamma > 0):
            raise ValueError("trim/median need gamma > 0")
        if self.tag == "subset" and not (self.c is not None and 0.0 < self.c < 1.0):
            raise ValueError("subset needs 0 < c < 1")
        if self.tag == "optimal_weak" and not (self.alpha is not None and self.alpha > 0.5):
            raise ValueError("the weak-threshold transform needs alpha > 1/2")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def trim(cls, gamma=3.0):
        return cls("trim", gamma=gamma)

    @classmethod
    def subset(cls, c=1.0 / 6.0):
        return cls("subset", c=c)

    @classmethod
    def median_trim(cls, gamma=3.0):
        return cls("median", gamma=gamma)

    @classmethod
    def optimal_weak(cls, alpha):
        return cls("optimal_weak", alpha=alpha)

    @classmethod
    def optimal_uniform(cls):
        return cls("optimal_uniform")

    def describe(self):
        if self.tag == "trim":
            return f"trim({self.gamma:g})"
        if self.tag == "subset":
            return f"subset({self.c:g})"
        if self.tag == "median":
            return f"median({self.gamma:g})"
        if self.tag == "optimal_weak":
            return f"optimal_weak({self.alpha:g})"
        return self.tag


def optimal_T(y, variant="uniform", alpha=None):
    """The limit-optimal preprocessing functions, on mean-normalized samples.

    variant "uniform" is T*(y) = 1 - 1/y; variant "weak" deforms it toward a
    weak-threshold detector and needs alpha > 1/2.  Inputs are clamped below
    at 1e-12 since y = 0 is a measure-zero event under the Gaussian model.
    """
    y = np.maximum(np.asarray(y, dtype=float), 1e-12)
    t = 1.0 - 1.0 / y
    if variant == "uniform":
        return t
    if variant != "weak":
        raise ValueError(f"unknown variant {variant!r}")
    if alpha is None or alpha <= 0.5:
        raise ValueError("the weak-threshold transform needs alpha > 1/2")
    root_star = math.sqrt(0.5)
    root = math.sqrt(alpha)
    return root_star * t / (root - (root - root_star) * t)


def apply_preprocessing(prep, y):
    """Per-sample weights T(y).  Raises if the transform zeroes every sample."""
    y = np.asarray(y, dtype=float)
    m = y.shape[0]
    if prep.tag == "identity":
        w = y * 1.0
    elif prep.tag == "trim":
        w = y * (np.abs(y) <= prep.gamma * np.mean(y))
    elif prep.tag == "median":
        w = y * (y <= prep.gamma * np.median(y))
    elif prep.tag == "subset":
        k = min(m, max(1, int(round(prep.c * m))))
        kth = np.partition(y, m - k)[m - k]
        w = (y >= kth).astype(float)
    elif prep.tag == "optimal_uniform":
        w = optimal_T(y / np.mean(y), "uniform")
    else:
        w = optimal_T(y / np.mean(y), "weak", alpha=prep.alpha)
    if not np.any(w != 0.0):
        raise ValueError("preprocessing removed every sample")
    return w


# ---------------------------------------------------------------------------
# Surrogate assembly
# ---------------------------------------------------------------------------

def surrogate_sensing(instance):
    """Y = (1/m) sum y_i A_i, the adjoint of the measurements at the data."""
    if instance.family not in ("MatrixSensingSym", "MatrixSensingAsym"):
        raise ValueError("sensing surrogate applies to sensing instances")
    p = instance.params
    n1, n2, m = p["n1"], p["n2"], p["m"]
    if instance.design["kind"] == "identity":
        return instance.y.reshape(n1, n2) * (math.sqrt(m) / m)
    A = instance.design["A"]
    return np.tensordot(instance.y, A, axes=([0], [0])) / m


def surrogate_completion(instance):
    """Y = p^{-1} P_Omega(observed matrix); unbiased for the full matrix."""
    if instance.family not in ("MatrixCompletionSym", "MatrixCompletionAsym", "RobustPCA"):
        raise ValueError("completion surrogate applies to sampled-entry instances")
    mask = instance.design["mask"]
    p = max(instance.params["p"], np.finfo(float).tiny)
    Y = np.zeros(mask.shape)
    Y[mask] = instance.y
    return Y / p


def surrogate_quadratic(y, A, weights=None):
    """Y = (1/m) sum w_i y_i a_i a_i^T for vector designs (phase retrieval
    and quadratic sensing share this shape)."""
    w = y if weights is None else weights
    return A.T @ (w[:, None] * A) / y.shape[0]


def surrogate_blind_deconv(instance):
    """Y = sum_j y_j b_j a_j^H.

    With the subspace matrix B unitary on its columns, this unnormalized sum
    has expectation exactly h x^H, which is why no 1/m appears.
    """
    B, A = instance.design["B"], instance.design["A"]
    return B.conj().T @ (instance.y[:, None] * A.conj())


# ---------------------------------------------------------------------------
# Factor extraction
# ---------------------------------------------------------------------------

def factors_from_surrogate(Y, r, symmetric):
    """Leading-pair factors of an explicit surrogate.

    Symmetric route: top-r eigenpairs, eigenvalues clipped at zero before the
    square root (noisy surrogates can dip negative).  Asymmetric route: top-r
    singular triples, L = U S^{1/2}, R = V S^{1/2}.
    """
    if symmetric:
        est = _eig_top(Y, r)
        vals = np.clip(est.values, 0.0, None)
        X = est.basis * np.sqrt(vals)
        return FactorPoint.sym(X), (est,), float(vals[0])
    left, right = _svd_top(Y, r)
    root = np.sqrt(left.values)
    point = FactorPoint.asym(left.basis * root, right.basis * root)
    return point, (left, right), float(left.values[0])


def init_sensing(instance, r):
    """Spectral initialization for matrix sensing from the adjoint surrogate."""
    p = instance.params
    if not (1 <= r <= min(p["n1"], p["n2"])):
        raise ValueError("r out of range for this instance")
    symmetric = instance.family == "MatrixSensingSym"
    if symmetric and r >= p["n1"]:
        raise ValueError("the symmetric route needs r < n")
    Y = surrogate_sensing(instance)
    if symmetric:
        Y = 0.5 * (Y + Y.T)
    point, subspaces, scale = factors_from_surrogate(Y, r, symmetric)
    return SpectralEstimate(point=point, subspaces=subspaces, scale=scale)


def init_matrix_completion(instance, r):
    """Spectral initialization from the inverse-propensity-weighted entries."""
    if instance.family not in ("MatrixCompletionSym", "MatrixCompletionAsym"):
        raise ValueError("expected a matrix completion instance")
    p = instance.params
    if not (1 <= r <= min(p["n1"], p["n2"])):
        raise ValueError("r out of range for this instance")
    symmetric = instance.family == "MatrixCompletionSym"
    if symmetric and r >= p["n1"]:
        raise ValueError("the symmetric route needs r < n")
    Y = surrogate_completion(instance)
    if symmetric:
        Y = 0.5 * (Y + Y.T)
    point, subspaces, scale = factors_from_surrogate(Y, r, symmetric)
    return SpectralEstimate(point=point, subspaces=subspaces, scale=scale)


def pr_estimate_from_surrogate(Y, mean_y, scale_rule, prep_tag="identity"):
    """Leading eigenvector of a phase retrieval surrogate, scaled to a vector.

    scale_rule "third_eig" uses sqrt(lambda_1 / 3), the population identity
    for the raw surrogate; "mean" uses sqrt(mean(y)), which stays calibrated
    under any preprocessing because E y = ||x||^2 regardless.
    """
    est = _eig_top(Y, 1)
    if scale_rule == "third_eig":
        s = math.sqrt(max(float(est.values[0]), 0.0) / 3.0)
    elif scale_rule == "mean":
        s = math.sqrt(max(float(mean_y), 0.0))
    else:
        raise ValueError(f"unknown scale rule {scale_rule!r}")
    x0 = s * est.basis[:, 0]
    return SpectralEstimate(
        point=FactorPoint.vector(x0), subspaces=(est,), scale=s * s, prep=prep_tag,
    )


def init_phase_retrieval(instance, prep=None, scale_rule="auto"):
    """Preprocessed spectral initialization for phase retrieval.

    "auto" scaling resolves to the eigenvalue rule only for the raw surrogate
    with a generous sample budget (m >= n log n); any preprocessing or a small
    budget falls back to the mean-of-samples rule, which both variants of the
    theory accept.
    """
    if instance.family != "PhaseRetrieval":
        raise ValueError("expected a phase retrieval instance")
    prep = Preprocessing.identity() if prep is None else prep
    A, y = instance.design["A"], instance.y
    n, m = instance.params["n"], instance.params["m"]
    w = apply_preprocessing(prep, y)
    Y = surrogate_quadratic(y, A, weights=w)
    if scale_rule == "auto":
        large = m >= n * math.log(max(n, 2))
        scale_rule = "third_eig" if (prep.tag == "identity" and large) else "mean"
    return pr_estimate_from_surrogate(
        Y, float(np.mean(y)), scale_rule, prep_tag=prep.describe(),
    )


def qs_estimate_from_surrogate(Y, sigma, r):
    """Factors from a quadratic sensing surrogate: shift off sigma = mean(y),
    halve, clip at zero, take square roots along the leading eigenbasis."""
    est = _eig_top(Y, r)
    vals = np.clip((est.values - sigma) / 2.0, 0.0, None)
    X0 = est.basis * np.sqrt(vals)
    return SpectralEstimate(
        point=FactorPoint.sym(X0), subspaces=(est,), scale=float(sigma),
    )


def init_quadratic_sensing(instance, r):
    if instance.family != "QuadraticSensing":
        raise ValueError("expected a quadratic sensing instance")
    n = instance.params["n"]
    if not (1 <= r < n):
        raise ValueError("r out of range for this instance")
    A, y = instance.design["A"], instance.y
    Y = surrogate_quadratic(y, A)
    return qs_estimate_from_surrogate(Y, float(np.mean(y)), r)


def bd_estimate_from_surrogate(Y):
    """Rank-one factors of the lifted blind deconvolution surrogate."""
    left, right = _svd_top(Y, 1)
    sigma = float(left.values[0])
    root = math.sqrt(max(sigma, 0.0))
    h0 = root * left.basis[:, 0]
    x0 = root * right.basis[:, 0]
    return SpectralEstimate(
        point=FactorPoint.pair(h0, x0), subspaces=(left, right), scale=sigma,
    )


def init_blind_deconv(instance):
    if instance.family != "BlindDeconv":
        raise ValueError("expected a blind deconvolution instance")
    return bd_estimate_from_surrogate(surrogate_blind_deconv(instance))


def hard_threshold(A, l_row, l_col):
    """Keep entries simultaneously among the l largest magnitudes of their row
    and of their column (ties inclusive); zero the rest.  l <= 0 keeps nothing."""
    A = np.asarray(A, dtype=float)
    if l_row <= 0 or l_col <= 0:
        return np.zeros_like(A)
    n1, n2 = A.shape
    lr, lc = min(l_row, n2), min(l_col, n1)
    mag = np.abs(A)
    row_kth = np.partition(mag, n2 - lr, axis=1)[:, n2 - lr]
    col_kth = np.partition(mag, n1 - lc, axis=0)[n1 - lc, :]
    keep = (mag >= row_kth[:, None]) & (mag >= col_kth[None, :])
    return np.where(keep, A, 0.0)


def init_rpca(instance, r, c_thresh=3.0):
    """Outlier-aware spectral initialization: hard-threshold the observed
    matrix to guess the sparse part, then factor what remains.

    The per-row budget is ceil(c alpha p n2) and per-column ceil(c alpha p n1),
    tracking how many corrupted entries a row or column of the observed set is
    expected to carry.  Returns (estimate, S0).
    """
    if instance.family != "RobustPCA":
        raise ValueError("expected a robust PCA instance")
    p = instance.params
    if not (1 <= r <= min(p["n1"], p["n2"])):
        raise ValueError("r out of range for this instance")
    mask = instance.design["mask"]
    obs = np.zeros(mask.shape)
    obs[mask] = instance.y
    alpha, prob = p["alpha_out"], p["p"]
    l_row = math.ceil(c_thresh * alpha * prob * p["n2"])
    l_col = math.ceil(c_thresh * alpha * prob * p["n1"])
    S0 = hard_threshold(obs, l_row, l_col)
    Y = (obs - S0) / max(prob, np.finfo(float).tiny)
    symmetric = "X" in instance.truth
    if symmetric:
        if r >= p["n1"]:
            raise ValueError("the symmetric route needs r < n")
        Y = 0.5 * (Y + Y.T)
    point, subspaces, scale = factors_from_surrogate(Y, r, symmetric)
    return SpectralEstimate(point=point, subspaces=subspaces, scale=scale), S0


def init_sparse_pr(instance, k=None, gamma=None):
    """Support-restricted spectral initialization for sparse phase retrieval.

    The surrogate's diagonal estimates ||x||^2 + 2 x_i^2, so coordinates with
    oversized diagonal entries flag the support.  Pass gamma to threshold the
    diagonal, or k to keep the k largest entries (ties resolved to the lowest
    index).  Returns (estimate, support); the estimate is zero off-support.
    """
    if instance.family != "PhaseRetrieval":
        raise ValueError("expected a phase retrieval instance")
    if k is None and gamma is None:
        raise ValueError("need a support size k or a diagonal threshold gamma")
    A, y = instance.design["A"], instance.y
    n, m = instance.params["n"], instance.params["m"]
    diag = (y @ (A * A)) / m
    if gamma is not None:
        support = np.flatnonzero(diag > gamma)
    else:
        if not (1 <= k <= n):
            raise ValueError("support size out of range")
        support = np.sort(np.argsort(-diag, kind="stable")[:k])
    if support.size == 0:
        raise ValueError("empty support: no diagonal entry clears the threshold")
    As = A[:, support]
    Ys = surrogate_quadratic(y, As)
    if support.size == 1:
        u = np.ones(1)
        sub = SubspaceEstimate(basis=u[:, None], values=np.array([float(Ys[0, 0])]), gap=0.0)
    else:
        sub = _eig_top(Ys, 1)
        u = sub.basis[:, 0]
    s = math.sqrt(max(float(np.mean(y)), 0.0))
    x0 = np.zeros(n)
    x0[support] = s * u
    est = SpectralEstimate(point=FactorPoint.vector(x0), subspaces=(sub,), scale=s * s)
    return est, support


def init_phase_sync(instance):
    """Leading eigenvector of the observation, projected onto unit-modulus
    entries.  Entries where the eigenvector (measure-zero) vanishes get 1."""
    if instance.family != "PhaseSync":
        raise ValueError("expected a phase synchronization instance")
    est = _eig_top(instance.y, 1)
    u = est.basis[:, 0]
    mag = np.abs(u)
    floor = 1e-15 * max(float(mag.max()), 1.0)
    x0 = np.where(mag > floor, u / np.where(mag > floor, mag, 1.0), 1.0 + 0.0j)
    return FactorPoint("vector", (x0,))


# ---------------------------------------------------------------------------
# Sample-budget sweep for phase retrieval initialization
# ---------------------------------------------------------------------------

def rho_vs_alpha_experiment(n, alphas, prep, trials, seed):
    """Mean squared cosine between truth and initializer across sample budgets.

    For each alpha the experiment generates ``trials`` phase retrieval
    instances with m = ceil(alpha n), initializes with the given
    preprocessing, and records rho = cos^2(x0, x).  Trial t of a given alpha
    depends only on (seed, alpha, t), so runs with different preprocessing
    are paired sample for sample.
    """
    rows = []
    for alpha in alphas:
        m = int(math.ceil(alpha * n))
        rhos = np.empty(trials)
        for t in range(trials):
            inst = problems.gen_phase_retrieval(
                n, m, derive_seed(seed, "rho_curve", repr(float(alpha)), t),
            )
            est = init_phase_retrieval(inst, prep=prep)
            rhos[t] = cosine_sq(est.point.x, inst.truth["x"])
        rows.append({
            "alpha": float(alpha),
            "prep": prep.describe(),
            "mean_rho": float(np.mean(rhos)),
            "std_rho": float(np.std(rhos)),
            "trials": trials,
        })
    return rows


def rho_table_to_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["alpha", "prep", "mean_rho", "std_rho", "trials"])
        for row in rows:
            writer.writerow([
                repr(row["alpha"]), row["prep"],
                repr(row["mean_rho"]), repr(row["std_rho"]), row["trials"],
            ])

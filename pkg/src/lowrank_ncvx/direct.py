"""Solvers that move by subproblem solves instead of gradient steps:
alternating least squares for sensing and completion, Error Reduction for
amplitude phase retrieval, singular value projection in full matrix space,
and the projected power method on unit-modulus and one-hot constraint sets.

Every solver shares the gradient solvers' Trace, so the harness treats the
two families of methods uniformly.  The loss column always carries the
family's plain empirical risk, whatever objective the half-steps optimize.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import FactorPoint, Trace
from .gd import dist_to_truth, incoherence_proxy
from .problems import (
    estimate_rip,
    loss_and_grad,
    sensing_adjoint,
    sensing_measurements,
)

_ALTMIN_VARIANTS = ("reuse", "sample_split", "regularized")
_INNER_CAP = 10_000  # inner-GD guard for the regularized half-steps


@dataclass
class AltMinConfig:
    """Knobs for the alternating solvers.

    inner_tol is the least-squares cutoff (lstsq rcond, and the gradient
    tolerance of the regularized variant's inner descent).  splits is the
    part count T of the sample_split variant; lam the ridge weight of the
    regularized variant.  tol, when set, stops a run once the recorded
    loss falls to it.
    """

    max_outer: int = 30
    inner_tol: float = 1e-10
    variant: str = "reuse"
    splits: int = 1
    lam: float = 0.0
    tol: float = None

    def __post_init__(self):
        if int(self.max_outer) != self.max_outer or self.max_outer < 0:
            raise ValueError("max_outer must be a nonnegative integer")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if self.variant not in _ALTMIN_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if int(self.splits) != self.splits or self.splits < 1:
            raise ValueError("splits must be a positive integer")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.tol is not None and not self.tol >= 0:
            raise ValueError("tol must be nonnegative")


@dataclass
class SvpConfig:
    """Rank, step, and budget for singular value projection.

    eta defaults per family: 1 for completion, 1/(1 + delta_hat_{2r}) for
    sensing with the isometry constant probed empirically (rip_trials
    probes from rip_seed).
    """

    r: int
    eta: float = None
    max_iters: int = 200
    tol: float = None
    rip_trials: int = 20
    rip_seed: int = 0

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError("rank must be a positive integer")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ValueError("max_iters must be a nonnegative integer")
        if self.tol is not None and not self.tol >= 0:
            raise ValueError("tol must be nonnegative")
        if int(self.rip_trials) != self.rip_trials or self.rip_trials < 1:
            raise ValueError("rip_trials must be a positive integer")


def _resolve(config, cls):
    return cls() if config is None else config


# ---------------------------------------------------------------------------
# Alternating least squares on sensing
# ---------------------------------------------------------------------------

def _design_tensor(instance):
    # The identity design is stored symbolically; materialize sqrt(m) E_i
    # for the row-building the half-steps need.  Sizes are desk-scale there.
    d = instance.design
    if d["kind"] == "identity":
        p = instance.params
        m = p["m"]
        A = np.zeros((m, p["n1"] * p["n2"]))
        A[np.arange(m), np.arange(m)] = math.sqrt(m)
        return A.reshape(m, p["n1"], p["n2"])
    return d["A"]


def _solve_full_rank(rows, rhs, rcond, what):
    sol, _, rank, _ = np.linalg.lstsq(rows, rhs, rcond=rcond)
    if rank < rows.shape[1]:
        raise ValueError(f"{what} normal equations are rank-deficient")
    return sol


def altmin_sensing(instance, L0, config=None):
    """Alternating exact least squares on asymmetric matrix sensing.

    Each outer round solves min_R ||A(L R^T) - y|| exactly, then the same
    for L; the trace records one row per round plus the intermediate
    half-step loss in extras["half_loss"].  Returns (L, R, trace).
    """
    if instance.family != "MatrixSensingAsym":
        raise ValueError("alternating sensing expects the asymmetric family")
    cfg = _resolve(config, AltMinConfig)
    if cfg.variant != "reuse":
        raise ValueError("sensing half-steps are always exact; use variant 'reuse'")
    A = _design_tensor(instance)
    y = instance.y
    m, n1, n2 = A.shape
    L = np.array(L0, dtype=float)
    if L.ndim != 2 or L.shape[0] != n1:
        raise ValueError(f"initial left factor must be {n1} x r")
    r = L.shape[1]
    trace = Trace()
    trace.start_clock()
    trace.outcome = "max_iters"
    for t in range(1, cfg.max_outer + 1):
        rows_R = np.tensordot(A, L, axes=([1], [0])).reshape(m, n2 * r)
        R = _solve_full_rank(rows_R, y, cfg.inner_tol,
                             "right half-step").reshape(n2, r)
        half, _ = loss_and_grad(instance, FactorPoint.asym(L, R))
        rows_L = np.tensordot(A, R, axes=([2], [0])).reshape(m, n1 * r)
        L = _solve_full_rank(rows_L, y, cfg.inner_tol,
                             "left half-step").reshape(n1, r)
        point = FactorPoint.asym(L, R)
        val, grad = loss_and_grad(instance, point)
        trace.append(t, val, grad.norm(), dist_to_truth(instance, point),
                     incoherence_proxy(instance, point), half_loss=half)
        if cfg.tol is not None and val <= cfg.tol:
            trace.outcome = "converged"
            break
    return L, R, trace


# ---------------------------------------------------------------------------
# Error Reduction on amplitude phase retrieval
# ---------------------------------------------------------------------------

def er_phase_retrieval(instance, x0, config=None):
    """Alternate the sign estimate b = sgn(Ax) with the linear solve
    x = argmin ||Ax - b sqrt(y)||; sgn(0) = +1 keeps the update a function.
    Rows record the amplitude risk.  Returns (x, trace)."""
    if instance.family != "PhaseRetrieval":
        raise ValueError("Error Reduction expects a phase retrieval instance")
    cfg = _resolve(config, AltMinConfig)
    if cfg.variant != "reuse":
        raise ValueError("Error Reduction has no sampling variants")
    A, y = instance.design["A"], instance.y
    root = np.sqrt(y)
    x = np.array(x0, dtype=float).ravel()

    def record(t, vec):
        point = FactorPoint.vector(vec)
        val, grad = loss_and_grad(instance, point, loss="amplitude")
        trace.append(t, val, grad.norm(), dist_to_truth(instance, point),
                     incoherence_proxy(instance, point))
        return val

    trace = Trace()
    trace.start_clock()
    trace.outcome = "max_iters"
    record(0, x)
    for t in range(1, cfg.max_outer + 1):
        b = np.where(A @ x < 0.0, -1.0, 1.0)
        x = _solve_full_rank(A, b * root, cfg.inner_tol, "amplitude fit")
        val = record(t, x)
        if cfg.tol is not None and val <= cfg.tol:
            trace.outcome = "converged"
            break
    return x, trace


# ---------------------------------------------------------------------------
# Alternating least squares on completion
# ---------------------------------------------------------------------------

def _split_masks(mask, parts):
    # Round-robin over the observed positions in row-major order.
    order = np.argwhere(mask)
    out = []
    for k in range(parts):
        sub = np.zeros_like(mask)
        pos = order[k::parts]
        sub[pos[:, 0], pos[:, 1]] = True
        out.append(sub)
    return out


def _decoupled_ls(basis, obs, mask, axis_name, r, rcond):
    # Solve min ||P_mask(basis sol^T - obs)|| one column at a time; the
    # observed rows of each column must pin down all r coefficients.
    sol = np.empty((mask.shape[1], r))
    for j in range(mask.shape[1]):
        rows = mask[:, j]
        if int(rows.sum()) < r:
            raise ValueError(
                f"{axis_name} {j} has fewer than {r} observations")
        fit, _, rank, _ = np.linalg.lstsq(basis[rows], obs[rows, j], rcond=rcond)
        if rank < r:
            raise ValueError(
                f"{axis_name} {j} normal equations are rank-deficient")
        sol[j] = fit
    return sol


def _ridge_descent(basis, obs, mask, start, lam, tol):
    # Inner gradient descent for the regularized half-step: quadratic
    # objective, fixed 1/Lipschitz step, run to the gradient tolerance.
    sol = np.zeros((mask.shape[1], basis.shape[1])) if start is None \
        else start.copy()
    step = 1.0 / (float(np.linalg.norm(basis, 2)) ** 2 + lam
                  + np.finfo(float).tiny)
    for _ in range(_INNER_CAP):
        resid = np.where(mask, basis @ sol.T - obs, 0.0)
        grad = resid.T @ basis + lam * sol
        if float(np.linalg.norm(grad)) <= tol * (1.0 + float(np.linalg.norm(sol))):
            break
        sol -= step * grad
    return sol


def altmin_mc(instance, L0, config=None):
    """Alternating least squares over the observed entries of an asymmetric
    completion instance.

    Variants: "reuse" solves both half-steps exactly on the full mask every
    round; "sample_split" partitions the mask into config.splits parts
    round-robin and round t uses part t mod T; "regularized" solves ridge
    half-steps (weight config.lam) by inner gradient descent.  The trace
    loss column is always the plain completion risk on the full mask.
    Returns (L, R, trace).
    """
    if instance.family != "MatrixCompletionAsym":
        raise ValueError("alternating completion expects the asymmetric family")
    cfg = _resolve(config, AltMinConfig)
    mask = instance.design["mask"]
    n1, n2 = mask.shape
    obs = np.zeros((n1, n2))
    obs[mask] = instance.y
    L = np.array(L0, dtype=float)
    if L.ndim != 2 or L.shape[0] != n1:
        raise ValueError(f"initial left factor must be {n1} x r")
    r = L.shape[1]
    parts = _split_masks(mask, cfg.splits) if cfg.variant == "sample_split" \
        else [mask]
    trace = Trace()
    trace.start_clock()
    trace.outcome = "max_iters"
    R = None
    for t in range(1, cfg.max_outer + 1):
        sub = parts[(t - 1) % len(parts)]
        if cfg.variant == "regularized":
            R = _ridge_descent(L, obs, sub, R, cfg.lam, cfg.inner_tol)
        else:
            R = _decoupled_ls(L, obs, sub, "column", r, cfg.inner_tol)
        half, _ = loss_and_grad(instance, FactorPoint.asym(L, R))
        if cfg.variant == "regularized":
            L = _ridge_descent(R, obs.T, sub.T, L, cfg.lam, cfg.inner_tol)
        else:
            L = _decoupled_ls(R, obs.T, sub.T, "row", r, cfg.inner_tol)
        point = FactorPoint.asym(L, R)
        val, grad = loss_and_grad(instance, point)
        trace.append(t, val, grad.norm(), dist_to_truth(instance, point),
                     incoherence_proxy(instance, point), half_loss=half)
        if cfg.tol is not None and val <= cfg.tol:
            trace.outcome = "converged"
            break
    return L, R, trace


# ---------------------------------------------------------------------------
# Singular value projection
# ---------------------------------------------------------------------------

def svp(instance, config):
    """Projected gradient descent in full matrix space from M = 0.

    Each step moves along the family gradient and truncates back to rank r
    through a dense SVD; the iterate lives as that truncated factorization,
    so its rank stays at most r by construction (recorded per row in
    extras["rank"]).  Returns (M, trace) with M materialized dense.
    """
    sensing = instance.family in ("MatrixSensingSym", "MatrixSensingAsym")
    completion = instance.family in ("MatrixCompletionSym",
                                     "MatrixCompletionAsym")
    if not (sensing or completion):
        raise ValueError("SVP handles sensing and completion instances")
    if not isinstance(config, SvpConfig):
        raise ValueError("svp needs an SvpConfig")
    p = instance.params
    n1, n2 = p["n1"], p["n2"]
    r = config.r
    eta = config.eta
    if eta is None:
        if completion:
            eta = 1.0
        else:
            probe_rank = min(2 * r, n1, n2)
            delta = estimate_rip(instance, probe_rank, config.rip_trials,
                                 config.rip_seed).delta_hat
            eta = 1.0 / (1.0 + delta)
    if completion:
        mask = instance.design["mask"]
        obs = np.zeros((n1, n2))
        obs[mask] = instance.y
        scale = max(p["p"], np.finfo(float).tiny)
    fac = (np.zeros((n1, r)), np.zeros(r), np.zeros((r, n2)))
    Mstar = instance.truth["M"]
    trace = Trace()
    trace.start_clock()
    trace.outcome = "max_iters"
    for t in range(config.max_iters + 1):
        M = (fac[0] * fac[1]) @ fac[2]
        if completion:
            resid = np.where(mask, M - obs, 0.0)
            val = 0.5 * float(np.sum(resid * resid)) / scale
            grad = resid / scale
        else:
            e = sensing_measurements(instance, M) - instance.y
            val = 0.5 * float(e @ e) / p["m"]
            grad = sensing_adjoint(instance, e) / p["m"]
        gnorm = float(np.linalg.norm(grad))
        trace.append(t, val, gnorm, float(np.linalg.norm(M - Mstar)), 0.0,
                     rank=int(np.count_nonzero(fac[1])))
        if not (np.isfinite(val) and np.isfinite(gnorm)):
            trace.outcome = "diverged"
            break
        if config.tol is not None and val <= config.tol:
            trace.outcome = "converged"
            break
        if t == config.max_iters:
            break
        U, s, Vt = np.linalg.svd(M - eta * grad, full_matrices=False)
        fac = (U[:, :r], s[:r], Vt[:r])
    return M, trace


# ---------------------------------------------------------------------------
# Projected power method
# ---------------------------------------------------------------------------

def _phase_project(v):
    mag = np.abs(v)
    out = np.where(mag > 0.0, v / np.where(mag > 0.0, mag, 1.0), 1.0 + 0.0j)
    return out.astype(complex)


def _vertex_project(v, n, m):
    blocks = np.real(v).reshape(n, m)
    out = np.zeros_like(blocks)
    out[np.arange(n), np.argmax(blocks, axis=1)] = 1.0  # ties to lowest index
    return out.ravel()


def ppm(instance, x0, eta=1.0, max_iters=100):
    """Projected power iterations x <- P(eta L x).

    Phase synchronization projects entrywise onto unit modulus (zeros map
    to 1); joint alignment projects each length-m block onto the nearest
    one-hot vertex.  Both projections are scale-invariant, so eta only
    matters through its sign and is kept at the documented default 1.  The
    input point is projected before the first step, so every recorded
    iterate is feasible.  Returns (x, trace).
    """
    if instance.family not in ("PhaseSync", "JointAlignment"):
        raise ValueError("the projected power method handles phase "
                         "synchronization and joint alignment")
    if not eta > 0:
        raise ValueError("eta must be positive")
    if int(max_iters) != max_iters or max_iters < 0:
        raise ValueError("max_iters must be a nonnegative integer")
    if instance.family == "PhaseSync":
        L = instance.y
        project = _phase_project
    else:
        L = instance.design["L"]
        n, m = instance.params["n"], instance.params["alphabet_m"]
        project = lambda v: _vertex_project(v, n, m)  # noqa: E731

    x = project(np.asarray(x0).ravel())

    def record(t, vec):
        point = FactorPoint("vector", (vec,))
        val, grad = loss_and_grad(instance, point)
        trace.append(t, val, grad.norm(), dist_to_truth(instance, point),
                     incoherence_proxy(instance, point))

    trace = Trace()
    trace.start_clock()
    trace.outcome = "max_iters"
    record(0, x)
    for t in range(1, int(max_iters) + 1):
        nxt = project(eta * (L @ x))
        record(t, nxt)
        if np.array_equal(nxt, x):
            trace.outcome = "converged"
            x = nxt
            break
        x = nxt
    return x, trace

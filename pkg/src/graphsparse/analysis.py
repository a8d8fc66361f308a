"""Numerical checks behind the model design.

* Gradient magnitudes of a row-normalized adjacency ``A_ij = f(s_ij) / sum_k
  f(s_ik)``: bounded by 1/4 for ``f = exp``, by ``1 / (4 s_ik)`` for
  ``f(x) = x`` (which grows without bound as ``s_ik -> 0``).
* Rank-C factorization ``M = lam @ K @ mu`` with basis columns and rows picked
  by elimination, and its non-uniqueness under ``K -> D^-1 K D``.
* Weighted-degree and concentration statistics of a trained adjacency.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InversionError, RankError, SingularityError
from .rng import SplitMix64

RANK_RTOL = 1e-10


def softmax_adjacency(E1, E2):
    s = np.asarray(E1) @ np.asarray(E2)
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_adjacency_jacobian(A):
    """``J[i, j, k] = dA_ij / ds_ik = A_ij (1[j=k] - A_ik)``."""
    N = A.shape[1]
    return A[:, :, None] * (np.eye(N)[None] - A[:, None, :])


def softmax_adjacency_grad(E1, E2, i, j, k):
    A = softmax_adjacency(E1, E2)
    return float(A[i, j] * ((j == k) - A[i, k]))


def linear_adjacency(s):
    s = np.asarray(s, dtype=np.float64)
    return s / s.sum(axis=1, keepdims=True)


def linear_adjacency_jacobian(s):
    """Partials of ``s_ij / sum_k s_ik``: ``(1[j=k] A_ij - A_ij A_ik) / s_ik``."""
    s = np.asarray(s, dtype=np.float64)
    A = linear_adjacency(s)
    return softmax_adjacency_jacobian(A) / s[:, None, :]


def linear_adjacency_grad(s, i, j, k):
    A = linear_adjacency(s)
    return float(((j == k) * A[i, j] - A[i, j] * A[i, k]) / s[i, k])


def kernel_adjacency_grad_bound(s_ik):
    """Upper bound ``1 / (4 s_ik)`` on the linear-normalization partials."""
    if s_ik == 0:
        raise SingularityError("s_ik = 0: the linear-normalization gradient is unbounded")
    if s_ik < 0:
        raise DomainError(f"s_ik must be positive, got {s_ik}")
    return 1.0 / (4.0 * s_ik)


def positive_features(x):
    """elu(x) + 1: a strictly positive feature map for kernelized adjacency."""
    return np.where(x > 0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def gradient_study(draws=10_000, max_nodes=32, max_rank=4, seed=0):
    """Compare adjacency partials of softmax vs linear normalization.

    Each draw picks N in [2, max_nodes], C in [1, max_rank] and a scale
    log-uniform in [0.1, 10], then samples ``E1 (N, C)``, ``E2 (C, N)``.
    The softmax variant uses ``s = E1 @ E2``; the kernel variant uses
    ``s = phi(E1) @ phi(E2)`` with :func:`positive_features`.
    """
    rng = SplitMix64(seed)
    bound_max = 0.0
    violations = 0
    lin_max = 0.0
    lin_max_min_s = None
    small_s_draws = 0
    anomalies = 0
    for _ in range(draws):
        N = 2 + int(rng.random() * (max_nodes - 1))
        C = 1 + int(rng.random() * max_rank)
        scale = 10.0 ** rng.uniform(-1.0, 1.0)
        E1 = rng.normal(0.0, scale, (N, C))
        E2 = rng.normal(0.0, scale, (C, N))
        J = np.abs(softmax_adjacency_jacobian(softmax_adjacency(E1, E2)))
        peak = float(J.max())
        bound_max = max(bound_max, peak)
        violations += int((J > 0.25 + 1e-12).sum())
        s = positive_features(E1) @ positive_features(E2)
        lin = float(np.abs(linear_adjacency_jacobian(s)).max())
        if s.min() <= 1e-4:
            small_s_draws += 1
        if lin > 1e3:
            anomalies += 1
        if lin > lin_max:
            lin_max, lin_max_min_s = lin, float(s.min())
    return {
        "draws": draws,
        "bound_max": bound_max,
        "violations": violations,
        "linear_max": lin_max,
        "linear_max_min_s": lin_max_min_s,
        "small_s_draws": small_s_draws,
        "linear_anomalies": anomalies,
    }


@dataclass
class RankFactorization:
    lam: np.ndarray  # (N, C) basis columns of M
    K: np.ndarray  # (C, C)
    mu: np.ndarray  # (C, N) basis rows of M

    def reconstruct(self):
        return self.lam @ self.K @ self.mu

    def residual(self, M):
        return float(np.max(np.abs(self.reconstruct() - M), initial=0.0))


def numerical_rank(M, rtol=RANK_RTOL):
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int((sv > rtol * sv[0]).sum())


def pivot_columns(M, limit, tol):
    """Columns chosen as pivots by Gaussian elimination with partial pivoting."""
    A = np.array(M, dtype=np.float64)
    rows, cols = A.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows or len(pivots) == limit:
            break
        p = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[p, c]) <= tol:
            continue
        A[[r, p]] = A[[p, r]]
        A[r + 1:] -= np.outer(A[r + 1:, c] / A[r, c], A[r])
        pivots.append(c)
        r += 1
    return pivots


def _fill(pivots, n, C):
    rest = [i for i in range(n) if i not in pivots]
    return sorted(pivots + rest[:C - len(pivots)])


def rank_factorize(M, C):
    """Factor a rank <= C matrix as ``M = lam @ K @ mu``.

    ``lam`` holds C columns of M and ``mu`` C rows of M, found by elimination;
    ``K`` is the least-squares solution of ``lam @ K @ mu = M``.
    """
    M = np.asarray(M, dtype=np.float64)
    rank = numerical_rank(M)
    if rank > C:
        raise RankError(f"matrix has numerical rank {rank} > C={C}", rank=rank)
    tol = RANK_RTOL * max(1.0, float(np.abs(M).max(initial=0.0)))
    cols = _fill(pivot_columns(M, rank, tol), M.shape[1], C)
    rows = _fill(pivot_columns(M.T, rank, tol), M.shape[0], C)
    lam = M[:, cols]
    mu = M[rows, :]
    X = np.linalg.lstsq(lam, M, rcond=None)[0]  # K @ mu
    K = np.linalg.lstsq(mu.T, X.T, rcond=None)[0].T
    return RankFactorization(lam, K, mu)


def conjugate_factorization(f, D, max_cond=1e8):
    """``(lam D, D^-1 K D, D^-1 mu)``: another factorization of the same M."""
    D = np.asarray(D, dtype=np.float64)
    cond = np.linalg.cond(D)
    if not np.isfinite(cond) or cond >= max_cond:
        raise InversionError(f"D is numerically singular (condition number {cond:.3g})")
    return RankFactorization(f.lam @ D, np.linalg.solve(D, f.K @ D), np.linalg.solve(D, f.mu))


def theorem_study(n=20, rank=4, trials=100, seed=0):
    """Factor ``trials`` random rank-``rank`` matrices and conjugate each by a
    random invertible D; additionally conjugate the first factorization by
    every D and record how far apart the resulting K matrices are."""
    rng = SplitMix64(seed)
    residuals, conj_residuals, k_changes, Ds = [], [], [], []
    first = first_M = None
    for _ in range(trials):
        M = rng.normal(size=(n, rank)) @ rng.normal(size=(rank, n))
        scale = max(1.0, float(np.abs(M).max()))
        f = rank_factorize(M, rank)
        while True:
            D = rng.normal(size=(rank, rank))
            if np.linalg.cond(D) < 1e4:
                break
        g = conjugate_factorization(f, D)
        residuals.append(f.residual(M) / scale)
        conj_residuals.append(g.residual(M) / scale)
        k_changes.append(float(np.abs(g.K - f.K).max()))
        Ds.append(D)
        if first is None:
            first, first_M = f, M
    Ks = [conjugate_factorization(first, D) for D in Ds]
    shared_residual = max(k.residual(first_M) for k in Ks) / max(1.0, float(np.abs(first_M).max()))
    flat = np.array([k.K.ravel() for k in Ks])
    gaps = np.abs(flat[:, None, :] - flat[None, :, :]).max(axis=2)
    np.fill_diagonal(gaps, np.inf)
    return {
        "n": n, "rank": rank, "trials": trials,
        "max_residual": max(residuals),
        "max_conjugate_residual": max(conj_residuals),
        "min_k_change": min(k_changes),
        "shared_matrix_max_residual": shared_residual,
        "min_pairwise_k_gap": float(gaps.min()) if trials > 1 else None,
    }


def gini(x):
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    n = x.size
    if n == 0 or x.sum() == 0:
        return 0.0
    return float((2 * np.arange(1, n + 1) - n - 1) @ x / (n * x.sum()))


@dataclass
class SparsityReport:
    weighted_degrees: np.ndarray
    tau: float
    fraction: float
    gini: float
    entries: np.ndarray  # sorted flattened adjacency

    def fraction_above(self, tau):
        return float(1.0 - np.searchsorted(self.entries, tau, side="right") / self.entries.size)

    def to_dict(self, bins=10):
        lo, hi = float(self.weighted_degrees.min()), float(self.weighted_degrees.max())
        if hi - lo <= 1e-9 * max(1.0, abs(hi)):
            # row-stochastic matrices: every degree is 1 up to rounding
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(self.weighted_degrees, bins=bins, range=(lo, hi))
        return {
            "tau": self.tau,
            "fraction_above": self.fraction,
            "gini": self.gini,
            "degree_mean": float(self.weighted_degrees.mean()),
            "degree_std": float(self.weighted_degrees.std()),
            "degree_histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
        }


def sparsity_report(A, tau=None):
    """Weighted degrees, share of entries above ``tau`` (default 1/N), Gini."""
    A = np.asarray(A, dtype=np.float64)
    if (A < 0).any():
        raise DomainError("adjacency has negative entries")
    tau = 1.0 / A.shape[0] if tau is None else tau
    entries = np.sort(A.ravel())
    rep = SparsityReport(A.sum(axis=1), tau, 0.0, gini(entries), entries)
    rep.fraction = rep.fraction_above(tau)
    return rep


def clamp_coefficients(params, keep_fraction, fill=-3.0):
    """Copy of ``params`` where every coefficient matrix ``U`` keeps only its
    largest ``keep_fraction`` of entries; the rest are set to ``fill``.

    Returns ``(params, frozen)`` where ``frozen`` maps each ``U`` name to the
    boolean mask of filled entries, ready for ``train(..., frozen=frozen)``.
    """
    if not 0 <= keep_fraction <= 1:
        raise ValueError(f"keep_fraction must lie in [0, 1], got {keep_fraction}")
    out = {k: v.copy() for k, v in params.items()}
    frozen = {}
    for name, U in out.items():
        if name.split(".")[-1] != "U" or U.size == 0:
            continue
        keep = int(np.ceil(keep_fraction * U.size))
        order = np.argsort(U.ravel(), kind="stable")
        mask = np.zeros(U.size, dtype=bool)
        mask[order[:U.size - keep]] = True
        mask = mask.reshape(U.shape)
        U[mask] = fill
        frozen[name] = mask
    return out, frozen

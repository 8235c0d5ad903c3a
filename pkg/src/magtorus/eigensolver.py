"""Block Lanczos eigensolver for the assembled magnetic operator.

The Krylov space is built from a Chebyshev polynomial of the operator that
damps the unwanted part of the spectrum; eigenpairs are then extracted by a
Rayleigh-Ritz step with the operator itself.  Interior windows use the folded
operator (H - sigma)^2, so no factorization is ever formed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NoConvergence
from .operator_grid import GridWavefunction, SparseHermitianOperator

log = logging.getLogger(__name__)

CLUSTER_RTOL = 1e-6


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: list[GridWavefunction]
    residuals: np.ndarray
    target: str
    iterations: int = 0
    clusters: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        if self.clusters.size != self.eigenvalues.size:
            self.clusters = cluster_ids(self.eigenvalues)

    def multiplicities(self) -> list[int]:
        return [int(np.sum(self.clusters == c)) for c in np.unique(self.clusters)]


def cluster_ids(values, rtol: float = CLUSTER_RTOL) -> np.ndarray:
    """Label sorted eigenvalues; neighbours closer than rtol (relative) share a label."""
    values = np.asarray(values, dtype=float)
    ids = np.zeros(values.size, dtype=int)
    for i in range(1, values.size):
        scale = max(1.0, abs(values[i]), abs(values[i - 1]))
        same = abs(values[i] - values[i - 1]) < rtol * scale
        ids[i] = ids[i - 1] if same else ids[i - 1] + 1
    return ids


def _orthonormalize(W: np.ndarray, Q: np.ndarray | None, rng: np.random.Generator) -> np.ndarray:
    """Orthonormalize the block W against Q (two CGS passes), refill lost rank."""
    for _ in range(2):
        if Q is not None and Q.shape[1]:
            W = W - Q @ (Q.conj().T @ W)
    Wq, r = np.linalg.qr(W)
    diag = np.abs(np.diag(r))
    scale = max(diag.max(initial=0.0), 1e-300)
    bad = diag < 1e-10 * scale
    if np.any(bad):
        fresh = rng.standard_normal((W.shape[0], int(bad.sum()))) + 1j * rng.standard_normal((W.shape[0], int(bad.sum())))
        keep = Wq[:, ~bad]
        for _ in range(2):
            if Q is not None and Q.shape[1]:
                fresh = fresh - Q @ (Q.conj().T @ fresh)
            fresh = fresh - keep @ (keep.conj().T @ fresh)
        fq, _ = np.linalg.qr(fresh)
        Wq = np.concatenate([keep, fq], axis=1)
    return Wq


def _chebyshev(apply: Callable, X: np.ndarray, degree: int, cut: float, top: float) -> np.ndarray:
    """T_degree of the operator mapped so that [cut, top] -> [-1, 1]."""
    if degree <= 1:
        return apply(X)
    e = 0.5 * (top - cut)
    c = 0.5 * (top + cut)
    y_prev = X
    y = (apply(X) - c * X) / e
    for _ in range(2, degree + 1):
        y_next = 2.0 * (apply(y) - c * y) / e - y_prev
        y_prev, y = y, y_next
        norm = np.linalg.norm(y)
        if norm > 1e200:
            y = y / norm
            y_prev = y_prev / norm
    return y


def _filter_degree(wanted: float, cut: float, top: float, minimum: int, gain: float = 8.0, maximum: int = 3000) -> int:
    """Degree giving the wanted edge an amplification of about e^gain over [cut, top]."""
    x = 1.0 + 2.0 * max(cut - wanted, 0.0) / (top - cut)
    spread = np.arccosh(x) if x > 1.0 else 0.0
    if spread <= 0.0:
        return maximum
    return int(np.clip(np.ceil(gain / spread), minimum, maximum))


def _block_krylov(apply: Callable, X0: np.ndarray, steps: int, rng) -> np.ndarray:
    """Orthonormal basis of the block Krylov space, full reorthogonalization."""
    Q = _orthonormalize(X0, None, rng)
    blocks = [Q]
    basis = Q
    for _ in range(steps - 1):
        W = apply(blocks[-1])
        Wq = _orthonormalize(W, basis, rng)
        blocks.append(Wq)
        basis = np.concatenate([basis, Wq], axis=1)
    return basis


def _rayleigh_ritz(H_apply: Callable, Q: np.ndarray):
    HQ = H_apply(Q)
    G = Q.conj().T @ HQ
    G = 0.5 * (G + G.conj().T)
    theta, Y = np.linalg.eigh(G)
    X = Q @ Y
    HX = HQ @ Y
    R = HX - X * theta
    return theta, X, np.linalg.norm(R, axis=0)


def _lowest(
    apply: Callable,
    n: int,
    k: int,
    tol: float,
    bounds: tuple[float, float],
    block: int,
    seed: int,
    max_iter: int,
    steps: int,
    degree: int,
    finalize: Callable | None = None,
):
    """k lowest eigenpairs of the Hermitian operator ``apply``.

    ``finalize(X)`` may replace the convergence test: it receives the current
    Ritz block and returns (values, vectors, residuals, worst) for the pairs
    that are actually wanted.
    """
    rng = np.random.default_rng(seed)
    lo, hi = bounds
    width = k + block
    X = rng.standard_normal((n, width)) + 1j * rng.standard_normal((n, width))
    cut = None
    deg = degree
    worst = np.inf
    for it in range(1, max_iter + 1):
        if cut is None:
            op = apply
        else:
            op = lambda Y, c=cut, d=deg: _chebyshev(apply, Y, d, c, hi)
        Q = _block_krylov(op, X, steps, rng)
        theta, V, res = _rayleigh_ritz(apply, Q)
        m = min(width, theta.size)
        X = V[:, :m]
        if finalize is None:
            vals, vecs, rs = theta[:k], V[:, :k], res[:k]
            worst = float(np.max(rs / np.maximum(1.0, np.abs(vals))))
        else:
            vals, vecs, rs, worst = finalize(X)
        if worst <= tol:
            return vals, vecs, rs, it
        # Ritz values bound the eigenvalues from above, so the cut stays above the kept ones
        cut = max(float(theta[m - 1]), lo + 1e-3 * (hi - lo) / max(n, 1))
        cut = min(cut, hi - 1e-12 * abs(hi))
        deg = _filter_degree(float(theta[k - 1]), cut, hi, degree)
        log.debug("iteration %d: worst residual %.3e, cut %.6g, degree %d", it, worst, cut, deg)
    raise NoConvergence(max_iter, worst)


def _default_block(H: SparseHermitianOperator, block: int | None) -> int:
    return max(abs(H.flux_phi) + 1, 4) if block is None else max(block, abs(H.flux_phi) + 1)


def _to_result(H, theta, V, res, target, it) -> EigenResult:
    n = H.n
    vecs = []
    for i in range(V.shape[1]):
        v = V[:, i]
        # fix the global phase so the largest component is real positive
        j = int(np.argmax(np.abs(v)))
        v = v * (np.abs(v[j]) / v[j])
        vecs.append(GridWavefunction(n, v.reshape(n, n) * n, H.flux_phi))
    return EigenResult(np.asarray(theta, dtype=float), vecs, np.asarray(res, dtype=float), target, it)


def lowest_eigenpairs(
    H: SparseHermitianOperator,
    k: int,
    tol: float = 1e-8,
    seed: int = 0,
    block: int | None = None,
    max_iter: int = 200,
    steps: int = 8,
    degree: int = 40,
) -> EigenResult:
    """k smallest eigenpairs of H with residual <= tol * max(1, |lambda|).

    Eigenvectors are returned normalized for the (1/N^2) inner product.
    """
    if k < 1 or k > H.dim // 4:
        raise ValueError(f"k must lie in [1, dim/4], got {k}")
    b = _default_block(H, block)
    bounds = H.gershgorin()
    theta, V, res, it = _lowest(H.matvec, H.dim, k, tol, bounds, b, seed, max_iter, steps, degree)
    return _to_result(H, theta, V, res, f"lowest-{k}", it)


def window_eigenpairs(
    H: SparseHermitianOperator,
    sigma: float,
    k: int,
    tol: float = 1e-8,
    seed: int = 0,
    block: int | None = None,
    max_iter: int = 400,
    steps: int = 8,
    degree: int = 60,
) -> EigenResult:
    """k eigenpairs of H nearest sigma through the folded operator (H - sigma)^2.

    Eigenvalues are Rayleigh quotients with H on the converged folded subspace.
    """
    lo, hi = H.gershgorin()
    if not (0.0 <= sigma <= hi):
        raise ValueError(f"sigma={sigma} outside [0, {hi}]")
    if k < 1 or k > H.dim // 4:
        raise ValueError(f"k must lie in [1, dim/4], got {k}")
    b = _default_block(H, block)

    def folded(X):
        Y = H.matvec(X) - sigma * X
        return H.matvec(Y) - sigma * Y

    rng = np.random.default_rng(seed + 1)

    def finalize(X):
        Q = _orthonormalize(X, None, rng)
        theta, V, res = _rayleigh_ritz(H.matvec, Q)
        order = np.argsort(np.abs(theta - sigma), kind="stable")[:k]
        order = order[np.argsort(theta[order], kind="stable")]
        worst = float(np.max(res[order] / np.maximum(1.0, np.abs(theta[order]))))
        return theta[order], V[:, order], res[order], worst

    top = max((hi - sigma) ** 2, (sigma - lo) ** 2)
    theta, V, res, it = _lowest(folded, H.dim, k, tol, (0.0, top), b, seed, max_iter, steps, degree, finalize)
    return _to_result(H, theta, V, res, f"window(sigma={sigma:g}, k={k})", it)


def residual_report(H: SparseHermitianOperator, result: EigenResult) -> list[float]:
    """||H u - lambda u|| / ||u|| recomputed from scratch for every pair."""
    out = []
    for lam, u in zip(result.eigenvalues, result.eigenvectors):
        norm = u.norm()
        if norm == 0.0:
            raise ValueError("zero eigenvector")
        r = H.matvec(u.flat) - lam * u.flat
        out.append(float(np.sqrt(np.mean(np.abs(r) ** 2)) / norm))
    return out


def dense_eigh(H: SparseHermitianOperator):
    """Full dense diagonalization, for small grids and as a test oracle."""
    if H.n > 48:
        raise ValueError("dense oracle restricted to n <= 48")
    A = H.matrix.toarray()
    w, v = np.linalg.eigh(0.5 * (A + A.conj().T))
    return w, v

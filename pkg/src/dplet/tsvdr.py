"""Truncated SVD denoising.

The decomposition is a one-sided (Hestenes) Jacobi SVD written in plain
numpy.  It is vectorised over a leading batch axis so that thousands of
lookback windows can be denoised together; each pair rotation is applied to
every matrix in the batch at once, with already-orthogonal pairs receiving
the identity rotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dplet.errors import ConvergenceError, DataError, ParameterError

SVD_TOL = 1e-12
MAX_SWEEPS = 100


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``X = U @ diag(sigma) @ V.T`` with ``sigma`` descending."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self, sigma: np.ndarray | None = None) -> np.ndarray:
        s = self.sigma if sigma is None else sigma
        return (self.U * s[..., None, :]) @ np.swapaxes(self.V, -1, -2)


@dataclass(frozen=True)
class TruncationPolicy:
    """Threshold rule for discarding singular values.

    ``mode="absolute"`` compares each singular value against ``value``
    directly; ``mode="relative"`` uses ``value * sigma_max`` of the matrix
    being denoised.
    """

    mode: str = "relative"
    value: float = 0.05

    def __post_init__(self):
        if self.mode not in ("absolute", "relative"):
            raise ParameterError(f"truncation mode must be 'absolute' or 'relative', got {self.mode!r}")
        if not np.isfinite(self.value) or self.value < 0:
            raise ParameterError(f"truncation value must be finite and >= 0, got {self.value}")
        if self.mode == "relative" and self.value > 1:
            raise ParameterError(f"relative truncation value must be <= 1, got {self.value}")

    def threshold(self, sigma: np.ndarray) -> np.ndarray:
        """Effective absolute threshold for each matrix (``sigma`` is ``[..., r]``)."""
        if self.mode == "absolute":
            return np.full(sigma.shape[:-1], float(self.value))
        return self.value * sigma[..., 0]


def _jacobi_columns(a: np.ndarray, tol: float, max_sweeps: int):
    """Orthogonalise the columns of each ``[B, m, n]`` slice (``m >= n``).

    Returns ``(b, j)`` with ``a @ j == b``, ``j`` orthogonal and the columns
    of ``b`` mutually orthogonal.
    """
    batch, _, n = a.shape
    b = np.array(a, copy=True)
    j = np.broadcast_to(np.eye(n), (batch, n, n)).copy()
    if n == 1:
        return b, j
    # columns this small relative to the matrix are numerically zero
    scale = np.sqrt((b * b).sum(axis=(1, 2)))
    floor = (np.finfo(float).eps * scale) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                bp, bq = b[:, :, p], b[:, :, q]
                alpha = (bp * bp).sum(axis=1)
                beta = (bq * bq).sum(axis=1)
                gamma = (bp * bq).sum(axis=1)
                live = (alpha > floor) & (beta > floor)
                active = live & (np.abs(gamma) > tol * np.sqrt(alpha * beta))
                if not active.any():
                    continue
                rotated = True
                g = np.where(active, gamma, 1.0)
                zeta = (beta - alpha) / (2.0 * g)
                t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                t = np.where(zeta == 0, 1.0, t)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                c = np.where(active, c, 1.0)[:, None]
                s = np.where(active, s, 0.0)[:, None]
                b[:, :, p], b[:, :, q] = c * bp - s * bq, s * bp + c * bq
                jp, jq = j[:, :, p].copy(), j[:, :, q]
                j[:, :, p], j[:, :, q] = c * jp - s * jq, s * jp + c * jq
        if not rotated:
            return b, j
    raise ConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")


def _complete_basis(q: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace columns of ``q`` where ``keep`` is False by an orthonormal completion."""
    m, r = q.shape
    out = q.copy()
    basis = [out[:, i] for i in range(r) if keep[i]]
    candidates = iter(np.eye(m))
    for i in range(r):
        if keep[i]:
            continue
        for e in candidates:
            v = e.copy()
            for _ in range(2):  # twice is enough for Gram-Schmidt stability
                for u in basis:
                    v -= (u @ v) * u
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                out[:, i] = v / norm
                basis.append(out[:, i])
                break
    return out


def svd_batch(x: np.ndarray, tol: float = SVD_TOL, max_sweeps: int = MAX_SWEEPS) -> SvdFactors:
    """Thin SVD of every matrix in a ``[B, M, L]`` stack."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DataError(f"svd_batch expects a [B, M, L] array, got shape {x.shape}")
    if x.shape[1] < 1 or x.shape[2] < 1:
        raise DataError(f"matrix extents must be >= 1, got {x.shape[1:]}")
    if not np.isfinite(x).all():
        raise DataError("SVD input contains NaN or Inf")

    wide = x.shape[1] <= x.shape[2]
    a = np.swapaxes(x, 1, 2) if wide else x  # tall: [B, m, n], m >= n
    b, j = _jacobi_columns(a, tol, max_sweeps)
    sigma = np.sqrt((b * b).sum(axis=1))
    order = np.argsort(-sigma, axis=1, kind="stable")
    sigma = np.take_along_axis(sigma, order, axis=1)
    b = np.take_along_axis(b, order[:, None, :], axis=2)
    j = np.take_along_axis(j, order[:, None, :], axis=2)

    smax = sigma[:, :1]
    keep = sigma > np.maximum(smax, np.finfo(float).tiny) * np.finfo(float).eps * max(a.shape[1:])
    sigma = np.where(keep, sigma, 0.0)
    safe = np.where(keep, sigma, 1.0)[:, None, :]
    left = b / safe
    for i in range(left.shape[0]):
        if not keep[i].all():
            left[i] = _complete_basis(left[i], keep[i])

    # a = left diag(sigma) j^T; for wide inputs x = a^T = j diag(sigma) left^T
    if wide:
        return SvdFactors(U=j, sigma=sigma, V=left)
    return SvdFactors(U=left, sigma=sigma, V=j)


def svd(x: np.ndarray, tol: float = SVD_TOL, max_sweeps: int = MAX_SWEEPS) -> SvdFactors:
    """Thin SVD of a single ``M x L`` matrix; ``r = min(M, L)`` components."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"svd expects a matrix, got shape {x.shape}")
    f = svd_batch(x[None], tol, max_sweeps)
    return SvdFactors(U=f.U[0], sigma=f.sigma[0], V=f.V[0])


def truncate(sigma: np.ndarray, policy: TruncationPolicy) -> np.ndarray:
    """Zero every singular value strictly below the policy threshold."""
    c = policy.threshold(sigma)
    return np.where(sigma < c[..., None], 0.0, sigma)


def tsvdr_denoise(x: np.ndarray, policy: TruncationPolicy | None = None) -> np.ndarray:
    """Rebuild ``x`` from its singular triplets with ``sigma >= c``.

    Accepts a single ``M x L`` matrix or a ``[B, M, L]`` stack (each matrix
    uses its own threshold in relative mode).
    """
    policy = policy or TruncationPolicy()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return tsvdr_denoise(x[None], policy)[0]
    f = svd_batch(x)
    return f.reconstruct(truncate(f.sigma, policy))


@dataclass(frozen=True)
class DenoiseReport:
    kept_rank: int
    retained_energy: float
    frobenius_error: float
    threshold: float


def denoise_with_report(x: np.ndarray, policy: TruncationPolicy | None = None):
    """Denoise a single matrix and summarise what was discarded."""
    policy = policy or TruncationPolicy()
    f = svd(x)
    kept = truncate(f.sigma, policy)
    out = f.reconstruct(kept)
    total = float((f.sigma ** 2).sum())
    report = DenoiseReport(
        kept_rank=int((kept > 0).sum()),
        retained_energy=float((kept ** 2).sum()) / total if total > 0 else 1.0,
        frobenius_error=float(np.linalg.norm(np.asarray(x) - out)),
        threshold=float(policy.threshold(f.sigma[None])[0]),
    )
    return out, report

"""Nested orthonormal basis (q1, qw, qz, qr) and the map to canonical form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError
from .model import CanonicalData, Dataset, _design

__all__ = ["OrthoBasis", "build_basis", "to_canonical", "canonical_mu"]

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class OrthoBasis:
    q1: np.ndarray
    qw: np.ndarray
    qz: np.ndarray
    qr: np.ndarray

    @property
    def n(self) -> int:
        return self.q1.size

    @property
    def ell(self) -> int:
        return self.qz.shape[1]

    @property
    def s(self) -> int:
        return self.qr.shape[1]

    def matrix(self) -> np.ndarray:
        """The assembled n x n orthogonal matrix (q1, qw, qz, qr)."""
        return np.column_stack([self.q1, self.qw, self.qz, self.qr])


def _orthonormalize_block(block: np.ndarray, prev: np.ndarray, label: str) -> np.ndarray:
    """Orthonormal basis of ``block`` residualized on the orthonormal columns ``prev``.

    Rank is decided by the pivots of a column-pivoted Householder QR, relative
    to the largest column norm of the block before residualizing.
    """
    if block.shape[1] == 0:
        return block.copy()
    scale = np.max(np.linalg.norm(block, axis=0))
    if scale == 0:
        raise ConfigurationError(f"{label} is identically zero")
    resid = block - prev @ (prev.T @ block)
    # second pass keeps the residual orthogonal to working precision
    resid -= prev @ (prev.T @ resid)
    q, r, _ = scipy.linalg.qr(resid, mode="economic", pivoting=True)
    pivots = np.abs(np.diag(r))
    if pivots.size < block.shape[1] or pivots[-1] <= RANK_RTOL * scale:
        raise ConfigurationError(f"{label} is rank deficient")
    q -= prev @ (prev.T @ q)
    q, _ = np.linalg.qr(q)
    return q


def build_basis(z, w=None) -> OrthoBasis:
    """Build (q1, qw, qz, qr) with span(q1) = span(1), span(q1, qw) = span(1, w)
    and span(q1, qw, qz) = span(1, w, z); ``qr`` completes the basis of R^n.

    Raises
    ------
    ConfigurationError
        If (1, w, z) is rank deficient or has too many columns for ``n``;
        the message names the offending block.
    """
    z, w = _design(z, w)
    n, ell = z.shape
    k = w.shape[1]
    if ell < 1:
        raise ConfigurationError("need at least one instrument")
    if 1 + k + ell > n - 1:
        raise ConfigurationError(f"1 + k + ell = {1 + k + ell} exceeds n - 1 = {n - 1}")
    q1 = np.full(n, 1.0 / np.sqrt(n))
    qw = _orthonormalize_block(w, q1[:, None], "w (collinear with the intercept)")
    head = np.column_stack([q1, qw])
    qz = _orthonormalize_block(z, head, "z (collinear with (1, w))")
    head = np.column_stack([head, qz])
    full, _ = scipy.linalg.qr(head, mode="full")
    qr = full[:, head.shape[1]:]
    # re-orthogonalize the completion against the head for a clean Gram matrix
    qr -= head @ (head.T @ qr)
    qr, _ = np.linalg.qr(qr)
    return OrthoBasis(q1=q1, qw=qw, qz=qz, qr=qr)


def to_canonical(d: Dataset, b: OrthoBasis) -> CanonicalData:
    if d.n != b.n:
        raise ConfigurationError(f"dataset has n={d.n}, basis has n={b.n}")
    return CanonicalData(
        x_z=b.qz.T @ d.x, x_r=b.qr.T @ d.x, y_z=b.qz.T @ d.y, y_r=b.qr.T @ d.y
    )


def canonical_mu(pi, z, b: OrthoBasis) -> np.ndarray:
    """Canonical first-stage mean mu = qz' z pi."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    return b.qz.T @ (z @ np.asarray(pi, dtype=float))

"""Closed-form eigen decomposition of symmetric 3x3 matrices.

Eigenvalues come from the trigonometric solution of the characteristic
cubic. Eigenvectors are built degeneracy-safely: the vector of the most
isolated extreme eigenvalue is taken from cross products of shifted columns
(well conditioned exactly when the eigenvalue is isolated), and the
remaining pair is solved exactly as a 2x2 eigenproblem restricted to the
orthogonal complement. Deterministic ascending eigenvalue order, matching
the ``numpy.linalg.eigh`` return layout.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["eigh3"]


def _isolated_eigvec(m: np.ndarray) -> np.ndarray | None:
    """Unit null vector of ``m`` (rank 2) via the largest column cross
    product, or None when every product is too small to trust."""
    c0 = np.cross(m[:, 0], m[:, 1])
    c1 = np.cross(m[:, 0], m[:, 2])
    c2 = np.cross(m[:, 1], m[:, 2])
    norms = (float(c0 @ c0), float(c1 @ c1), float(c2 @ c2))
    best = int(np.argmax(norms))
    scale = float(np.max(np.abs(m))) or 1.0
    if norms[best] < (1e-14 * scale * scale) ** 2:
        return None
    return (c0, c1, c2)[best] / math.sqrt(norms[best])


def _complement_basis(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = int(np.argmin(np.abs(v)))
    u1 = np.cross(np.eye(3)[k], v)
    u1 /= np.linalg.norm(u1)
    u2 = np.cross(v, u1)
    return u1, u2


def eigh3(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of a symmetric 3x3 matrix.

    Returns ``(w, v)`` with ``v[:, i]`` the unit eigenvector for ``w[i]``.
    """
    a = np.asarray(a, dtype=float)
    a = 0.5 * (a + a.T)

    off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    if off == 0.0:
        diag = np.diag(a).copy()
        order = np.argsort(diag, kind="stable")
        return diag[order], np.eye(3)[:, order]

    q = np.trace(a) / 3.0
    p2 = np.sum((np.diag(a) - q) ** 2) + 2.0 * off
    p = math.sqrt(p2 / 6.0)
    b = (a - q * np.eye(3)) / p
    r = min(1.0, max(-1.0, np.linalg.det(b) / 2.0))
    phi = math.acos(r) / 3.0

    w_hi = q + 2.0 * p * math.cos(phi)
    w_lo = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    w_mid = 3.0 * q - w_hi - w_lo

    # anchor on the better-isolated extreme eigenvalue
    anchor = w_lo if (w_mid - w_lo) >= (w_hi - w_mid) else w_hi
    v_a = _isolated_eigvec(a - anchor * np.eye(3))
    if v_a is None:
        # spectrum numerically spherical: any orthonormal basis diagonalizes
        v = np.eye(3)
        w = np.array([float(v[:, i] @ a @ v[:, i]) for i in range(3)])
        order = np.argsort(w, kind="stable")
        return w[order], v[:, order]

    u1, u2 = _complement_basis(v_a)
    # restriction of a to span{u1, u2}
    au1, au2 = a @ u1, a @ u2
    b00, b01, b11 = float(u1 @ au1), float(u1 @ au2), float(u2 @ au2)
    half_theta = 0.5 * math.atan2(2.0 * b01, b00 - b11)
    c, s = math.cos(half_theta), math.sin(half_theta)
    p1 = c * u1 + s * u2
    p2v = -s * u1 + c * u2

    vecs = [v_a, p1, p2v]
    w = np.array([float(vv @ a @ vv) for vv in vecs])
    order = np.argsort(w, kind="stable")
    v = np.column_stack([vecs[i] for i in order])
    return w[order], v

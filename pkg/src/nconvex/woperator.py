"""Assembly and calculus of the Hessian lift W.

W acts on the space of m-vectors: its rows and columns are labelled by the
strictly increasing multi-indexes of length m in dictionary order, its
diagonal entries are partial traces of the Hessian, and its off-diagonal
entries are signed single Hessian entries wherever two multi-indexes differ
in exactly one element.  The eigenvalues of W are the m-subset sums of the
Hessian eigenvalues, so det(W) is the product of those sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from nconvex.cone import Convexity, m_convexity

__all__ = [
    "MAX_LIFT_DIM",
    "MultiIndex",
    "WMatrix",
    "multi_indices",
    "assemble_w",
    "det_w",
    "linearization",
    "concavity_probe",
]

# Largest supported lifted dimension C(n, m); covers all n <= 6 algebra.
MAX_LIFT_DIM = 20


@dataclass(frozen=True)
class MultiIndex:
    """Strictly increasing one-based index tuple with its dictionary rank."""

    indices: tuple
    order: int

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError(f"indices {self.indices} are not strictly increasing")


@lru_cache(maxsize=None)
def multi_indices(n: int, m: int):
    """All admissible multi-indexes of length m in dictionary order."""
    if not 1 <= m <= n:
        raise ValueError(f"subset size m={m} out of range 1..{n}")
    combos = list(combinations(range(1, n + 1), m))
    return tuple(MultiIndex(indices=c, order=r + 1) for r, c in enumerate(combos))


@lru_cache(maxsize=None)
def _descriptors(n: int, m: int):
    """Linear structure of the assembly map (row, col, i, j, sign) over W entries.

    Diagonal entries list one descriptor per element of the multi-index
    (sign +1, Hessian entry (i,i)); an off-diagonal entry exists only when
    the two index sets differ in exactly one element, with sign
    (-1)**|pos_a - pos_b| for the positions of the differing elements inside
    each sorted tuple.  Returns a flat tuple usable for both values and
    derivatives.
    """
    labels = multi_indices(n, m)
    p = len(labels)
    if p > MAX_LIFT_DIM:
        raise ValueError(
            f"lifted dimension C({n},{m})={p} exceeds supported maximum {MAX_LIFT_DIM}"
        )
    out = []
    sets = [frozenset(lbl.indices) for lbl in labels]
    for a in range(p):
        for i in labels[a].indices:
            out.append((a, a, i - 1, i - 1, 1.0))
    for a in range(p):
        for b in range(p):
            if a == b:
                continue
            diff_a = sets[a] - sets[b]
            if len(diff_a) != 1:
                continue
            ai = next(iter(diff_a))
            bj = next(iter(sets[b] - sets[a]))
            pos_a = labels[a].indices.index(ai)
            pos_b = labels[b].indices.index(bj)
            sign = -1.0 if (pos_a - pos_b) % 2 else 1.0
            out.append((a, b, ai - 1, bj - 1, sign))
    return tuple(out)


def _check_hessian(hess) -> np.ndarray:
    arr = np.asarray(hess, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"Hessian must be square, got shape {arr.shape}")
    scale = max(1.0, float(np.max(np.abs(arr))))
    if np.max(np.abs(arr - arr.T)) > 1.0e-10 * scale:
        raise ValueError("Hessian must be symmetric")
    return 0.5 * (arr + arr.T)


@dataclass(frozen=True)
class WMatrix:
    """Assembled lift with its multi-index row/column labels."""

    matrix: np.ndarray
    labels: tuple

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])


def assemble_w(hess, m: int) -> WMatrix:
    """Assemble the lift of a symmetric Hessian for subset size m."""
    arr = _check_hessian(hess)
    n = arr.shape[0]
    labels = multi_indices(n, m)
    p = len(labels)
    w = np.zeros((p, p))
    for a, b, i, j, s in _descriptors(n, m):
        w[a, b] += s * arr[i, j]
    return WMatrix(matrix=w, labels=labels)


def det_w(hess, m: int) -> float:
    """det of the assembled lift (product of m-subset eigenvalue sums)."""
    return float(np.linalg.det(assemble_w(hess, m).matrix))


def _adjugate(mat: np.ndarray) -> np.ndarray:
    """Adjugate by cofactor minors; exact at any rank, fine for p <= 20."""
    p = mat.shape[0]
    if p == 1:
        return np.ones((1, 1))
    cof = np.empty((p, p))
    for i in range(p):
        rows = np.delete(np.arange(p), i)
        sub = mat[rows]
        for j in range(p):
            minor = np.delete(sub, j, axis=1)
            cof[i, j] = ((-1.0) ** (i + j)) * np.linalg.det(minor)
    return cof.T


def linearization(hess, m: int) -> np.ndarray:
    """Gradient of det(W) with respect to the Hessian entries.

    Computed by contracting the adjugate of W with the assembly map: smooth
    in the Hessian entries and valid for repeated eigenvalues, unlike an
    eigenbasis evaluation.  The result G is symmetric and satisfies
    d det(W(H + tE)) / dt = sum_ij G_ij E_ij for symmetric E.
    """
    arr = _check_hessian(hess)
    n = arr.shape[0]
    w = assemble_w(arr, m).matrix
    cof = _adjugate(w).T  # cofactor matrix: d det / d W_ab
    grad = np.zeros((n, n))
    for a, b, i, j, s in _descriptors(n, m):
        grad[i, j] += s * cof[a, b]
    return 0.5 * (grad + grad.T)  # exactly symmetric; kills last-bit skew


def concavity_probe(hess_a, hess_b, m: int) -> float:
    """Midpoint concavity gap of det(W)^(1/p) between two admissible Hessians.

    Returns det(W((A+B)/2))^(1/p) - (det(W(A))^(1/p) + det(W(B))^(1/p)) / 2,
    p the lifted dimension; nonnegative because W is linear in the Hessian
    and det^(1/p) is concave on positive definite matrices.  For m = n-1
    the exponent is 1/n.
    """
    a = _check_hessian(hess_a)
    b = _check_hessian(hess_b)
    if a.shape != b.shape:
        raise ValueError("Hessians must share a dimension")
    for name, h in (("first", a), ("second", b)):
        mu = np.linalg.eigvalsh(h)
        if m_convexity(mu, m) is not Convexity.STRICT:
            raise ValueError(f"{name} Hessian is not strictly {m}-convex")
    p = math.comb(a.shape[0], m)
    root = 1.0 / p
    mid = det_w(0.5 * (a + b), m) ** root
    return mid - 0.5 * (det_w(a, m) ** root + det_w(b, m) ** root)


# ---------------------------------------------------------------------------
# Batched evaluation over many Hessians at once (grid hot paths).


def batch_assemble_w(hessians: np.ndarray, m: int) -> np.ndarray:
    """Assemble lifts for a (N, n, n) stack of symmetric Hessians."""
    n = hessians.shape[-1]
    des = _descriptors(n, m)
    p = len(multi_indices(n, m))
    w = np.zeros(hessians.shape[:-2] + (p, p))
    for a, b, i, j, s in des:
        w[..., a, b] += s * hessians[..., i, j]
    return w


def batch_det_w(hessians: np.ndarray, m: int) -> np.ndarray:
    return np.linalg.det(batch_assemble_w(hessians, m))


def batch_min_lift_eig(hessians: np.ndarray, m: int) -> np.ndarray:
    """Smallest lifted eigenvalue per Hessian (the ellipticity quantity)."""
    w = batch_assemble_w(hessians, m)
    return np.linalg.eigvalsh(w)[..., 0]


def batch_linearization(hessians: np.ndarray, m: int) -> np.ndarray:
    """Gradients of det(W) for a stack of Hessians with invertible lifts.

    Uses adj(W) = det(W) * inv(W), so the stack must stay away from
    singular lifts; solver states guarded by a positive ellipticity margin
    always qualify.
    """
    des = _descriptors(hessians.shape[-1], m)
    w = batch_assemble_w(hessians, m)
    det = np.linalg.det(w)
    cof = det[..., None, None] * np.linalg.inv(w)  # symmetric lift: adj == cof
    grad = np.zeros_like(hessians)
    for a, b, i, j, s in des:
        grad[..., i, j] += s * cof[..., a, b]
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))

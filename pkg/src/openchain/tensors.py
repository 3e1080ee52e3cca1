"""Dense tensor primitives: pairwise contraction and truncated SVD.

Tensors are plain numpy arrays in C (row-major) order; the shape tuple is the
list of extents and ``ravel()`` is the documented linearization. Everything
downstream (gate application, canonical-form maintenance, entropies) is built
on the two operations in this module.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ContractionError",
    "SvdConvergenceError",
    "SvdResult",
    "contract",
    "truncated_svd",
]

# Singular values below DEFAULT_CUTOFF * s_max are dropped even when the
# bond-dimension cap would allow them; keeps numerical-noise bonds out.
DEFAULT_CUTOFF = 1e-12


class ContractionError(ValueError):
    """Axis extents of a contraction pair do not match."""

    def __init__(self, axis_a, axis_b, dim_a, dim_b):
        self.axis_pair = (axis_a, axis_b)
        super().__init__(
            f"cannot contract axis {axis_a} (extent {dim_a}) with "
            f"axis {axis_b} (extent {dim_b})"
        )


class SvdConvergenceError(RuntimeError):
    """LAPACK failed to converge; carries the matrix dims."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        super().__init__(f"SVD did not converge for matrix of shape {self.shape}")


def contract(a, b, pairs):
    """Contract tensors ``a`` and ``b`` over the given (axis_of_a, axis_of_b) pairs.

    Result axes are the unpaired axes of ``a`` followed by the unpaired axes
    of ``b``, in their original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = [p[0] for p in pairs]
    axes_b = [p[1] for p in pairs]
    for ax_a, ax_b in pairs:
        if a.shape[ax_a] != b.shape[ax_b]:
            raise ContractionError(ax_a, ax_b, a.shape[ax_a], b.shape[ax_b])
    return np.tensordot(a, b, axes=(axes_a, axes_b))


@dataclass
class SvdResult:
    left: np.ndarray            # orthonormal columns
    singular_values: np.ndarray  # descending, >= 0
    right: np.ndarray           # orthonormal rows
    truncation_weight: float    # sqrt of the summed squares of dropped values


def truncated_svd(m, chi_max, cutoff=DEFAULT_CUTOFF):
    """SVD of a matrix keeping at most ``chi_max`` values above ``cutoff * s_max``.

    At least one value is always kept. ``truncation_weight`` equals the
    Frobenius norm of the discarded part of the matrix.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"truncated_svd expects a matrix, got ndim={m.ndim}")
    if m.size == 0:
        raise ValueError(f"truncated_svd on empty matrix of shape {m.shape}")
    if chi_max < 1:
        raise ValueError(f"chi_max must be >= 1, got {chi_max}")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(m.shape) from exc
    keep = _keep_count(s, chi_max, cutoff)
    weight = float(np.sqrt(np.sum(s[keep:] ** 2)))
    return SvdResult(
        left=np.ascontiguousarray(u[:, :keep]),
        singular_values=s[:keep].copy(),
        right=np.ascontiguousarray(vh[:keep, :]),
        truncation_weight=weight,
    )


def _keep_count(s, chi_max, cutoff):
    """Number of singular values retained by the cap-and-relative-cutoff rule."""
    if s[0] <= 0.0:
        return 1
    keep = int(np.searchsorted(-s, -cutoff * s[0], side="right"))
    return max(1, min(keep, chi_max, len(s)))

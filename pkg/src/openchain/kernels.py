"""Hot numeric kernels for gate sweeps on matrix-product chains.

The two-site bond update (theta assembly, gate contraction, SVD re-split,
guarded lambda division) dominates runtime for every engine, so it lives here
in a single njit-compatible implementation. When numba is importable and the
environment variable ``OPENCHAIN_JIT`` is not set to ``0``/``false``/``no``,
the jitted build is used; otherwise the exact same Python/numpy source runs
uncompiled. ``benchmarks/bench_kernels.py`` compares the two lanes.

Sweep conventions (shared by the pure-state and density-operator engines):
a normal sweep applies all odd bonds then all even bonds left-to-right
(bonds counted from 1), a transposed sweep reverses both orderings, so the
transposed sweep is the exact reverse-ordered product of the normal one.
"""

import os

import numpy as np

__all__ = [
    "JIT_ENABLED",
    "LAMBDA_FLOOR",
    "backend_name",
    "bond_update",
    "bond_update_nogate",
    "sweep_chain",
    "canonicalize_chain",
    "schmidt_entropy",
]

# Entries of a Schmidt vector at or below this floor are never divided by;
# the corresponding rows/columns are zeroed instead.
LAMBDA_FLOOR = 1e-10

_env = os.environ.get("OPENCHAIN_JIT", "1").strip().lower()
JIT_ENABLED = _env not in ("0", "false", "no", "off")
if JIT_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dependency
        JIT_ENABLED = False


def backend_name():
    return "numba" if JIT_ENABLED else "numpy"


def _split_theta(theta, dl, d, dr, lam_l, lam_r, chi_max, cutoff):
    """SVD re-split of a two-site theta, truncating and rebuilding the gammas.

    theta is (dl*d, d*dr). Returns (gam_l, lam_new, gam_r, kept_norm,
    trunc_weight); the new lambda is normalized and the boundary lambdas are
    divided out of the returned gammas with a floor guard.
    """
    u, s, vh = np.linalg.svd(theta, full_matrices=False)
    smax = s[0]
    keep = 1
    if smax > 0.0:
        limit = min(chi_max, s.shape[0])
        keep = 0
        for k in range(limit):
            if s[k] >= cutoff * smax:
                keep = k + 1
            else:
                break
        if keep < 1:
            keep = 1
    w2 = 0.0
    for k in range(keep, s.shape[0]):
        w2 += s[k] * s[k]
    kept2 = 0.0
    for k in range(keep):
        kept2 += s[k] * s[k]
    kept = np.sqrt(kept2)
    if kept > 0.0:
        lam_new = s[:keep] / kept
    else:
        lam_new = s[:keep].copy()

    inv_l = np.zeros(dl, dtype=np.float64)
    for a in range(dl):
        if lam_l[a] > LAMBDA_FLOOR:
            inv_l[a] = 1.0 / lam_l[a]
    inv_r = np.zeros(dr, dtype=np.float64)
    for b in range(dr):
        if lam_r[b] > LAMBDA_FLOOR:
            inv_r[b] = 1.0 / lam_r[b]

    gam_l = np.ascontiguousarray(u[:, :keep]).reshape(dl, d, keep)
    gam_l = gam_l * inv_l.reshape(dl, 1, 1)
    gam_r = np.ascontiguousarray(vh[:keep, :]).reshape(keep, d, dr)
    gam_r = gam_r * inv_r.reshape(1, 1, dr)
    return gam_l, lam_new, gam_r, kept, np.sqrt(w2)


def _assemble_theta(lam_l, gam_l, lam_c, gam_r, lam_r):
    """lam_l . gam_l . lam_c . gam_r . lam_r as a (dl*d, d*dr) matrix."""
    dl, d, dc = gam_l.shape
    dr = gam_r.shape[2]
    t1 = gam_l * lam_l.reshape(dl, 1, 1)
    t1 = t1 * lam_c.reshape(1, 1, dc)
    t2 = gam_r * lam_r.reshape(1, 1, dr)
    m1 = np.ascontiguousarray(t1).reshape(dl * d, dc)
    m2 = np.ascontiguousarray(t2).reshape(dc, d * dr)
    return m1 @ m2


def _bond_update_impl(lam_l, gam_l, lam_c, gam_r, lam_r, gate, chi_max, cutoff):
    dl, d, _ = gam_l.shape
    dr = gam_r.shape[2]
    theta = _assemble_theta(lam_l, gam_l, lam_c, gam_r, lam_r)
    # contract the gate over both physical indices: (d*d, d*d) x (d*d, dl*dr)
    th = theta.reshape(dl, d, d, dr)
    th = np.ascontiguousarray(th.transpose(1, 2, 0, 3)).reshape(d * d, dl * dr)
    th = gate @ th
    th = th.reshape(d, d, dl, dr)
    theta = np.ascontiguousarray(th.transpose(2, 0, 1, 3)).reshape(dl * d, d * dr)
    return _split_theta(theta, dl, d, dr, lam_l, lam_r, chi_max, cutoff)


def _bond_update_nogate_impl(lam_l, gam_l, lam_c, gam_r, lam_r, chi_max, cutoff):
    dl, d, _ = gam_l.shape
    dr = gam_r.shape[2]
    theta = _assemble_theta(lam_l, gam_l, lam_c, gam_r, lam_r)
    return _split_theta(theta, dl, d, dr, lam_l, lam_r, chi_max, cutoff)


if JIT_ENABLED:
    _split_theta = njit(cache=True)(_split_theta)
    _assemble_theta = njit(cache=True)(_assemble_theta)
    bond_update = njit(cache=True)(_bond_update_impl)
    bond_update_nogate = njit(cache=True)(_bond_update_nogate_impl)
else:
    bond_update = _bond_update_impl
    bond_update_nogate = _bond_update_nogate_impl

_ONE = np.ones(1, dtype=np.float64)


def _boundary(lambdas, bond, n_bonds):
    lam_l = lambdas[bond - 1] if bond > 0 else _ONE
    lam_r = lambdas[bond + 1] if bond < n_bonds - 1 else _ONE
    return lam_l, lam_r


def apply_bond_gate(tensors, lambdas, gate, bond, chi_max, cutoff):
    """Apply a two-site gate at ``bond`` in place; returns (log_norm, trunc_weight).

    ``gate`` may be None (identity, used for canonical-form restores). The
    kept norm of the updated bond is divided out of the chain and returned as
    a log so callers can track either discarded norm (trajectories) or the
    overall scale (density operators).
    """
    n_bonds = len(lambdas)
    lam_l, lam_r = _boundary(lambdas, bond, n_bonds)
    if gate is None:
        gl, lam, gr, kept, tw = bond_update_nogate(
            lam_l, tensors[bond], lambdas[bond], tensors[bond + 1], lam_r,
            chi_max, cutoff)
    else:
        dtype = tensors[bond].dtype
        if gate.dtype != dtype:
            if dtype == np.complex128:
                gate = np.ascontiguousarray(gate, dtype=np.complex128)
            else:
                raise TypeError("complex gate applied to a real-valued chain; "
                                "gate flavor does not match the state")
        gl, lam, gr, kept, tw = bond_update(
            lam_l, tensors[bond], lambdas[bond], tensors[bond + 1], lam_r,
            gate, chi_max, cutoff)
    tensors[bond] = gl
    tensors[bond + 1] = gr
    lambdas[bond] = lam
    if kept <= 0.0:
        raise FloatingPointError(f"vanishing norm in bond update at bond {bond}")
    return float(np.log(kept)), float(tw)


def sweep_bond_order(n_bonds, transposed):
    """Bond visit order for one sweep (odd bonds then even, 1-indexed)."""
    odd = list(range(0, n_bonds, 2))
    even = list(range(1, n_bonds, 2))
    if transposed:
        return even[::-1] + odd[::-1]
    return odd + even


def sweep_chain(tensors, lambdas, gates, chi_max, cutoff, transposed=False):
    """One gate sweep over the whole chain; returns (log_norm, max_trunc_weight).

    ``gates`` is a per-bond list (entries may repeat the same matrix).
    """
    log_norm = 0.0
    max_tw = 0.0
    for bond in sweep_bond_order(len(lambdas), transposed):
        ln, tw = apply_bond_gate(tensors, lambdas, gates[bond], bond, chi_max, cutoff)
        log_norm += ln
        if tw > max_tw:
            max_tw = tw
    return log_norm, max_tw


def canonicalize_chain(tensors, lambdas, chi_max, cutoff, start_bond=0):
    """Restore Vidal canonical form with a double identity sweep.

    A left-to-right pass (starting at ``start_bond``, for locality after a
    single-site modification) left-orthonormalizes; the full right-to-left
    pass then produces true Schmidt vectors at every bond. Exact up to the
    requested truncation. Returns the accumulated log-norm.
    """
    n_bonds = len(lambdas)
    log_norm = 0.0
    for bond in range(start_bond, n_bonds):
        ln, _ = apply_bond_gate(tensors, lambdas, None, bond, chi_max, cutoff)
        log_norm += ln
    for bond in range(n_bonds - 1, -1, -1):
        ln, _ = apply_bond_gate(tensors, lambdas, None, bond, chi_max, cutoff)
        log_norm += ln
    return log_norm


def schmidt_entropy(lam):
    """Von Neumann entropy in bits of a normalized Schmidt vector."""
    p = np.asarray(lam, dtype=np.float64) ** 2
    p = p[p > 0.0]
    if p.size == 0:
        return 0.0
    return float(-np.sum(p * np.log2(p)))

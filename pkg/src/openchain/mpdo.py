"""Matrix-product density operator engine.

The vectorized density matrix is stored in Vidal form with physical dimension
4 (the operator-basis index). In the pauli flavor all tensors are real
float64. The represented operator is exp(log_scale) times the network, so
lambda renormalization never loses the physical trace; the trace itself is
pinned back to one after every Trotter step.

Finite chains use gate sweeps over all bonds; the translation-invariant
infinite chain keeps a two-site unit cell with tensors (A, B) and bonds
lambdas[0] = (A,B) inside the cell, lambdas[1] = (B,A) between cells, and is
periodically re-orthogonalized from the transfer-operator fixed points.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .models import ModelParams, OperatorBasis, SZ, build_super_gates, \
    linearized_basis, pauli_basis
from .tensors import truncated_svd

__all__ = [
    "MpdoState", "DegenerateTransferError",
    "product_mpdo", "neel_mpdo", "mpdo_from_dense",
    "apply_super_gate", "canonicalize", "operator_entanglement", "entropies",
    "trace", "local_expectation", "all_sz", "renormalize_trace",
    "TROTTER4_SEQUENCE", "build_trotter4_gates", "trotter4_step",
    "itebd_trotter4_step", "reorthogonalize", "itebd_sz", "itebd_renormalize",
    "save_checkpoint", "load_checkpoint",
]


class DegenerateTransferError(RuntimeError):
    """Transfer-operator fixed point did not separate; try a smaller dt."""


@dataclass
class MpdoState:
    tensors: list = field(repr=False)   # rank-3 (chi_l, 4, chi_r)
    lambdas: list = field(repr=False)
    basis: OperatorBasis = field(repr=False, default=None)
    log_scale: float = 0.0
    cell: str = "finite"                # "finite" | "infinite"

    @property
    def n_sites(self):
        return len(self.tensors)

    def bond_dims(self):
        return [len(l) for l in self.lambdas]

    def max_bond(self):
        return max(self.bond_dims(), default=1)

    def copy(self):
        return MpdoState(
            tensors=[t.copy() for t in self.tensors],
            lambdas=[l.copy() for l in self.lambdas],
            basis=self.basis, log_scale=self.log_scale, cell=self.cell)


def _coeffs(rho2, basis):
    """Expansion coefficients Tr(e_i^dag rho) of a single-site 2x2 operator."""
    c = np.array([np.trace(e.conj().T @ rho2) for e in basis.elements])
    if basis.flavor == "pauli":
        if np.max(np.abs(c.imag)) > 1e-12:
            raise ValueError("pauli coefficients of a non-Hermitian operator")
        return np.ascontiguousarray(c.real)
    return c


def product_mpdo(site_rhos, basis):
    """Bond-dimension-1 MPDO from a list of single-site density matrices."""
    tensors = [_coeffs(r, basis).reshape(1, 4, 1) for r in site_rhos]
    lambdas = [np.ones(1) for _ in range(len(tensors) - 1)]
    return MpdoState(tensors=tensors, lambdas=lambdas, basis=basis)


_UP = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
_DOWN = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)


def neel_mpdo(n, basis=None):
    """Neel product MPDO; n=None gives the infinite two-site unit cell."""
    basis = pauli_basis() if basis is None else basis
    if n is None:
        state = product_mpdo([_UP, _DOWN], basis)
        state.cell = "infinite"
        state.lambdas = [np.ones(1), np.ones(1)]
        return state
    if n < 2 or n % 2 != 0:
        raise ValueError(f"Neel state needs an even number of sites, got {n}")
    return product_mpdo([_UP if i % 2 == 0 else _DOWN for i in range(n)], basis)


def _dense_to_vidal(vec, d, n, chi, cutoff):
    """Split a dense (d^n,) coefficient vector into Vidal tensors/lambdas."""
    tensors, lambdas = [], []
    log_scale = 0.0
    rest = np.asarray(vec).reshape(1, -1)
    lam_prev = np.ones(1)
    for _ in range(n - 1):
        chi_prev = rest.shape[0]
        m = rest.reshape(chi_prev * d, -1)
        res = truncated_svd(m, chi, cutoff)
        w = float(np.linalg.norm(res.singular_values))
        lam = res.singular_values / w
        log_scale += np.log(w)
        gam = res.left.reshape(chi_prev, d, len(lam))
        inv = np.where(lam_prev > kernels.LAMBDA_FLOOR, 1.0 / lam_prev, 0.0)
        tensors.append(gam * inv[:, None, None])
        lambdas.append(lam)
        rest = lam[:, None] * res.right
        lam_prev = lam
    inv = np.where(lam_prev > kernels.LAMBDA_FLOOR, 1.0 / lam_prev, 0.0)
    tensors.append((rest * inv[:, None]).reshape(len(lam_prev), d, 1))
    return tensors, lambdas, log_scale


def mpdo_from_dense(rho, basis, chi=256, cutoff=1e-14):
    """Exact-to-truncation MPDO decomposition of a dense density matrix."""
    rho = np.asarray(rho, dtype=complex)
    n = int(round(np.log2(rho.shape[0])))
    if n > 8:
        raise ValueError(f"mpdo_from_dense capped at 8 sites, got {n}")
    # fuse (row bit, col bit) per site, then map onto the operator basis
    t = rho.reshape((2,) * (2 * n))
    perm = [x for k in range(n) for x in (k, n + k)]
    t = t.transpose(perm).reshape((4,) * n)
    dual = np.array([[e.conj()[r, c] for (r, c) in
                      ((0, 0), (0, 1), (1, 0), (1, 1))] for e in basis.elements])
    for axis in range(n):
        t = np.tensordot(dual, t, axes=(1, axis))
        t = np.moveaxis(t, 0, axis)
    coefs = t.reshape(-1)
    if basis.flavor == "pauli":
        if np.max(np.abs(coefs.imag)) > 1e-10:
            raise ValueError("pauli coefficients of a non-Hermitian operator")
        coefs = np.ascontiguousarray(coefs.real)
    tensors, lambdas, log_scale = _dense_to_vidal(coefs, 4, n, chi, cutoff)
    return MpdoState(tensors=tensors, lambdas=lambdas, basis=basis,
                     log_scale=log_scale)


def apply_super_gate(state: MpdoState, gate, bond, chi, cutoff):
    """Two-site superoperator gate at ``bond``; returns the truncation weight."""
    mat = gate.matrix if hasattr(gate, "matrix") else gate
    ln, tw = kernels.apply_bond_gate(state.tensors, state.lambdas, mat, bond,
                                     chi, cutoff)
    state.log_scale += ln
    return tw


def canonicalize(state: MpdoState, chi, cutoff):
    state.log_scale += kernels.canonicalize_chain(
        state.tensors, state.lambdas, chi, cutoff)


def operator_entanglement(state: MpdoState, bond):
    return kernels.schmidt_entropy(state.lambdas[bond])


def entropies(state: MpdoState):
    return np.array([kernels.schmidt_entropy(l) for l in state.lambdas])


def _trace_vector(basis):
    v = np.array([np.trace(e) for e in basis.elements])
    return v.real if basis.flavor == "pauli" else v


def _op_vector(op, basis):
    """Row vector w with Tr(op rho_site) = sum_i w_i r_i for coefficients r."""
    v = np.array([np.trace(np.asarray(op, dtype=complex) @ e)
                  for e in basis.elements])
    return v.real if basis.flavor == "pauli" else v


def _site_matrices(state, vec):
    """Contract each site tensor with a length-4 vector: list of (chi_l, chi_r)."""
    return [np.tensordot(vec, t, axes=(0, 1)) for t in state.tensors]


def trace(state: MpdoState):
    """Tr rho of a finite-chain MPDO (includes the tracked scale)."""
    mats = _site_matrices(state, _trace_vector(state.basis))
    acc = mats[0]
    for k in range(1, state.n_sites):
        acc = (acc * state.lambdas[k - 1][None, :]) @ mats[k]
    val = acc[0, 0]
    return float(np.real(val)) * float(np.exp(state.log_scale))


def local_expectation(state: MpdoState, op, site):
    """Tr(op_site rho) for a finite chain."""
    tvec = _trace_vector(state.basis)
    mats = _site_matrices(state, tvec)
    mats[site] = np.tensordot(_op_vector(op, state.basis), state.tensors[site],
                              axes=(0, 1))
    acc = mats[0]
    for k in range(1, state.n_sites):
        acc = (acc * state.lambdas[k - 1][None, :]) @ mats[k]
    return float(np.real(acc[0, 0])) * float(np.exp(state.log_scale))


def all_sz(state: MpdoState):
    """Tr(sz_i rho) for every site, via prefix/suffix contractions."""
    n = state.n_sites
    tmats = _site_matrices(state, _trace_vector(state.basis))
    wmats = _site_matrices(state, _op_vector(SZ, state.basis))
    prefix = [None] * n
    acc = np.ones((1, 1), dtype=tmats[0].dtype)
    for k in range(n):
        prefix[k] = acc
        step = tmats[k] if k == n - 1 else tmats[k] * state.lambdas[k][None, :]
        acc = acc @ step
    suffix = [None] * n
    acc = np.ones((1, 1), dtype=tmats[0].dtype)
    for k in range(n - 1, -1, -1):
        suffix[k] = acc
        step = tmats[k] if k == 0 else state.lambdas[k - 1][:, None] * tmats[k]
        acc = step @ acc
    scale = float(np.exp(state.log_scale))
    out = np.empty(n)
    for k in range(n):
        out[k] = np.real((prefix[k] @ wmats[k] @ suffix[k])[0, 0]) * scale
    return out


def renormalize_trace(state: MpdoState):
    """Shift log_scale so Tr rho = 1 exactly; returns the trace beforehand."""
    t = trace(state)
    if t <= 0.0:
        raise FloatingPointError(f"MPDO trace became non-positive: {t}")
    state.log_scale -= float(np.log(t))
    return t


# Fourth-order sweep sequence: (step multiple of dt/12, transposed flag).
TROTTER4_SEQUENCE = (
    (1, True), (1, False), (1, True), (-2, False), (1, True), (1, True),
    (1, True), (1, True), (1, False), (1, True), (1, False), (1, False),
    (1, False), (1, False), (-2, True), (1, False), (1, True), (1, False),
)


def build_trotter4_gates(p: ModelParams, basis, dt):
    """Per-bond gate tables for the two step sizes used by the sequence."""
    return {frac: [g.matrix for g in build_super_gates(p, basis, frac * dt / 12.0)]
            for frac in (1, -2)}


def trotter4_step(state: MpdoState, gates, chi, cutoff):
    """One step dt of the 18-sweep fourth-order decomposition (finite chain)."""
    max_tw = 0.0
    for frac, transposed in TROTTER4_SEQUENCE:
        table = gates[frac]
        bond_gates = table if len(table) == len(state.lambdas) else table * len(state.lambdas)
        ln, tw = kernels.sweep_chain(state.tensors, state.lambdas, bond_gates,
                                     chi, cutoff, transposed=transposed)
        state.log_scale += ln
        max_tw = max(max_tw, tw)
    return max_tw


# ----------------------------------------------------------------------------
# infinite chain (two-site unit cell)
# ----------------------------------------------------------------------------

def _itebd_bond(state: MpdoState, gate, bond, chi, cutoff):
    """Gate on cell bond 0 = (A,B) or 1 = (B,A); outer bond is the other lambda."""
    la, lb = state.lambdas[bond], state.lambdas[1 - bond]
    left, right = (0, 1) if bond == 0 else (1, 0)
    gl, lam, gr, kept, tw = kernels.bond_update(
        lb, state.tensors[left], la, state.tensors[right], lb, gate, chi, cutoff)
    state.tensors[left] = gl
    state.tensors[right] = gr
    state.lambdas[bond] = lam
    state.log_scale += float(np.log(kept))
    return tw


def itebd_trotter4_step(state: MpdoState, gates, chi, cutoff):
    """Fourth-order step on the unit cell; a sweep is (A,B) then (B,A)."""
    max_tw = 0.0
    for frac, transposed in TROTTER4_SEQUENCE:
        gate = gates[frac][0]
        order = (1, 0) if transposed else (0, 1)
        for bond in order:
            max_tw = max(max_tw, _itebd_bond(state, gate, bond, chi, cutoff))
    return max_tw


def _transfer_fixed_point(mats, tol, max_iter):
    """Dominant fixed point of X -> sum_s M_s X M_s^dag by power iteration."""
    chi = mats.shape[1]
    stacked = mats.reshape(-1, chi)              # (s*chi, chi)
    x = np.eye(chi, dtype=mats.dtype) / chi
    eta = 1.0
    for _ in range(max_iter):
        y = stacked @ x                          # (s*chi, chi)
        y = y.reshape(-1, chi, chi)
        y = np.einsum("sab,scb->ac", y, mats.conj())
        y = 0.5 * (y + y.conj().T)
        eta = float(np.trace(y).real)
        if eta <= 0.0:
            raise DegenerateTransferError("non-positive transfer fixed point")
        y = y / eta
        delta = float(np.max(np.abs(y - x)))
        x = y
        if delta < tol:
            return x, eta
    raise DegenerateTransferError(
        "transfer-operator power iteration did not converge "
        f"(last delta {delta:.2e}); the leading eigenvalue may be degenerate - "
        "try a smaller time step or re-orthogonalize more often")


def _herm_sqrt(v, floor=1e-14):
    """PSD square-root factor: v = f f^dag, dropping near-null directions."""
    w, u = np.linalg.eigh(0.5 * (v + v.conj().T))
    keep = w > floor * w[-1]
    return u[:, keep] * np.sqrt(w[keep])[None, :], u[:, keep], np.sqrt(w[keep])


def reorthogonalize(state: MpdoState, chi=None, cutoff=1e-14, tol=1e-10,
                    max_iter=4000):
    """Restore the canonical form of the infinite unit cell.

    Fuses the cell across the outer (B,A) bond, gauges that bond from the
    left/right transfer fixed points, then re-splits the inner bond with an
    SVD. Raises DegenerateTransferError if power iteration stalls.
    """
    if state.cell != "infinite":
        raise ValueError("reorthogonalize applies to infinite states")
    chi = max(state.max_bond(), 1) if chi is None else chi
    ga, gb = state.tensors
    lam_ab, lam_ba = state.lambdas
    cell = np.tensordot(ga * lam_ab[None, None, :], gb, axes=(2, 0))
    chi_ba = cell.shape[0]
    cell = cell.reshape(chi_ba, 16, chi_ba)

    right_mats = np.ascontiguousarray(
        (cell * lam_ba[None, None, :]).transpose(1, 0, 2))   # (s, chi, chi)
    v_r, eta_r = _transfer_fixed_point(right_mats, tol, max_iter)
    left_mats = np.ascontiguousarray(
        (cell * lam_ba[:, None, None]).transpose(1, 2, 0)).conj()
    v_l, eta_l = _transfer_fixed_point(left_mats, tol, max_iter)

    x_f, xu, xs = _herm_sqrt(v_r)                 # v_r = x x^dag
    y_f, yu, ys = _herm_sqrt(v_l)                 # v_l = y^dag y with y = (y_f)^dag
    y = y_f.conj().T
    u, s, vh = np.linalg.svd(y @ (lam_ba[:, None] * x_f))
    keep = max(1, min(int(np.sum(s >= cutoff * s[0])), chi)) if s[0] > 0 else 1
    u, s, vh = u[:, :keep], s[:keep], vh[:keep, :]
    lam_ba_new = s / float(np.linalg.norm(s))
    # gauge matrices: lambda_old = P lambda_new Q with P = y^+ u, Q = vh x^+
    y_pinv = yu * (1.0 / ys)[None, :]
    x_pinv = (1.0 / xs)[:, None] * xu.conj().T
    p_mat = y_pinv @ u
    q_mat = vh @ x_pinv
    cell_new = np.einsum("ab,bsc,cd->asd", q_mat, cell, p_mat)

    # re-split the fused cell at the inner bond
    keep = len(lam_ba_new)
    theta = cell_new.reshape(keep, 4, 4, keep)
    theta = theta * lam_ba_new[:, None, None, None]
    theta = theta * lam_ba_new[None, None, None, :]
    res = truncated_svd(theta.reshape(keep * 4, 4 * keep), chi, cutoff)
    win = float(np.linalg.norm(res.singular_values))
    lam_ab_new = res.singular_values / win
    inv = np.where(lam_ba_new > kernels.LAMBDA_FLOOR, 1.0 / lam_ba_new, 0.0)
    ga_new = res.left.reshape(keep, 4, len(lam_ab_new)) * inv[:, None, None]
    gb_new = res.right.reshape(len(lam_ab_new), 4, keep) * inv[None, None, :]

    if state.basis.flavor == "pauli":
        for arr in (ga_new, gb_new):
            if np.max(np.abs(np.imag(arr))) > 1e-9:
                raise DegenerateTransferError("re-orthogonalization left the real sector")
        ga_new = np.ascontiguousarray(ga_new.real)
        gb_new = np.ascontiguousarray(gb_new.real)
    state.tensors = [ga_new, gb_new]
    state.lambdas = [lam_ab_new, lam_ba_new]
    return state


def _trace_transfer(state: MpdoState):
    tvec = _trace_vector(state.basis)
    ma, mb = _site_matrices(state, tvec)
    return (ma * state.lambdas[0][None, :]) @ (mb * state.lambdas[1][None, :])


def itebd_renormalize(state: MpdoState):
    """Rescale the cell so the per-cell trace transfer eigenvalue is one."""
    tm = _trace_transfer(state)
    evals = np.linalg.eigvals(tm)
    eta = evals[np.argmax(np.abs(evals))]
    eta = float(np.real(eta))
    if eta <= 0.0:
        raise FloatingPointError(f"infinite-chain trace eigenvalue {eta}")
    state.tensors[0] = state.tensors[0] / np.sqrt(eta)
    state.tensors[1] = state.tensors[1] / np.sqrt(eta)
    return eta


def itebd_sz(state: MpdoState):
    """(<sz_A>, <sz_B>) of the infinite chain from the trace fixed points."""
    tm = _trace_transfer(state)
    evals, vr = np.linalg.eig(tm)
    k = int(np.argmax(np.abs(evals)))
    r = vr[:, k]
    evals_l, vl = np.linalg.eig(tm.T)
    kl = int(np.argmax(np.abs(evals_l)))
    l = vl[:, kl]
    norm = l @ (evals[k] * r)
    tvec = _trace_vector(state.basis)
    wvec = _op_vector(SZ, state.basis)
    ma, mb = _site_matrices(state, tvec)
    wa, wb = (np.tensordot(wvec, t, axes=(0, 1)) for t in state.tensors)
    za = l @ ((wa * state.lambdas[0][None, :]) @ (mb * state.lambdas[1][None, :])) @ r
    zb = l @ ((ma * state.lambdas[0][None, :]) @ (wb * state.lambdas[1][None, :])) @ r
    return float(np.real(za / norm)), float(np.real(zb / norm))


# ----------------------------------------------------------------------------
# checkpointing
# ----------------------------------------------------------------------------

def save_checkpoint(path, state: MpdoState, params: ModelParams = None, t=None):
    """Self-describing .npz: tensors, lambdas, basis flavor, params, time."""
    meta = {
        "format": "openchain-mpdo-checkpoint",
        "version": 1,
        "cell": state.cell,
        "basis": state.basis.flavor,
        "n_sites": state.n_sites,
        "log_scale": state.log_scale,
        "time": t,
        "params": None if params is None else {
            "j": params.j, "delta": params.delta,
            "gamma_plus": params.gamma_plus, "gamma_minus": params.gamma_minus,
            "gamma_z": params.gamma_z, "n_sites": params.n_sites,
        },
    }
    arrays = {"meta": np.bytes_(json.dumps(meta, sort_keys=True))}
    for k, tsr in enumerate(state.tensors):
        arrays[f"tensor_{k}"] = tsr
    for k, lam in enumerate(state.lambdas):
        arrays[f"lambda_{k}"] = lam
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (MpdoState, params dict or None, time or None)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        tensors = [data[f"tensor_{k}"] for k in range(meta["n_sites"])]
        n_lams = meta["n_sites"] - 1 if meta["cell"] == "finite" else 2
        lambdas = [data[f"lambda_{k}"] for k in range(n_lams)]
    basis = pauli_basis() if meta["basis"] == "pauli" else linearized_basis()
    state = MpdoState(tensors=tensors, lambdas=lambdas, basis=basis,
                      log_scale=meta["log_scale"], cell=meta["cell"])
    return state, meta.get("params"), meta.get("time")

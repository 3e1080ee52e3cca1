import numpy as np
import pytest

from openchain import mpdo
from openchain.models import ModelParams, pauli_basis

PAULI = pauli_basis()


def run_itebd(p, dt, t_max, chi=64, cutoff=1e-12, reorth_every=10):
    st = mpdo.neel_mpdo(None, PAULI)
    gates = mpdo.build_trotter4_gates(p, PAULI, dt)
    for step in range(1, int(round(t_max / dt)) + 1):
        mpdo.itebd_trotter4_step(st, gates, chi, cutoff)
        if step % reorth_every == 0:
            mpdo.reorthogonalize(st, chi, cutoff)
            mpdo.itebd_renormalize(st)
    mpdo.reorthogonalize(st, chi, cutoff)
    mpdo.itebd_renormalize(st)
    return st


def run_finite(p, dt, t_max, chi=64, cutoff=1e-12):
    st = mpdo.neel_mpdo(p.n_sites, PAULI)
    gates = mpdo.build_trotter4_gates(p, PAULI, dt)
    for _ in range(int(round(t_max / dt))):
        mpdo.trotter4_step(st, gates, chi, cutoff)
        mpdo.renormalize_trace(st)
    mpdo.canonicalize(st, chi, cutoff)
    return st


def canonical_defect(state):
    """Deviation of the unit-cell transfer fixed points from the identity."""
    ga, gb = state.tensors
    lam_ab, lam_ba = state.lambdas
    cell = np.tensordot(ga * lam_ab[None, None, :], gb, axes=(2, 0))
    cell = cell.reshape(cell.shape[0], 16, cell.shape[-1])
    chi = cell.shape[0]
    right = np.einsum("asb,csb->ac", cell * lam_ba[None, None, :] ** 1,
                      (cell * lam_ba[None, None, :]).conj())
    left = np.einsum("asb,asc->bc", (cell * lam_ba[:, None, None]).conj(),
                     cell * lam_ba[:, None, None])
    right /= np.trace(right) / chi
    left /= np.trace(left) / chi
    return max(float(np.max(np.abs(right - np.eye(chi)))),
               float(np.max(np.abs(left - np.eye(chi)))))


def test_neel_cell():
    st = mpdo.neel_mpdo(None, PAULI)
    assert st.cell == "infinite"
    za, zb = mpdo.itebd_sz(st)
    assert za == pytest.approx(1.0)
    assert zb == pytest.approx(-1.0)


def test_identity_gates_leave_cell_invariant():
    p = ModelParams(gamma_z=0.5)
    st = run_itebd(p, 0.25, 1.0)
    za, zb = mpdo.itebd_sz(st)
    gates = mpdo.build_trotter4_gates(ModelParams(j=0.0, delta=0.0), PAULI, 0.3)
    mpdo.itebd_trotter4_step(st, gates, 64, 1e-12)
    za2, zb2 = mpdo.itebd_sz(st)
    assert za2 == pytest.approx(za, abs=1e-9)
    assert zb2 == pytest.approx(zb, abs=1e-9)


def test_reorthogonalization_restores_canonical_form():
    p = ModelParams(gamma_plus=0.4, gamma_minus=0.4)
    st = mpdo.neel_mpdo(None, PAULI)
    gates = mpdo.build_trotter4_gates(p, PAULI, 0.1)
    for _ in range(10):
        mpdo.itebd_trotter4_step(st, gates, 32, 1e-12)
    za_before, zb_before = mpdo.itebd_sz(st)
    assert canonical_defect(st) > 1e-6  # non-unitary gates degrade the gauge
    mpdo.reorthogonalize(st, 32, 1e-12)
    assert canonical_defect(st) <= 1e-8
    za, zb = mpdo.itebd_sz(st)  # gauge change must not move observables
    assert za == pytest.approx(za_before, abs=1e-8)
    assert zb == pytest.approx(zb_before, abs=1e-8)


def test_staggered_magnetization_matches_finite_bulk():
    p_inf = ModelParams(gamma_z=1.0)
    st_inf = run_itebd(p_inf, 0.25, 3.0, chi=64)
    za, zb = mpdo.itebd_sz(st_inf)
    p_fin = ModelParams(n_sites=16, gamma_z=1.0)
    st_fin = run_finite(p_fin, 0.25, 3.0, chi=64)
    sz = mpdo.all_sz(st_fin)
    assert za == pytest.approx(sz[8], abs=1e-3)
    assert zb == pytest.approx(sz[7], abs=1e-3)
    assert za == pytest.approx(-zb, abs=1e-6)


def test_operator_entanglement_grows_then_reads_consistently():
    p = ModelParams(gamma_plus=0.5, gamma_minus=0.5)
    st = run_itebd(p, 0.1, 1.0, chi=64)
    s_ab = mpdo.operator_entanglement(st, 0)
    s_ba = mpdo.operator_entanglement(st, 1)
    assert 0.0 < s_ab <= np.log2(64)
    assert 0.0 < s_ba <= np.log2(64)

"""Physical model builders: XXZ gates, jump operators, superoperator gates.

Local basis ordering is (up, down); two-site operators act on the fused index
(s_left * 2 + s_right), i.e. the basis {uu, ud, du, dd}. All couplings are in
units of the exchange J unless passed explicitly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

__all__ = [
    "SX", "SY", "SZ", "SP", "SM", "ID2",
    "ModelParams", "OperatorBasis", "UnitaryGate", "SuperGate", "JumpOp",
    "pauli_basis", "linearized_basis",
    "two_site_hamiltonian", "build_xxz_gate", "build_jump_ops",
    "site_dissipator_matrix", "two_site_generator", "two_site_superop",
    "build_super_gate", "bond_weights", "build_super_gates",
]

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SP = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |up><down|
SM = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)   # |down><up|
ID2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class ModelParams:
    """XXZ chain with local emission/absorption/dephasing rates.

    ``n_sites=None`` marks the translation-invariant infinite chain (two-site
    unit cell); finite chains must have an even number of sites so the Neel
    state exists.
    """

    j: float = 1.0
    delta: float = 1.0
    gamma_plus: float = 0.0
    gamma_minus: float = 0.0
    gamma_z: float = 0.0
    n_sites: int | None = None

    def validate(self):
        if self.gamma_plus < 0 or self.gamma_minus < 0 or self.gamma_z < 0:
            raise ValueError("dissipation rates must be non-negative")
        if self.n_sites is not None:
            if self.n_sites < 2 or self.n_sites % 2 != 0:
                raise ValueError(f"n_sites must be even and >= 2, got {self.n_sites}")
        return self


@dataclass(frozen=True)
class OperatorBasis:
    """Orthonormal single-site operator basis, Tr(e_i e_j^dag) = delta_ij."""

    elements: np.ndarray = field(repr=False)  # (4, 2, 2) complex
    flavor: str = "pauli"

    def orthonormality_defect(self):
        g = np.array([[np.trace(a @ b.conj().T) for b in self.elements]
                      for a in self.elements])
        return float(np.max(np.abs(g - np.eye(4))))


def pauli_basis():
    """Hermitian basis 1/sqrt2, sx/sqrt2, sy/sqrt2, sz/sqrt2 (real MPDO data)."""
    els = np.stack([ID2, SX, SY, SZ]) / np.sqrt(2.0)
    return OperatorBasis(elements=els, flavor="pauli")


def linearized_basis():
    """Matrix-unit basis |0><0|, |0><1|, |1><0|, |1><1| (complex MPDO data)."""
    els = np.zeros((4, 2, 2), dtype=complex)
    els[0, 0, 0] = 1.0
    els[1, 0, 1] = 1.0
    els[2, 1, 0] = 1.0
    els[3, 1, 1] = 1.0
    return OperatorBasis(elements=els, flavor="linearized")


def two_site_hamiltonian(p: ModelParams):
    """Bond term -J/4 (sx sx + sy sy) + Delta/4 sz sz on the fused basis."""
    h = (-p.j / 4.0) * (np.kron(SX, SX) + np.kron(SY, SY))
    h += (p.delta / 4.0) * np.kron(SZ, SZ)
    return h


@dataclass(frozen=True)
class UnitaryGate:
    matrix: np.ndarray = field(repr=False)  # 4x4, exp(-i h2 dt)
    dt: float = 0.0


def build_xxz_gate(p: ModelParams, dt: float) -> UnitaryGate:
    """Two-site propagator exp(-i h2 dt); dt may be negative."""
    return UnitaryGate(matrix=expm(-1j * two_site_hamiltonian(p) * dt), dt=dt)


@dataclass(frozen=True)
class JumpOp:
    site: int
    channel: str            # "+", "-" or "z"
    matrix: np.ndarray = field(repr=False)  # sqrt(rate) * sigma, 2x2
    rate: float = 0.0


def build_jump_ops(p: ModelParams):
    """Per-site jump operators for every nonzero rate, site-major order."""
    if p.n_sites is None:
        raise ValueError("jump operators need a finite chain")
    channels = []
    if p.gamma_plus > 0:
        channels.append(("+", np.sqrt(p.gamma_plus) * SP, p.gamma_plus))
    if p.gamma_minus > 0:
        channels.append(("-", np.sqrt(p.gamma_minus) * SM, p.gamma_minus))
    if p.gamma_z > 0:
        channels.append(("z", np.sqrt(p.gamma_z) * SZ, p.gamma_z))
    return [JumpOp(site=i, channel=ch, matrix=m, rate=r)
            for i in range(p.n_sites) for (ch, m, r) in channels]


def _jump_matrices(p: ModelParams):
    ms = []
    if p.gamma_plus > 0:
        ms.append(np.sqrt(p.gamma_plus) * SP)
    if p.gamma_minus > 0:
        ms.append(np.sqrt(p.gamma_minus) * SM)
    if p.gamma_z > 0:
        ms.append(np.sqrt(p.gamma_z) * SZ)
    return ms


def _dissipator(ls, x):
    out = np.zeros_like(x)
    for l in ls:
        ldag = l.conj().T
        out += l @ x @ ldag - 0.5 * (ldag @ l @ x + x @ ldag @ l)
    return out


def site_dissipator_matrix(p: ModelParams, basis: OperatorBasis):
    """4x4 expansion of the single-site Lindblad dissipator in the basis."""
    ls = _jump_matrices(p)
    els = basis.elements
    mat = np.zeros((4, 4), dtype=complex)
    for k in range(4):
        dx = _dissipator(ls, els[k])
        for i in range(4):
            mat[i, k] = np.trace(els[i].conj().T @ dx)
    return mat


def two_site_superop(fn, basis: OperatorBasis):
    """16x16 expansion of an arbitrary two-site superoperator X -> fn(X)."""
    els = basis.elements
    mat = np.zeros((16, 16), dtype=complex)
    pairs = [(i, j) for i in range(4) for j in range(4)]
    duals = [np.kron(els[i], els[j]).conj().T for (i, j) in pairs]
    for col, (k, l) in enumerate(pairs):
        fx = fn(np.kron(els[k], els[l]))
        for row in range(16):
            mat[row, col] = np.trace(duals[row] @ fx)
    return mat


def two_site_generator(p: ModelParams, basis: OperatorBasis,
                       w_left=0.5, w_right=0.5):
    """Bond generator: Hamiltonian commutator plus weighted site dissipators.

    Single-site Lindblad terms are split half/half onto the two bonds that
    touch a bulk site; chain ends take full weight so each site's dissipator
    is applied exactly once per sweep.
    """
    h2 = two_site_hamiltonian(p)
    ham = two_site_superop(lambda x: -1j * (h2 @ x - x @ h2), basis)
    lmat = site_dissipator_matrix(p, basis)
    gen = ham + w_left * np.kron(lmat, np.eye(4)) + w_right * np.kron(np.eye(4), lmat)
    return gen


@dataclass(frozen=True)
class SuperGate:
    matrix: np.ndarray = field(repr=False)  # 16x16; real in the pauli flavor
    dt_fraction: float = 0.0


def build_super_gate(p: ModelParams, basis: OperatorBasis, dt_fraction: float,
                     w_left=0.5, w_right=0.5) -> SuperGate:
    """exp(generator * dt_fraction) on the fused two-site operator index."""
    gate = expm(two_site_generator(p, basis, w_left, w_right) * dt_fraction)
    if basis.flavor == "pauli":
        im = float(np.max(np.abs(gate.imag)))
        if im > 1e-12:
            raise ValueError(f"pauli-flavor super gate has imaginary part {im}")
        gate = np.ascontiguousarray(gate.real)
    return SuperGate(matrix=gate, dt_fraction=dt_fraction)


def bond_weights(n_sites):
    """(w_left, w_right) of the site dissipators for each bond of a finite chain."""
    n_bonds = n_sites - 1
    weights = []
    for b in range(n_bonds):
        wl = 1.0 if b == 0 else 0.5
        wr = 1.0 if b == n_bonds - 1 else 0.5
        weights.append((wl, wr))
    return weights


def build_super_gates(p: ModelParams, basis: OperatorBasis, dt_fraction: float):
    """Per-bond super gates for a finite chain (or the bulk gate if infinite)."""
    if p.n_sites is None:
        return [build_super_gate(p, basis, dt_fraction)]
    return [build_super_gate(p, basis, dt_fraction, wl, wr)
            for (wl, wr) in bond_weights(p.n_sites)]

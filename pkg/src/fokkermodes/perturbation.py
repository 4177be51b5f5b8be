"""Linearized dynamics around a circular orbit.

Expanding the action to second order in the deviations rho_a(t_a) gives a
time-nonlocal quadratic form.  Same-particle coefficients are ordinary
(lag-integrated) tensors; cross-particle coefficients survive as functions
of the lag and enter the frequency domain through their Fourier transform.
The resulting 6x6 dynamical matrix is

    D_aa(w) = Lzz_a - i w (Lzdz_a - Lzdz_a^T) + w^2 Ldzdz_a
    D_12(w) = Int dtheta e^{+i w theta} [ Hzz - i w (Hzdz - Hdzz) + w^2 Hdzdz ]_12
    D_21(w) = Int dtheta e^{-i w theta} [ Hzz - i w (Hzdz - Hdzz) + w^2 Hdzdz ]_21

where H(theta) is the 12x12 second-derivative matrix of the interaction
kernel on the orbit and the i w factors come from integrating the lag
derivatives by parts (the declared decay window makes the boundary terms
negligible, which is checked).  The lag-axis signs differ between the two
off-diagonal blocks because the lag is defined as t1 - t2 for both.

Everything is assembled from the exact quadratic-form jets of the six
kernel arguments (frames module), so all derivatives are analytic; an
automatic finite-difference audit of those jets runs once per orbit and
aborts on failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import frames
from .frames import Z1, V1, Z2, V2, LEVI_CIVITA
from .model import FokkerModel, kernel_jet
from .orbit import CircularOrbit
from .quadrature import integrate_theta

__all__ = [
    "CoefficientTensors", "DynMatSample", "BoundaryDecayError",
    "scalar_jet", "local_coeffs", "kernel_fourier", "dynamical_matrix",
    "dynamical_matrix_derivative", "kinematic_vectors", "aristotle_residuals",
    "linearize",
]

PERP_IDX = [0, 1, 3, 4]   # (a, i) flat indices with i in-plane
PAR_IDX = [2, 5]          # axis components


class BoundaryDecayError(RuntimeError):
    """Kernel not negligible at the edge of its declared decay window."""


@dataclass(frozen=True)
class CoefficientTensors:
    """Lag-integrated second-derivative tensors (one-particle + kernel).

    zz, zdz, dzdz are (2, 3, 3) real arrays indexed by particle; zdz holds
    the mixed d^2/dz_i ddz_j block.  cross_zero holds the zero-frequency
    cross blocks (the local limit of the Fourier kernels), keyed "12"/"21",
    each a dict of zz/zdz/dzz/dzdz 3x3 blocks.
    """

    zz: np.ndarray
    zdz: np.ndarray
    dzdz: np.ndarray
    cross_zero: dict


def scalar_jet(omega: float, r1: float, r2: float, theta: float):
    """Values, gradients and Hessians of the six kernel arguments.

    Evaluated on the circular configuration; gradients are 12-vectors over
    (z1, dz1, z2, dz2) and Hessians are the exact (w-independent) quadratic
    forms.  Returns (values (6,), grads (6, 12), hessians (6, 12, 12)).
    """
    w0 = frames.orbit_vector(r1, r2)
    Q = frames.arg_quadratic_forms(omega, theta)[:, 0]
    grads = Q @ w0
    vals = 0.5 * grads @ w0
    return vals, grads, Q


class Linearization:
    """Cached second-order expansion machinery for one (model, orbit)."""

    def __init__(self, model: FokkerModel, orbit: CircularOrbit,
                 audit: bool = True, abs_tol: float = 1e-10):
        self.model = model
        self.orbit = orbit
        self.abs_tol = abs_tol
        self.w0 = frames.orbit_vector(orbit.R1, orbit.R2)
        self.T = 0.0 if model.is_local else model.decay_window(1e-12)
        if audit:
            rng = np.random.default_rng(20)
            frames.audit_quadratic_forms(
                orbit.Omega, rng.uniform(-max(self.T, 1.0), max(self.T, 1.0), 20),
                rng)
        self.tensors = self._build_tensors()

    # -- kernel derivative fields on the orbit --------------------------------

    def kernel_hessian(self, theta: np.ndarray) -> np.ndarray:
        """(N, 12, 12) second derivatives of the kernel at lag theta."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        args = frames.static_args(self.orbit.Omega, self.orbit.R1,
                                  self.orbit.R2, theta)
        jet = kernel_jet(self.model, theta, args)
        Q = frames.arg_quadratic_forms(self.orbit.Omega, theta)
        g = np.einsum("xnij,j->xni", Q, self.w0)
        H = np.einsum("xn,xnij->nij", jet.first[1:], Q)
        H += np.einsum("xyn,xni,ynj->nij", jet.second[1:, 1:], g, g)
        return H

    def kernel_gradient(self, theta: np.ndarray) -> np.ndarray:
        """(N, 12) first derivatives of the kernel at lag theta."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        args = frames.static_args(self.orbit.Omega, self.orbit.R1,
                                  self.orbit.R2, theta)
        jet = kernel_jet(self.model, theta, args)
        Q = frames.arg_quadratic_forms(self.orbit.Omega, theta)
        g = np.einsum("xnij,j->xni", Q, self.w0)
        return np.einsum("xn,xni->ni", jet.first[1:], g)

    def one_particle_hessian(self) -> np.ndarray:
        """(12, 12) Hessian of L1(gamma1) + L2(gamma2) at the orbit."""
        omega = self.orbit.Omega
        Q = frames.arg_quadratic_forms(omega, 0.0)[:, 0]
        out = np.zeros((12, 12))
        g1 = omega ** 2 * self.orbit.R1 ** 2
        g2 = omega ** 2 * self.orbit.R2 ** 2
        for one, gval, qidx in ((self.model.one1, g1, frames.GAMMA1),
                                (self.model.one2, g2, frames.GAMMA2)):
            grad = Q[qidx] @ self.w0
            out += float(one.d1(gval)) * Q[qidx]
            out += float(one.d2(gval)) * np.outer(grad, grad)
        return out

    def one_particle_gradient(self) -> np.ndarray:
        omega = self.orbit.Omega
        Q = frames.arg_quadratic_forms(omega, 0.0)[:, 0]
        out = np.zeros(12)
        g1 = omega ** 2 * self.orbit.R1 ** 2
        g2 = omega ** 2 * self.orbit.R2 ** 2
        for one, gval, qidx in ((self.model.one1, g1, frames.GAMMA1),
                                (self.model.one2, g2, frames.GAMMA2)):
            out += float(one.d1(gval)) * (Q[qidx] @ self.w0)
        return out

    def kernel_hessian_integral(self, omega_transform: complex = None):
        """Lag integral of the kernel Hessian, optionally Fourier-weighted.

        omega_transform None gives the zero-frequency (real) integral; a
        complex value w weights with e^{i w theta}.
        """
        if self.model.is_local:
            return self.kernel_hessian(0.0)[0].astype(
                complex if omega_transform is not None else float)
        wt = omega_transform

        def integrand(theta):
            H = self.kernel_hessian(theta)
            if wt is None:
                return H
            return H * np.exp(1j * wt * theta)[:, None, None]

        freq = 2.0 * self.orbit.Omega
        if wt is not None:
            freq += abs(np.real(wt))
            self._check_im(wt)
        val, _ = integrate_theta(integrand, self.T, freq_scale=freq,
                                 envelope_scale=self.model.tau,
                                 abs_tol=self.abs_tol)
        return val

    def kernel_gradient_integral(self, omega_transform: complex = None):
        if self.model.is_local:
            return self.kernel_gradient(0.0)[0].astype(
                complex if omega_transform is not None else float)
        wt = omega_transform

        def integrand(theta):
            g = self.kernel_gradient(theta)
            if wt is None:
                return g
            return g * np.exp(1j * wt * theta)[:, None]

        freq = 2.0 * self.orbit.Omega + (abs(np.real(wt)) if wt is not None else 0.0)
        val, _ = integrate_theta(integrand, self.T, freq_scale=freq,
                                 envelope_scale=self.model.tau,
                                 abs_tol=self.abs_tol)
        return val

    def _check_im(self, w: complex) -> None:
        im_max = self.imag_limit()
        if abs(np.imag(w)) > im_max:
            raise BoundaryDecayError(
                f"|Im omega| = {abs(np.imag(w)):.3g} exceeds the integrable "
                f"limit {im_max:.3g} for this decay window")

    def imag_limit(self, eps: float = 1e-12) -> float:
        if self.model.is_local:
            return math.inf
        return -math.log(eps) / self.T

    def boundary_decay_check(self, w: complex, tol: float = 1e-8) -> None:
        """Verify the transform integrand is negligible at +-T."""
        if self.model.is_local:
            return
        H = self.kernel_hessian(np.array([-self.T, self.T]))
        grow = math.exp(abs(np.imag(w)) * self.T)
        worst = float(np.max(np.abs(H))) * grow
        scale = float(np.max(np.abs(self.tensors.zz))) + 1e-300
        if worst > tol * scale:
            raise BoundaryDecayError(
                f"kernel not small at the window edge: {worst:.3e} vs "
                f"scale {scale:.3e}")

    # -- assembled tensors -----------------------------------------------------

    def _build_tensors(self) -> CoefficientTensors:
        K = self.kernel_hessian_integral()
        L = self.one_particle_hessian()
        M = K + L
        zz = np.stack([M[Z1, Z1], M[Z2, Z2]])
        zdz = np.stack([M[Z1, V1], M[Z2, V2]])
        dzdz = np.stack([M[V1, V1], M[V2, V2]])
        cross = {
            "12": {"zz": K[Z1, Z2], "zdz": K[Z1, V2],
                   "dzz": K[V1, Z2], "dzdz": K[V1, V2]},
            "21": {"zz": K[Z2, Z1], "zdz": K[Z2, V1],
                   "dzz": K[V2, Z1], "dzdz": K[V2, V1]},
        }
        return CoefficientTensors(zz=zz, zdz=zdz, dzdz=dzdz, cross_zero=cross)

    def _offdiag_integrand_blocks(self, theta):
        H = self.kernel_hessian(theta)
        return {
            "12": (H[:, Z1, Z2], H[:, Z1, V2], H[:, V1, Z2], H[:, V1, V2]),
            "21": (H[:, Z2, Z1], H[:, Z2, V1], H[:, V2, Z1], H[:, V2, V1]),
        }

    def offdiag_block(self, w: complex, which: str,
                      derivative: bool = False) -> np.ndarray:
        """Fourier off-diagonal block; lag sign is + for "12", - for "21"."""
        sign = 1.0 if which == "12" else -1.0
        if self.model.is_local:
            blocks = self._offdiag_integrand_blocks(np.array([0.0]))[which]
            zz, zdz, dzz, dzdz = (b[0] for b in blocks)
            if derivative:
                return -1j * (zdz - dzz) + 2.0 * w * dzdz
            return zz - 1j * w * (zdz - dzz) + w * w * dzdz

        def integrand(theta):
            blocks = self._offdiag_integrand_blocks(theta)[which]
            zz, zdz, dzz, dzdz = blocks
            phase = np.exp(1j * sign * w * theta)[:, None, None]
            base = zz - 1j * w * (zdz - dzz) + w * w * dzdz
            if derivative:
                dd = (1j * sign * theta[:, None, None] * base
                      - 1j * (zdz - dzz) + 2.0 * w * dzdz)
                return phase * dd
            return phase * base

        freq = 2.0 * self.orbit.Omega + abs(np.real(w))
        self._check_im(w)
        val, _ = integrate_theta(integrand, self.T, freq_scale=freq,
                                 envelope_scale=self.model.tau,
                                 abs_tol=self.abs_tol)
        return val

    def matrix(self, w: complex) -> np.ndarray:
        """The 6x6 dynamical matrix at (complex) frequency w."""
        D = np.zeros((6, 6), dtype=complex)
        t = self.tensors
        for a in range(2):
            sl = slice(3 * a, 3 * a + 3)
            anti = t.zdz[a] - t.zdz[a].T
            D[sl, sl] = t.zz[a] - 1j * w * anti + w * w * t.dzdz[a]
        D[0:3, 3:6] = self.offdiag_block(w, "12")
        D[3:6, 0:3] = self.offdiag_block(w, "21")
        return D

    def matrix_derivative(self, w: complex) -> np.ndarray:
        """Analytic d D / d omega at w."""
        D = np.zeros((6, 6), dtype=complex)
        t = self.tensors
        for a in range(2):
            sl = slice(3 * a, 3 * a + 3)
            anti = t.zdz[a] - t.zdz[a].T
            D[sl, sl] = -1j * anti + 2.0 * w * t.dzdz[a]
        D[0:3, 3:6] = self.offdiag_block(w, "12", derivative=True)
        D[3:6, 0:3] = self.offdiag_block(w, "21", derivative=True)
        return D


@lru_cache(maxsize=32)
def linearize(model: FokkerModel, orbit: CircularOrbit) -> Linearization:
    """Shared expansion context; the scalar-jet audit runs on first use."""
    return Linearization(model, orbit)


def local_coeffs(model: FokkerModel, orbit: CircularOrbit) -> CoefficientTensors:
    """Lag-integrated coefficient tensors around the orbit."""
    return linearize(model, orbit).tensors


def kernel_fourier(model: FokkerModel, orbit: CircularOrbit,
                   w: complex) -> dict:
    """Cross-particle Fourier blocks of the dynamical matrix at w.

    Returns {"12": 3x3, "21": 3x3}; lag derivatives are handled by parts
    (each turning into a frequency factor), which requires decay at the
    window boundary - violation raises BoundaryDecayError.
    """
    lin = linearize(model, orbit)
    lin.boundary_decay_check(w)
    return {"12": lin.offdiag_block(w, "12"),
            "21": lin.offdiag_block(w, "21")}


@dataclass(frozen=True)
class DynMatSample:
    """Dynamical matrix at one frequency with its invariant blocks."""

    omega: complex
    D: np.ndarray          # (6, 6) complex
    D_perp: np.ndarray     # (4, 4) in-plane block
    D_par: np.ndarray      # (2, 2) axis block
    tensors: CoefficientTensors


def dynamical_matrix(model: FokkerModel, orbit: CircularOrbit,
                     w: complex) -> DynMatSample:
    lin = linearize(model, orbit)
    D = lin.matrix(w)
    return DynMatSample(
        omega=w, D=D,
        D_perp=D[np.ix_(PERP_IDX, PERP_IDX)],
        D_par=D[np.ix_(PAR_IDX, PAR_IDX)],
        tensors=lin.tensors,
    )


def dynamical_matrix_derivative(model: FokkerModel, orbit: CircularOrbit,
                                w: complex) -> np.ndarray:
    return linearize(model, orbit).matrix_derivative(w)


def kinematic_vectors(orbit: CircularOrbit) -> list[tuple[complex, np.ndarray]]:
    """The six (frequency, polarization) pairs of orbit-redefinition modes.

    Phase shift and axis translation at zero frequency; orbit-plane tilt and
    the center-of-mass circulation pair at +-Omega.
    """
    r1, r2, w = orbit.R1, orbit.R2, orbit.Omega
    return [
        (0.0, np.array([0, r1, 0, 0, -r2, 0], dtype=complex)),
        (0.0, np.array([0, 0, 1, 0, 0, 1], dtype=complex)),
        (w, np.array([0, 0, r1, 0, 0, -r2], dtype=complex)),
        (-w, np.array([0, 0, r1, 0, 0, -r2], dtype=complex)),
        (w, np.array([1, -1j, 0, 1, -1j, 0])),
        (-w, np.array([1, 1j, 0, 1, 1j, 0])),
    ]


# ---------------------------------------------------------------------------
# invariance identities

def _rot(vec_v: np.ndarray, omega: float) -> np.ndarray:
    """Omega eps_{i3l} v_l (axis index 2 in zero-based components)."""
    return omega * np.einsum("il,l->i", LEVI_CIVITA[:, 2, :], vec_v)


def _rot2_terms(z: np.ndarray, vec_z: np.ndarray, vec_v: np.ndarray,
                omega: float):
    """(eps_{ikl} z^k vec_z^l,  Omega eps_{i3l} eps_{lmn} z^m vec_v^n)."""
    t1 = np.einsum("ikl,k,l->i", LEVI_CIVITA, z, vec_z)
    inner = np.einsum("lmn,m,n->l", LEVI_CIVITA, z, vec_v)
    t2 = omega * np.einsum("il,l->i", LEVI_CIVITA[:, 2, :], inner)
    return t1, t2


def _residual(parts: list[np.ndarray], floor: float = 0.0) -> float:
    """Max-norm of the sum of `parts`, normalized by the largest part.

    `floor` guards identities whose every term vanishes identically on the
    orbit: without it the ratio would compare rounding noise to rounding
    noise.  Callers pass a small fraction of the family's tensor scale.
    """
    total = parts[0].astype(complex)
    for p in parts[1:]:
        total = total + p
    scale = max(max(float(np.max(np.abs(p))) for p in parts), floor, 1e-300)
    return float(np.max(np.abs(total))) / scale


def aristotle_residuals(model: FokkerModel, orbit: CircularOrbit) -> dict:
    """Normalized residuals of the invariance identities of the expansion.

    Covers the one-particle translation/rotation identities (E.1-E.6), the
    kernel identities with their frequency-Omega transforms (E.7-E.12), and
    the kinematic-vector annihilation relations at frequencies 0 and
    +-Omega (the 4.48-4.52 block).  Each residual is normalized by the
    largest participating term; diagnostic only.
    """
    lin = linearize(model, orbit)
    omega = orbit.Omega
    zvec = [np.array([orbit.R1, 0.0, 0.0]), np.array([-orbit.R2, 0.0, 0.0])]
    n = frames.EPS3
    proj = np.diag([1.0, 1.0, 0.0])
    res: dict[str, float] = {}

    def bump(key, value):
        res[key] = max(res.get(key, 0.0), value)

    def pick(vec, a):
        return (vec[Z1], vec[V1]) if a == 0 else (vec[Z2], vec[V2])

    def blocks(mat, row_a, col_a):
        rows = (Z1, V1) if row_a == 0 else (Z2, V2)
        cols = (Z1, V1) if col_a == 0 else (Z2, V2)
        return {"zz": mat[rows[0], cols[0]], "zdz": mat[rows[0], cols[1]],
                "dzz": mat[rows[1], cols[0]], "dzdz": mat[rows[1], cols[1]]}

    def combo(vz, vv):
        return vz + _rot(vv, omega)

    def eps_tail_z(j, vec_z, vec_v):
        # (eps_{ij}^l X_l,  Omega eps_{i3}^l eps_{lj}^n V_n) as separate terms
        t_a = np.einsum("il,l->i", LEVI_CIVITA[:, j, :], vec_z)
        t_b = omega * np.einsum("il,ln,n->i", LEVI_CIVITA[:, 2, :],
                                LEVI_CIVITA[:, j, :], vec_v)
        return t_a, t_b

    # one-particle data
    Lg = lin.one_particle_gradient()
    LH = lin.one_particle_hessian()

    for a in range(2):
        Lz, Lv = pick(Lg, a)
        bk = blocks(LH, a, a)
        # E.1: translation identity of the gradient
        bump("E.1", _residual([Lz, _rot(Lv, omega)]))
        # E.4: rotation identity of the gradient
        t1, t2 = _rot2_terms(zvec[a], Lz, Lv, omega)
        bump("E.4", _residual([t1, t2]))
        for j in range(3):
            # E.2 / E.3: translation identities of the Hessian columns
            bump("E.2", _residual([bk["zz"][:, j],
                                   _rot(bk["dzz"][:, j], omega)]))
            bump("E.3", _residual([bk["zdz"][:, j],
                                   _rot(bk["dzdz"][:, j], omega)]))
            # E.5 / E.6: rotation identities of the Hessian columns
            t1, t2 = _rot2_terms(zvec[a], bk["zz"][:, j], bk["dzz"][:, j],
                                 omega)
            bump("E.5", _residual([t1, t2, *eps_tail_z(j, Lz, Lv)]))
            t1, t2 = _rot2_terms(zvec[a], bk["zdz"][:, j], bk["dzdz"][:, j],
                                 omega)
            tail6 = np.einsum("il,l->i", LEVI_CIVITA[:, j, :], Lv)
            bump("E.6", _residual([t1, t2, tail6]))

    # kernel data: zero-frequency and Omega transforms.  The lag rotation
    # that relates the two particles' symmetry generators splits, under the
    # lag integral, into the axis projector (zero frequency), the in-plane
    # projector against the cosine transform and the in-plane rotation
    # generator against the sine transform; the sine sign alternates with
    # the particle.
    G0 = lin.kernel_gradient_integral()
    GW = lin.kernel_gradient_integral(omega_transform=omega).astype(complex)
    K0 = lin.kernel_hessian_integral()
    KW = lin.kernel_hessian_integral(omega_transform=omega).astype(complex)
    ntilde = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])

    def other_parts(combo_zero, combo_omega, sin_sign):
        return [n * (n @ combo_zero),
                proj @ np.real(combo_omega),
                sin_sign * (ntilde @ np.imag(combo_omega))]

    for a in range(2):
        b = 1 - a
        sin_sign = 1.0 if a == 0 else -1.0
        lam_z, lam_v = pick(G0, a)
        lam_zb, lam_vb = pick(G0, b)
        chk_zb, chk_vb = pick(GW, b)

        bump("E.7", _residual([combo(lam_z, lam_v),
                               *other_parts(combo(lam_zb, lam_vb),
                                            combo(chk_zb, chk_vb), sin_sign)]))
        t1, t2 = _rot2_terms(zvec[a], lam_z, lam_v, omega)
        u1, u2 = _rot2_terms(zvec[b], lam_zb, lam_vb, omega)
        v1, v2 = _rot2_terms(zvec[b], chk_zb, chk_vb, omega)
        bump("E.10", _residual([t1, t2,
                                *other_parts(u1 + u2, v1 + v2, sin_sign)]))

        same0 = blocks(K0, a, a)
        cross0 = blocks(K0, b, a)
        crossW = blocks(KW, b, a)
        for tail in ("z", "v"):
            # trailing derivative z_a^j (tail z) or dz_a^j (tail v)
            cz, cv = ("zz", "dzz") if tail == "z" else ("zdz", "dzdz")
            name89 = "E.8" if tail == "z" else "E.9"
            name1112 = "E.11" if tail == "z" else "E.12"
            for j in range(3):
                bump(name89, _residual([
                    combo(same0[cz][:, j], same0[cv][:, j]),
                    *other_parts(combo(cross0[cz][:, j], cross0[cv][:, j]),
                                 combo(crossW[cz][:, j], crossW[cv][:, j]),
                                 sin_sign)]))
                if tail == "z":
                    tail_terms = list(eps_tail_z(j, lam_z, lam_v))
                else:
                    tail_terms = [np.einsum("il,l->i", LEVI_CIVITA[:, j, :],
                                            lam_v)]
                t1, t2 = _rot2_terms(zvec[a], same0[cz][:, j],
                                     same0[cv][:, j], omega)
                u1, u2 = _rot2_terms(zvec[b], cross0[cz][:, j],
                                     cross0[cv][:, j], omega)
                v1, v2 = _rot2_terms(zvec[b], crossW[cz][:, j],
                                     crossW[cv][:, j], omega)
                bump(name1112, _residual([t1, t2,
                                          *other_parts(u1 + u2, v1 + v2,
                                                       sin_sign),
                                          *tail_terms]))

    # kinematic annihilation relations at 0 and +-Omega
    labels = ["4.49", "4.48", "4.50-4.51", "4.50-4.51", "4.52", "4.52"]
    for label, (freq, vec) in zip(labels, kinematic_vectors(orbit)):
        D = lin.matrix(freq)
        resid = D @ vec
        scale = max(float(np.max(np.abs(D))) * float(np.max(np.abs(vec))),
                    1e-300)
        bump(label, float(np.max(np.abs(resid))) / scale)
    return res

"""Circular-orbit equilibria and their conserved quantities.

In the co-rotating frame a circular orbit is a static configuration
z1 = R1 e1, z2 = -R2 e1 (R1, R2 > 0, antiparallel).  The static effective
Lagrangian depends on the four invariants

    sigma0 = (R1+R2)^2,  sigma1 = R1^2,  sigma2 = R2^2,  sigma3 = -R1 R2

through the one-particle terms and the lag-integrated kernel; with
k_i = dL0/dsigma_i the equilibrium conditions are the pair of linear
relations

    2 (k0 + k1) R1 + (2 k0 - k3) R2 = 0
    (2 k0 - k3) R1 + 2 (k0 + k2) R2 = 0

whose solvability condition is 4 (k0+k1)(k0+k2) = (2 k0 - k3)^2.  For equal
particles R1 = R2 = R and the condition factorizes; the physical factor is
4 k0 + 2 k1 - k3 = 0 (k0 carries the interparticle force; the k0-free factor
is the static branch we skip).

The angular momentum is computed two ways: from the explicit lag-weighted
kernel integral, and as the numerical Omega-derivative of the static
Lagrangian at fixed radii.  Their agreement is a model-consistency check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import frames
from .frames import ALPHA, BETA1, BETA2, GAMMA1, GAMMA2, DELTA
from .model import FokkerModel
from .quadrature import integrate_theta, QuadratureError

__all__ = [
    "CircularOrbit", "OrbitError", "NoRootError", "DegenerateOrbitError",
    "ModelConsistencyError", "effective_statics", "solve_orbit",
    "solve_orbit_branches", "conserved_quantities", "galilei_orbit",
    "power_law_relative_jet", "degenerate_frequency", "orbit_scan_rows",
]

DEFAULT_BRACKET = (1e-3, 1e3)
SCAN_POINTS = 48
BISECT_REL = 1e-12
FLAT_TOL = 1e-12
RESIDUAL_TOL = 1e-9
J_ROUTE_TOL = 1e-5


class OrbitError(RuntimeError):
    pass


class NoRootError(OrbitError):
    """No equilibrium radius in the scanned interval."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class DegenerateOrbitError(OrbitError):
    """Orbit equation is radius-independent: one-parameter family at a
    single admissible Omega; fix the radius with an angular momentum."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class ModelConsistencyError(OrbitError):
    """The two angular-momentum routes disagree beyond tolerance."""


@dataclass(frozen=True)
class CircularOrbit:
    """Equilibrium solution at fixed Omega (one branch)."""

    Omega: float
    R1: float
    R2: float
    sigma: tuple          # (sigma0, sigma1, sigma2, sigma3)
    k: tuple              # (k0, k1, k2, k3)
    L0: float
    Etilde0: float
    E0: float
    J0: float
    J0_check: float       # dL0/dOmega route
    J0_discrepancy: float
    residual: float       # worst normalized equilibrium/determinant residual
    degenerate: bool = False
    ambiguous: bool = False
    branch_radii: tuple = ()

    @property
    def separation(self) -> float:
        return self.R1 + self.R2


# ---------------------------------------------------------------------------
# static evaluation

def _static_integrals(model: FokkerModel, omega: float, r1: float, r2: float,
                      abs_tol: float = 1e-10) -> dict:
    """Lag-integrated kernel data at a static antiparallel configuration.

    Returns Lam0 and the integrals entering k0..k3 and the explicit
    angular-momentum formula.  LOCAL kernels collapse to the Lam jet at
    zero lag.
    """
    if model.is_local:
        args0 = frames.static_args(omega, r1, r2, 0.0)
        val, d1, d2 = model.kernel.lam_jet(args0)
        return {
            "Lam0": float(val[0]),
            "I_alpha": float(d1[ALPHA, 0]),
            "I_g1": float(d1[GAMMA1, 0]),
            "I_g2": float(d1[GAMMA2, 0]),
            "I_k3": float(omega ** 2 * d1[DELTA, 0]),
            "I_jbrace": float(2.0 * omega * d1[DELTA, 0]),
        }

    T = model.decay_window(1e-12)

    def integrand(theta):
        args = frames.static_args(omega, r1, r2, theta)
        jet = model.kernel.jet(theta, args)
        c = np.cos(omega * theta)
        s = np.sin(omega * theta)
        f = jet.first
        p_a, p_b1, p_b2 = f[1 + ALPHA], f[1 + BETA1], f[1 + BETA2]
        p_d = f[1 + DELTA]
        k3_row = (2.0 * (1.0 - c) * p_a + omega * s * (p_b1 + p_b2)
                  + omega ** 2 * c * p_d)
        jbrace = (((2.0 * p_a - omega ** 2 * p_d) * theta + p_b1 + p_b2) * s
                  + (2.0 * p_d + (p_b1 + p_b2) * theta) * omega * c)
        rows = np.stack([jet.value, p_a, f[1 + GAMMA1], f[1 + GAMMA2],
                         k3_row, jbrace], axis=-1)
        return rows

    vals, _ = integrate_theta(integrand, T, freq_scale=2.0 * omega,
                              envelope_scale=model.tau, abs_tol=abs_tol)
    return {
        "Lam0": float(vals[0]),
        "I_alpha": float(vals[1]),
        "I_g1": float(vals[2]),
        "I_g2": float(vals[3]),
        "I_k3": float(vals[4]),
        "I_jbrace": float(vals[5]),
    }


def effective_statics(model: FokkerModel, omega: float, r1: float, r2: float,
                      abs_tol: float = 1e-10):
    """Invariants sigma, derivatives k and static Lagrangian at (Omega, R1, R2)."""
    if omega <= 0:
        raise ValueError("Omega must be positive")
    if r1 < 0 or r2 < 0 or (r1 == 0 and r2 == 0):
        raise ValueError("radii must be nonnegative and not both zero")
    sigma = ((r1 + r2) ** 2, r1 * r1, r2 * r2, -r1 * r2)
    data = _static_integrals(model, omega, r1, r2, abs_tol=abs_tol)
    g1 = omega ** 2 * sigma[1]
    g2 = omega ** 2 * sigma[2]
    k0 = data["I_alpha"]
    k1 = float(model.one1.d1(g1)) * omega ** 2 + omega ** 2 * data["I_g1"]
    k2 = float(model.one2.d1(g2)) * omega ** 2 + omega ** 2 * data["I_g2"]
    k3 = data["I_k3"]
    L0 = float(model.one1.value(g1)) + float(model.one2.value(g2)) + data["Lam0"]
    return sigma, (k0, k1, k2, k3), L0


def _k_scale(k) -> float:
    return max(abs(4.0 * k[0]), abs(2.0 * k[1]), abs(2.0 * k[2]),
               abs(k[3]), 1e-300)


def _pair_residuals(k, r1, r2):
    k0, k1, k2, k3 = k
    g1 = 2.0 * (k0 + k1) * r1 + (2.0 * k0 - k3) * r2
    g2 = (2.0 * k0 - k3) * r1 + 2.0 * (k0 + k2) * r2
    return g1, g2


# ---------------------------------------------------------------------------
# root finding helpers

def _bisect(f: Callable[[float], float], a: float, b: float,
            fa: float, fb: float, rel_tol: float = BISECT_REL) -> float:
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fa < 0.0) != (fm < 0.0):
            b, fb = m, fm
        else:
            a, fa = m, fm
        if (b - a) <= rel_tol * max(abs(a), abs(b)):
            break
    return 0.5 * (a + b)


def _scan_roots(f: Callable[[float], float], grid: np.ndarray,
                values: Sequence[float]) -> list[float]:
    roots = []
    for i in range(len(grid) - 1):
        fa, fb = values[i], values[i + 1]
        if not (math.isfinite(fa) and math.isfinite(fb)):
            continue
        if fa == 0.0:
            roots.append(float(grid[i]))
        elif (fa < 0.0) != (fb < 0.0):
            roots.append(_bisect(f, float(grid[i]), float(grid[i + 1]), fa, fb))
    if len(values) and math.isfinite(values[-1]) and values[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots


# ---------------------------------------------------------------------------
# orbit solving

def _equal_gap(model: FokkerModel, omega: float, r: float) -> tuple[float, tuple]:
    _, k, _ = effective_statics(model, omega, r, r)
    return 4.0 * k[0] + 2.0 * k[1] - k[3], k


def _determinant_gap(model: FokkerModel, omega: float, r1: float,
                     r2: float) -> float:
    _, k, _ = effective_statics(model, omega, r1, r2)
    return 4.0 * (k[0] + k[1]) * (k[0] + k[2]) - (2.0 * k[0] - k[3]) ** 2


def _is_flat(values: np.ndarray, scales: np.ndarray) -> bool:
    spread = float(np.max(values) - np.min(values))
    return spread <= FLAT_TOL * float(np.max(scales))


def degenerate_frequency(model: FokkerModel,
                         omega_bracket=(1e-3, 1e3)) -> float:
    """The single admissible Omega of a radius-degenerate model."""
    probe = 1.0

    def gap(omega):
        if model.equal_particles:
            return _equal_gap(model, omega, probe)[0]
        return _determinant_gap(model, omega, probe, probe)

    grid = np.geomspace(omega_bracket[0], omega_bracket[1], 96)
    vals = [gap(w) for w in grid]
    roots = _scan_roots(gap, grid, vals)
    if not roots:
        raise NoRootError("no admissible Omega for the degenerate family",
                          bracket=omega_bracket)
    return roots[0]


def _radii_from_scale(model, omega, ratio, s):
    return s, ratio * s


def _degenerate_orbit(model: FokkerModel, omega: float, J: float,
                      bracket) -> tuple[float, float]:
    """Radius of a degenerate family fixed by the angular momentum."""
    if model.equal_particles:
        ratio = 1.0
    else:
        # equilibrium ratio from the particle-1 relation at unit scale
        _, k, _ = effective_statics(model, omega, 1.0, 1.0)
        denom = 2.0 * k[0] - k[3]
        if denom == 0.0:
            raise NoRootError("degenerate family has no antiparallel branch")
        ratio = -2.0 * (k[0] + k[1]) / denom
        if ratio <= 0.0:
            raise NoRootError("degenerate family ratio is nonpositive "
                              "(antiparallel branch rejected)")

    def jgap(s):
        r1, r2 = s, ratio * s
        cons = conserved_quantities(model, omega, r1, r2, check=False)
        return cons["J0"] - J

    grid = np.geomspace(bracket[0], bracket[1], SCAN_POINTS)
    vals = [jgap(s) for s in grid]
    roots = _scan_roots(jgap, grid, vals)
    if not roots:
        raise NoRootError(f"no radius matches J = {J} in {bracket}",
                          bracket=bracket)
    s = roots[0]
    return s, ratio * s


def _solve_equal(model: FokkerModel, omega: float,
                 bracket) -> tuple[list[float], bool]:
    grid = np.geomspace(bracket[0], bracket[1], SCAN_POINTS)
    vals, scales = [], []
    for r in grid:
        g, k = _equal_gap(model, omega, r)
        vals.append(g)
        scales.append(_k_scale(k))
    vals = np.asarray(vals)
    scales = np.asarray(scales)
    if _is_flat(vals, scales):
        return [], True

    def f(r):
        return _equal_gap(model, omega, r)[0]

    roots = _scan_roots(f, grid, vals)
    # drop the static branch k0 = 0
    kept = []
    for r in roots:
        _, k, _ = effective_statics(model, omega, r, r)
        if abs(k[0]) > 1e-12 * _k_scale(k):
            kept.append(r)
    return kept, False


def _solve_unequal(model: FokkerModel, omega: float,
                   bracket) -> tuple[list[tuple[float, float]], bool]:
    def r2_of_r1(r1):
        def g2(r2):
            _, k, _ = effective_statics(model, omega, r1, r2)
            return _pair_residuals(k, r1, r2)[1]

        grid2 = np.geomspace(bracket[0], bracket[1], 32)
        vals2 = [g2(r) for r in grid2]
        roots2 = _scan_roots(g2, grid2, vals2)
        return roots2[0] if roots2 else None

    def outer(r1):
        r2 = r2_of_r1(r1)
        if r2 is None:
            return math.nan
        _, k, _ = effective_statics(model, omega, r1, r2)
        return _pair_residuals(k, r1, r2)[0]

    grid = np.geomspace(bracket[0], bracket[1], SCAN_POINTS)
    vals, scales = [], []
    for r1 in grid:
        v = outer(r1)
        vals.append(v)
        _, k, _ = effective_statics(model, omega, r1, r1)
        scales.append(_k_scale(k) * max(r1, 1e-300))
    finite = [v for v in vals if math.isfinite(v)]
    if finite and _is_flat(np.asarray(finite),
                           np.asarray(scales)[:len(finite)]):
        return [], True
    roots1 = _scan_roots(outer, grid, vals)
    pairs = []
    for r1 in roots1:
        r2 = r2_of_r1(r1)
        if r2 is None:
            continue
        _, k, _ = effective_statics(model, omega, r1, r2)
        if abs(k[0]) > 1e-12 * _k_scale(k):
            pairs.append((r1, r2))
    return pairs, False


def _assemble(model: FokkerModel, omega: float, r1: float, r2: float,
              degenerate: bool = False, ambiguous: bool = False,
              branch_radii=()) -> CircularOrbit:
    sigma, k, L0 = effective_statics(model, omega, r1, r2)
    cons = conserved_quantities(model, omega, r1, r2)
    g1, g2 = _pair_residuals(k, r1, r2)
    scale = _k_scale(k) * max(r1, r2)
    det = 4.0 * (k[0] + k[1]) * (k[0] + k[2]) - (2.0 * k[0] - k[3]) ** 2
    det_scale = max(abs(4.0 * (k[0] + k[1]) * (k[0] + k[2])),
                    abs((2.0 * k[0] - k[3]) ** 2), 1e-300)
    residual = max(abs(g1) / scale, abs(g2) / scale, abs(det) / det_scale)
    return CircularOrbit(
        Omega=omega, R1=r1, R2=r2, sigma=sigma, k=k,
        L0=L0, Etilde0=cons["Etilde0"], E0=cons["E0"], J0=cons["J0"],
        J0_check=cons["J0_check"], J0_discrepancy=cons["discrepancy"],
        residual=residual, degenerate=degenerate, ambiguous=ambiguous,
        branch_radii=tuple(branch_radii),
    )


def solve_orbit_branches(model: FokkerModel, omega: float, J: float = None,
                         bracket=DEFAULT_BRACKET) -> list[CircularOrbit]:
    """All equilibrium branches at `omega` (see solve_orbit)."""
    if omega <= 0:
        raise ValueError("Omega must be positive")
    if model.equal_particles:
        roots, flat = _solve_equal(model, omega, bracket)
        pairs = [(r, r) for r in roots]
    else:
        pairs, flat = _solve_unequal(model, omega, bracket)

    if flat:
        # radius-independent orbit equation: family at one admissible Omega
        omega_star = degenerate_frequency(model)
        if abs(omega - omega_star) > 1e-8 * omega_star:
            raise NoRootError(
                f"orbit equation is radius-independent; orbits exist only "
                f"at Omega = {omega_star!r}", bracket=bracket)
        if J is None:
            raise DegenerateOrbitError(
                "one-parameter orbit family: supply J to fix the radius",
                omega=omega_star)
        r1, r2 = _degenerate_orbit(model, omega_star, J, bracket)
        return [_assemble(model, omega_star, r1, r2, degenerate=True)]

    if not pairs:
        raise NoRootError(
            f"no equilibrium radius in [{bracket[0]:g}, {bracket[1]:g}] "
            f"at Omega = {omega:g}", bracket=bracket)
    ambiguous = len(pairs) > 1
    radii = tuple(p[0] + p[1] for p in pairs)
    return [_assemble(model, omega, r1, r2, ambiguous=ambiguous,
                      branch_radii=radii) for (r1, r2) in pairs]


def solve_orbit(model: FokkerModel, omega: float, J: float = None,
                bracket=DEFAULT_BRACKET) -> CircularOrbit:
    """Circular orbit at angular velocity `omega`.

    Returns the smallest-separation branch; when several branches exist the
    result is flagged ambiguous and carries all separations.  For
    radius-degenerate families (orbit equation independent of R) the radius
    is fixed by the supplied angular momentum J.
    """
    branches = solve_orbit_branches(model, omega, J=J, bracket=bracket)
    return min(branches, key=lambda orb: orb.separation)


# ---------------------------------------------------------------------------
# conserved quantities

def conserved_quantities(model: FokkerModel, omega: float, r1: float,
                         r2: float, check: bool = True) -> dict:
    """L0, Etilde0, E0 and both angular-momentum routes at (Omega, R1, R2).

    Route (i) is the explicit lag-weighted kernel integral; route (ii) is a
    central difference of L0 in Omega at fixed radii.  The total linear
    momentum vanishes identically on static configurations and is not
    tabulated.  With check=True a route discrepancy beyond 1e-5 relative
    raises ModelConsistencyError.
    """
    data = _static_integrals(model, omega, r1, r2)
    g1 = omega ** 2 * r1 * r1
    g2 = omega ** 2 * r2 * r2
    L0 = float(model.one1.value(g1)) + float(model.one2.value(g2)) + data["Lam0"]
    j_kernel = (2.0 * omega * (r1 * r1 * (float(model.one1.d1(g1)) + data["I_g1"])
                               + r2 * r2 * (float(model.one2.d1(g2)) + data["I_g2"]))
                - r1 * r2 * data["I_jbrace"])

    h = 1e-4 * omega
    tol = 1e-12 if not model.is_local else 1e-10

    def l0_at(w):
        d = _static_integrals(model, w, r1, r2, abs_tol=tol)
        gg1, gg2 = w * w * r1 * r1, w * w * r2 * r2
        return (float(model.one1.value(gg1)) + float(model.one2.value(gg2))
                + d["Lam0"])

    j_check = (l0_at(omega + h) - l0_at(omega - h)) / (2.0 * h)
    scale = max(abs(j_kernel), abs(j_check), 1.0)
    disc = abs(j_kernel - j_check) / scale
    if check and disc > J_ROUTE_TOL:
        raise ModelConsistencyError(
            f"angular-momentum routes disagree: {j_kernel!r} vs {j_check!r} "
            f"(relative {disc:.2e})")
    etilde = -L0
    energy = etilde + omega * j_kernel
    return {"L0": L0, "Etilde0": etilde, "E0": energy, "J0": j_kernel,
            "J0_check": j_check, "discrepancy": disc}


# ---------------------------------------------------------------------------
# Galilei reduction oracle path

def power_law_relative_jet(a: float, nu: float):
    """Jet of the relative-motion potential F(alpha) = -a alpha^(nu/2)."""

    def jet(alpha, beta, gamma):
        val = -a * alpha ** (nu / 2.0)
        d_alpha = -a * (nu / 2.0) * alpha ** (nu / 2.0 - 1.0)
        return val, (d_alpha, 0.0, 0.0)

    return jet


def galilei_orbit(mu: float, f_jet, omega: float, masses=None,
                  bracket=DEFAULT_BRACKET) -> dict:
    """Relative-motion circular orbit of the time-local two-particle system.

    Solves mu Omega^2 + 2 [F_alpha + Omega^2 F_gamma] = 0 for the separation
    R, then splits R1 = m2 R / M, R2 = m1 R / M when masses are given.
    Serves as the independent oracle for LOCAL models; Omega = 0 statics are
    excluded.
    """
    if mu <= 0:
        raise ValueError("reduced mass must be positive")
    if omega <= 0:
        raise ValueError("Omega must be positive (static branch excluded)")

    def gap(r):
        _, (fa, _fb, fg) = f_jet(r * r, 0.0, omega ** 2 * r * r)
        return mu * omega ** 2 + 2.0 * (fa + omega ** 2 * fg)

    grid = np.geomspace(bracket[0], bracket[1], SCAN_POINTS)
    vals = [gap(r) for r in grid]
    roots = _scan_roots(gap, grid, vals)
    if not roots:
        raise NoRootError(f"no separation solves the orbit equation at "
                          f"Omega = {omega:g}", bracket=bracket)
    r = roots[0]
    alpha, gamma = r * r, omega ** 2 * r * r
    f0, (fa, fb, fg) = f_jet(alpha, 0.0, gamma)
    j0 = omega * r * r * (mu + 2.0 * fg)
    etilde = -0.5 * mu * r * r * omega ** 2 - f0
    energy = etilde + omega * j0
    out = {"R": r, "J0": j0, "Etilde0": etilde, "E0": energy, "F0": f0}
    if masses is not None:
        m1, m2 = masses
        total = m1 + m2
        out["R1"] = m2 * r / total
        out["R2"] = m1 * r / total
    return out


# ---------------------------------------------------------------------------
# scans

def orbit_scan_rows(model: FokkerModel, omegas, J: float = None) -> list[dict]:
    """One row per Omega for the CSV/JSON scan; failed rows carry NaNs."""
    rows = []
    for w in omegas:
        row = {"omega": float(w), "R1": math.nan, "R2": math.nan,
               "L0": math.nan, "Etilde0": math.nan, "E0": math.nan,
               "J0": math.nan, "J0_check": math.nan, "residual": math.nan}
        try:
            orb = solve_orbit(model, float(w), J=J)
        except (OrbitError, QuadratureError):
            rows.append(row)
            continue
        row.update({"R1": orb.R1, "R2": orb.R2, "L0": orb.L0,
                    "Etilde0": orb.Etilde0, "E0": orb.E0, "J0": orb.J0,
                    "J0_check": orb.J0_check, "residual": orb.residual})
        rows.append(row)
    return rows

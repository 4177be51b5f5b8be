"""Rotating-frame geometry shared by the orbit and perturbation machinery.

Conventions.  The rotation axis is the third coordinate axis, n = e3; the
frame rotates with angular velocity Omega about it.  A two-particle phase
point is packed into a 12-vector

    w = (z1, dz1, z2, dz2)

with three components per block (positions and velocities of particles 1
and 2 in the co-rotating frame).  On the reference circular configuration
z1 = R1 e1, z2 = -R2 e1 and both velocities vanish.

The six invariant arguments of the interaction kernel

    alpha   = x^2            x = x1(t1) - x2(t2)
    beta_a  = x . xdot_a
    gamma_a = xdot_a^2
    delta   = xdot_1 . xdot_2

are, for fixed time lag theta = t1 - t2, *exact* quadratic forms in w with
coefficients built from the lag rotation S(theta) and the angular-velocity
matrix W (W v = Omega n x v).  Each form is represented by a symmetric
12 x 12 matrix Q so that value, gradient and Hessian at any w are

    X(w) = w.Q.w / 2,    grad X = Q w,    hess X = Q  (w-independent).

That makes every first/second derivative used downstream analytic; a
finite-difference audit of the representation is provided as a cross-check.
"""

from __future__ import annotations

import numpy as np

# argument indexing used throughout the package
ALPHA, BETA1, BETA2, GAMMA1, GAMMA2, DELTA = range(6)
ARG_NAMES = ("alpha", "beta1", "beta2", "gamma1", "gamma2", "delta")

# block slices of the 12-vector
Z1, V1, Z2, V2 = (slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12))

EPS1 = np.array([1.0, 0.0, 0.0])
EPS2 = np.array([0.0, 1.0, 0.0])
EPS3 = np.array([0.0, 0.0, 1.0])

LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k, _s in [(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0),
                       (1, 0, 2, -1.0), (2, 1, 0, -1.0), (0, 2, 1, -1.0)]:
    LEVI_CIVITA[_i, _j, _k] = _s


def spin_matrix(omega: float) -> np.ndarray:
    """Matrix W with W v = Omega e3 x v."""
    return np.array([[0.0, -omega, 0.0],
                     [omega, 0.0, 0.0],
                     [0.0, 0.0, 0.0]])


def rotation(angle) -> np.ndarray:
    """Rotation(s) about e3 by `angle`; vectorized, shape (..., 3, 3)."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def orbit_vector(r1: float, r2: float) -> np.ndarray:
    """Phase-space 12-vector of the antiparallel circular configuration."""
    w = np.zeros(12)
    w[0] = r1
    w[6] = -r2
    return w


def static_args(omega: float, r1: float, r2: float, theta) -> np.ndarray:
    """Kernel arguments along the circular configuration, shape (6, N).

    Closed trigonometric forms on z1 = R1 e1, z2 = -R2 e1, zero velocities:
    the mixed products reduce to sigma3 = z1.z2 = -R1 R2.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    c = np.cos(omega * theta)
    s = np.sin(omega * theta)
    rr = r1 * r2
    out = np.empty((6, theta.size))
    out[ALPHA] = r1 * r1 + r2 * r2 + 2.0 * rr * c
    out[BETA1] = -omega * rr * s
    out[BETA2] = -omega * rr * s
    out[GAMMA1] = (omega * r1) ** 2
    out[GAMMA2] = (omega * r2) ** 2
    out[DELTA] = -(omega ** 2) * rr * c
    return out


def static_args_omega_derivative(omega: float, r1: float, r2: float,
                                 theta) -> np.ndarray:
    """d(static args)/dOmega at fixed radii and theta, shape (6, N)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    c = np.cos(omega * theta)
    s = np.sin(omega * theta)
    rr = r1 * r2
    out = np.empty((6, theta.size))
    out[ALPHA] = -2.0 * rr * theta * s
    out[BETA1] = -rr * (s + omega * theta * c)
    out[BETA2] = out[BETA1]
    out[GAMMA1] = 2.0 * omega * r1 * r1
    out[GAMMA2] = 2.0 * omega * r2 * r2
    out[DELTA] = -rr * (2.0 * omega * c - omega ** 2 * theta * s)
    return out


def arg_quadratic_forms(omega: float, theta) -> np.ndarray:
    """Symmetric matrices Q of the six argument forms, shape (6, N, 12, 12)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    n = theta.size
    S = rotation(omega * theta)              # (N, 3, 3)
    St = np.swapaxes(S, -1, -2)
    W = spin_matrix(omega)
    Wt = W.T
    I3 = np.eye(3)

    Q = np.zeros((6, n, 12, 12))

    rz1, rv1 = np.arange(0, 3), np.arange(3, 6)
    rz2, rv2 = np.arange(6, 9), np.arange(9, 12)

    def add(q, r, c, m):
        q[np.ix_(np.arange(n), r, c)] += m
        q[np.ix_(np.arange(n), c, r)] += np.swapaxes(
            np.broadcast_to(m, (n, 3, 3)), -1, -2)

    def add_diag(q, r, m):
        # same-block symmetric contribution (m must already be symmetric)
        q[np.ix_(np.arange(n), r, r)] += m

    # alpha = |S z1 - z2|^2
    add_diag(Q[ALPHA], rz1, 2.0 * I3)
    add_diag(Q[ALPHA], rz2, 2.0 * I3)
    add(Q[ALPHA], rz1, rz2, -2.0 * St)

    # beta1 = (z1 - S^T z2).(dz1 + W z1)
    add(Q[BETA1], rz1, rv1, I3)
    add(Q[BETA1], rz2, rv1, -S)
    add(Q[BETA1], rz2, rz1, -S @ W)

    # beta2 = (S z1 - z2).(dz2 + W z2)
    add(Q[BETA2], rz1, rv2, St)
    add(Q[BETA2], rz1, rz2, St @ W)
    add(Q[BETA2], rz2, rv2, -I3)

    # gamma_a = |dz_a + W z_a|^2
    for q, rz, rv in ((Q[GAMMA1], rz1, rv1), (Q[GAMMA2], rz2, rv2)):
        add_diag(q, rv, 2.0 * I3)
        add(q, rv, rz, 2.0 * W)
        add_diag(q, rz, 2.0 * (Wt @ W))

    # delta = (S (dz1 + W z1)).(dz2 + W z2)
    add(Q[DELTA], rv1, rv2, St)
    add(Q[DELTA], rv1, rz2, St @ W)
    add(Q[DELTA], rz1, rv2, Wt @ St)
    add(Q[DELTA], rz1, rz2, Wt @ St @ W)

    return Q


def scalar_args_raw(omega: float, theta: float, w: np.ndarray) -> np.ndarray:
    """Direct evaluation of the six arguments at one (theta, w).

    Independent of the quadratic-form route; used by the analytic-jet audit.
    """
    S = rotation(np.asarray(omega * theta))
    W = spin_matrix(omega)
    z1, dz1, z2, dz2 = w[Z1], w[V1], w[Z2], w[V2]
    u1 = dz1 + W @ z1
    u2 = dz2 + W @ z2
    x = S @ z1 - z2
    return np.array([
        x @ x,
        (z1 - S.T @ z2) @ u1,
        x @ u2,
        u1 @ u1,
        u2 @ u2,
        (S @ u1) @ u2,
    ])


def audit_quadratic_forms(omega: float, theta_samples, rng,
                          tol: float = 1e-9) -> float:
    """Verify Q-form values/gradients against direct evaluation.

    The arguments are exactly quadratic, so agreement is limited only by
    rounding; `tol` is generous.  Returns the worst relative residual and
    raises if it exceeds `tol`.
    """
    worst = 0.0
    for theta in np.atleast_1d(theta_samples):
        Q = arg_quadratic_forms(omega, theta)[:, 0]
        w = rng.normal(size=12)
        h = rng.normal(size=12)
        ref = scalar_args_raw(omega, float(theta), w)
        ref_h = scalar_args_raw(omega, float(theta), w + h)
        for x in range(6):
            scale = max(1.0, abs(ref[x]), abs(ref_h[x]))
            val = 0.5 * w @ Q[x] @ w
            # quadratic Taylor step is exact: f(w+h) = f + g.h + h.Q.h/2
            step = val + (Q[x] @ w) @ h + 0.5 * h @ Q[x] @ h
            worst = max(worst, abs(val - ref[x]) / scale,
                        abs(step - ref_h[x]) / scale)
    if worst > tol:
        raise RuntimeError(
            f"scalar-argument jet audit failed: residual {worst:.3e} > {tol:.1e}")
    return worst

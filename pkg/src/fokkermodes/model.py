"""Model layer: one-particle terms, interaction kernels, built-in families.

A model consists of two one-particle terms L_a(gamma_a) and an interaction
kernel.  Kernels come in two flavours:

* LOCAL    Phi(theta, args) = delta(theta) * Lam(args).  Represented by the
           jet of Lam in the six invariant arguments; every downstream
           theta-integral collapses algebraically, no delta is ever sampled.
* NONLOCAL smooth in theta with a declared decay envelope; represented by
           the full seven-argument jet (theta plus six invariants).

Built-ins: the attractive power-law family Lam = -a alpha^(nu/2) with
nonrelativistic kinetic terms, and its gaussian-smeared deformation
Phi_tau = w_tau(theta) Lam(args) where w_tau is the unit-mass normal bump
of width tau.  The smeared family tends to the local one as tau -> 0, which
is what the physical-mode selection rule exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .frames import ALPHA, BETA1, BETA2, GAMMA1, GAMMA2, DELTA

__all__ = [
    "FokkerModel", "OneFokkerian", "LocalKernel", "SmearedKernel",
    "PowerLawLambda", "KernelJet", "make_power_law", "make_smeared",
    "kernel_jet", "check_symmetry", "model_from_descriptor",
    "model_to_descriptor", "SingularInputError", "ModelError",
]


class ModelError(ValueError):
    """Invalid model parameters or descriptor."""


class SingularInputError(ValueError):
    """Kernel evaluated outside its domain (e.g. alpha <= 0 with nu < 0)."""


@dataclass(frozen=True)
class OneFokkerian:
    """One-particle term L(gamma) with first and second derivatives."""

    value: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]


def nonrelativistic(mass: float) -> OneFokkerian:
    """L(gamma) = (m/2) gamma."""
    return OneFokkerian(
        value=lambda g, m=mass: 0.5 * m * np.asarray(g, dtype=float),
        d1=lambda g, m=mass: np.full_like(np.asarray(g, dtype=float), 0.5 * m),
        d2=lambda g: np.zeros_like(np.asarray(g, dtype=float)),
    )


@dataclass
class KernelJet:
    """Kernel value with all first and second partials at sample points.

    `first` has 7 rows ordered (theta, alpha, beta1, beta2, gamma1, gamma2,
    delta); `second` is the symmetric 7x7 of second partials.  For a LOCAL
    kernel the jet is that of Lam (theta row identically zero) and `local`
    tells callers to collapse theta-integrals instead of quadrature.
    """

    value: np.ndarray          # (N,)
    first: np.ndarray          # (7, N)
    second: np.ndarray         # (7, 7, N)
    local: bool


class PowerLawLambda:
    """Local interaction Lam(args) = -a alpha^(nu/2)."""

    def __init__(self, a: float, nu: float):
        self.a = float(a)
        self.nu = float(nu)
        # exponents that keep derivatives regular at alpha = 0
        self.singular = not (self.nu / 2 == int(self.nu / 2) and self.nu >= 4)

    def _check_domain(self, alpha: np.ndarray) -> None:
        if self.nu == 2:
            return
        if np.any(alpha <= 0.0):
            raise SingularInputError(
                f"power-law kernel with nu={self.nu} needs alpha > 0")

    def jet(self, args: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, first (6,N) and second (6,6,N) partials of Lam."""
        alpha = np.atleast_1d(np.asarray(args[ALPHA], dtype=float))
        self._check_domain(alpha)
        n = alpha.size
        p = self.nu / 2.0
        val = -self.a * alpha ** p
        d1 = np.zeros((6, n))
        d2 = np.zeros((6, 6, n))
        d1[ALPHA] = -self.a * p * alpha ** (p - 1.0)
        d2[ALPHA, ALPHA] = -self.a * p * (p - 1.0) * alpha ** (p - 2.0)
        return val, d1, d2


@dataclass(frozen=True)
class LocalKernel:
    """Predictive kernel delta(theta) * Lam(args)."""

    lam: PowerLawLambda | object

    @property
    def is_local(self) -> bool:
        return True

    def lam_jet(self, args: np.ndarray):
        return self.lam.jet(args)


class GaussianBump:
    """Unit-mass even bump of width tau (normal pdf)."""

    def __init__(self, tau: float):
        self.tau = float(tau)
        self._norm = 1.0 / (self.tau * math.sqrt(2.0 * math.pi))

    def value(self, theta: np.ndarray) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        return self._norm * np.exp(-0.5 * (t / self.tau) ** 2)

    def d1(self, theta: np.ndarray) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        return -t / self.tau ** 2 * self.value(t)

    def d2(self, theta: np.ndarray) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        return (t ** 2 / self.tau ** 4 - 1.0 / self.tau ** 2) * self.value(t)

    def half_width(self, eps: float) -> float:
        # |w| and its first two derivatives fall below eps outside +-T;
        # polynomial prefactors are absorbed by the extra margin.
        x = math.sqrt(2.0 * max(math.log(self._norm / eps), 1.0))
        return self.tau * (x + 4.0)


@dataclass(frozen=True)
class SmearedKernel:
    """Nonlocal kernel w_tau(theta) * Lam(args)."""

    lam: PowerLawLambda | object
    bump: GaussianBump

    @property
    def is_local(self) -> bool:
        return False

    def jet(self, theta: np.ndarray, args: np.ndarray) -> KernelJet:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        val, d1, d2 = self.lam.jet(args)
        w = self.bump.value(theta)
        wp = self.bump.d1(theta)
        wpp = self.bump.d2(theta)
        first = np.zeros((7, theta.size))
        second = np.zeros((7, 7, theta.size))
        first[0] = wp * val
        first[1:] = w * d1
        second[0, 0] = wpp * val
        second[0, 1:] = wp * d1
        second[1:, 0] = wp * d1
        second[1:, 1:] = w * d2
        return KernelJet(w * val, first, second, local=False)

    def decay_window(self, eps: float) -> float:
        return self.bump.half_width(eps)


@dataclass(frozen=True, eq=False)
class FokkerModel:
    """Immutable two-particle model; safe to share across threads."""

    m1: float
    m2: float
    one1: OneFokkerian
    one2: OneFokkerian
    kernel: LocalKernel | SmearedKernel
    tau: float
    equal_particles: bool
    descriptor: dict = field(default_factory=dict)
    base: "FokkerModel | None" = None   # local predecessor of a smeared model

    @property
    def is_local(self) -> bool:
        return self.kernel.is_local

    @property
    def total_mass(self) -> float:
        return self.m1 + self.m2

    @property
    def reduced_mass(self) -> float:
        return self.m1 * self.m2 / (self.m1 + self.m2)

    def decay_window(self, eps: float = 1e-12) -> float:
        if self.is_local:
            return 0.0
        return self.kernel.decay_window(eps)


def make_power_law(m1: float, m2: float, a: float, nu: float) -> FokkerModel:
    """Attractive power-law model: L_a = (m_a/2) gamma_a, Lam = -a alpha^(nu/2).

    Requires a*nu > 0 (otherwise no circular orbit exists) and nu != 0.
    """
    if m1 <= 0 or m2 <= 0:
        raise ModelError("masses must be positive")
    if nu == 0:
        raise ModelError("nu = 0 gives a constant potential")
    if a * nu <= 0:
        raise ModelError(f"a*nu = {a * nu} <= 0: interaction is not attractive")
    return FokkerModel(
        m1=float(m1), m2=float(m2),
        one1=nonrelativistic(m1), one2=nonrelativistic(m2),
        kernel=LocalKernel(PowerLawLambda(a, nu)),
        tau=0.0,
        equal_particles=(m1 == m2),
        descriptor={"type": "power_law", "m1": float(m1), "m2": float(m2),
                    "a": float(a), "nu": float(nu)},
    )


def make_smeared(base: FokkerModel, tau: float,
                 profile: str = "gaussian") -> FokkerModel:
    """Replace delta(theta) of a LOCAL model by a unit-mass bump of width tau."""
    if not base.is_local:
        raise ModelError("make_smeared needs a LOCAL base model")
    if tau <= 0:
        raise ModelError("tau must be positive")
    if profile != "gaussian":
        raise ModelError(f"unknown smearing profile {profile!r}")
    desc = dict(base.descriptor)
    desc["type"] = "smeared_power_law"
    desc["tau"] = float(tau)
    desc["profile"] = profile
    return FokkerModel(
        m1=base.m1, m2=base.m2, one1=base.one1, one2=base.one2,
        kernel=SmearedKernel(base.kernel.lam, GaussianBump(tau)),
        tau=float(tau),
        equal_particles=base.equal_particles,
        descriptor=desc,
        base=base,
    )


def kernel_jet(model: FokkerModel, theta, args) -> KernelJet:
    """Uniform derivative access to the kernel at (theta, six args).

    For LOCAL models the returned jet carries the Lam derivatives (theta row
    zero) and local=True so callers collapse theta-integrals.
    """
    args = np.asarray(args, dtype=float)
    if args.ndim == 1:
        args = args[:, None]
    if model.is_local:
        val, d1, d2 = model.kernel.lam_jet(args)
        n = np.atleast_1d(val).size
        first = np.zeros((7, n))
        second = np.zeros((7, 7, n))
        first[1:] = d1
        second[1:, 1:] = d2
        return KernelJet(np.atleast_1d(val), first, second, local=True)
    return model.kernel.jet(theta, args)


def _tr_image(theta, args):
    """Time-reversed evaluation point: theta -> -theta, beta_a -> -beta_a."""
    out = args.copy()
    out[BETA1] = -args[BETA1]
    out[BETA2] = -args[BETA2]
    return -theta, out


def _exchange_image(theta, args):
    """Particle-exchange point: theta -> -theta, 1 <-> 2 in beta and gamma."""
    out = args.copy()
    out[[BETA1, BETA2]] = args[[BETA2, BETA1]]
    out[[GAMMA1, GAMMA2]] = args[[GAMMA2, GAMMA1]]
    return -theta, out


def check_symmetry(model: FokkerModel, samples: int = 100,
                   seed: int = 0) -> dict:
    """Sampled residuals of the time-reversal and exchange identities.

    Deterministic for a given seed; reports maxima, never rejects.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-2.0, 2.0, size=samples)
    args = np.empty((6, samples))
    args[ALPHA] = rng.uniform(0.3, 4.0, size=samples)
    args[BETA1] = rng.normal(size=samples)
    args[BETA2] = rng.normal(size=samples)
    args[GAMMA1] = rng.uniform(0.1, 3.0, size=samples)
    args[GAMMA2] = rng.uniform(0.1, 3.0, size=samples)
    args[DELTA] = rng.normal(size=samples)

    def values(th, ar):
        return np.atleast_1d(kernel_jet(model, th, ar).value)

    base = values(theta, args)
    scale = max(float(np.max(np.abs(base))), 1e-300)
    th_r, ar_r = _tr_image(theta, args)
    rev = float(np.max(np.abs(values(th_r, ar_r) - base)))
    report = {"time_reversal": rev / scale, "exchange": None, "scale": scale}
    if model.equal_particles:
        th_x, ar_x = _exchange_image(theta, args)
        report["exchange"] = float(np.max(np.abs(values(th_x, ar_x) - base))) / scale
    return report


def audit_kernel_jet(model: FokkerModel, samples: int = 100, seed: int = 1,
                     rel_tol: float = 1e-6) -> float:
    """Central-difference audit of the analytic kernel jet.

    Checks every first partial at `samples` random points; step
    h = eps^(1/3) max(1, |x|) per coordinate.  Returns the worst relative
    error and raises if it exceeds `rel_tol`.
    """
    rng = np.random.default_rng(seed)
    hscale = np.finfo(float).eps ** (1.0 / 3.0)
    worst = 0.0
    for _ in range(samples):
        theta = float(rng.uniform(-1.5, 1.5))
        args = np.array([
            rng.uniform(0.5, 3.0), rng.normal(), rng.normal(),
            rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0), rng.normal(),
        ])
        jet = kernel_jet(model, theta, args)
        scale = max(1.0, float(np.abs(jet.value[0])))
        for k in range(7):
            if model.is_local and k == 0:
                continue
            if k == 0:
                h = hscale * max(1.0, abs(theta))
                vp = kernel_jet(model, theta + h, args).value[0]
                vm = kernel_jet(model, theta - h, args).value[0]
            else:
                h = hscale * max(1.0, abs(args[k - 1]))
                ap, am = args.copy(), args.copy()
                ap[k - 1] += h
                am[k - 1] -= h
                vp = kernel_jet(model, theta, ap).value[0]
                vm = kernel_jet(model, theta, am).value[0]
            fd = (vp - vm) / (2.0 * h)
            err = abs(fd - jet.first[k, 0]) / max(scale, abs(fd))
            worst = max(worst, err)
    if worst > rel_tol:
        raise RuntimeError(
            f"kernel jet audit failed: residual {worst:.3e} > {rel_tol:.1e}")
    return worst


_DESCRIPTOR_FIELDS = {
    "power_law": {"type", "m1", "m2", "a", "nu"},
    "smeared_power_law": {"type", "m1", "m2", "a", "nu", "tau", "profile"},
}


def model_from_descriptor(desc: dict) -> FokkerModel:
    """Build a model from its JSON descriptor; unknown fields are rejected."""
    if not isinstance(desc, dict) or "type" not in desc:
        raise ModelError("descriptor must be an object with a 'type' field")
    kind = desc["type"]
    if kind not in _DESCRIPTOR_FIELDS:
        raise ModelError(f"unknown model type {kind!r}")
    extra = set(desc) - _DESCRIPTOR_FIELDS[kind]
    if extra:
        raise ModelError(f"unknown descriptor fields: {sorted(extra)}")
    missing = {"m1", "m2", "a", "nu"} - set(desc)
    if missing:
        raise ModelError(f"missing descriptor fields: {sorted(missing)}")
    for key in set(desc) - {"type", "profile"}:
        if not isinstance(desc[key], (int, float)) or isinstance(desc[key], bool):
            raise ModelError(f"field {key!r} must be a number")
    base = make_power_law(desc["m1"], desc["m2"], desc["a"], desc["nu"])
    if kind == "power_law":
        return base
    if "tau" not in desc:
        raise ModelError("smeared_power_law descriptor needs 'tau'")
    return make_smeared(base, desc["tau"], desc.get("profile", "gaussian"))


def model_to_descriptor(model: FokkerModel) -> dict:
    if not model.descriptor:
        raise ModelError("model was not built from a descriptor")
    return dict(model.descriptor)

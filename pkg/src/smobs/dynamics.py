"""Euler-Lagrange plant models and closed-loop simulation primitives.

The plant is the usual rigid-body form

    M(q) qdd + N(q, qd) + G(q) + F(qd) = tau + tau_d

with inertia matrix M, Coriolis/centrifugal vector N, gravity vector G and
viscous friction F = D qd.  Two concrete models are provided: a planar
two-link arm with gravity (the default desk-scale plant) and a synthetic
n-DoF model whose inertia matrix is a constant SPD matrix plus a bounded
configuration-dependent perturbation, used for 7-DoF runs.

The simulator integrates the true plant with fixed-step RK4 and may invert
M freely; the observer side of the package never does.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


def as_joint_vector(x, n: int) -> np.ndarray:
    """Validate and return a finite joint-space vector of length n."""
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"expected joint vector of length {n}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("joint vector contains non-finite entries")
    return v


class RobotModel:
    """Base class for evaluable Euler-Lagrange plants.

    Subclasses implement mass_matrix, coriolis, gravity, friction and
    potential, and declare `param_names` so that identified copies with
    multiplicative parameter errors can be built.
    """

    n: int
    param_names: tuple[str, ...] = ()

    # workspace box used for sampled bounds (per-joint symmetric)
    workspace_halfwidth: float = np.pi

    def mass_matrix(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def coriolis(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gravity(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def friction(self, qd: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def potential(self, q: np.ndarray) -> float:
        raise NotImplementedError

    def params(self) -> dict[str, float]:
        raise NotImplementedError

    def with_params(self, **updates) -> "RobotModel":
        raise NotImplementedError

    def with_factors(self, factors: dict[str, float]) -> "RobotModel":
        """Return a copy with each named parameter scaled multiplicatively."""
        base = self.params()
        unknown = set(factors) - set(base)
        if unknown:
            raise ValueError(f"unknown parameter names: {sorted(unknown)}")
        return self.with_params(**{k: base[k] * factors.get(k, 1.0) for k in base})

    def total_energy(self, q: np.ndarray, qd: np.ndarray) -> float:
        """Kinetic plus potential energy (friction excluded)."""
        return 0.5 * float(qd @ self.mass_matrix(q) @ qd) + self.potential(q)

    def spectral_bound(self, n_samples: int = 500) -> float:
        """Sampled upper bound on the spectral norm of M(q) over the workspace.

        Deterministic: uses a fixed-seed sampler. Cached after first call.
        """
        if getattr(self, "_sigma_m", None) is None:
            rng = np.random.default_rng(0)
            w = self.workspace_halfwidth
            sup = 0.0
            for _ in range(n_samples):
                q = rng.uniform(-w, w, self.n)
                sup = max(sup, float(np.linalg.norm(self.mass_matrix(q), 2)))
            self._sigma_m = 1.05 * sup
        return self._sigma_m


class TwoLinkArm(RobotModel):
    """Planar two-link arm with point masses at the link tips.

    Angles are measured from the horizontal x-axis (q2 relative to link 1),
    so gravity torque is maximal at the stretched-out pose q = 0. Viscous
    friction F = diag(d1, d2) qd.
    """

    param_names = ("m1", "m2", "l1", "l2", "g", "d1", "d2")

    def __init__(self, m1=1.2, m2=0.8, l1=0.35, l2=0.25, g=9.81, d1=0.4, d2=0.25):
        self.n = 2
        self.m1, self.m2 = float(m1), float(m2)
        self.l1, self.l2 = float(l1), float(l2)
        self.g = float(g)
        self.d1, self.d2 = float(d1), float(d2)
        self._sigma_m = None

    def params(self):
        return {k: getattr(self, k) for k in self.param_names}

    def with_params(self, **updates):
        p = self.params()
        p.update(updates)
        return TwoLinkArm(**p)

    def mass_matrix(self, q):
        c2 = np.cos(q[1])
        a = self.m2 * self.l2**2
        b = self.m2 * self.l1 * self.l2 * c2
        m11 = (self.m1 + self.m2) * self.l1**2 + a + 2.0 * b
        m12 = a + b
        return np.array([[m11, m12], [m12, a]])

    def coriolis(self, q, qd):
        h = self.m2 * self.l1 * self.l2 * np.sin(q[1])
        return np.array([-h * (2.0 * qd[0] * qd[1] + qd[1] ** 2), h * qd[0] ** 2])

    def gravity(self, q):
        c1 = np.cos(q[0])
        c12 = np.cos(q[0] + q[1])
        return np.array(
            [
                (self.m1 + self.m2) * self.g * self.l1 * c1 + self.m2 * self.g * self.l2 * c12,
                self.m2 * self.g * self.l2 * c12,
            ]
        )

    def friction(self, qd):
        return np.array([self.d1 * qd[0], self.d2 * qd[1]])

    def potential(self, q):
        y1 = self.l1 * np.sin(q[0])
        y2 = y1 + self.l2 * np.sin(q[0] + q[1])
        return self.g * (self.m1 * y1 + self.m2 * y2)


class SyntheticArm(RobotModel):
    """Abstract n-DoF Euler-Lagrange plant with synthetic dynamics.

    M(q) = M0 + diag(a_i sin(q_i)) with M0 a constant SPD matrix
    (exponentially banded), which yields the consistent Coriolis vector
    N_i = a_i cos(q_i) qd_i^2 / 2 via the Christoffel symbols.  Gravity-like
    torque G_i = b_i sin(q_i) derives from V = sum b_i (1 - cos q_i).
    Energy is exactly conserved by the unforced frictionless dynamics, which
    the tests exploit.
    """

    param_names = ("inertia", "modulation", "gravity", "friction")

    def __init__(self, n=7, inertia=2.0, modulation=0.3, gravity=5.0, friction=0.8):
        self.n = int(n)
        self.inertia = float(inertia)
        self.modulation = float(modulation)
        self.gravity_coeff = float(gravity)
        self.friction_coeff = float(friction)
        idx = np.arange(self.n)
        self._m0 = self.inertia * 0.3 ** np.abs(idx[:, None] - idx[None, :])
        self._a = self.modulation * (1.0 + idx / (2.0 * self.n))
        if np.linalg.eigvalsh(self._m0)[0] <= np.max(np.abs(self._a)):
            raise ValueError("inertia modulation too large for SPD M(q)")
        self._sigma_m = None

    def params(self):
        return {
            "inertia": self.inertia,
            "modulation": self.modulation,
            "gravity": self.gravity_coeff,
            "friction": self.friction_coeff,
        }

    def with_params(self, **updates):
        p = self.params()
        p.update(updates)
        return SyntheticArm(n=self.n, **p)

    def mass_matrix(self, q):
        return self._m0 + np.diag(self._a * np.sin(q))

    def coriolis(self, q, qd):
        return 0.5 * self._a * np.cos(q) * qd**2

    def gravity(self, q):
        return self.gravity_coeff * np.sin(q)

    def friction(self, qd):
        return self.friction_coeff * qd

    def potential(self, q):
        return self.gravity_coeff * float(np.sum(1.0 - np.cos(q)))


@dataclass
class IdentifiedModel:
    """A plant plus its imperfectly identified counterpart.

    `factors` maps parameter names to multiplicative errors (1.0 means the
    parameter was identified exactly). The hat-model is what the observer
    and linearization consume; the base model is ground truth.
    """

    base: RobotModel
    factors: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.hat = self.base.with_factors(self.factors) if self.factors else self.base

    @classmethod
    def uniform(cls, base: RobotModel, rel_error: float, rng: np.random.Generator):
        """Draw one factor per parameter uniformly from [1-e, 1+e]."""
        names = base.param_names
        draws = 1.0 + rel_error * rng.uniform(-1.0, 1.0, len(names))
        return cls(base, dict(zip(names, draws.tolist())))

    @property
    def n(self) -> int:
        return self.base.n

    def mass_matrix(self, q):
        return self.hat.mass_matrix(q)

    def coriolis(self, q, qd):
        return self.hat.coriolis(q, qd)

    def gravity(self, q):
        return self.hat.gravity(q)

    def friction(self, qd):
        return self.hat.friction(qd)

    def error_bounds(self, alpha1: float, eps_qdot: float, n_samples: int = 400,
                     margin: float = 1.15) -> dict[str, float]:
        """Sampled sups of the identification errors over the workspace.

        The Coriolis and friction errors are evaluated against a velocity
        estimate corrupted by up to eps_qdot, matching how the hat-model is
        driven at runtime. Deterministic (fixed-seed sampling).
        """
        rng = np.random.default_rng(1)
        w = self.base.workspace_halfwidth
        e_m = e_n = e_g = e_f = 0.0
        for _ in range(n_samples):
            q = rng.uniform(-w, w, self.n)
            qd = rng.uniform(-1.0, 1.0, self.n)
            qd = qd / max(np.linalg.norm(qd), 1e-12) * rng.uniform(0, alpha1)
            qbd = qd + rng.normal(0.0, eps_qdot / 3.0, self.n)
            e_m = max(e_m, np.linalg.norm(self.base.mass_matrix(q) - self.hat.mass_matrix(q), 2))
            e_n = max(e_n, np.linalg.norm(self.base.coriolis(q, qd) - self.hat.coriolis(q, qbd)))
            e_g = max(e_g, np.linalg.norm(self.base.gravity(q) - self.hat.gravity(q)))
            e_f = max(e_f, np.linalg.norm(self.base.friction(qd) - self.hat.friction(qbd)))
        return {
            "eps_m": margin * e_m,
            "eps_n": margin * e_n,
            "eps_g": margin * e_g,
            "eps_f": margin * e_f,
        }


@dataclass
class Bounds:
    """Declared a-priori bounds on plant signals and identification errors."""

    alpha1: float = 2.5       # rad/s, sup ||qd||
    alpha2: float = 5.0       # rad/s^2, sup ||qdd||
    alpha_tau: float = 10.0   # N*m, sup ||tau_d||
    eps_m: float = 0.0
    eps_n: float = 0.0
    eps_g: float = 0.0
    eps_f: float = 0.0
    eps_qdot: float = 0.0     # rad/s, velocity estimate error bound
    sigma_m: float = 1.0      # sup ||M(q)||_2

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha_tau", "eps_m", "eps_n",
                     "eps_g", "eps_f", "eps_qdot", "sigma_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


DISTURBANCE_KINDS = ("sinusoid", "square", "triangle", "contact_pulse", "zero")


@dataclass
class DisturbanceProfile:
    """Time-windowed external torque profile.

    All kinds return exactly zero outside [start, end] and are bounded by
    the amplitude vector tau_t at all times. The sinusoid is one half
    period over the window; the triangle rises linearly to tau_t at the
    window midpoint then falls back; contact_pulse is a smooth sin^2 bump.
    """

    kind: str = "sinusoid"
    tau_t: np.ndarray = field(default_factory=lambda: np.array([6.0, 4.8]))
    start: float = 12.5
    end: float = 14.5

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        self.tau_t = np.asarray(self.tau_t, dtype=float)
        if self.end <= self.start and self.kind != "zero":
            raise ValueError("end must exceed start")


def disturbance(profile: DisturbanceProfile, t: float) -> np.ndarray:
    """Evaluate the disturbance torque at time t."""
    tau_t = profile.tau_t
    if profile.kind == "zero" or t < profile.start or t > profile.end:
        return np.zeros_like(tau_t)
    span = profile.end - profile.start
    x = (t - profile.start) / span
    if profile.kind == "square":
        return tau_t.copy()
    if profile.kind == "sinusoid":
        return np.sin(np.pi * x) * tau_t
    if profile.kind == "triangle":
        return (2.0 * x if x <= 0.5 else 2.0 * (1.0 - x)) * tau_t
    # contact_pulse
    return np.sin(np.pi * x) ** 2 * tau_t


@dataclass
class SimState:
    """Plant state at a sample instant; q_prev backs position differentiation."""

    t: float
    q: np.ndarray
    qd: np.ndarray
    q_prev: np.ndarray | None = None


def eval_dynamics(model: RobotModel, q, qd):
    """Evaluate (M, N, G, F) at a state, validating inputs and outputs."""
    q = as_joint_vector(q, model.n)
    qd = as_joint_vector(qd, model.n)
    m = model.mass_matrix(q)
    n_vec = model.coriolis(q, qd)
    g_vec = model.gravity(q)
    f_vec = model.friction(qd)
    out = (m, n_vec, g_vec, f_vec)
    if not all(np.all(np.isfinite(o)) for o in out):
        raise ValueError("dynamics evaluation produced non-finite values")
    return out


def _accel(model, q, qd, tau, tau_d):
    rhs = tau + tau_d - model.coriolis(q, qd) - model.gravity(q) - model.friction(qd)
    return np.linalg.solve(model.mass_matrix(q), rhs)


def step(model: RobotModel, state: SimState, tau, tau_d, dt: float, substeps: int = 1) -> SimState:
    """Advance the plant by one sample period with fixed-step RK4.

    tau and tau_d are held constant over the step (zero-order hold). With
    substeps > 1 the plant integrates on a finer internal grid while the
    sample grid stays at dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    tau = as_joint_vector(tau, model.n)
    tau_d = as_joint_vector(tau_d, model.n)
    q, qd = state.q, state.qd
    h = dt / substeps
    for _ in range(substeps):
        k1q, k1v = qd, _accel(model, q, qd, tau, tau_d)
        k2q, k2v = qd + 0.5 * h * k1v, _accel(model, q + 0.5 * h * k1q, qd + 0.5 * h * k1v, tau, tau_d)
        k3q, k3v = qd + 0.5 * h * k2v, _accel(model, q + 0.5 * h * k2q, qd + 0.5 * h * k2v, tau, tau_d)
        k4q, k4v = qd + h * k3v, _accel(model, q + h * k3q, qd + h * k3v, tau, tau_d)
        q = q + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        qd = qd + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return SimState(t=state.t + dt, q=q, qd=qd, q_prev=state.q.copy())


def reference_trajectory(t: float, q_target: np.ndarray):
    """Periodic joint-space reference: (1 - cos(pi t / 4 - 1)) q_target.

    Active on 4 < t <= 92 and zero elsewhere, together with its analytic
    derivative inside the active window. Note the reference is deliberately
    discontinuous at t = 4 (the activation is a hard switch).
    """
    q_target = np.asarray(q_target, dtype=float)
    if 4.0 < t <= 92.0:
        phase = np.pi * t / 4.0 - 1.0
        q_r = (1.0 - np.cos(phase)) * q_target
        qd_r = (np.pi / 4.0) * np.sin(phase) * q_target
        return q_r, qd_r
    return np.zeros_like(q_target), np.zeros_like(q_target)


def pd_controller(q, qd, q_ref, qd_ref, kp, kd, paper_sign: bool = False):
    """PD tracking torque.

    Default is the stabilizing convention tau = -Kp (q - q_ref) - Kd (qd -
    qd_ref); paper_sign=True flips to the literal positive-feedback form
    some write-ups print. kp and kd may be scalars (scaled identity) or
    positive-definite matrices.
    """
    q = np.asarray(q, float)
    kp = np.atleast_1d(np.asarray(kp, float))
    kd = np.atleast_1d(np.asarray(kd, float))
    if kp.ndim == 1 and kp.size == 1:
        kp = kp[0] * np.eye(q.size)
    if kd.ndim == 1 and kd.size == 1:
        kd = kd[0] * np.eye(q.size)
    if np.linalg.eigvalsh(0.5 * (kp + kp.T))[0] <= 0 or np.linalg.eigvalsh(0.5 * (kd + kd.T))[0] <= 0:
        raise ValueError("PD gains must be positive definite")
    tau = kp @ (np.asarray(q) - q_ref) + kd @ (np.asarray(qd) - qd_ref)
    return tau if paper_sign else -tau


def differentiate_position(q_k, q_prev, dt: float, noise_std: float = 0.0, rng=None):
    """Backward-difference velocity from two position samples.

    Gaussian measurement noise of the given standard deviation is applied
    to each position independently before differencing, so the induced
    velocity noise has per-sample std noise_std * sqrt(2) / dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    q_k = np.asarray(q_k, float)
    q_prev = np.asarray(q_prev, float)
    if noise_std > 0.0:
        if rng is None:
            raise ValueError("rng required when noise_std > 0")
        q_k = q_k + rng.normal(0.0, noise_std, q_k.shape)
        q_prev = q_prev + rng.normal(0.0, noise_std, q_prev.shape)
    return (q_k - q_prev) / dt

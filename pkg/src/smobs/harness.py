"""End-to-end experiment harness: configure, run, record, export.

A run is a fixed-step 1 kHz closed loop: sample the plant position (with
measurement noise), differentiate it, evaluate the identified model, build
the auxiliary input, step the sliding-mode observer and the momentum
baseline, log everything, then advance the true plant with RK4.  Runs are
deterministic given (config, seed).
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics as dyn
from . import linearization as lin
from . import observer as obs
from . import synthesis as syn


@dataclass
class ExperimentConfig:
    # plant
    plant: str = "two_link"           # two_link | synthetic
    n: int = 2                         # used by the synthetic plant
    # identification and measurement
    ident_error: float = 0.02          # multiplicative parameter error half-range
    noise_std: float = 1e-4            # position measurement noise, rad
    # disturbance profile
    disturbance_kind: str = "sinusoid"
    amplitude: tuple = (6.0, 4.8)
    dist_start: float = 12.5
    dist_end: float = 14.5
    # controller and reference
    kp: float = 200.0
    kd: float = 8.0
    paper_pd_sign: bool = False
    q_target: float = 0.7              # per-joint reference amplitude, rad
    # synthesis / observer
    kappa: float = 10.0
    gamma: float = 0.5
    rho0: float = 50.0
    delta_s: float | None = None       # None -> derived from c_ratio
    c_ratio: float = 10.0              # boundary-layer stiffness ratio c / L2
    omega_f: float = 100.0             # equivalent-control filter cutoff, rad/s
    rho_mode: str = "practical"        # practical | full
    baseline_ki: float | None = None   # None -> 1/K0 (matched bandwidth)
    # declared bounds
    alpha1: float = 2.5
    alpha2: float = 5.0
    # run
    duration: float = 30.0
    dt: float = 1e-3
    substeps: int = 1
    seed: int = 2025
    eval_start: float = 8.0            # metrics window start, s

    def __post_init__(self):
        if self.duration <= 0 or self.dt <= 0:
            raise ValueError("duration and dt must be positive")
        steps = self.duration / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("duration must be an integer number of steps")
        if self.plant not in ("two_link", "synthetic"):
            raise ValueError(f"unknown plant {self.plant!r}")

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def profile(self) -> dyn.DisturbanceProfile:
        return dyn.DisturbanceProfile(
            kind=self.disturbance_kind,
            tau_t=np.asarray(self.amplitude, float),
            start=self.dist_start,
            end=self.dist_end,
        )


# ---------------------------------------------------------------------------
# presets

def experiment1_config(kind: str = "sinusoid", seed: int = 2025) -> ExperimentConfig:
    """Desk-scale analogue of the predefined-disturbance experiment."""
    return ExperimentConfig(disturbance_kind=kind, seed=seed)


def null_config(seed: int = 2025) -> ExperimentConfig:
    """Disturbance-free run with paper-style observer settings."""
    return ExperimentConfig(
        disturbance_kind="zero",
        amplitude=(0.0, 0.0),
        rho0=250.0,
        delta_s=0.05,
        seed=seed,
    )


def step_config(d0=(1.2, 0.9), t_on: float = 10.0, duration: float = 14.0,
                seed: int = 2025) -> ExperimentConfig:
    """Constant step disturbance under clean oracle conditions."""
    return ExperimentConfig(
        disturbance_kind="square",
        amplitude=tuple(d0),
        dist_start=t_on,
        dist_end=duration,
        ident_error=0.0,
        noise_std=0.0,
        q_target=0.0,
        c_ratio=100.0,
        duration=duration,
        eval_start=0.0,
        seed=seed,
    )


def reaching_config(duration: float = 0.6, seed: int = 2025) -> ExperimentConfig:
    """Short perfect-model run used for reaching-time verification."""
    return ExperimentConfig(
        disturbance_kind="zero",
        amplitude=(0.0, 0.0),
        ident_error=0.0,
        noise_std=0.0,
        q_target=0.0,
        rho0=250.0,
        delta_s=0.05,
        rho_mode="full",
        duration=duration,
        eval_start=0.0,
        seed=seed,
    )


PRESETS = {
    "exp1-sinusoid": lambda: experiment1_config("sinusoid"),
    "exp1-square": lambda: experiment1_config("square"),
    "exp1-triangle": lambda: experiment1_config("triangle"),
    "contact-pulse": lambda: experiment1_config("contact_pulse"),
    "null": null_config,
    "step": step_config,
    "reaching": reaching_config,
}


# ---------------------------------------------------------------------------
# config file io (INI, round-trips exactly via repr floats)

_CONFIG_LAYOUT = {
    "plant": ("plant", "n"),
    "identification": ("ident_error",),
    "noise": ("noise_std",),
    "disturbance": ("disturbance_kind", "amplitude", "dist_start", "dist_end"),
    "controller": ("kp", "kd", "paper_pd_sign", "q_target"),
    "synthesis": ("kappa", "gamma", "rho0", "delta_s", "c_ratio", "omega_f",
                  "rho_mode", "baseline_ki"),
    "bounds": ("alpha1", "alpha2"),
    "run": ("duration", "dt", "substeps", "seed", "eval_start"),
}


def _fmt(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (tuple, list, np.ndarray)):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_config(config: ExperimentConfig, path) -> None:
    cp = configparser.ConfigParser()
    for section, keys in _CONFIG_LAYOUT.items():
        cp[section] = {k: _fmt(getattr(config, k)) for k in keys}
    with open(path, "w") as fh:
        cp.write(fh)


def config_to_string(config: ExperimentConfig) -> str:
    cp = configparser.ConfigParser()
    for section, keys in _CONFIG_LAYOUT.items():
        cp[section] = {k: _fmt(getattr(config, k)) for k in keys}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(path)
    kwargs = {}
    for section, keys in _CONFIG_LAYOUT.items():
        if section not in cp:
            raise ValueError(f"config missing section [{section}]")
        for key in keys:
            raw = cp[section].get(key)
            if raw is None:
                raise ValueError(f"config missing {section}.{key}")
            kwargs[key] = _parse_field(key, raw)
    return ExperimentConfig(**kwargs)


def _parse_field(key, raw):
    raw = raw.strip()
    if key in ("plant", "disturbance_kind", "rho_mode"):
        return raw
    if key in ("n", "substeps", "seed"):
        return int(raw)
    if key == "paper_pd_sign":
        return raw.lower() in ("1", "true", "yes")
    if key == "amplitude":
        return tuple(float(v) for v in raw.split())
    if key in ("delta_s", "baseline_ki"):
        return None if raw == "auto" else float(raw)
    return float(raw)


# ---------------------------------------------------------------------------
# plant construction and derived observer settings

def build_plant(config: ExperimentConfig) -> dyn.RobotModel:
    if config.plant == "two_link":
        return dyn.TwoLinkArm()
    return dyn.SyntheticArm(n=config.n)


def boundary_layer_for(gains: syn.ObserverGains, rho0: float, c_ratio: float,
                       dt: float = 1e-3, stab_frac: float = 1.0) -> float:
    """Boundary layer giving in-layer feedback stiffness c = c_ratio * L2.

    Inside the layer the switching term acts as proportional feedback with
    slope c = rho0 H / delta_s on e_zeta; the equivalent-control estimate
    recovers a fraction c / (c + L2) of a constant disturbance, so larger
    c_ratio means better DC recovery at the cost of a stiffer (noisier)
    loop. The discrete-time loop needs dt (L1 + K0 c) < 2 to avoid
    bang-bang chatter at the sampling rate, so c is capped at stab_frac
    of that limit.
    """
    c_stab = (stab_frac / dt - gains.l1) / gains.k0
    c = min(c_ratio * gains.l2, c_stab)
    if c <= 0:
        raise ValueError("no stable boundary-layer stiffness at this dt")
    return rho0 * gains.h / c


def noise_floor(budget: lin.UncertaintyBudget, delta_s: float) -> float:
    """Null-run assertion level for ||d_hat||, from eps_eta and delta_s."""
    return budget.eps_eta + max(0.05, 2.0 * delta_s)


# ---------------------------------------------------------------------------
# run record and metrics

_SERIES_2D = ("q", "qd", "qbar_dot", "tau", "tau_d", "zeta", "s", "v", "v_eq",
              "d_hat", "e_zeta", "e_xi", "baseline_r")


@dataclass
class RunRecord:
    config: ExperimentConfig
    gains: syn.ObserverGains
    bounds: dyn.Bounds
    budget: lin.UncertaintyBudget
    delta_s: float
    seed: int
    t: np.ndarray = None
    rho: np.ndarray = None
    aborted: bool = False
    abort_step: int | None = None
    abort_reason: str = ""

    def __post_init__(self):
        for name in _SERIES_2D:
            setattr(self, name, None)

    @property
    def n(self) -> int:
        return self.config.n if self.config.plant == "synthetic" else 2

    def truncate(self, k: int) -> None:
        self.t = self.t[:k]
        self.rho = self.rho[:k]
        for name in _SERIES_2D:
            setattr(self, name, getattr(self, name)[:k])


@dataclass
class Metrics:
    rmse_per_joint: np.ndarray
    rmse: float
    peak_abs_error: float
    reaching_time: float
    reaching_bound: float
    bound_satisfied: bool
    frac_in_layer: float
    baseline_rmse_per_joint: np.ndarray
    baseline_rmse: float
    noise_floor: float
    max_dhat: float
    eval_start: float

    def summary(self) -> str:
        lines = [
            f"rmse_per_joint = {' '.join(f'{v:.6g}' for v in self.rmse_per_joint)}",
            f"rmse = {self.rmse:.6g}",
            f"peak_abs_error = {self.peak_abs_error:.6g}",
            f"reaching_time = {self.reaching_time:.6g}",
            f"reaching_bound = {self.reaching_bound:.6g}",
            f"bound_satisfied = {self.bound_satisfied}",
            f"frac_in_layer = {self.frac_in_layer:.6g}",
            f"baseline_rmse = {self.baseline_rmse:.6g}",
            f"noise_floor = {self.noise_floor:.6g}",
            f"max_dhat = {self.max_dhat:.6g}",
            f"eval_start = {self.eval_start:.6g}",
        ]
        return "\n".join(lines)


def run_experiment(config: ExperimentConfig, gains: syn.ObserverGains | None = None,
                   zeta_hat0=None) -> RunRecord:
    """Execute one closed-loop run. Deterministic given config and seed.

    zeta_hat0 overrides the observer's zero initial zeta estimate (used by
    the reaching-time experiments); everything else follows the config.
    """
    rng = np.random.default_rng(config.seed)
    base = build_plant(config)
    n = base.n

    # identification error factors are the first rng draws of the run
    draws = rng.uniform(-1.0, 1.0, len(base.param_names))
    factors = dict(zip(base.param_names, (1.0 + config.ident_error * draws).tolist()))
    ident = dyn.IdentifiedModel(base, factors)

    if gains is None:
        spec = syn.SynthesisSpec(n=n, kappa=config.kappa, gamma=config.gamma,
                                 rho0=config.rho0, delta_s=config.delta_s or 0.05)
        gains = syn.synthesize(spec)
    delta_s = config.delta_s
    if delta_s is None:
        delta_s = boundary_layer_for(gains, config.rho0, config.c_ratio, dt=config.dt)
    gains = replace(gains, spec=replace(gains.spec, rho0=config.rho0, delta_s=delta_s))

    # declared bounds and lumped-uncertainty budget
    profile = config.profile()
    eps_qdot = 3.0 * config.noise_std * np.sqrt(2.0) / config.dt
    errs = ident.error_bounds(config.alpha1, eps_qdot) if config.ident_error > 0 or config.noise_std > 0 else {
        "eps_m": 0.0, "eps_n": 0.0, "eps_g": 0.0, "eps_f": 0.0}
    bounds = dyn.Bounds(
        alpha1=config.alpha1, alpha2=config.alpha2,
        alpha_tau=float(np.linalg.norm(profile.tau_t)),
        eps_qdot=eps_qdot, sigma_m=base.spectral_bound(), **errs,
    )
    budget = lin.uncertainty_budget(bounds, lin.estimate_sup_dm(ident.hat))

    record = RunRecord(config=config, gains=gains, bounds=bounds, budget=budget,
                       delta_s=delta_s, seed=config.seed)
    steps = config.steps
    record.t = np.arange(steps) * config.dt
    record.rho = np.zeros(steps)
    for name in _SERIES_2D:
        setattr(record, name, np.zeros((steps, n)))

    state = dyn.SimState(t=0.0, q=np.zeros(n), qd=np.zeros(n))
    ostate = obs.ObserverState.zero(n)
    if zeta_hat0 is not None:
        ostate.zeta_hat = np.asarray(zeta_hat0, float).copy()
    ki = config.baseline_ki if config.baseline_ki is not None else 1.0 / gains.k0
    baseline = obs.MomentumObserver(ident, ki, n)
    q_target = np.full(n, config.q_target)

    qm_prev = None
    mh_prev = None
    for k in range(steps):
        t = k * config.dt
        q_meas = state.q + rng.normal(0.0, config.noise_std, n) if config.noise_std > 0 else state.q.copy()
        qbar_dot = np.zeros(n) if qm_prev is None else (q_meas - qm_prev) / config.dt
        m_hat = ident.mass_matrix(q_meas)
        mdot = np.zeros((n, n)) if mh_prev is None else lin.compute_mdot(m_hat, mh_prev, config.dt)
        qm_prev, mh_prev = q_meas, m_hat

        zeta_meas = lin.compute_zeta(m_hat, q_meas)
        q_r, qd_r = dyn.reference_trajectory(t, q_target)
        tau = dyn.pd_controller(q_meas, qbar_dot, q_r, qd_r, config.kp, config.kd,
                                paper_sign=config.paper_pd_sign)
        tau_d = dyn.disturbance(profile, t)
        u = lin.compute_u(ident, q_meas, qbar_dot, tau, mdot)

        try:
            ostate, d_hat, diag = obs.smo_step(
                gains, ostate, zeta_meas, u, config.dt, omega_f=config.omega_f,
                rho_mode=config.rho_mode, budget=budget, bounds=bounds,
                delta_s=delta_s, step=k,
            )
            r = baseline.step(q_meas, qbar_dot, u.lower, config.dt)
        except obs.ObserverDivergence as exc:
            record.truncate(k)
            record.aborted = True
            record.abort_step = k
            record.abort_reason = str(exc)
            return record

        zeta_true, xi_true = lin.lift_state(ident.mass_matrix(state.q), state.q, state.qd)
        record.q[k] = state.q
        record.qd[k] = state.qd
        record.qbar_dot[k] = qbar_dot
        record.tau[k] = tau
        record.tau_d[k] = tau_d
        record.zeta[k] = zeta_meas
        record.s[k] = diag.s
        record.rho[k] = diag.rho
        record.v[k] = diag.v
        record.v_eq[k] = ostate.v_eq
        record.d_hat[k] = d_hat
        record.e_zeta[k] = diag.s / gains.h
        record.e_xi[k] = xi_true - ostate.xi_hat
        record.baseline_r[k] = r

        try:
            state = dyn.step(base, state, tau, tau_d, config.dt, substeps=config.substeps)
        except (np.linalg.LinAlgError, ValueError) as exc:
            record.truncate(k + 1)
            record.aborted = True
            record.abort_step = k
            record.abort_reason = f"plant integration failed: {exc}"
            return record
        if not np.all(np.isfinite(state.q)) or not np.all(np.isfinite(state.qd)):
            record.truncate(k + 1)
            record.aborted = True
            record.abort_step = k
            record.abort_reason = "plant state non-finite"
            return record
    return record


def compute_metrics(record: RunRecord, delta_s: float | None = None,
                    sustain_steps: int = 10) -> Metrics:
    if record.t is None or len(record.t) == 0:
        raise ValueError("empty record")
    if delta_s is None:
        delta_s = record.delta_s
    dt = record.config.dt
    mask = record.t >= record.config.eval_start
    if not mask.any():
        mask = np.ones_like(record.t, dtype=bool)
    err = record.d_hat[mask] - record.tau_d[mask]
    rmse_j = np.sqrt(np.mean(err**2, axis=0))
    base_err = record.baseline_r[mask] - record.tau_d[mask]
    base_rmse_j = np.sqrt(np.mean(base_err**2, axis=0))

    s_norm = np.linalg.norm(record.s, axis=1)
    inside = s_norm <= delta_s
    reach_idx = _first_sustained(inside, sustain_steps)
    reaching_time = 0.0 if inside[0] else (reach_idx * dt if reach_idx is not None else float("inf"))
    bound = obs.reaching_time_bound(record.s[0], record.gains.spec.rho0, record.gains.P_K)
    post = inside[reach_idx:] if reach_idx is not None else np.zeros(0, dtype=bool)
    frac = float(post.mean()) if post.size else 0.0
    floor = noise_floor(record.budget, delta_s)
    return Metrics(
        rmse_per_joint=rmse_j,
        rmse=float(np.sqrt(np.mean(err**2))),
        peak_abs_error=float(np.max(np.abs(err))) if err.size else 0.0,
        reaching_time=reaching_time,
        reaching_bound=bound,
        bound_satisfied=bool(reaching_time <= bound + 1e-12),
        frac_in_layer=frac,
        baseline_rmse_per_joint=base_rmse_j,
        baseline_rmse=float(np.sqrt(np.mean(base_err**2))),
        noise_floor=floor,
        max_dhat=float(np.max(np.linalg.norm(record.d_hat[mask], axis=1))),
        eval_start=record.config.eval_start,
    )


def _first_sustained(flags: np.ndarray, run_len: int):
    count = 0
    for i, f in enumerate(flags):
        count = count + 1 if f else 0
        if count >= run_len:
            return i - run_len + 1
    return None


# ---------------------------------------------------------------------------
# export

_EXPORT_GROUPS = {
    "state.csv": ("q", "qd", "qbar_dot"),
    "control.csv": ("tau", "tau_d"),
    "observer.csv": ("zeta", "s", "v", "v_eq", "d_hat"),
    "errors.csv": ("e_zeta", "e_xi", "baseline_r"),
}


def export_record(record: RunRecord, outdir) -> list[str]:
    """Write one CSV per signal group plus config and gain sidecars.

    Columns are t plus per-joint entries named like q1..qn. Floats are
    written with repr (shortest round-trip), so identical runs export
    byte-identical files.
    """
    os.makedirs(outdir, exist_ok=True)
    written = []
    n = record.q.shape[1]
    for fname, names in _EXPORT_GROUPS.items():
        path = os.path.join(outdir, fname)
        cols = ["t"]
        for name in names:
            cols.extend(f"{name}{j+1}" for j in range(n))
        if fname == "observer.csv":
            cols.append("rho")
        try:
            with open(path, "w", newline="") as fh:
                fh.write(",".join(cols) + "\n")
                for k in range(len(record.t)):
                    row = [repr(float(record.t[k]))]
                    for name in names:
                        row.extend(repr(float(v)) for v in getattr(record, name)[k])
                    if fname == "observer.csv":
                        row.append(repr(float(record.rho[k])))
                    fh.write(",".join(row) + "\n")
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        written.append(path)
    cfg_path = os.path.join(outdir, "config.ini")
    save_config(record.config, cfg_path)
    written.append(cfg_path)
    gains_path = os.path.join(outdir, "gains.txt")
    syn.save_gains(record.gains, gains_path)
    written.append(gains_path)
    if record.aborted:
        marker = os.path.join(outdir, "ABORTED.txt")
        with open(marker, "w") as fh:
            fh.write(f"step = {record.abort_step}\nreason = {record.abort_reason}\n")
        written.append(marker)
    return written


def read_csv(path):
    """Load an exported CSV back into (header, array)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data

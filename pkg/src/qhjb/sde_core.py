"""
Dynamics of a continuously monitored qubit rotated about the y axis.

Three equivalent descriptions of the same process live here:

    polar angle    d theta = (v - 2 gamma sin 2theta) dt + 2 sqrt(2 gamma) sin theta dW
    Bloch (x, z)   pure-state components in the x-z plane
    density matrix the full 2x2 stochastic master equation

The polar form drives every solver; the other two are oracles used by the
consistency checks. With the Ito rules, the angle atan2(x, z) extracted from
the Bloch/SME description picks up the innovation with the opposite sign, so
a polar path driven by ``dW`` matches a Bloch path driven by ``-dW``
(see ``MEASUREMENT_SIGN``). The two laws are identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1j], [1j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENT = np.eye(2, dtype=complex)

# Polar increment dW corresponds to measurement innovation MEASUREMENT_SIGN * dW.
MEASUREMENT_SIGN = -1.0

TOL_PURITY = 1e-6
NOISE_BLOCK = 1024


class ControlBoundError(ValueError):
    pass


@dataclass(frozen=True)
class SystemParams:
    """Physical and control constants.

    gamma: measurement strength (1/time), omega: control bound (rad/time),
    lam: discount rate (1/time), target_angle: absorbing angle (|theta| = target).
    """

    gamma: float
    omega: float
    lam: float = 0.0
    target_angle: float = math.pi
    noiseless: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.noiseless:
            if self.gamma != 0.0:
                raise ValueError("noiseless configuration requires gamma == 0")
        elif not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.omega > 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    @classmethod
    def gamma_limit(cls, omega: float, lam: float = 0.0) -> "SystemParams":
        """The gamma -> 0 configuration: deterministic rotation at rate <= omega."""
        return cls(gamma=0.0, omega=omega, lam=lam, noiseless=True)

    @property
    def omega_dominates(self) -> bool:
        return self.omega > 2.0 * self.gamma

    def require_omega_dominates(self):
        if not self.omega_dominates:
            raise ValueError(
                f"requires omega > 2*gamma (omega={self.omega}, gamma={self.gamma})"
            )

    def scaled(self, c: float) -> "SystemParams":
        """Rates multiplied by c (time measured in units 1/c)."""
        return SystemParams(
            gamma=self.gamma * c,
            omega=self.omega * c,
            lam=self.lam * c,
            target_angle=self.target_angle,
            noiseless=self.noiseless,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PolarState:
    theta: float
    wrapped: bool = True

    def __post_init__(self):
        if self.wrapped and abs(self.theta) > math.pi:
            raise ValueError(f"wrapped state needs |theta| <= pi, got {self.theta}")


@dataclass(frozen=True)
class BlochState:
    x: float
    z: float

    @property
    def radius(self) -> float:
        return math.hypot(self.x, self.z)

    @property
    def theta(self) -> float:
        return math.atan2(self.x, self.z)

    @classmethod
    def from_theta(cls, theta: float) -> "BlochState":
        return cls(math.sin(theta), math.cos(theta))


@dataclass
class Trajectory:
    """Sampled path. For absorbed paths the last sample is the first one at or
    beyond the target, kept unclamped so the crossing can be interpolated."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    seed: int
    dt: float
    index: int = 0
    absorbed: bool = False
    columns: tuple = ("theta",)

    def __post_init__(self):
        n = len(self.times)
        if len(self.states) != n or len(self.controls) != n:
            raise ValueError("times, states and controls must have equal length")

    def __len__(self):
        return len(self.times)


def _sin_exact(x):
    """sin with exact zeros at floating multiples of pi."""
    x = np.asarray(x, dtype=float)
    s = np.sin(x)
    return np.where(np.fmod(x, math.pi) == 0.0, 0.0, s)


def _scalar_or_array(out, like):
    return float(out) if np.ndim(like) == 0 else out


def check_control(v, params: SystemParams):
    if np.any(np.abs(v) > params.omega * (1 + 1e-12)):
        raise ControlBoundError(f"control outside [-{params.omega}, {params.omega}]")


def drift(theta, v, params: SystemParams):
    check_control(v, params)
    out = v - 2.0 * params.gamma * _sin_exact(2.0 * np.asarray(theta, dtype=float))
    return _scalar_or_array(out, np.broadcast(theta, v))


def diffusion(theta, params: SystemParams):
    out = 2.0 * math.sqrt(2.0 * params.gamma) * _sin_exact(theta)
    return _scalar_or_array(out, theta)


def diffusion_sq(theta, params: SystemParams):
    """diffusion(theta)**2 computed as 8 gamma sin^2 theta (exact under rate scaling)."""
    s = _sin_exact(theta)
    return _scalar_or_array(8.0 * params.gamma * s * s, theta)


def euler_maruyama_step(
    state: PolarState, v: float, dt: float, dW: float, params: SystemParams
) -> PolarState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    th = state.theta
    new = th + drift(th, v, params) * dt + diffusion(th, params) * dW
    if state.wrapped and abs(new) >= math.pi:
        new = math.copysign(math.pi, new)
    return PolarState(new, state.wrapped)


# --- density matrix / Bloch oracles -------------------------------------


def _dissipator(a, rho):
    ad = a.conj().T
    return a @ rho @ ad - 0.5 * (ad @ a @ rho + rho @ ad @ a)


def _innovation(a, rho):
    ad = a.conj().T
    return a @ rho + rho @ ad - np.trace((ad + a) @ rho) * rho


def check_density_matrix(rho, atol_herm=1e-12, atol_tr=1e-12, atol_psd=1e-10):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError("density matrix must be 2x2")
    if np.max(np.abs(rho - rho.conj().T)) > atol_herm:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol_tr:
        raise ValueError("density matrix trace differs from 1")
    if np.min(np.linalg.eigvalsh(rho)) < -atol_psd:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def density_from_bloch(x: float, z: float) -> np.ndarray:
    return 0.5 * (IDENT + x * SIGMA_X + z * SIGMA_Z)


def bloch_from_density(rho) -> tuple[float, float]:
    return float(np.trace(rho @ SIGMA_X).real), float(np.trace(rho @ SIGMA_Z).real)


def sme_density_step(rho, v: float, dt: float, dW: float, params: SystemParams):
    """One Euler step of the stochastic master equation; dW is the measurement
    innovation. Trace is renormalized to 1 and Hermiticity restored."""
    rho = check_density_matrix(rho)
    check_control(v, params)
    g = params.gamma
    comm = SIGMA_Y @ rho - rho @ SIGMA_Y
    d_rho = (
        -1j * 0.5 * v * comm * dt
        + 2.0 * g * _dissipator(SIGMA_Z, rho) * dt
        + math.sqrt(2.0 * g) * _innovation(SIGMA_Z, rho) * dW
    )
    new = rho + d_rho
    new = 0.5 * (new + new.conj().T)
    return new / np.trace(new).real


def bloch_coefficients(x, z, v, params: SystemParams):
    """Drift and innovation coefficients (a_x, a_z, b_x, b_z) of the Bloch SDE,
    dk = a_k dt + b_k dW_meas."""
    g = params.gamma
    c = 2.0 * math.sqrt(2.0 * g)
    return (v * z - 4.0 * g * x, -v * x, -c * x * z, c * (1.0 - z * z))


def bloch_step(state: BlochState, v: float, dt: float, dW: float, params: SystemParams,
               tol_purity: float = TOL_PURITY) -> BlochState:
    """Euler step of the pure-state Bloch SDE (dW = measurement innovation),
    followed by projection back onto the unit circle."""
    r2 = state.x * state.x + state.z * state.z
    if abs(r2 - 1.0) > tol_purity:
        raise ValueError(f"state is not pure: x^2 + z^2 = {r2}")
    check_control(v, params)
    ax, az, bx, bz = bloch_coefficients(state.x, state.z, v, params)
    x = state.x + ax * dt + bx * dW
    z = state.z + az * dt + bz * dW
    r = math.hypot(x, z)
    return BlochState(x / r, z / r)


# --- policies ------------------------------------------------------------


class Policy:
    """Feedback law theta -> control. Subclasses implement __call__ on arrays."""

    def __call__(self, theta):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def mirrored(self) -> "Policy":
        """The law theta -> -pi(-theta)."""
        return _MirroredPolicy(self)


@dataclass(frozen=True)
class ConstantPolicy(Policy):
    value: float

    def __call__(self, theta):
        return np.full(np.shape(theta), self.value, dtype=float)

    def describe(self):
        return {"kind": "constant", "value": self.value}

    def mirrored(self):
        return ConstantPolicy(-self.value)


@dataclass(frozen=True)
class BangBangPolicy(Policy):
    """+omega above the switch angle, -omega below; ties go to +omega."""

    omega: float
    switch: float = 0.0

    def __call__(self, theta):
        return np.where(np.asarray(theta) >= self.switch, self.omega, -self.omega)

    def describe(self):
        return {"kind": "bang_bang", "omega": self.omega, "switch": self.switch}


class GridPolicy(Policy):
    """Nearest-node lookup in a tabulated policy; values beyond the table ends
    use the end nodes."""

    def __init__(self, nodes, controls):
        self.nodes = np.asarray(nodes, dtype=float)
        self.controls = np.asarray(controls, dtype=float)
        self._h = (self.nodes[-1] - self.nodes[0]) / (len(self.nodes) - 1)

    def __call__(self, theta):
        idx = np.rint((np.asarray(theta) - self.nodes[0]) / self._h).astype(np.int64)
        np.clip(idx, 0, len(self.nodes) - 1, out=idx)
        return self.controls[idx]

    def describe(self):
        return {"kind": "grid", "n": len(self.nodes), "lo": float(self.nodes[0]),
                "hi": float(self.nodes[-1])}


class _MirroredPolicy(Policy):
    def __init__(self, base: Policy):
        self.base = base

    def __call__(self, theta):
        return -self.base(-np.asarray(theta))

    def describe(self):
        return {"kind": "mirrored", "base": self.base.describe()}


def as_policy(policy) -> Policy:
    if isinstance(policy, Policy):
        return policy
    if callable(policy):
        return _CallablePolicy(policy)
    return ConstantPolicy(float(policy))


class _CallablePolicy(Policy):
    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, theta):
        return np.broadcast_to(np.asarray(self.fn(theta), dtype=float), np.shape(theta))

    def describe(self):
        return {"kind": "callable", "name": getattr(self.fn, "__name__", "?")}


# --- random streams ------------------------------------------------------


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based (Philox) stream keyed by (master_seed, trajectory index)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


class NoiseStreams:
    """Standard normals for a set of trajectories, drawn in fixed-size blocks per
    trajectory so that path k sees the same sequence however paths are batched."""

    def __init__(self, master_seed: int, indices: Sequence[int], block: int = NOISE_BLOCK):
        self.rngs = [trajectory_rng(master_seed, i) for i in indices]
        self.block = block
        self.buf = np.empty((len(self.rngs), block))
        self.pos = block

    def next(self, active: np.ndarray) -> np.ndarray:
        """Next normal for each trajectory selected by ``active`` (positions into
        the original index list). Inactive trajectories are no longer advanced."""
        if self.pos == self.block:
            for j in active:
                self.buf[j] = self.rngs[j].standard_normal(self.block)
            self.pos = 0
        out = self.buf[active, self.pos]
        self.pos += 1
        return out


# --- single path simulation ----------------------------------------------


def simulate(
    theta0: float,
    policy,
    dt: float,
    t_max: float,
    seed: int,
    absorb: bool,
    params: SystemParams,
    index: int = 0,
) -> Trajectory:
    """Euler-Maruyama path of the polar SDE.

    With ``absorb`` the path stops at the first sample with |theta| >= target
    angle; that sample is stored unclamped. The noise for (seed, index) is the
    same stream the ensemble estimators use for trajectory ``index``.
    """
    if not dt > 0 or not t_max > 0:
        raise ValueError("dt and t_max must be positive")
    pol = as_policy(policy)
    target = params.target_angle
    n_steps = int(math.ceil(t_max / dt - 1e-9))
    noise = NoiseStreams(seed, [index])
    only = np.array([0])
    sq = math.sqrt(dt)
    th = np.array([float(theta0)])
    thetas = [th[0]]
    controls = []
    absorbed = absorb and abs(th[0]) >= target
    for _ in range(n_steps):
        if absorbed:
            break
        v = pol(th)
        check_control(v, params)
        controls.append(float(v[0]))
        dw = noise.next(only) * sq
        th = th + drift(th, v, params) * dt + diffusion(th, params) * dw
        thetas.append(float(th[0]))
        if absorb and abs(th[0]) >= target:
            absorbed = True
    controls.append(float(pol(th)[0]) if not absorbed else (controls[-1] if controls else 0.0))
    times = dt * np.arange(len(thetas))
    return Trajectory(times, np.array(thetas), np.array(controls), seed, dt, index,
                      absorbed=absorbed)


def interpolate_crossing(t0, th0, th1, dt, level):
    frac = (level - th0) / (th1 - th0)
    return t0 + dt * frac


def hitting_time(traj: Trajectory, target: float = math.pi) -> Optional[float]:
    """First passage time to |theta| = target, linearly interpolated between the
    bracketing samples. None if the path never reached the target."""
    th = traj.states
    if abs(th[0]) >= target:
        return 0.0
    out = np.nonzero(np.abs(th) >= target)[0]
    if len(out) == 0:
        return None
    j = out[0]
    level = math.copysign(target, th[j])
    return float(interpolate_crossing(traj.times[j - 1], th[j - 1], th[j], traj.dt, level))


def discounted_cost(tau: Optional[float], lam: float) -> float:
    """Integral of exp(-lam s) over [0, tau]; tau=None means never absorbed."""
    if tau is None or (isinstance(tau, float) and math.isinf(tau)):
        if lam == 0:
            return math.inf
        return 1.0 / lam
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if lam == 0:
        return float(tau)
    return -math.expm1(-lam * tau) / lam


def discounted_cost_array(tau: np.ndarray, lam: float) -> np.ndarray:
    """Vector form; NaN entries are censored paths."""
    tau = np.asarray(tau, dtype=float)
    if lam == 0:
        return np.where(np.isnan(tau), np.inf, tau)
    return np.where(np.isnan(tau), 1.0 / lam, -np.expm1(-lam * np.nan_to_num(tau)) / lam)


# --- trajectory dump -----------------------------------------------------


def fmt(x) -> str:
    return repr(float(x))


def write_trajectory(traj: Trajectory, path, params: SystemParams) -> list[Path]:
    """CSV ``t,theta,control`` (or ``t,x,z,control``) plus a JSON sidecar."""
    path = Path(path)
    states = np.asarray(traj.states)
    if states.ndim == 1:
        states = states[:, None]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("t",) + tuple(traj.columns) + ("control",))
        for t, s, c in zip(traj.times, states, traj.controls):
            w.writerow([fmt(t)] + [fmt(v) for v in s] + [fmt(c)])
    side = path.with_suffix(".json")
    side.write_text(json.dumps(
        {"seed": traj.seed, "index": traj.index, "dt": traj.dt,
         "absorbed": traj.absorbed, "params": params.to_dict()},
        indent=2, sort_keys=True))
    return [path, side]


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as f:
        header = f.readline().strip().split(",")
    cols = tuple(header[1:-1])
    states = data[:, 1:-1]
    if states.shape[1] == 1:
        states = states[:, 0]
    return Trajectory(data[:, 0], states, data[:, -1], meta["seed"], meta["dt"],
                      meta.get("index", 0), meta.get("absorbed", False), cols)

"""Serial revolute manipulator plant: gravity statics and damped settling.

The model is purely geometric/inertial (point-mass links on a serial chain);
the gravity term G(q) is the gradient of the potential energy, i.e. the
joint torque that statically balances gravity at q. Settling integrates the
damped rigid-body dynamics M(q) qdd + C(q, qd) qd + D qd + G(q) = tau until
the arm rests at an equilibrium G(q) = tau.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import _kernels


class SettleStatus(enum.Enum):
    SETTLED = "settled"
    LIMIT_VIOLATION = "limit_violation"
    TIMEOUT = "timeout"


_STATUS_FROM_CODE = {
    _kernels.SETTLED: SettleStatus.SETTLED,
    _kernels.LIMIT_VIOLATION: SettleStatus.LIMIT_VIOLATION,
    _kernels.TIMEOUT: SettleStatus.TIMEOUT,
}


@dataclass(frozen=True)
class SettleParams:
    """Integration and convergence parameters for settling.

    Settled requires |qd|_inf < vel_tol sustained for `window` seconds of
    simulated time plus |G(q) - tau|_inf <= eq_tol at the end of the window.
    """

    dt: float = 1e-3
    vel_tol: float = 1e-4
    eq_tol: float = 1e-6
    window: float = 0.2
    max_time: float = 30.0

    @property
    def window_steps(self) -> int:
        return max(1, int(round(self.window / self.dt)))

    @property
    def max_steps(self) -> int:
        return max(1, int(round(self.max_time / self.dt)))


@dataclass(frozen=True)
class SettleOutcome:
    status: SettleStatus
    q_final: np.ndarray
    qd_final: np.ndarray
    steps: int

    @property
    def settled(self) -> bool:
        return self.status is SettleStatus.SETTLED


class ManipulatorModel:
    """Kinematic/inertial description of an nR serial arm.

    Link i extends along its local x axis; joint i rotates about axes[i]
    (unit vector in the parent frame). The zero configuration is the chain
    stretched along +x; the default gravity (0, -9.81, 0) points into
    negative y, so a planar arm with z axes swings in the x-y plane.
    """

    def __init__(
        self,
        link_lengths,
        link_masses,
        link_coms,
        joint_axes,
        joint_limits,
        home_configuration,
        gravity=(0.0, -9.81, 0.0),
        viscous_damping=None,
        rotor_inertia=None,
        name: str = "robot",
    ):
        self.link_lengths = np.asarray(link_lengths, dtype=float)
        self.n = int(self.link_lengths.shape[0])
        self.link_masses = np.asarray(link_masses, dtype=float)
        self.link_coms = np.asarray(link_coms, dtype=float)
        self.joint_axes = np.asarray(joint_axes, dtype=float).reshape(self.n, 3)
        limits = np.asarray(joint_limits, dtype=float).reshape(self.n, 2)
        self.q_min = limits[:, 0].copy()
        self.q_max = limits[:, 1].copy()
        self.gravity = np.asarray(gravity, dtype=float).reshape(3)
        if viscous_damping is None:
            viscous_damping = np.ones(self.n)
        self.viscous_damping = np.asarray(viscous_damping, dtype=float)
        if rotor_inertia is None:
            rotor_inertia = np.full(self.n, 1e-3)
        self.rotor_inertia = np.asarray(rotor_inertia, dtype=float)
        self.home_configuration = np.asarray(home_configuration, dtype=float)
        self.name = name
        self._validate()

    def _validate(self):
        n = self.n
        if n < 1:
            raise ValueError("need at least one joint")
        for arr, label in [
            (self.link_masses, "link_masses"),
            (self.link_coms, "link_coms"),
            (self.viscous_damping, "viscous_damping"),
            (self.rotor_inertia, "rotor_inertia"),
            (self.home_configuration, "home_configuration"),
        ]:
            if arr.shape != (n,):
                raise ValueError(f"{label} must have length {n}")
        if self.joint_axes.shape != (n, 3):
            raise ValueError("joint_axes must be (n, 3)")
        if np.any(self.link_masses <= 0) or np.any(self.link_lengths <= 0):
            raise ValueError("masses and lengths must be positive")
        if np.any(self.link_coms < 0) or np.any(self.link_coms > self.link_lengths):
            raise ValueError("COM offsets must lie within [0, length]")
        if np.any(self.viscous_damping <= 0):
            raise ValueError("viscous damping must be positive")
        if np.any(self.q_min >= self.q_max):
            raise ValueError("joint limits must satisfy q_min < q_max")
        if not self.within_limits(self.home_configuration):
            raise ValueError("home configuration violates joint limits")
        norms = np.linalg.norm(self.joint_axes, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("joint axes must be unit vectors")

    # -- derived quantities ------------------------------------------------

    @property
    def joint_limits(self) -> np.ndarray:
        return np.stack([self.q_min, self.q_max], axis=1)

    @property
    def planar(self) -> bool:
        """True when all joints share the z axis and gravity lies in x-y."""
        axes_z = np.allclose(np.abs(self.joint_axes[:, 2]), 1.0) and np.allclose(
            self.joint_axes[:, :2], 0.0
        )
        return axes_z and abs(self.gravity[2]) == 0.0

    @property
    def workspace_dim(self) -> int:
        return 2 if self.planar else 3

    @property
    def torque_scale(self) -> float:
        """Upper bound style magnitude: g * sum_i m_i * reach_i."""
        g = float(np.linalg.norm(self.gravity))
        reach = np.cumsum(self.link_lengths) - self.link_lengths + self.link_coms
        return float(g * np.sum(self.link_masses * reach)) or 1.0

    def _params(self):
        return (
            self.joint_axes,
            self.link_lengths,
            self.link_coms,
            self.link_masses,
            self.rotor_inertia,
            self.gravity,
        )

    # -- statics -----------------------------------------------------------

    def gravity_term(self, q) -> np.ndarray:
        """Torque balancing gravity at q (= grad of potential energy)."""
        q = np.asarray(q, dtype=float)
        out = np.empty(self.n)
        _kernels.gravity_term(*self._params(), q, out)
        return out

    def gravity_batch(self, Q) -> np.ndarray:
        Q = np.ascontiguousarray(Q, dtype=float)
        out = np.empty_like(Q)
        _kernels.gravity_batch(*self._params(), Q, out)
        return out

    def potential_energy(self, q) -> float:
        """Gravitational potential of all link COMs, zero offset at q = 0.

        Plain-numpy chain walk (kept independent of the compiled inverse
        dynamics so it can serve as an oracle for gravity_term).
        """
        q = np.asarray(q)
        R = np.eye(3)
        p = np.zeros(3)
        u = 0.0
        u0 = 0.0
        for i in range(self.n):
            R = R @ _axis_rotation(self.joint_axes[i], q[i])
            com = p + self.link_coms[i] * R[:, 0]
            u -= self.link_masses[i] * float(self.gravity @ com)
            p = p + self.link_lengths[i] * R[:, 0]
        # subtract the stretched-out (q = 0) reference so U(0) = 0
        reach = np.cumsum(self.link_lengths) - self.link_lengths + self.link_coms
        for i in range(self.n):
            u0 -= self.link_masses[i] * reach[i] * float(self.gravity[0])
        return float(u - u0)

    def gravity_jacobian(self, q, h: float = 1e-6) -> np.ndarray:
        """d G / d q by central differences (Hessian of the potential)."""
        q = np.asarray(q, dtype=float)
        J = np.empty((self.n, self.n))
        for j in range(self.n):
            dq = np.zeros(self.n)
            dq[j] = h
            J[:, j] = (self.gravity_term(q + dq) - self.gravity_term(q - dq)) / (2 * h)
        return 0.5 * (J + J.T)

    def mass_matrix(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        out = np.empty((self.n, self.n))
        _kernels.mass_matrix(
            self.joint_axes, self.link_lengths, self.link_coms,
            self.link_masses, self.rotor_inertia, q, out,
        )
        return out

    # -- kinematics ----------------------------------------------------------

    def forward_kinematics(self, q) -> np.ndarray:
        """End-effector position; 2-vector for planar arms, else 3-vector."""
        q = np.asarray(q)
        R = np.eye(3)
        p = np.zeros(3)
        for i in range(self.n):
            R = R @ _axis_rotation(self.joint_axes[i], q[i])
            p = p + self.link_lengths[i] * R[:, 0]
        return p[: self.workspace_dim].copy()

    def fk_batch(self, Q) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        return np.array([self.forward_kinematics(q) for q in Q])

    def within_limits(self, q) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.q_min) and np.all(q <= self.q_max))

    # -- dynamics ------------------------------------------------------------

    def settle(self, q0, tau, params: SettleParams | None = None, qd0=None) -> SettleOutcome:
        """Apply a constant torque from (q0, qd0) until settled/limit/timeout."""
        params = params or SettleParams()
        q0 = np.asarray(q0, dtype=float)
        qd0 = np.zeros(self.n) if qd0 is None else np.asarray(qd0, dtype=float)
        tau = np.asarray(tau, dtype=float)
        code, q, qd, steps = _kernels.settle(
            *self._params(), self.viscous_damping, self.q_min, self.q_max,
            q0, qd0, tau, params.dt, params.vel_tol, params.eq_tol,
            params.window_steps, params.max_steps,
            *_kernels.workspace(self.n),
        )
        return SettleOutcome(_STATUS_FROM_CODE[code], q, qd, int(steps))

    def play_torques(self, q0, qd0, torques, steps_per_sample: int, dt: float):
        """Apply a sequence of torques, each for steps_per_sample steps.
        Returns (status, q, qd); stops at the first joint-limit crossing."""
        torques = np.ascontiguousarray(torques, dtype=float)
        code, q, qd = _kernels.run_torque_sequence(
            *self._params(), self.viscous_damping, self.q_min, self.q_max,
            np.asarray(q0, dtype=float), np.asarray(qd0, dtype=float),
            torques, int(steps_per_sample), float(dt),
            *_kernels.workspace(self.n),
        )
        return _STATUS_FROM_CODE[code], q, qd

    def simulate(self, q0, qd0, tau, dt, n_steps, stride=1):
        """Record a constant-torque trajectory (no limit handling)."""
        return _kernels.simulate_trajectory(
            *self._params(), self.viscous_damping,
            np.asarray(q0, dtype=float), np.asarray(qd0, dtype=float),
            np.asarray(tau, dtype=float), float(dt), int(n_steps), int(stride),
            *_kernels.workspace(self.n),
        )

    # -- config I/O ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "gravity": self.gravity.tolist(),
            "home": self.home_configuration.tolist(),
            "links": [
                {
                    "length": float(self.link_lengths[i]),
                    "mass": float(self.link_masses[i]),
                    "com": float(self.link_coms[i]),
                    "axis": self.joint_axes[i].tolist(),
                    "q_min": float(self.q_min[i]),
                    "q_max": float(self.q_max[i]),
                    "damping": float(self.viscous_damping[i]),
                    "rotor_inertia": float(self.rotor_inertia[i]),
                }
                for i in range(self.n)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ManipulatorModel":
        links = data["links"]
        return cls(
            link_lengths=[lk["length"] for lk in links],
            link_masses=[lk["mass"] for lk in links],
            link_coms=[lk["com"] for lk in links],
            joint_axes=[lk["axis"] for lk in links],
            joint_limits=[[lk["q_min"], lk["q_max"]] for lk in links],
            home_configuration=data["home"],
            gravity=data.get("gravity", (0.0, -9.81, 0.0)),
            viscous_damping=[lk.get("damping", 1.0) for lk in links],
            rotor_inertia=[lk.get("rotor_inertia", 1e-3) for lk in links],
            name=data.get("name", "robot"),
        )


def _axis_rotation(axis, angle):
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = axis
    return np.array([
        [c + x * x * (1 - c), x * y * (1 - c) - z * s, x * z * (1 - c) + y * s],
        [y * x * (1 - c) + z * s, c + y * y * (1 - c), y * z * (1 - c) - x * s],
        [z * x * (1 - c) - y * s, z * y * (1 - c) + x * s, c + z * z * (1 - c)],
    ])


def load_robot(name_or_path: str | Path) -> ManipulatorModel:
    """Load a robot model from a bundled config name or a YAML file path."""
    path = Path(name_or_path)
    if path.suffix in (".yaml", ".yml") and path.exists():
        text = path.read_text()
    else:
        ref = resources.files("ismlearn").joinpath(f"configs/robots/{name_or_path}.yaml")
        if not ref.is_file():
            raise FileNotFoundError(f"no robot config named {name_or_path!r}")
        text = ref.read_text()
    return ManipulatorModel.from_dict(yaml.safe_load(text))

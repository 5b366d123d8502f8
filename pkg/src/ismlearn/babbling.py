"""Modified online goal babbling for inverse statics.

Each step: predict the holding torque for the current intermediate target,
add correlated exploratory noise, clip the command into the estimated set
of static torques, let the plant settle under the command, weight the
observed outcome by direction agreement, and update the learner. The plant
keeps its state between steps; it only resets to the home posture after a
joint-limit violation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .learners import LocalLinearMap, TrainingSample
from .robot import ManipulatorModel, SettleParams, SettleStatus
from .sst import SSTEstimate


def intermediate_targets(start, goal, count: int) -> np.ndarray:
    """count points linearly interpolating (start -> goal], endpoint included."""
    if count < 1:
        raise ValueError("need at least one intermediate target")
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    steps = np.arange(1, count + 1)[:, None] / count
    return start[None, :] + steps * (goal - start)[None, :]


def direction_weight(target, target_prev, observed, observed_prev) -> float:
    """Half-cosine agreement between intended and observed displacement.

    1 for aligned, 0.5 for orthogonal, 0 for opposed; 0 when either
    displacement is zero-length (no directional information).
    """
    a = np.asarray(target, dtype=float) - np.asarray(target_prev, dtype=float)
    b = np.asarray(observed, dtype=float) - np.asarray(observed_prev, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    c = float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    return 0.5 * (1.0 + c)


class NoiseState:
    """Correlated exploratory torque noise sigma(q, t) = E q + e.

    Each entry of E and e follows a mean-reverting random walk (reversion
    rate 1/timescale, innovation sd amplitude/sqrt(timescale)) reflected at
    +-3 amplitude, so consecutive outputs are strongly correlated.
    """

    def __init__(self, n: int, amplitude: float, timescale: float, rng):
        self.n = n
        self.amplitude = float(amplitude)
        self.timescale = float(timescale)
        self.rng = rng
        self.matrix = np.zeros((n, n))
        self.offset = np.zeros(n)

    def sample(self, target) -> np.ndarray:
        """Noise at the current state, then advance the walk one step."""
        sigma = self.matrix @ np.asarray(target, dtype=float) + self.offset
        if self.amplitude > 0.0:
            self._advance()
        return sigma

    def _advance(self):
        decay = 1.0 - 1.0 / self.timescale
        sd = self.amplitude / math.sqrt(self.timescale)
        bound = 3.0 * self.amplitude
        for arr in (self.matrix, self.offset):
            arr *= decay
            arr += self.rng.normal(0.0, sd, size=arr.shape)
            # reflect at +-bound
            over = np.abs(arr) > bound
            arr[over] = np.sign(arr[over]) * (2.0 * bound) - arr[over]


@dataclass
class GoalBabblingConfig:
    goals: np.ndarray
    targets_per_segment: int = 10  # intermediate targets per goal segment
    iterations: int = 1
    p_home: float = 1e-4
    noise_amplitude: float = 0.3
    noise_timescale: float = 50.0
    settle: SettleParams = field(default_factory=SettleParams)
    llm_insertion_radius: float = 0.35
    llm_learning_rate: float = 0.1
    llm_neighbors: int = 3
    llm_lr_decay: bool = True
    llm_kernel_width: float | None = None

    def __post_init__(self):
        self.goals = np.atleast_2d(np.asarray(self.goals, dtype=float))
        if not 0.0 <= self.p_home <= 1.0:
            raise ValueError("p_home must lie in [0, 1]")
        if self.targets_per_segment < 1 or self.iterations < 0:
            raise ValueError("bad schedule parameters")


class RunLog:
    """Per-step experiment log with a stable CSV schema."""

    def __init__(self, n: int):
        self.n = n
        self.rows: list[list] = []

    def append(self, step, target, predicted, noise, command_raw, command,
               clipped, observed, weight, event=""):
        self.rows.append([
            step,
            *np.asarray(target, dtype=float),
            *np.asarray(predicted, dtype=float),
            *np.asarray(noise, dtype=float),
            *np.asarray(command_raw, dtype=float),
            *np.asarray(command, dtype=float),
            int(clipped),
            *np.asarray(observed, dtype=float),
            float(weight),
            float(np.linalg.norm(np.asarray(target) - np.asarray(observed))),
            event,
        ])

    def header(self) -> list[str]:
        def cols(stem):
            return [f"{stem}_{i}" for i in range(self.n)]

        return (
            ["step"] + cols("target_q") + cols("predicted_tau") + cols("noise")
            + cols("tau_raw") + cols("tau_exec") + ["clipped"] + cols("observed_q")
            + ["direction_weight", "joint_error", "event"]
        )

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])

    def events(self) -> list[str]:
        return [row[-1] for row in self.rows]

    def clipped_flags(self) -> np.ndarray:
        return np.array([row[1 + 5 * self.n] for row in self.rows], dtype=int)

    def observed(self) -> np.ndarray:
        ofs = 1 + 5 * self.n + 1
        return np.array([row[ofs : ofs + self.n] for row in self.rows], dtype=float)

    def targets(self) -> np.ndarray:
        return np.array([row[1 : 1 + self.n] for row in self.rows], dtype=float)

    def executed_torques(self) -> np.ndarray:
        ofs = 1 + 4 * self.n
        return np.array([row[ofs : ofs + self.n] for row in self.rows], dtype=float)

    def weights(self) -> np.ndarray:
        return np.array([row[2 + 6 * self.n] for row in self.rows], dtype=float)


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


class GBContext:
    """Shared state of the babbling loop: plant, learner, noise, SST, log."""

    def __init__(
        self,
        model: ManipulatorModel,
        sst: SSTEstimate,
        llm: LocalLinearMap,
        noise: NoiseState,
        settle_params: SettleParams,
        expansion=None,
    ):
        self.model = model
        self.sst = sst
        self.llm = llm
        self.noise = noise
        self.settle_params = settle_params
        self.expansion = expansion  # optional symmetry set for sample multiplication
        self.plant_q = model.home_configuration.copy()
        self.prev_target = model.home_configuration.copy()
        self.prev_observed = model.home_configuration.copy()
        self.log = RunLog(model.n)
        self.step_count = 0

    def reset_home(self):
        self.plant_q = self.model.home_configuration.copy()
        self.prev_target = self.plant_q.copy()
        self.prev_observed = self.plant_q.copy()

    def step(self, target, event="") -> TrainingSample | None:
        """One GBScheme pass toward an intermediate target."""
        target = np.asarray(target, dtype=float)
        self.step_count += 1
        predicted = self.llm.predict(target)
        sigma = self.noise.sample(target)
        command_raw = predicted + sigma
        clipped = not self.sst.contains(command_raw)
        command = self.sst.project_to_boundary(command_raw) if clipped else command_raw

        outcome = self.model.settle(self.plant_q, command, self.settle_params)
        if outcome.status is not SettleStatus.SETTLED:
            tag = "limit_reset" if outcome.status is SettleStatus.LIMIT_VIOLATION else "timeout"
            self.log.append(
                self.step_count, target, predicted, sigma, command_raw, command,
                clipped, self.plant_q, 0.0, (event + "+" + tag).lstrip("+"),
            )
            self.reset_home()
            return None

        observed = outcome.q_final
        weight = direction_weight(target, self.prev_target, observed, self.prev_observed)
        sample = TrainingSample(command, observed, weight)
        self.llm.update(sample)
        if self.expansion is not None:
            for q_img, tau_img in self.expansion.expand(observed, command)[1:]:
                self.llm.update(TrainingSample(tau_img, q_img, weight))
        self.log.append(
            self.step_count, target, predicted, sigma, command_raw, command,
            clipped, observed, weight, event,
        )
        self.plant_q = observed
        self.prev_target = target
        self.prev_observed = observed
        return sample


def run_goal_babbling(
    model: ManipulatorModel,
    sst: SSTEstimate,
    cfg: GoalBabblingConfig,
    seed: int,
    expansion=None,
) -> tuple[LocalLinearMap, RunLog]:
    """Iterate the goal set, babbling along interpolated target paths.

    Randomness is split into independent streams (goal order, noise, home
    substitution) derived from the single seed.
    """
    if len(cfg.goals) == 0:
        raise ValueError("goal set must be nonempty")
    ss = np.random.SeedSequence(seed)
    rng_order, rng_noise, rng_home = [np.random.default_rng(s) for s in ss.spawn(3)]

    tau_home = model.gravity_term(model.home_configuration)
    llm = LocalLinearMap(
        model.home_configuration, tau_home,
        insertion_radius=cfg.llm_insertion_radius,
        learning_rate=cfg.llm_learning_rate,
        neighbors=cfg.llm_neighbors,
        lr_decay=cfg.llm_lr_decay,
        kernel_width=cfg.llm_kernel_width,
    )
    noise = NoiseState(model.n, cfg.noise_amplitude, cfg.noise_timescale, rng_noise)
    ctx = GBContext(model, sst, llm, noise, cfg.settle, expansion)

    path_anchor = model.home_configuration.copy()
    for _ in range(cfg.iterations):
        order = rng_order.permutation(len(cfg.goals))
        for gi in order:
            goal = cfg.goals[gi]
            for target in intermediate_targets(path_anchor, goal, cfg.targets_per_segment):
                event = ""
                if rng_home.uniform() < cfg.p_home:
                    target = model.home_configuration.copy()
                    event = "home"
                ctx.step(target, event)
            path_anchor = cfg.goals[gi].copy()
    return llm, ctx.log

"""Modified direction sampling: goal babbling without predefined goals.

Targets advance along a random direction in configuration space with a
fixed step width; when the observed motion deviates from the intended one
by more than a right angle (negative inner product of the displacements),
the learner commands a return to the previous observed configuration and a
fresh direction is drawn. Targets are clamped to a configured exploration
region (a joint-space box, or the bijective fundamental domain when
symmetries are exploited).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .babbling import GBContext, NoiseState, RunLog
from .learners import LocalLinearMap
from .robot import ManipulatorModel, SettleParams
from .sst import SSTEstimate


def deviation_score(target, target_prev, observed, observed_prev) -> float:
    """Inner product of intended and observed displacement; negative means
    the motion deviated beyond a right angle and the direction is redrawn."""
    a = np.asarray(target, dtype=float) - np.asarray(target_prev, dtype=float)
    b = np.asarray(observed, dtype=float) - np.asarray(observed_prev, dtype=float)
    return float(a @ b)


class BoxRegion:
    """Axis-aligned exploration region with componentwise clamping."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)

    def contains(self, q) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.lo) and np.all(q <= self.hi))

    def clamp(self, q, prev=None) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self.lo, self.hi)


@dataclass
class DirectionSamplerState:
    """Target generator walking along a unit direction with step width eps."""

    direction: np.ndarray
    step_width: float
    joint_weights: np.ndarray
    prev_target: np.ndarray
    deviation_threshold: float = 0.0  # on the displacement inner product

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=float)
        self.joint_weights = np.asarray(self.joint_weights, dtype=float)
        self.prev_target = np.asarray(self.prev_target, dtype=float)
        if np.linalg.norm(self.direction) <= 0:
            raise ValueError("direction must be nonzero")
        if self.step_width <= 0 or np.any(self.joint_weights <= 0):
            raise ValueError("step width and joint weights must be positive")

    def next_target(self) -> np.ndarray:
        """Advance by step_width / |w o dq| along the current direction."""
        scale = self.step_width / np.linalg.norm(self.joint_weights * self.direction)
        target = self.prev_target + scale * self.direction
        self.prev_target = target
        return target


def draw_direction(rng, n: int, joint_weights) -> np.ndarray:
    """Uniform direction on the unit sphere; redraws the measure-zero cases
    where the weighted norm would vanish."""
    w = np.asarray(joint_weights, dtype=float)
    while True:
        d = rng.normal(size=n)
        norm = np.linalg.norm(d)
        if norm < 1e-12:
            continue
        d = d / norm
        if np.linalg.norm(w * d) >= 1e-9:
            return d


@dataclass
class DirectionSamplingConfig:
    step_width: float = 0.05
    joint_weights: np.ndarray | None = None
    p_home: float = 1e-4
    redraw_after_home: bool = True
    noise_amplitude: float = 0.3
    noise_timescale: float = 50.0
    settle: SettleParams = field(default_factory=SettleParams)
    llm_insertion_radius: float = 0.35
    llm_learning_rate: float = 0.1
    llm_neighbors: int = 3
    llm_lr_decay: bool = True
    llm_kernel_width: float | None = None
    region: object = None  # anything with contains() and clamp()


def run_direction_sampling(
    model: ManipulatorModel,
    sst: SSTEstimate,
    cfg: DirectionSamplingConfig,
    seed: int,
    sample_budget: int,
    expansion=None,
) -> tuple[LocalLinearMap, RunLog]:
    """Explore along random directions for a fixed sample budget."""
    ss = np.random.SeedSequence(seed)
    rng_dir, rng_noise, rng_home = [np.random.default_rng(s) for s in ss.spawn(3)]

    weights = (
        np.ones(model.n) if cfg.joint_weights is None
        else np.asarray(cfg.joint_weights, dtype=float)
    )
    region = cfg.region or BoxRegion(model.q_min, model.q_max)

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

    state = DirectionSamplerState(
        direction=draw_direction(rng_dir, model.n, weights),
        step_width=cfg.step_width,
        joint_weights=weights,
        prev_target=model.home_configuration.copy(),
    )

    bounce = False
    for _ in range(sample_budget):
        event = ""
        if rng_home.uniform() < cfg.p_home:
            target = model.home_configuration.copy()
            event = "home"
        else:
            anchor = state.prev_target.copy()
            target = state.next_target()
            clamped = region.clamp(target, anchor)
            if not np.array_equal(clamped, target):
                event = "clamped"
                target = clamped
                # a wall that blocks most of the step acts like a bounce
                bounce = np.linalg.norm(target - anchor) < 0.25 * cfg.step_width
            state.prev_target = target

        prev_observed = ctx.prev_observed.copy()
        prev_target = ctx.prev_target.copy()
        sample = ctx.step(target, event)

        redraw = False
        if sample is None:
            redraw = True  # limit/timeout reset: restart the walk from home
            state.prev_target = region.clamp(ctx.plant_q.copy())
        else:
            score = deviation_score(target, prev_target, sample.configuration, prev_observed)
            if score < 0.0:
                # return toward the previous observed configuration using the
                # learner's own estimate (no oracle teleport), then redirect
                back = ctx.llm.predict(prev_observed)
                if not ctx.sst.contains(back):
                    back = ctx.sst.project_to_boundary(back)
                outcome = model.settle(ctx.plant_q, back, cfg.settle)
                if outcome.settled:
                    ctx.plant_q = outcome.q_final
                    ctx.prev_observed = outcome.q_final
                else:
                    ctx.reset_home()
                state.prev_target = region.clamp(ctx.plant_q.copy())
                ctx.log.rows[-1][-1] = (ctx.log.rows[-1][-1] + "+dir_change").lstrip("+")
                redraw = True
        if event == "home":
            state.prev_target = region.clamp(ctx.plant_q.copy())
            if cfg.redraw_after_home:
                redraw = True
        if redraw or bounce:
            state.direction = draw_direction(rng_dir, model.n, weights)
            bounce = False

    return llm, ctx.log

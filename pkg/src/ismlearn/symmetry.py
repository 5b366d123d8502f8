"""Discovery and exploitation of primary symmetries of the gravity term.

Different configurations can require the same holding torque up to sign
flips per joint. Affine relations q_img = S q + t with G(q_img) = signs *
G(q) (constant S, t) are the primary symmetries: they are probed by torque
profiles that keep returning to sign variants of a target torque, fitted by
linear regression over matched level-set configurations, closed into a
finite group action, and then used to multiply every executed training
sample into its full orbit. The fundamental domain of the action (one
configuration per admissible torque) is the bijective configuration-torque
set; exploring it alone suffices to learn the full mapping.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .robot import ManipulatorModel, SettleParams, SettleStatus

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class InsufficientData(ValueError):
    """Not enough level-set records (or consistent pairs) to fit relations."""


class ClosureOverflow(RuntimeError):
    """Relation closure exceeded the element cap; relations are inconsistent."""


def wrap_angle(x):
    """Wrap angles into [-pi, pi); revolute statics is 2 pi periodic."""
    return (np.asarray(x, dtype=float) + np.pi) % TWO_PI - np.pi


def wrap_to_limits(q, q_min, q_max):
    """Wrap full-circle coordinates into their limit cell, leave others."""
    q = np.array(q, dtype=float)
    full = (np.asarray(q_max) - np.asarray(q_min)) >= TWO_PI - 1e-9
    q[..., full] = q_min[full] + (q[..., full] - q_min[full]) % TWO_PI
    return q


def sign_variants(n: int) -> list[np.ndarray]:
    """All 2^n diagonal +-1 sign vectors, identity first."""
    return [np.array(s, dtype=float) for s in itertools.product((1.0, -1.0), repeat=n)]


# -- torque profiles ---------------------------------------------------------


@dataclass
class TorqueProfile:
    """Spline torque sequence between two sign variants of a target torque."""

    samples: np.ndarray  # (n_s, n)
    start_signs: np.ndarray
    end_signs: np.ndarray
    tau_star: np.ndarray

    @property
    def end_torque(self) -> np.ndarray:
        return self.end_signs * self.tau_star


def generate_torque_profile(tau_star, p_tau_lo, p_tau_hi, n_s: int, rng) -> TorqueProfile:
    """Clamped cubic spline through 1-3 random intermediate torques.

    Starts at one random sign variant of tau_star and ends at another; the
    spline has zero end-point derivatives so the final torque is approached
    smoothly before being held for settling.
    """
    if n_s < 4:
        raise ValueError("need at least 4 profile samples")
    tau_star = np.asarray(tau_star, dtype=float)
    n = tau_star.shape[0]
    variants = sign_variants(n)
    s1 = variants[rng.integers(len(variants))]
    s2 = variants[rng.integers(len(variants))]
    k = int(rng.integers(1, 4))
    inner = rng.uniform(np.asarray(p_tau_lo), np.asarray(p_tau_hi), size=(k, n))
    knots_y = np.vstack([s1 * tau_star, inner, s2 * tau_star])
    knots_t = np.linspace(0.0, n_s - 1.0, len(knots_y))
    spline = CubicSpline(knots_t, knots_y, bc_type="clamped")
    samples = spline(np.arange(n_s))
    samples[0] = s1 * tau_star
    samples[-1] = s2 * tau_star
    return TorqueProfile(samples, s1, s2, tau_star)


# -- level-set records --------------------------------------------------------


@dataclass
class LevelSetRecord:
    """Configurations found to hold sign variants of one target torque."""

    tau_star: np.ndarray
    configs: list = field(default_factory=list)
    signs: list = field(default_factory=list)  # sign variant realized by each config

    def add(self, q, sign, merge_radius: float = 5e-3) -> bool:
        q = np.asarray(q, dtype=float)
        for existing in self.configs:
            if np.linalg.norm(existing - q) <= merge_radius:
                return False
        self.configs.append(q)
        self.signs.append(np.asarray(sign, dtype=float))
        return True

    @property
    def cardinality(self) -> int:
        return len(self.configs)


def discover_symmetric_configurations(
    model: ManipulatorModel,
    tau_star,
    n_profiles: int = 200,
    seed: int = 0,
    p_n=(8, 40),
    p_tau_scale: float = 1.2,
    tau_box=None,
    settle_params: SettleParams | None = None,
    profile_step_time: float = 0.05,
    merge_radius: float = 5e-3,
    sst=None,
) -> LevelSetRecord:
    """Probe the plant with torque profiles and record settled level-set
    members (the discovery loop of the symmetry pipeline).

    Starts from the home posture; a joint-limit crossing during or after a
    profile sends the arm home and the sequence continues with the next
    profile. Settled configurations are deduplicated within merge_radius.
    When an SST estimate is passed, the observed holding torques are
    ingested into it afterwards.
    """
    tau_star = np.asarray(tau_star, dtype=float)
    params = settle_params or SettleParams()
    rng = np.random.default_rng(seed)
    if tau_box is None:
        # per-joint torque range from a quick configuration sweep
        probe = rng.uniform(model.q_min, model.q_max, size=(2048, model.n))
        bound = np.max(np.abs(model.gravity_batch(probe)), axis=0)
        tau_box = (-bound, bound)
    lo = p_tau_scale * np.asarray(tau_box[0], dtype=float)
    hi = p_tau_scale * np.asarray(tau_box[1], dtype=float)

    steps_per_sample = max(1, int(round(profile_step_time / params.dt)))
    record = LevelSetRecord(tau_star)
    witnessed = []
    q = model.home_configuration.copy()
    qd = np.zeros(model.n)
    for _ in range(n_profiles):
        n_s = int(rng.integers(p_n[0], p_n[1] + 1))
        profile = generate_torque_profile(tau_star, lo, hi, n_s, rng)
        status, q, qd = model.play_torques(q, qd, profile.samples, steps_per_sample, params.dt)
        if status is not SettleStatus.SETTLED:
            q = model.home_configuration.copy()
            qd = np.zeros(model.n)
            continue
        outcome = model.settle(q, profile.end_torque, params, qd0=qd)
        if outcome.status is SettleStatus.SETTLED:
            q = outcome.q_final
            qd = np.zeros(model.n)
            if record.add(q, profile.end_signs, merge_radius):
                witnessed.append(profile.end_torque)
        else:
            q = model.home_configuration.copy()
            qd = np.zeros(model.n)
    if sst is not None and witnessed:
        sst.add_samples(np.array(witnessed))
    return record


def level_set_configurations(
    model: ManipulatorModel,
    tau,
    grid_per_dim: int = 25,
    tol: float = 1e-9,
    merge_radius: float = 1e-4,
    max_iter: int = 60,
) -> tuple[np.ndarray, np.ndarray]:
    """All solutions of G(q) = tau inside the joint limits by multi-start
    Newton iteration from a coarse grid (analysis oracle; the plant itself
    can only settle into the stable subset).

    Returns (configs, stable) where stable marks positive-definite torque
    stiffness (the settle-reachable solutions).
    """
    tau = np.asarray(tau, dtype=float)
    n = model.n
    axes = [np.linspace(model.q_min[i], model.q_max[i], grid_per_dim, endpoint=False)
            for i in range(n)]
    Q = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    h = 1e-6
    for _ in range(max_iter):
        G = model.gravity_batch(Q) - tau[None, :]
        # batched finite-difference Jacobian columns
        J = np.empty((len(Q), n, n))
        for j in range(n):
            dq = np.zeros(n)
            dq[j] = h
            J[:, :, j] = (model.gravity_batch(Q + dq) - model.gravity_batch(Q - dq)) / (2 * h)
        try:
            step = np.linalg.solve(J, G[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            step = np.array([
                np.linalg.lstsq(J[i], G[i], rcond=None)[0] for i in range(len(Q))
            ])
        step = np.clip(step, -0.5, 0.5)
        Q = Q - step
    G = model.gravity_batch(Q)
    resid = np.max(np.abs(G - tau[None, :]), axis=1)
    good = Q[resid <= tol]
    good = wrap_to_limits(good, model.q_min, model.q_max)
    inside = np.all((good >= model.q_min) & (good <= model.q_max), axis=1)
    good = good[inside]
    uniq: list[np.ndarray] = []
    for q in good:
        if not any(np.linalg.norm(q - u) <= merge_radius for u in uniq):
            uniq.append(q)
    uniq_arr = np.array(sorted(uniq, key=tuple)) if uniq else np.empty((0, n))
    stable = np.array([
        bool(np.all(np.linalg.eigvalsh(model.gravity_jacobian(q)) > 0)) for q in uniq_arr
    ], dtype=bool)
    return uniq_arr, stable


def pick_torque_targets(
    model: ManipulatorModel, count: int, seed: int = 0,
    low: float = 0.25, high: float = 0.75,
) -> list[np.ndarray]:
    """Well-conditioned torque targets for symmetry discovery: witnessed
    torques whose components all sit in a middle band of their per-joint
    range (components near zero collapse sign variants onto each other,
    components near the extremes give tangent, hard-to-settle level sets)."""
    rng = np.random.default_rng(seed)
    probe = rng.uniform(model.q_min, model.q_max, size=(4096, model.n))
    scale = np.max(np.abs(model.gravity_batch(probe)), axis=0)
    targets = []
    while len(targets) < count:
        q = rng.uniform(model.q_min, model.q_max, model.n)
        tau = model.gravity_term(q)
        rel = np.abs(tau) / scale
        if np.all(rel >= low) and np.all(rel <= high):
            targets.append(tau)
    return targets


def oracle_level_set_record(
    model: ManipulatorModel, tau_star, stable_only: bool = False, grid_per_dim: int = 25
) -> LevelSetRecord:
    """Level-set record over all sign variants built from the ground-truth
    gravity term (root scan) instead of plant probing."""
    tau_star = np.asarray(tau_star, dtype=float)
    record = LevelSetRecord(tau_star)
    for sign in sign_variants(model.n):
        configs, stable = level_set_configurations(model, sign * tau_star, grid_per_dim)
        for q, st in zip(configs, stable):
            if stable_only and not st:
                continue
            record.add(q, sign, merge_radius=1e-4)
    return record


# -- relations ----------------------------------------------------------------


@dataclass
class SymmetryRelation:
    """Affine map q_img = linear @ q + offset with G(q_img) = signs * G(q).

    Equivalently the implicit constraint M q + N q_img = d with M = -linear,
    N = identity, d = offset (see implicit_coefficients).
    """

    linear: np.ndarray
    offset: np.ndarray
    torque_signs: np.ndarray
    residual: float = 0.0
    snapped: bool = True

    def apply(self, q) -> np.ndarray:
        return wrap_angle(self.linear @ np.asarray(q, dtype=float) + self.offset)

    def implicit_coefficients(self):
        """(M, N, d) with M q_source + N q_image = d."""
        n = len(self.offset)
        return -self.linear, np.eye(n), self.offset

    @property
    def is_identity(self) -> bool:
        n = len(self.offset)
        return (
            np.allclose(self.linear, np.eye(n), atol=1e-9)
            and np.allclose(wrap_angle(self.offset), 0.0, atol=1e-9)
        )

    def to_dict(self) -> dict:
        return {
            "linear": self.linear.tolist(),
            "offset": self.offset.tolist(),
            "torque_signs": self.torque_signs.tolist(),
            "residual": self.residual,
            "snapped": self.snapped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SymmetryRelation":
        return cls(
            np.asarray(d["linear"], dtype=float),
            np.asarray(d["offset"], dtype=float),
            np.asarray(d["torque_signs"], dtype=float),
            float(d["residual"]),
            bool(d["snapped"]),
        )


@dataclass
class MatchedClass:
    """Pairs (q_source, q_image) across records voting for one relation.

    linear_init/offset_init carry the wrap-consistent map found during
    matching; images are stored wrapped, so any refit must re-anchor their
    2 pi branches against this map first."""

    torque_signs: np.ndarray
    sources: np.ndarray
    images: np.ndarray
    record_support: int
    linear_init: np.ndarray = None
    offset_init: np.ndarray = None


def _fit_affine(sources, images):
    """Least squares q_img ~ S q + t; returns (S, t)."""
    X = np.hstack([sources, np.ones((len(sources), 1))])
    coef, *_ = np.linalg.lstsq(X, images, rcond=None)
    return coef[:-1].T, coef[-1]


def _wrap_consistent_refit(sources, images, S, t):
    """Refit after shifting each image by the 2 pi multiple nearest the
    current map (relations only hold modulo full turns)."""
    pred = sources @ S.T + t
    adj = images + TWO_PI * np.round((pred - images) / TWO_PI)
    return _fit_affine(sources, adj)


def match_correspondences(
    records: list[LevelSetRecord],
    residual_tol: float = 1e-2,
    min_records: int = 3,
    max_hypotheses: int = 4000,
    seed: int = 0,
) -> list[MatchedClass]:
    """Associate configurations across level-set records into relation
    classes by consistency voting.

    Candidate ordered pairs inside each record are grouped by the relative
    torque-sign vector; within a group, random minimal subsets hypothesize
    an affine map and pairs voting for it (residual below tolerance, spread
    over at least min_records records) form a class. Greedy extraction
    repeats until no hypothesis reaches the support threshold.
    """
    if len(records) < min_records:
        raise InsufficientData(f"need at least {min_records} level-set records")
    n = len(records[0].tau_star)
    rng = np.random.default_rng(seed)

    groups: dict[tuple, list] = {}
    for ri, rec in enumerate(records):
        for a in range(len(rec.configs)):
            for b in range(len(rec.configs)):
                if a == b:
                    continue
                rel = tuple((rec.signs[a] * rec.signs[b]).astype(int))
                groups.setdefault(rel, []).append((rec.configs[a], rec.configs[b], ri))

    classes: list[MatchedClass] = []
    minimal = n + 1
    # a minimal subset fits itself exactly, so a real class must be
    # over-determined well beyond the hypothesis pairs
    min_inliers = 2 * minimal + 1
    for rel in sorted(groups):
        pairs = groups[rel]
        if len(pairs) < min_inliers:
            continue
        sources = np.array([p[0] for p in pairs])
        images = np.array([p[1] for p in pairs])
        rec_ids = np.array([p[2] for p in pairs])
        active = np.ones(len(pairs), dtype=bool)
        while active.sum() >= min_inliers:
            act_idx = np.flatnonzero(active)
            best = None
            for _ in range(max_hypotheses):
                pick = rng.choice(act_idx, size=minimal, replace=False)
                X = np.hstack([sources[pick], np.ones((minimal, 1))])
                if np.linalg.matrix_rank(X, tol=1e-8) < n + 1:
                    continue
                S, t = _fit_affine(sources[pick], images[pick])
                resid = np.abs(wrap_angle(sources[act_idx] @ S.T + t - images[act_idx]))
                inliers = act_idx[np.max(resid, axis=1) <= residual_tol]
                support = len(np.unique(rec_ids[inliers]))
                if support < min_records or len(inliers) < min_inliers:
                    continue
                if best is None or len(inliers) > len(best[2]):
                    best = (S, t, inliers)
            if best is None:
                break
            S, t = _wrap_consistent_refit(sources[best[2]], images[best[2]], *best[:2])
            resid = np.abs(wrap_angle(sources[act_idx] @ S.T + t - images[act_idx]))
            inliers = act_idx[np.max(resid, axis=1) <= residual_tol]
            if len(np.unique(rec_ids[inliers])) < min_records or len(inliers) < min_inliers:
                break
            classes.append(
                MatchedClass(
                    np.array(rel, dtype=float),
                    sources[inliers].copy(),
                    images[inliers].copy(),
                    int(len(np.unique(rec_ids[inliers]))),
                    S.copy(),
                    t.copy(),
                )
            )
            active[inliers] = False

    if not classes:
        raise InsufficientData("no relation class reached the record-support threshold")
    return classes


def fit_relations(
    classes: list[MatchedClass],
    snap_tol: float = 1e-3,
) -> list[SymmetryRelation]:
    """Least-squares affine fit per matched class, then snapping.

    The structural prior snaps linear coefficients to {-1, 0, +1} and
    offsets to multiples of pi/2; a snap that pushes the residual above
    snap_tol is rejected and the relation is kept unsnapped with a warning.
    """
    relations = []
    for cls in classes:
        if len(cls.sources) < len(cls.sources[0]) + 1:
            raise InsufficientData("class has too few pairs for an affine fit")
        if cls.linear_init is not None:
            S, t = cls.linear_init, cls.offset_init
        else:
            S, t = _fit_affine(cls.sources, cls.images)
        S, t = _wrap_consistent_refit(cls.sources, cls.images, S, t)
        if abs(np.linalg.det(S)) < 1e-6:
            log.warning("skipping non-invertible relation candidate")
            continue
        raw_resid = float(
            np.max(np.abs(wrap_angle(cls.sources @ S.T + t - cls.images)))
        )
        if raw_resid > 0.05:
            log.warning("dropping incoherent relation class (residual %.2e)", raw_resid)
            continue
        S_snap = np.clip(np.round(S), -1.0, 1.0)
        t_snap = np.round(t / (np.pi / 2.0)) * (np.pi / 2.0)
        snap_resid = float(
            np.max(np.abs(wrap_angle(cls.sources @ S_snap.T + t_snap - cls.images)))
        )
        if snap_resid <= snap_tol and abs(np.linalg.det(S_snap)) > 1e-9:
            relations.append(
                SymmetryRelation(S_snap, wrap_angle(t_snap), cls.torque_signs, snap_resid, True)
            )
        else:
            log.warning(
                "snap rejected (residual %.2e > %.1e); keeping unsnapped relation",
                snap_resid, snap_tol,
            )
            relations.append(
                SymmetryRelation(S, wrap_angle(t), cls.torque_signs, raw_resid, False)
            )
    return relations


# -- closure and the bijective set ---------------------------------------------


class SPS:
    """Closure of the discovered relations: a finite affine action on the
    configuration torus, identity included."""

    def __init__(self, elements: list[SymmetryRelation]):
        self.elements = elements

    @property
    def n_sym(self) -> int:
        return len(self.elements)

    def orbit(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return np.array([el.apply(q) for el in self.elements])

    def to_dict(self) -> dict:
        return {
            "format": "relations-v1",
            "elements": [el.to_dict() for el in self.elements],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SPS":
        if data.get("format") != "relations-v1":
            raise ValueError("unsupported relations artifact format")
        return cls([SymmetryRelation.from_dict(d) for d in data["elements"]])

    def save(self, path, extra: dict | None = None):
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        Path(path).write_text(json.dumps(payload, sort_keys=True))

    @classmethod
    def load(cls, path) -> "SPS":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _same_element(a: SymmetryRelation, b: SymmetryRelation, atol=1e-4) -> bool:
    return (
        np.allclose(a.linear, b.linear, atol=atol)
        and np.allclose(wrap_angle(a.offset - b.offset), 0.0, atol=atol)
        and np.array_equal(a.torque_signs, b.torque_signs)
    )


def _compose(first: SymmetryRelation, second: SymmetryRelation) -> SymmetryRelation:
    """Relation applying `first` then `second`."""
    return SymmetryRelation(
        second.linear @ first.linear,
        wrap_angle(second.linear @ first.offset + second.offset),
        second.torque_signs * first.torque_signs,
        max(first.residual, second.residual),
        first.snapped and second.snapped,
    )


def _invert(rel: SymmetryRelation) -> SymmetryRelation:
    inv = np.linalg.inv(rel.linear)
    return SymmetryRelation(
        inv, wrap_angle(-inv @ rel.offset), rel.torque_signs, rel.residual, rel.snapped
    )


def sps_closure(relations: list[SymmetryRelation], cap: int | None = None) -> SPS:
    """Close the relation set under composition and inversion (torus wrap),
    capping at 2^(n+2) elements."""
    if not relations:
        raise ValueError("need at least one relation")
    n = len(relations[0].offset)
    cap = cap or 2 ** (n + 2)
    identity = SymmetryRelation(np.eye(n), np.zeros(n), np.ones(n))
    elements = [identity]

    def push(el):
        for existing in elements:
            if _same_element(existing, el):
                return False
        elements.append(el)
        return True

    frontier = []
    for rel in relations:
        for el in (rel, _invert(rel)):
            if push(el):
                frontier.append(el)
    while frontier:
        if len(elements) > cap:
            raise ClosureOverflow(f"closure exceeded cap of {cap} elements")
        el = frontier.pop()
        for other in list(elements):
            for comp in (_compose(el, other), _compose(other, el)):
                if push(comp):
                    frontier.append(comp)
    if len(elements) > cap:
        raise ClosureOverflow(f"closure exceeded cap of {cap} elements")
    return SPS(elements)


def expand_sample(sps: SPS, q, tau, q_min, q_max) -> list[tuple[np.ndarray, np.ndarray]]:
    """All symmetric images of one executed sample, original first, images
    outside the joint limits dropped."""
    q = np.asarray(q, dtype=float)
    tau = np.asarray(tau, dtype=float)
    out = [(q, tau)]
    seen = [q]
    for el in sps.elements:
        if el.is_identity:
            continue
        qi = wrap_to_limits(el.apply(q), q_min, q_max)
        if np.any(qi < q_min) or np.any(qi > q_max):
            continue
        if any(np.linalg.norm(qi - s) <= 1e-9 for s in seen):
            continue
        seen.append(qi)
        out.append((qi, el.torque_signs * tau))
    return out


class SampleExpander:
    """Callable bundle of a symmetry set and the limit box for sample
    multiplication inside learning loops."""

    def __init__(self, sps: SPS, q_min, q_max):
        self.sps = sps
        self.q_min = np.asarray(q_min, dtype=float)
        self.q_max = np.asarray(q_max, dtype=float)

    def expand(self, q, tau):
        return expand_sample(self.sps, q, tau, self.q_min, self.q_max)


class BCTS:
    """Fundamental domain of the symmetry action, anchored at the home
    posture: every orbit is represented by its member closest to home
    (lexicographic order breaks ties). Contains exactly one representative
    per generic orbit, and the home configuration itself."""

    def __init__(self, sps: SPS, q_min, q_max, home=None):
        self.sps = sps
        self.q_min = np.asarray(q_min, dtype=float)
        self.q_max = np.asarray(q_max, dtype=float)
        self.home = (
            0.5 * (self.q_min + self.q_max) if home is None
            else np.asarray(home, dtype=float)
        )

    def _orbit_images(self, Q) -> np.ndarray:
        """(m, n_sym, n) wrapped orbit images of a batch of configurations."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        imgs = np.stack(
            [
                wrap_to_limits(
                    wrap_angle(Q @ el.linear.T + el.offset), self.q_min, self.q_max
                )
                for el in self.sps.elements
            ],
            axis=1,
        )
        return imgs

    def representative_batch(self, Q) -> np.ndarray:
        """Orbit representative per row: nearest to home, ties broken
        lexicographically. Keys are rounded so the exact distance ties
        produced by isometries fixing home resolve identically from every
        orbit member."""
        imgs = self._orbit_images(Q)
        imgs_r = np.round(imgs, 9)
        n = imgs.shape[2]
        d2 = np.round(np.sum((imgs_r - self.home) ** 2, axis=2), 9)
        cand = np.ones(imgs.shape[:2], dtype=bool)
        keys = [d2] + [imgs_r[:, :, j] for j in range(n)]
        for key in keys:
            masked = np.where(cand, key, np.inf)
            kmin = masked.min(axis=1, keepdims=True)
            cand &= masked == kmin
        best = np.argmax(cand, axis=1)
        return imgs[np.arange(imgs.shape[0]), best]

    def representative(self, q) -> np.ndarray:
        return self.representative_batch(np.asarray(q, dtype=float)[None, :])[0]

    def contains_batch(self, Q) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        Qw = wrap_to_limits(Q, self.q_min, self.q_max)
        reps = self.representative_batch(Qw)
        return np.all(np.abs(reps - Qw) <= 1e-9, axis=1)

    def contains(self, q) -> bool:
        return bool(self.contains_batch(np.asarray(q, dtype=float)[None, :])[0])

    def clamp(self, q, prev=None) -> np.ndarray:
        """Pull a configuration into the domain.

        With an in-domain anchor `prev`, bisect along the segment to the
        boundary (keeps an exploring walk locally coherent); otherwise fall
        back to the symmetric representative."""
        q = np.asarray(q, dtype=float)
        if self.contains(q):
            return q
        if prev is not None:
            prev = np.asarray(prev, dtype=float)
            if self.contains(prev):
                lo, hi = 0.0, 1.0
                for _ in range(30):
                    mid = 0.5 * (lo + hi)
                    if self.contains(prev + mid * (q - prev)):
                        lo = mid
                    else:
                        hi = mid
                return prev + lo * (q - prev)
        return self.representative(q)

    def volume_fraction(self, n_points: int = 100_000, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        Q = rng.uniform(self.q_min, self.q_max, size=(n_points, len(self.q_min)))
        return float(np.mean(self.contains_batch(Q)))

    def to_dict(self) -> dict:
        return {
            "format": "bcts-v1",
            "q_min": self.q_min.tolist(),
            "q_max": self.q_max.tolist(),
            "home": self.home.tolist(),
            "relations": self.sps.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BCTS":
        if data.get("format") != "bcts-v1":
            raise ValueError("unsupported BCTS artifact format")
        return cls(
            SPS.from_dict(data["relations"]),
            np.asarray(data["q_min"], dtype=float),
            np.asarray(data["q_max"], dtype=float),
            np.asarray(data["home"], dtype=float),
        )

    def save(self, path, extra: dict | None = None):
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        Path(path).write_text(json.dumps(payload, sort_keys=True))

    @classmethod
    def load(cls, path) -> "BCTS":
        return cls.from_dict(json.loads(Path(path).read_text()))


def construct_bcts(sps: SPS, q_min, q_max, home=None) -> BCTS:
    return BCTS(sps, q_min, q_max, home)


def partition_by_orbits(record: LevelSetRecord, sps: SPS, tol: float = 1e-3) -> list[list[int]]:
    """Group a record's configurations into orbits of the symmetry action."""
    configs = [np.asarray(q, dtype=float) for q in record.configs]
    unassigned = set(range(len(configs)))
    orbits = []
    while unassigned:
        i = min(unassigned)
        imgs = sps.orbit(configs[i])
        members = [
            j for j in unassigned
            if np.min(np.max(np.abs(wrap_angle(imgs - configs[j])), axis=1)) <= tol
        ]
        for j in members:
            unassigned.discard(j)
        orbits.append(sorted(members))
    return orbits


def relation_soundness(
    model: ManipulatorModel, relations: list[SymmetryRelation], n_points: int = 1000,
    seed: int = 0,
) -> float:
    """Worst-case torque mismatch |G(image) - signs * G(q)| over random q."""
    rng = np.random.default_rng(seed)
    Q = rng.uniform(model.q_min, model.q_max, size=(n_points, model.n))
    worst = 0.0
    for rel in relations:
        imgs = np.array([rel.apply(q) for q in Q])
        lhs = model.gravity_batch(imgs)
        rhs = rel.torque_signs[None, :] * model.gravity_batch(Q)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def filter_sound_relations(
    model: ManipulatorModel,
    relations: list[SymmetryRelation],
    tol: float = 1e-3,
    n_points: int = 200,
    seed: int = 0,
) -> list[SymmetryRelation]:
    """Keep only relations whose torque constraint holds globally.

    Level-set matching sees a handful of torque targets; coincidental
    affine fits between secondary-related configurations can survive it.
    A constant (primary) relation must satisfy G(image) = signs * G(q)
    everywhere, which this validates on random configurations.
    """
    kept = []
    for rel in relations:
        worst = relation_soundness(model, [rel], n_points, seed)
        if worst <= tol:
            kept.append(rel)
        else:
            log.info("rejecting relation (global torque mismatch %.2e)", worst)
    return kept

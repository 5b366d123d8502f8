"""Regression backends for the inverse statics estimate.

LocalLinearMap is the online learner: prototypes carry a local affine model
(center c, gain A, offset b) and predictions blend the nearest prototypes
with Gaussian kernel weights. Updates are single stochastic gradient steps
on the direction-weighted squared torque error, with prototype insertion
when a sample falls outside the current coverage radius.

BatchNet is a small tanh network (n -> hidden -> n) trained full-batch with
Adam, used for the offline lattice-sampling comparisons.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TrainingSample:
    """One executed torque with its observed configuration and weight."""

    torque: np.ndarray
    configuration: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("sample weight must lie in [0, 1]")


class NonFinite(RuntimeError):
    """Training loss diverged."""


class LocalLinearMap:
    """Incremental prototype regressor mapping configurations to torques."""

    def __init__(
        self,
        q_home,
        tau_home,
        insertion_radius: float = 0.35,
        learning_rate: float = 0.1,
        neighbors: int = 3,
        lr_decay: bool = True,
        blend: str = "knn",
        kernel_width: float | None = None,
    ):
        q_home = np.asarray(q_home, dtype=float)
        tau_home = np.asarray(tau_home, dtype=float)
        self.n = q_home.shape[0]
        self.insertion_radius = float(insertion_radius)
        self.kernel_width = float(kernel_width) if kernel_width else float(insertion_radius)
        self.learning_rate = float(learning_rate)
        self.neighbors = int(neighbors)
        self.lr_decay = bool(lr_decay)
        if blend not in ("knn", "soft"):
            raise ValueError("blend must be 'knn' or 'soft'")
        self.blend = blend
        self.centers = q_home[None, :].copy()
        self.gains = np.zeros((1, self.n, self.n))
        self.offsets = tau_home[None, :].copy()
        self.updates = 0

    @property
    def prototype_count(self) -> int:
        return len(self.centers)

    def _kernel(self, q):
        """(indices, normalized weights, displacements q - c_k)."""
        diff = q[None, :] - self.centers
        d2 = np.sum(diff * diff, axis=1)
        if self.blend == "knn" and len(d2) > self.neighbors:
            idx = np.argpartition(d2, self.neighbors)[: self.neighbors]
        else:
            idx = np.arange(len(d2))
        w = np.exp(-d2[idx] / (2.0 * self.kernel_width**2))
        s = w.sum()
        if s <= 1e-300:
            # far from everything: fall back to the nearest prototype
            j = idx[np.argmin(d2[idx])]
            idx = np.array([j])
            w = np.ones(1)
            s = 1.0
        return idx, w / s, diff[idx]

    def predict(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        idx, w, diff = self._kernel(q)
        pred = np.zeros(self.n)
        for k, i in enumerate(idx):
            pred += w[k] * (self.offsets[i] + self.gains[i] @ diff[k])
        return pred

    def predict_batch(self, Q) -> np.ndarray:
        return np.array([self.predict(q) for q in np.asarray(Q, dtype=float)])

    def update(self, sample: TrainingSample):
        """One weighted gradient step toward (configuration -> torque)."""
        q = np.asarray(sample.configuration, dtype=float)
        tau = np.asarray(sample.torque, dtype=float)
        if sample.weight <= 0.0:
            return
        d_min = np.min(np.linalg.norm(self.centers - q, axis=1))
        if d_min > self.insertion_radius:
            self._insert(q, tau)
        self.updates += 1
        step = self.learning_rate * sample.weight
        if self.lr_decay:
            step /= math.sqrt(self.updates)
        idx, w, diff = self._kernel(q)
        residual = tau - self.predict(q)
        for k, i in enumerate(idx):
            self.offsets[i] += step * w[k] * residual
            denom = float(diff[k] @ diff[k]) + self.insertion_radius**2
            self.gains[i] += step * w[k] * np.outer(residual, diff[k]) / denom

    def _insert(self, q, tau):
        # seed the new unit with the observed pair itself
        self.centers = np.vstack([self.centers, q[None, :]])
        self.offsets = np.vstack([self.offsets, np.asarray(tau, dtype=float)[None, :]])
        self.gains = np.concatenate([self.gains, np.zeros((1, self.n, self.n))])

    # -- checkpoint I/O ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "llm-v1",
            "insertion_radius": self.insertion_radius,
            "kernel_width": self.kernel_width,
            "learning_rate": self.learning_rate,
            "neighbors": self.neighbors,
            "lr_decay": self.lr_decay,
            "blend": self.blend,
            "updates": self.updates,
            "centers": self.centers.tolist(),
            "gains": self.gains.tolist(),
            "offsets": self.offsets.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LocalLinearMap":
        if data.get("format") != "llm-v1":
            raise ValueError(f"unsupported LLM checkpoint format: {data.get('format')!r}")
        centers = np.asarray(data["centers"], dtype=float)
        llm = cls(
            centers[0],
            np.asarray(data["offsets"], dtype=float)[0],
            insertion_radius=data["insertion_radius"],
            learning_rate=data["learning_rate"],
            neighbors=data["neighbors"],
            lr_decay=data["lr_decay"],
            blend=data["blend"],
            kernel_width=data.get("kernel_width"),
        )
        llm.centers = centers
        llm.offsets = np.asarray(data["offsets"], dtype=float)
        llm.gains = np.asarray(data["gains"], dtype=float)
        llm.updates = int(data["updates"])
        return llm

    def save(self, path, extra: dict | None = None):
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        Path(path).write_text(json.dumps(payload, sort_keys=True))

    @classmethod
    def load(cls, path) -> "LocalLinearMap":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- batch network -----------------------------------------------------------


@dataclass
class BatchTrainConfig:
    hidden: int = 20
    epochs: int = 5000
    step_size: float = 2e-2
    seed: int = 0
    target_rmse: float | None = None  # stop once the fit reaches this RMSE
    weight_decay: float = 0.0


class BatchNet:
    """Single-hidden-layer tanh network with linear output."""

    def __init__(self, w1, b1, w2, b2, x_shift, x_scale, y_shift, y_scale):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.x_shift, self.x_scale = x_shift, x_scale
        self.y_shift, self.y_scale = y_shift, y_scale

    def predict(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        single = q.ndim == 1
        X = np.atleast_2d(q)
        Xn = (X - self.x_shift) / self.x_scale
        H = np.tanh(Xn @ self.w1 + self.b1)
        Y = H @ self.w2 + self.b2
        out = Y * self.y_scale + self.y_shift
        return out[0] if single else out

    def save(self, path, extra: dict | None = None):
        """Flat float64 weight vector plus a JSON sidecar with shapes."""
        path = Path(path)
        flat = np.concatenate([a.ravel() for a in self._arrays()])
        np.save(path, flat)
        meta = {
            "format": "batchnet-v1",
            "shapes": [list(a.shape) for a in self._arrays()],
        }
        if extra:
            meta.update(extra)
        path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True))

    def _arrays(self):
        return [
            self.w1, self.b1, self.w2, self.b2,
            self.x_shift, self.x_scale, self.y_shift, self.y_scale,
        ]

    @classmethod
    def load(cls, path) -> "BatchNet":
        path = Path(path)
        flat = np.load(path if path.suffix == ".npy" else path.with_suffix(".npy"))
        meta = json.loads(path.with_suffix(".json").read_text())
        if meta.get("format") != "batchnet-v1":
            raise ValueError("unsupported network checkpoint format")
        arrays = []
        at = 0
        for shape in meta["shapes"]:
            size = int(np.prod(shape))
            arrays.append(flat[at : at + size].reshape(shape))
            at += size
        return cls(*arrays)


def _net_loss_grad(params, Xn, Yn, weight_decay):
    w1, b1, w2, b2 = params
    H = np.tanh(Xn @ w1 + b1)
    pred = H @ w2 + b2
    err = pred - Yn
    loss = float(np.mean(err**2))
    g_out = 2.0 * err / err.size
    gw2 = H.T @ g_out + weight_decay * w2
    gb2 = g_out.sum(axis=0)
    g_h = (g_out @ w2.T) * (1.0 - H**2)
    gw1 = Xn.T @ g_h + weight_decay * w1
    gb1 = g_h.sum(axis=0)
    return loss, (gw1, gb1, gw2, gb2)


def batch_train(samples, cfg: BatchTrainConfig) -> BatchNet:
    """Full-batch Adam on (configuration, torque) pairs; deterministic per seed."""
    X = np.asarray([np.asarray(q, dtype=float) for q, _ in samples])
    Y = np.asarray([np.asarray(t, dtype=float) for _, t in samples])
    if len(X) < 1:
        raise ValueError("need at least one sample")
    x_shift = X.mean(axis=0)
    x_scale = np.maximum(X.std(axis=0), 1e-9)
    y_shift = Y.mean(axis=0)
    y_scale = np.maximum(Y.std(axis=0), 1e-9)
    Xn = (X - x_shift) / x_scale
    Yn = (Y - y_shift) / y_scale

    rng = np.random.default_rng(cfg.seed)
    n_in = X.shape[1]
    n_out = Y.shape[1]
    w1 = rng.normal(0.0, 1.0 / math.sqrt(n_in), size=(n_in, cfg.hidden))
    b1 = np.zeros(cfg.hidden)
    w2 = rng.normal(0.0, 1.0 / math.sqrt(cfg.hidden), size=(cfg.hidden, n_out))
    b2 = np.zeros(n_out)
    params = [w1, b1, w2, b2]
    mom = [np.zeros_like(p) for p in params]
    vel = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    target = None
    if cfg.target_rmse is not None:
        # convert the torque-space target to the normalized loss scale
        target = float(np.mean((cfg.target_rmse / y_scale) ** 2))

    for epoch in range(1, cfg.epochs + 1):
        loss, grads = _net_loss_grad(params, Xn, Yn, cfg.weight_decay)
        if not np.isfinite(loss):
            raise NonFinite(f"training diverged at epoch {epoch}")
        if target is not None and loss <= target:
            break
        for p, g, mo, ve in zip(params, grads, mom, vel):
            mo *= beta1
            mo += (1 - beta1) * g
            ve *= beta2
            ve += (1 - beta2) * g * g
            mhat = mo / (1 - beta1**epoch)
            vhat = ve / (1 - beta2**epoch)
            p -= cfg.step_size * mhat / (np.sqrt(vhat) + eps)

    return BatchNet(*params, x_shift, x_scale, y_shift, y_scale)


def net_rmse(net: BatchNet, Q, T) -> float:
    pred = net.predict(np.asarray(Q, dtype=float))
    err = pred - np.asarray(T, dtype=float)
    return float(np.sqrt(np.mean(np.sum(err**2, axis=1) / err.shape[1])))


# -- rank-1 lattice sampling ---------------------------------------------------


def _cbc_generator(n: int, dim: int) -> np.ndarray:
    """Component-by-component construction of a rank-1 lattice generator.

    Greedily minimizes the standard product worst-case error criterion
    (Bernoulli-B2 kernel) for the point set {frac(k z / n)}.
    """
    k = np.arange(n)
    prod = np.ones(n)
    z = np.empty(dim, dtype=np.int64)
    candidates = np.array([c for c in range(1, n) if math.gcd(c, n) == 1], dtype=np.int64)
    for j in range(dim):
        frac = (k[None, :] * candidates[:, None]) % n / n
        omega = 1.0 + 2.0 * math.pi**2 * (frac * frac - frac + 1.0 / 6.0)
        scores = (omega * prod[None, :]).mean(axis=1)
        best = candidates[int(np.argmin(scores))]
        z[j] = best
        fb = (k * best) % n / n
        prod *= 1.0 + 2.0 * math.pi**2 * (fb * fb - fb + 1.0 / 6.0)
    return z


_GENERATOR_CACHE: dict[tuple[int, int], np.ndarray] = {}


def lattice_points(n: int, dim: int, seed=None) -> np.ndarray:
    """Rank-1 lattice x_k = frac(k z / n + shift) in the unit cube.

    The generator comes from the CBC construction (cached per (n, dim));
    the seed drives a random toroidal shift.
    """
    key = (n, dim)
    z = _GENERATOR_CACHE.get(key)
    if z is None:
        z = _cbc_generator(n, dim) if n > 1 else np.ones(dim, dtype=np.int64)
        _GENERATOR_CACHE[key] = z
    shift = np.zeros(dim) if seed is None else np.random.default_rng(seed).uniform(0, 1, dim)
    k = np.arange(n)[:, None]
    return (k * z[None, :] / n + shift) % 1.0


def lattice_sample(lo, hi, n: int, seed=None) -> np.ndarray:
    """Rank-1 lattice points scaled into the box [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if n < 1:
        raise ValueError("need n >= 1")
    pts = lattice_points(n, len(lo), seed)
    return lo + pts * (hi - lo)

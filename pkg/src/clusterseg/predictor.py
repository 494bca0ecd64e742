"""Prediction producers: exact oracle, noisy oracle, and a per-pixel MLP.

The oracle copies ground truth into a Prediction; the noisy oracle adds
seeded per-pixel noise (Gaussian per field, or feature noise drawn from a
uniform ball of fixed radius, which is what the clustering exactness bound
is stated in terms of). The MLP is a small double-precision network applied
independently at every pixel:

    input (10) -> ReLU(64) -> ReLU(64) -> {xi: 9, b: 1, eta: 2, mask: 2}

with input (r, g, b, x, y, z, depth, u/W, v/H, 1). It exists to exercise
the loss gradients and the training loop end to end; with no spatial
context it is not expected to reach the accuracy of a full image model.

Checkpoints are a versioned binary: magic, version, JSON layer table
(name -> shape), then little-endian float64 parameters in table order.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .annotation import Annotation
from .clustering import Prediction
from .errors import ClusterSegError, NonFiniteError, ShapeMismatchError
from .losses import LogitPrediction
from .scenegen import FrameBundle
from .seeding import STREAM_MODEL, STREAM_NOISE, stream_rng

CHECKPOINT_MAGIC = b"CSEGMLP\x01"
CHECKPOINT_VERSION = 1

INPUT_DIM = 10
HIDDEN_DIM = 64
HEAD_DIMS = {"xi": 9, "b": 1, "eta": 2, "mask": 2}


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model for noisy_predict.

    bound_mode "gaussian" perturbs features with sigma_xi per component;
    "uniform-ball" draws the 9-D feature error uniformly from a ball of
    radius ball_radius (strictly inside), ignoring sigma_xi.
    """

    sigma_xi: float = 0.0
    sigma_b: float = 0.0
    sigma_eta: float = 0.0
    flip_rate: float = 0.0
    bound_mode: str = "gaussian"
    ball_radius: float = 0.0

    def __post_init__(self):
        if self.bound_mode not in ("gaussian", "uniform-ball"):
            raise ClusterSegError(f"unknown bound_mode {self.bound_mode!r}")
        if min(self.sigma_xi, self.sigma_b, self.sigma_eta,
               self.flip_rate, self.ball_radius) < 0:
            raise ClusterSegError("noise magnitudes must be non-negative")


def oracle_predict(ann: Annotation) -> Prediction:
    """Ground truth copied into prediction space."""
    return Prediction(
        xi_hat=ann.xi_map.copy(),
        eta_hat=ann.eta_gt.astype(np.float64),
        b_hat=ann.b_map.copy(),
        mask_prob=ann.fg_mask.astype(np.float64),
    )


def oracle_logits(ann: Annotation, magnitude: float = 50.0) -> LogitPrediction:
    """Oracle with saturated classification logits, for loss tests and checks."""
    def to_logits(binary):
        out = np.where(binary[..., None], [-magnitude, magnitude],
                       [magnitude, -magnitude])
        return out.astype(np.float64)
    return LogitPrediction(
        xi_hat=ann.xi_map.copy(),
        b_hat=ann.b_map.copy(),
        eta_logits=to_logits(ann.eta_gt.astype(bool)),
        mask_logits=to_logits(ann.fg_mask.astype(bool)),
    )


def _uniform_ball(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    direction = rng.normal(size=(n, dim))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    # U^(1/dim) scaling gives a uniform ball; nextafter keeps it strictly open.
    scale = radius * rng.random(size=(n, 1)) ** (1.0 / dim)
    scale = np.minimum(scale, np.nextafter(radius, 0.0))
    return direction / norms * scale


def noisy_predict(ann: Annotation, spec: NoiseSpec, seed: int) -> Prediction:
    """Oracle plus seeded per-pixel noise as described by the NoiseSpec."""
    rng = stream_rng(seed, STREAM_NOISE)
    H, W = ann.fg_mask.shape
    pred = oracle_predict(ann)
    if spec.bound_mode == "uniform-ball":
        if spec.ball_radius > 0:
            eps = _uniform_ball(rng, H * W, pred.xi_hat.shape[-1], spec.ball_radius)
            pred.xi_hat = pred.xi_hat + eps.reshape(pred.xi_hat.shape)
    elif spec.sigma_xi > 0:
        pred.xi_hat = pred.xi_hat + rng.normal(0.0, spec.sigma_xi, size=pred.xi_hat.shape)
    if spec.sigma_b > 0:
        pred.b_hat = np.maximum(pred.b_hat + rng.normal(0.0, spec.sigma_b, size=(H, W)), 0.0)
    if spec.sigma_eta > 0:
        pred.eta_hat = np.clip(pred.eta_hat + rng.normal(0.0, spec.sigma_eta, size=(H, W)),
                               0.0, 1.0)
    if spec.flip_rate > 0:
        flips = rng.random(size=(H, W)) < spec.flip_rate
        pred.mask_prob = np.where(flips, 1.0 - pred.mask_prob, pred.mask_prob)
    return pred


@dataclass
class MlpModel:
    """Parameters of the per-pixel network, all float64."""

    params: dict

    @staticmethod
    def parameter_layout():
        layout = [("w1", (INPUT_DIM, HIDDEN_DIM)), ("b1", (HIDDEN_DIM,)),
                  ("w2", (HIDDEN_DIM, HIDDEN_DIM)), ("b2", (HIDDEN_DIM,))]
        for head, dim in HEAD_DIMS.items():
            layout.append((f"w_{head}", (HIDDEN_DIM, dim)))
            layout.append((f"b_{head}", (dim,)))
        return layout


def init_model(seed: int) -> MlpModel:
    """He-initialized weights, zero biases."""
    rng = stream_rng(seed, STREAM_MODEL)
    params = {}
    for name, shape in MlpModel.parameter_layout():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size=shape)
    return MlpModel(params=params)


def frame_features(frame: FrameBundle) -> np.ndarray:
    """Per-pixel input rows (N, 10) in row-major pixel order."""
    H, W = frame.depth.shape
    u = np.tile(np.arange(W, dtype=np.float64) / W, H)
    v = np.repeat(np.arange(H, dtype=np.float64) / H, W)
    return np.column_stack([
        frame.rgb.reshape(-1, 3).astype(np.float64),
        frame.xyz.reshape(-1, 3).astype(np.float64),
        frame.depth.reshape(-1).astype(np.float64),
        u, v, np.ones(H * W),
    ])


def mlp_forward(model: MlpModel, frame: FrameBundle):
    """Run the network over one frame.

    Returns (LogitPrediction, cache); the cache feeds mlp_backward.
    """
    H, W = frame.depth.shape
    p = model.params
    x = frame_features(frame)
    with np.errstate(invalid="ignore", over="ignore"):
        a1 = x @ p["w1"] + p["b1"]
        h1 = np.maximum(a1, 0.0)
        a2 = h1 @ p["w2"] + p["b2"]
        h2 = np.maximum(a2, 0.0)
        heads = {name: h2 @ p[f"w_{name}"] + p[f"b_{name}"] for name in HEAD_DIMS}
    for name, out in heads.items():
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"non-finite activations in head {name!r}")
    pred = LogitPrediction(
        xi_hat=heads["xi"].reshape(H, W, 9),
        b_hat=heads["b"].reshape(H, W),
        eta_logits=heads["eta"].reshape(H, W, 2),
        mask_logits=heads["mask"].reshape(H, W, 2),
    )
    cache = {"x": x, "h1": h1, "h2": h2}
    return pred, cache


def mlp_backward(model: MlpModel, cache: dict, breakdown) -> dict:
    """Parameter gradients from head-output gradients via the chain rule."""
    p = model.params
    x, h1, h2 = cache["x"], cache["h1"], cache["h2"]
    n = x.shape[0]
    head_grads = {
        "xi": breakdown.grad_xi.reshape(n, 9),
        "b": breakdown.grad_b.reshape(n, 1),
        "eta": breakdown.grad_eta_logits.reshape(n, 2),
        "mask": breakdown.grad_mask_logits.reshape(n, 2),
    }
    grads = {}
    dh2 = np.zeros_like(h2)
    for name, dy in head_grads.items():
        w = p[f"w_{name}"]
        if dy.shape[1] != w.shape[1]:
            raise ShapeMismatchError(
                f"gradient for head {name!r} has width {dy.shape[1]}, expected {w.shape[1]}")
        grads[f"w_{name}"] = h2.T @ dy
        grads[f"b_{name}"] = dy.sum(axis=0)
        dh2 += dy @ w.T
    da2 = dh2 * (h2 > 0)
    grads["w2"] = h1.T @ da2
    grads["b2"] = da2.sum(axis=0)
    dh1 = da2 @ p["w2"].T
    da1 = dh1 * (h1 > 0)
    grads["w1"] = x.T @ da1
    grads["b1"] = da1.sum(axis=0)
    return grads


@dataclass
class AdamState:
    """Moment accumulators and hyperparameters for Adam."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(model: MlpModel, grads: dict, state: AdamState):
    """One bias-corrected Adam update, in place. Returns (model, state)."""
    if not state.m:
        state.m = {k: np.zeros_like(v) for k, v in model.params.items()}
        state.v = {k: np.zeros_like(v) for k, v in model.params.items()}
    state.step += 1
    t = state.step
    for name, g in grads.items():
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        m_hat = state.m[name] / (1 - state.beta1 ** t)
        v_hat = state.v[name] / (1 - state.beta2 ** t)
        model.params[name] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return model, state


def save_checkpoint(path, model: MlpModel, state: AdamState | None = None,
                    next_epoch: int = 1):
    """Write the versioned binary checkpoint (optionally with Adam state)."""
    table = [{"name": n, "shape": list(model.params[n].shape)}
             for n, _ in MlpModel.parameter_layout()]
    header = {
        "version": CHECKPOINT_VERSION,
        "layers": table,
        "next_epoch": next_epoch,
        "adam": None if state is None else
                {"step": state.step, "lr": state.lr, "beta1": state.beta1,
                 "beta2": state.beta2, "eps": state.eps},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name, _ in MlpModel.parameter_layout():
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
        if state is not None:
            for name, _ in MlpModel.parameter_layout():
                fh.write(np.ascontiguousarray(state.m[name], dtype="<f8").tobytes())
            for name, _ in MlpModel.parameter_layout():
                fh.write(np.ascontiguousarray(state.v[name], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint. Returns (model, adam_state_or_None, next_epoch)."""
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ClusterSegError(f"{path}: not a model checkpoint")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ClusterSegError(f"unsupported checkpoint version {header['version']}")
        def read_table():
            out = {}
            for entry in header["layers"]:
                shape = tuple(entry["shape"])
                count = int(np.prod(shape)) if shape else 1
                raw = fh.read(count * 8)
                if len(raw) != count * 8:
                    raise ClusterSegError(f"{path}: truncated checkpoint")
                out[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
            return out
        model = MlpModel(params=read_table())
        state = None
        if header["adam"] is not None:
            a = header["adam"]
            state = AdamState(m=read_table(), v=read_table(), step=a["step"],
                              lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"])
    return model, state, int(header.get("next_epoch", 1))

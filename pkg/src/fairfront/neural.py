"""Minimal feed-forward network with hand-written reverse-mode gradients.

The model is a stack of dense layers split into a feature extractor and a
classifier head. Training combines cross-entropy with the differentiable
soft-CMI penalty under gradient-norm balancing: each raw loss is divided by
the batch-mean L2 norm of its per-sample gradient at the features, with the
norms treated as constants. That keeps both signals at comparable update
magnitude for any mixing weight.

No autodiff graph: gradients are chained explicitly, which keeps the module
free of framework dependencies and bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .estimators import SoftBatch, soft_cmi

ACTIVATIONS = ("relu", "identity")


class ShapeError(ValueError):
    """Inconsistent layer/batch shapes."""


@dataclass
class MLPModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    split: int  # layers [:split] form the feature extractor

    def __post_init__(self):
        n = len(self.weights)
        if not (n == len(self.biases) == len(self.activations)) or n == 0:
            raise ShapeError("weights, biases, activations must align and be nonempty")
        for i in range(n):
            if self.weights[i].shape[1] != self.biases[i].shape[0]:
                raise ShapeError(f"layer {i}: bias does not match weight columns")
            if i + 1 < n and self.weights[i].shape[1] != self.weights[i + 1].shape[0]:
                raise ShapeError(f"layers {i}->{i+1}: dimensions do not chain")
            if self.activations[i] not in ACTIVATIONS:
                raise ShapeError(f"unknown activation {self.activations[i]!r}")
        if not (0 <= self.split <= n):
            raise ShapeError("split index outside layer range")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "MLPModel":
        return MLPModel(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activations=list(self.activations),
            split=self.split,
        )


def init_mlp(in_dim: int, hidden: tuple[int, ...], out_dim: int, seed: int) -> MLPModel:
    """Glorot-uniform initialized MLP; hidden layers relu, head identity.

    The feature extractor is the hidden stack, so the split sits right
    before the final linear layer.
    """
    rng = np.random.default_rng(seed)
    dims = [in_dim, *hidden, out_dim]
    weights, biases, acts = [], [], []
    for i in range(len(dims) - 1):
        limit = np.sqrt(6.0 / (dims[i] + dims[i + 1]))
        weights.append(rng.uniform(-limit, limit, size=(dims[i], dims[i + 1])))
        biases.append(np.zeros(dims[i + 1]))
        acts.append("relu" if i < len(dims) - 2 else "identity")
    return MLPModel(weights=weights, biases=biases, activations=acts, split=len(dims) - 2)


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre_acts: list[np.ndarray]
    acts: list[np.ndarray]

    @property
    def logits(self) -> np.ndarray:
        return self.acts[-1]


def features_of(model: MLPModel, trace: ForwardTrace) -> np.ndarray:
    """Output of the feature extractor for each sample."""
    return trace.inputs if model.split == 0 else trace.acts[model.split - 1]


def forward(model: MLPModel, inputs: np.ndarray) -> ForwardTrace:
    x = np.ascontiguousarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ShapeError(f"inputs shape {x.shape} does not match in_dim {model.in_dim}")
    pre_acts, acts = [], []
    h = x
    for w, b, act in zip(model.weights, model.biases, model.activations):
        pre = h @ w + b
        pre_acts.append(pre)
        h = np.maximum(pre, 0.0) if act == "relu" else pre
        acts.append(h)
    if not np.all(np.isfinite(acts[-1])):
        raise FloatingPointError("non-finite activations in forward pass")
    return ForwardTrace(inputs=x, pre_acts=pre_acts, acts=acts)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient at the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ShapeError("label outside logit range")
    n = logits.shape[0]
    p = softmax(logits)
    # log-sum-exp form avoids ln(softmax) underflow at large margins
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(n), labels].mean())
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def soft_cmi_loss(logits: np.ndarray, y: np.ndarray, z: np.ndarray, card_y=None, card_z=None):
    """Soft-CMI penalty of softmax posteriors with its gradient at the logits."""
    p = softmax(logits)
    batch = SoftBatch(p=p, y=y, z=z, card_y=card_y, card_z=card_z)
    value, grad_p = soft_cmi(batch, return_grad=True)
    # chain through the softmax Jacobian row by row
    inner = (grad_p * p).sum(axis=1, keepdims=True)
    grad_logits = p * (grad_p - inner)
    return value, grad_logits


def _head_backward(model: MLPModel, trace: ForwardTrace, grad_logits: np.ndarray) -> np.ndarray:
    """Backpropagate a logit gradient through the head only, to the features."""
    g = grad_logits
    for i in range(len(model.weights) - 1, model.split - 1, -1):
        if model.activations[i] == "relu":
            g = g * (trace.pre_acts[i] > 0)
        g = g @ model.weights[i].T
    return g


def feature_grad_norms(model, trace, grad_logits_task, grad_logits_cmi):
    """Batch-mean per-sample L2 norms of each loss gradient at the features.

    The mean-of-norms convention is deliberate: per-sample norms of the
    batch-mean loss gradient, then averaged. These are detached scalars; no
    second-order signal flows through them.
    """
    g_task = _head_backward(model, trace, grad_logits_task)
    g_cmi = _head_backward(model, trace, grad_logits_cmi)
    n_task = float(np.linalg.norm(g_task, axis=1).mean())
    n_cmi = float(np.linalg.norm(g_cmi, axis=1).mean())
    return n_task, n_cmi


@dataclass(frozen=True)
class BalancedLossConfig:
    lam: float = 0.0
    eps: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("mixing weight must lie in [0, 1]")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def balanced_objective(
    task_loss: float,
    cmi_loss: float,
    n_task: float,
    n_cmi: float,
    cfg: BalancedLossConfig,
    grad_task: np.ndarray | None = None,
    grad_cmi: np.ndarray | None = None,
):
    """(1-lam) * task/(n_task+eps) + lam * cmi/(n_cmi+eps), norms held constant.

    When gradients are supplied, returns the identically-weighted gradient
    combination alongside the scalar.
    """
    if n_task < 0 or n_cmi < 0:
        raise ValueError("gradient norms must be nonnegative")
    w_task = (1.0 - cfg.lam) / (n_task + cfg.eps)
    w_cmi = cfg.lam / (n_cmi + cfg.eps)
    value = w_task * task_loss + w_cmi * cmi_loss
    if grad_task is None and grad_cmi is None:
        return value
    combined = w_task * grad_task + w_cmi * grad_cmi
    return value, combined


def backward(model: MLPModel, trace: ForwardTrace, grad_logits: np.ndarray):
    """Exact parameter gradients for an upstream gradient at the logits.

    Returns a flat list [dW0, db0, dW1, db1, ...] aligned with parameters().
    """
    if grad_logits.shape != trace.logits.shape:
        raise ShapeError("upstream gradient shape does not match logits")
    grads: list[np.ndarray] = []
    g = grad_logits
    for i in range(len(model.weights) - 1, -1, -1):
        if model.activations[i] == "relu":
            g = g * (trace.pre_acts[i] > 0)
        below = trace.inputs if i == 0 else trace.acts[i - 1]
        grads.append(g.sum(axis=0))  # db
        grads.append(below.T @ g)  # dW
        g = g @ model.weights[i].T
    grads.reverse()
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8


def init_adam(params, lr=1e-3, beta1=0.9, beta2=0.999, eps_opt=1e-8) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps_opt=eps_opt,
    )


def adam_step(state: AdamState, params, grads) -> None:
    """One bias-corrected Adam update, applied to params in place."""
    if len(params) != len(state.m) or len(grads) != len(state.m):
        raise ShapeError("params/grads do not match optimizer state")
    state.step += 1
    b1t = 1.0 - state.beta1**state.step
    b2t = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps_opt)


# --- checkpoint serialization ------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(model: MLPModel, path, adam: AdamState | None = None, extra: dict | None = None):
    doc = {
        "version": CHECKPOINT_VERSION,
        "dims": [int(model.in_dim)] + [int(w.shape[1]) for w in model.weights],
        "activations": model.activations,
        "split": model.split,
        "params": [p.ravel().tolist() for p in model.parameters()],
    }
    if adam is not None:
        doc["adam"] = {
            "step": adam.step,
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps_opt": adam.eps_opt,
            "m": [m.ravel().tolist() for m in adam.m],
            "v": [v.ravel().tolist() for v in adam.v],
        }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    dims = doc["dims"]
    weights, biases = [], []
    params = doc["params"]
    for i in range(len(dims) - 1):
        weights.append(np.asarray(params[2 * i]).reshape(dims[i], dims[i + 1]))
        biases.append(np.asarray(params[2 * i + 1]).reshape(dims[i + 1]))
    model = MLPModel(
        weights=weights, biases=biases, activations=list(doc["activations"]), split=int(doc["split"])
    )
    adam = None
    if "adam" in doc:
        a = doc["adam"]
        adam = AdamState(
            m=[np.asarray(m).reshape(p.shape) for m, p in zip(a["m"], model.parameters())],
            v=[np.asarray(v).reshape(p.shape) for v, p in zip(a["v"], model.parameters())],
            step=int(a["step"]),
            lr=a["lr"],
            beta1=a["beta1"],
            beta2=a["beta2"],
            eps_opt=a["eps_opt"],
        )
    return model, adam, doc.get("extra")

"""Learned detectors: small tanh MLPs trained by full-batch gradient descent.

Edge nodes use a binary classifier with a logistic output, the cloud a
4-class classifier with a softmax output over labels ``2j + k``.

Feature layout (fixed so dataset files are stable): interval-major, then
cell (cloud only, cell 1 first), then real parts before imaginary parts,
with the level index varying fastest.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .airlink import simulate_batch
from .config import SystemConfig, sample_qoi_pairs
from .detect import Detector
from .fronthaul import QuantizationSpec, quantize_samples, solve_quantization_variance

DEFAULT_HIDDEN = (32, 32)
DEFAULT_LR = 0.01
DEFAULT_EPOCHS = 3000
TRAIN_STREAM = 0x7EA1


class Target(str, enum.Enum):
    EDGE_CELL1 = "EdgeCell1"
    EDGE_CELL2 = "EdgeCell2"
    CLOUD = "Cloud"

    @property
    def n_classes(self) -> int:
        return 4 if self is Target.CLOUD else 2


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; ``model`` holds the last finite state."""

    def __init__(self, msg: str, model: "MlpModel", losses: list[float]):
        super().__init__(msg)
        self.model = model
        self.losses = losses


# ---------------------------------------------------------------------------
# datasets


def edge_features(y: np.ndarray) -> np.ndarray:
    """(N, L, D) complex -> (N, 2 L D) real."""
    y = np.asarray(y)
    return np.concatenate([y.real, y.imag], axis=-1).reshape(y.shape[0], -1)


def cloud_features(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """Two (N, L, D) complex arrays -> (N, 4 L D), cells interleaved per interval."""
    parts = np.stack([np.concatenate([y.real, y.imag], axis=-1) for y in (y1, y2)], axis=2)
    return parts.reshape(parts.shape[0], -1)


def feature_names(cfg: SystemConfig, target: Target) -> list[str]:
    cells = (1, 2) if target is Target.CLOUD else (1 if target is Target.EDGE_CELL1 else 2,)
    return [f"l{l}_c{c}_{part}{m}"
            for l in range(1, cfg.l_intervals + 1)
            for c in cells
            for part in ("re", "im")
            for m in range(1, cfg.dims + 1)]


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    target: Target
    cfg: SystemConfig | None = None
    seed: int | None = None
    names: list[str] | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.target = Target(self.target)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError("dataset needs an (N, D) input matrix with N >= 1")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("one label per input row required")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("dataset has non-finite inputs")
        if self.labels.min() < 0 or self.labels.max() >= self.target.n_classes:
            raise ValueError(f"labels out of range for {self.target.value}")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]


def targets_from(theta1, theta2, target: Target) -> np.ndarray:
    if target is Target.EDGE_CELL1:
        return np.asarray(theta1)
    if target is Target.EDGE_CELL2:
        return np.asarray(theta2)
    return 2 * np.asarray(theta1) + np.asarray(theta2)


def generate_dataset(cfg: SystemConfig, n_samples: int, target: Target | str,
                     spec: QuantizationSpec | None, rng: np.random.Generator,
                     seed: int | None = None) -> Dataset:
    """Labelled training set drawn from the model (prior, uplink, fronthaul)."""
    target = Target(target)
    if target is Target.CLOUD and spec is None:
        raise ValueError("cloud datasets need a QuantizationSpec")
    theta1, theta2 = sample_qoi_pairs(cfg, rng, n_samples)
    b = simulate_batch(cfg, theta1, theta2, rng)
    if target is Target.CLOUD:
        x = cloud_features(quantize_samples(b.y1, spec.sigma2_q1, rng),
                           quantize_samples(b.y2, spec.sigma2_q2, rng))
    else:
        x = edge_features(b.y1 if target is Target.EDGE_CELL1 else b.y2)
    return Dataset(x, targets_from(theta1, theta2, target), target, cfg, seed,
                   feature_names(cfg, target))


def write_dataset(ds: Dataset, path: str | Path) -> None:
    names = ds.names or [f"x{i}" for i in range(1, ds.n_features + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", *names, "label"])
        for i, (row, lab) in enumerate(zip(ds.inputs, ds.labels)):
            w.writerow([i, *(format(v, ".17g") for v in row), int(lab)])


def read_dataset(path: str | Path, target: Target | str) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    x = np.array([r[1:-1] for r in body], dtype=float)
    y = np.array([r[-1] for r in body], dtype=np.int64)
    return Dataset(x, y, target, names=header[1:-1])


# ---------------------------------------------------------------------------
# model


@dataclass
class MlpModel:
    """Feedforward net; ``weights[i]`` has shape (out_i, in_i + 1), bias last."""

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError("layer_dims needs an input and an output size")
        if self.layer_dims[-1] not in (1, 4):
            raise ValueError("output size must be 1 (binary) or 4 (cloud)")
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ValueError("one weight matrix per layer required")
        for i, w in enumerate(self.weights):
            if w.shape != (self.layer_dims[i + 1], self.layer_dims[i] + 1):
                raise ValueError(f"layer {i} has shape {w.shape}, dims say "
                                 f"{(self.layer_dims[i + 1], self.layer_dims[i] + 1)}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"layer {i} has non-finite weights")
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)

    @classmethod
    def initialize(cls, n_inputs: int, n_outputs: int, rng: np.random.Generator,
                   hidden: Sequence[int] = DEFAULT_HIDDEN) -> "MlpModel":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
        dims = (n_inputs, *hidden, n_outputs)
        weights = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            w = np.zeros((fan_out, fan_in + 1))
            w[:, :-1] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            weights.append(w)
        return cls(dims, weights, np.zeros(n_inputs), np.ones(n_inputs))

    @classmethod
    def for_target(cls, n_inputs: int, target: Target | str, rng: np.random.Generator,
                   hidden: Sequence[int] = DEFAULT_HIDDEN) -> "MlpModel":
        return cls.initialize(n_inputs, 4 if Target(target) is Target.CLOUD else 1, rng, hidden)

    @property
    def binary(self) -> bool:
        return self.layer_dims[-1] == 1

    @property
    def n_classes(self) -> int:
        return 2 if self.binary else 4

    def copy(self) -> "MlpModel":
        return MlpModel(self.layer_dims, [w.copy() for w in self.weights],
                        self.mean.copy(), self.scale.copy())

    def with_weights(self, weights: list[np.ndarray]) -> "MlpModel":
        return MlpModel(self.layer_dims, weights, self.mean, self.scale)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def fit_normalization(self, x: np.ndarray) -> "MlpModel":
        """Per-feature mean and standard deviation from training inputs."""
        sd = x.std(axis=0)
        sd[~(sd > 0)] = 1.0
        return MlpModel(self.layer_dims, [w.copy() for w in self.weights], x.mean(axis=0), sd)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Output logits and the list of layer inputs (for backprop)."""
        a = self.standardize(x)
        acts = [a]
        for w in self.weights[:-1]:
            a = np.tanh(a @ w[:, :-1].T + w[:, -1])
            acts.append(a)
        w = self.weights[-1]
        return a @ w[:, :-1].T + w[:, -1], acts

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(np.atleast_2d(x))[0]


def cross_entropy(z: np.ndarray, labels: np.ndarray, binary: bool) -> float:
    """Mean cross-entropy from logits, computed stably."""
    if binary:
        z = z[:, 0]
        return float(np.mean(np.logaddexp(0.0, z) - labels * z))
    return float(np.mean(special.logsumexp(z, axis=1) - z[np.arange(z.shape[0]), labels]))


def loss_and_gradient(model: MlpModel, x: np.ndarray, labels: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy and its gradient with respect to every weight."""
    z, acts = model.forward(x)
    n = z.shape[0]
    loss = cross_entropy(z, labels, model.binary)
    if model.binary:
        delta = (special.expit(z[:, 0]) - labels)[:, None] / n
    else:
        delta = special.softmax(z, axis=1)
        delta[np.arange(n), labels] -= 1.0
        delta /= n
    grads = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        a = acts[i]
        grads[i] = np.hstack([delta.T @ a, delta.sum(axis=0)[:, None]])
        if i > 0:
            # tanh' = 1 - tanh^2
            delta = (delta @ model.weights[i][:, :-1]) * (1.0 - a * a)
    return loss, grads


def check_dims(model: MlpModel, ds: Dataset) -> None:
    if model.layer_dims[0] != ds.n_features:
        raise ValueError(f"model expects {model.layer_dims[0]} inputs, dataset has {ds.n_features}")
    if model.n_classes != ds.target.n_classes:
        raise ValueError(f"model has {model.n_classes} classes, dataset needs {ds.target.n_classes}")


def train(model: MlpModel, dataset: Dataset, epochs: int, learning_rate: float = DEFAULT_LR,
          rng: np.random.Generator | None = None, normalize: bool = True) -> tuple[MlpModel, list[float]]:
    """Full-batch gradient descent on mean cross-entropy.

    Returns a new model and the loss before each step (plus the final loss).
    With ``normalize`` the standardization is fitted on ``dataset`` first.
    ``rng`` is accepted for interface symmetry; plain descent draws nothing.
    """
    check_dims(model, dataset)
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if epochs == 0:
        return model.copy(), []
    cur = model.fit_normalization(dataset.inputs) if normalize else model.copy()
    x, y = dataset.inputs, dataset.labels
    losses = []
    for _ in range(epochs):
        # overflow shows up as a non-finite loss, handled below
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_and_gradient(cur, x, y)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss after {len(losses)} epochs", cur, losses)
        losses.append(loss)
        nxt = [w - learning_rate * g for w, g in zip(cur.weights, grads)]
        if not all(np.all(np.isfinite(w)) for w in nxt):
            raise TrainingDiverged(f"non-finite weights after {len(losses)} epochs", cur, losses)
        cur = cur.with_weights(nxt)
    z, _ = cur.forward(x)
    losses.append(cross_entropy(z, y, cur.binary))
    return cur, losses


def predict(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """P(theta_1) per row for binary models, class probabilities otherwise.

    A single row returns a scalar / length-4 vector.
    """
    x = np.asarray(x, dtype=float)
    z = model.logits(x)
    p = special.expit(z[:, 0]) if model.binary else special.softmax(z, axis=1)
    return p[0] if x.ndim == 1 else p


def decide(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Binary: theta_1 iff p > 0.5 (ties to theta_0); 4-class: argmax label."""
    z = np.atleast_2d(model.logits(x))
    if model.binary:
        return (z[:, 0] > 0).astype(np.int64)
    return np.argmax(z, axis=1)


def training_error(model: MlpModel, ds: Dataset) -> float:
    return float(np.mean(decide(model, ds.inputs) != ds.labels))


# ---------------------------------------------------------------------------
# model files


def save_model(model: MlpModel, path: str | Path) -> None:
    """Plain text: dims, mean, scale, then each weight matrix row-major."""
    fmt = lambda v: " ".join(format(float(t), ".17g") for t in np.ravel(v))  # noqa: E731
    lines = ["mlp " + " ".join(str(d) for d in model.layer_dims), fmt(model.mean), fmt(model.scale)]
    lines += [fmt(w) for w in model.weights]
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> MlpModel:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[0] != "mlp":
        raise ValueError(f"{path}: not a model file")
    dims = tuple(int(t) for t in head[1:])
    vec = lambda s: np.array(s.split(), dtype=float)  # noqa: E731
    weights = [vec(lines[3 + i]).reshape(dims[i + 1], dims[i] + 1) for i in range(len(dims) - 1)]
    return MlpModel(dims, weights, vec(lines[1]), vec(lines[2]))


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class LearnedDetector:
    """Trained model(s): two binary edge models or one 4-class cloud model."""

    kind: Detector
    models: tuple[MlpModel, ...]
    spec: QuantizationSpec | None = None
    losses: tuple[list[float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.kind = Detector(self.kind)
        if self.kind is Detector.EDGE_LEARNED:
            if len(self.models) != 2 or not all(m.binary for m in self.models):
                raise ValueError("edge learning needs two binary models")
        elif self.kind is Detector.CLOUD_LEARNED:
            if len(self.models) != 1 or self.models[0].binary or self.spec is None:
                raise ValueError("cloud learning needs one 4-class model and a QuantizationSpec")
        else:
            raise ValueError(f"{self.kind} is not a learned detector")

    def decisions(self, tb) -> tuple[np.ndarray, np.ndarray]:
        if self.kind is Detector.EDGE_LEARNED:
            return decide(self.models[0], edge_features(tb.y1)), decide(self.models[1], edge_features(tb.y2))
        label = decide(self.models[0], cloud_features(tb.q1, tb.q2))
        return label // 2, label % 2


def fit_learned(cfg: SystemConfig, kind: Detector | str, n_train: int, seed: int,
                spec: QuantizationSpec | None = None, epochs: int = DEFAULT_EPOCHS,
                learning_rate: float = DEFAULT_LR, hidden: Sequence[int] = DEFAULT_HIDDEN) -> LearnedDetector:
    """Generate training data from the model and train the detector's net(s)."""
    kind = Detector(kind)
    # two-element key: never collides with the one-element evaluation block keys
    root = np.random.SeedSequence(seed, spawn_key=(TRAIN_STREAM, 0))
    if kind is Detector.EDGE_LEARNED:
        targets = (Target.EDGE_CELL1, Target.EDGE_CELL2)
    elif kind is Detector.CLOUD_LEARNED:
        targets = (Target.CLOUD,)
        spec = spec or solve_quantization_variance(cfg)
    else:
        raise ValueError(f"{kind} is not a learned detector")
    models, losses = [], []
    for t, child in zip(targets, root.spawn(len(targets))):
        rng = np.random.default_rng(child)
        ds = generate_dataset(cfg, n_train, t, spec, rng, seed)
        model = MlpModel.for_target(ds.n_features, t, rng, hidden)
        model, trace = train(model, ds, epochs, learning_rate)
        models.append(model)
        losses.append(trace)
    return LearnedDetector(kind, tuple(models), spec, tuple(losses))


def _learned_block(det: LearnedDetector, cfg: SystemConfig, seed: int, block: int, size: int) -> int:
    from .experiments import draw_block, joint_errors

    tb = draw_block(cfg, det.spec, seed, block, size)
    return joint_errors(tb.theta1, tb.theta2, *det.decisions(tb))


def count_learned_errors(det: LearnedDetector, cfg: SystemConfig, n_trials: int, seed: int,
                         workers: int = 1) -> int:
    from .experiments import block_sizes, map_blocks

    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    args = [(det, cfg, seed, b, s) for b, s in enumerate(block_sizes(n_trials))]
    return sum(map_blocks(_learned_block, args, workers))


def evaluate_pe(det: LearnedDetector, cfg: SystemConfig, n_trials: int, seed: int,
                workers: int = 1) -> tuple[float, float, float]:
    """Joint error probability on fresh trials, with its Wilson 95% interval.

    Trials are drawn exactly as in the optimal-detector estimator, so the
    same seed evaluates both on identical data.
    """
    from .experiments import wilson_interval

    errors = count_learned_errors(det, cfg, n_trials, seed, workers)
    lo, hi = wilson_interval(errors, n_trials)
    return errors / n_trials, lo, hi


def learned_record(plan, cfg: SystemConfig, kind: Detector, n_train: int, seed: int, value, workers: int = 1):
    """Train on ``seed`` and evaluate on the plan's shared trials for this point."""
    from .experiments import ExperimentRecord

    det = fit_learned(cfg, kind, n_train, seed, epochs=plan.epochs)
    pe, lo, hi = evaluate_pe(det, cfg, plan.trials, seed, workers)
    spec = det.spec
    return ExperimentRecord(plan.name, plan.param, value, Detector(kind).value, pe, lo, hi, plan.trials,
                            sigma2_q1=spec.sigma2_q1 if spec else None,
                            sigma2_q2=spec.sigma2_q2 if spec else None, seed=seed)

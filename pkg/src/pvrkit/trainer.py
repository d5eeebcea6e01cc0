"""Reference MLP for vectorized PVR, trained with hand-written gradients.

The network embeds each of the 11 tokens, concatenates the embeddings, applies
four ReLU layers and a linear classifier. Parameters live in one flat float64
array; named views into it are described by :class:`Layout`.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from pvrkit.errors import NumericFailure, UsageError
from pvrkit.taskgen import Dataset

IGNORE_BELOW = 0.20
DISCARD_BELOW = 0.60


@dataclass(frozen=True)
class ModelConfig:
    embed: int = 16
    hidden: tuple[int, ...] = (64, 128, 64, 32)
    vocab: int = 10
    classes: int = 10
    seq_len: int = 11

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.embed < 1 or not self.hidden or min(self.hidden) < 1:
            raise UsageError("layer widths must be positive")

    @classmethod
    def full(cls) -> "ModelConfig":
        return cls(embed=64, hidden=(512, 1024, 512, 64))

    @classmethod
    def full_2x(cls) -> "ModelConfig":
        return cls(embed=64, hidden=(1024, 2048, 1024, 128))

    @classmethod
    def from_json(cls, doc: dict) -> "ModelConfig":
        preset = doc.get("preset")
        if preset == "full":
            return cls.full()
        if preset == "full_2x":
            return cls.full_2x()
        if preset not in (None, "desk"):
            raise UsageError(f"unknown model preset {preset!r}")
        keys = {"embed", "hidden", "vocab", "classes", "seq_len"}
        return cls(**{k: v for k, v in doc.items() if k in keys})

    @property
    def dense_shapes(self) -> list[tuple[int, int]]:
        dims = [self.seq_len * self.embed, *self.hidden, self.classes]
        return list(zip(dims[:-1], dims[1:]))


def count_params(cfg: ModelConfig) -> int:
    return cfg.vocab * cfg.embed + sum(i * o + o for i, o in cfg.dense_shapes)


class Layout:
    """Offsets of every tensor inside the flat parameter vector."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.entries: list[tuple[str, tuple[int, ...], int]] = []
        off = 0
        shapes = [("embed", (cfg.vocab, cfg.embed))]
        for k, (i, o) in enumerate(cfg.dense_shapes):
            shapes += [(f"w{k}", (i, o)), (f"b{k}", (o,))]
        for name, shape in shapes:
            self.entries.append((name, shape, off))
            off += int(np.prod(shape))
        self.size = off
        self.n_dense = len(cfg.dense_shapes)

    def views(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        return {name: flat[off : off + int(np.prod(shape))].reshape(shape) for name, shape, off in self.entries}

    def group_of(self, index: int) -> str:
        for name, shape, off in self.entries:
            if off <= index < off + int(np.prod(shape)):
                return name
        raise IndexError(index)


def init_params(cfg: ModelConfig, seed: int) -> np.ndarray:
    layout = Layout(cfg)
    flat = np.zeros(layout.size, dtype=np.float64)
    gen = np.random.Generator(np.random.Philox(key=np.array([seed & (2**64 - 1), 0x1417], dtype=np.uint64)))
    v = layout.views(flat)
    v["embed"][...] = gen.uniform(-1.0, 1.0, size=v["embed"].shape)
    for k in range(layout.n_dense):
        w = v[f"w{k}"]
        scale = 1.0 / math.sqrt(w.shape[0])
        w[...] = gen.uniform(-scale, scale, size=w.shape)
    return flat


def _check(a: np.ndarray, layer: int) -> None:
    if not np.isfinite(a).all():
        raise NumericFailure(f"non-finite activations at layer {layer}", layer=layer)


def _forward(layout: Layout, params: np.ndarray, x: np.ndarray):
    v = layout.views(params)
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise UsageError("forward needs a nonempty (batch, seq_len) array")
    acts = [v["embed"][x].reshape(x.shape[0], -1)]
    for k in range(layout.n_dense):
        z = acts[-1] @ v[f"w{k}"] + v[f"b{k}"]
        if k < layout.n_dense - 1:
            z = np.maximum(z, 0.0)
        _check(z, k)
        acts.append(z)
    return acts


def forward(params: np.ndarray, x: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """Logits, shape (batch, classes)."""
    return _forward(Layout(cfg), params, x)[-1]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    return float(-_log_softmax(logits)[np.arange(len(y)), y].mean())


def loss_and_grad(
    params: np.ndarray, x: np.ndarray, y: np.ndarray, cfg: ModelConfig, weight_decay: float = 0.0
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus ``weight_decay/2 * |params|^2``, and its gradient."""
    loss, grads, _ = _loss_grad_logits(params, x, y, cfg, weight_decay)
    return loss, grads


def _loss_grad_logits(params, x, y, cfg: ModelConfig, weight_decay: float):
    layout = Layout(cfg)
    y = np.asarray(y, dtype=np.int64)
    acts = _forward(layout, params, x)
    v = layout.views(params)
    B = len(y)
    logp = _log_softmax(acts[-1])
    loss = float(-logp[np.arange(B), y].mean())

    grads = np.zeros_like(params)
    g = layout.views(grads)
    delta = np.exp(logp)
    delta[np.arange(B), y] -= 1.0
    delta /= B
    for k in range(layout.n_dense - 1, -1, -1):
        g[f"w{k}"][...] = acts[k].T @ delta
        g[f"b{k}"][...] = delta.sum(axis=0)
        delta = delta @ v[f"w{k}"].T
        if k > 0:
            delta = delta * (acts[k] > 0.0)
    E = cfg.embed
    onehot = (np.asarray(x, dtype=np.int64).reshape(-1)[:, None] == np.arange(cfg.vocab)).astype(np.float64)
    g["embed"][...] = onehot.T @ delta.reshape(-1, E)

    if weight_decay:
        loss += 0.5 * weight_decay * float(params @ params)
        grads += weight_decay * params
    _check(grads, layout.n_dense)
    return loss, grads, acts[-1]


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-5
    batch_size: int = 1024
    epochs: int = 200
    warmup_epochs: int = 10
    min_iterations: int = 800
    seed: int = 0
    eval_every: int = 1

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise UsageError(f"unknown train settings: {sorted(extra)}")
        return cls(**doc)


@dataclass(frozen=True)
class Schedule:
    """Step counts for one run: linear warmup, then cosine decay to zero."""

    total_steps: int
    warmup_steps: int
    steps_per_epoch: int
    epochs: int
    batch_size: int
    base_lr: float

    @classmethod
    def plan(cls, n: int, cfg: TrainConfig) -> "Schedule":
        batch = min(cfg.batch_size, n)
        per_epoch = -(-n // batch)
        total = cfg.epochs * per_epoch
        if total < cfg.min_iterations:
            epochs = -(-cfg.min_iterations // per_epoch)
            total = epochs * per_epoch
        else:
            epochs = cfg.epochs
        # warmup keeps its share of the run when the iteration floor stretches it
        warmup = round(total * cfg.warmup_epochs / cfg.epochs)
        return cls(total, warmup, per_epoch, epochs, batch, cfg.base_lr)


def lr_at(step: int, sched: Schedule) -> float:
    if step < 0:
        raise UsageError("step must be nonnegative")
    if step < sched.warmup_steps:
        return sched.base_lr * step / sched.warmup_steps
    span = sched.total_steps - 1 - sched.warmup_steps
    if span <= 0:
        return sched.base_lr
    t = min(1.0, (step - sched.warmup_steps) / span)
    return sched.base_lr * 0.5 * (1.0 + math.cos(math.pi * t))


def sgd_step(params: np.ndarray, velocity: np.ndarray, grads: np.ndarray, lr: float, momentum: float = 0.9) -> np.ndarray:
    """Heavy-ball update in place; returns ``params``."""
    velocity *= momentum
    velocity += grads
    params -= lr * velocity
    return params


def predict(params: np.ndarray, x: np.ndarray, cfg: ModelConfig, chunk: int = 8192) -> np.ndarray:
    # argmax picks the first maximal logit, i.e. ties go to the smallest class
    return np.concatenate([forward(params, x[i : i + chunk], cfg).argmax(axis=1) for i in range(0, len(x), chunk)])


def eval_metrics(params: np.ndarray, ds: Dataset, cfg: ModelConfig, chunk: int = 8192) -> dict:
    hits = 0
    loss_sum = 0.0
    logit_sum = np.zeros((cfg.classes, cfg.classes))
    per_label = np.zeros(cfg.classes)
    y_all = ds.labels.astype(np.int64)
    for i in range(0, ds.count, chunk):
        x, y = ds.digits[i : i + chunk], y_all[i : i + chunk]
        logits = forward(params, x, cfg)
        hits += int((logits.argmax(axis=1) == y).sum())
        loss_sum += -_log_softmax(logits)[np.arange(len(y)), y].sum()
        np.add.at(logit_sum, y, logits)
        per_label += np.bincount(y, minlength=cfg.classes)
    n = max(ds.count, 1)
    mean_logits = logit_sum / np.maximum(per_label, 1)[:, None]
    return {"acc": hits / n, "loss": float(loss_sum / n), "mean_logits_by_label": mean_logits.tolist()}


def evaluate(params: np.ndarray, ds: Dataset, cfg: ModelConfig) -> float:
    if ds.count == 0:
        return 0.0
    return float((predict(params, ds.digits, cfg) == ds.labels).mean())


@dataclass
class RunReport:
    model: dict
    train: dict
    schedule: dict
    train_size: int
    eval_names: list[str]
    curves: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)
    iterations: int = 0
    status: str = "ok"
    error: str | None = None
    ignored: bool = False
    discarded: bool = False
    wall_time: float = field(default=0.0, compare=False)
    params: np.ndarray | None = field(default=None, repr=False, compare=False)

    def set_flags(self) -> None:
        acc = self.final.get("train_acc", 0.0)
        self.ignored = acc < IGNORE_BELOW
        self.discarded = acc < DISCARD_BELOW

    def to_dict(self, timing: bool = False) -> dict:
        doc = asdict(self)
        doc.pop("params")
        if not timing:
            doc.pop("wall_time")
        return doc

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)

    def curve_csv(self) -> str:
        cols = ["epoch", "train_acc", "train_loss"] + [f"{n}_acc" for n in self.eval_names]
        lines = [",".join(cols)]
        for row in self.curves:
            lines.append(",".join("" if row.get(c) is None else repr(row[c]) for c in cols))
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "curves.csv").write_text(self.curve_csv())


def _shuffle(seed: int, epoch: int, n: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=np.array([seed & (2**64 - 1), (1 << 32) | epoch], dtype=np.uint64)))
    return gen.permutation(n)


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_ds: Dataset,
    evals: dict[str, Dataset] | None = None,
    log=None,
) -> RunReport:
    """Run the full schedule and return a report; numeric failure yields status ``failed``."""
    evals = dict(evals or {})
    if train_ds.count == 0:
        raise UsageError("training set is empty")
    for ds in [train_ds, *evals.values()]:
        if ds.spec.K > model_cfg.vocab or ds.spec.seq_len != model_cfg.seq_len:
            raise UsageError("dataset layout does not match the model vocabulary or sequence length")
    sched = Schedule.plan(train_ds.count, train_cfg)
    report = RunReport(
        model=asdict(model_cfg),
        train=asdict(train_cfg),
        schedule=asdict(sched),
        train_size=train_ds.count,
        eval_names=list(evals),
    )
    t0 = time.perf_counter()
    params = init_params(model_cfg, train_cfg.seed)
    velocity = np.zeros_like(params)
    x_all = train_ds.digits.astype(np.int64)
    y_all = train_ds.labels.astype(np.int64)
    step = 0
    try:
        for epoch in range(sched.epochs):
            order = _shuffle(train_cfg.seed, epoch, train_ds.count)
            hits = 0
            loss_sum = 0.0
            for b in range(sched.steps_per_epoch):
                idx = order[b * sched.batch_size : (b + 1) * sched.batch_size]
                x, y = x_all[idx], y_all[idx]
                _, grads, logits = _loss_grad_logits(params, x, y, model_cfg, train_cfg.weight_decay)
                hits += int((logits.argmax(axis=1) == y).sum())
                loss_sum += cross_entropy(logits, y) * len(y)
                sgd_step(params, velocity, grads, lr_at(step, sched), train_cfg.momentum)
                if not np.isfinite(params).all():
                    raise NumericFailure(f"non-finite parameters after step {step}")
                step += 1
            row = {"epoch": epoch + 1, "train_acc": hits / train_ds.count, "train_loss": loss_sum / train_ds.count}
            last = epoch == sched.epochs - 1
            if (epoch + 1) % train_cfg.eval_every == 0 or last:
                for name, ds in evals.items():
                    row[f"{name}_acc"] = evaluate(params, ds, model_cfg)
            report.curves.append(row)
            if log is not None:
                log(row)
        report.final["train_acc"] = evaluate(params, train_ds, model_cfg)
        report.final["train_loss"] = eval_metrics(params, train_ds, model_cfg)["loss"]
        for name, ds in evals.items():
            m = eval_metrics(params, ds, model_cfg)
            report.final[f"{name}_acc"] = m["acc"]
            report.final[f"{name}_loss"] = m["loss"]
            report.final[f"{name}_mean_logits_by_label"] = m["mean_logits_by_label"]
    except NumericFailure as exc:
        report.status = "failed"
        report.error = str(exc)
        report.final.setdefault("train_acc", report.curves[-1]["train_acc"] if report.curves else 0.0)
    report.iterations = step
    report.set_flags()
    report.wall_time = time.perf_counter() - t0
    report.params = params
    return report

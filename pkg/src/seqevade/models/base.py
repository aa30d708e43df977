"""Model specs, the shared training loop, and trained-model wrappers."""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np

from ..core import ApiSequence, Dataset, Label, Vocabulary, encode_events, is_valid_window, window_count
from .nets import CnnNet, LinearNet, MlpNet, RecurrentNet
from .optim import make_optimizer
from .trees import BoostedTrees, RandomForest, count_threshold_features


class TrainingError(RuntimeError):
    """Raised when optimization produces non-finite losses or parameters."""


class CapabilityError(RuntimeError):
    """Raised when a model is asked for something it cannot provide (e.g. tree Jacobians)."""


RECURRENT_FAMILIES = {
    "rnn": ("rnn", False, 1),
    "lstm": ("lstm", False, 1),
    "gru": ("gru", False, 1),
    "birnn": ("rnn", True, 1),
    "bilstm": ("lstm", True, 1),
    "bigru": ("gru", True, 1),
    "deeplstm": ("lstm", False, 2),
    "deepbilstm": ("lstm", True, 2),
}
NET_FAMILIES = set(RECURRENT_FAMILIES) | {"dnn", "cnn", "logreg", "svm"}
TREE_FAMILIES = {"rf", "gbdt"}
FAMILIES = sorted(NET_FAMILIES | TREE_FAMILIES | {"hybrid"})


@dataclass
class ModelSpec:
    family: str
    window: int = 20
    hidden: int = 32
    layers: int = 2
    dropout: float = 0.0
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 8
    batch_size: int = 64
    seed: int = 0
    trees: int = 10
    max_depth: int | None = None
    reg_c: float = 1.0
    static_dim: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; expected one of {FAMILIES}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")

    @classmethod
    def defaults(cls, family: str, window: int = 20, seed: int = 0, **overrides) -> "ModelSpec":
        base: dict = {"family": family, "window": window, "seed": seed}
        if family in RECURRENT_FAMILIES or family in ("dnn", "cnn", "hybrid"):
            base.update(dropout=0.2, epochs=8, optimizer="adam", learning_rate=1e-3)
        if family in RECURRENT_FAMILIES or family == "hybrid":
            base.update(learning_rate=3e-3)
        if family in ("logreg", "svm"):
            base.update(epochs=20, optimizer="adam", learning_rate=0.01)
        if family == "rf":
            base.update(trees=10, max_depth=None)
        if family == "gbdt":
            base.update(trees=50, max_depth=6, learning_rate=0.1)
        base.update(overrides)
        return cls(**base)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSpec":
        return cls(**obj)


def window_instances(dataset: Dataset, n: int, vocab_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-window training instances; each window inherits its sequence's label."""
    mats, labels = [], []
    for sample in dataset:
        events = sample.sequence.events
        for j in range(window_count(events.size, n)):
            mats.append(encode_events(events, j * n, n, vocab_size))
            labels.append(1.0 if sample.label is Label.MALICIOUS else 0.0)
    return np.stack(mats), np.array(labels)


def hybrid_instances(dataset: Dataset, n: int, vocab_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mats, statics, labels = [], [], []
    for sample in dataset:
        if sample.static is None:
            raise ValueError(f"sample {sample.sample_id!r} has no static features; attach them first")
        events = sample.sequence.events
        for j in range(window_count(events.size, n)):
            mats.append(encode_events(events, j * n, n, vocab_size))
            statics.append(sample.static.bits)
            labels.append(1.0 if sample.label is Label.MALICIOUS else 0.0)
    return np.stack(mats), np.stack(statics), np.array(labels)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _bce(p: np.ndarray, y: np.ndarray) -> float:
    q = np.clip(p, 1e-12, 1 - 1e-12)
    return float(-np.mean(y * np.log(q) + (1 - y) * np.log(1 - q)))


def fit_net(net, X: np.ndarray, y: np.ndarray, spec: ModelSpec, loss: str = "bce",
            l2_keys: tuple[str, ...] = (), statics: np.ndarray | None = None,
            val: tuple | None = None) -> dict:
    """Minibatch training shared by every differentiable family.

    loss is "bce" or "hinge"; l2_keys lists parameters penalized by
    1/(reg_c * N), matching an inverse-regularization constant C.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(11,)))
    opt = make_optimizer(spec.optimizer, spec.learning_rate)
    n_samples = X.shape[0]
    lam = 1.0 / (spec.reg_c * n_samples) if l2_keys else 0.0
    epoch_losses = []
    for epoch in range(spec.epochs):
        perm = rng.permutation(n_samples)
        total = 0.0
        for start in range(0, n_samples, spec.batch_size):
            idx = perm[start:start + spec.batch_size]
            Xb, yb = X[idx], y[idx]
            drop_rng = rng if spec.dropout > 0 else None
            if statics is not None:
                logits, cache = net.forward(Xb, statics[idx], dropout=spec.dropout, rng=drop_rng)
            else:
                logits, cache = net.forward(Xb, dropout=spec.dropout, rng=drop_rng)
            if loss == "bce":
                p = _sigmoid(logits)
                batch_loss = _bce(p, yb)
                dlogits = (p - yb) / idx.size
            elif loss == "hinge":
                sy = 2.0 * yb - 1.0
                margin = sy * logits
                batch_loss = float(np.mean(np.maximum(0.0, 1.0 - margin)))
                dlogits = -sy * (margin < 1.0) / idx.size
            else:
                raise ValueError(f"unknown loss {loss!r}")
            out = net.backward(cache, dlogits)
            grads = out[0]
            for k in l2_keys:
                grads[k] = grads[k] + lam * net.params[k]
                batch_loss += 0.5 * lam * float(np.sum(net.params[k] ** 2))
            opt.step(net.params, grads)
            total += batch_loss * idx.size
        mean_loss = total / n_samples
        if not np.isfinite(mean_loss) or any(not np.isfinite(v).all() for v in net.params.values()):
            raise TrainingError(f"training diverged at epoch {epoch + 1}: non-finite loss or parameters")
        epoch_losses.append(mean_loss)
    report = {"train_windows": int(n_samples), "epoch_losses": epoch_losses}
    if val is not None:
        report["val_window_accuracy"] = _net_accuracy(net, val)
    return report


def _net_accuracy(net, val: tuple) -> float:
    if len(val) == 3:
        Xv, Sv, yv = val
        logits, _ = net.forward(Xv, Sv)
    else:
        Xv, yv = val
        logits, _ = net.forward(Xv)
    pred = _sigmoid(logits) >= 0.5
    return float(np.mean(pred == (yv >= 0.5)))


class TrainedModel:
    """Common surface: window scores in [0, 1], score >= 0.5 means malicious,
    a sequence is malicious iff any of its windows is."""

    needs_static = False

    def __init__(self, spec: ModelSpec, vocab_size: int, vocab_hash: str):
        self.spec = spec
        self.vocab_size = vocab_size
        self.vocab_hash = vocab_hash
        self.report: dict = {}

    @property
    def capabilities(self) -> dict:
        return {"scores": True, "jacobian": self.has_jacobian()}

    def has_jacobian(self) -> bool:
        return False

    def accepts_any_length(self) -> bool:
        return False

    def _check_window(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != self.vocab_size:
            raise ValueError(f"window must be (rows, {self.vocab_size}), got {w.shape}")
        if not self.accepts_any_length() and w.shape[0] != self.spec.window:
            raise ValueError(f"model expects windows of {self.spec.window} rows, got {w.shape[0]}")
        return w

    def score_windows(self, W: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score_window(self, w: np.ndarray) -> float:
        return float(self.score_windows(self._check_window(w)[None])[0])

    def predict_window(self, w: np.ndarray) -> tuple[Label, float]:
        score = self.score_window(w)
        return (Label.MALICIOUS if score >= 0.5 else Label.BENIGN), score

    def sequence_windows(self, seq: ApiSequence | list[int] | np.ndarray) -> np.ndarray:
        events = seq.events if isinstance(seq, ApiSequence) else np.asarray(seq, dtype=np.int64)
        n = self.spec.window
        return np.stack([encode_events(events, j * n, n, self.vocab_size)
                         for j in range(window_count(events.size, n))])

    def predict_sequence(self, seq: ApiSequence | list[int] | np.ndarray) -> Label:
        scores = self.score_windows(self.sequence_windows(seq))
        return Label.MALICIOUS if (scores >= 0.5).any() else Label.BENIGN

    def input_jacobian(self, w: np.ndarray) -> np.ndarray:
        raise CapabilityError(f"family {self.spec.family!r} does not expose input Jacobians")


class NetModel(TrainedModel):
    def __init__(self, spec: ModelSpec, vocab_size: int, vocab_hash: str, net):
        super().__init__(spec, vocab_size, vocab_hash)
        self.net = net

    def has_jacobian(self) -> bool:
        return True

    def accepts_any_length(self) -> bool:
        return getattr(self.net, "variable_length", False)

    def window_logit(self, w: np.ndarray) -> float:
        logits, _ = self.net.forward(self._check_window(w)[None])
        return float(logits[0])

    def score_windows(self, W: np.ndarray) -> np.ndarray:
        logits, _ = self.net.forward(np.asarray(W, dtype=np.float64))
        return _sigmoid(logits)

    def input_jacobian(self, w: np.ndarray) -> np.ndarray:
        """d(pre-sigmoid malicious logit) / d(input cell), shape like the window."""
        w = self._check_window(w)
        _, cache = self.net.forward(w[None])
        _, dX = self.net.backward(cache, np.ones(1))
        return dX[0]


class ForestModel(TrainedModel):
    def __init__(self, spec: ModelSpec, vocab_size: int, vocab_hash: str, forest: RandomForest):
        super().__init__(spec, vocab_size, vocab_hash)
        self.forest = forest

    def score_windows(self, W: np.ndarray) -> np.ndarray:
        return self.forest.scores(count_threshold_features(W))


class BoostModel(TrainedModel):
    def __init__(self, spec: ModelSpec, vocab_size: int, vocab_hash: str, booster: BoostedTrees):
        super().__init__(spec, vocab_size, vocab_hash)
        self.booster = booster

    def score_windows(self, W: np.ndarray) -> np.ndarray:
        return self.booster.scores(count_threshold_features(W))


def build_net(spec: ModelSpec, vocab_size: int):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(7,)))
    if spec.family in RECURRENT_FAMILIES:
        cell, bidir, depth = RECURRENT_FAMILIES[spec.family]
        if spec.family in ("deeplstm", "deepbilstm"):
            depth = max(spec.layers, 2)
        return RecurrentNet(rng, vocab_size, spec.hidden, cell=cell, bidirectional=bidir, depth=depth)
    if spec.family == "dnn":
        return MlpNet(rng, spec.window, vocab_size, spec.hidden, depth=spec.layers)
    if spec.family == "cnn":
        return CnnNet(rng, spec.window, vocab_size, spec.hidden)
    if spec.family in ("logreg", "svm"):
        return LinearNet(rng, spec.window, vocab_size)
    raise ValueError(f"family {spec.family!r} is not a network family")


def train(spec: ModelSpec, dataset: Dataset, vocab: Vocabulary,
          val: Dataset | None = None) -> TrainedModel:
    """Train a window classifier; windows inherit their sequence's label."""
    if spec.family == "hybrid":
        from .hybrid import train_hybrid
        return train_hybrid(spec, dataset, vocab, val=val)
    vocab_size = len(vocab)
    X, y = window_instances(dataset, spec.window, vocab_size)
    val_arrays = window_instances(val, spec.window, vocab_size) if val is not None else None
    if spec.family in TREE_FAMILIES:
        flat = count_threshold_features(X)
        if spec.family == "rf":
            rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(13,)))
            forest = RandomForest.fit(flat, y, n_trees=spec.trees, rng=rng, max_depth=spec.max_depth)
            model: TrainedModel = ForestModel(spec, vocab_size, vocab.content_hash(), forest)
        else:
            booster = BoostedTrees.fit(flat, y, n_trees=spec.trees,
                                       max_depth=spec.max_depth or 6,
                                       learning_rate=spec.learning_rate)
            model = BoostModel(spec, vocab_size, vocab.content_hash(), booster)
        model.report = {"train_windows": int(X.shape[0])}
        if val_arrays is not None:
            pred = model.score_windows(val_arrays[0]) >= 0.5
            model.report["val_window_accuracy"] = float(np.mean(pred == (val_arrays[1] >= 0.5)))
        return model
    net = build_net(spec, vocab_size)
    loss = "hinge" if spec.family == "svm" else "bce"
    l2_keys = ("w",) if spec.family in ("logreg", "svm") else ()
    report = fit_net(net, X, y, spec, loss=loss, l2_keys=l2_keys, val=val_arrays)
    model = NetModel(spec, vocab_size, vocab.content_hash(), net)
    model.report = report
    return model


# Module-level conveniences mirroring the model methods.

def predict_window(model: TrainedModel, w: np.ndarray) -> tuple[Label, float]:
    return model.predict_window(w)


def predict_sequence(model: TrainedModel, seq) -> Label:
    return model.predict_sequence(seq)


def input_jacobian(model: TrainedModel, w: np.ndarray) -> np.ndarray:
    return model.input_jacobian(w)


class OracleCounter:
    """Wraps a model as a black box: counts every window evaluation and
    asserts each queried window is a valid one-hot matrix."""

    def __init__(self, model: TrainedModel, validate: bool = True):
        self.model = model
        self.validate = validate
        self.queries = 0

    def _note(self, W: np.ndarray) -> None:
        self.queries += W.shape[0]
        if self.validate:
            for w in W:
                if not is_valid_window(w):
                    raise ValueError("black-box query is not a valid one-hot window")

    def predict_window(self, w: np.ndarray) -> tuple[Label, float]:
        w = np.asarray(w, dtype=np.float64)
        self._note(w[None])
        return self.model.predict_window(w)

    def score_windows(self, W: np.ndarray) -> np.ndarray:
        W = np.asarray(W, dtype=np.float64)
        self._note(W)
        return self.model.score_windows(W)

    def predict_sequence(self, seq) -> Label:
        if self.model.needs_static:
            raise ValueError("hybrid oracle needs static features; bind them first")
        W = self.model.sequence_windows(seq)
        self._note(W)
        scores = self.model.score_windows(W)
        return Label.MALICIOUS if (scores >= 0.5).any() else Label.BENIGN

"""Byte-level MLP predicting edge coverage, and its input gradients.

The estimators follow the scikit-learn API so they can be cloned, inspected
with ``get_params`` and dropped into model-selection tooling:

* :class:`EdgeSelector` turns per-sample edge sets into a 0/1 label matrix
  over the most informative edges (like ``MultiLabelBinarizer`` plus
  variance-based selection).
* :class:`ByteMLP` is a ``N -> H (ReLU) -> E (sigmoid)`` network trained
  full-batch on binary cross-entropy with hand-written backprop.

``train``, ``predict`` and ``gradient`` wrap them for the fuzzing loop.
"""
from __future__ import annotations

import enum
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from fairfuzz.neuzz.corpus import TrainingCorpus, validate_corpus

SIGN_EPS = 1e-12
MODEL_MAGIC = b"FFMLP1"


class ShapeError(ValueError):
    pass


class CorpusRejected(ValueError):
    """Training was refused because the corpus failed validation."""

    def __init__(self, report):
        super().__init__(f"training corpus failed validation\n{report}")
        self.report = report


class FewVariableEdges(UserWarning):
    pass


class EdgeSelector(TransformerMixin, BaseEstimator):
    """Pick the ``n_edges`` edges whose coverage varies most across samples.

    Input is a sequence of edge-id sets, one per sample.  Edges hit by every
    sample or by none carry no signal and are dropped; ties rank by ascending
    edge id.
    """

    def __init__(self, n_edges: int = 512):
        self.n_edges = n_edges

    def fit(self, X, y=None):
        sets = list(X)
        if not sets:
            raise ValueError("EdgeSelector needs at least one sample")
        n = len(sets)
        counts: dict[int, int] = {}
        for s in sets:
            for e in s:
                counts[e] = counts.get(e, 0) + 1
        # n^2 * variance = c * (n - c); integer so ties are exact
        scored = [(-(c * (n - c)), e) for e, c in counts.items() if 0 < c < n]
        scored.sort()
        if len(scored) < self.n_edges:
            warnings.warn(
                f"only {len(scored)} variable edges, fewer than n_edges={self.n_edges}",
                FewVariableEdges,
                stacklevel=2,
            )
        chosen = [e for _, e in scored[: self.n_edges]]
        self.selected_edges_ = np.array(chosen, dtype=np.int64)
        self.variances_ = np.array([-s / n**2 for s, _ in scored[: self.n_edges]])
        self.n_samples_fit_ = n
        return self

    def transform(self, X):
        check_is_fitted(self, "selected_edges_")
        col = {int(e): j for j, e in enumerate(self.selected_edges_)}
        sets = list(X)
        out = np.zeros((len(sets), len(col)), dtype=np.float64)
        for i, s in enumerate(sets):
            for e in s:
                j = col.get(e)
                if j is not None:
                    out[i, j] = 1.0
        return out


_sigmoid = expit


def _bce_with_logits(z, y):
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


class ByteMLP(BaseEstimator):
    """Two-layer perceptron over bytes scaled to ``[0, 1]``.

    Parameters
    ----------
    hidden_units : int
    epochs : int
        Full-batch gradient-descent steps.
    learning_rate : float
    random_state : int, RandomState or None
        Seeds the weight initialization; same seed, same weights.
    class_weight : None or "balanced"
        ``"balanced"`` reweights each output so its positive and negative
        labels carry equal total weight, which keeps rare edges from being
        drowned by the ones they co-occur with.
    """

    def __init__(
        self,
        hidden_units: int = 64,
        epochs: int = 50,
        learning_rate: float = 0.1,
        random_state=0,
        class_weight: str | None = None,
    ):
        self.hidden_units = hidden_units
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state
        self.class_weight = class_weight

    def _label_weights(self, Y: np.ndarray) -> np.ndarray | float:
        if self.class_weight is None:
            return 1.0
        if self.class_weight != "balanced":
            raise ValueError(f"class_weight must be None or 'balanced', got {self.class_weight!r}")
        n = Y.shape[0]
        pos = Y.sum(axis=0)
        neg = n - pos
        w_pos = np.where(pos > 0, n / (2.0 * np.maximum(pos, 1)), 1.0)
        w_neg = np.where(neg > 0, n / (2.0 * np.maximum(neg, 1)), 1.0)
        return np.where(Y > 0, w_pos, w_neg)

    @staticmethod
    def _scale(X) -> np.ndarray:
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        if X.min(initial=0) < 0 or X.max(initial=0) > 255:
            raise ValueError("inputs must be byte values in [0, 255]")
        return X / 255.0

    def _init_weights(self, n_in: int, n_out: int) -> None:
        rng = check_random_state(self.random_state)
        h = self.hidden_units
        self.W1_ = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, h))
        self.b1_ = np.zeros(h)
        self.W2_ = rng.normal(0.0, np.sqrt(1.0 / h), size=(h, n_out))
        self.b2_ = np.zeros(n_out)

    def _forward(self, Xs):
        z1 = Xs @ self.W1_ + self.b1_
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ self.W2_ + self.b2_
        return z1, a1, z2

    def fit(self, X, Y, edge_ids=None):
        Xs = self._scale(X)
        Y = check_array(Y, dtype=np.float64, ensure_min_features=1)
        if Y.shape[0] != Xs.shape[0]:
            raise ShapeError(f"{Xs.shape[0]} inputs but {Y.shape[0]} label rows")
        n, n_in = Xs.shape
        self._init_weights(n_in, Y.shape[1])
        self.n_features_in_ = n_in
        self.edge_ids_ = np.arange(Y.shape[1]) if edge_ids is None else np.asarray(edge_ids, dtype=np.int64)
        self.loss_curve_ = []
        scale = self._label_weights(Y) / (n * Y.shape[1])
        for _ in range(self.epochs):
            z1, a1, z2 = self._forward(Xs)
            self.loss_curve_.append(_bce_with_logits(z2, Y))
            dz2 = (_sigmoid(z2) - Y) * scale
            dW2 = a1.T @ dz2
            db2 = dz2.sum(axis=0)
            dz1 = (dz2 @ self.W2_.T) * (z1 > 0)
            dW1 = Xs.T @ dz1
            db1 = dz1.sum(axis=0)
            self.W1_ -= self.learning_rate * dW1
            self.b1_ -= self.learning_rate * db1
            self.W2_ -= self.learning_rate * dW2
            self.b2_ -= self.learning_rate * db2
        self.final_loss_ = _bce_with_logits(self._forward(Xs)[2], Y)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "W1_")
        Xs = self._scale(X)
        if Xs.shape[1] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} bytes, got {Xs.shape[1]}")
        return _sigmoid(self._forward(Xs)[2])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int8)

    def input_gradient(self, x, edge_index: int) -> np.ndarray:
        """d output[edge_index] / d scaled input, by backprop."""
        check_is_fitted(self, "W1_")
        if not 0 <= edge_index < self.W2_.shape[1]:
            raise IndexError(f"edge index {edge_index} outside [0, {self.W2_.shape[1]})")
        xs = self._scale(np.asarray(x).reshape(1, -1))[0]
        if xs.shape[0] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} bytes, got {xs.shape[0]}")
        return self.scaled_gradient(xs, edge_index)

    def scaled_gradient(self, xs: np.ndarray, edge_index: int) -> np.ndarray:
        z1 = xs @ self.W1_ + self.b1_
        z2 = np.maximum(z1, 0.0) @ self.W2_[:, edge_index] + self.b2_[edge_index]
        s = _sigmoid(z2)
        dz1 = self.W2_[:, edge_index] * (s * (1.0 - s)) * (z1 > 0)
        return self.W1_ @ dz1


@dataclass(frozen=True)
class Hyper:
    hidden_units: int = 64
    max_edges: int = 512
    epochs: int = 50
    learning_rate: float = 0.1
    random_state: int = 0
    class_weight: str | None = None


def train(corpus: TrainingCorpus, hyper: Hyper = Hyper(), *, alignment_threshold: int = 4, min_samples: int = 100) -> ByteMLP:
    """Select output edges and fit a :class:`ByteMLP` on ``corpus``.

    Refuses (:class:`CorpusRejected`) when the corpus fails validation.
    """
    report = validate_corpus(corpus, alignment_threshold, min_samples)
    if not report.passed:
        raise CorpusRejected(report)
    selector = EdgeSelector(hyper.max_edges).fit(corpus.edge_sets())
    Y = selector.transform(corpus.edge_sets())
    model = ByteMLP(hyper.hidden_units, hyper.epochs, hyper.learning_rate, hyper.random_state, hyper.class_weight)
    return model.fit(corpus.input_matrix(), Y, edge_ids=selector.selected_edges_)


def _as_row(model: ByteMLP, data) -> np.ndarray:
    x = np.frombuffer(bytes(data), dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else np.asarray(data)
    if x.shape != (model.n_features_in_,):
        raise ShapeError(f"model takes {model.n_features_in_} bytes, got {x.shape[0]}")
    return x


def predict(model: ByteMLP, data) -> np.ndarray:
    """Per-edge coverage probabilities for one input."""
    return model.predict_proba(_as_row(model, data).reshape(1, -1))[0]


class GradientKind(enum.Enum):
    SIGNED = "signed"
    RAW = "raw"


@dataclass(frozen=True)
class ByteGradient:
    values: np.ndarray
    kind: GradientKind

    def __len__(self):
        return len(self.values)


def signs(raw: np.ndarray) -> np.ndarray:
    out = np.sign(raw)
    out[np.abs(raw) < SIGN_EPS] = 0.0
    return out


def gradient(model: ByteMLP, data, edge_index: int, kind: GradientKind = GradientKind.SIGNED) -> ByteGradient:
    """Gradient of one edge output with respect to the (scaled) input bytes.

    ``RAW`` keeps the real values; ``SIGNED`` keeps only their signs, with
    near-zero components mapped to 0.
    """
    raw = model.input_gradient(_as_row(model, data), edge_index)
    if GradientKind(kind) is GradientKind.RAW:
        return ByteGradient(raw, GradientKind.RAW)
    return ByteGradient(signs(raw), GradientKind.SIGNED)


_DIMS = struct.Struct("<III")


def save_model(model: ByteMLP, path) -> None:
    """``FFMLP1``, u32 N/H/E, then W1, b1, W2, b2 as row-major f64, then E u32 edge ids."""
    check_is_fitted(model, "W1_")
    n, h = model.W1_.shape
    e = model.W2_.shape[1]
    parts = [MODEL_MAGIC, _DIMS.pack(n, h, e)]
    for arr in (model.W1_, model.b1_, model.W2_, model.b2_):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    parts.append(np.asarray(model.edge_ids_, dtype="<u4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path) -> ByteMLP:
    raw = Path(path).read_bytes()
    if raw[:6] != MODEL_MAGIC:
        raise ValueError(f"{path}: not an FFMLP1 model file")
    n, h, e = _DIMS.unpack_from(raw, 6)
    off = 6 + _DIMS.size
    model = ByteMLP(hidden_units=h)

    def take(count, dtype="<f8"):
        nonlocal off
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off).copy()
        off += arr.nbytes
        return arr

    model.W1_ = take(n * h).reshape(n, h)
    model.b1_ = take(h)
    model.W2_ = take(h * e).reshape(h, e)
    model.b2_ = take(e)
    model.edge_ids_ = take(e, "<u4").astype(np.int64)
    model.n_features_in_ = n
    return model

from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from fairfuzz.campaign import CAMPAIGN_HYPER
from fairfuzz.executor import Mode, init_session
from fairfuzz.neuzz import (
    ByteMLP,
    CorpusRejected,
    EdgeSelector,
    GradientKind,
    Hyper,
    Sample,
    ShapeError,
    collect_training_corpus,
    gradient,
    load_model,
    predict,
    save_model,
    train,
)
from fairfuzz.neuzz.model import FewVariableEdges
from fairfuzz.targets import bundled_seeds
from stubs import StubSession

pytestmark = pytest.mark.filterwarnings("ignore::fairfuzz.neuzz.model.FewVariableEdges")


def hand_model(W1, b1, W2, b2) -> ByteMLP:
    m = ByteMLP(hidden_units=len(b1))
    m.W1_, m.b1_ = np.array(W1, float), np.array(b1, float)
    m.W2_, m.b2_ = np.array(W2, float), np.array(b2, float)
    m.n_features_in_ = m.W1_.shape[0]
    m.edge_ids_ = np.arange(m.W2_.shape[1])
    return m


TINY = dict(W1=[[1.0, -1.0], [2.0, 1.0]], b1=[0.0, 0.5], W2=[[1.0], [-2.0]], b2=[0.25])


def random_model(rng, n, h, e) -> ByteMLP:
    return hand_model(rng.normal(size=(n, h)), rng.normal(size=h), rng.normal(size=(h, e)), rng.normal(size=e))


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def forward_scaled(m: ByteMLP, xs: np.ndarray, j: int) -> float:
    # plain loops, independent of the vectorized implementation
    n, h = m.W1_.shape
    hidden = [max(0.0, sum(xs[i] * m.W1_[i, k] for i in range(n)) + m.b1_[k]) for k in range(h)]
    return sigmoid(sum(hidden[k] * m.W2_[k, j] for k in range(h)) + m.b2_[j])


def fd_gradient(m: ByteMLP, xs: np.ndarray, j: int, eps: float = 1e-4) -> np.ndarray:
    out = np.zeros(len(xs))
    for i in range(len(xs)):
        up, down = xs.copy(), xs.copy()
        up[i] += eps
        down[i] -= eps
        out[i] = (forward_scaled(m, up, j) - forward_scaled(m, down, j)) / (2 * eps)
    return out


def away_from_kinks(m: ByteMLP, xs: np.ndarray, margin: float = 1e-2) -> bool:
    return bool(np.all(np.abs(xs @ m.W1_ + m.b1_) > margin))


# --- edge selection -------------------------------------------------------

FOUR = [{1, 2, 3}, {1, 2}, {1, 3, 4}, {1}]


def test_edge_selector_hand_fixture():
    # counts: 1->4 (constant), 2->2, 3->2, 4->1; var = c(n-c)/n^2
    sel = EdgeSelector(n_edges=3).fit(FOUR)
    assert sel.selected_edges_.tolist() == [2, 3, 4]
    assert sel.variances_.tolist() == [0.25, 0.25, 3 / 16]
    assert sel.transform(FOUR).tolist() == [[1, 1, 0], [1, 0, 0], [0, 1, 1], [0, 0, 0]]


def test_edge_selector_truncates_and_warns_when_short():
    assert EdgeSelector(n_edges=1).fit(FOUR).selected_edges_.tolist() == [2]
    with pytest.warns(FewVariableEdges):
        sel = EdgeSelector(n_edges=10).fit(FOUR)
    assert 1 not in sel.selected_edges_


def test_half_covered_edge_outranks_rare_edge():
    # 9 in half the samples, 5 in one of four, 3 in all
    sel = EdgeSelector(n_edges=2).fit([{3, 5, 9}, {3, 9}, {3}, {3}])
    assert sel.selected_edges_.tolist() == [9, 5]


def test_estimators_clone():
    m = ByteMLP(hidden_units=8, epochs=3, class_weight="balanced")
    c = clone(m)
    assert c.get_params() == m.get_params()
    assert clone(EdgeSelector(5)).get_params() == {"n_edges": 5}


# --- forward pass ---------------------------------------------------------


def test_tiny_model_hand_computed_outputs():
    m = hand_model(**TINY)
    # x = (255, 0): z1 = (1, -0.5), a1 = (1, 0), z2 = 1.25
    assert predict(m, b"\xff\x00")[0] == pytest.approx(0.7772998611746911, abs=1e-12)
    # x = (0, 255): z1 = (2, 1.5), z2 = 2 - 3 + 0.25 = -0.75
    assert predict(m, b"\x00\xff")[0] == pytest.approx(0.3208213008246071, abs=1e-12)


def test_zero_weights_give_one_half():
    m = hand_model(np.zeros((3, 4)), np.zeros(4), np.zeros((4, 2)), np.zeros(2))
    assert predict(m, b"abc").tolist() == [0.5, 0.5]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.binary(min_size=5, max_size=5))
def test_outputs_are_probabilities(seed, data):
    p = predict(random_model(np.random.default_rng(seed), 5, 4, 3), data)
    assert np.all((p > 0) & (p < 1))


def test_predict_rejects_wrong_length():
    with pytest.raises(ShapeError):
        predict(hand_model(**TINY), b"abc")


# --- gradients ------------------------------------------------------------


def test_tiny_model_gradient_hand_and_fd():
    m = hand_model(**TINY)
    s = 0.7772998611746911
    raw = gradient(m, b"\xff\x00", 0, GradientKind.RAW).values
    assert raw == pytest.approx([s * (1 - s), 2 * s * (1 - s)], rel=1e-12)
    fd = fd_gradient(m, np.array([1.0, 0.0]), 0)
    assert np.linalg.norm(raw - fd) / np.linalg.norm(fd) < 1e-5


def test_random_models_match_finite_differences():
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 100:
        n, h, e = rng.integers(2, 9), rng.integers(2, 7), rng.integers(1, 4)
        m = random_model(rng, n, h, e)
        data = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
        xs = np.frombuffer(data, np.uint8) / 255.0
        if not away_from_kinks(m, xs):
            continue  # finite differences are meaningless across a ReLU kink
        j = int(rng.integers(e))
        raw = gradient(m, data, j, GradientKind.RAW).values
        fd = fd_gradient(m, xs, j)
        assert np.linalg.norm(raw - fd) <= 1e-5 * np.linalg.norm(fd)
        assert np.array_equal(gradient(m, data, j).values, np.sign(raw))
        checked += 1


def test_dead_network_has_zero_gradient():
    rng = np.random.default_rng(1)
    m = hand_model(np.zeros((4, 3)), rng.normal(size=3), rng.normal(size=(3, 2)), rng.normal(size=2))
    g = gradient(m, b"\x01\x02\x03\x04", 1)
    assert g.values.tolist() == [0, 0, 0, 0]


def test_gradient_bounds_and_shape_errors():
    m = hand_model(**TINY)
    with pytest.raises(IndexError):
        gradient(m, b"ab", 1)
    with pytest.raises(ShapeError):
        gradient(m, b"abc", 0)


# --- training -------------------------------------------------------------


@pytest.fixture(scope="module")
def magic16_corpus(target):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with init_session(target("magic16"), Mode.PERSISTENT) as session:
            return collect_training_corpus(session, bundled_seeds("magic16")[0], 5000)


def test_loss_strictly_decreases_first_ten_epochs(magic16_corpus):
    m = train(magic16_corpus, Hyper(epochs=11))
    curve = m.loss_curve_
    assert all(b < a for a, b in zip(curve[:10], curve[1:11]))


def test_loss_beats_label_shuffled_control(magic16_corpus):
    sets = magic16_corpus.edge_sets()
    sel = EdgeSelector(CAMPAIGN_HYPER.max_edges).fit(sets)
    Y = sel.transform(sets)
    X = magic16_corpus.input_matrix()
    params = dict(hidden_units=CAMPAIGN_HYPER.hidden_units, epochs=CAMPAIGN_HYPER.epochs,
                  learning_rate=CAMPAIGN_HYPER.learning_rate, class_weight=CAMPAIGN_HYPER.class_weight)
    real = ByteMLP(**params).fit(X, Y).final_loss_
    shuffled = ByteMLP(**params).fit(X, np.random.default_rng(0).permutation(Y)).final_loss_
    assert real < shuffled


def _small_corpus():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return collect_training_corpus(StubSession(), bytes(range(40, 72)), 600)


def test_zero_epochs_is_initialization():
    c = _small_corpus()
    m = train(c, Hyper(hidden_units=8, epochs=0, random_state=3))
    ref = ByteMLP(hidden_units=8, random_state=3)
    ref._init_weights(32, len(m.edge_ids_))
    for name in ("W1_", "b1_", "W2_", "b2_"):
        assert np.array_equal(getattr(m, name), getattr(ref, name))
    assert m.loss_curve_ == []


def test_training_is_bit_reproducible(tmp_path):
    c = _small_corpus()
    hyper = Hyper(hidden_units=8, epochs=20, random_state=7)
    save_model(train(c, hyper), tmp_path / "a")
    save_model(train(c, hyper), tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    save_model(train(c, Hyper(hidden_units=8, epochs=20, random_state=8)), tmp_path / "c")
    assert (tmp_path / "a").read_bytes() != (tmp_path / "c").read_bytes()


def test_refuses_failing_corpus():
    c = _small_corpus()
    c.samples.append(Sample(bytes(32), frozenset()))
    with pytest.raises(CorpusRejected) as info:
        train(c)
    assert not info.value.report.passed


def test_balanced_weights_equalize_label_mass():
    Y = np.array([[1, 0], [0, 0], [0, 1], [0, 1]], float)
    w = ByteMLP(class_weight="balanced")._label_weights(Y)
    assert np.allclose((w * Y).sum(axis=0), (w * (1 - Y)).sum(axis=0))
    with pytest.raises(ValueError):
        ByteMLP(class_weight="odd")._label_weights(Y)


def test_model_file_roundtrip(tmp_path):
    c = _small_corpus()
    m = train(c, Hyper(hidden_units=8, epochs=5))
    path = tmp_path / "m.ffmlp"
    save_model(m, path)
    assert path.read_bytes()[:6] == b"FFMLP1"
    back = load_model(path)
    x = c.samples[3].data
    assert np.array_equal(predict(back, x), predict(m, x))
    assert back.edge_ids_.tolist() == m.edge_ids_.tolist()
    path.write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_model(path)

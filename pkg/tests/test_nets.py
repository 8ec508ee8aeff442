import logging

import numpy as np
import pytest

from dreamcfr.errors import TrainingDivergedError
from dreamcfr.nets import (
    MAGIC,
    MLPParams,
    TrainBatch,
    adam_init,
    adam_step,
    clip_grad_norm,
    default_dims,
    forward,
    load_net,
    loss_and_grads,
    masked_softmax,
    mlp_init,
    net_from_bytes,
    net_to_bytes,
    save_net,
    softmax_loss_and_grads,
    train,
)
from oracles import finite_difference_grads


class ArraySource:
    def __init__(self, features, targets, masks=None, weights=None):
        self.features = np.asarray(features, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        self.masks = np.ones_like(self.targets) if masks is None else np.asarray(masks, float)
        self.weights = np.ones(len(self.features)) if weights is None else np.asarray(weights, float)

    def __len__(self):
        return len(self.features)

    def batch(self, idx):
        return TrainBatch(self.features[idx], self.targets[idx], self.masks[idx], self.weights[idx])


def random_batch(rng, n, din, dout, mask_some=True):
    masks = np.ones((n, dout))
    if mask_some:
        masks = (rng.random((n, dout)) > 0.3).astype(float)
        masks[np.arange(n), rng.integers(0, dout, n)] = 1.0  # at least one live slot
    return TrainBatch(
        features=rng.normal(size=(n, din)),
        targets=rng.normal(size=(n, dout)),
        masks=masks,
        weights=rng.random(n) + 0.1,
    )


def grads_relative_error(analytic, numeric):
    (aw, ab), (nw, nb) = analytic, numeric
    num = sum(float(((a - b) ** 2).sum()) for a, b in zip(aw + ab, nw + nb))
    den = sum(float((b**2).sum()) for b in nw + nb)
    return np.sqrt(num / max(den, 1e-300))


def test_mlp_init_shapes_and_bounds():
    rng = np.random.default_rng(0)
    params = mlp_init((5, 7, 3), rng, game_id="kuhn")
    assert params.dims == (5, 7, 3)
    assert params.game_id == "kuhn"
    assert [w.shape for w in params.weights] == [(5, 7), (7, 3)]
    assert [b.shape for b in params.biases] == [(7,), (3,)]
    assert np.all(np.abs(params.weights[0]) <= 1 / np.sqrt(5))
    assert np.all(np.abs(params.weights[1]) <= 1 / np.sqrt(7))
    with pytest.raises(ValueError):
        mlp_init((4,), rng)
    with pytest.raises(ValueError):
        mlp_init((4, 0, 2), rng)


def test_default_dims():
    assert default_dims(11) == (11, 64, 64, 64, 3)
    assert default_dims(11, hidden=8, n_hidden=1, out=2) == (11, 8, 2)


def test_forward_hand_computed():
    params = MLPParams(
        dims=(2, 2, 1),
        weights=[np.array([[1.0, -1.0], [0.0, 2.0]]), np.array([[3.0], [1.0]])],
        biases=[np.array([0.5, -0.5]), np.array([0.25])],
    )
    x = np.array([1.0, 2.0])
    # hidden pre-activation: [1.5, 2.5]; relu keeps both; head: 3*1.5 + 2.5 + 0.25
    assert forward(params, x) == pytest.approx([7.25])
    x2 = np.array([-1.0, 0.0])
    # hidden pre-activation: [-0.5, 0.5] -> relu [0, 0.5]; head: 0.5 + 0.25
    assert forward(params, x2) == pytest.approx([0.75])
    batch = forward(params, np.stack([x, x2]))
    assert batch.shape == (2, 1)
    assert batch[:, 0] == pytest.approx([7.25, 0.75])


def test_masked_softmax():
    logits = np.array([[1.0, 2.0, 3.0], [5.0, 1000.0, -1000.0]])
    masks = np.array([[1.0, 0.0, 1.0], [1.0, 1.0, 1.0]])
    p = masked_softmax(logits, masks)
    assert p[0, 1] == 0.0
    assert np.isclose(p[0].sum(), 1.0)
    assert np.isclose(p[0, 2] / p[0, 0], np.exp(2.0))
    assert np.all(np.isfinite(p))  # large logits stay stable
    assert p[1, 1] == pytest.approx(1.0)


@pytest.mark.parametrize("loss_fn", [loss_and_grads, softmax_loss_and_grads])
def test_gradients_match_finite_differences(loss_fn):
    rng = np.random.default_rng(42)
    for trial in range(5):
        params = mlp_init((4, 6, 3), rng)
        batch = random_batch(rng, n=7, din=4, dout=3)
        _, analytic = loss_fn(params, batch)

        def loss_of(weights, biases):
            return loss_fn(MLPParams(params.dims, weights, biases), batch)[0]

        numeric = finite_difference_grads(loss_of, params.weights, params.biases)
        assert grads_relative_error(analytic, numeric) < 1e-6, trial


def test_loss_weights_reweight_rows():
    rng = np.random.default_rng(1)
    params = mlp_init((3, 4, 2), rng)
    batch = random_batch(rng, n=4, din=3, dout=2, mask_some=False)
    # doubling every weight leaves the normalized loss unchanged
    loss1, _ = loss_and_grads(params, batch)
    double = TrainBatch(batch.features, batch.targets, batch.masks, batch.weights * 2.0)
    loss2, _ = loss_and_grads(params, double)
    assert loss1 == pytest.approx(loss2)
    # a zero-weight row contributes nothing
    w = batch.weights.copy()
    w[0] = 0.0
    dropped = TrainBatch(batch.features[1:], batch.targets[1:], batch.masks[1:], w[1:])
    kept = TrainBatch(batch.features, batch.targets, batch.masks, w)
    assert loss_and_grads(params, kept)[0] == pytest.approx(loss_and_grads(params, dropped)[0])
    with pytest.raises(ValueError):
        loss_and_grads(params, TrainBatch(batch.features, batch.targets, batch.masks, w * 0.0))


def test_masked_slots_do_not_leak():
    rng = np.random.default_rng(2)
    params = mlp_init((3, 4, 2), rng)
    feats = rng.normal(size=(5, 3))
    masks = np.zeros((5, 2))
    masks[:, 0] = 1.0
    t1 = np.stack([np.ones(5), np.full(5, 100.0)], axis=1)
    t2 = np.stack([np.ones(5), np.full(5, -3.0)], axis=1)  # differs only where masked
    w = np.ones(5)
    l1, g1 = loss_and_grads(params, TrainBatch(feats, t1, masks, w))
    l2, g2 = loss_and_grads(params, TrainBatch(feats, t2, masks, w))
    assert l1 == pytest.approx(l2)
    for a, b in zip(g1[0] + g1[1], g2[0] + g2[1]):
        assert np.allclose(a, b)


def test_clip_grad_norm():
    grads = ([np.array([[3.0, 0.0]])], [np.array([4.0])])
    clipped, norm = clip_grad_norm(grads, 10.0)
    assert norm == 5.0
    assert clipped is grads  # under the cap: untouched
    clipped, norm = clip_grad_norm(grads, 1.0)
    assert norm == 5.0
    total = np.sqrt(sum(float((g**2).sum()) for g in clipped[0] + clipped[1]))
    assert total == pytest.approx(1.0)
    same, norm0 = clip_grad_norm(([np.zeros((2, 2))], [np.zeros(2)]), 1.0)
    assert norm0 == 0.0


def test_adam_first_step_is_signed_lr():
    rng = np.random.default_rng(3)
    params = mlp_init((2, 2), rng)
    state = adam_init(params)
    grads = ([np.array([[1.0, -2.0], [0.0, 3.0]])], [np.array([0.5, 0.0])])
    new, state2 = adam_step(params, state, grads, lr=0.01)
    # bias-corrected first step moves each coordinate by lr * sign(grad)
    step = params.weights[0] - new.weights[0]
    assert np.allclose(step, 0.01 * np.sign(grads[0][0]), atol=1e-6)
    assert new.biases[0][1] == params.biases[0][1]  # zero grad, zero move
    assert state2.step == 1
    # original parameters are not mutated
    assert params.weights[0][0, 0] != new.weights[0][0, 0]


def test_train_reduces_loss_on_learnable_target():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(256, 4))
    true_w = rng.normal(size=(4, 3))
    Y = X @ true_w
    source = ArraySource(X, Y)
    params = mlp_init(default_dims(4, hidden=16, n_hidden=2), rng)
    before = loss_and_grads(params, source.batch(np.arange(256)))[0]
    result = train(params, source, n_batches=300, batch_size=64, lr=0.01, rng=rng)
    after = loss_and_grads(result.params, source.batch(np.arange(256)))[0]
    assert after < 0.1 * before
    assert result.final_loss < before
    assert not result.skipped
    assert np.isfinite(result.mean_loss)


def test_train_empty_source_is_a_skip(caplog):
    rng = np.random.default_rng(0)
    params = mlp_init((3, 4, 3), rng)
    source = ArraySource(np.empty((0, 3)), np.empty((0, 3)))
    with caplog.at_level(logging.WARNING):
        result = train(params, source, n_batches=10, batch_size=4, lr=0.1, rng=rng)
    assert result.skipped
    assert result.params is params
    assert np.isnan(result.final_loss)
    assert any("empty buffer" in r.message for r in caplog.records)


def test_train_reset_reinitializes_from_stream():
    rng1 = np.random.default_rng(9)
    rng2 = np.random.default_rng(9)
    params = mlp_init((3, 5, 3), np.random.default_rng(0))
    source = ArraySource(np.zeros((4, 3)), np.zeros((4, 3)))
    result = train(params, source, n_batches=0, batch_size=2, lr=0.1, rng=rng1, reset=True)
    fresh = mlp_init((3, 5, 3), rng2, "")
    for a, b in zip(result.params.weights, fresh.weights):
        assert np.array_equal(a, b)
    assert not np.array_equal(result.params.weights[0], params.weights[0])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_raises_on_divergence():
    rng = np.random.default_rng(1)
    params = mlp_init((2, 4, 2), rng)
    big = 1e160
    source = ArraySource(np.full((8, 2), big), np.zeros((8, 2)))
    with pytest.raises(TrainingDivergedError):
        train(params, source, n_batches=5, batch_size=4, lr=1.0, rng=rng)


def test_serialization_round_trip_quantizes_once():
    rng = np.random.default_rng(5)
    params = mlp_init((6, 8, 3), rng, game_id="leduc")
    blob = net_to_bytes(params)
    assert blob.startswith(MAGIC)
    back = net_from_bytes(blob)
    assert back.dims == params.dims
    assert back.game_id == "leduc"
    for a, b in zip(back.weights, params.weights):
        assert np.allclose(a, b, atol=1e-6)  # float32 quantization
        assert a.dtype == np.float64
    # second trip is exact: quantization happened on the first save
    assert net_to_bytes(back) == blob
    out = forward(back, rng.normal(size=6))
    assert out.shape == (3,)


def test_save_and_load_files(tmp_path):
    rng = np.random.default_rng(6)
    params = mlp_init((4, 4, 3), rng, game_id="kuhn")
    path = tmp_path / "net.bin"
    save_net(params, path)
    back = load_net(path)
    assert back.dims == params.dims and back.game_id == "kuhn"
    assert net_to_bytes(back) == path.read_bytes()


def test_deserialization_rejects_corrupt_data():
    rng = np.random.default_rng(8)
    blob = net_to_bytes(mlp_init((3, 4, 2), rng))
    with pytest.raises(ValueError, match="magic"):
        net_from_bytes(b"NOTANET0" + blob[8:])
    with pytest.raises(ValueError, match="trailing"):
        net_from_bytes(blob + b"\x00\x00")
    with pytest.raises(ValueError, match="too long"):
        net_to_bytes(mlp_init((3, 4, 2), rng, game_id="x" * 300))

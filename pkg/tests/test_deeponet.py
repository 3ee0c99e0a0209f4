import numpy as np
import pytest

from opbench.dataset import build_dataset, build_ode_dataset
from opbench.deeponet import (
    QueryNodes,
    DeepONetArch,
    DeepONetParams,
    LossKind,
    TrainConfig,
    deeponet_forward,
    loss_and_gradients,
    loss_mean_l2_relative,
    loss_mse,
    mean_l2_relative_with_grad,
    predict,
    predict_dataset,
    train_deeponet,
)
from opbench.errors import DegenerateError, DivergenceError, ShapeError
from opbench.nn import Activation, AdamState, DenseLayer, MlpParams, adam_step

from .helpers import fd_deeponet, rel_err


@pytest.fixture(scope="module")
def ode_small():
    return build_ode_dataset(n_train=20, n_test=10, n_queries=15, seed=4)


def _params(seed=0, **kw):
    arch = DeepONetArch(branch=kw.pop("branch", [6, 5, 4]), trunk=kw.pop("trunk", [2, 5, 4]), **kw)
    return DeepONetParams.init(arch, np.random.default_rng(seed))


# -- architecture -------------------------------------------------------------------


def test_layer_widths():
    p = DeepONetParams.init(DeepONetArch(), np.random.default_rng(0))
    assert p.branch.layer_sizes == [100, 40, 40]
    assert p.trunk.layer_sizes == [1, 40, 40]
    assert p.latent_dim == 40 and p.n_sensors == 100 and p.query_dim == 1


def test_mismatched_latent_width():
    with pytest.raises(ShapeError):
        DeepONetArch(branch=[100, 40, 30], trunk=[2, 40, 40])


def test_default_has_no_output_bias():
    p = DeepONetParams.init(DeepONetArch(), np.random.default_rng(0))
    assert p.output_bias is None
    assert len(p.params()) == 8


def test_stacked_branches():
    p = _params(stacked=True)
    assert len(p.branches()) == 4
    assert all(b.layer_sizes == [6, 5, 1] for b in p.branches())


def test_wrong_input_shapes():
    p = _params()
    with pytest.raises(ShapeError):
        predict(p, np.zeros((2, 5)), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        predict(p, np.zeros((2, 6)), np.zeros((3, 1)))


# -- forward --------------------------------------------------------------------------


def test_zero_trunk_gives_zero():
    p = _params()
    last = p.trunk.layers[-1]
    last.weights[:] = 0
    last.bias[:] = 0
    u = np.random.default_rng(1).normal(size=(5, 6))
    assert np.all(predict(p, u, np.random.default_rng(2).random((7, 2))) == 0)


def test_scalar_latent_product():
    branch = MlpParams([DenseLayer(np.zeros((1, 3)), np.array([1.5]), Activation.IDENTITY)])
    trunk = MlpParams([DenseLayer(np.zeros((1, 2)), np.array([-2.0]), Activation.IDENTITY)])
    p = DeepONetParams(branch, trunk)
    assert deeponet_forward(p, [0.3, 0.1, 0.2], [0.5, 0.5]) == -3.0


@pytest.mark.parametrize("stacked", [False, True])
def test_forward_matches_decomposition(stacked):
    p = _params(seed=3, stacked=stacked, output_bias=True)
    p.output_bias[0] = 0.25
    rng = np.random.default_rng(4)
    u = rng.normal(size=6)
    x = rng.random(2)
    b = np.concatenate([br(u[None])[0] for br in p.branches()])
    t = p.trunk(x[None])[0]
    naive = sum(b[k] * t[k] for k in range(b.size)) + 0.25
    assert abs(deeponet_forward(p, u, x) - naive) <= 1e-12 * max(1, abs(naive))


def test_aligned_equals_unaligned():
    p = _params(seed=5)
    rng = np.random.default_rng(6)
    u = rng.normal(size=(4, 6))
    pts = rng.random((9, 2))
    a = predict(p, u, pts)
    b = predict(p, u, np.broadcast_to(pts, (4, 9, 2)).copy())
    assert np.allclose(a, b, rtol=0, atol=1e-14)


def test_latent_permutation_invariance():
    p = _params(seed=7)
    perm = np.random.default_rng(0).permutation(4)
    q = p.copy()
    for net in (q.branch, q.trunk):
        last = net.layers[-1]
        last.weights[:] = last.weights[perm]
        last.bias[:] = last.bias[perm]
    rng = np.random.default_rng(8)
    u, pts = rng.normal(size=(3, 6)), rng.random((5, 2))
    assert np.allclose(predict(p, u, pts), predict(q, u, pts), rtol=0, atol=1e-14)


# -- losses ------------------------------------------------------------------------


def test_mse_values():
    assert loss_mse([1.0, 2.0], [1.0, 2.0]) == 0
    assert loss_mse([2.0, 0.0], [1.0, 1.0]) == 1.0
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=10), rng.normal(size=10)
    naive = 0.0
    for x, y in zip(a, b):
        naive += (x - y) ** 2
    assert abs(loss_mse(a, b) - naive / 10) <= 1e-15


def test_mean_l2_relative_values():
    t = [np.array([3.0, 4.0]), np.array([1.0, 0.0, 0.0])]
    assert loss_mean_l2_relative(t, t) == 0
    assert loss_mean_l2_relative([np.zeros(2), np.zeros(3)], t) == 1.0
    # ||(1,0)|| / 5 = 0.2 and ||(0,2,0)|| / 1 = 2
    preds = [np.array([4.0, 4.0]), np.array([1.0, 2.0, 0.0])]
    assert abs(loss_mean_l2_relative(preds, t) - 1.1) <= 1e-15


def test_mean_l2_relative_degenerate():
    with pytest.raises(DegenerateError):
        loss_mean_l2_relative([np.ones(2)], [np.zeros(2)])
    with pytest.raises(DegenerateError):
        loss_mean_l2_relative([], [])


def test_grouped_loss_agrees_with_ragged_form():
    rng = np.random.default_rng(1)
    p, t = rng.normal(size=(4, 7)), rng.normal(size=(4, 7))
    assert abs(mean_l2_relative_with_grad(p, t)[0] - loss_mean_l2_relative(list(p), list(t))) <= 1e-15


# -- gradients ------------------------------------------------------------------------


@pytest.mark.parametrize("loss", list(LossKind))
@pytest.mark.parametrize("aligned", [True, False])
@pytest.mark.parametrize("variant", [{}, {"stacked": True}, {"output_bias": True}, {"activation": "tanh"}])
def test_deeponet_gradients(loss, aligned, variant):
    p = _params(seed=9, activation=variant.get("activation", "relu"), trunk_output_activation="tanh",
                stacked=variant.get("stacked", False), output_bias=variant.get("output_bias", False))
    rng = np.random.default_rng(10)
    u = rng.normal(size=(3, 6))
    pts = rng.random((5, 2)) if aligned else rng.random((3, 5, 2))
    y = rng.normal(size=(3, 5))
    errs = fd_deeponet(p, u, pts, y, loss)
    assert np.mean(errs <= 1e-5) >= 0.99


def test_deeponet_gradients_relu_trunk():
    p = _params(seed=11)
    rng = np.random.default_rng(12)
    errs = fd_deeponet(p, rng.normal(size=(3, 6)), rng.random((5, 2)), rng.normal(size=(3, 5)), LossKind.MSE)
    assert np.mean(errs <= 1e-5) >= 0.99


# -- training -------------------------------------------------------------------------


def test_zero_iterations_returns_init(ode_small):
    arch = DeepONetArch(trunk=[1, 40, 40])
    res = train_deeponet(ode_small[0], arch, TrainConfig(iterations=0, seed=3))
    init = DeepONetParams.init(arch, np.random.default_rng(3))
    assert all(np.array_equal(a, b) for a, b in zip(res.params.params(), init.params()))
    assert res.history == []


def test_training_deterministic(ode_small):
    arch = DeepONetArch(trunk=[1, 40, 40])
    cfg = TrainConfig(iterations=300, seed=1)
    a = train_deeponet(ode_small[0], arch, cfg, ode_small[1])
    b = train_deeponet(ode_small[0], arch, cfg, ode_small[1])
    assert a.history == b.history
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.params.params(), b.params.params()))


def test_history_rows(ode_small):
    res = train_deeponet(ode_small[0], DeepONetArch(trunk=[1, 40, 40]), TrainConfig(iterations=1000), ode_small[1])
    assert [r["iteration"] for r in res.history] == list(range(100, 1001, 100))
    assert {"train_loss", "test_loss", "test_metric"} <= set(res.history[0])


def test_snapshots(ode_small):
    res = train_deeponet(ode_small[0], DeepONetArch(trunk=[1, 40, 40]), TrainConfig(iterations=20), snapshot_at=[0, 10, 20])
    assert sorted(res.snapshots) == [0, 10, 20]
    assert all(np.array_equal(a, b) for a, b in zip(res.snapshots[20].params(), res.params.params()))
    assert not all(np.array_equal(a, b) for a, b in zip(res.snapshots[10].params(), res.params.params()))


@pytest.mark.parametrize("problem", ["ode", "diffusion", "burgers"])
def test_loss_drops_by_iteration_1000(problem):
    solver = {"n_grid": 128} if problem == "burgers" else None
    train, _ = build_dataset(problem, 30, 1, n_queries=50, seed=2, solver=solver)
    arch = DeepONetArch(trunk=[train.query_dim, 40, 40])
    res = train_deeponet(train, arch, TrainConfig(iterations=1000))
    at_1000 = next(r["train_loss"] for r in res.history if r["iteration"] == 1000)
    assert at_1000 < res.initial["train_loss"]


def test_mean_l2_relative_training(ode_small):
    res = train_deeponet(ode_small[0], DeepONetArch(trunk=[1, 40, 40]),
                         TrainConfig(iterations=500, loss=LossKind.MEAN_L2_RELATIVE))
    assert res.history[-1]["train_loss"] < res.initial["train_loss"]


def test_zero_shot_evaluation_leaves_params(ode_small):
    res = train_deeponet(ode_small[0], DeepONetArch(trunk=[1, 40, 40]), TrainConfig(iterations=50))
    before = [p.copy() for p in res.params.params()]
    predict_dataset(res.params, ode_small[1])
    assert all(a.tobytes() == b.tobytes() for a, b in zip(before, res.params.params()))


def test_divergence_reported(ode_small):
    train = ode_small[0]
    with pytest.raises(DivergenceError) as info:
        train_deeponet(train, DeepONetArch(trunk=[1, 40, 40]), TrainConfig(iterations=2000, lr=1e150))
    assert info.value.iteration >= 1


def test_input_width_checked(ode_small):
    with pytest.raises(ShapeError):
        train_deeponet(ode_small[0], DeepONetArch(trunk=[2, 40, 40]), TrainConfig(iterations=1))


def test_frozen_orthonormal_trunk_is_least_squares():
    # trunk = identity on points whose columns are orthonormal, so each function's
    # best coefficients are Q^T y and the branch is a linear regression onto them
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(12, 3)))
    a = rng.normal(size=(3, 5))
    u = rng.normal(size=(40, 5))
    y = (u @ a.T) @ q.T
    branch = MlpParams([DenseLayer(np.zeros((3, 5)), np.zeros(3), Activation.IDENTITY)])
    trunk = MlpParams([DenseLayer(np.eye(3), np.zeros(3), Activation.IDENTITY)])
    p = DeepONetParams(branch, trunk)
    n_branch = len(branch.params())
    state = AdamState.for_params(branch.params(), lr=1e-2)
    for _ in range(3000):
        _, grads = loss_and_gradients(p, u, q, y, LossKind.MSE)
        adam_step(state, branch.params(), grads[:n_branch])
    coef = branch(u)
    assert np.max(np.abs(coef - y @ q)) <= 1e-3


def test_checkpoint_round_trip():
    p = _params(seed=2, stacked=True, output_bias=True)
    p.output_bias[0] = -0.5
    q, meta = DeepONetParams.from_bytes(p.to_bytes({"step_count": 7}))
    assert meta["step_count"] == 7
    assert all(a.tobytes() == b.tobytes() for a, b in zip(p.params(), q.params()))
    rng = np.random.default_rng(0)
    u, pts = rng.normal(size=(2, 6)), rng.random((3, 2))
    assert np.array_equal(predict(p, u, pts), predict(q, u, pts))


def test_query_nodes_match_plain_unaligned():
    p = _params(seed=21)
    rng = np.random.default_rng(22)
    grid = rng.random((6, 2))
    pts = np.stack([grid[rng.permutation(6)[:5]] for _ in range(4)])  # nodes shared across functions
    u, y = rng.normal(size=(4, 6)), rng.normal(size=(4, 5))
    nodes = QueryNodes.from_points(pts)
    assert nodes.nodes.shape[0] <= 6
    assert np.array_equal(nodes.nodes[nodes.index], pts)
    for loss in LossKind:
        v1, g1 = loss_and_gradients(p, u, pts, y, loss)
        v2, g2 = loss_and_gradients(p, u, nodes, y, loss)
        assert v1 == v2
        assert all(np.allclose(a, b, rtol=1e-12, atol=1e-15) for a, b in zip(g1, g2))
    with pytest.raises(ShapeError):
        QueryNodes.from_points(np.stack([grid[[0, 0, 1]]]))

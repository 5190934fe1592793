import numpy as np
import pytest

from diffzsl.numerics import GRAD_NORM_EPS, Adam, Mlp, Rng, scale_grads
from oracles import fd_param_grads, max_bundle_rel_err, rel_err

FAMILIES = (["leaky_relu", "identity"], ["relu", "identity"],
            ["sigmoid", "identity"], ["leaky_relu", "sigmoid"])


def naive_forward(net, x):
    """Per-element loop evaluation, independent of the vectorized path."""
    out = []
    for row in x:
        h = list(row)
        for w, b, act in zip(net.weights, net.biases, net.activations):
            z = []
            for j in range(w.shape[1]):
                s = b[j]
                for i in range(w.shape[0]):
                    s += h[i] * w[i, j]
                z.append(s)
            if act == "identity":
                h = z
            elif act == "relu":
                h = [max(v, 0.0) for v in z]
            elif act == "leaky_relu":
                h = [v if v >= 0 else 0.2 * v for v in z]
            elif act == "sigmoid":
                h = [1.0 / (1.0 + np.exp(-v)) for v in z]
        out.append(h)
    return np.asarray(out)


def test_forward_identity_net():
    net = Mlp(weights=[np.eye(3)], biases=[np.zeros(3)], activations=["identity"])
    x = np.array([[0.5, -1.0, 2.0], [3.0, 0.0, -0.25]])
    assert np.array_equal(net.forward(x), x)


def test_forward_hand_relu():
    net = Mlp(weights=[np.eye(2)], biases=[np.array([1.0, 1.0])],
              activations=["relu"])
    assert np.array_equal(net.forward(np.array([[1.0, 2.0]])), np.array([[2.0, 3.0]]))


def test_forward_matches_naive_loop():
    rng = Rng(0)
    for acts in FAMILIES:
        net = Mlp.create([4, 6, 3], rng, activations=acts)
        x = rng.normal((5, 4))
        assert rel_err(net.forward(x), naive_forward(net, x)) < 1e-12


def test_forward_is_pure():
    rng = Rng(1)
    net = Mlp.create([3, 5, 2], rng)
    x = rng.normal((4, 3))
    x_copy = x.copy()
    w_copy = [w.copy() for w in net.weights]
    out1 = net.forward(x)
    out2 = net.forward(x)
    assert np.array_equal(out1, out2)
    assert np.array_equal(x, x_copy)
    assert all(np.array_equal(a, b) for a, b in zip(net.weights, w_copy))


def test_forward_dimension_mismatch():
    net = Mlp.create([3, 2], Rng(0))
    with pytest.raises(ValueError, match="incompatible"):
        net.forward(np.zeros((2, 4)))


def test_grad_params_linear_case():
    # scalar y = w.x: dy/dw = x
    net = Mlp(weights=[np.array([[0.3], [-1.2], [2.0]])], biases=[np.zeros(1)],
              activations=["identity"])
    x = np.array([[1.0, 2.0, -0.5]])
    grads = net.grad_params(x, np.ones((1, 1)))
    assert np.allclose(grads[0][0], x.T)
    assert np.allclose(grads[0][1], [1.0])


def test_grad_params_matches_finite_differences():
    rng = Rng(2)
    worst = 0.0
    for case in range(20):
        acts = FAMILIES[case % len(FAMILIES)]
        net = Mlp.create([3, 5, 2], rng, activations=acts)
        x = rng.normal((4, 3))
        up = rng.normal((4, 2))
        got = net.grad_params(x, up)
        want = fd_param_grads(lambda: float(np.sum(up * net.forward(x))), net)
        worst = max(worst, max_bundle_rel_err(got, want))
    assert worst < 1e-4


def test_grad_params_zero_upstream():
    rng = Rng(3)
    net = Mlp.create([3, 4, 2], rng)
    grads = net.grad_params(rng.normal((5, 3)), np.zeros((5, 2)))
    for dw, db in grads:
        assert np.all(dw == 0.0) and np.all(db == 0.0)


def test_grad_params_shape_mismatch():
    net = Mlp.create([3, 2], Rng(0))
    with pytest.raises(ValueError, match="upstream"):
        net.grad_params(np.zeros((4, 3)), np.zeros((4, 3)))


def test_grad_input_linear_critic():
    w = np.array([[1.5], [-0.5], [0.25]])
    net = Mlp(weights=[w], biases=[np.zeros(1)], activations=["identity"])
    for x in (np.zeros((3, 3)), Rng(4).normal((6, 3))):
        g = net.grad_input(x)
        assert np.allclose(g, np.tile(w.ravel(), (x.shape[0], 1)))


def test_grad_input_matches_finite_differences():
    rng = Rng(5)
    for acts in FAMILIES:
        net = Mlp.create([4, 6, 1], rng, activations=acts[:1] + ["identity"])
        x = rng.normal((3, 4))
        g = net.grad_input(x)
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                step = 1e-4
                xp, xm = x.copy(), x.copy()
                xp[i, j] += step
                xm[i, j] -= step
                fd = (net.forward(xp)[i, 0] - net.forward(xm)[i, 0]) / (2 * step)
                assert abs(g[i, j] - fd) / max(abs(fd), 1e-10) < 1e-4


def test_grad_input_relu_active_path():
    # all-positive preactivations: gradient is the product of the weights
    rng = Rng(6)
    w1 = np.abs(rng.normal((3, 4))) + 0.1
    w2 = np.abs(rng.normal((4, 1))) + 0.1
    net = Mlp(weights=[w1, w2], biases=[np.zeros(4), np.zeros(1)],
              activations=["relu", "identity"])
    x = np.abs(rng.normal((2, 3))) + 0.1
    assert np.allclose(net.grad_input(x), np.tile((w1 @ w2).ravel(), (2, 1)))


def test_grad_input_requires_scalar_output():
    net = Mlp.create([3, 2], Rng(0))
    with pytest.raises(ValueError, match="scalar"):
        net.grad_input(np.zeros((2, 3)))


def test_penalty_unit_norm_linear_critic():
    w = np.array([[0.6], [0.8]])  # unit norm
    net = Mlp(weights=[w], biases=[np.zeros(1)], activations=["identity"])
    penalty, grads = net.grad_penalty_grad(Rng(7).normal((5, 2)))
    assert penalty < 1e-12
    assert all(np.max(np.abs(dw)) < 1e-10 and np.max(np.abs(db)) < 1e-10
               for dw, db in grads)


def test_penalty_linear_closed_form():
    # penalty (||w||-1)^2 = 1; gradient 2(||w||-1) w/||w|| = [2, 0]
    net = Mlp(weights=[np.array([[2.0], [0.0]])], biases=[np.zeros(1)],
              activations=["identity"])
    penalty, grads = net.grad_penalty_grad(np.array([[0.3, -0.5], [1.0, 2.0]]))
    assert abs(penalty - 1.0) < 1e-9
    assert np.allclose(grads[0][0].ravel(), [2.0, 0.0], atol=1e-9)
    assert np.allclose(grads[0][1], 0.0)


def test_penalty_gradient_matches_finite_differences():
    rng = Rng(8)
    worst = 0.0
    for case in range(20):
        acts = FAMILIES[case % len(FAMILIES)]
        net = Mlp.create([4, 6, 1], rng, activations=acts[:1] + ["identity"])
        x = rng.normal((5, 4))

        def value():
            g = net.grad_input(x)
            r = np.sqrt(np.sum(g ** 2, axis=1) + GRAD_NORM_EPS)
            return float(np.mean((r - 1.0) ** 2))

        _, got = net.grad_penalty_grad(x)
        want = fd_param_grads(value, net)
        worst = max(worst, max_bundle_rel_err(got, want))
    assert worst < 1e-3


def test_penalty_sliced_columns_matches_finite_differences():
    rng = Rng(9)
    net = Mlp.create([6, 5, 1], rng)
    x = rng.normal((4, 6))
    cols = 3

    def value():
        g = net.grad_input(x)[:, :cols]
        r = np.sqrt(np.sum(g ** 2, axis=1) + GRAD_NORM_EPS)
        return float(np.mean((r - 1.0) ** 2))

    _, got = net.grad_penalty_grad(x, cols=cols)
    assert max_bundle_rel_err(got, fd_param_grads(value, net)) < 1e-3


def test_penalty_fd_mode_agrees_with_exact():
    rng = Rng(10)
    net = Mlp.create([3, 4, 1], rng)
    x = rng.normal((4, 3))
    p_exact, g_exact = net.grad_penalty_grad(x)
    p_fd, g_fd = net.grad_penalty_fd(x, step=1e-5)
    assert abs(p_exact - p_fd) < 1e-9
    assert max_bundle_rel_err(g_fd, g_exact) < 1e-3


def test_adam_determinism():
    def run():
        rng = Rng(42)
        net = Mlp.create([3, 5, 1], rng)
        opt = Adam(net)
        x = rng.normal((8, 3))
        target = rng.normal((8, 1))
        for _ in range(25):
            out = net.forward(x)
            opt.step(net.grad_params(x, 2.0 * (out - target) / out.size))
        return net

    a, b = run(), run()
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    for ba, bb in zip(a.biases, b.biases):
        assert np.array_equal(ba, bb)


def test_rng_reproducible_and_substreams_distinct():
    a = Rng(123).normal(8)
    b = Rng(123).normal(8)
    assert np.array_equal(a, b)
    s1 = Rng(123).substream("train").normal(8)
    s2 = Rng(123).substream("data").normal(8)
    assert not np.array_equal(s1, s2)
    assert np.array_equal(s1, Rng(123).substream("train").normal(8))

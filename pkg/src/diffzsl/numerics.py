"""Small dense-network numerics on plain numpy arrays.

Provides MLPs with hand-rolled exact reverse-mode gradients, the
second-order gradient of the WGAN-GP gradient-norm penalty (obtained by
backpropagating through the explicit input-gradient recurrence of the
MLP, not through a general autodiff graph), Adam, and a counter-based
RNG whose streams are bit-identical across platforms for a given seed.

Conventions: batches are row-major float64 matrices (one sample per
row); layer l computes ``h_l = act_l(h_{l-1} @ W_l + b_l)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

LEAKY_SLOPE = 0.2
# Added under the square root of the gradient norm so the penalty stays
# differentiable at zero-gradient rows (measure-zero otherwise).
GRAD_NORM_EPS = 1e-12

ACTIVATIONS = ("identity", "relu", "leaky_relu", "sigmoid")

# A gradient bundle is one (dW, db) pair per layer, aligned with Mlp.weights.
GradBundle = list


class Rng:
    """Reproducible random stream backed by numpy's Philox generator.

    Philox is counter-based, so an identical seed yields a bit-identical
    stream on every platform. Named substreams are derived by hashing the
    name into the Philox spawn key; the derivation is order-independent.
    """

    def __init__(self, seed: int, _key: tuple = ()):
        self.seed = int(seed)
        self._key = tuple(_key)
        self.gen = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=self._key))
        )

    def substream(self, name: str) -> "Rng":
        digest = hashlib.sha256(name.encode("utf-8")).digest()
        return Rng(self.seed, self._key + (int.from_bytes(digest[:8], "little"),))

    def normal(self, shape) -> np.ndarray:
        return self.gen.standard_normal(shape)

    def uniform(self, shape) -> np.ndarray:
        return self.gen.random(shape)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self.gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self.gen.choice(n, size=size, replace=replace)


def _act(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "leaky_relu":
        return np.where(z >= 0.0, z, LEAKY_SLOPE * z)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {kind!r}")


def _act_prime(kind: str, z: np.ndarray) -> np.ndarray:
    # Kinked activations use the positive branch at z == 0.
    if kind == "identity":
        return np.ones_like(z)
    if kind == "relu":
        return (z >= 0.0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(z >= 0.0, 1.0, LEAKY_SLOPE)
    if kind == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 - s)
    raise ValueError(f"unknown activation {kind!r}")


def _act_second(kind: str, z: np.ndarray) -> np.ndarray:
    if kind in ("identity", "relu", "leaky_relu"):
        return np.zeros_like(z)
    if kind == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 - s) * (1.0 - 2.0 * s)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class Mlp:
    """Dense feed-forward network with per-layer activations."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    activations: list = field(default_factory=list)

    @classmethod
    def create(cls, dims, rng: Rng, activations=None) -> "Mlp":
        """Build a network with the given layer widths.

        ``activations`` defaults to leaky-relu on hidden layers and
        identity on the output layer. Weight init is He-style scaled
        normal, biases start at zero; fully determined by ``rng``.
        """
        if len(dims) < 2:
            raise ValueError("need at least input and output widths")
        n_layers = len(dims) - 1
        if activations is None:
            activations = ["leaky_relu"] * (n_layers - 1) + ["identity"]
        if len(activations) != n_layers:
            raise ValueError("one activation per layer required")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        weights, biases = [], []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            scale = np.sqrt(2.0 / d_in)
            weights.append(rng.normal((d_in, d_out)) * scale)
            biases.append(np.zeros(d_out))
        return cls(weights=weights, biases=biases, activations=list(activations))

    @property
    def dims(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "Mlp":
        return Mlp(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activations=list(self.activations),
        )

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(
                f"input shape {x.shape} incompatible with first layer width {self.in_dim}"
            )
        return x

    def _trace(self, x: np.ndarray):
        """Forward pass keeping every pre-activation and activation."""
        hs, zs = [x], []
        h = x
        for w, b, a in zip(self.weights, self.biases, self.activations):
            z = h @ w + b
            h = _act(a, z)
            zs.append(z)
            hs.append(h)
        return hs, zs

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch forward pass; pure, no state is touched."""
        x = self._check_input(x)
        h = x
        for w, b, a in zip(self.weights, self.biases, self.activations):
            h = _act(a, h @ w + b)
        return h

    def grad_params(self, x: np.ndarray, upstream: np.ndarray) -> GradBundle:
        """Exact gradients of <upstream, forward(x)> w.r.t. every parameter."""
        x = self._check_input(x)
        upstream = np.asarray(upstream, dtype=np.float64)
        hs, zs = self._trace(x)
        if upstream.shape != hs[-1].shape:
            raise ValueError(
                f"upstream shape {upstream.shape} != output shape {hs[-1].shape}"
            )
        grads = [None] * len(self.weights)
        delta = upstream * _act_prime(self.activations[-1], zs[-1])
        for l in range(len(self.weights) - 1, -1, -1):
            grads[l] = (hs[l].T @ delta, delta.sum(axis=0))
            if l > 0:
                delta = (delta @ self.weights[l].T) * _act_prime(
                    self.activations[l - 1], zs[l - 1]
                )
        return grads

    def grad_input(self, x: np.ndarray) -> np.ndarray:
        """Per-row input gradient of a scalar-output network."""
        x = self._check_input(x)
        if self.out_dim != 1:
            raise ValueError("grad_input requires a scalar-output network")
        _, zs = self._trace(x)
        u = _act_prime(self.activations[-1], zs[-1])
        for l in range(len(self.weights) - 1, -1, -1):
            g = u @ self.weights[l].T
            if l > 0:
                u = g * _act_prime(self.activations[l - 1], zs[l - 1])
        return g

    def grad_penalty_grad(self, xhat: np.ndarray, cols=None):
        """Gradient-norm penalty and its exact parameter gradient.

        penalty = mean over rows of (||grad_x D(x)|| - 1)^2, the norm taken
        over the first ``cols`` input columns (all of them by default).
        The parameter gradient is second-order: the input-gradient
        recurrence is unrolled and backpropagated through explicitly,
        including the activation-curvature terms (nonzero for sigmoid).
        """
        xhat = self._check_input(xhat)
        if self.out_dim != 1:
            raise ValueError("grad_penalty_grad requires a scalar-output network")
        n = xhat.shape[0]
        L = len(self.weights)
        if cols is None:
            cols = self.in_dim
        hs, zs = self._trace(xhat)
        primes = [_act_prime(a, z) for a, z in zip(self.activations, zs)]
        seconds = [_act_second(a, z) for a, z in zip(self.activations, zs)]

        # Input-gradient recurrence: u_l = dy/dz_l, g_{l-1} = dy/dh_{l-1}.
        us = [None] * (L + 1)
        gs = [None] * (L + 1)
        us[L] = primes[L - 1]
        for l in range(L, 0, -1):
            gs[l - 1] = us[l] @ self.weights[l - 1].T
            if l > 1:
                us[l - 1] = gs[l - 1] * primes[l - 2]

        g = gs[0]
        sq = np.sum(g[:, :cols] ** 2, axis=1)
        r = np.sqrt(sq + GRAD_NORM_EPS)
        penalty = float(np.mean((r - 1.0) ** 2))

        # Adjoint sweep over the recurrence above. Bars are d penalty / d node.
        g_bar = np.zeros_like(g)
        g_bar[:, :cols] = (2.0 / n) * ((r - 1.0) / r)[:, None] * g[:, :cols]
        w_bars = [np.zeros_like(w) for w in self.weights]
        b_bars = [np.zeros_like(b) for b in self.biases]
        z_bars = [np.zeros_like(z) for z in zs]
        for l in range(1, L + 1):
            u_bar = g_bar @ self.weights[l - 1]
            w_bars[l - 1] += g_bar.T @ us[l]
            if l < L:
                g_bar = u_bar * primes[l - 1]
                z_bars[l - 1] += u_bar * gs[l] * seconds[l - 1]
            else:
                z_bars[l - 1] += u_bar * seconds[l - 1]

        # Remaining dependence of the z_l on parameters via the forward pass.
        h_bar = np.zeros_like(hs[-1])
        for l in range(L, 0, -1):
            z_bar = z_bars[l - 1] + h_bar * primes[l - 1]
            w_bars[l - 1] += hs[l - 1].T @ z_bar
            b_bars[l - 1] += z_bar.sum(axis=0)
            h_bar = z_bar @ self.weights[l - 1].T
        return penalty, list(zip(w_bars, b_bars))

    def grad_penalty_fd(self, xhat: np.ndarray, cols=None, step: float = 1e-5):
        """Finite-difference fallback for the penalty gradient (debug aid).

        Central differences over every parameter; O(#params) forward
        sweeps, so only usable on small networks.
        """

        def penalty_value(net: "Mlp") -> float:
            g = net.grad_input(xhat)
            c = net.in_dim if cols is None else cols
            r = np.sqrt(np.sum(g[:, :c] ** 2, axis=1) + GRAD_NORM_EPS)
            return float(np.mean((r - 1.0) ** 2))

        grads = []
        for l in range(len(self.weights)):
            dw = np.zeros_like(self.weights[l])
            for idx in np.ndindex(*dw.shape):
                orig = self.weights[l][idx]
                self.weights[l][idx] = orig + step
                hi = penalty_value(self)
                self.weights[l][idx] = orig - step
                lo = penalty_value(self)
                self.weights[l][idx] = orig
                dw[idx] = (hi - lo) / (2 * step)
            db = np.zeros_like(self.biases[l])
            for idx in np.ndindex(*db.shape):
                orig = self.biases[l][idx]
                self.biases[l][idx] = orig + step
                hi = penalty_value(self)
                self.biases[l][idx] = orig - step
                lo = penalty_value(self)
                self.biases[l][idx] = orig
                db[idx] = (hi - lo) / (2 * step)
            grads.append((dw, db))
        return penalty_value(self), grads


def zeros_like_grads(net: Mlp) -> GradBundle:
    return [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]


def add_grads(a: GradBundle, b: GradBundle) -> GradBundle:
    return [(aw + bw, ab + bb) for (aw, ab), (bw, bb) in zip(a, b)]


def scale_grads(a: GradBundle, s: float) -> GradBundle:
    return [(s * w, s * b) for w, b in a]


class Adam:
    """Adam over one Mlp's parameters; step() descends the given gradients."""

    def __init__(self, net: Mlp, lr: float = 5e-4, beta1: float = 0.5,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = zeros_like_grads(net)
        self.v = zeros_like_grads(net)

    def step(self, grads: GradBundle) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for l, (dw, db) in enumerate(grads):
            mw, mb = self.m[l]
            vw, vb = self.v[l]
            mw = b1 * mw + (1 - b1) * dw
            mb = b1 * mb + (1 - b1) * db
            vw = b2 * vw + (1 - b2) * dw ** 2
            vb = b2 * vb + (1 - b2) * db ** 2
            self.m[l] = (mw, mb)
            self.v[l] = (vw, vb)
            self.net.weights[l] -= self.lr * (mw / bc1) / (np.sqrt(vw / bc2) + self.eps)
            self.net.biases[l] -= self.lr * (mb / bc1) / (np.sqrt(vb / bc2) + self.eps)

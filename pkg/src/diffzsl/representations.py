"""Feature extractors: a cross-entropy encoder and a contrastive encoder.

The CE encoder is trained with a linear softmax head on seen classes and
supplies clean features; the contrastive encoder is trained with the
supervised contrastive loss and supplies unit-norm representations used
as instance-level semantics. Both are frozen after training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container
from .datasets import TRAIN, FeatureSet
from .numerics import Adam, Mlp, Rng


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def ce_loss(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood after softmax; y holds class indices."""
    logits = np.asarray(logits, dtype=np.float64)
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y >= logits.shape[1]):
        raise ValueError("label out of range for logit width")
    p = softmax(logits)
    return float(-np.mean(np.log(p[np.arange(len(y)), y] + 1e-300)))


def ce_grad(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    p = softmax(np.asarray(logits, dtype=np.float64))
    p[np.arange(len(y)), np.asarray(y)] -= 1.0
    return p / len(y)


def _sc_terms(h: np.ndarray, y: np.ndarray, tau: float):
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(y)
    n = h.shape[0]
    sims = (h @ h.T) / tau
    same = y[:, None] == y[None, :]
    np.fill_diagonal(same, False)
    anchors = [i for i in range(n) if same[i].any()]
    if not anchors:
        raise ValueError("batch has no anchor with a positive")
    return h, y, sims, same, anchors


def sc_loss(h: np.ndarray, y: np.ndarray, tau: float) -> float:
    """Supervised contrastive loss on unit-norm rows.

    For each anchor and each of its positives, the denominator holds that
    one positive plus all other-class rows in the batch; the result is the
    flat mean over (anchor, positive) pairs. Anchors without a positive
    are excluded; a batch with no valid anchor raises.
    """
    h, y, sims, same, anchors = _sc_terms(h, y, tau)
    total, count = 0.0, 0
    for i in anchors:
        neg = np.exp(sims[i][y != y[i]]).sum()
        for j in np.flatnonzero(same[i]):
            pos = np.exp(sims[i, j])
            total += -np.log(pos / (pos + neg))
            count += 1
    return total / count


def sc_grad(h: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    """Gradient of sc_loss w.r.t. the (already unit-norm) rows h."""
    h, y, sims, same, anchors = _sc_terms(h, y, tau)
    n = h.shape[0]
    grad = np.zeros_like(h)
    count = sum(int(same[i].sum()) for i in anchors)
    for i in anchors:
        neg_mask = y != y[i]
        neg_exp = np.exp(sims[i][neg_mask])
        neg_sum = neg_exp.sum()
        neg_idx = np.flatnonzero(neg_mask)
        for j in np.flatnonzero(same[i]):
            pos = np.exp(sims[i, j])
            denom = pos + neg_sum
            # d(-log(pos/denom))/d sims: positive gets pos/denom - 1, negatives pos_k/denom
            coef_j = pos / denom - 1.0
            grad[i] += coef_j * h[j] / tau
            grad[j] += coef_j * h[i] / tau
            coefs = neg_exp / denom
            grad[i] += (coefs[:, None] * h[neg_idx]).sum(axis=0) / tau
            grad[neg_idx] += coefs[:, None] * h[i] / tau
    return grad / count


def normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / (np.linalg.norm(x, axis=1, keepdims=True) + 1e-12)


def _normalize_backward(raw: np.ndarray, h: np.ndarray, dh: np.ndarray) -> np.ndarray:
    """Chain a gradient on unit-norm rows h back to the raw rows."""
    norms = np.linalg.norm(raw, axis=1, keepdims=True) + 1e-12
    inner = np.sum(h * dh, axis=1, keepdims=True)
    return (dh - h * inner) / norms


@dataclass(frozen=True)
class EncoderConfig:
    d_ce: int = 24
    d_r: int = 12
    hidden: tuple = (64,)
    tau: float = 0.1
    epochs: int = 30
    batch: int = 128
    lr: float = 5e-4
    # >1 contrasts at sub-class granularity: each class is subdivided by
    # k-means and the contrastive loss uses the fine labels, so distinct
    # modes of one class stay apart in representation space.
    sc_fine_clusters: int = 1


def _kmeans_labels(x: np.ndarray, k: int, rng: Rng, iters: int = 25) -> np.ndarray:
    """Plain seeded Lloyd's iteration; returns a cluster index per row."""
    n = x.shape[0]
    if k <= 1 or n <= k:
        return np.zeros(n, dtype=np.int64)
    centers = x[rng.permutation(n)[:k]].copy()
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            rows = x[assign == j]
            if rows.shape[0]:
                centers[j] = rows.mean(axis=0)
    return assign


def _fine_labels(x: np.ndarray, y: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    """Per-class k-means subdivision; labels are unique across classes."""
    fine = np.zeros_like(y)
    for i, cid in enumerate(np.unique(y)):
        rows = np.flatnonzero(y == cid)
        sub = _kmeans_labels(x[rows], k, rng.substream(f"class{int(cid)}"))
        fine[rows] = i * k + sub
    return fine


@dataclass
class EncoderPair:
    f_ce: Mlp
    f_sc: Mlp
    tau: float

    @property
    def d_ce(self) -> int:
        return self.f_ce.out_dim

    @property
    def d_r(self) -> int:
        return self.f_sc.out_dim

    def encode_ce(self, x: np.ndarray) -> np.ndarray:
        return self.f_ce.forward(np.asarray(x, dtype=np.float64))

    def encode_sc(self, x: np.ndarray) -> np.ndarray:
        return normalize_rows(self.f_sc.forward(np.asarray(x, dtype=np.float64)))

    def save(self, path) -> None:
        arrays = []
        meta = {"version": 1, "kind": "encoders", "tau": self.tau, "nets": {}}
        for name, net in (("ce", self.f_ce), ("sc", self.f_sc)):
            meta["nets"][name] = {"dims": net.dims, "activations": net.activations}
            for l, (w, b) in enumerate(zip(net.weights, net.biases)):
                arrays.append((f"{name}.w{l}", w))
                arrays.append((f"{name}.b{l}", b))
        write_container(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "EncoderPair":
        header, arrays = read_container(path)
        if header.get("kind") != "encoders":
            raise ValueError(f"{path}: not an encoder snapshot")
        nets = {}
        for name, meta in header["nets"].items():
            n_layers = len(meta["dims"]) - 1
            nets[name] = Mlp(
                weights=[arrays[f"{name}.w{l}"] for l in range(n_layers)],
                biases=[arrays[f"{name}.b{l}"] for l in range(n_layers)],
                activations=list(meta["activations"]),
            )
        return cls(f_ce=nets["ce"], f_sc=nets["sc"], tau=float(header["tau"]))


def train_encoders(fs: FeatureSet, cfg: EncoderConfig, rng: Rng) -> EncoderPair:
    """Fit both extractors on seen-class training rows, then freeze them."""
    tr = fs.train_indices
    x = fs.features[tr].astype(np.float64)
    seen_ids = fs.seen_class_ids
    if seen_ids.size < 2:
        raise ValueError("need at least two seen classes to train encoders")
    label_index = {int(c): i for i, c in enumerate(seen_ids)}
    y = np.asarray([label_index[int(c)] for c in fs.labels[tr]])

    y_sc = y
    if cfg.sc_fine_clusters > 1:
        y_sc = _fine_labels(x, y, cfg.sc_fine_clusters, rng.substream("kmeans"))

    d_in = fs.d_v
    f_ce = Mlp.create([d_in, *cfg.hidden, cfg.d_ce], rng.substream("ce"))
    head = Mlp.create([cfg.d_ce, seen_ids.size], rng.substream("head"))
    f_sc = Mlp.create([d_in, *cfg.hidden, cfg.d_r], rng.substream("sc"))

    opt_ce = Adam(f_ce, lr=cfg.lr)
    opt_head = Adam(head, lr=cfg.lr)
    opt_sc = Adam(f_sc, lr=cfg.lr)
    order_rng = rng.substream("batches")
    n = x.shape[0]
    for _ in range(cfg.epochs):
        perm = order_rng.permutation(n)
        for start in range(0, n, cfg.batch):
            idx = perm[start:start + cfg.batch]
            xb, yb = x[idx], y[idx]

            feats = f_ce.forward(xb)
            logits = head.forward(feats)
            dlogits = ce_grad(logits, yb)
            opt_head.step(head.grad_params(feats, dlogits))
            dfeats = dlogits @ head.weights[-1].T  # head is linear
            opt_ce.step(f_ce.grad_params(xb, dfeats))

            yb_sc = y_sc[idx]
            raw = f_sc.forward(xb)
            h = normalize_rows(raw)
            if len(np.unique(yb_sc)) < 2 or not _has_anchor(yb_sc):
                continue
            dh = sc_grad(h, yb_sc, cfg.tau)
            draw = _normalize_backward(raw, h, dh)
            opt_sc.step(f_sc.grad_params(xb, draw))
    return EncoderPair(f_ce=f_ce, f_sc=f_sc, tau=cfg.tau)


def _has_anchor(y: np.ndarray) -> bool:
    _, counts = np.unique(y, return_counts=True)
    return bool(np.any(counts >= 2))


def intra_class_variation(h: np.ndarray, y: np.ndarray) -> dict:
    """Mean pairwise cosine distance within each class; singletons skipped."""
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(y)
    hn = normalize_rows(h)
    out = {}
    for cid in np.unique(y):
        rows = hn[y == cid]
        m = rows.shape[0]
        if m < 2:
            continue
        sims = rows @ rows.T
        total = (sims.sum() - np.trace(sims)) / (m * (m - 1))
        out[int(cid)] = float(1.0 - total)
    return out

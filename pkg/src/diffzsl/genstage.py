"""Generating stage: noise-only synthesis, test-time adaptation of the
generator, partial denoising of diffused real test features, and the
ZSL/GZSL evaluation protocol.

Fully-noised generation (fngen) synthesizes unseen-class features from
pure Gaussian noise at the last diffusion step. Test-time adaptation
(difftta) fine-tunes only the feature generator with reconstruction
losses on pseudo-labeled unseen test features plus seen training
features. Partial generation (diffgen) diffuses each real test feature
to step t and denoises it back, so every synthetic row records which
real row it came from; t=0 degenerates to an exact copy and t=T to
fully-noised synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import FeatureSet
from .diffusion import DiffusionSchedule
from .gan_core import (Generators, TrainedModel, TrainingData, g_input,
                       generate_clean, generate_rep)
from .numerics import Adam, Mlp, Rng
from .representations import ce_grad, ce_loss

MODALITIES = ("V", "V+C", "V+C+S")


class MissingPseudoSemantics(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    n_syn: int = 200
    diffgen_t: object = 2        # int step or "random"; 0 copies test features
    sc_source: str = "real"      # "real" = paired test representation, "fake" = generated
    tta: bool = True
    tta_steps: int = 200
    tta_lr: float = 1e-4
    tta_batch: int = 64
    modality: str = "V+C"
    clf_epochs: int = 80
    clf_batch: int = 128
    clf_lr: float = 5e-3

    def validate(self, steps: int) -> None:
        if self.n_syn < 1:
            raise ValueError("n_syn must be >= 1")
        if self.diffgen_t != "random":
            t = int(self.diffgen_t)
            if not 0 <= t <= steps:
                raise ValueError(f"diffgen_t must be 'random' or in [0, {steps}]")
        if self.sc_source not in ("real", "fake"):
            raise ValueError("sc_source must be 'real' or 'fake'")
        if self.modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}")


@dataclass
class SynthSet:
    """Generated features plus provenance back to real test rows (-1 = none)."""

    v: np.ndarray
    r: np.ndarray
    labels: np.ndarray
    source_rows: np.ndarray
    t_used: np.ndarray


def fngen(model: TrainedModel, class_ids: np.ndarray, semantics: np.ndarray,
          n_syn: int, rng: Rng) -> SynthSet:
    """Fully-noised synthesis: n_syn features per class from pure noise."""
    if n_syn < 1:
        raise ValueError("n_syn must be >= 1")
    class_ids = np.asarray(class_ids)
    if class_ids.size == 0:
        raise ValueError("empty semantics table")
    sched = model.sched
    T = sched.steps
    vs, rs, ys = [], [], []
    for cid, a in zip(class_ids, np.asarray(semantics, dtype=np.float64)):
        a_rows = np.tile(a, (n_syn, 1))
        r_T = rng.normal((n_syn, model.d_r))
        rt0, _ = generate_rep(model.gen, sched, a_rows, T, r_T, rng)
        v_T = rng.normal((n_syn, model.d_v))
        vt0, _, _ = generate_clean(model.gen, sched, a_rows, rt0, T, v_T, rng)
        vs.append(vt0)
        rs.append(rt0)
        ys.append(np.full(n_syn, cid, dtype=np.int32))
    n_total = n_syn * class_ids.size
    return SynthSet(v=np.concatenate(vs), r=np.concatenate(rs),
                    labels=np.concatenate(ys),
                    source_rows=np.full(n_total, -1, dtype=np.int64),
                    t_used=np.full(n_total, T, dtype=np.int32))


# -- classification ----------------------------------------------------------

@dataclass
class Classifier:
    net: Mlp
    class_ids: np.ndarray
    modality: str
    semantics: np.ndarray   # (C, d_a) rows aligned with class_ids

    @property
    def n_classes(self) -> int:
        return self.class_ids.size


def modality_input(modality: str, v: np.ndarray, r: np.ndarray,
                   a: np.ndarray = None) -> np.ndarray:
    if modality == "V":
        return np.asarray(v, dtype=np.float64)
    if modality == "V+C":
        return np.concatenate([v, r], axis=1)
    if modality == "V+C+S":
        return np.concatenate([v, r, a], axis=1)
    raise ValueError(f"unknown modality {modality!r}")


def train_classifier(v: np.ndarray, r: np.ndarray, labels: np.ndarray,
                     class_ids: np.ndarray, semantics: np.ndarray,
                     modality: str, cfg: GenConfig, rng: Rng) -> Classifier:
    """Linear softmax classifier over the configured modality space.

    For V+C+S the class semantics of the labeled row are appended during
    training; prediction then scores each candidate class with its own
    semantics row (compatibility readout).
    """
    class_ids = np.asarray(class_ids)
    if class_ids.size < 2:
        raise ValueError("need at least two classes")
    labels = np.asarray(labels)
    index = {int(c): i for i, c in enumerate(class_ids)}
    y = np.asarray([index[int(c)] for c in labels])
    a_rows = np.asarray(semantics)[y] if modality == "V+C+S" else None
    x = modality_input(modality, v, r, a_rows)

    net = Mlp.create([x.shape[1], class_ids.size], rng.substream("clf"))
    opt = Adam(net, lr=cfg.clf_lr)
    order = rng.substream("order")
    n = x.shape[0]
    for _ in range(cfg.clf_epochs):
        perm = order.permutation(n)
        for start in range(0, n, cfg.clf_batch):
            idx = perm[start:start + cfg.clf_batch]
            logits = net.forward(x[idx])
            opt.step(net.grad_params(x[idx], ce_grad(logits, y[idx])))
    return Classifier(net=net, class_ids=class_ids.astype(np.int32),
                      modality=modality, semantics=np.asarray(semantics, dtype=np.float64))


def classify(clf: Classifier, v: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Predicted class ids for each row."""
    if clf.modality == "V+C+S":
        scores = np.empty((v.shape[0], clf.n_classes))
        for i in range(clf.n_classes):
            a_rows = np.tile(clf.semantics[i], (v.shape[0], 1))
            logits = clf.net.forward(modality_input("V+C+S", v, r, a_rows))
            scores[:, i] = logits[:, i]
    else:
        scores = clf.net.forward(modality_input(clf.modality, v, r))
    return clf.class_ids[np.argmax(scores, axis=1)]


# -- evaluation ---------------------------------------------------------------

def harmonic_mean(u: float, s: float) -> float:
    if u + s == 0:
        return 0.0
    return 2.0 * u * s / (u + s)


@dataclass
class EvalReport:
    kind: str                      # "zsl" or "gzsl"
    t1: float = None
    u: float = None
    s: float = None
    h: float = None
    per_class: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "t1": self.t1, "u": self.u, "s": self.s,
                "h": self.h, "per_class": {str(k): v for k, v in self.per_class.items()}}


def per_class_accuracy(pred: np.ndarray, true: np.ndarray) -> dict:
    out = {}
    for cid in np.unique(true):
        mask = true == cid
        out[int(cid)] = float(np.mean(pred[mask] == cid))
    return out


def evaluate_zsl(clf: Classifier, v: np.ndarray, r: np.ndarray,
                 labels: np.ndarray) -> EvalReport:
    """Per-class mean top-1 accuracy over unseen classes."""
    if v.shape[0] == 0:
        raise ValueError("empty evaluation split")
    pred = classify(clf, v, r)
    per_class = per_class_accuracy(pred, np.asarray(labels))
    t1 = float(np.mean(list(per_class.values())))
    return EvalReport(kind="zsl", t1=t1, per_class=per_class)


def evaluate_gzsl(clf: Classifier, v: np.ndarray, r: np.ndarray,
                  labels: np.ndarray, seen_ids: np.ndarray,
                  unseen_ids: np.ndarray) -> EvalReport:
    """Joint-label-space accuracy split into seen/unseen and their harmonic mean."""
    if v.shape[0] == 0:
        raise ValueError("empty evaluation split")
    pred = classify(clf, v, r)
    per_class = per_class_accuracy(pred, np.asarray(labels))
    u_vals = [per_class[int(c)] for c in unseen_ids if int(c) in per_class]
    s_vals = [per_class[int(c)] for c in seen_ids if int(c) in per_class]
    if not u_vals or not s_vals:
        raise ValueError("evaluation split must cover both seen and unseen classes")
    u, s = float(np.mean(u_vals)), float(np.mean(s_vals))
    return EvalReport(kind="gzsl", u=u, s=s, h=harmonic_mean(u, s),
                      per_class=per_class)


# -- test-time adaptation ------------------------------------------------------

def pseudo_semantics(fs: FeatureSet, data: TrainingData, pre_clf: Classifier):
    """Pseudo labels and semantics for the unseen test rows; labeled once."""
    if data.v0_un.shape[0] == 0:
        raise ValueError("empty test set")
    labels = classify(pre_clf, data.v0_un, data.r0_un)
    return labels, fs.semantics_for(labels).astype(np.float64)


def tta_recon_loss(g: Mlp, a: np.ndarray, r0: np.ndarray, v0: np.ndarray,
                   kappa: float, v_t: np.ndarray, z: np.ndarray):
    """Reconstruction loss ||v0 - G(a, r0, t, v_t, z)||^2 (per-element mean)
    and its gradients w.r.t. G parameters."""
    gin = g_input(a, r0, kappa, v_t, z)
    out = g.forward(gin)
    diff = out - v0
    loss = float(np.mean(diff ** 2))
    grads = g.grad_params(gin, 2.0 * diff / diff.size)
    return loss, grads


def difftta(model: TrainedModel, fs: FeatureSet, data: TrainingData,
            pre_clf: Classifier, cfg: GenConfig, rng: Rng,
            pseudo=None) -> TrainedModel:
    """Adapt the feature generator on pseudo-labeled test reconstructions.

    Only G is updated; the representation generator and all critics stay
    frozen. Returns a new model; tta_steps=0 returns an identical copy.
    """
    if data.v0_un.shape[0] == 0:
        raise ValueError("empty test set")
    if pseudo is None:
        pseudo = pseudo_semantics(fs, data, pre_clf)
    _, a_pseudo = pseudo
    sched = model.sched
    g = model.gen.g.copy()
    opt = Adam(g, lr=cfg.tta_lr)
    n_un, n_tr = data.v0_un.shape[0], data.v0.shape[0]
    for _ in range(cfg.tta_steps):
        t = int(rng.integers(1, sched.steps + 1))
        kappa = sched.n2d(t)

        idx = rng.integers(0, n_un, size=min(cfg.tta_batch, n_un))
        v0_u, r0_u, a_u = data.v0_un[idx], data.r0_un[idx], a_pseudo[idx]
        v_t = sched.diffuse_marginal(v0_u, t, rng)
        z = rng.normal((idx.size, model.gen.z_dim))
        loss_u, grads_u = tta_recon_loss(g, a_u, r0_u, v0_u, kappa, v_t, z)

        idx = rng.integers(0, n_tr, size=min(cfg.tta_batch, n_tr))
        v0_s, r0_s, a_s = data.v0[idx], data.r0[idx], data.a[idx]
        v_t = sched.diffuse_marginal(v0_s, t, rng)
        z = rng.normal((idx.size, model.gen.z_dim))
        loss_s, grads_s = tta_recon_loss(g, a_s, r0_s, v0_s, kappa, v_t, z)

        if not np.isfinite(loss_u + loss_s):
            raise RuntimeError("non-finite adaptation loss")
        opt.step([(du + ds, bu + bs) for (du, bu), (ds, bs) in zip(grads_u, grads_s)])

    adapted = Generators(g=g, r=model.gen.r.copy(), z_dim=model.gen.z_dim)
    return TrainedModel(gen=adapted, critics=model.critics, sched=sched,
                        config=model.config, d_v=model.d_v, d_r=model.d_r,
                        d_a=model.d_a, v_mean=model.v_mean, v_scale=model.v_scale,
                        traces=list(model.traces))


def mean_tta_loss(model: TrainedModel, data: TrainingData, a_pseudo: np.ndarray,
                  t: int, rng: Rng) -> float:
    """Reconstruction error of G on the unseen test rows at step t."""
    v0, r0 = data.v0_un, data.r0_un
    v_t = model.sched.diffuse_marginal(v0, t, rng)
    z = rng.normal((v0.shape[0], model.gen.z_dim))
    loss, _ = tta_recon_loss(model.gen.g, a_pseudo, r0, v0, model.sched.n2d(t), v_t, z)
    return loss


# -- partial test-time generation ---------------------------------------------

def diffgen(model: TrainedModel, fs: FeatureSet, data: TrainingData,
            pseudo, cfg: GenConfig, rng: Rng) -> SynthSet:
    """Partially denoised synthesis from diffused real test features.

    Every output row records the FeatureSet row of its source test
    feature. t = 0 copies the source feature exactly; sc_source="real"
    feeds the source row's own representation, "fake" a generated one.
    """
    cfg.validate(model.sched.steps)
    pseudo_labels, a_pseudo = pseudo
    sched = model.sched
    T = sched.steps
    unseen_ids = fs.unseen_class_ids
    vs, rs, ys, srcs, ts = [], [], [], [], []
    for cid in unseen_ids:
        rows = np.flatnonzero(pseudo_labels == cid)
        if rows.size == 0:
            raise MissingPseudoSemantics(
                f"no test rows pseudo-labeled as class {int(cid)}"
            )
        reps = int(np.ceil(cfg.n_syn / rows.size))
        chosen = np.tile(rows, reps)[: cfg.n_syn]
        v0_u = data.v0_un[chosen]
        r0_u = data.r0_un[chosen]
        a_u = a_pseudo[chosen]
        if cfg.diffgen_t == "random":
            t_rows = rng.integers(1, T + 1, size=cfg.n_syn)
        else:
            t_rows = np.full(cfg.n_syn, int(cfg.diffgen_t), dtype=np.int64)

        out_v = np.empty_like(v0_u)
        out_r = np.empty_like(r0_u)
        for t in np.unique(t_rows):
            sel = t_rows == t
            if t == 0:
                out_v[sel] = v0_u[sel]
                out_r[sel] = r0_u[sel]
                continue
            t = int(t)
            if cfg.sc_source == "real":
                r_use = r0_u[sel]
            else:
                r_T = rng.normal((int(sel.sum()), model.d_r))
                r_use, _ = generate_rep(model.gen, sched, a_u[sel], T, r_T, rng)
            v_t = sched.diffuse_marginal(v0_u[sel], t, rng)
            vt0, _, _ = generate_clean(model.gen, sched, a_u[sel], r_use, t, v_t, rng)
            out_v[sel] = vt0
            out_r[sel] = r_use
        vs.append(out_v)
        rs.append(out_r)
        ys.append(np.full(cfg.n_syn, cid, dtype=np.int32))
        srcs.append(data.un_rows[chosen].astype(np.int64))
        ts.append(t_rows.astype(np.int32))
    return SynthSet(v=np.concatenate(vs), r=np.concatenate(rs),
                    labels=np.concatenate(ys), source_rows=np.concatenate(srcs),
                    t_used=np.concatenate(ts))

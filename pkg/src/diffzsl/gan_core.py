"""Training stage: denoising feature generator, representation generator,
and three Wasserstein critics tied together by mutual distillation.

The generator denoises a diffused feature conditioned on class semantics
and an instance-level contrastive representation. Critics judge the
result from three views: against class semantics, against the diffusion
chain (one re-noising step back), and against the contrastive
representation. Each critic carries a WGAN gradient penalty; a
distillation term pulls the three Wasserstein estimates together, with
the diffusion view down-weighted at high noise-to-data ratios.

All features entering this module are standardized per dimension with
seen-train statistics; the scaling is kept on the trained model so the
generation stage can map test features into the same space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .container import read_container, write_container
from .datasets import FeatureSet
from .diffusion import DiffusionSchedule
from .numerics import Adam, Mlp, Rng, add_grads, scale_grads
from .representations import EncoderPair


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch: int = 64
    critic_steps: int = 5
    lr: float = 5e-4
    lambda_gp: float = 10.0
    lambda_mu: float = 1.0
    gamma: float = 2.0
    z_dim: int = 8
    g_hidden: tuple = (256,)
    r_hidden: tuple = (128,)
    critic_hidden: tuple = (256,)
    gp_mode: str = "exact"     # "fd" swaps in the finite-difference debug path

    def validate(self) -> None:
        if self.lambda_gp <= 0:
            raise ValueError("gradient-penalty weight must be positive")
        if self.gamma < 0:
            raise ValueError("mutual-loss smoothing factor must be >= 0")
        if self.gp_mode not in ("exact", "fd"):
            raise ValueError("gp_mode must be 'exact' or 'fd'")


@dataclass
class Generators:
    g: Mlp            # concat(a, r0, kappa_t, v_t, z) -> v0
    r: Mlp            # concat(a, kappa_t, r_t, z) -> r0
    z_dim: int


@dataclass
class Critics:
    adv: Mlp          # concat(v, a) -> score
    diff: Mlp         # concat(v_prev, v_t, r0, a, kappa_t) -> score
    rep: Mlp          # concat(v, r0) -> score


@dataclass
class TrainingData:
    """Encoded, standardized views of a FeatureSet used across the pipeline."""

    v0: np.ndarray
    a: np.ndarray
    r0: np.ndarray
    y: np.ndarray
    v0_seen_te: np.ndarray
    a_seen_te: np.ndarray
    r0_seen_te: np.ndarray
    y_seen_te: np.ndarray
    v0_un: np.ndarray
    a_un: np.ndarray
    r0_un: np.ndarray
    y_un: np.ndarray
    un_rows: np.ndarray          # FeatureSet row index of each unseen test row
    v_mean: np.ndarray
    v_scale: np.ndarray

    @classmethod
    def from_features(cls, fs: FeatureSet, encoders: EncoderPair) -> "TrainingData":
        def encode(rows):
            x = fs.features[rows].astype(np.float64)
            return encoders.encode_ce(x), encoders.encode_sc(x)

        tr = fs.train_indices
        if tr.size == 0:
            raise ValueError("no seen-class training rows")
        v_tr, r_tr = encode(tr)
        v_mean = v_tr.mean(axis=0)
        v_scale = v_tr.std(axis=0) + 1e-8

        te = fs.seen_test_indices
        un = fs.unseen_indices
        v_te, r_te = encode(te) if te.size else (np.zeros((0, v_tr.shape[1])),
                                                 np.zeros((0, r_tr.shape[1])))
        v_un, r_un = encode(un) if un.size else (np.zeros((0, v_tr.shape[1])),
                                                 np.zeros((0, r_tr.shape[1])))
        std = lambda v: (v - v_mean) / v_scale
        return cls(
            v0=std(v_tr), a=fs.semantics_for(fs.labels[tr]).astype(np.float64),
            r0=r_tr, y=fs.labels[tr].copy(),
            v0_seen_te=std(v_te), a_seen_te=fs.semantics_for(fs.labels[te]).astype(np.float64),
            r0_seen_te=r_te, y_seen_te=fs.labels[te].copy(),
            v0_un=std(v_un), a_un=fs.semantics_for(fs.labels[un]).astype(np.float64),
            r0_un=r_un, y_un=fs.labels[un].copy(), un_rows=un.copy(),
            v_mean=v_mean, v_scale=v_scale,
        )

    @property
    def d_v(self) -> int:
        return self.v0.shape[1]

    @property
    def d_r(self) -> int:
        return self.r0.shape[1]

    @property
    def d_a(self) -> int:
        return self.a.shape[1]


@dataclass
class TrainedModel:
    gen: Generators
    critics: Critics
    sched: DiffusionSchedule
    config: TrainConfig
    d_v: int
    d_r: int
    d_a: int
    v_mean: np.ndarray
    v_scale: np.ndarray
    traces: list = field(default_factory=list)


def build_models(d_v: int, d_r: int, d_a: int, cfg: TrainConfig, rng: Rng):
    kdim = 1  # diffusion time enters as the scalar noise-to-data ratio
    gen = Generators(
        g=Mlp.create([d_a + d_r + kdim + d_v + cfg.z_dim, *cfg.g_hidden, d_v],
                     rng.substream("g")),
        r=Mlp.create([d_a + kdim + d_r + cfg.z_dim, *cfg.r_hidden, d_r],
                     rng.substream("r")),
        z_dim=cfg.z_dim,
    )
    critics = Critics(
        adv=Mlp.create([d_v + d_a, *cfg.critic_hidden, 1], rng.substream("adv")),
        diff=Mlp.create([d_v + d_v + d_r + d_a + kdim, *cfg.critic_hidden, 1],
                        rng.substream("diff")),
        rep=Mlp.create([d_v + d_r, *cfg.critic_hidden, 1], rng.substream("rep")),
    )
    return gen, critics


def g_input(a, r0, kappa, v_t, z) -> np.ndarray:
    n = v_t.shape[0]
    k = np.full((n, 1), kappa)
    return np.concatenate([a, r0, k, v_t, z], axis=1)


def r_input(a, kappa, r_t, z) -> np.ndarray:
    n = r_t.shape[0]
    k = np.full((n, 1), kappa)
    return np.concatenate([a, k, r_t, z], axis=1)


def generate_clean(gen: Generators, sched: DiffusionSchedule, a, r0, t: int,
                   v_t, rng: Rng):
    """Denoise/generate clean features; returns (v0_tilde, z, g_in)."""
    z = rng.normal((v_t.shape[0], gen.z_dim))
    gin = g_input(a, r0, sched.n2d(t), v_t, z)
    return gen.g.forward(gin), z, gin


def generate_rep(gen: Generators, sched: DiffusionSchedule, a, t: int, r_t, rng: Rng):
    z = rng.normal((r_t.shape[0], gen.z_dim))
    rin = r_input(a, sched.n2d(t), r_t, z)
    return gen.r.forward(rin), rin


def mutual_loss(w_adv: float, w_diff: float, w_rep: float, t: int,
                sched: DiffusionSchedule, gamma: float) -> float:
    """Distillation distance between the three Wasserstein estimates."""
    k = sched.n2d(t) ** gamma
    return k * (abs(w_diff - w_adv) + abs(w_diff - w_rep)) + abs(w_adv - w_rep)


def mutual_coeffs(w_adv: float, w_diff: float, w_rep: float, t: int,
                  sched: DiffusionSchedule, gamma: float):
    """d mutual_loss / d (w_adv, w_diff, w_rep); sign convention of abs."""
    k = sched.n2d(t) ** gamma
    s1 = np.sign(w_diff - w_adv)
    s2 = np.sign(w_diff - w_rep)
    s3 = np.sign(w_adv - w_rep)
    return (-k * s1 + s3, k * (s1 + s2), -k * s2 - s3)


@dataclass
class CriticStats:
    t: int
    w_adv: float
    w_diff: float
    w_rep: float
    gp_adv: float
    gp_diff: float
    gp_rep: float
    l_adv: float
    l_diff: float
    l_rep: float
    l_mu: float
    scores: dict
    tensors: dict
    grads: dict = field(default_factory=dict)

    def finite(self) -> bool:
        vals = [self.w_adv, self.w_diff, self.w_rep, self.gp_adv, self.gp_diff,
                self.gp_rep, self.l_mu]
        return bool(np.all(np.isfinite(vals)))


def _penalty(net: Mlp, xhat: np.ndarray, cols: int, cfg: TrainConfig):
    if cfg.gp_mode == "fd":
        return net.grad_penalty_fd(xhat, cols=cols)
    return net.grad_penalty_grad(xhat, cols=cols)


def critic_losses(batch, gen: Generators, critics: Critics,
                  sched: DiffusionSchedule, rng: Rng, cfg: TrainConfig,
                  t: int = None, fakes=None, want_grads: bool = False) -> CriticStats:
    """Wasserstein estimates, penalties and losses for one seen batch.

    ``batch`` is (v0, a, r0). ``fakes`` may inject (v0_tilde, v_tm1_tilde)
    in place of generator output (used by tests); ``t`` may pin the
    diffusion time instead of sampling it.
    """
    v0, a, r0 = (np.asarray(x, dtype=np.float64) for x in batch)
    n, d_v = v0.shape
    if n == 0:
        raise ValueError("empty batch")
    if t is None:
        t = int(rng.integers(1, sched.steps + 1))
    kappa = sched.n2d(t)

    v_tm1 = sched.diffuse_marginal(v0, t - 1, rng)
    v_t = sched.diffuse_step(v_tm1, t, rng)
    if fakes is None:
        vt0, z, gin = generate_clean(gen, sched, a, r0, t, v_t, rng)
        vtm1_f = sched.posterior_sample(vt0, v_t, t, rng)
    else:
        vt0, vtm1_f = (np.asarray(x, dtype=np.float64) for x in fakes)

    adv_real = critics.adv.forward(np.concatenate([v0, a], axis=1))
    adv_fake = critics.adv.forward(np.concatenate([vt0, a], axis=1))
    rep_real = critics.rep.forward(np.concatenate([v0, r0], axis=1))
    rep_fake = critics.rep.forward(np.concatenate([vt0, r0], axis=1))
    k_col = np.full((n, 1), kappa)
    diff_cond = np.concatenate([v_t, r0, a, k_col], axis=1)
    diff_real = critics.diff.forward(np.concatenate([v_tm1, diff_cond], axis=1))
    diff_fake = critics.diff.forward(np.concatenate([vtm1_f, diff_cond], axis=1))

    w_adv = float(adv_real.mean() - adv_fake.mean())
    w_rep = float(rep_real.mean() - rep_fake.mean())
    w_diff = float(diff_real.mean() - diff_fake.mean())

    alpha = rng.uniform((n, 1))
    xh_adv = alpha * v0 + (1 - alpha) * vt0
    alpha = rng.uniform((n, 1))
    xh_rep = alpha * v0 + (1 - alpha) * vt0
    alpha = rng.uniform((n, 1))
    xh_diff = alpha * v_tm1 + (1 - alpha) * vtm1_f

    gp_adv, gadv = _penalty(critics.adv, np.concatenate([xh_adv, a], axis=1), d_v, cfg)
    gp_rep, grep = _penalty(critics.rep, np.concatenate([xh_rep, r0], axis=1), d_v, cfg)
    gp_diff, gdiff = _penalty(critics.diff, np.concatenate([xh_diff, diff_cond], axis=1), d_v, cfg)

    l_mu = mutual_loss(w_adv, w_diff, w_rep, t, sched, cfg.gamma)
    stats = CriticStats(
        t=t, w_adv=w_adv, w_diff=w_diff, w_rep=w_rep,
        gp_adv=gp_adv, gp_diff=gp_diff, gp_rep=gp_rep,
        l_adv=w_adv - cfg.lambda_gp * gp_adv,
        l_diff=w_diff - cfg.lambda_gp * gp_diff,
        l_rep=w_rep - cfg.lambda_gp * gp_rep,
        l_mu=l_mu,
        scores={"adv_real": adv_real, "adv_fake": adv_fake,
                "rep_real": rep_real, "rep_fake": rep_fake,
                "diff_real": diff_real, "diff_fake": diff_fake},
        tensors={"v0": v0, "a": a, "r0": r0, "v_tm1": v_tm1, "v_t": v_t,
                 "vt0": vt0, "vtm1_fake": vtm1_f, "diff_cond": diff_cond},
    )
    if not want_grads:
        return stats

    c_adv, c_diff, c_rep = mutual_coeffs(w_adv, w_diff, w_rep, t, sched, cfg.gamma)
    up = np.full((n, 1), 1.0 / n)

    def w_grads(net, real_in, fake_in):
        return add_grads(net.grad_params(real_in, up),
                         net.grad_params(fake_in, -up))

    dw_adv = w_grads(critics.adv, np.concatenate([v0, a], axis=1),
                     np.concatenate([vt0, a], axis=1))
    dw_rep = w_grads(critics.rep, np.concatenate([v0, r0], axis=1),
                     np.concatenate([vt0, r0], axis=1))
    dw_diff = w_grads(critics.diff, np.concatenate([v_tm1, diff_cond], axis=1),
                      np.concatenate([vtm1_f, diff_cond], axis=1))

    # Critics ascend (L_adv + L_diff + L_rep - lambda_mu * L_mu).
    stats.grads = {
        "adv": add_grads(scale_grads(dw_adv, 1.0 - cfg.lambda_mu * c_adv),
                         scale_grads(gadv, -cfg.lambda_gp)),
        "diff": add_grads(scale_grads(dw_diff, 1.0 - cfg.lambda_mu * c_diff),
                          scale_grads(gdiff, -cfg.lambda_gp)),
        "rep": add_grads(scale_grads(dw_rep, 1.0 - cfg.lambda_mu * c_rep),
                         scale_grads(grep, -cfg.lambda_gp)),
    }
    return stats


def _generator_grads(batch, gen: Generators, critics: Critics,
                     sched: DiffusionSchedule, rng: Rng, cfg: TrainConfig):
    """Gradients for one minimization step of G over the joint objective."""
    v0, a, r0 = batch
    n, d_v = v0.shape
    t = int(rng.integers(1, sched.steps + 1))
    v_tm1 = sched.diffuse_marginal(v0, t - 1, rng)
    v_t = sched.diffuse_step(v_tm1, t, rng)
    vt0, z, gin = generate_clean(gen, sched, a, r0, t, v_t, rng)
    # Reparameterized re-noising: gradient reaches G through the v0 coefficient.
    c0, _ = sched.posterior_coeffs(t)
    noise = rng.normal(vt0.shape)
    vtm1_f = sched.posterior_mean(vt0, v_t, t) + np.sqrt(sched.beta_tildes[t]) * noise

    k_col = np.full((n, 1), sched.n2d(t))
    diff_cond = np.concatenate([v_t, r0, a, k_col], axis=1)
    d_adv = critics.adv.grad_input(np.concatenate([vt0, a], axis=1))[:, :d_v]
    d_rep = critics.rep.grad_input(np.concatenate([vt0, r0], axis=1))[:, :d_v]
    d_diff = critics.diff.grad_input(np.concatenate([vtm1_f, diff_cond], axis=1))[:, :d_v]
    upstream = -(d_adv + d_rep + c0 * d_diff) / n
    return gen.g.grad_params(gin, upstream), t


def _rep_generator_grads(batch, gen: Generators, sched: DiffusionSchedule,
                         rng: Rng) -> tuple:
    """Denoising-reconstruction step for the representation generator."""
    _, a, r0 = batch
    t = int(rng.integers(1, sched.steps + 1))
    r_t = sched.diffuse_marginal(r0, t, rng)
    rt0, rin = generate_rep(gen, sched, a, t, r_t, rng)
    diff = rt0 - r0
    loss = float(np.mean(diff ** 2))
    upstream = 2.0 * diff / diff.size
    return gen.r.grad_params(rin, upstream), loss


def train(fs: FeatureSet, encoders: EncoderPair, cfg: TrainConfig,
          sched: DiffusionSchedule, rng: Rng) -> TrainedModel:
    """Alternating min-max loop; raises TrainingDiverged on non-finite loss."""
    cfg.validate()
    data = TrainingData.from_features(fs, encoders)
    gen, critics = build_models(data.d_v, data.d_r, data.d_a, cfg, rng.substream("init"))
    model = TrainedModel(gen=gen, critics=critics, sched=sched, config=cfg,
                         d_v=data.d_v, d_r=data.d_r, d_a=data.d_a,
                         v_mean=data.v_mean, v_scale=data.v_scale)

    opt = {
        "adv": Adam(critics.adv, lr=cfg.lr),
        "diff": Adam(critics.diff, lr=cfg.lr),
        "rep": Adam(critics.rep, lr=cfg.lr),
        "g": Adam(gen.g, lr=cfg.lr),
        "r": Adam(gen.r, lr=cfg.lr),
    }
    order_rng = rng.substream("order")
    noise_rng = rng.substream("noise")
    eval_rng = rng.substream("eval")
    n = data.v0.shape[0]
    n_hold = min(256, data.v0_seen_te.shape[0])
    for epoch in range(cfg.epochs):
        perm = order_rng.permutation(n)
        acc = {k: 0.0 for k in ("w_adv", "w_diff", "w_rep", "l_mu",
                                "gp_adv", "gp_diff", "gp_rep", "r_loss")}
        batches = 0
        for start in range(0, n, cfg.batch):
            idx = perm[start:start + cfg.batch]
            if idx.size < 2:
                continue
            batch = (data.v0[idx], data.a[idx], data.r0[idx])
            for _ in range(cfg.critic_steps):
                stats = critic_losses(batch, gen, critics, sched, noise_rng, cfg,
                                      want_grads=True)
                if not stats.finite():
                    raise TrainingDiverged(f"non-finite critic loss at epoch {epoch}")
                for name in ("adv", "diff", "rep"):
                    opt[name].step(scale_grads(stats.grads[name], -1.0))
            g_grads, _ = _generator_grads(batch, gen, critics, sched, noise_rng, cfg)
            opt["g"].step(g_grads)
            r_grads, r_loss = _rep_generator_grads(batch, gen, sched, noise_rng)
            if not np.isfinite(r_loss):
                raise TrainingDiverged(f"non-finite reconstruction loss at epoch {epoch}")
            opt["r"].step(r_grads)
            batches += 1
            for k, v in (("w_adv", stats.w_adv), ("w_diff", stats.w_diff),
                         ("w_rep", stats.w_rep), ("l_mu", stats.l_mu),
                         ("gp_adv", stats.gp_adv), ("gp_diff", stats.gp_diff),
                         ("gp_rep", stats.gp_rep), ("r_loss", r_loss)):
                acc[k] += v
        trace = {"epoch": epoch}
        trace.update({k: v / max(batches, 1) for k, v in acc.items()})
        trace["delta_adv_seen"] = delta_adv_seen_from(critics, data)
        trace["delta_adv_unseen"] = delta_adv_unseen_from(critics, data)
        if n_hold >= 2:
            hold = (data.v0_seen_te[:n_hold], data.a_seen_te[:n_hold],
                    data.r0_seen_te[:n_hold])
            trace["w_adv_holdout"] = critic_losses(hold, gen, critics, sched,
                                                   eval_rng, cfg).w_adv
        else:
            trace["w_adv_holdout"] = float("nan")
        model.traces.append(trace)
    return model


# -- spuriousness diagnostics ----------------------------------------------

def delta_adv_seen_from(critics: Critics, data: TrainingData) -> float:
    """Critic-score gap between seen train and seen test features."""
    if data.v0_seen_te.shape[0] == 0:
        raise ValueError("empty seen-test split")
    tr = critics.adv.forward(np.concatenate([data.v0, data.a], axis=1))
    te = critics.adv.forward(np.concatenate([data.v0_seen_te, data.a_seen_te], axis=1))
    return float(tr.mean() - te.mean())


def delta_adv_unseen_from(critics: Critics, data: TrainingData) -> float:
    """Critic-score gap between seen train and unseen test features."""
    if data.v0_un.shape[0] == 0:
        raise ValueError("empty unseen split")
    tr = critics.adv.forward(np.concatenate([data.v0, data.a], axis=1))
    un = critics.adv.forward(np.concatenate([data.v0_un, data.a_un], axis=1))
    return float(tr.mean() - un.mean())


def delta_adv_seen(model: TrainedModel, data: TrainingData) -> float:
    return delta_adv_seen_from(model.critics, data)


def delta_adv_unseen(model: TrainedModel, data: TrainingData) -> float:
    return delta_adv_unseen_from(model.critics, data)


def delta_diff(model: TrainedModel, data: TrainingData, t: int, rng: Rng) -> float:
    """Score gap of the diffusion critic between real and generated noised pairs."""
    sched = model.sched
    v0, a, r0 = data.v0, data.a, data.r0
    n, d_v = v0.shape
    v_tm1 = sched.diffuse_marginal(v0, t - 1, rng)
    v_t = sched.diffuse_step(v_tm1, t, rng)
    vt0, _, _ = generate_clean(model.gen, sched, a, r0, t, v_t, rng)
    vtm1_f = sched.posterior_sample(vt0, v_t, t, rng)
    k_col = np.full((n, 1), sched.n2d(t))
    cond = np.concatenate([v_t, r0, a, k_col], axis=1)
    real = model.critics.diff.forward(np.concatenate([v_tm1, cond], axis=1))
    fake = model.critics.diff.forward(np.concatenate([vtm1_f, cond], axis=1))
    return float(real.mean() - fake.mean())


# -- checkpointing -----------------------------------------------------------

_NET_NAMES = ("g", "r", "adv", "diff", "rep")


def _model_nets(model: TrainedModel) -> dict:
    return {"g": model.gen.g, "r": model.gen.r, "adv": model.critics.adv,
            "diff": model.critics.diff, "rep": model.critics.rep}


def save_model(model: TrainedModel, path) -> None:
    cfg = asdict(model.config)
    cfg["g_hidden"] = list(model.config.g_hidden)
    cfg["r_hidden"] = list(model.config.r_hidden)
    cfg["critic_hidden"] = list(model.config.critic_hidden)
    header = {
        "version": 1,
        "kind": "model",
        "d_v": model.d_v, "d_r": model.d_r, "d_a": model.d_a,
        "z_dim": model.gen.z_dim,
        "config": cfg,
        "schedule": {"steps": model.sched.steps,
                     "betas": [float(b) for b in model.sched.betas]},
        "nets": {},
    }
    arrays = [("v_mean", model.v_mean), ("v_scale", model.v_scale)]
    for name, net in _model_nets(model).items():
        header["nets"][name] = {"dims": net.dims, "activations": net.activations}
        for l, (w, b) in enumerate(zip(net.weights, net.biases)):
            arrays.append((f"{name}.w{l}", w))
            arrays.append((f"{name}.b{l}", b))
    write_container(path, header, arrays)


def load_model(path) -> TrainedModel:
    header, arrays = read_container(path)
    if header.get("kind") != "model":
        raise ValueError(f"{path}: not a model checkpoint")
    nets = {}
    for name in _NET_NAMES:
        meta = header["nets"][name]
        n_layers = len(meta["dims"]) - 1
        nets[name] = Mlp(
            weights=[arrays[f"{name}.w{l}"] for l in range(n_layers)],
            biases=[arrays[f"{name}.b{l}"] for l in range(n_layers)],
            activations=list(meta["activations"]),
        )
    cfg_doc = dict(header["config"])
    for key in ("g_hidden", "r_hidden", "critic_hidden"):
        cfg_doc[key] = tuple(cfg_doc[key])
    cfg = TrainConfig(**cfg_doc)
    sched = DiffusionSchedule(betas=np.asarray(header["schedule"]["betas"]))
    return TrainedModel(
        gen=Generators(g=nets["g"], r=nets["r"], z_dim=int(header["z_dim"])),
        critics=Critics(adv=nets["adv"], diff=nets["diff"], rep=nets["rep"]),
        sched=sched, config=cfg,
        d_v=int(header["d_v"]), d_r=int(header["d_r"]), d_a=int(header["d_a"]),
        v_mean=arrays["v_mean"], v_scale=arrays["v_scale"],
    )

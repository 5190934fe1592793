"""Command-line surface: train, adapt, generate, evaluate, theory-check, report.

Configuration is a single JSON document; command-line flags override
individual fields. Every run is deterministic given (config, seed): all
randomness flows from one root seed through named substreams (data,
encoders, train, pre_clf, tta, gen, theory). The output directory can be
overridden with the DIFFZSL_OUT environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import theory
from .datasets import (FeatureFileError, FeatureSet, SyntheticSpec,
                       gen_synthetic, load_features, subsample_train)
from .diffusion import DiffusionSchedule, make_schedule
from .gan_core import (TrainConfig, TrainedModel, TrainingData, load_model,
                       save_model, train)
from .genstage import (Classifier, GenConfig, SynthSet, difftta, diffgen,
                       evaluate_gzsl, evaluate_zsl, fngen, harmonic_mean,
                       pseudo_semantics, train_classifier)
from .numerics import Rng
from .representations import EncoderConfig, EncoderPair, train_encoders


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "seed": 7,
    "out_dir": "runs/default",
    "ratio": 1.0,
    "dataset": {"synthetic": {}},
    "schedule": {"steps": 4, "beta_min": 0.1, "beta_max": 20.0},
    "encoders": {},
    "train": {},
    "gen": {},
}


def _merge(base: dict, extra: dict, path="") -> dict:
    out = dict(base)
    for key, val in extra.items():
        if key not in base:
            raise ConfigError(f"unknown config field {path + key!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, path + key + ".")
        else:
            out[key] = val
    return out


class RunConfig:
    """Validated run configuration assembled from defaults, file, and flags."""

    def __init__(self, doc: dict):
        self.seed = int(doc["seed"])
        self.out_dir = str(doc["out_dir"])
        self.ratio = float(doc["ratio"])
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError("ratio must lie in (0, 1]")
        self.dataset = doc["dataset"]
        if not ("synthetic" in self.dataset) ^ ("path" in self.dataset):
            raise ConfigError("dataset needs exactly one of 'synthetic' or 'path'")
        self.schedule = {k: doc["schedule"][k] for k in ("steps", "beta_min", "beta_max")}
        try:
            self.encoders = EncoderConfig(**{**doc["encoders"],
                                             "hidden": tuple(doc["encoders"].get("hidden", (64,)))})
            self.train = TrainConfig(**{**doc["train"],
                                        "g_hidden": tuple(doc["train"].get("g_hidden", (256,))),
                                        "r_hidden": tuple(doc["train"].get("r_hidden", (128,))),
                                        "critic_hidden": tuple(doc["train"].get("critic_hidden", (256,)))})
            self.train.validate()
            self.gen = GenConfig(**doc["gen"])
            self.gen.validate(int(self.schedule["steps"]))
        except TypeError as exc:
            raise ConfigError(f"bad config field: {exc}") from exc
        self.doc = doc

    def to_doc(self) -> dict:
        doc = dict(self.doc)
        doc.update(seed=self.seed, out_dir=self.out_dir, ratio=self.ratio)
        doc["encoders"] = _listify(asdict(self.encoders))
        doc["train"] = _listify(asdict(self.train))
        doc["gen"] = _listify(asdict(self.gen))
        return doc


def _listify(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def load_config(path=None, overrides=None) -> RunConfig:
    doc = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        try:
            file_doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
        if "dataset" in file_doc:
            doc["dataset"] = file_doc["dataset"]   # replaces, not merges
        doc = _merge(doc, {k: v for k, v in file_doc.items() if k != "dataset"})
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = val
    env_out = os.environ.get("DIFFZSL_OUT")
    if env_out:
        doc["out_dir"] = env_out
    return RunConfig(doc)


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# -- pipeline stages -----------------------------------------------------------


def build_dataset(cfg: RunConfig, rng: Rng) -> FeatureSet:
    if "path" in cfg.dataset:
        fs = load_features(cfg.dataset["path"])
    else:
        spec_doc = dict(cfg.dataset["synthetic"])
        spec_doc.setdefault("seed", cfg.seed)
        try:
            spec = SyntheticSpec(**spec_doc)
        except TypeError as exc:
            raise ConfigError(f"bad synthetic spec: {exc}") from exc
        fs = gen_synthetic(spec)
    if cfg.ratio < 1.0:
        fs = subsample_train(fs, cfg.ratio, rng.substream("subsample"))
    return fs


def run_train(cfg: RunConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = Rng(cfg.seed)
    fs = build_dataset(cfg, root.substream("data"))
    encoders = train_encoders(fs, cfg.encoders, root.substream("encoders"))
    sched = make_schedule(**cfg.schedule)
    model = train(fs, encoders, cfg.train, sched, root.substream("train"))

    fs.save(out / "dataset.bin")
    encoders.save(out / "encoders.bin")
    save_model(model, out / "model.bin")
    trace_keys = ["epoch", "w_adv", "w_diff", "w_rep", "l_mu", "gp_adv",
                  "gp_diff", "gp_rep", "r_loss", "delta_adv_seen",
                  "delta_adv_unseen", "w_adv_holdout"]
    _write_csv(out / "traces.csv", trace_keys,
               [[tr[k] for k in trace_keys] for tr in model.traces])
    _write_json(out / "config.json", cfg.to_doc())
    return {"model": str(out / "model.bin"), "traces": str(out / "traces.csv")}


def _load_run(cfg: RunConfig):
    out = Path(cfg.out_dir)
    for name in ("dataset.bin", "encoders.bin", "model.bin"):
        if not (out / name).exists():
            raise FileNotFoundError(f"missing artifact {out / name}; run 'train' first")
    fs = load_features(out / "dataset.bin")
    encoders = EncoderPair.load(out / "encoders.bin")
    model = load_model(out / "model.bin")
    if model.d_v != encoders.d_ce or model.d_r != encoders.d_r or model.d_a != fs.d_a:
        raise ConfigError(
            f"incompatible checkpoint dims: model (d_v={model.d_v}, d_r={model.d_r}, "
            f"d_a={model.d_a}) vs encoders (d_ce={encoders.d_ce}, d_r={encoders.d_r}) "
            f"and dataset (d_a={fs.d_a})"
        )
    return out, fs, encoders, model


def _pre_classifier(model: TrainedModel, fs: FeatureSet, cfg: RunConfig,
                    rng: Rng) -> Classifier:
    """ZSL classifier on fully-noised output of the unadapted generator."""
    unseen = fs.unseen_class_ids
    sem = np.stack([fs.semantics_of_class(c) for c in unseen]).astype(np.float64)
    synth = fngen(model, unseen, sem, cfg.gen.n_syn, rng.substream("fngen"))
    return train_classifier(synth.v, synth.r, synth.labels, unseen, sem,
                            cfg.gen.modality, cfg.gen, rng.substream("clf"))


def _adapted_model(cfg: RunConfig, out: Path, fs, data, model, pre_clf,
                   root: Rng) -> TrainedModel:
    path = out / "model_tta.bin"
    if path.exists():
        return load_model(path)
    adapted = difftta(model, fs, data, pre_clf, cfg.gen, root.substream("tta"))
    save_model(adapted, path)
    return adapted


def run_adapt(cfg: RunConfig) -> dict:
    out, fs, encoders, model = _load_run(cfg)
    root = Rng(cfg.seed)
    data = TrainingData.from_features(fs, encoders)
    pre_clf = _pre_classifier(model, fs, cfg, root.substream("pre_clf"))
    adapted = difftta(model, fs, data, pre_clf, cfg.gen, root.substream("tta"))
    save_model(adapted, out / "model_tta.bin")
    return {"model": str(out / "model_tta.bin")}


def _synthesize(mode: str, model: TrainedModel, fs: FeatureSet,
                data: TrainingData, pseudo, n_syn: int, cfg: RunConfig,
                rng: Rng) -> SynthSet:
    unseen = fs.unseen_class_ids
    sem = np.stack([fs.semantics_of_class(c) for c in unseen]).astype(np.float64)
    if mode == "fngen":
        return fngen(model, unseen, sem, n_syn, rng)
    gcfg = replace(cfg.gen, n_syn=n_syn)
    return diffgen(model, fs, data, pseudo, gcfg, rng)


def run_generate(cfg: RunConfig, mode: str, tta: bool) -> dict:
    out, fs, encoders, model = _load_run(cfg)
    root = Rng(cfg.seed)
    data = TrainingData.from_features(fs, encoders)
    pre_clf = _pre_classifier(model, fs, cfg, root.substream("pre_clf"))
    used = _adapted_model(cfg, out, fs, data, model, pre_clf, root) if tta else model
    pseudo = pseudo_semantics(fs, data, pre_clf)
    synth = _synthesize(mode, used, fs, data, pseudo, cfg.gen.n_syn, cfg,
                        root.substream("gen"))

    prov_rows = [
        [i, int(synth.source_rows[i]), int(synth.t_used[i]), int(synth.labels[i])]
        for i in range(synth.labels.size)
    ]
    _write_csv(out / "provenance.csv",
               ["synthetic_id", "source_test_id", "t", "pseudo_label"], prov_rows)
    _write_projection(out / "projection.csv", data, synth)
    return {"provenance": str(out / "provenance.csv"),
            "projection": str(out / "projection.csv"),
            "rows": int(synth.labels.size)}


def _write_projection(path, data: TrainingData, synth: SynthSet) -> None:
    """First two principal components of real unseen-test + synthetic features."""
    combined = np.concatenate([data.v0_un, synth.v])
    center = combined - combined.mean(axis=0)
    _, _, vt = np.linalg.svd(center, full_matrices=False)
    proj = center @ vt[:2].T
    kinds = ["real"] * data.v0_un.shape[0] + ["synth"] * synth.v.shape[0]
    labels = np.concatenate([data.y_un, synth.labels])
    rows = [[kinds[i], int(labels[i]), float(proj[i, 0]), float(proj[i, 1])]
            for i in range(len(kinds))]
    _write_csv(path, ["kind", "label", "pc1", "pc2"], rows)


def _validate_report(doc: dict) -> None:
    for key in ("mode", "tta", "n_syn", "zsl", "gzsl"):
        if key not in doc:
            raise ConfigError(f"report missing field {key!r}")
    z, g = doc["zsl"], doc["gzsl"]
    if not 0.0 <= z["t1"] <= 1.0:
        raise ConfigError("zsl t1 out of range")
    for key in ("u", "s", "h"):
        if not 0.0 <= g[key] <= 1.0:
            raise ConfigError(f"gzsl {key} out of range")
    if abs(g["h"] - harmonic_mean(g["u"], g["s"])) > 1e-9:
        raise ConfigError("gzsl h inconsistent with u and s")


def _evaluate_once(cfg: RunConfig, fs, data, model_used, pseudo, mode: str,
                   tta: bool, n_syn: int, rng: Rng) -> dict:
    unseen = fs.unseen_class_ids
    seen = fs.seen_class_ids
    sem_unseen = np.stack([fs.semantics_of_class(c) for c in unseen]).astype(np.float64)
    all_ids = fs.class_ids
    sem_all = fs.semantics.astype(np.float64)

    synth_zsl = _synthesize(mode, model_used, fs, data, pseudo, n_syn, cfg,
                            rng.substream("zsl_gen"))
    zsl_clf = train_classifier(synth_zsl.v, synth_zsl.r, synth_zsl.labels,
                               unseen, sem_unseen, cfg.gen.modality, cfg.gen,
                               rng.substream("zsl_clf"))
    zsl = evaluate_zsl(zsl_clf, data.v0_un, data.r0_un, data.y_un)

    n_gzsl = int(np.ceil(n_syn * cfg.ratio))
    synth_g = _synthesize(mode, model_used, fs, data, pseudo, n_gzsl, cfg,
                          rng.substream("gzsl_gen"))
    v_tr = np.concatenate([data.v0, synth_g.v])
    r_tr = np.concatenate([data.r0, synth_g.r])
    y_tr = np.concatenate([data.y, synth_g.labels])
    gzsl_clf = train_classifier(v_tr, r_tr, y_tr, all_ids, sem_all,
                                cfg.gen.modality, cfg.gen, rng.substream("gzsl_clf"))
    v_ev = np.concatenate([data.v0_seen_te, data.v0_un])
    r_ev = np.concatenate([data.r0_seen_te, data.r0_un])
    y_ev = np.concatenate([data.y_seen_te, data.y_un])
    gzsl = evaluate_gzsl(gzsl_clf, v_ev, r_ev, y_ev, seen, unseen)

    doc = {"mode": mode, "tta": bool(tta), "n_syn": int(n_syn),
           "zsl": zsl.to_dict(), "gzsl": gzsl.to_dict()}
    doc["zsl"].pop("kind")
    doc["gzsl"].pop("kind")
    _validate_report(doc)
    return doc


def run_evaluate(cfg: RunConfig, mode: str, tta: bool, sweep=None) -> dict:
    out, fs, encoders, model = _load_run(cfg)
    root = Rng(cfg.seed)
    data = TrainingData.from_features(fs, encoders)
    pre_clf = _pre_classifier(model, fs, cfg, root.substream("pre_clf"))
    used = _adapted_model(cfg, out, fs, data, model, pre_clf, root) if tta else model
    pseudo = pseudo_semantics(fs, data, pre_clf)

    gen_rng = root.substream("gen")
    if sweep:
        rows = []
        for n_syn in sweep:
            doc = _evaluate_once(cfg, fs, data, used, pseudo, mode, tta,
                                 n_syn, gen_rng.substream(f"n{n_syn}"))
            rows.append([n_syn, doc["zsl"]["t1"], doc["gzsl"]["u"],
                         doc["gzsl"]["s"], doc["gzsl"]["h"]])
        _write_csv(out / "sweep.csv", ["n_syn", "t1", "u", "s", "h"], rows)
        return {"sweep": str(out / "sweep.csv"), "rows": len(rows)}
    doc = _evaluate_once(cfg, fs, data, used, pseudo, mode, tta,
                         cfg.gen.n_syn, gen_rng.substream(f"n{cfg.gen.n_syn}"))
    name = f"report_{mode}_{'tta' if tta else 'notta'}.json"
    _write_json(out / name, doc)
    return {"report": str(out / name), "h": doc["gzsl"]["h"], "t1": doc["zsl"]["t1"]}


# -- theory checks ---------------------------------------------------------------


def run_theory_checks(seed: int, cases: int, schedule: dict) -> list:
    """Property sweeps over the distribution-level claims; one dict per case."""
    if cases < 0:
        raise ConfigError("cases must be >= 0")
    results = []
    if cases == 0:
        return results
    rng = Rng(seed).substream("theory")
    sched = make_schedule(**schedule)

    case_rng = rng.substream("overlap")
    for _ in range(cases):
        m = float(case_rng.uniform(()) * 8.0 - 4.0)
        ab = float(0.05 + 0.9 * case_rng.uniform(()))
        closed = theory.overlap_1d_closed(m, ab)
        spread = np.sqrt(1.0 - ab)
        p = theory.GaussianND(mean=np.array([0.0]), var=1.0 - ab)
        q = theory.GaussianND(mean=np.array([np.sqrt(ab) * m]), var=1.0 - ab)
        est, se = theory.overlap_mc(p, q, 200_000, case_rng)
        results.append({
            "check": "overlap_1d_closed_vs_mc",
            "inputs": {"m": m, "alpha_bar": ab},
            "values": {"closed": closed, "mc": est, "stderr": se},
            "holds": bool(abs(closed - est) <= 3.0 * se + 1e-4),
        })

    case_rng = rng.substream("bound")
    for _ in range(cases):
        d = int(case_rng.integers(1, 6))
        delta0 = case_rng.normal(d) * 2.0
        ab = float(0.05 + 0.9 * case_rng.uniform(()))
        bound = theory.overlap_lower_bound(delta0, ab)
        p = theory.GaussianND(mean=np.zeros(d), var=1.0 - ab)
        q = theory.GaussianND(mean=np.sqrt(ab) * delta0, var=1.0 - ab)
        est, se = theory.overlap_mc(p, q, 200_000, case_rng)
        results.append({
            "check": "overlap_lower_bound_vs_mc",
            "inputs": {"dim": d, "norm_delta0": float(np.linalg.norm(delta0)),
                       "alpha_bar": ab},
            "values": {"bound": bound, "mc": est, "stderr": se},
            "holds": bool(bound <= est + 3.0 * se + 1e-9),
        })

    case_rng = rng.substream("kl")
    n_kl = 20 * cases
    worst = 0.0
    ok = True
    for _ in range(n_kl):
        d = int(case_rng.integers(1, 6))
        p0 = theory.GaussianND(mean=case_rng.normal(d) * 2.0,
                               var=float(np.exp(case_rng.normal(()))))
        q0 = theory.GaussianND(mean=case_rng.normal(d) * 2.0,
                               var=float(np.exp(case_rng.normal(()))))
        for t in range(1, sched.steps + 1):
            kl0, klt, holds = theory.kl_contraction_check(p0, q0, sched, t)
            worst = max(worst, klt - kl0)
            ok = ok and holds
    results.append({
        "check": "kl_contraction",
        "inputs": {"pairs": n_kl, "steps": sched.steps},
        "values": {"max_kl_increase": worst},
        "holds": bool(ok),
    })

    case_rng = rng.substream("w1")
    n_w1 = 2 * cases
    ok = True
    worst = -np.inf
    for _ in range(n_w1):
        n_pts = int(case_rng.integers(5, 51))
        p = theory.Empirical1D(case_rng.normal(n_pts) * 2.0)
        q = theory.Empirical1D(case_rng.normal(n_pts) * 2.0
                               + case_rng.uniform(()) * 6.0 - 3.0)
        for t in range(1, sched.steps + 1):
            w0, wt, bound, holds = theory.w1_contraction_check(
                p, q, sched, t, 4096, case_rng)
            worst = max(worst, wt - bound)
            ok = ok and holds
    results.append({
        "check": "w1_contraction",
        "inputs": {"pairs": n_w1, "steps": sched.steps, "n_noise": 4096},
        "values": {"max_excess_over_bound": float(worst)},
        "holds": bool(ok),
    })
    return results


def run_report(cfg: RunConfig) -> dict:
    out = Path(cfg.out_dir)
    summary = {"out_dir": str(out), "reports": [], "final_trace": None,
               "theory": None}
    cfg_path = out / "config.json"
    if cfg_path.exists():
        summary["config"] = json.loads(cfg_path.read_text())
    traces = out / "traces.csv"
    if traces.exists():
        lines = traces.read_text().strip().splitlines()
        if len(lines) > 1:
            keys = lines[0].split(",")
            vals = lines[-1].split(",")
            summary["final_trace"] = {k: float(v) for k, v in zip(keys, vals)}
    for path in sorted(out.glob("report_*.json")):
        summary["reports"].append(json.loads(path.read_text()))
    theory_path = out / "theory.json"
    if theory_path.exists():
        checks = json.loads(theory_path.read_text())
        summary["theory"] = {"checks": len(checks),
                             "all_hold": all(c["holds"] for c in checks)}
    _write_json(out / "summary.json", summary)
    return {"summary": str(out / "summary.json"),
            "reports": len(summary["reports"])}


# -- argument parsing -------------------------------------------------------------


def _tta_flag(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _diffgen_t(value: str):
    if value == "random":
        return value
    return int(value)


def _sweep(value: str) -> list:
    try:
        return [int(v) for v in value.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad sweep list {value!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffzsl",
        description="Diffusion-augmented feature generation for zero-shot learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="root seed (overrides config)")

    p = sub.add_parser("train", help="train encoders and the generative model")
    common(p)
    p.add_argument("--ratio", type=float, help="per-class training subsample ratio")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("adapt", help="test-time adapt the generator")
    common(p)
    p.add_argument("--steps", type=int, help="adaptation steps")
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("generate", help="synthesize unseen-class features")
    common(p)
    p.add_argument("--mode", choices=("fngen", "diffgen"), default="diffgen")
    p.add_argument("--tta", type=_tta_flag, default=True, metavar="on|off")
    p.add_argument("--n-syn", type=int, help="features per unseen class")
    p.add_argument("--t", type=_diffgen_t, help="partial-generation step or 'random'")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="run inference and report T1/U/S/H")
    common(p)
    p.add_argument("--mode", choices=("fngen", "diffgen"), default="diffgen")
    p.add_argument("--tta", type=_tta_flag, default=True, metavar="on|off")
    p.add_argument("--n-syn", type=int, help="features per unseen class")
    p.add_argument("--t", type=_diffgen_t, help="partial-generation step or 'random'")
    p.add_argument("--sweep", type=_sweep, help="comma list of n_syn values")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("theory-check", help="run the distribution-level property sweeps")
    common(p)
    p.add_argument("--cases", type=int, default=50,
                   help="random cases per overlap check (KL runs 20x, W1 2x)")
    p.set_defaults(func=_cmd_theory)

    p = sub.add_parser("report", help="collate run artifacts into summary.json")
    common(p)
    p.set_defaults(func=_cmd_report)
    return parser


def _config_from_args(args, extra=None) -> RunConfig:
    overrides = {"out_dir": args.out, "seed": args.seed}
    overrides.update(extra or {})
    return load_config(args.config, overrides)


def _cmd_train(args) -> int:
    extra = {"ratio": args.ratio, "train.epochs": args.epochs}
    result = run_train(_config_from_args(args, extra))
    print(json.dumps(result))
    return 0


def _cmd_adapt(args) -> int:
    extra = {"gen.tta_steps": args.steps}
    result = run_adapt(_config_from_args(args, extra))
    print(json.dumps(result))
    return 0


def _cmd_generate(args) -> int:
    extra = {"gen.n_syn": args.n_syn, "gen.diffgen_t": args.t}
    cfg = _config_from_args(args, extra)
    result = run_generate(cfg, args.mode, args.tta)
    print(json.dumps(result))
    return 0


def _cmd_evaluate(args) -> int:
    extra = {"gen.n_syn": args.n_syn, "gen.diffgen_t": args.t}
    cfg = _config_from_args(args, extra)
    result = run_evaluate(cfg, args.mode, args.tta, sweep=args.sweep)
    print(json.dumps(result))
    return 0


def _cmd_theory(args) -> int:
    cfg = _config_from_args(args)
    checks = run_theory_checks(cfg.seed, args.cases, cfg.schedule)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "theory.json", checks)
    print(json.dumps({"checks": len(checks),
                      "all_hold": all(c["holds"] for c in checks),
                      "path": str(out / "theory.json")}))
    return 0


def _cmd_report(args) -> int:
    result = run_report(_config_from_args(args))
    print(json.dumps(result))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, FeatureFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

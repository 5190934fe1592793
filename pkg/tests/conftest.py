import sys
from pathlib import Path
from types import SimpleNamespace

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from diffzsl.cli import build_dataset, load_config
from diffzsl.diffusion import make_schedule
from diffzsl.gan_core import TrainingData, train
from diffzsl.numerics import Rng
from diffzsl.representations import train_encoders


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """A quickly trained pipeline for mechanical tests (not for quality)."""
    cfg = load_config(None, {
        "out_dir": str(tmp_path_factory.mktemp("small_run")),
        "seed": 5,
        "dataset": {"synthetic": {"n_seen_classes": 6, "n_unseen_classes": 3,
                                  "samples_per_class": 80}},
        "train.epochs": 20,
        "encoders.epochs": 15,
        "gen.n_syn": 60,
        "gen.clf_epochs": 40,
        "gen.tta_steps": 60,
    })
    root = Rng(cfg.seed)
    fs = build_dataset(cfg, root.substream("data"))
    encoders = train_encoders(fs, cfg.encoders, root.substream("encoders"))
    sched = make_schedule(**cfg.schedule)
    model = train(fs, encoders, cfg.train, sched, root.substream("train"))
    data = TrainingData.from_features(fs, encoders)
    return SimpleNamespace(cfg=cfg, fs=fs, encoders=encoders, sched=sched,
                           model=model, data=data)

import numpy as np
import pytest

from diffzsl.datasets import SyntheticSpec, gen_synthetic
from diffzsl.numerics import Rng
from diffzsl.representations import (EncoderConfig, EncoderPair, ce_grad,
                                     ce_loss, intra_class_variation,
                                     normalize_rows, sc_grad, sc_loss,
                                     train_encoders, _normalize_backward)
from oracles import fd_array_grad, rel_err


def test_ce_loss_perfect_logits_near_zero():
    logits = np.array([[30.0, -30.0], [-30.0, 30.0]])
    assert ce_loss(logits, np.array([0, 1])) < 1e-9


def test_ce_loss_uniform_is_log_c():
    for c in (2, 5, 11):
        loss = ce_loss(np.zeros((3, c)), np.array([0, 1 % c, c - 1]))
        assert abs(loss - np.log(c)) < 1e-12


def test_ce_loss_label_out_of_range():
    with pytest.raises(ValueError):
        ce_loss(np.zeros((2, 3)), np.array([0, 3]))


def test_ce_grad_matches_finite_differences():
    rng = Rng(0)
    logits = rng.normal((6, 4))
    y = rng.integers(0, 4, size=6)
    got = ce_grad(logits, y)
    want = fd_array_grad(lambda: ce_loss(logits, y), logits)
    assert rel_err(got, want) < 1e-6


def test_sc_loss_hand_case():
    # two identical same-class unit vectors plus one antipodal other-class
    u = np.array([1.0, 0.0])
    h = np.vstack([u, u, -u])
    y = np.array([0, 0, 1])
    want = -np.log(np.e / (np.e + np.exp(-1.0)))  # ~0.126928
    assert abs(sc_loss(h, y, 1.0) - want) < 1e-12
    assert abs(sc_loss(h, y, 1.0) - 0.1269) < 5e-4


def sc_brute(h, y, tau):
    """Direct enumeration of the quoted expression."""
    n = len(y)
    tot, cnt = 0.0, 0
    for i in range(n):
        pos = [j for j in range(n) if j != i and y[j] == y[i]]
        neg = [j for j in range(n) if y[j] != y[i]]
        for p in pos:
            num = np.exp(h[i] @ h[p] / tau)
            den = num + sum(np.exp(h[i] @ h[k] / tau) for k in neg)
            tot += -np.log(num / den)
            cnt += 1
    return tot / cnt


def test_sc_loss_matches_brute_force():
    rng = Rng(1)
    for _ in range(10):
        n = int(rng.integers(4, 12))
        h = normalize_rows(rng.normal((n, 5)))
        y = rng.integers(0, 3, size=n)
        if not any((y == y[i]).sum() > 1 for i in range(n)):
            continue
        assert abs(sc_loss(h, y, 0.3) - sc_brute(h, y, 0.3)) < 1e-12


def test_sc_loss_flat_temperature_limit():
    # tau -> inf: every term -> -log(1/(1+K)) with K negatives
    rng = Rng(2)
    k = 4
    h = normalize_rows(rng.normal((2 + k, 6)))
    y = np.array([0, 0] + [i + 1 for i in range(k)])
    assert abs(sc_loss(h, y, 1e9) - np.log(1 + k)) < 1e-6


def test_sc_loss_requires_an_anchor():
    h = normalize_rows(Rng(3).normal((3, 4)))
    with pytest.raises(ValueError, match="anchor"):
        sc_loss(h, np.array([0, 1, 2]), 0.5)


def test_sc_grad_matches_finite_differences():
    rng = Rng(4)
    h = normalize_rows(rng.normal((6, 4)))
    y = np.array([0, 0, 1, 1, 2, 2])
    got = sc_grad(h, y, 0.5)
    want = fd_array_grad(lambda: sc_loss(h, y, 0.5), h)
    assert rel_err(got, want) < 1e-6


def test_sc_loss_rotation_invariant():
    rng = Rng(5)
    h = normalize_rows(rng.normal((8, 5)))
    y = rng.integers(0, 3, size=8)
    q, _ = np.linalg.qr(rng.normal((5, 5)))
    assert abs(sc_loss(h, y, 0.2) - sc_loss(h @ q, y, 0.2)) < 1e-9


def test_normalize_backward_chains_correctly():
    rng = Rng(6)
    raw = rng.normal((5, 4))
    y = np.array([0, 0, 1, 1, 0])

    def composite():
        return sc_loss(normalize_rows(raw), y, 0.4)

    h = normalize_rows(raw)
    got = _normalize_backward(raw, h, sc_grad(h, y, 0.4))
    assert rel_err(got, fd_array_grad(composite, raw)) < 1e-6


def test_intra_class_variation_identical_rows():
    h = np.tile([0.3, 0.4, 0.5], (4, 1))
    out = intra_class_variation(h, np.zeros(4, dtype=int))
    assert abs(out[0]) < 1e-9


def test_intra_class_variation_orthonormal_rows():
    h = np.eye(3)
    out = intra_class_variation(h, np.zeros(3, dtype=int))
    assert abs(out[0] - 1.0) < 1e-12


def test_intra_class_variation_matches_double_loop():
    rng = Rng(7)
    h = rng.normal((12, 5))
    y = rng.integers(0, 3, size=12)
    got = intra_class_variation(h, y)
    hn = h / np.linalg.norm(h, axis=1, keepdims=True)
    for cid in np.unique(y):
        rows = hn[y == cid]
        if rows.shape[0] < 2:
            assert int(cid) not in got
            continue
        vals = []
        for i in range(rows.shape[0]):
            for j in range(rows.shape[0]):
                if i != j:
                    vals.append(1.0 - rows[i] @ rows[j])
        assert abs(got[int(cid)] - np.mean(vals)) < 1e-9


def test_intra_class_variation_skips_singletons():
    h = Rng(8).normal((3, 4))
    out = intra_class_variation(h, np.array([0, 0, 1]))
    assert 1 not in out and 0 in out


@pytest.fixture(scope="module")
def trained_pair():
    fs = gen_synthetic(SyntheticSpec(n_seen_classes=5, n_unseen_classes=2,
                                     samples_per_class=60, seed=13))
    cfg = EncoderConfig(epochs=20)
    pair = train_encoders(fs, cfg, Rng(13).substream("encoders"))
    return fs, pair


def test_encoder_linear_probe_accuracy(trained_pair):
    # independent probe: sklearn logistic regression on frozen features
    from sklearn.linear_model import LogisticRegression
    fs, pair = trained_pair
    tr = fs.train_indices
    feats = pair.encode_ce(fs.features[tr].astype(np.float64))
    probe = LogisticRegression(max_iter=2000).fit(feats, fs.labels[tr])
    assert probe.score(feats, fs.labels[tr]) >= 0.95


def test_encoder_sc_outputs_unit_norm(trained_pair):
    fs, pair = trained_pair
    r = pair.encode_sc(fs.features[:200].astype(np.float64))
    assert np.max(np.abs(np.linalg.norm(r, axis=1) - 1.0)) < 1e-6


def test_encoder_determinism(trained_pair):
    fs, pair = trained_pair
    again = train_encoders(fs, EncoderConfig(epochs=20), Rng(13).substream("encoders"))
    for a, b in zip(pair.f_ce.weights, again.f_ce.weights):
        assert np.array_equal(a, b)
    for a, b in zip(pair.f_sc.weights, again.f_sc.weights):
        assert np.array_equal(a, b)


def test_encoder_requires_two_classes():
    fs = gen_synthetic(SyntheticSpec(n_seen_classes=1, n_unseen_classes=1,
                                     samples_per_class=10, seed=1))
    with pytest.raises(ValueError, match="two seen classes"):
        train_encoders(fs, EncoderConfig(epochs=1), Rng(0))


def test_encoder_save_load_round_trip(tmp_path, trained_pair):
    _, pair = trained_pair
    path = tmp_path / "enc.bin"
    pair.save(path)
    back = EncoderPair.load(path)
    x = Rng(14).normal((7, pair.f_ce.in_dim))
    assert np.array_equal(back.encode_ce(x), pair.encode_ce(x))
    assert np.array_equal(back.encode_sc(x), pair.encode_sc(x))
    assert back.tau == pair.tau


def test_sc_representations_keep_subcluster_spread():
    """With two sub-means per class and fine-grained contrast, the
    contrastive space keeps classes wider than the cross-entropy space."""
    margins = []
    for seed in (1, 2, 11):
        fs = gen_synthetic(SyntheticSpec(n_seen_classes=6, n_unseen_classes=3,
                                         samples_per_class=80, subclusters=2,
                                         seed=seed))
        pair = train_encoders(fs, EncoderConfig(epochs=25, sc_fine_clusters=2),
                              Rng(seed).substream("encoders"))
        tr = fs.train_indices
        x = fs.features[tr].astype(np.float64)
        y = fs.labels[tr]
        icv_ce = np.mean(list(intra_class_variation(pair.encode_ce(x), y).values()))
        icv_sc = np.mean(list(intra_class_variation(pair.encode_sc(x), y).values()))
        margins.append(icv_sc - icv_ce)
    assert all(m > 0 for m in margins)

"""Acceptance gate: one test per primary criterion, in contract order.

Each test line is a pass/fail verdict for one criterion at its pinned
tolerance. Shared oracles are imported from the per-module suites rather
than re-derived, so the gate and the unit suites cannot drift apart.
"""

import json
import math
import os

import numpy as np
import pytest
import torch

import scat_inpaint.losses as L
from scat_inpaint.cli import EXIT_OK, main
from scat_inpaint.data import save_unit_image, signed_to_unit, synthetic_textures
from scat_inpaint.masks import compose, corrupt, generate_freeform_mask, save_mask
from scat_inpaint.metrics import (
    RandomConvExtractor,
    evaluate,
    extract_statistics,
    fid,
    mean_l1,
    ssim,
)
from scat_inpaint.networks import NetworkSettings, build_networks
from scat_inpaint.spectral import spectral_normalize, unwrapped_parameterized_layers
from scat_inpaint.trainer import OptimizerSettings, TrainConfig, fit

import test_gradients

from conftest import TINY_SIZE
from test_losses import (
    oracle_hinge_d,
    oracle_rec,
    oracle_scat_g,
    oracle_scat_s,
    oracle_textural,
)
from test_metrics import oracle_fid, oracle_mean_l1, oracle_ssim, random_spd
from test_spectral import fresh_uv, top_singular_value

ANALYTIC_TOL = 1e-6


def t64(a):
    return torch.from_numpy(np.asarray(a, dtype=np.float64))


def test_loss_analytics():
    half = torch.full((2, 1, 8, 8), 0.5, dtype=torch.float64)
    m = torch.from_numpy(
        (np.indices((8, 8)).sum(0) % 2).astype(np.float64)
    ).expand(2, 1, 8, 8)
    assert abs(L.scat_loss_S(half, half, m).item() - 2 * math.log(2)) < ANALYTIC_TOL
    assert abs(L.scat_loss_G(half).item() - math.log(2)) < ANALYTIC_TOL

    emb = torch.randn(4, 32, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    negs = emb.unsqueeze(0).repeat(8, 1, 1)
    got = L.semantic_contrastive(emb, emb, negs, t=0.07).item()
    assert abs(got - math.log(9)) < ANALYTIC_TOL

    feats = [torch.randn(2, 3, 8, 8, dtype=torch.float64) for _ in range(3)]
    tilde = [f + 1.0 for f in feats]
    assert abs(L.textural_contrastive(feats, feats, tilde).item()) < ANALYTIC_TOL

    real = torch.full((2, 1, 6, 6), 2.0, dtype=torch.float64)
    fake = torch.full((2, 1, 6, 6), -2.0, dtype=torch.float64)
    assert abs(L.adv_hinge_D(real, fake).item()) < ANALYTIC_TOL

    w = L.LossWeights()  # paper weights 1/10/1/10
    total = L.total_generator(
        t64(1.0), t64(1.0), L.total_contrastive(t64(0.1), t64(1.0), w), t64(0.5), w
    )
    # contra component supplied as its weighted value 2 = 10*0.1 + 1*1
    assert abs(total.item() - 9.0) < ANALYTIC_TOL


def test_gradient_suite():
    suite = test_gradients.TestGradientSuite()
    suite.test_scat_loss_S()
    suite.test_scat_loss_G()
    suite.test_scat_hinge()
    suite.test_textural()
    suite.test_semantic()
    suite.test_adv_hinge()
    suite.test_reconstruction()
    suite.test_totals()


def test_oracle_equivalence():
    rng = np.random.default_rng(2024)
    shape = (2, 3, 8, 8)
    for _ in range(20):
        sb = rng.uniform(0.02, 0.98, shape)
        sx = rng.uniform(0.02, 0.98, shape)
        m = (rng.random(shape) < 0.5).astype(np.float64)
        assert abs(L.scat_loss_S(t64(sb), t64(sx), t64(m)).item() - oracle_scat_s(sb, sx, m)) < 1e-6
        assert abs(L.scat_loss_G(t64(sb)).item() - oracle_scat_g(sb)) < 1e-6

        fb, fx, ft = (
            [rng.standard_normal((2, 4, 5, 5)) for _ in range(3)] for _ in range(3)
        )
        got = L.textural_contrastive([t64(f) for f in fb], [t64(f) for f in fx], [t64(f) for f in ft])
        assert abs(got.item() - oracle_textural(fb, fx, ft)) < 1e-6

        xh, x = rng.standard_normal(shape), rng.standard_normal(shape)
        assert abs(L.reconstruction(t64(xh), t64(x)).item() - oracle_rec(xh, x)) < 1e-6
        assert abs(L.adv_hinge_D(t64(x), t64(xh)).item() - oracle_hinge_d(x, xh)) < 1e-6

        a, b = rng.random((3, 10, 10)), rng.random((3, 10, 10))
        assert abs(mean_l1(a, b) - oracle_mean_l1(a, b)) < 1e-12
        im1, im2 = rng.random((1, 16, 16)), rng.random((1, 16, 16))
        assert abs(ssim(im1, im2) - oracle_ssim(im1, im2)) < 1e-9

        mu_a, mu_b = rng.standard_normal(6), rng.standard_normal(6)
        sig_a, sig_b = random_spd(rng, 6), random_spd(rng, 6)
        got = fid((mu_a, sig_a), (mu_b, sig_b))
        assert abs(got - oracle_fid(mu_a, sig_a, mu_b, sig_b)) < 1e-4


def test_spectral_normalization():
    rng = np.random.default_rng(11)
    for _ in range(50):
        w = torch.from_numpy(rng.random((16, 16)))
        u, v = fresh_uv(16, 16, seed=int(rng.integers(2**31)))
        w_norm, _, _, _ = spectral_normalize(w, u, v, n_iterations=20)
        s = top_singular_value(w_norm.numpy())
        assert 0.999 <= s <= 1.001

    _, disc, seg = build_networks(NetworkSettings(), image_size=256)
    assert unwrapped_parameterized_layers(disc) == []
    assert unwrapped_parameterized_layers(seg) == []


def test_composition_exactness(tmp_path, tiny_run):
    rng = np.random.default_rng(99)
    for i in range(100):
        h, w = int(rng.integers(4, 24)), int(rng.integers(4, 24))
        dtype = np.float32 if i % 2 else np.float64
        x = rng.uniform(-1, 1, (3, h, w)).astype(dtype)
        x_hat = rng.uniform(-1, 1, (3, h, w)).astype(dtype)
        m = (rng.random((h, w)) < rng.random()).astype(dtype)
        x_tilde = corrupt(x, m)
        out = compose(x_hat, x_tilde, m)
        valid, hole = m == 1, m == 0
        assert out[:, valid].tobytes() == x[:, valid].tobytes()
        assert out[:, hole].tobytes() == x_hat[:, hole].tobytes()
        tx, th, tm = map(torch.from_numpy, (x, x_hat, m))
        t_out = (1 - tm) * th + tm * (tx * tm)
        assert t_out[:, valid].numpy().tobytes() == x[:, valid].tobytes()

    ckpt, _, _ = tiny_run
    img = np.rint(
        signed_to_unit(synthetic_textures(1, TINY_SIZE, seed=8)[0]).transpose(1, 2, 0) * 255
    ).astype(np.uint8)
    from PIL import Image

    image_path = str(tmp_path / "in.png")
    Image.fromarray(img, mode="RGB").save(image_path)
    mask = generate_freeform_mask(TINY_SIZE, TINY_SIZE, seed=13)
    mask_path = str(tmp_path / "m.png")
    save_mask(mask, mask_path)
    out_path = str(tmp_path / "out.png")
    assert main(["infer", image_path, mask_path, out_path, "--checkpoint", ckpt]) == EXIT_OK
    out_img = Image.open(out_path)
    out_img.load()
    out = np.asarray(out_img.convert("RGB"), dtype=np.uint8)
    assert out[mask == 1.0].tobytes() == img[mask == 1.0].tobytes()


SMOKE_NETS = NetworkSettings(
    generator_base=16,
    generator_blocks=2,
    dilation_rates=(1, 2, 4, 8),
    discriminator_base=16,
    discriminator_taps=3,
    segmentation_base=8,
    segmentation_depth=3,
)


@pytest.mark.slow
def test_smoke_training(tmp_path):
    data_dir = tmp_path / "data"
    os.makedirs(data_dir)
    for i, img in enumerate(synthetic_textures(16, 64, seed=1)):
        save_unit_image(signed_to_unit(img), str(data_dir / f"tex_{i:03d}.png"))

    rec_curves = {}
    for ablation in ("baseline", "plus_scat", "plus_text", "full"):
        out_dir = str(tmp_path / f"run_{ablation}")
        config = TrainConfig(
            dataset_dir=str(data_dir),
            out_dir=out_dir,
            image_size=64,
            batch_size=8,
            max_steps=200,
            # the textural ratio spikes early while x_hat escapes x_tilde;
            # 1e-4 stalls inside that hump at this scale, 1e-3 clears it
            optimizer=OptimizerSettings(g_lr=1e-3),
            networks=SMOKE_NETS,
            ablation=ablation,
            seed=0,
            checkpoint_every=0,
            log_every=1,
        )
        state = fit(config)
        assert state.step == 200, ablation
        assert os.path.isfile(os.path.join(out_dir, "checkpoint.pt")), ablation
        lines = [
            json.loads(l) for l in open(os.path.join(out_dir, "train_log.jsonl"))
        ]
        assert len(lines) == 200, ablation
        for line in lines:
            for key, value in line.items():
                assert math.isfinite(value), (ablation, line["step"], key)
        rec_curves[ablation] = [line["rec"] for line in lines]

    first, last = rec_curves["full"][0], rec_curves["full"][-1]
    assert last <= 0.5 * first, f"rec {first:.4f} -> {last:.4f}"


def test_evaluator_protocol(tmp_path):
    from test_metrics import ratio_mask

    size = 32
    res, tru, msk = (tmp_path / d for d in ("results", "truth", "masks"))
    for d in (res, tru, msk):
        os.makedirs(d)
    # two identical pairs per bucket so every bucket has a defined FID
    targets = [0.1, 0.1, 0.3, 0.3, 0.5, 0.5]
    imgs = synthetic_textures(len(targets), size, seed=6)
    for i, ratio in enumerate(targets):
        name = f"img_{i}.png"
        u = signed_to_unit(imgs[i])
        save_unit_image(u, str(res / name))
        save_unit_image(u, str(tru / name))
        save_mask(ratio_mask(size, ratio), str(msk / name))

    report = evaluate(
        str(res), str(tru), str(msk), extractor=RandomConvExtractor(embedding_dim=8)
    )
    payload = report.to_json_dict()
    assert set(payload.keys()) == {"B0_20", "B20_40", "B40_60"}
    for bucket in payload.values():
        assert bucket["n_images"] == 2
        assert bucket["mean_l1"] == 0.0
        assert abs(bucket["ssim"] - 1.0) < 1e-9
        assert abs(bucket["fid"]) < 1e-8

    # ten constructed masks against a manual bucket tally
    tally_targets = [0.05, 0.1, 0.15, 0.19, 0.25, 0.3, 0.39, 0.45, 0.5, 0.59]
    res2, tru2, msk2 = (tmp_path / d for d in ("r2", "t2", "m2"))
    for d in (res2, tru2, msk2):
        os.makedirs(d)
    imgs2 = synthetic_textures(len(tally_targets), size, seed=7)
    for i, ratio in enumerate(tally_targets):
        name = f"img_{i}.png"
        u = signed_to_unit(imgs2[i])
        save_unit_image(u, str(res2 / name))
        save_unit_image(u, str(tru2 / name))
        save_mask(ratio_mask(size, ratio), str(msk2 / name))
    report2 = evaluate(str(res2), str(tru2), str(msk2))
    counts = {k: b.n_images for k, b in report2.buckets.items()}
    assert counts == {"B0_20": 4, "B20_40": 3, "B40_60": 3}


def test_fid_closed_form():
    rng = np.random.default_rng(17)
    for d in (4, 8, 16):
        v = rng.standard_normal(d)
        eye = np.eye(d)
        got = fid((np.zeros(d), eye), (v, eye))
        assert abs(got - float(v @ v)) < 1e-8

    for _ in range(20):
        mu_a, mu_b = rng.standard_normal(8), rng.standard_normal(8)
        sig_a, sig_b = random_spd(rng, 8), random_spd(rng, 8)
        got = fid((mu_a, sig_a), (mu_b, sig_b))
        want = oracle_fid(mu_a, sig_a, mu_b, sig_b)
        assert abs(got - want) < 1e-4

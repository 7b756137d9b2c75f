"""Acceptance checks, one marker per criterion; the terminal summary prints PASS/FAIL per number.

The training criteria (6-9) share one desk-scale run: 500 iterations at 128x128 on 50
synthetic photographs with one synthetic style.
"""
import copy
import csv
import math
import time

import numpy as np
import pytest
import torch

from gradcheck import probe_gradients
from metric_oracle import population
from styler import synthetic
from styler.balance import BalanceState, sample_gamma
from styler.encoders import INJECTION_PLAN, ContentSubnet, StyleSubnet, expected_tap_shapes
from styler.generator import BalancedStyleNet, adaptive_concat, stylize
from styler.io import hwc_to_chw, load_checkpoint, parameter_digest, save_checkpoint
from styler.loss_network import (CONTENT_LAYERS, STYLE_LAYERS, LossNetwork,
                                 content_loss_from_features, gram, style_loss,
                                 style_loss_from_grams, total_loss)
from styler.metric import LossRecord, balance, evaluate_population
from styler.trainer import TrainConfig, finetune, train_initial

criterion = pytest.mark.criterion


# -- 1: metric oracle ----------------------------------------------------------------------

@criterion(1)
def test_metric_matches_brute_force():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(200):
        k = (1, 2, 50)[i % 3]
        scale = 10.0 ** rng.uniform(-3, 3)
        raw = [(f"c{j}", f"s{j % 3}", *(scale * rng.gamma(2.0, 1.0, 2))) for j in range(k)]
        result = evaluate_population([LossRecord(*r) for r in raw])
        per, means = population(raw)
        for m, o in zip(result.records, per):
            got = (m.norm_content, m.norm_style, m.length, m.omega, m.balance)
            worst = max(worst, max(abs(a - b) for a, b in zip(got, o)))
            # tan(omega) recovers min/max up to the last couple of bits
            lo, hi = sorted((m.norm_content, m.norm_style))
            assert math.tan(m.omega) == pytest.approx(lo / hi, rel=1e-12, abs=0)
        got = (result.mean_length, result.mean_omega, result.mean_balance)
        worst = max(worst, max(abs(a - b) for a, b in zip(got, means)))
    assert worst <= 1e-9
    for _ in range(1000):
        a, b = rng.uniform(1e-3, 1.0, 2)
        s = rng.uniform(0.01, 100)
        assert abs(balance(s * a, s * b) - balance(a, b) / s) <= 1e-9
    assert time.perf_counter() - start < 10


# -- 2: shape contract ---------------------------------------------------------------------

@criterion(2)
def test_shape_contract():
    start = time.perf_counter()
    torch.manual_seed(0)
    model = BalancedStyleNet().eval()
    rng = np.random.default_rng(0)
    for n in (64, 128, 256, 512):
        c = rng.random((n, n, 3), dtype=np.float32)
        s = rng.random((n, n, 3), dtype=np.float32)
        out = stylize(model, c, s)
        assert out.shape == (n, n, 3)
        assert np.all((out >= 0) & (out <= 1))
        x = hwc_to_chw(c)[None]
        with torch.no_grad():
            _, s_taps = model.style(x)
            _, c_taps = model.content(x, s_taps, 0.5)
        want = expected_tap_shapes(n)
        assert len(want) == len(INJECTION_PLAN) == 3
        for sc, ct, w in zip(s_taps, c_taps, want):
            assert tuple(sc.shape[1:]) == tuple(ct.shape[1:]) == w
    assert time.perf_counter() - start < 60


# -- 3: injection / concat identities ------------------------------------------------------

@criterion(3)
def test_injection_and_concat_identities():
    start = time.perf_counter()
    torch.manual_seed(1)
    content, style = ContentSubnet().eval(), StyleSubnet().eval()
    xc, xs = torch.rand(2, 3, 64, 64), torch.rand(2, 3, 64, 64)
    with torch.no_grad():
        _, s_taps = style(xs)
        injected, _ = content(xc, s_taps, 1.0)
        plain, _ = content(xc)
        _, used = content(xc, s_taps, 0.0)
    assert torch.equal(injected, plain)
    assert all(torch.equal(u, t) for u, t in zip(used, s_taps))
    a, b = torch.randn(2, 128, 4, 4), torch.randn(2, 128, 4, 4)
    for g in (0.0, 0.25, 0.5, 1.0):
        out = adaptive_concat(a, b, g)
        assert out.shape == (2, 256, 4, 4)
        assert torch.equal(out[:, :128], g * a)
        assert torch.equal(out[:, 128:], (1 - g) * b)
    assert time.perf_counter() - start < 10


# -- 4: loss correctness -------------------------------------------------------------------

def _loop_gram(phi):
    c, h, w = phi.shape
    return np.array([[sum(phi[i, y, x] * phi[j, y, x] for y in range(h) for x in range(w))
                      / (c * h * w) for j in range(c)] for i in range(c)])


@criterion(4)
def test_loss_correctness(loss_net):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    for _ in range(1000):
        c, h, w = rng.integers(1, 16, size=3)
        g = gram(torch.from_numpy(rng.normal(size=(c, h, w)))).numpy()
        assert np.array_equal(g, g.T)
        assert np.linalg.eigvalsh(g).min() >= -1e-8

    # 8x8 stub features at every named layer
    def stub():
        return {k: torch.from_numpy(rng.integers(-5, 6, (1, 4, 8, 8)) / 4.0)
                for k in CONTENT_LAYERS + STYLE_LAYERS}

    fa, fb = stub(), stub()
    want_c = sum(((fa[k][0] - fb[k][0]).numpy() ** 2).sum() / (4 * 8 * 8) for k in CONTENT_LAYERS) / len(CONTENT_LAYERS)
    got_c = content_loss_from_features(fa, fb).item()
    ga = {k: gram(fa[k]) for k in STYLE_LAYERS}
    gb = {k: gram(fb[k]) for k in STYLE_LAYERS}
    want_s = 0.0
    for k in STYLE_LAYERS:
        la, lb = _loop_gram(fa[k][0].numpy()), _loop_gram(fb[k][0].numpy())
        want_s += sum((la[i, j] - lb[i, j]) ** 2 for i in range(4) for j in range(4))
    want_s /= len(STYLE_LAYERS)  # mean over layers
    got_s = style_loss_from_grams(ga, gb).item()
    assert abs(got_c - want_c) <= 1e-12 and abs(got_s - want_s) <= 1e-12
    assert content_loss_from_features(fa, fa).item() == 0
    assert style_loss_from_grams(ga, ga).item() == 0

    torch.manual_seed(4)
    net = LossNetwork().double()
    x, y, s = (torch.rand(1, 3, 32, 32, dtype=torch.float64) for _ in range(3))
    _, lc0, ls0 = total_loss(net, x, x, x)
    assert lc0.item() == 0 and ls0.item() == 0
    l1, lc, ls = (v.item() for v in total_loss(net, x, y, s, alpha=1.0))
    l0 = total_loss(net, x, y, s, alpha=0.0)[0].item()
    assert (l1, l0) == (lc, ls)
    for alpha in np.linspace(0, 1, 11):
        l = total_loss(net, x, y, s, alpha=float(alpha))[0].item()
        # L(alpha) = L(0) + alpha (L(1) - L(0)), to float64 rounding
        assert l == pytest.approx(l0 + alpha * (l1 - l0), rel=1e-12, abs=0)
    assert time.perf_counter() - start < 30


# -- 5: gradient check ---------------------------------------------------------------------

@criterion(5)
def test_gradient_check():
    """Central differences at step 1e-4, float64, 16x16, >= 10 parameters per subnet."""
    start = time.perf_counter()
    probes = probe_gradients(step=1e-4, per_subnet=10, size=16, seed=0)
    assert {p.subnet for p in probes} == {"content", "style", "generator"}
    bad = [p for p in probes if p.rel_error > 1e-3]
    assert time.perf_counter() - start < 300
    assert not bad, (f"{len(bad)}/{len(probes)} probes outside 1e-3 "
                     f"({sum(p.kink for p in bad)} of them crossed a ReLU/max-pool switch)")


# -- shared desk-scale run -----------------------------------------------------------------

SMOKE = dict(iterations=500, batch_size=2, image_size=128, T=50, val_interval=100, seed=0)


def _style_loss_on(net, model, val, style):
    with torch.no_grad():
        return float(np.mean([style_loss(net, model(c[None], style[None]), style[None]).item()
                              for c in val]))


@pytest.fixture(scope="module")
def smoke(loss_net, tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    content = [hwc_to_chw(a) for a in synthetic.content_set(50, 128, seed=1)]
    val = [hwc_to_chw(a) for a in synthetic.content_set(4, 128, seed=2)]
    style = hwc_to_chw(synthetic.style_image("swirl", 128))
    config = TrainConfig(**SMOKE)
    torch.manual_seed(config.seed)
    untrained = BalancedStyleNet()
    start = time.perf_counter()
    result = train_initial(config, content, style, val, loss_net, model=copy.deepcopy(untrained))
    elapsed = time.perf_counter() - start
    result.balance.write_history(out / "gamma_history.csv")
    save_checkpoint(out / "model.ckpt", result.model, {"style_id": "swirl"}, style)
    return dict(out=out, content=content, val=val, style=style, config=config,
                untrained=untrained, result=result, elapsed=elapsed)


@criterion(6)
def test_balance_controller_properties():
    rng = np.random.default_rng(6)
    assert sample_gamma(0.0, 0.0) == 0.5
    for _ in range(2000):
        lc, ls = rng.exponential(size=2) * 10.0 ** rng.integers(-6, 6)
        g = sample_gamma(lc, ls)
        assert 0 <= g <= 1
        assert sample_gamma(lc, ls * 1.5) >= g  # more style loss, more weight on content
        assert sample_gamma(lc * 1.5, ls) <= g
    state = BalanceState(T=7)
    for t in range(1, 50):
        before = state.gamma
        state.sample(*rng.exponential(size=2))
        if t % 7:
            assert state.gamma == before
    assert [i for i, _ in state.history] == list(range(7, 50, 7))


@criterion(6)
def test_smoke_gamma_dynamics(smoke):
    r, T = smoke["result"], smoke["config"].T
    assert [i for i, _ in r.balance.history] == list(range(T, 501, T))
    refresh = dict(r.balance.history)
    for row in r.log:
        t = row["iteration"]
        assert 0 <= row["gamma"] <= 1
        done = [k for k in refresh if k <= t - 1]
        assert row["gamma"] == (refresh[max(done)] if done else 0.5)
    with open(smoke["out"] / "gamma_history.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [(int(x["iteration"]), float(x["gamma"])) for x in rows] == r.balance.history


# -- 7: desk-scale training ----------------------------------------------------------------

@criterion(7)
def test_smoke_total_loss_falls(smoke):
    r = smoke["result"]
    assert len(r.log) == 500 and smoke["elapsed"] <= 30 * 60
    totals = [row["L"] for row in r.log]
    assert np.mean(totals[-100:]) < 0.8 * np.mean(totals[:100])


@criterion(7)
def test_smoke_style_loss_improves(smoke, loss_net):
    r = smoke["result"]
    before = _style_loss_on(loss_net, smoke["untrained"], smoke["val"], smoke["style"])
    after = _style_loss_on(loss_net, r.model, smoke["val"], smoke["style"])
    assert after < before


@criterion(7)
def test_smoke_checkpoint_roundtrip(smoke):
    r = smoke["result"]
    ck = load_checkpoint(smoke["out"] / "model.ckpt")
    c = smoke["val"][0].permute(1, 2, 0).numpy()
    s = smoke["style"].permute(1, 2, 0).numpy()
    assert np.array_equal(stylize(r.model, c, s), stylize(ck.model, c, s))
    save_checkpoint(smoke["out"] / "again.ckpt", ck.model, ck.metadata, ck.style_image)
    assert (smoke["out"] / "again.ckpt").read_bytes() == (smoke["out"] / "model.ckpt").read_bytes()


# -- 8: determinism ------------------------------------------------------------------------

@criterion(8)
def test_seeded_runs_agree(smoke, loss_net):
    config = TrainConfig(**{**SMOKE, "iterations": 10})
    again = train_initial(config, smoke["content"], smoke["style"], smoke["val"], loss_net)
    first = smoke["result"].log[:10]
    assert len(again.log) == 10
    for a, b in zip(first, again.log):
        for key in ("L", "L_c", "L_s"):
            assert abs(a[key] - b[key]) <= 1e-6 * abs(a[key])


# -- 9: fine-tuning ------------------------------------------------------------------------

@criterion(9)
def test_finetune_onto_new_style(smoke, loss_net):
    base = load_checkpoint(smoke["out"] / "model.ckpt").model
    new_style = hwc_to_chw(synthetic.style_image("mosaic", 128))
    config = TrainConfig.finetune_defaults(iterations=200, image_size=128, freeze=("content",))
    frozen_before = parameter_digest(base.content)
    r = finetune(base, config, smoke["content"], new_style, smoke["val"], loss_net)
    assert len(r.log) == 200
    assert parameter_digest(r.model.content) == frozen_before
    assert parameter_digest(r.model.style) != parameter_digest(base.style)
    before = _style_loss_on(loss_net, base, smoke["val"], new_style)
    after = _style_loss_on(loss_net, r.model, smoke["val"], new_style)
    assert after < before

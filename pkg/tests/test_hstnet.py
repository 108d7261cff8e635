import numpy as np
import pytest
import torch

from graspkit import container
from graspkit.hstnet import (ConfigError, HSTNet, NetworkConfig, TrainHyper, TrainingError, check_gradients,
                             full_config, load_checkpoint, loss_recons, make_sample, miniature_config,
                             save_checkpoint, train)
from graspkit.hstnet.grouping import ball_query, build_groups
from graspkit.hstnet.model import Decoder, SpatialEncoder, TemporalEncoder, sinusoidal_encoding
from graspkit.hstnet.train import collate, predict, refine_sequence
from graspkit.perturbation import PerturbSpec, perturb_sequence

CFG = miniature_config()


@pytest.fixture(scope="module")
def samples(mini_seq, mini_model):
    noisy = perturb_sequence(mini_seq, PerturbSpec("B", seed=0))
    return [make_sample(noisy.slice(s, s + 10), CFG, mini_seq.slice(s, s + 10), mini_model) for s in (0, 10, 20)]


def test_anchor_counts_and_widths(full_model):
    cfg = full_config()
    assert cfg.anchor_counts(778) == [389, 195, 98, 49]
    assert cfg.B == 6 and cfg.block_widths[-1] == 256
    g = build_groups(full_model.template, cfg)
    assert [len(a) for a in g.anchors] == [389, 195, 98, 49]
    enc = SpatialEncoder(cfg).double()
    pos = torch.tensor(full_model.template)[None]
    feats = torch.cat([torch.zeros_like(pos), pos], dim=-1)
    s = enc(feats, pos, [torch.from_numpy(a)[None] for a in g.anchors],
            [torch.from_numpy(n)[None] for n in g.neighbors])
    assert s.shape == (1, 256)


def test_ball_query_radius_and_fallback(rng):
    pts = rng.uniform(-1, 1, size=(200, 3))
    pts[0] = [10.0, 10.0, 10.0]  # isolated
    anchors = np.array([0, 5, 17])
    nb = ball_query(pts, anchors, 0.3, 8)
    assert np.all(nb[0] == 0)
    for a, row in zip(anchors, nb):
        assert np.all(np.linalg.norm(pts[row] - pts[a], axis=1) <= 0.3)
        d = np.linalg.norm(pts - pts[a], axis=1)
        inside = np.flatnonzero(d <= 0.3)
        expect = inside[np.argsort(d[inside], kind="stable")][:8]
        assert set(row[:len(expect)]) == set(expect)


def test_temporal_shapes_full():
    cfg = full_config()
    enc = TemporalEncoder(cfg).double()
    out = enc(torch.randn(1, 30, 256, dtype=torch.float64))
    assert out.shape == (1, 30, 256)
    assert cfg.d_short + cfg.in_features == 262
    assert Decoder(cfg).body[0].in_features == 262


def test_final_pool_permutation_invariant(samples):
    torch.manual_seed(0)
    enc = HSTNet(CFG, seed=1).spatial
    feats, pos, anchors, neighbors, _ = collate(samples[:1])
    f = enc(feats[0], pos[0], anchors, neighbors, pool=False)
    perm = torch.randperm(f.shape[1])
    assert torch.equal(f.amax(dim=1), f[:, perm].amax(dim=1))
    assert torch.equal(enc(feats[0], pos[0], anchors, neighbors), f.amax(dim=1))


def test_short_stage_is_bin_local():
    net = HSTNet(CFG, seed=2)
    L = torch.randn(1, 10, 32, dtype=torch.float64)
    base = net.temporal.short(L)
    L2 = L.clone()
    L2[:, 5:] += torch.randn(1, 5, 32, dtype=torch.float64)
    out = net.temporal.short(L2)
    assert torch.equal(out[:, :5], base[:, :5])
    assert not torch.allclose(out[:, 5:], base[:, 5:])
    # the long stage mixes the whole window
    assert not torch.allclose(net.temporal.long(L2)[:, :5], net.temporal.long(L)[:, :5])


def test_positional_encoding():
    pe = sinusoidal_encoding(6, 8)
    np.testing.assert_allclose(pe[0].numpy(), [0, 1] * 4)
    np.testing.assert_allclose(pe[3, 0].item(), np.sin(3.0))
    np.testing.assert_allclose(pe[3, 3].item(), np.cos(3.0 / 10000 ** (2 / 8)))


def test_decoder_weight_sharing():
    dec = HSTNet(CFG, seed=3).decoder
    S = torch.randn(1, 10, 32, dtype=torch.float64)
    feats = torch.randn(1, 10, 7, 6, dtype=torch.float64)
    feats[:, :, 4] = feats[:, :, 1]
    out = dec(S, feats)
    assert out.shape == (1, 10, 7, 3)
    assert torch.equal(out[:, :, 4], out[:, :, 1])


def test_loss_examples(rng):
    gt = torch.tensor(rng.normal(size=(2, 10, 64, 3)))
    assert loss_recons(gt, gt).item() == 0.0
    assert loss_recons(gt + 0.001, gt).item() == pytest.approx(1e-6, rel=1e-9)
    pred = torch.tensor(rng.normal(size=gt.shape))
    a, b = pred.numpy(), gt.numpy()
    total = 0.0
    for idx in np.ndindex(a.shape):
        total += (a[idx] - b[idx]) ** 2
    assert loss_recons(pred, gt).item() == pytest.approx(total / a.size, rel=1e-12)
    with pytest.raises(ValueError):
        loss_recons(pred[:, :5], gt)


def test_adam_single_step():
    w = torch.tensor([1.0], dtype=torch.float64, requires_grad=True)
    opt = torch.optim.Adam([w], lr=0.1, betas=(0.9, 0.999), eps=1e-8)
    (w ** 2).sum().backward()
    opt.step()
    # hand-computed: m_hat = 2, v_hat = 4, step = 0.1 * 2 / (2 + 1e-8)
    expect = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8)
    assert w.item() == pytest.approx(expect, abs=1e-15)
    assert w.item() == pytest.approx(0.9000000316, abs=1e-7)


def test_untrained_forward_and_purity(samples):
    net = HSTNet(CFG, seed=4)
    out = predict(net, samples[:1] * 2)
    assert out.shape == (2, 10, 64, 3) and np.isfinite(out).all()
    np.testing.assert_array_equal(out[0], out[1])


def test_no_dead_paths(samples):
    net = HSTNet(CFG, seed=5)
    feats, pos, anchors, neighbors, gt = collate(samples)
    loss_recons(net(feats, pos, anchors, neighbors), gt).backward()
    grads = torch.cat([p.grad.reshape(-1) for p in net.parameters()])
    assert (grads == 0).double().mean().item() < 0.05


@pytest.mark.parametrize("flags", [{}, {"swap_temporal_order": True}, {"long_only_temporal": True},
                                   {"flat_spatial": True}])
def test_ablations_forward(samples, flags):
    cfg = CFG.replace(**flags)
    out = predict(HSTNet(cfg, seed=0), samples[:1])
    assert out.shape == (1, 10, 64, 3)
    assert cfg.ablation == ("+".join(flags) or "none")


def test_train_deterministic_and_decreasing(samples):
    hyper = TrainHyper(lr=3e-3, batch=2, steps=30, seed=7)
    a = train(samples, CFG, hyper)
    b = train(samples, CFG, hyper)
    assert a.step_losses == b.step_losses
    assert len(a.epoch_losses) == 15
    assert a.step_losses[-1] < a.step_losses[0]


def test_nan_diagnostic(samples):
    net = HSTNet(CFG, seed=0)
    with torch.no_grad():
        net.temporal.long.layers[0].attn.q.weight[0, 0] = float("nan")
    with pytest.raises(TrainingError, match="temporal.long.layers.0.attn.q"):
        train(samples, CFG, TrainHyper(steps=1), net=net)
    with pytest.raises(TrainingError):
        train([], CFG)


def test_checkpoint_roundtrip(tmp_path, samples):
    net = HSTNet(CFG, seed=8)
    save_checkpoint(net, tmp_path / "w.gkw", {"note": "x"})
    back, meta = load_checkpoint(tmp_path / "w.gkw")
    assert meta["note"] == "x" and back.cfg == CFG
    np.testing.assert_array_equal(predict(net, samples[:1]), predict(back, samples[:1]))
    arrays, meta = container.read(tmp_path / "w.gkw", "hstnet_weights", 1)
    for key, value, msg in (("ff_dim", 128, "has shape"), ("d", 64, "layers do not match")):
        bad = {**meta, "config": {**meta["config"], key: value}}
        container.write(tmp_path / "bad.gkw", "hstnet_weights", 1, arrays, bad)
        with pytest.raises(container.ContainerError, match=msg):
            load_checkpoint(tmp_path / "bad.gkw")


def test_refine_sequence_tail(mini_seq, mini_model):
    net = HSTNet(CFG, seed=0)
    out = refine_sequence(mini_seq.slice(0, 25), CFG, net, mini_model)
    assert out.shape == (25, 64, 3) and np.isfinite(out).all()


@pytest.mark.parametrize("kw, msg", [({"T": 12}, "divisible"), ({"radii": (0.1, 0.05, 0.2, 0.3)}, "non-decreasing"),
                                     ({"d": 0}, "d must be positive"), ({"representation": "mesh"}, "representation"),
                                     ({"radii": (0.1,)}, "one radius")])
def test_config_errors(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        miniature_config(**kw)
    with pytest.raises(ConfigError, match="unknown"):
        NetworkConfig.from_dict({"bogus": 1})
    assert NetworkConfig.from_dict(CFG.to_dict()) == CFG


def test_gradcheck_spatial_and_decoder(samples):
    net = HSTNet(CFG, seed=3)
    feats, pos, anchors, neighbors, gt = collate(samples[:1])
    w = torch.randn(CFG.d, generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    sc = CFG.coord_scale
    res = check_gradients(lambda: (net.spatial(feats[0] * sc, pos[0] * sc, anchors, neighbors) @ w).sum(),
                          list(net.spatial.parameters()), per_tensor=10)
    assert res.passed(1e-3), res
    v = torch.randn_like(gt)
    res = check_gradients(lambda: (net(feats, pos, anchors, neighbors) * v).sum(),
                          list(net.decoder.parameters()), per_tensor=10)
    assert res.passed(1e-3), res


def test_gradcheck_detects_wrong_gradient():
    w = torch.tensor([0.3, -0.7], dtype=torch.float64, requires_grad=True)

    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            ctx.save_for_backward(x)
            return (x ** 3).sum()

        @staticmethod
        def backward(ctx, g):
            (x,) = ctx.saved_tensors
            return g * 2 * x ** 2

    assert not check_gradients(lambda: Wrong.apply(w), [w]).passed(1e-3)
    assert check_gradients(lambda: (w ** 3).sum(), [w]).passed(1e-6)

import numpy as np
import pytest
import torch

from trirecon.geom import BOX, Primitive, Shape
from trirecon.vae import (
    EncoderOutput,
    TriplaneConv,
    TriplaneLatent,
    TriplaneVAE,
    VAEConfig,
    aware_conv3d,
    kl_divergence,
    reparameterize,
    sample_training_batch,
    train_vae,
    vae_loss,
)
from trirecon.vae.train import ShapeBank


def tiny_cfg(**kw):
    base = dict(reso=16, latent_channels=4, base_width=8, depth=2, point_feat=16,
                decoder_hidden=32, k_points=256, queries_per_step=128, surface_spacing=0.05)
    base.update(kw)
    return VAEConfig(**base)


def tiny_vae(seed=0, **kw):
    torch.manual_seed(seed)
    return TriplaneVAE(tiny_cfg(**kw))


class TestEncode:
    def test_output_shapes_and_positivity(self):
        vae = tiny_vae()
        pts = torch.rand(300, 3) - 0.5
        enc = vae.encode(pts)
        assert enc.mu.shape == (3, 4, 16, 16)
        assert enc.sigma.shape == (3, 4, 16, 16)
        assert (enc.sigma > 0).all()

    def test_permutation_invariance_exact(self):
        vae = tiny_vae()
        pts = torch.rand(500, 3) - 0.5
        perm = torch.randperm(500)
        a = vae.encode(pts)
        b = vae.encode(pts[perm])
        assert torch.equal(a.mu, b.mu) and torch.equal(a.sigma, b.sigma)

    def test_empty_cloud_rejected(self):
        with pytest.raises(ValueError):
            tiny_vae().encode(torch.zeros(0, 3))

    def test_empty_cells_receive_learned_embedding(self):
        # a cloud confined to z > 0 leaves the lower-v half of the XZ plane empty
        vae = tiny_vae()
        pts = torch.rand(400, 3) - 0.5
        pts[:, 2] = pts[:, 2].abs() + 1e-3
        pooled, occupied = vae.point_encoder(pts, vae.cfg.reso)
        # XZ plane (index 1): v = z + 0.5 > 0.5 -> cells with v-index < 7 are empty
        empty_region = pooled[1, :, :, :7]
        expected = vae.point_encoder.empty[None, :, None, None]
        assert not occupied[1, :, :, :7].any()
        assert torch.allclose(empty_region, expected.squeeze(0).expand_as(empty_region))


class TestReparameterize:
    def out(self, mu_val=0.7, sigma_val=0.3):
        mu = torch.full((3, 2, 4, 4), mu_val)
        sigma = torch.full((3, 2, 4, 4), sigma_val)
        return EncoderOutput(mu, sigma)

    def test_sigma_zero_limit(self):
        enc = self.out(sigma_val=1e-12)
        lat = reparameterize(enc, 0)
        assert torch.allclose(lat.planes, enc.mu, atol=1e-9)

    def test_deterministic_per_seed(self):
        enc = self.out()
        assert torch.equal(reparameterize(enc, 5).planes, reparameterize(enc, 5).planes)
        assert not torch.equal(reparameterize(enc, 5).planes, reparameterize(enc, 6).planes)

    def test_monte_carlo_mean(self):
        # sample mean over 10k seeds approaches mu within 3*sigma/100 elementwise
        enc = self.out(mu_val=0.25, sigma_val=0.5)
        acc = torch.zeros_like(enc.mu)
        n = 10000
        for s in range(n):
            acc += reparameterize(enc, s).planes
        mean = acc / n
        assert (mean - enc.mu).abs().max() < 3 * 0.5 / 100


class TestLatentType:
    def test_values_layout(self):
        planes = torch.rand(3, 5, 8, 8)
        lat = TriplaneLatent(planes)
        vals = lat.values
        assert vals.shape == (8, 8, 3, 5)
        assert np.allclose(vals[2, 3, 1, :], planes[1, :, 2, 3].numpy())
        back = TriplaneLatent.from_values(vals)
        assert torch.allclose(back.planes, planes)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            TriplaneLatent(torch.zeros(3, 2, 4, 6))

    def test_rejects_non_finite(self):
        bad = torch.zeros(3, 1, 4, 4)
        bad[0, 0, 0, 0] = float("nan")
        with pytest.raises(ValueError):
            TriplaneLatent(bad)


class TestDecode:
    def test_empty_queries(self):
        vae = tiny_vae()
        lat = reparameterize(vae.encode(torch.rand(100, 3) - 0.5), 0)
        out = vae.decode(lat, torch.zeros(0, 3))
        assert out.shape == (0,)

    def test_duplicate_queries_identical_logits(self):
        vae = tiny_vae()
        lat = reparameterize(vae.encode(torch.rand(100, 3) - 0.5), 0)
        q = torch.rand(1, 3) - 0.5
        out = vae.decode(lat, q.repeat(8, 1))
        assert torch.equal(out, out[0].expand(8))

    def test_chunked_equals_whole(self):
        vae = tiny_vae()
        lat = reparameterize(vae.encode(torch.rand(200, 3) - 0.5), 1)
        q = torch.rand(100, 3) - 0.5
        whole = vae.decode(lat, q, chunk=1000)
        chunked = vae.decode(lat, q, chunk=7)
        assert (whole - chunked).abs().max() < 1e-6

    def test_gradient_wrt_query_matches_fd(self):
        torch.manual_seed(3)
        vae = tiny_vae().double()
        lat_planes = torch.rand(3, 4, 16, 16, dtype=torch.float64)
        # generic query away from texel boundaries
        q = torch.tensor([[0.1731, -0.2212, 0.0533]], dtype=torch.float64, requires_grad=True)
        logit = vae.decode(TriplaneLatent(lat_planes), q)
        logit.backward()
        h = 1e-5
        for d in range(3):
            delta = torch.zeros(1, 3, dtype=torch.float64)
            delta[0, d] = h
            with torch.no_grad():
                f1 = vae.decode(TriplaneLatent(lat_planes), (q + delta).detach())
                f0 = vae.decode(TriplaneLatent(lat_planes), (q - delta).detach())
            fd = float(f1 - f0) / (2 * h)
            rel = abs(float(q.grad[0, d]) - fd) / max(abs(fd), 1e-10)
            assert rel < 1e-4, (d, rel)


class TestAwareConv:
    def test_zero_input_zero_bias(self):
        conv = TriplaneConv(4, 4)
        torch.nn.init.zeros_(conv.conv.bias)
        out = aware_conv3d(torch.zeros(3, 4, 8, 8), conv)
        assert torch.allclose(out, torch.zeros_like(out))

    def test_shape_preserved(self):
        conv = TriplaneConv(4, 4)
        t = torch.rand(3, 4, 8, 8)
        assert aware_conv3d(t, conv).shape == t.shape

    def test_cross_plane_information_flow(self):
        # perturbing one XY cell must change XZ and YZ outputs
        torch.manual_seed(0)
        conv = TriplaneConv(2, 2)
        t = torch.rand(3, 2, 8, 8, requires_grad=True)
        out = aware_conv3d(t, conv)
        loss = out[1].sum() + out[2].sum()  # only XZ and YZ outputs
        loss.backward()
        grad_xy = t.grad[0]
        assert grad_xy.abs().sum() > 0


class TestVaeLoss:
    def enc(self, mu, sigma):
        return EncoderOutput(torch.tensor([[[[mu]]]]), torch.tensor([[[[sigma]]]]))

    def test_perfect_predictions_standard_normal(self):
        logits = torch.tensor([20.0, -20.0])
        gt = torch.tensor([1.0, 0.0])
        total, recon, kl = vae_loss(logits, gt, self.enc(0.0, 1.0))
        assert float(total) < 1e-8

    def test_default_lambda(self):
        import inspect

        sig = inspect.signature(vae_loss)
        assert sig.parameters["lambda_kl"].default == 0.025

    def test_closed_form_kl_single_element(self):
        # mu=1, sigma=1, perfect recon -> loss = 0.025 * 0.5
        logits = torch.tensor([30.0])
        gt = torch.tensor([1.0])
        total, recon, kl = vae_loss(logits, gt, self.enc(1.0, 1.0))
        assert np.isclose(float(total), 0.025 * 0.5, atol=1e-9)

    def test_kl_nonnegative_and_zero_iff_standard(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            mu = float(rng.normal())
            sigma = float(np.exp(rng.normal() * 0.5))
            kl = float(kl_divergence(self.enc(mu, sigma)))
            assert kl >= -1e-12
        assert float(kl_divergence(self.enc(0.0, 1.0))) == 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            vae_loss(torch.zeros(3), torch.zeros(4), self.enc(0.0, 1.0))


class TestParameterGradients:
    def test_vae_loss_gradients_match_fd(self):
        torch.manual_seed(7)
        vae = tiny_vae().double()
        pts = (torch.rand(64, 3, dtype=torch.float64) - 0.5)
        queries = (torch.rand(32, 3, dtype=torch.float64) - 0.5)
        gt = (torch.rand(32, dtype=torch.float64) > 0.5).double()

        def compute_loss():
            enc = vae.encode(pts)
            lat = reparameterize(enc, 11)
            logits = vae.decode(lat, queries)
            total, _, _ = vae_loss(logits, gt, enc)
            return total

        loss = compute_loss()
        loss.backward()
        rng = np.random.default_rng(0)
        checked = 0
        for name, p in vae.named_parameters():
            if p.grad is None or p.grad.abs().max() == 0:
                continue
            flat = p.detach().reshape(-1)
            gflat = p.grad.reshape(-1)
            idx = int(rng.integers(flat.numel()))
            h = 1e-5
            with torch.no_grad():
                orig = float(flat[idx])
                flat[idx] = orig + h
                f1 = float(compute_loss())
                flat[idx] = orig - h
                f0 = float(compute_loss())
                flat[idx] = orig
            fd = (f1 - f0) / (2 * h)
            if abs(fd) < 1e-9:
                continue
            rel = abs(float(gflat[idx]) - fd) / abs(fd)
            assert rel < 1e-4, (name, rel)
            checked += 1
        assert checked >= 8


class TestTraining:
    def shape(self):
        return Shape((Primitive(BOX, (0.35, 0.25, 0.45)),))

    def test_descent_on_fixed_shape(self):
        cfg = tiny_cfg(augment=False)
        model, curve = train_vae([self.shape()], cfg, seed=0, steps=60, log_every=59)
        first, last = curve[0][-1], curve[-1][-1]
        assert last < first

    def test_determinism(self):
        cfg = tiny_cfg(augment=False)
        m1, c1 = train_vae([self.shape()], cfg, seed=3, steps=10)
        m2, c2 = train_vae([self.shape()], cfg, seed=3, steps=10)
        for p1, p2 in zip(m1.parameters(), m2.parameters()):
            assert torch.equal(p1, p2)
        assert c1 == c2

    def test_augmentation_changes_batches_only(self):
        cfg_on = tiny_cfg(augment=True)
        cfg_off = tiny_cfg(augment=False)
        bank = ShapeBank([self.shape()], cfg_on.surface_spacing, cfg_on.k_points, seed=0)
        rng1 = np.random.default_rng(0)
        rng2 = np.random.default_rng(0)
        c_on, q_on, l_on = sample_training_batch(bank, 0, cfg_on, rng1)
        c_off, q_off, l_off = sample_training_batch(bank, 0, cfg_off, rng2)
        assert not np.array_equal(c_on, c_off)  # augmented cloud differs
        assert np.array_equal(bank.surfaces[0], ShapeBank([self.shape()], cfg_on.surface_spacing,
                                                          cfg_on.k_points, seed=0).surfaces[0])

    def test_checkpoint_roundtrip(self, tmp_path):
        from trirecon.vae import load_vae

        cfg = tiny_cfg(augment=False)
        path = tmp_path / "vae.ckpt"
        model, _ = train_vae([self.shape()], cfg, seed=0, steps=5, out_path=str(path))
        back = load_vae(str(path))
        for p1, p2 in zip(model.parameters(), back.parameters()):
            assert torch.equal(p1, p2)

"""Layer and forward tests, including a straight-line reference forward."""

import math

import numpy as np
import pytest

from satavit import ModelConfig, forward, random_init
from satavit.modelio import attn_view, embed_view, ffn_view, head_view
from satavit.vit import AttnWeights, EmbedWeights, FfnWeights, ffn, mhsa, patch_embed

EPS = 1e-6  # layer-norm epsilon pinned by the block contract


# ---------------------------------------------------------------------------
# naive reference pieces (loops and math.erf only; no package kernels)


def ref_layer_norm(row, gain, bias):
    n = len(row)
    mu = sum(row) / n
    var = sum((v - mu) ** 2 for v in row) / n
    return [(row[i] - mu) / math.sqrt(var + EPS) * gain[i] + bias[i] for i in range(n)]


def ref_gelu(v):
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def ref_matvec(row, mat, bias):
    cols = len(mat[0])
    return [sum(row[k] * mat[k][c] for k in range(len(row))) + bias[c] for c in range(cols)]


def ref_mhsa(x, w: AttnWeights, heads):
    n = len(x)
    d = len(x[0])
    hd = d // heads
    normed = [ref_layer_norm(r, w.ln_gain, w.ln_bias) for r in x]
    q = [ref_matvec(r, w.wq, w.bq) for r in normed]
    k = [ref_matvec(r, w.wk, w.bk) for r in normed]
    v = [ref_matvec(r, w.wv, w.bv) for r in normed]
    attended = [[0.0] * d for _ in range(n)]
    maps = []
    for h in range(heads):
        lo = h * hd
        amap = []
        for i in range(n):
            logits = [
                sum(q[i][lo + t] * k[j][lo + t] for t in range(hd)) / math.sqrt(hd)
                for j in range(n)
            ]
            mx = max(logits)
            exps = [math.exp(val - mx) for val in logits]
            tot = sum(exps)
            amap.append([e / tot for e in exps])
        maps.append(amap)
        for i in range(n):
            for t in range(hd):
                attended[i][lo + t] = sum(amap[i][j] * v[j][lo + t] for j in range(n))
    proj = [ref_matvec(r, w.wo, w.bo) for r in attended]
    feats = [[x[i][c] + proj[i][c] for c in range(d)] for i in range(n)]
    mean_map = [
        [sum(maps[h][i][j] for h in range(heads)) / heads for j in range(n)]
        for i in range(n)
    ]
    return feats, mean_map


def ref_ffn_delta(x, w: FfnWeights):
    out = []
    for row in x:
        normed = ref_layer_norm(row, w.ln_gain, w.ln_bias)
        hidden = [ref_gelu(v) for v in ref_matvec(normed, w.w1, w.b1)]
        out.append(ref_matvec(hidden, w.w2, w.b2))
    return out


def ref_forward(image, model):
    """Plain-loop forward of the vanilla (stage-off) engine."""
    cfg = model.config
    p, g, d = cfg.patch, cfg.grid, cfg.dim
    ew = embed_view(model)
    tokens = [list(ew.class_token)]
    for br in range(g):
        for bc in range(g):
            vec = []
            for rr in range(p):
                for cc in range(p):
                    for ch in range(cfg.channels):
                        vec.append(float(image[br * p + rr, bc * p + cc, ch]))
            tokens.append(ref_matvec(vec, ew.weight, ew.bias))
    x = [
        [tokens[i][c] + float(ew.pos_embed[i, c]) for c in range(d)]
        for i in range(cfg.num_tokens)
    ]
    for b in range(cfg.depth):
        x, _ = ref_mhsa(x, attn_view(model, b), cfg.heads)
        deltas = ref_ffn_delta(x, ffn_view(model, b))
        x = [[x[i][c] + deltas[i][c] for c in range(d)] for i in range(len(x))]
    hw = head_view(model)
    final = ref_layer_norm(x[0], hw.ln_gain, hw.ln_bias)
    return np.array(ref_matvec(final, hw.weight, hw.bias))


# ---------------------------------------------------------------------------


class TestModelConfig:
    def test_dim_heads_divisibility(self):
        with pytest.raises(ValueError):
            ModelConfig(dim=10, heads=4)

    def test_image_patch_divisibility(self):
        with pytest.raises(ValueError):
            ModelConfig(image=9, patch=4)

    def test_gamma_range(self):
        with pytest.raises(ValueError):
            ModelConfig(gamma=1.5)

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            ModelConfig(alpha=0.0)

    def test_stage_start_rounding(self):
        assert ModelConfig(depth=8, gamma=0.7).sata_start_block == 6
        assert ModelConfig(depth=8, gamma=1.0).sata_start_block == 8
        assert ModelConfig(depth=8, gamma=0.0).sata_start_block == 0

    def test_dict_roundtrip(self):
        cfg = ModelConfig(depth=2, dim=8, heads=2, image=8, patch=4)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            ModelConfig.from_dict({"deptth": 3})


class TestPatchEmbed:
    def _weights(self, cfg, fill=0.0):
        return EmbedWeights(
            weight=np.full((cfg.patch * cfg.patch * cfg.channels, cfg.dim), fill),
            bias=np.zeros(cfg.dim),
            class_token=np.zeros(cfg.dim),
            pos_embed=np.zeros((cfg.num_tokens, cfg.dim)),
        )

    def test_token_count(self):
        cfg = ModelConfig(image=8, patch=4, dim=6, heads=2)
        x = patch_embed(np.zeros((8, 8)), self._weights(cfg), cfg)
        assert x.shape == (5, 6)

    def test_zero_everything_except_class(self):
        cfg = ModelConfig(image=8, patch=4, dim=6, heads=2)
        w = self._weights(cfg)
        w = EmbedWeights(w.weight, w.bias, np.full(cfg.dim, 2.0), w.pos_embed)
        x = patch_embed(np.zeros((8, 8)), w, cfg)
        assert np.array_equal(x[0], np.full(cfg.dim, 2.0))
        assert np.array_equal(x[1:], np.zeros((4, cfg.dim)))

    def test_wrong_image_shape(self):
        cfg = ModelConfig(image=8, patch=4, dim=6, heads=2)
        with pytest.raises(ValueError, match="does not match config"):
            patch_embed(np.zeros((9, 9)), self._weights(cfg), cfg)

    def test_position_embedding_shape_mismatch(self):
        cfg = ModelConfig(image=8, patch=4, dim=6, heads=2)
        w = self._weights(cfg)
        bad = EmbedWeights(w.weight, w.bias, w.class_token,
                           np.zeros((cfg.num_tokens + 1, cfg.dim)))
        with pytest.raises(ValueError, match="position embedding"):
            patch_embed(np.zeros((8, 8)), bad, cfg)

    def test_matches_reference_extraction(self, small_model):
        cfg = small_model.config
        rng = np.random.default_rng(9)
        img = rng.uniform(size=(cfg.image, cfg.image, cfg.channels))
        x = patch_embed(img, embed_view(small_model), cfg)
        ew = embed_view(small_model)
        # token for patch (1, 0): rows 2..3, cols 0..1
        vec = img[2:4, 0:2, :].reshape(-1)
        want = vec @ ew.weight + ew.bias + ew.pos_embed[1 + cfg.grid]
        assert np.allclose(x[1 + cfg.grid], want, atol=1e-12)


class TestMhsa:
    def _rand_weights(self, rng, d):
        return AttnWeights(
            ln_gain=np.ones(d),
            ln_bias=np.zeros(d),
            wq=rng.normal(size=(d, d)),
            bq=rng.normal(size=d),
            wk=rng.normal(size=(d, d)),
            bk=rng.normal(size=d),
            wv=rng.normal(size=(d, d)),
            bv=rng.normal(size=d),
            wo=rng.normal(size=(d, d)),
            bo=rng.normal(size=d),
        )

    def test_single_token_attention(self):
        rng = np.random.default_rng(1)
        w = self._rand_weights(rng, 4)
        out = mhsa(rng.normal(size=(1, 4)), w, heads=2)
        assert np.array_equal(out.mean_attention, [[1.0]])

    def test_zero_qk_gives_uniform_rows(self):
        rng = np.random.default_rng(2)
        w = self._rand_weights(rng, 4)
        w = AttnWeights(w.ln_gain, w.ln_bias, np.zeros((4, 4)), np.zeros(4),
                        np.zeros((4, 4)), np.zeros(4), w.wv, w.bv, w.wo, w.bo)
        out = mhsa(rng.normal(size=(5, 4)), w, heads=2)
        assert np.allclose(out.mean_attention, 1.0 / 5.0, atol=1e-12)

    def test_three_token_fixture_matches_reference(self):
        rng = np.random.default_rng(3)
        d = 4
        w = self._rand_weights(rng, d)
        x = rng.normal(size=(3, d))
        out = mhsa(x, w, heads=2)
        feats, mean_map = ref_mhsa(x.tolist(), w, heads=2)
        assert np.max(np.abs(out.features - feats)) < 1e-9
        assert np.max(np.abs(out.mean_attention - mean_map)) < 1e-9

    def test_rows_stochastic(self):
        rng = np.random.default_rng(4)
        out = mhsa(rng.normal(size=(7, 8)) * 3, self._rand_weights(rng, 8), heads=4)
        assert np.max(np.abs(out.mean_attention.sum(axis=1) - 1.0)) < 1e-6
        assert np.max(np.abs(out.per_head.sum(axis=2) - 1.0)) < 1e-6

    def test_weight_shape_mismatch(self):
        rng = np.random.default_rng(5)
        w = self._rand_weights(rng, 4)
        bad = AttnWeights(w.ln_gain, w.ln_bias, np.zeros((3, 4)), w.bq, w.wk, w.bk,
                          w.wv, w.bv, w.wo, w.bo)
        with pytest.raises(ValueError, match="wq"):
            mhsa(np.zeros((2, 4)), bad, heads=2)


class TestFfn:
    def test_zero_weights_zero_delta(self):
        w = FfnWeights(np.zeros(3), np.zeros(3), np.zeros((3, 6)), np.zeros(6),
                       np.zeros((6, 3)), np.zeros(3))
        out = ffn(np.ones((4, 3)), w)
        assert np.array_equal(out, np.zeros((4, 3)))

    def test_identity_fixture_hand_trace(self):
        # x = [1,-1] is already standardized; identity weights leave the
        # layer-normed row to GELU alone (values frozen from erf)
        w = FfnWeights(np.ones(2), np.zeros(2), np.eye(2), np.zeros(2),
                       np.eye(2), np.zeros(2))
        out = ffn([[1.0, -1.0]], w)
        assert np.allclose(out, [[0.8413442044112441, -0.15865529558913088]], atol=1e-9)

    def test_empty_token_tensor(self):
        w = FfnWeights(np.ones(3), np.zeros(3), np.zeros((3, 6)), np.zeros(6),
                       np.zeros((6, 3)), np.zeros(3))
        out = ffn(np.zeros((0, 3)), w)
        assert out.shape == (0, 3)

    def test_shape_mismatch(self):
        w = FfnWeights(np.ones(3), np.zeros(3), np.zeros((4, 6)), np.zeros(6),
                       np.zeros((6, 3)), np.zeros(3))
        with pytest.raises(ValueError, match="do not chain"):
            ffn(np.zeros((2, 3)), w)

    def test_matches_reference(self):
        rng = np.random.default_rng(6)
        w = FfnWeights(
            ln_gain=rng.normal(size=4) * 0.2 + 1.0,
            ln_bias=rng.normal(size=4) * 0.1,
            w1=rng.normal(size=(4, 8)),
            b1=rng.normal(size=8),
            w2=rng.normal(size=(8, 4)),
            b2=rng.normal(size=4),
        )
        x = rng.normal(size=(5, 4))
        assert np.max(np.abs(ffn(x, w) - ref_ffn_delta(x.tolist(), w))) < 1e-9


class TestForward:
    def test_gamma_one_is_bitwise_vanilla(self, small_model):
        cfg = small_model.config
        img = np.linspace(0, 1, cfg.image * cfg.image).reshape(cfg.image, cfg.image)
        on, _ = forward(img, small_model, cfg=cfg.with_overrides(gamma=1.0))
        off, _ = forward(img, small_model, cfg=cfg.with_overrides(sata_enabled=False))
        assert np.array_equal(on, off)

    def test_deterministic(self, small_model):
        cfg = small_model.config
        rng = np.random.default_rng(13)
        img = rng.uniform(size=(cfg.image, cfg.image, 1))
        a, _ = forward(img, small_model)
        b, _ = forward(img, small_model)
        assert np.array_equal(a, b)

    def test_two_block_fixture_matches_naive_reference(self):
        cfg = ModelConfig(depth=2, dim=8, heads=2, patch=2, image=4, num_classes=3,
                          sata_enabled=False)
        model = random_init(cfg, seed=99)
        rng = np.random.default_rng(14)
        img = rng.uniform(size=(4, 4, 1))
        got, traces = forward(img, model)
        want = ref_forward(img, model)
        assert np.max(np.abs(got - want)) < 1e-8
        assert len(traces) == 2

    def test_token_count_into_head_constant(self, small_model):
        cfg = small_model.config
        img = np.zeros((cfg.image, cfg.image))
        _, traces = forward(img, small_model, capture_streams=True)
        for tr in traces:
            assert tr.x_post.shape[0] == cfg.num_tokens

    def test_attention_rows_stochastic_every_block(self, small_model):
        cfg = small_model.config
        img = np.linspace(0, 1, cfg.image * cfg.image).reshape(cfg.image, cfg.image)
        x = patch_embed(img[:, :, None], embed_view(small_model), cfg)
        for b in range(cfg.depth):
            out = mhsa(x, attn_view(small_model, b), cfg.heads)
            assert np.max(np.abs(out.mean_attention.sum(axis=1) - 1.0)) < 1e-6
            x = out.features + ffn(out.features, ffn_view(small_model, b))

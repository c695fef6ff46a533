import numpy as np
import pytest

from stylediff.attention import (AttentionRecord, compute_attention, mask_channel,
                                 saliency_mask)
from stylediff.numerics import Rng, gaussian


def _random_record(seed=0, heads=2, h=3, w=3, c=6, d=4):
    rng = Rng(seed)
    x = gaussian(rng, (h * w, c))
    wq = gaussian(rng, (heads, c, d))
    wk = gaussian(rng, (heads, c, d))
    return compute_attention(x, wq, wk, h, w)


class TestComputeAttention:
    def test_zero_features_give_uniform(self):
        rng = Rng(1)
        rec = compute_attention(np.zeros((6, 4)), gaussian(rng, (2, 4, 3)),
                                gaussian(rng, (2, 4, 3)), 2, 3)
        assert np.allclose(rec.a, 1.0 / 6.0)

    def test_rows_sum_to_one(self):
        rec = _random_record(7)
        assert np.abs(rec.a.sum(axis=2) - 1.0).max() < 1e-6
        assert (rec.a > 0).all() and (rec.a < 1).all()

    def test_hand_set_projection_oracle(self):
        # 2x2 feature map, one head: independent exp/sum softmax recomputation
        x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, -0.5]])
        wq = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        wk = np.array([[[0.0, 1.0], [1.0, 0.0]]])
        rec = compute_attention(x, wq, wk, 2, 2)
        scores = (x @ wq[0]) @ (x @ wk[0]).T / np.sqrt(2.0)
        e = np.exp(scores)
        want = e / e.sum(axis=1, keepdims=True)
        assert np.abs(rec.a[0] - want).max() < 1e-9

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            compute_attention(np.zeros((4, 3)), np.zeros((1, 5, 2)), np.zeros((1, 5, 2)), 2, 2)
        with pytest.raises(ValueError):
            compute_attention(np.zeros((5, 3)), np.zeros((1, 3, 2)), np.zeros((1, 3, 2)), 2, 2)


class TestSaliencyMask:
    def test_uniform_attention_empty_mask(self):
        # every patch receives exactly the mean, strict > keeps none
        rec = AttentionRecord(np.full((2, 4, 4), 0.25), 2, 2, 3)
        m = saliency_mask(rec)
        assert m.m.shape == (2, 2)
        assert np.all(m.m == 0.0)
        assert m.psi == pytest.approx(0.25)

    def test_direct_thresholding(self):
        # per-patch saliency [0.1, 0.2, 0.3, 0.4], psi = 0.25 -> [0, 0, 1, 1]
        row = np.array([0.1, 0.2, 0.3, 0.4])
        rec = AttentionRecord(np.tile(row, (1, 4, 1)), 2, 2, 3)
        m = saliency_mask(rec)
        assert m.psi == pytest.approx(0.25)
        assert np.array_equal(m.m.ravel(), [0, 0, 1, 1])

    def test_nonconstant_saliency_mixed_mask(self):
        rec = _random_record(3)
        m = saliency_mask(rec).m
        assert 0 < m.sum() < m.size

    def test_psi_equals_mean_saliency(self):
        rec = _random_record(9)
        s = rec.a.mean(axis=(0, 1))
        assert saliency_mask(rec).psi == pytest.approx(s.mean())

    def test_head_permutation_invariance(self):
        rec = _random_record(11, heads=3)
        permuted = AttentionRecord(rec.a[[2, 0, 1]], rec.height, rec.width, rec.head_dim)
        assert np.array_equal(saliency_mask(rec).m, saliency_mask(permuted).m)

    def test_mask_is_pure_function_of_record(self):
        rec = _random_record(13)
        assert np.array_equal(saliency_mask(rec).m, saliency_mask(rec).m)

    def test_mask_channel_shape(self):
        rec = _random_record(15, h=4, w=5)
        ch = mask_channel(rec)
        assert ch.shape == (1, 4, 5)
        assert set(np.unique(ch)) <= {0.0, 1.0}


class TestRecordValidation:
    def test_rejects_mismatched_dims(self):
        with pytest.raises(ValueError):
            AttentionRecord(np.zeros((1, 4, 5)), 2, 2, 3)
        with pytest.raises(ValueError):
            AttentionRecord(np.zeros((1, 4, 4)), 2, 3, 3)

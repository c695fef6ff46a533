import numpy as np
import pytest

from stylediff.dataset import STYLE_TOKENS, apply_style, build_dataset
from stylediff.metrics import (fit_embedder, frame_accuracy, prompt_consistency,
                               temporal_consistency)
from stylediff.numerics import Rng, gaussian

# Reference values reported for the real pretrained-embedding evaluation:
# temporal consistency 0.987, prompt consistency 0.304, frame accuracy 0.983.
# They depend on that embedding and are quoted for documentation only; the
# toy embedder's absolute numbers are not comparable, so every assertion
# below is paired or directional.


@pytest.fixture(scope="module")
def emb():
    return fit_embedder(n_probe=12)


@pytest.fixture(scope="module")
def corpus():
    return build_dataset(6, Rng(555), size=32, frames=4)


class _ParallelStub:
    """Duck-typed embedder whose image and text embeddings are collinear."""

    def image_embed(self, frame):
        return np.array([2.0, 4.0, 6.0])

    def text_embed(self, token):
        return np.array([1.0, 2.0, 3.0])


class TestTemporalConsistency:
    def test_constant_video_is_one(self, emb, corpus):
        seq = np.repeat(corpus.videos[0][:1], 3, axis=0)
        assert temporal_consistency(seq, emb) == pytest.approx(1.0)

    def test_matches_bruteforce_recomputation(self, emb, corpus):
        seq = corpus.videos[1]
        e = [emb.image_embed(f) for f in seq]
        want = np.mean([
            e[i] @ e[i + 1] / (np.linalg.norm(e[i]) * np.linalg.norm(e[i + 1]))
            for i in range(len(e) - 1)
        ])
        assert temporal_consistency(seq, emb) == pytest.approx(want, abs=1e-12)

    def test_single_frame_rejected(self, emb, corpus):
        with pytest.raises(ValueError):
            temporal_consistency(corpus.videos[0][:1], emb)

    def test_order_sensitivity(self, emb, corpus):
        # frame order changes adjacency, so the metric can change
        a, b = corpus.videos[0], corpus.videos[2]
        seq = np.stack([a[0], a[3], b[0], b[3]])
        shuffled = seq[[0, 2, 1, 3]]
        assert temporal_consistency(seq, emb) != pytest.approx(
            temporal_consistency(shuffled, emb))


class TestPromptConsistency:
    def test_parallel_embeddings_give_one(self, corpus):
        assert prompt_consistency(corpus.videos[0], "invert", _ParallelStub()) == pytest.approx(1.0)

    def test_unknown_style_rejected(self, emb, corpus):
        with pytest.raises(KeyError):
            prompt_consistency(corpus.videos[0], "neon", emb)

    def test_styled_beats_unstyled_corpus_mean(self, emb, corpus):
        # paired evaluation over the corpus; the identity token is a tie
        for tok in STYLE_TOKENS:
            styled = np.mean([
                prompt_consistency(apply_style(v, tok), tok, emb) for v in corpus.videos])
            unstyled = np.mean([
                prompt_consistency(v, tok, emb) for v in corpus.videos])
            if tok == "plain":
                assert styled == pytest.approx(unstyled)
            else:
                assert styled > unstyled


class TestFrameAccuracy:
    def test_identity_is_one(self, emb, corpus):
        v = corpus.videos[0]
        assert frame_accuracy(v, v, emb) == pytest.approx(1.0)

    def test_noised_output_scores_lower(self, emb, corpus):
        v = corpus.videos[0]
        noisy = np.clip(v + gaussian(Rng(9), v.shape) * 0.3, 0, 1)
        assert frame_accuracy(v, noisy, emb) < frame_accuracy(v, v, emb)

    def test_length_mismatch(self, emb, corpus):
        with pytest.raises(ValueError):
            frame_accuracy(corpus.videos[0], corpus.videos[0][:2], emb)

    def test_joint_permutation_invariance(self, emb, corpus):
        a = corpus.videos[0]
        b = apply_style(a, "warm")
        perm = [2, 0, 3, 1]
        assert frame_accuracy(a, b, emb) == pytest.approx(
            frame_accuracy(a[perm], b[perm], emb), abs=1e-12)


class TestEmbedder:
    def test_text_embedding_in_image_space(self, emb):
        assert emb.text_embed("warm").shape == (emb.dim,)
        assert emb.text_embed(3).shape == (emb.dim,)
        with pytest.raises(KeyError):
            emb.text_embed(11)

    def test_metrics_bounded(self, emb, corpus):
        v = corpus.videos[3]
        s = apply_style(v, "stripes")
        vals = [temporal_consistency(s, emb), prompt_consistency(s, "stripes", emb),
                frame_accuracy(v, s, emb)]
        assert all(-1.0 <= x <= 1.0 for x in vals)

    def test_calibration_deterministic(self):
        a = fit_embedder(n_probe=3)
        b = fit_embedder(n_probe=3)
        assert np.array_equal(a.projection, b.projection)
        assert np.array_equal(a.center, b.center)

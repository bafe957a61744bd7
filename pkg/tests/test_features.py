import math

import numpy as np
import pytest

from propspan.corpus import MemeRecord
from propspan.features import (EnsembleSpec, HiddenLayerExtractor, MissingModalityError, TokenFeaturizer,
                               VisualExtractor, VisualFeatureStore, cosine, ensemble_featurize,
                               extractor_from_config, extractor_to_config, featurize_text, fit_text_featurizer,
                               pool_visual_features, synth_visual_features)
from propspan.model import MlpHead, TrainConfig, train
from propspan.synthetic import conjunctive_multimodal_splits

DOCS = ["they lie about everything", "make it great again", "what a clown", "lie lie lie"]


def test_single_document_idf_all_equal():
    f = fit_text_featurizer(["only one document here"])
    assert np.all(f.idf == f.idf[0])


def test_fit_is_deterministic():
    a, b = fit_text_featurizer(DOCS, seed=3), fit_text_featurizer(DOCS, seed=3)
    assert np.array_equal(a.idf, b.idf) and a.state_hash() == b.state_hash()
    assert fit_text_featurizer(DOCS, seed=4).state_hash() != a.state_hash()


def test_idf_half_the_documents():
    f = fit_text_featurizer(["apple", "pear"])
    b_apple = f.bucket_of("w:apple")
    assert b_apple not in f.buckets("pear")
    assert f.idf[b_apple] == pytest.approx(math.log(2), abs=1e-15)


def test_fit_rejects_empty_corpus():
    with pytest.raises(ValueError):
        fit_text_featurizer([])


def test_featurizer_is_frozen():
    f = fit_text_featurizer(DOCS)
    with pytest.raises(ValueError):
        f.idf[0] = 1.0


def test_empty_text_zero_vector():
    f = fit_text_featurizer(DOCS)
    v = featurize_text(f, "")
    assert v.shape == (256,) and not v.any()


@pytest.mark.parametrize("text", ["x", "they lie", "ünïcode ☕ words", "lie lie lie", "completely unseen tokens"])
def test_nonempty_text_unit_norm(text):
    f = fit_text_featurizer(DOCS)
    assert np.linalg.norm(featurize_text(f, text)) == pytest.approx(1.0, abs=1e-9)


def enumerate_grams(text):
    """Independent spelling-out of the n-gram scheme: word 1-2 grams, char 3-5 grams in padded words."""
    words = text.lower().split()
    grams = ["w:" + w for w in words]
    grams += ["w:" + a + " " + b for a, b in zip(words, words[1:])]
    for w in words:
        p = " " + w + " "
        grams += ["c:" + p[i:i + n] for n in (3, 4, 5) for i in range(len(p) - n + 1)]
    return grams


def test_word_order_cosine_against_enumeration():
    f = fit_text_featurizer(["a b", "b c", "c a", "a a"])

    def oracle(text):
        v = {}
        for g in enumerate_grams(text):
            b = f.bucket_of(g)
            v[b] = v.get(b, 0.0) + 1.0 + f.idf[b]
        return v

    u, w = oracle("a b"), oracle("b a")
    dot = sum(u[k] * w.get(k, 0.0) for k in u)
    expected = dot / math.sqrt(sum(x * x for x in u.values()) * sum(x * x for x in w.values()))
    got = cosine(featurize_text(f, "a b"), featurize_text(f, "b a"))
    assert got == pytest.approx(expected, abs=1e-12)
    assert got < 1.0
    # only the bigram differs
    assert sorted(enumerate_grams("a b"))[:-1] != [] and set(enumerate_grams("a b")) ^ set(enumerate_grams("b a")) \
        == {"w:a b", "w:b a"}


def test_pool_identical_regions():
    v = np.array([3.0, 4.0, 0.0])
    store = VisualFeatureStore({"k": np.tile(v, (36, 1))}, regions=36, dv=3)
    assert np.allclose(pool_visual_features(store, "k"), [0.6, 0.8, 0.0])


def test_pool_zero_mean_skips_norm():
    mat = np.vstack([np.ones((18, 4)), -np.ones((18, 4))])
    store = VisualFeatureStore({"k": mat}, regions=36, dv=4)
    assert not pool_visual_features(store, "k").any()


def test_pool_random_matches_loop(rng):
    mat = rng.standard_normal((36, 8))
    store = VisualFeatureStore({"k": mat}, regions=36, dv=8)
    means = []
    for j in range(8):
        s = 0.0
        for i in range(36):
            s += mat[i, j]
        means.append(s / 36)
    norm = math.sqrt(sum(m * m for m in means))
    assert np.allclose(pool_visual_features(store, "k"), [m / norm for m in means], atol=1e-12)


def test_pool_missing_key_names_record():
    store = VisualFeatureStore(regions=2, dv=2)
    with pytest.raises(MissingModalityError, match="meme-42"):
        pool_visual_features(store, "nope.png", record_id="meme-42")


def test_store_shape_invariant():
    store = VisualFeatureStore(regions=36, dv=4)
    with pytest.raises(ValueError):
        store.add("k", np.zeros((35, 4)))


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_store_round_trip(tmp_path, rng, suffix):
    store = VisualFeatureStore({f"k{i}": rng.standard_normal((5, 3)).astype(np.float32) for i in range(4)},
                               regions=5, dv=3)
    store.save(tmp_path / f"s{suffix}")
    again = VisualFeatureStore.load(tmp_path / f"s{suffix}")
    assert (again.regions, again.dv) == (5, 3)
    for k in store.keys():
        assert np.array_equal(again.get(k), store.get(k))
    assert again.state_hash() == store.state_hash()


def test_synth_deterministic_and_shaped():
    a = synth_visual_features("img.png", dv=8, regions=36, seed=1)
    assert a.shape == (36, 8)
    assert np.array_equal(a, synth_visual_features("img.png", dv=8, regions=36, seed=1))
    assert not np.array_equal(a, synth_visual_features("img.png", dv=8, regions=36, seed=2))


def test_synth_no_collisions_over_1000_keys():
    seen = {synth_visual_features(f"meme_{i}.png", dv=4, regions=2).tobytes() for i in range(1000)}
    assert len(seen) == 1000


class _Const:
    name = "const"

    def __init__(self, dim, value):
        self.dim, self.value = dim, value

    def featurize(self, record):
        return np.full(self.dim, self.value)

    def state_hash(self):
        return "const"


def _records():
    return [MemeRecord("1", "they lie", image="a.png"), MemeRecord("2", "what a clown", image="b.png")]


def test_ensemble_dims_and_slices():
    text = fit_text_featurizer(DOCS)
    vis = VisualExtractor(VisualFeatureStore(regions=36, dv=64, synthetic_seed=0))
    spec = EnsembleSpec((text, vis))
    assert spec.dim == 320
    for rec in _records():
        v = ensemble_featurize(spec, rec)
        assert v.shape == (320,)
        assert np.array_equal(v[:256], featurize_text(text, rec.text))
        for member, sl in zip(spec.members, spec.slices()):
            assert np.array_equal(v[sl], member.featurize(rec))


def test_single_member_ensemble_is_identity():
    text = fit_text_featurizer(DOCS)
    for rec in _records():
        assert np.array_equal(ensemble_featurize(EnsembleSpec((text,)), rec), text.featurize(rec))


def test_ensemble_order_matters():
    a, b = _Const(2, 1.0), _Const(3, 2.0)
    rec = _records()[0]
    assert ensemble_featurize(EnsembleSpec((a, b)), rec).tolist() == [1, 1, 2, 2, 2]
    assert ensemble_featurize(EnsembleSpec((b, a)), rec).tolist() == [2, 2, 2, 1, 1]


def test_ensemble_missing_modality():
    vis = VisualExtractor(VisualFeatureStore(regions=2, dv=2, synthetic_seed=0))
    with pytest.raises(MissingModalityError, match="'x'"):
        ensemble_featurize(EnsembleSpec((vis,)), MemeRecord("x", "no image"))


def test_token_featurizer_specials_zero_and_deterministic():
    tf = TokenFeaturizer(dim=64)
    tok, feats = tf.featurize(MemeRecord("1", "they lie about everything"))
    assert feats.shape == (len(tok), 64)
    assert not feats[tok.special_mask].any()
    assert np.allclose(np.linalg.norm(feats[~tok.special_mask], axis=1), 1.0)
    assert np.array_equal(feats, tf.featurize(MemeRecord("1", "they lie about everything"))[1])


def test_extractors_unchanged_by_training():
    splits, store = conjunctive_multimodal_splits(60, 20, 0, dv=4, seed=3)
    text = fit_text_featurizer(splits["train"], dim=32)
    spec = EnsembleSpec((text, VisualExtractor(store)))
    before = spec.state_hash()
    train(splits["train"], splits["dev"], spec, TrainConfig(learning_rate=1e-2, max_epochs=3, seed=0))
    assert spec.state_hash() == before


def test_extractor_config_round_trip(tmp_path):
    splits, store = conjunctive_multimodal_splits(20, 5, 0, dv=4, seed=1)
    store.save(tmp_path / "v.npz")
    loaded = VisualFeatureStore.load(tmp_path / "v.npz")
    text = fit_text_featurizer(splits["train"], dim=32)
    head = MlpHead.init(32, 1, 8, rng=np.random.default_rng(0))
    spec = EnsembleSpec((text, VisualExtractor(loaded, str(tmp_path / "v.npz")), HiddenLayerExtractor(text, head)))
    again = extractor_from_config(extractor_to_config(spec))
    for rec in splits["train"].records:
        assert np.array_equal(again.featurize(rec), spec.featurize(rec))
    assert again.dim == 32 + 4 + 8

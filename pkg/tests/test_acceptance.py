"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line."""

import json
import math
import random
import time

import numpy as np
import pytest

from propspan.corpus import LabeledSpan
from propspan.eval import LabelPrediction, SpanPrediction, micro_f1, modality_split_f1, span_partial_f1
from propspan.features import EnsembleSpec, VisualExtractor, fit_text_featurizer
from propspan.model import (TrainedModel, bce_loss, compute_class_weights, loss_gradient, predict_labels,
                            sigmoid, train, weighted_bce_loss)
from propspan.pipeline import default_config, evaluate, run_seeds
from propspan.spans import (ChunkTokenizer, merge_adjacent_spans, merge_tokens_to_words, project_spans_to_tokens,
                            tokenize_with_offsets, words_to_char_spans)
from propspan.synthetic import (FILLER, conjunctive_multimodal_splits, imbalanced_binary_splits,
                                planted_label_splits)

SEEDS = list(range(10))


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def _loop_loss(x, y, p):
    total = 0.0
    for i in range(len(x)):
        for k in range(len(x[i])):
            xc = min(max(x[i][k], 1e-7), 1 - 1e-7)
            total += p[k] * y[i][k] * math.log(xc) + (1 - y[i][k]) * math.log(1 - xc)
    return -total / (len(x) * len(x[0]))


def test_1_weighted_bce_fidelity(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, exact_p1 = 0.0, True
    for _ in range(1000):
        n, d = int(rng.integers(1, 17)), int(rng.integers(1, 11))
        x = rng.uniform(0, 1, (n, d))
        y = (rng.random((n, d)) < 0.4).astype(float)
        p = rng.uniform(0.05, 20, d)
        worst = max(worst, abs(weighted_bce_loss(x, y, p) - _loop_loss(x, y, p)))
        exact_p1 &= weighted_bce_loss(x, y, np.ones(d)) == bce_loss(x, y)
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-12 and exact_p1 and dt < 5,
           f"max |vectorised - loop| = {worst:.2e} (tol 1e-12), p=1 exact: {exact_p1}, {dt:.2f}s (< 5s)")


def test_2_gradient_check(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst, n_checked, n_masked = 0.0, 0, 0
    h = 1e-5
    while n_checked < 400:
        n, d = int(rng.integers(2, 9)), int(rng.integers(1, 6))
        z = rng.normal(0, 2, (n, d))
        y = (rng.random((n, d)) < 0.4).astype(float)
        p = rng.uniform(0.1, 10, d)
        mask = rng.random(n) < 0.25
        mask[0] = False
        g = loss_gradient(sigmoid(z), y, p, mask)
        for idx in np.ndindex(*z.shape):
            old = z[idx]
            z[idx] = old + h
            up = weighted_bce_loss(sigmoid(z), y, p, mask)
            z[idx] = old - h
            down = weighted_bce_loss(sigmoid(z), y, p, mask)
            z[idx] = old
            num = (up - down) / (2 * h)
            if mask[idx[0]]:
                n_masked += 1
                err = 0.0 if (g[idx] == 0.0 and num == 0.0) else math.inf
            else:
                err = abs(g[idx] - num) / max(abs(num), abs(g[idx]), 1e-8)
            worst = max(worst, err)
            n_checked += 1
    dt = time.perf_counter() - t0
    report(2, worst < 1e-4 and n_masked > 0 and dt < 10,
           f"max relative error {worst:.2e} (< 1e-4) over {n_checked} entries, {n_masked} masked, {dt:.2f}s")


def test_3_class_weights(report):
    # |K| = 20, hand-computed (20 - f) / f
    f = [1, 4, 5, 10, 16]
    expected = [19.0, 4.0, 3.0, 1.0, 0.25]
    got = compute_class_weights(f, 20).weights.tolist()
    balanced = compute_class_weights([5], 10).weights.tolist()
    report(3, got == expected and balanced == [1.0], f"weights {got} vs {expected}; balanced {balanced}")


def _fuzz_record(r):
    n = r.randint(0, 14)
    words = [r.choice(FILLER) * r.randint(1, 3) for _ in range(n)]
    seps = [r.choice([" ", "  ", "\t", "\n "]) for _ in range(max(n - 1, 0))]
    lead, trail = r.choice(["", " "]), r.choice(["", "  "])
    text, starts, ends = lead, [], []
    for i, w in enumerate(words):
        starts.append(len(text))
        text += w
        ends.append(len(text))
        if i < n - 1:
            text += seps[i]
    text += trail
    spans = []
    for label in "ABC":
        i = 0
        while i < n:
            if r.random() < 0.3:
                j = min(n, i + r.randint(1, 3))
                spans.append(LabeledSpan(starts[i], ends[j - 1], label))
                i = j + r.randint(0, 1)
            else:
                i += 1
    return text, spans


def test_4_span_round_trip(report):
    r = random.Random(4)
    labels = ["A", "B", "C"]
    t0 = time.perf_counter()
    failures, special_hits = 0, 0
    for _ in range(1000):
        text, spans = _fuzz_record(r)
        tok = tokenize_with_offsets(text, ChunkTokenizer(chunk_size=r.choice([2, 3, 4])))
        m = project_spans_to_tokens(spans, tok, labels)
        special_hits += int(m[tok.special_mask].any())
        back = words_to_char_spans(merge_tokens_to_words(m, tok), tok, labels)
        expected = []
        for name in labels:
            expected += merge_adjacent_spans([s for s in spans if s.technique == name], text)
        failures += sorted(back) != sorted(expected)
    dt = time.perf_counter() - t0
    report(4, failures == 0 and special_hits == 0 and dt < 10,
           f"{failures} round-trip failures, {special_hits} labeled special tokens over 1000 texts, {dt:.2f}s")


def test_5_span_f1(report):
    L = "Doubt"
    half = span_partial_f1([SpanPrediction("1", (LabeledSpan(0, 5, L),), (LabeledSpan(0, 10, L),))])
    gold = (LabeledSpan(0, 4, L), LabeledSpan(6, 9, L), LabeledSpan(2, 8, "Smears"))
    ident = span_partial_f1([SpanPrediction("1", gold, gold)])
    mismatch = span_partial_f1([SpanPrediction("1", (LabeledSpan(0, 10, "Smears"),), (LabeledSpan(0, 10, L),))])
    r = random.Random(5)
    names = ["A", "B", "C", "D"]
    lp, sp = [], []
    for i in range(50):
        pred = {x for x in names if r.random() < 0.3}
        gold_l = {x for x in names if r.random() < 0.3}
        length = r.randint(1, 40)
        lp.append(LabelPrediction(str(i), pred, gold_l))
        sp.append(SpanPrediction(str(i), tuple(LabeledSpan(0, length, x) for x in sorted(pred)),
                                 tuple(LabeledSpan(0, length, x) for x in sorted(gold_l))))
    gap = abs(span_partial_f1(sp) - micro_f1(lp))
    ok = abs(half - 2 / 3) <= 1e-9 and ident == 1.0 and mismatch == 0.0 and gap <= 1e-9
    report(5, ok, f"half={half:.10f} (2/3), identity={ident}, mismatch={mismatch}, "
                  f"record-granularity gap={gap:.1e}")


def _checkpoint_bytes(task, vocab, featurizer, res, cfg):
    return json.dumps(TrainedModel(task, vocab, featurizer, res.head, cfg).to_json(), sort_keys=True)


def test_6_training_protocol(report):
    t0 = time.perf_counter()
    s = planted_label_splits(200, 50, n_labels=5, seed=6)
    f = fit_text_featurizer(s["train"])
    cfg = default_config("a", seed=0)
    a = train(s["train"], s["dev"], f, cfg)
    b = train(s["train"], s["dev"], f, cfg)
    same = _checkpoint_bytes(s["train"].task, s["train"].vocabulary, f, a, cfg) == \
        _checkpoint_bytes(s["train"].task, s["train"].vocabulary, f, b, cfg)
    dev = micro_f1([LabelPrediction(r.id, predict_labels(a.head, f, r, s["dev"].vocabulary), r.labels)
                    for r in s["dev"].records])
    dt = time.perf_counter() - t0
    ok = dev >= 0.95 and len(a.log) <= 200 and same and dt < 60
    report(6, ok, f"dev micro-F1 {dev:.4f} (>= 0.95) at epoch {a.best_epoch}/{len(a.log)} "
                  f"(batch {cfg.batch_size}, {cfg.optimizer}, lr {cfg.learning_rate}), "
                  f"bit-identical checkpoints: {same}, {dt:.1f}s (< 60s)")


def _minority_recall(head, f, ds):
    name = ds.vocabulary.names[0]
    pos = [r for r in ds.records if name in r.labels]
    hits = sum(name in predict_labels(head, f, r, ds.vocabulary, 0.5) for r in pos)
    return hits / len(pos)


def test_7_imbalance_effect(report):
    t0 = time.perf_counter()
    weighted, plain = [], []
    for seed in SEEDS:
        s = imbalanced_binary_splits(seed=seed)
        f = fit_text_featurizer(s["train"])
        for flag, out in ((True, weighted), (False, plain)):
            cfg = default_config("a", seed=seed, patience=20, class_weighted=flag)
            res = train(s["train"], s["dev"], f, cfg)
            out.append(_minority_recall(res.head, f, s["test"]))
    dt = time.perf_counter() - t0
    mw, mu = float(np.mean(weighted)), float(np.mean(plain))
    report(7, mw >= mu and dt < 120,
           f"mean minority recall weighted {mw:.3f} >= unweighted {mu:.3f} over {len(SEEDS)} seeds, {dt:.1f}s")


def test_8_ensemble_benefit(report):
    t0 = time.perf_counter()
    scores = {"text": [], "visual": [], "ensemble": []}
    for seed in SEEDS:
        s, store = conjunctive_multimodal_splits(seed=seed)
        text = fit_text_featurizer(s["train"])
        visual = VisualExtractor(store)
        for kind, feat in (("text", text), ("visual", visual), ("ensemble", EnsembleSpec((text, visual)))):
            cfg = default_config("c", ensemble=kind == "ensemble", seed=seed)
            res = train(s["train"], s["dev"], feat, cfg)
            preds = [LabelPrediction(r.id, predict_labels(res.head, feat, r, s["test"].vocabulary), r.labels)
                     for r in s["test"].records]
            scores[kind].append(micro_f1(preds))
    dt = time.perf_counter() - t0
    m = {k: float(np.mean(v)) for k, v in scores.items()}
    ok = m["ensemble"] >= 0.90 and m["text"] <= 0.70 and m["visual"] <= 0.70 and dt < 180
    report(8, ok, f"mean test micro-F1 over {len(SEEDS)} seeds: ensemble {m['ensemble']:.3f} (>= 0.90), "
                  f"text {m['text']:.3f}, visual {m['visual']:.3f} (<= 0.70), {dt:.1f}s")


def _brute_modality(gold_a, gold_c, pred):
    counts = {"t": [0, 0, 0], "v": [0, 0, 0]}
    for rid in gold_c:
        for x in set(gold_c[rid]) | set(pred[rid]):
            pool = "v" if x in gold_c[rid] and x not in gold_a[rid] else "t"
            p, g = x in pred[rid], x in gold_c[rid]
            if pool == "v" and not g:
                continue
            c = counts[pool]
            c[0] += p and g
            c[1] += p and not g
            c[2] += g and not p
    return tuple(1.0 if sum(c) == 0 else 2 * c[0] / (2 * c[0] + c[1] + c[2]) for c in (counts["t"], counts["v"]))


def test_9_modality_split(report):
    gold_a = {"r1": {"L1"}, "r2": {"L3"}, "r3": set(), "r4": {"L2"}}
    gold_c = {"r1": {"L1", "L2"}, "r2": {"L3"}, "r3": {"L4"}, "r4": {"L2", "L5"}}
    pred = {"r1": {"L1", "L2"}, "r2": {"L1"}, "r3": set(), "r4": {"L2", "L5", "L3"}}
    got = modality_split_f1(gold_a, gold_c, pred)
    oracle = _brute_modality(gold_a, gold_c, pred)
    vac_t, vac_v = modality_split_f1(gold_c, gold_c, pred)
    plain = micro_f1([LabelPrediction(k, pred[k], gold_c[k]) for k in gold_c])
    ok = got == oracle and vac_v == 1.0 and vac_t == plain
    report(9, ok, f"(textual, visual) = {got} vs oracle {oracle}; gold_A = gold_C gives visual {vac_v}, "
                  f"textual {vac_t} = micro {plain}")


def test_10_multi_seed_summary(report):
    t0 = time.perf_counter()
    s = planted_label_splits(200, 50, 50, n_labels=5, seed=10)
    cfg = default_config("a", patience=20)
    independent = {}

    def check(seed, model, result):
        independent[seed] = (result.best_dev_metric, evaluate(model, s["test"])["micro_f1"])

    summary = run_seeds(s["train"], s["dev"], s["test"], cfg, SEEDS, on_model=check)
    stored = json.loads(json.dumps(summary.to_json()))
    ok = True
    for split in ("dev", "test"):
        vals = stored["values"][split]
        m = math.fsum(vals) / len(vals)
        sd = math.sqrt(math.fsum((v - m) ** 2 for v in vals) / len(vals))
        ok &= abs(stored["mean"][split] - m) <= 1e-12 and abs(stored["std"][split] - sd) <= 1e-12
    ok &= stored["values"]["dev"] == [independent[k][0] for k in SEEDS]
    ok &= stored["values"]["test"] == [independent[k][1] for k in SEEDS]
    band = stored["mean"]["dev"] >= 0.95 and stored["std"]["dev"] <= 0.03
    dt = time.perf_counter() - t0
    report(10, ok and band,
           f"dev {stored['mean']['dev']:.4f} ± {stored['std']['dev']:.4f}, test {stored['mean']['test']:.4f} "
           f"± {stored['std']['test']:.4f} over {len(SEEDS)} seeds; recomputed from per-seed values: {ok}; "
           f"best-dev checkpoint scored on test; {dt:.1f}s")

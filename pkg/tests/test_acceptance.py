"""Release acceptance gate.

Eight binding criteria, one test each, every tolerance stated inline:

  1  gradient fidelity      analytic vs central differences, <= 1e-4
  2  oracle equivalence     five core ops vs straight-line oracles, <= 1e-10
  3  algebraic invariants   exact identities and normalizations
  4  emphasis detection     planted word found in >= 95 of 100 trials
  5  dsp oracles            frame energy vs direct DFT; tone pitch +-3 Hz
  6  trend reproduction     full model >= 0.85 CCC; ablating the extended
                            channel hurts dominance, leaves arousal alone
  7  parser robustness      200 random grid round-trips; typed errors
  8  determinism            bitwise-equal checkpoints and reports

Each test prints one `ACCEPTANCE <n> ...: PASS|FAIL` line (visible with
pytest -s; pytest -v mirrors the same verdicts as test outcomes).
"""

import json
import math
import time

import numpy as np
import pytest

from msfser.cli import main
from msfser.dsp import (
    AudioBuffer,
    FrameConfig,
    estimate_f0,
    frame_signal,
    stft_energy,
)
from msfser.errors import (
    MalformedHeader,
    NonMonotoneIntervals,
    TextGridError,
    TruncatedFile,
)
from msfser.lemf import LemfConfig, run_lemf
from msfser.model import (
    ModelConfig,
    MsfSerModel,
    TrainConfig,
    UttExample,
    attentive_pool,
    evaluate,
    film_modulate,
    gated_fuse,
    make_batch,
    moe_combine,
    train_model,
)
from msfser.numcore import ccc, grad_check, seeded_rng, softmax
from msfser.synth import (
    SynthConfig,
    generate_dataset,
    load_examples,
    make_emphasis_case,
)
from msfser.textgrid import Interval, TextGrid, Tier, parse_textgrid, serialize_textgrid


class report:
    """Context manager printing one PASS/FAIL line per criterion."""

    def __init__(self, num, name):
        self.num, self.name = num, name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        print(f"ACCEPTANCE {self.num} ({self.name}): {verdict}")
        return False


def max_rel(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-10)
    return float(np.abs(a - b).max() / scale)


# ---------------------------------------------------------- criterion 1

def random_examples(n, cfg, seed):
    rng = seeded_rng(seed)
    out = []
    for i in range(n):
        frames = rng.standard_normal((int(rng.integers(6, 11)),
                                      cfg.acoustic_dim)) * 0.5
        out.append(UttExample(
            f"u{i}", frames,
            rng.standard_normal(cfg.les_dim),
            rng.standard_normal(cfg.gs_dim),
            rng.standard_normal(cfg.es_dim),
            rng.standard_normal(3)))
    return out


def test_c1_gradient_fidelity():
    with report(1, "gradient fidelity"):
        start = time.monotonic()
        cfg = ModelConfig(acoustic_dim=11, les_dim=16, gs_dim=16, es_dim=16,
                          d_model=8, att_dim=8, film_hidden=8,
                          expert_hidden=8, dropout=0.0, seed=0)
        model = MsfSerModel(cfg)
        rng = seeded_rng(100)
        for p in model.params():    # generic point, off the zero-init saddle
            p.value += 0.05 * rng.standard_normal(p.value.shape)
        batch = make_batch(random_examples(4, cfg, seed=101))

        def loss_fn():
            return model.loss_and_grad(batch, train=False)

        worst = grad_check(loss_fn, model.params())
        elapsed = time.monotonic() - start
        assert worst <= 1e-4, f"worst relative gradient error {worst:.3e}"
        assert elapsed < 60.0, f"gradient check took {elapsed:.1f} s"


# ---------------------------------------------------------- criterion 2
# Straight-line oracles: plain Python loops and math.* scalar calls only.

def oracle_softmax_row(row):
    mx = max(row)
    e = [math.exp(v - mx) for v in row]
    z = sum(e)
    return [v / z for v in e]


def oracle_pool(h, w, v):
    t_len, d = len(h), len(h[0])
    k = len(w[0])
    s = []
    for t in range(t_len):
        u_t = [math.tanh(sum(h[t][i] * w[i][j] for i in range(d)))
               for j in range(k)]
        s.append(sum(u_t[j] * v[j][0] for j in range(k)))
    a = oracle_softmax_row(s)
    out = []
    for i in range(d):
        out.append(sum(a[t] * h[t][i] for t in range(t_len)))
    for i in range(d):
        m1 = out[i]
        m2 = sum(a[t] * h[t][i] * h[t][i] for t in range(t_len))
        raw = m2 - m1 * m1
        out.append(math.sqrt((raw if raw > 0.0 else 0.0) + 1e-9))
    return out


def oracle_fuse(h_l, h_g, w, b):
    rows = []
    d = len(h_l[0])
    for r in range(len(h_l)):
        z = b[0][0]
        for i in range(d):
            z += h_l[r][i] * w[i][0] + h_g[r][i] * w[d + i][0]
        g = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else \
            math.exp(z) / (1.0 + math.exp(z))
        rows.append([g * h_l[r][i] + (1.0 - g) * h_g[r][i]
                     for i in range(d)])
    return rows


def oracle_film(x, cond, w1, b1, w2, b2):
    rows = []
    dx, dc, hid = len(x[0]), len(cond[0]), len(w1[0])
    for r in range(len(x)):
        t1 = [math.tanh(b1[0][j] + sum(cond[r][i] * w1[i][j]
                                       for i in range(dc)))
              for j in range(hid)]
        mods = [b2[0][j] + sum(t1[i] * w2[i][j] for i in range(hid))
                for j in range(2 * dx)]
        rows.append([(1.0 + mods[i]) * x[r][i] + mods[dx + i]
                     for i in range(dx)])
    return rows


def oracle_moe(expert_out, logits):
    n_exp, n, d = len(expert_out), len(expert_out[0]), len(expert_out[0][0])
    out = [[0.0] * d for _ in range(n)]
    for dd in range(d):
        pi = oracle_softmax_row(list(logits[dd]))
        for r in range(n):
            out[r][dd] = sum(pi[k] * expert_out[k][r][dd]
                             for k in range(n_exp))
    return out


def oracle_ccc(p, t):
    n = len(p)
    mp, mt = sum(p) / n, sum(t) / n
    vp = sum((x - mp) ** 2 for x in p) / n
    vt = sum((x - mt) ** 2 for x in t) / n
    cov = sum((a - mp) * (b - mt) for a, b in zip(p, t)) / n
    denom = vp + vt + (mp - mt) ** 2
    return 1.0 if denom == 0.0 else 2.0 * cov / denom


def test_c2_oracle_equivalence():
    with report(2, "oracle equivalence"):
        rng = seeded_rng(200)
        for _ in range(100):
            t_len = int(rng.integers(1, 9))
            d, k = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            h = rng.standard_normal((t_len, d))
            w = rng.standard_normal((d, k))
            v = rng.standard_normal((k, 1))
            pooled, _ = attentive_pool(h, w, v)
            assert max_rel(pooled, oracle_pool(h.tolist(), w.tolist(),
                                               v.tolist())) <= 1e-10

        rng = seeded_rng(201)
        for _ in range(100):
            n, d = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            h_l = rng.standard_normal((n, d))
            h_g = rng.standard_normal((n, d))
            w = rng.standard_normal((2 * d, 1))
            b = rng.standard_normal((1, 1))
            fused, _ = gated_fuse(h_l, h_g, w, b)
            assert max_rel(fused, oracle_fuse(h_l.tolist(), h_g.tolist(),
                                              w.tolist(), b.tolist())) <= 1e-10

        rng = seeded_rng(202)
        for _ in range(100):
            n, dx = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            dc, hid = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            x = rng.standard_normal((n, dx))
            cond = rng.standard_normal((n, dc))
            w1, b1 = rng.standard_normal((dc, hid)), rng.standard_normal((1, hid))
            w2 = rng.standard_normal((hid, 2 * dx))
            b2 = rng.standard_normal((1, 2 * dx))
            y, _ = film_modulate(x, cond, w1, b1, w2, b2)
            assert max_rel(y, oracle_film(x.tolist(), cond.tolist(),
                                          w1.tolist(), b1.tolist(),
                                          w2.tolist(), b2.tolist())) <= 1e-10

        rng = seeded_rng(203)
        for _ in range(100):
            n_exp = int(rng.integers(1, 5))
            n, d = int(rng.integers(1, 6)), int(rng.integers(1, 5))
            eo = rng.standard_normal((n_exp, n, d))
            logits = rng.standard_normal((d, n_exp))
            pred, _ = moe_combine(eo, logits)
            assert max_rel(pred, oracle_moe(eo.tolist(),
                                            logits.tolist())) <= 1e-10

        rng = seeded_rng(204)
        for _ in range(100):
            n = int(rng.integers(2, 40))
            p = rng.uniform(-4, 4, n)
            t = rng.uniform(-4, 4, n)
            assert abs(ccc(p, t) - oracle_ccc(p.tolist(),
                                              t.tolist())) <= 1e-10


# ---------------------------------------------------------- criterion 3

def test_c3_algebraic_invariants():
    with report(3, "algebraic invariants"):
        rng = seeded_rng(300)

        # FiLM with an all-zero output layer is exactly the identity.
        for _ in range(20):
            x = rng.standard_normal((3, 5))
            cond = rng.standard_normal((3, 4))
            y, _ = film_modulate(x, cond,
                                 rng.standard_normal((4, 6)),
                                 rng.standard_normal((1, 6)),
                                 np.zeros((6, 10)), np.zeros((1, 10)))
            assert np.array_equal(y, x)

        # One-hot routing returns the chosen expert's output exactly.
        for _ in range(20):
            eo = rng.standard_normal((3, 4, 3))
            pick = int(rng.integers(0, 3))
            logits = np.zeros((3, 3))
            logits[:, pick] = 800.0
            pred, pi = moe_combine(eo, logits)
            one_hot = np.zeros((3, 3))
            one_hot[:, pick] = 1.0
            assert np.array_equal(pi, one_hot)
            assert np.array_equal(pred, eo[pick])

        # Softmax rows sum to 1 within 1e-12, any scale.
        for _ in range(50):
            z = rng.standard_normal((int(rng.integers(1, 8)),
                                     int(rng.integers(1, 8)))) * 100.0
            assert np.abs(softmax(z).sum(axis=1) - 1.0).max() <= 1e-12

        # Self-concordance is exactly 1; constant predictions score 0.
        for _ in range(50):
            x = rng.standard_normal(int(rng.integers(2, 30)))
            assert ccc(x, x.copy()) == 1.0
        for _ in range(20):
            t = rng.standard_normal(10)
            c = float(rng.standard_normal())
            if abs(c - t.mean()) > 1e-12 or t.var() > 0:
                assert ccc(np.full(10, c), t) == 0.0


# ---------------------------------------------------------- criterion 4

def test_c4_emphasis_plant_and_detect():
    with report(4, "emphasis plant-and-detect"):
        start = time.monotonic()
        cfg = LemfConfig(f0_min=70.0, f0_max=450.0)
        hits = 0
        for case in range(100):
            rng = seeded_rng(40_000 + case)
            audio, tg, plant = make_emphasis_case(rng)
            result = run_lemf(audio, tg, cfg)
            top = int(np.argmax([w.score for w in result.words]))
            hits += int(top == plant)
        elapsed = time.monotonic() - start
        assert hits >= 95, f"planted word ranked first in only {hits}/100"
        assert elapsed < 120.0, f"detection loop took {elapsed:.1f} s"


# ---------------------------------------------------------- criterion 5

def dft_energy(frame, window):
    """O(N^2) direct DFT of the tapered frame, scalar arithmetic only."""
    n = len(frame)
    if window == "hann":
        tapered = [frame[t] * (0.5 - 0.5 * math.cos(2.0 * math.pi * t / n))
                   for t in range(n)]
    else:
        tapered = list(frame)
    total = 0.0
    for k in range(n // 2 + 1):
        re = sum(tapered[t] * math.cos(-2.0 * math.pi * k * t / n)
                 for t in range(n))
        im = sum(tapered[t] * math.sin(-2.0 * math.pi * k * t / n)
                 for t in range(n))
        total += re * re + im * im
    return math.sqrt(total)


def test_c5_dsp_oracles():
    with report(5, "dsp oracles"):
        rng = seeded_rng(500)
        sr = 8000
        audio = AudioBuffer(samples=rng.standard_normal(1600) * 0.2,
                            sample_rate=sr)
        for window in ("hann", "rectangular"):
            cfg = FrameConfig(win_ms=8.0, hop_ms=4.0, window=window)
            frames, _ = frame_signal(audio, cfg)
            for i in range(frames.shape[0]):
                got = stft_energy(frames[i], window)
                want = dft_energy(frames[i].tolist(), window)
                assert abs(got - want) / max(want, 1e-12) <= 1e-9

        sr = 16000
        t = np.arange(int(sr * 1.0)) / sr
        for true_f0 in (110.0, 220.0):
            tone = AudioBuffer(samples=0.4 * np.sin(2 * np.pi * true_f0 * t),
                               sample_rate=sr)
            track = estimate_f0(tone, FrameConfig(), f0_min=70.0, f0_max=450.0)
            times = track.frame_times
            interior = (times > 0.1) & (times < 0.9)
            good = 0
            for i in np.flatnonzero(interior):
                good += int(track.voiced[i]
                            and abs(math.exp(track.log_f0[i]) - true_f0) <= 3.0)
            frac = good / int(interior.sum())
            assert frac >= 0.9, f"{true_f0} Hz tone: {frac:.1%} within 3 Hz"


# ---------------------------------------------------------- criterion 6

def test_c6_trend_reproduction(tmp_path):
    with report(6, "trend reproduction"):
        start = time.monotonic()
        root = tmp_path / "trend"
        generate_dataset(root, SynthConfig(n_utts=160, seed=0))
        train_set = load_examples(root, split="train")
        test_set = load_examples(root, split="test")

        first = train_set[0]
        def fit(experts):
            mc = ModelConfig(
                acoustic_dim=first.frames.shape[1], les_dim=len(first.les),
                gs_dim=len(first.gs), es_dim=len(first.es),
                d_model=16, att_dim=16, film_hidden=16, expert_hidden=16,
                experts=experts, dropout=0.5, seed=0)
            model = MsfSerModel(mc)
            train_model(model, train_set,
                        TrainConfig(epochs=60, batch_size=16, accum_steps=2,
                                    lr=1e-2, weight_decay=1e-4, seed=0))
            return evaluate(model, test_set)["ccc"]

        full = fit(("A", "B", "C"))
        ablated = fit(("A", "B"))
        elapsed = time.monotonic() - start

        avg = float(np.mean(full))
        dominance_drop = full[2] - ablated[2]
        arousal_shift = abs(full[1] - ablated[1])
        assert avg >= 0.85, f"full-model held-out CCC_avg {avg:.3f}"
        assert dominance_drop >= 0.1, \
            f"dominance CCC only dropped {dominance_drop:.3f} without " \
            f"the extended channel"
        assert arousal_shift < 0.05, \
            f"arousal CCC moved {arousal_shift:.3f} under ablation"
        assert elapsed < 600.0, f"trend run took {elapsed:.1f} s"


# ---------------------------------------------------------- criterion 7

LABELS = ("", "hello", 'say "hi"', "two\nlines", "café mañana",
          "sp", "a b c", "x" * 40)


def random_grid(rng):
    xmax = float(rng.uniform(1.0, 8.0))
    tiers = []
    for ti in range(int(rng.integers(1, 4))):
        if rng.uniform() < 0.7:
            cuts = np.sort(rng.uniform(0.0, xmax, int(rng.integers(0, 6))))
            edges = [0.0] + [float(c) for c in cuts] + [xmax]
            ivs = []
            for a, b in zip(edges[:-1], edges[1:]):
                if b - a < 1e-6:
                    continue
                ivs.append(Interval(a, b,
                                    LABELS[int(rng.integers(0, len(LABELS)))]))
            if not ivs:
                ivs = [Interval(0.0, xmax, "only")]
            tiers.append(Tier(name=f"tier_{ti}", xmin=0.0, xmax=xmax,
                              intervals=tuple(ivs), kind="interval"))
        else:
            times = np.unique(rng.uniform(0.0, xmax, int(rng.integers(1, 5))))
            pts = tuple(Interval(float(x), float(x),
                                 LABELS[int(rng.integers(0, len(LABELS)))])
                        for x in times)
            tiers.append(Tier(name=f"points_{ti}", xmin=0.0, xmax=xmax,
                              intervals=pts, kind="point"))
    return TextGrid(xmin=0.0, xmax=xmax, tiers=tuple(tiers))


def test_c7_parser_robustness():
    with report(7, "parser robustness"):
        rng = seeded_rng(700)
        for _ in range(200):
            tg = random_grid(rng)
            assert parse_textgrid(serialize_textgrid(tg)) == tg

        good = serialize_textgrid(random_grid(seeded_rng(701)))

        with pytest.raises(MalformedHeader):
            parse_textgrid('File type = "Spreadsheet"\n' +
                           good.split("\n", 1)[1])
        with pytest.raises(TruncatedFile):
            parse_textgrid(good[:int(len(good) * 0.6)])
        bad_order = good.replace('xmin = 0', 'xmin = 9', 1)
        with pytest.raises(NonMonotoneIntervals):
            parse_textgrid(bad_order)

        # Any malformed input yields a typed TextGridError, never a crash
        # or a partial value.
        for k in range(1, 40):
            try:
                parse_textgrid(good[:len(good) * k // 40])
            except TextGridError:
                pass


# ---------------------------------------------------------- criterion 8

def run_pipeline(base):
    data = base / "data"
    run = base / "run"
    assert main(["synth", "--out", str(data), "--n", "24", "--seed", "3",
                 "--les-dim", "6", "--gs-dim", "6", "--es-dim", "6"]) == 0
    assert main(["train", "--data", str(data), "--out", str(run),
                 "--epochs", "4", "--batch-size", "8", "--accum-steps", "1",
                 "--lr", "1e-3", "--d-model", "6", "--dropout", "0.3",
                 "--seed", "3", "--quiet"]) == 0
    report_path = base / "report.json"
    assert main(["eval", "--data", str(data), "--model", str(run),
                 "--split", "test", "--out", str(report_path)]) == 0
    return (run / "checkpoint.json").read_bytes(), report_path.read_bytes()


def test_c8_determinism(tmp_path, capsys):
    with report(8, "determinism"):
        ckpt1, report1 = run_pipeline(tmp_path / "one")
        ckpt2, report2 = run_pipeline(tmp_path / "two")
        assert ckpt1 == ckpt2, "checkpoints differ between identical runs"
        assert report1 == report2, "reports differ between identical runs"

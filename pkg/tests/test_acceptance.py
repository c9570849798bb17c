"""Acceptance suite: one test per primary criterion, each printing a
PASS/FAIL line with the measured numbers.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
written to the terminal even without ``-s``.
"""

import itertools
import time

import numpy as np
import pytest

from csilab import harness
from csilab.bitstream import (RAW_SAMPLE_BITS, SCHEMES, decode_frame, encode_frame,
                              feedback_bit_count, raw_sample_bits)
from csilab.channel import ChannelConfig, NormStats, synth_sample
from csilab.harness import NMSE_THRESHOLD, QuantConfig, desk_pipeline, identity_pipeline, run_pipeline
from csilab.nn import NetworkSpec, TrainConfig, grad_check, network_grad_check
from csilab.nn.layers import soft_quant
from csilab.preprocess import (PreprocessConfig, Preprocessor, TopK, dft_angular, dft_frequency,
                               path_cut, path_energy, path_restore)
from csilab.quantize import (OffsetConfig, allocate_path_bits, companded_spec, dequantize_with_spec,
                             fit_bank, hard_dequant, lloyd_max_fit, offsetnet_apply, offsetnet_train,
                             quantize_with_spec, spec_distortion, uniform_spec)


@pytest.fixture
def report(request):
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        else:
            print(line)
    return emit


# ---------------------------------------------------------------------------

def _bitstream_roundtrips(n, rng):
    failures = 0
    n_paths = rng.integers(1, 41, size=n)
    lengths = rng.integers(0, 61, size=n)
    for i in range(n):
        mask = rng.random(n_paths[i]) < 0.5
        widths = rng.integers(1, 17, size=lengths[i])
        idx = rng.integers(0, 2 ** widths) if len(widths) else np.zeros(0, np.int64)
        scheme = int(rng.integers(0, len(SCHEMES)))
        data = encode_frame(scheme, mask, idx, widths)
        fr = decode_frame(data, n_paths[i])
        nbits = int(widths.sum())
        pad_ok = nbits % 8 == 0 or fr.payload[-1] & ((1 << (8 - nbits % 8)) - 1) == 0
        ok = (fr.scheme == scheme and np.array_equal(fr.mask, mask) and pad_ok
              and np.array_equal(fr.indices(widths), idx)
              and feedback_bit_count(fr) == n_paths[i] + nbits)
        failures += not ok
    return failures


def test_property_suites(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    n_frames = 100_000
    frame_failures = _bitstream_roundtrips(n_frames, rng)

    dft_err = 0.0
    for _ in range(2000):
        H = rng.normal(size=(24, 4, 4)) + 1j * rng.normal(size=(24, 4, 4))
        nH = np.linalg.norm(H)
        A = dft_angular(H)
        F = dft_frequency(H, n_bins=48)
        dft_err = max(dft_err,
                      abs(np.linalg.norm(A) - nH) / nH, abs(np.linalg.norm(F) - nH) / nH,
                      np.linalg.norm(dft_angular(A, "inv") - H) / nH,
                      np.linalg.norm(dft_frequency(F, "inv", n_paths=24) - H) / nH)

    idem_failures = 0
    specs = [uniform_spec(b) for b in range(1, 9)] + [companded_spec(b, law) for b in (2, 4) for law in ("mu", "a")]
    for s in range(20):
        specs.append(lloyd_max_fit(rng.normal(size=500) * (s + 1), 1 + s % 5).spec)
    for spec in specs:
        x = rng.uniform(spec.edges[0] - 0.5, spec.edges[-1] + 0.5, size=5000)
        q = quantize_with_spec(x, spec)
        idem_failures += not np.array_equal(quantize_with_spec(dequantize_with_spec(q, spec), spec), q)
    elapsed = time.perf_counter() - t0
    ok = frame_failures == 0 and dft_err <= 1e-12 and idem_failures == 0 and elapsed <= 60
    report("property suites", ok,
           f"{n_frames} frame round-trips ({frame_failures} failures, padding verified), "
           f"DFT max rel err {dft_err:.1e}, {len(specs)} specs idempotent ({idem_failures} failures), "
           f"{elapsed:.1f}s")
    assert ok


def test_path_cut_identity(report):
    c = ChannelConfig()
    worst = 0.0
    for s in range(100):
        H = synth_sample(c, 10_000 + s)
        Hc, m = path_cut(H, TopK(10))
        R = path_restore(Hc, m)
        nm = np.sum(np.abs(R - H) ** 2) / np.sum(np.abs(H) ** 2)
        worst = max(worst, abs(nm - path_energy(H)[~m.retained].sum()))
    ok = worst <= 1e-10
    report("path-cut identity", ok, f"100 samples, TopK(10), max |NMSE - discarded| = {worst:.1e}")
    assert ok


def _staircase_gap(beta, bits=3, n_grid=200_001):
    x = np.linspace(0, 1, n_grid)
    n = 2 ** bits
    near = np.zeros_like(x, dtype=bool)
    for k in range(1, n + 1):
        near |= np.abs(x - k / n) <= 1 / (2 * beta)
    v, _ = soft_quant(x, bits, beta)
    ref = hard_dequant(np.clip(np.floor(x * n), 0, n - 1), bits)
    return float(np.abs(v - ref)[~near].max())


@pytest.mark.xfail(strict=True, reason=(
    "unattainable as stated: at distance 1/(2 beta) from a breakpoint the sigmoid-sum "
    "staircase is off by sigmoid(-2**(B-1)) / 2**B = 2.25e-3 for every beta"))
def test_staircase_convergence(report):
    g30, g500 = _staircase_gap(30), _staircase_gap(500)
    ok = g500 <= 1e-3 and g500 < g30
    report("soft quantizer staircase convergence", ok,
           f"B=3 max deviation outside +-1/(2 beta): beta=30 {g30:.3e}, beta=500 {g500:.3e} "
           f"(need <= 1e-3 and strictly below beta=30)")
    assert ok


def test_gradient_correctness(report):
    t0 = time.perf_counter()
    tiny = grad_check("full", seed=0)
    spec = NetworkSpec(n_slots=2, slot_in=32, slot_out=32, feature_len=6, encoder_widths=(8, 8),
                       decoder_widths=(8, 8), activation="tanh", rezero=True, quant_bits=3)
    H = np.stack([synth_sample(ChannelConfig(), s) for s in range(3)])
    pp = Preprocessor(PreprocessConfig(path_rule="topk", k=2), stats=NormStats(0.0, 0.5))
    x, _, m = pp.forward(H)
    loss = harness.nmse_loss(pp, {"H": H, "m": m, "E": np.sum(np.abs(H) ** 2, axis=(1, 2, 3))})
    net = network_grad_check(spec, lambda y: loss(y, np.arange(3)), x, seed=0)
    split = NetworkSpec(n_slots=2, slot_in=32, slot_out=32, feature_len=6, encoder_widths=(12,),
                        decoder_widths=(12,), block="deep_split", split_layers=3, activation="tanh",
                        quant_bits=3)
    net2 = network_grad_check(split, lambda y: loss(y, np.arange(3)), x, seed=1)
    worst = max(tiny.worst, net.worst, net2.worst)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and elapsed <= 60
    report("gradient correctness", ok,
           f"FC+ReZero+DeepSplit+soft_quant {tiny.worst:.1e}, ReZero net through NMSE {net.worst:.1e}, "
           f"Deep Split net through NMSE {net2.worst:.1e} (tol 1e-5), {elapsed:.1f}s")
    assert ok


def test_lloyd_max_quality(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    u = rng.uniform(size=10 ** 6)
    fit_u = lloyd_max_fit(u, 3)
    target = 2.0 ** -6 / 12
    rel = abs(fit_u.history[-1] - target) / target
    g = rng.normal(size=10 ** 5)
    fit_g = lloyd_max_fit(g, 2)
    uni = spec_distortion(g, uniform_spec(2, g.min(), g.max()))
    mono = all(np.all(np.diff(f.history) <= 0) for f in (fit_u, fit_g))
    elapsed = time.perf_counter() - t0
    ok = rel <= 0.02 and fit_g.history[-1] < uni and mono and elapsed <= 60
    report("Lloyd-Max quality", ok,
           f"uniform B=3 {fit_u.history[-1]:.4e} vs {target:.4e} ({100 * rel:.2f}%), "
           f"Gaussian B=2 {fit_g.history[-1]:.4f} < uniform {uni:.4f}, monotone={mono}, {elapsed:.1f}s")
    assert ok


def test_allocation_optimality(report):
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(100):
        tables = []
        for _ in range(3):
            gains = np.sort(rng.exponential(size=6))[::-1]
            d0 = gains.sum() + rng.uniform()
            tables.append(np.concatenate([[d0], d0 - np.cumsum(gains)]))
        tables = np.array(tables)
        best = min(tables[0, a] + tables[1, b] + tables[2, 6 - a - b]
                   for a, b in itertools.product(range(7), repeat=2) if 0 <= 6 - a - b <= 6)
        bits = allocate_path_bits(tables, 6)
        mismatches += not (bits.sum() == 6 and tables[np.arange(3), bits].sum() == best)
    ok = mismatches == 0
    report("allocation optimality", ok, f"100 convex 3-path instances, budget 6, {mismatches} mismatches")
    assert ok


def test_end_to_end_target(report):
    t0 = time.perf_counter()
    main = run_pipeline(desk_pipeline())
    base = run_pipeline(desk_pipeline(preprocess=PreprocessConfig(), quant=QuantConfig("uniform", bits=3)))
    elapsed = time.perf_counter() - t0
    ok = (main.nmse_mean <= NMSE_THRESHOLD and main.feedback_bits <= 512
          and main.nmse_mean < base.nmse_mean and elapsed <= 20 * 60)
    report("end-to-end synthetic target", ok,
           f"path cut + adaptive: NMSE {main.nmse_mean:.4f} +- {main.nmse_std:.4f} at {main.feedback_bits} bits "
           f"(seeds {[round(v, 4) for v in main.per_seed]}); no preprocessing + uniform: "
           f"{base.nmse_mean:.4f} +- {base.nmse_std:.4f} at {base.feedback_bits} bits; {elapsed / 60:.1f} min")
    assert ok


def test_offsetnet_gain(report):
    t0 = time.perf_counter()
    cfg = desk_pipeline(train=TrainConfig(epochs=60, lr=3e-3, lr_decay=0.98),
                        quant=QuantConfig("uniform", bits=2))
    _, Hte = harness.load_data(cfg.channel)
    results = []
    for seed in range(3):
        model, ctx = harness.train_model(cfg, seed)
        tr = model.net.encode(ctx["x"])
        te = model.net.encode(model.pp.forward(Hte)[0])
        bank = fit_bank(tr, "uniform", 2)
        dq_tr = bank.dequantize(bank.quantize(tr))
        dq_te = bank.dequantize(bank.quantize(te))
        net, _ = offsetnet_train(dq_tr, tr, OffsetConfig(epochs=100, seed=seed))
        results.append((np.mean((dq_te - te) ** 2), np.mean((offsetnet_apply(net, dq_te) - te) ** 2)))
    elapsed = time.perf_counter() - t0
    ok = all(c < b for b, c in results) and elapsed <= 5 * 60
    report("OffsetNet gain", ok,
           "held-out feature MSE raw -> corrected per seed: "
           + ", ".join(f"{b:.2e} -> {c:.2e}" for b, c in results) + f"; {elapsed:.0f}s")
    assert ok


def test_raw_size_constant(report):
    row = run_pipeline(identity_pipeline(harness.desk_config(n_train=20, n_test=5)))
    payload = row.feedback_bits - 24
    ok = RAW_SAMPLE_BITS == raw_sample_bits(24, 4, 4) == payload == 24576 and row.nmse_mean == 0
    report("raw-size constant", ok,
           f"uncompressed sample = {RAW_SAMPLE_BITS} bits; identity frame payload {payload} bits, NMSE {row.nmse_mean}")
    assert ok

import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from csilab.bitstream import FrameCorruptionError
from csilab.quantize import (Codebook, OffsetConfig, OffsetNet, QuantizerFormatError, QuantizerSpec,
                             ScalarBank, allocate_path_bits, compand, companded_spec,
                             dequantize_with_spec, distortion_table, fit_bank, hard_dequant,
                             hard_quant, lloyd_max_fit, nearest, offsetnet_apply, offsetnet_train,
                             quantize_with_spec, read_quantizer, spec_distortion, uniform_spec,
                             vq_bits, vq_decode, vq_encode, vq_fit, write_quantizer)


def test_hard_quant_examples():
    assert hard_quant(0.3, 3) == 2 and hard_dequant(2, 3) == 0.3125
    assert hard_quant(0.0, 1) == 0 and hard_dequant(0, 1) == 0.25
    assert hard_quant(1.0, 2) == 3 and hard_dequant(3, 2) == 0.875
    with pytest.raises(ValueError):
        hard_quant(0.5, 0)


def test_compand_examples():
    assert compand(0.0, "mu") == 0
    assert compand(1.0, "mu") == pytest.approx(1.0, abs=1e-15)
    assert compand(compand(0.3, "mu"), "mu", "inv") == pytest.approx(0.3, abs=1e-12)
    assert compand(compand(-0.3, "a"), "a", "inv") == pytest.approx(-0.3, abs=1e-12)
    assert compand(1.0, "a") == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        compand(1.5)


@given(st.floats(-1, 1), st.sampled_from(["mu", "a"]))
def test_compand_inverse_pair(x, law):
    y = compand(x, law)
    assert abs(y) <= 1 + 1e-15 and np.sign(y) == np.sign(x)
    assert compand(y, law, "inv") == pytest.approx(x, abs=1e-12)


def test_companded_spec_is_finer_in_the_middle():
    s = companded_spec(4, "mu")
    widths = np.diff(s.edges)
    assert widths[7] < widths[0] and widths[8] < widths[-1]


def test_lloyd_two_point():
    r = lloyd_max_fit(np.tile([-1.0, 1.0], 50), 1)
    np.testing.assert_array_equal(r.spec.levels, [-1, 1])
    assert r.spec.thresholds.tolist() == [0.0]
    assert r.history[-1] == 0


def test_lloyd_uniform_distortion():
    x = np.random.default_rng(0).uniform(size=10 ** 6)
    d = lloyd_max_fit(x, 3).history[-1]
    assert abs(d - 2.0 ** -6 / 12) <= 0.02 * 2.0 ** -6 / 12


def test_lloyd_gaussian_beats_uniform():
    x = np.random.default_rng(1).normal(size=10 ** 5)
    r = lloyd_max_fit(x, 2)
    uni = uniform_spec(2, x.min(), x.max())
    assert r.history[-1] < spec_distortion(x, uni)
    assert r.history[-1] == pytest.approx(spec_distortion(x, r.spec), rel=1e-9)


@given(st.integers(0, 10 ** 6), st.integers(1, 4), st.sampled_from(["normal", "laplace", "uniform", "beta"]))
def test_lloyd_monotone_half_steps(seed, bits, dist):
    r = np.random.default_rng(seed)
    x = {"normal": lambda: r.normal(size=2000), "laplace": lambda: r.laplace(size=2000),
         "uniform": lambda: r.uniform(size=2000), "beta": lambda: r.beta(0.3, 0.5, size=2000)}[dist]()
    res = lloyd_max_fit(x, bits)
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 1e-12 * h[0])
    # adaptive never worse than its uniform initialization
    assert h[-1] <= spec_distortion(x, uniform_spec(bits, x.min(), x.max())) * (1 + 1e-12)


def test_lloyd_needs_enough_distinct_values():
    with pytest.raises(ValueError):
        lloyd_max_fit([0.0, 1.0, 1.0], 2)


def test_spec_invariants():
    with pytest.raises(ValueError):
        QuantizerSpec("uniform", [0, 0.5, 0.4], [0.2, 0.45], 1)
    with pytest.raises(ValueError):
        QuantizerSpec("uniform", [0, 0.5, 1], [0.6, 0.7], 1)
    with pytest.raises(ValueError):
        QuantizerSpec("bogus", [0, 0.5, 1], [0.2, 0.7], 1)


@given(st.integers(1, 8), arrays(np.float64, 50, elements=st.floats(0, 1)))
def test_uniform_spec_matches_hard(bits, x):
    s = uniform_spec(bits)
    q = quantize_with_spec(x, s)
    np.testing.assert_array_equal(q, hard_quant(x, bits))
    np.testing.assert_allclose(dequantize_with_spec(q, s), hard_dequant(q, bits), rtol=0, atol=1e-15)


def all_specs():
    x = np.random.default_rng(5).normal(size=500)
    return [uniform_spec(3), companded_spec(3, "mu"), companded_spec(2, "a"),
            lloyd_max_fit(x, 3).spec, lloyd_max_fit(np.abs(x), 1).spec]


@pytest.mark.parametrize("spec", all_specs(), ids=lambda s: f"{s.kind}{s.bits}")
def test_idempotence(spec):
    q = np.arange(spec.n_levels)
    np.testing.assert_array_equal(quantize_with_spec(dequantize_with_spec(q, spec), spec), q)
    x = np.linspace(spec.edges[0] - 1, spec.edges[-1] + 1, 999)
    q1 = quantize_with_spec(x, spec)
    np.testing.assert_array_equal(quantize_with_spec(dequantize_with_spec(q1, spec), spec), q1)
    with pytest.raises(FrameCorruptionError):
        dequantize_with_spec([spec.n_levels], spec)


@pytest.mark.parametrize("spec", all_specs(), ids=lambda s: f"{s.kind}{s.bits}")
def test_quantize_matches_nearest_level_brute_force(spec, rng):
    # boundaries are level midpoints only for Lloyd-Max; compare against the
    # interval each value falls in, found by scanning every edge pair
    x = rng.uniform(spec.edges[0], spec.edges[-1], size=400)
    idx = quantize_with_spec(x, spec)
    brute = []
    for v in x:
        k = max(i for i in range(spec.n_levels) if i == 0 or v >= spec.edges[i])
        brute.append(k)
    np.testing.assert_array_equal(idx, brute)
    d = np.mean((spec.levels[idx] - x) ** 2)
    assert d == pytest.approx(spec_distortion(x, spec), rel=1e-9)
    if spec.kind == "adaptive":
        nearest_level = spec.levels[np.argmin(np.abs(x[:, None] - spec.levels[None]), axis=1)]
        assert d == pytest.approx(np.mean((nearest_level - x) ** 2), rel=1e-9)


def test_vq_exact_codebook():
    cw = np.random.default_rng(3).normal(size=(8, 2))
    feats = np.repeat(cw, 5, axis=0).reshape(-1, 4)
    cb = vq_fit(feats, 2, 3)
    assert cb.history[-1] == pytest.approx(0.0, abs=1e-24)
    assert sorted(map(tuple, cb.codewords)) == sorted(map(tuple, cw))


def test_vq_scalar_equivalence():
    x = np.random.default_rng(4).normal(size=20000)
    cb = vq_fit(x.reshape(-1, 10), 1, 3)
    lm = lloyd_max_fit(x, 3).history[-1]
    assert abs(cb.history[-1] - lm) <= 0.01 * lm
    assert cb.history[-1] <= spec_distortion(x, uniform_spec(3, x.min(), x.max()))


@given(st.integers(0, 10 ** 6), st.integers(1, 4), st.sampled_from([1, 2, 4]))
def test_vq_history_nonincreasing(seed, bits, v):
    feats = np.random.default_rng(seed).normal(size=(200, 4))
    cb = vq_fit(feats, v, bits, seed)
    assert np.all(np.diff(cb.history) <= 0)
    assert len(cb.codewords) == 2 ** bits


def test_vq_encode_decode(rng):
    cb = Codebook(2, rng.normal(size=(16, 2)))
    f = cb.codewords[[5, 1, 5, 9]].reshape(1, 8)
    np.testing.assert_array_equal(vq_encode(f, cb), [[5, 1, 5, 9]])
    x = rng.normal(size=(30, 8))
    idx = vq_encode(x, cb)
    rec = vq_decode(idx, cb).reshape(-1, 2)
    assert all(any(np.array_equal(r, c) for c in cb.codewords) for r in rec)
    # brute-force nearest codeword
    subs = x.reshape(-1, 2)
    brute = [min(range(16), key=lambda j: (np.sum((s - cb.codewords[j]) ** 2), j)) for s in subs]
    np.testing.assert_array_equal(idx.ravel(), brute)
    assert vq_bits(8, cb) == 16
    with pytest.raises(FrameCorruptionError):
        vq_decode(np.array([[16]]), cb)


def test_vq_ties_lowest_index():
    cw = np.array([[0.0], [1.0], [1.0], [2.0]])
    assert nearest(np.array([[1.0], [0.5]]), cw).tolist() == [1, 0]


def test_allocation_examples():
    t = np.linspace(1, 0, 7)[None] ** 2
    assert allocate_path_bits(t, 6).tolist() == [6]
    tables = np.tile(2.0 ** -np.arange(7.0), (2, 1))
    assert allocate_path_bits(tables, 6).tolist() == [3, 3]
    assert allocate_path_bits(tables, 100).tolist() == [6, 6]
    assert allocate_path_bits(tables, 0).tolist() == [0, 0]
    with pytest.raises(ValueError):
        allocate_path_bits(tables, -1)


def convex_table(rng, b_max=6):
    # decreasing marginal gains give a convex, decreasing table
    gains = np.sort(rng.exponential(size=b_max))[::-1]
    d0 = gains.sum() + rng.uniform(0, 1)
    return np.concatenate([[d0], d0 - np.cumsum(gains)])


def exhaustive(tables, budget):
    best = None
    b_max = tables.shape[1] - 1
    for alloc in itertools.product(range(b_max + 1), repeat=len(tables)):
        if sum(alloc) == budget:
            d = sum(t[b] for t, b in zip(tables, alloc))
            best = d if best is None else min(best, d)
    return best


def test_allocation_matches_exhaustive():
    rng = np.random.default_rng(11)
    for _ in range(100):
        tables = np.stack([convex_table(rng) for _ in range(3)])
        bits = allocate_path_bits(tables, 6)
        assert bits.sum() == 6
        assert tables[np.arange(3), bits].sum() == pytest.approx(exhaustive(tables, 6), rel=0, abs=1e-12)


def test_allocation_on_measured_tables():
    r = np.random.default_rng(2)
    data = [r.normal(scale=s, size=3000) for s in (1.0, 0.5, 0.2)]
    tables = np.stack([distortion_table(d, 5) for d in data])
    gains = -np.diff(tables, axis=1)
    if np.all(np.diff(gains, axis=1) <= 0):
        bits = allocate_path_bits(tables, 8)
        assert tables[np.arange(3), bits].sum() == pytest.approx(exhaustive(tables, 8), abs=1e-12)
    assert np.all(np.diff(tables, axis=1) <= 0)


def test_bank_zero_bit_and_roundtrip(rng, tmp_path):
    f = rng.uniform(size=(300, 6))
    bank = fit_bank(f, "adaptive", [3, 0, 2, 1, 0, 4], np.arange(6))
    assert bank.widths.tolist() == [3, 0, 2, 1, 0, 4] and bank.payload_bits == 10
    q = bank.quantize(f)
    sent = bank.sent(q)
    assert sent.shape == (300, 4)
    rec = bank.dequantize(bank.received(sent))
    np.testing.assert_allclose(rec[:, 1], f[:, 1].mean())
    p = tmp_path / "q.csiq"
    write_quantizer(p, bank)
    back = read_quantizer(p)
    assert isinstance(back, ScalarBank)
    np.testing.assert_array_equal(back.quantize(f), q)
    assert all(a == b for a, b in zip(back.specs, bank.specs))


@pytest.mark.parametrize("kind", ["uniform", "mulaw", "alaw", "adaptive"])
def test_bank_kinds(kind, rng):
    f = rng.uniform(size=(200, 4))
    bank = fit_bank(f, kind, 2)
    assert bank.kind == kind and bank.payload_bits == 8


def test_quantizer_file_variants(tmp_path, rng):
    for q in (uniform_spec(3), lloyd_max_fit(rng.normal(size=100), 2).spec,
              Codebook(2, rng.normal(size=(4, 2)))):
        p = tmp_path / "x.csiq"
        write_quantizer(p, q)
        back = read_quantizer(p)
        if isinstance(q, Codebook):
            assert np.array_equal(back.codewords, q.codewords) and back.sub_dim == 2
        else:
            assert back == q
    raw = p.read_bytes()
    for bad in (b"XXXX" + raw[4:], raw[:-3], raw + b"\0"):
        p.write_bytes(bad)
        with pytest.raises(QuantizerFormatError):
            read_quantizer(p)


def test_offsetnet_identity_at_init(rng):
    net = OffsetNet(6, seed=3)
    x = rng.uniform(size=(10, 6))
    assert np.array_equal(offsetnet_apply(net, x), x)
    assert [v.shape for _, v, _ in net.parameters()] == [(12, 6), (12,), (12, 12), (12,), (6, 12), (6,)]


def test_offsetnet_zero_error_pairs(rng):
    x = rng.uniform(size=(400, 4))
    net, _ = offsetnet_train(x[:300], x[:300], OffsetConfig(epochs=20))
    held = np.mean((offsetnet_apply(net, x[300:]) - x[300:]) ** 2)
    assert held <= 1e-4


def test_offsetnet_gradients(rng):
    from csilab.nn import check_gradients, mse_loss
    net = OffsetNet(4, seed=1)
    for _, v, _ in net.parameters():
        v[...] = rng.normal(scale=0.5, size=v.shape)
    x = rng.uniform(size=(3, 4))
    t = rng.uniform(size=(3, 4))
    assert check_gradients(net, x, lambda y: mse_loss(y, t)).worst <= 1e-6

"""Quantizer and soft-information tests with quadrature oracles."""

import numpy as np
import pytest
from scipy import integrate

from flashopt.channel import Condition, StateModel, pdf_at, state_models
from flashopt.quantizer import (DmcChannel, GRAY, GrayMap, LlrTable,
                                ThresholdSet, hard_thresholds, llr_table,
                                output_distribution, page_subchannel, quantize,
                                transition_matrix)


def test_threshold_set_validation():
    with pytest.raises(ValueError):
        ThresholdSet((0.0, 1.0))
    with pytest.raises(ValueError):
        ThresholdSet((1.0, 1.0, 2.0))
    with pytest.raises(ValueError):
        ThresholdSet((2.0, 1.0))
    d = ThresholdSet((1.0, 2.0, 3.0))
    assert d.j_levels == 3


def test_threshold_file_roundtrip(tmp_path):
    d = ThresholdSet((1.25, 2.5, 2.625, 3.75))
    path = tmp_path / "thresholds.txt"
    d.to_file(path)
    assert ThresholdSet.from_file(path) == d


def test_threshold_file_skips_comments(tmp_path):
    path = tmp_path / "thresholds.txt"
    path.write_text("# read levels\n1.5\n\n2.5 # mid\n3.5\n")
    assert ThresholdSet.from_file(path).d == (1.5, 2.5, 3.5)


def test_quantize_region_semantics():
    d = ThresholdSet((1.0, 2.0, 3.0))
    assert quantize(-5.0, d) == 0
    assert quantize(0.999, d) == 0
    # a sample exactly at a threshold belongs to the region it opens
    assert quantize(1.0, d) == 1
    assert quantize(2.5, d) == 2
    assert quantize(3.0, d) == 3
    assert quantize(100.0, d) == 3
    out = quantize(np.array([0.5, 1.0, 2.0, 9.0]), d)
    assert np.array_equal(out, [0, 1, 2, 3])


def test_transition_matrix_matches_quadrature():
    models = state_models(Condition(9000.0, 300.0))
    d = ThresholdSet((1.8, 2.2, 2.6, 2.9, 3.2, 3.5))
    ch = transition_matrix(models, d)
    edges = [-np.inf, *d.d, np.inf]
    for i, m in enumerate(models):
        for j in range(len(edges) - 1):
            lo = max(edges[j], m.mu - 14 * m.sigma)
            hi = min(edges[j + 1], m.mu + 14 * m.sigma)
            expect = 0.0
            if lo < hi:
                expect, _ = integrate.quad(lambda v: pdf_at(m, v), lo, hi)
            assert ch.w[i, j] == pytest.approx(expect, abs=1e-10)


def test_transition_rows_sum_to_one():
    models = state_models(Condition(15000.0, 5000.0))
    ch = transition_matrix(models, ThresholdSet((2.0, 3.0)))
    assert np.allclose(ch.w.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(output_distribution(ch).sum(), 1.0, atol=1e-12)


def test_dmc_validation():
    with pytest.raises(ValueError):
        DmcChannel(prior=np.array([0.6, 0.6]), w=np.eye(2))
    with pytest.raises(ValueError):
        DmcChannel(prior=np.array([0.5, 0.5]), w=np.array([[0.9, 0.2], [0.5, 0.5]]))


def test_gray_mapping_fixed():
    assert GRAY.bits == ((1, 1), (1, 0), (0, 0), (0, 1))
    assert GRAY.states_with_bit("msb", 1) == (0, 1)
    assert GRAY.states_with_bit("msb", 0) == (2, 3)
    assert GRAY.states_with_bit("lsb", 1) == (0, 3)
    assert GRAY.states_with_bit("lsb", 0) == (1, 2)
    # adjacent states differ in exactly one bit
    for a, b in zip(GRAY.bits[:-1], GRAY.bits[1:]):
        assert sum(x != y for x, y in zip(a, b)) == 1


def test_gray_state_of_inverts_bits():
    msb = np.array([1, 1, 0, 0], dtype=np.uint8)
    lsb = np.array([1, 0, 0, 1], dtype=np.uint8)
    assert np.array_equal(GRAY.state_of(msb, lsb), [0, 1, 2, 3])


def test_gray_rejects_other_maps():
    with pytest.raises(ValueError):
        GrayMap(bits=((0, 0), (0, 1), (1, 1), (1, 0)))


def test_hard_thresholds_match_density_scan():
    models = state_models(Condition(10000.0, 1000.0))
    got = hard_thresholds(models)
    assert len(got) == 3
    for k, t in enumerate(got):
        a, b = models[k], models[k + 1]
        grid = np.linspace(a.mu, b.mu, 200_001)[1:-1]
        gap = np.abs(pdf_at(a, grid) - pdf_at(b, grid))
        best = grid[np.argmin(gap)]
        assert t == pytest.approx(best, abs=2e-5)
        assert a.mu < t < b.mu


def test_hard_threshold_equal_sigma_is_midpoint():
    a = StateModel(0, 1.0, 0.2)
    b = StateModel(1, 2.0, 0.2)
    got = hard_thresholds([a, b])
    assert got[0] == pytest.approx(1.5, abs=1e-12)


def test_llr_table_matches_quadrature():
    cond = Condition(9000.0, 300.0)
    models = state_models(cond)
    d = ThresholdSet(hard_thresholds(models))
    table = llr_table(models, d)
    edges = [-np.inf, *d.d, np.inf]

    def mass(m, lo, hi):
        lo = max(lo, m.mu - 14 * m.sigma)
        hi = min(hi, m.mu + 14 * m.sigma)
        if lo >= hi:
            return 0.0
        val, _ = integrate.quad(lambda v: pdf_at(m, v), lo, hi)
        return val

    for j in range(len(edges) - 1):
        for col, page in enumerate(("msb", "lsb")):
            ones = GRAY.states_with_bit(page, 1)
            num = sum(0.25 * mass(models[s], edges[j], edges[j + 1]) for s in ones)
            den = sum(0.25 * mass(models[s], edges[j], edges[j + 1])
                      for s in range(4) if s not in ones)
            if num > 0 and den > 0:
                # quadrature loses digits on deep-tail masses, so allow a
                # small relative term on very large magnitudes
                assert table.llr[j, col] == pytest.approx(np.log(num / den),
                                                          abs=1e-7, rel=1e-5)


def test_llr_monte_carlo_sanity():
    cond = Condition(8000.0, 100.0)
    models = state_models(cond)
    d = ThresholdSet(hard_thresholds(models))
    table = llr_table(models, d)
    rng = np.random.default_rng(11)
    states = rng.integers(0, 4, size=400_000)
    mus = np.array([m.mu for m in models])
    sigmas = np.array([m.sigma for m in models])
    volts = mus[states] + sigmas[states] * rng.standard_normal(states.size)
    regions = quantize(volts, d)
    msb = np.array([GRAY.bits[s][0] for s in range(4)])[states]
    for j in range(d.j_levels + 1):
        sel = regions == j
        ones = np.count_nonzero(msb[sel])
        zeros = np.count_nonzero(sel) - ones
        if ones > 500 and zeros > 500:
            assert table.llr[j, 0] == pytest.approx(np.log(ones / zeros), abs=0.08)


def test_llr_empty_region_is_zero():
    models = state_models(Condition(0.0, 0.0))
    # everything sits far below 50, so the top region has no mass at all
    table = llr_table(models, ThresholdSet((50.0, 60.0)))
    assert table.llr[2, 0] == 0.0
    assert table.llr[2, 1] == 0.0


def test_llr_clamped_to_l_max():
    models = state_models(Condition(0.0, 0.0))
    d = ThresholdSet(hard_thresholds(models))
    table = llr_table(models, d, l_max=2.5)
    assert np.all(np.abs(table.llr) <= 2.5 + 1e-12)
    strong = llr_table(models, d)
    assert np.max(np.abs(strong.llr)) <= 30.0
    assert np.max(np.abs(strong.llr)) > 2.5


def test_llr_table_file_roundtrip(tmp_path):
    models = state_models(Condition(6000.0, 10.0))
    table = llr_table(models, ThresholdSet(hard_thresholds(models)))
    path = tmp_path / "llr.txt"
    table.to_file(path)
    back = LlrTable.from_file(path)
    assert np.array_equal(back.llr, table.llr)


def test_page_subchannel_rows_average_states():
    models = state_models(Condition(7000.0, 40.0))
    ch = transition_matrix(models, ThresholdSet(hard_thresholds(models)))
    msb = page_subchannel(ch, page="msb")
    assert msb.w.shape == (2, ch.n_regions)
    assert np.allclose(msb.prior, [0.5, 0.5])
    # row order is bit 0 then bit 1
    expect_zero = 0.5 * (ch.w[2] + ch.w[3])
    expect_one = 0.5 * (ch.w[0] + ch.w[1])
    assert np.allclose(msb.w[0], expect_zero, atol=1e-12)
    assert np.allclose(msb.w[1], expect_one, atol=1e-12)
    lsb = page_subchannel(ch, page="lsb")
    assert np.allclose(lsb.w[1], 0.5 * (ch.w[0] + ch.w[3]), atol=1e-12)


def test_page_subchannel_needs_four_states():
    two = DmcChannel(prior=np.array([0.5, 0.5]),
                     w=np.array([[0.8, 0.2], [0.3, 0.7]]))
    with pytest.raises(ValueError):
        page_subchannel(two, page="msb")

import numpy as np
import pytest

from errors import AnalysisError, SpectrumMismatchError
from oracles import C, lorentz_index
from Stages.AnalysisStage import Analysis
from Stages.AnalysisStage.models import BandgapReport, ComplexSpectrum, SpectrumMeta

FREQS = np.arange(8e9, 14e9 + 1.0, 100e6)


def phase_of(index, freqs, d):
    return (index - 1.0) * 2.0 * np.pi * np.asarray(freqs) * d / C


def gap_report(f_low=10.5e9, f_high=11.5e9):
    return BandgapReport(
        f_low=f_low, f_high=f_high, f_center=0.5 * (f_low + f_high),
        depth_dB=30.0, passband_dB=0.0, threshold_dB=10.0,
    )


def test_wrap_phase_range():
    x = np.linspace(-20, 20, 1001)
    w = Analysis.wrap_phase(x)
    assert np.all((w > -np.pi) & (w <= np.pi))
    assert np.allclose(np.round((x - w) / (2 * np.pi)), (x - w) / (2 * np.pi))
    assert Analysis.wrap_phase(np.pi) == pytest.approx(np.pi)
    assert Analysis.wrap_phase(-np.pi) == pytest.approx(np.pi)


def test_unwrap_freq_recovers_smooth_ramp():
    true = np.linspace(0.3, 40.0, 300)
    assert np.allclose(Analysis.unwrap_freq(Analysis.wrap_phase(true)), true)


def test_unwrap_freq_is_idempotent_and_congruent():
    rng = np.random.default_rng(7)
    x = rng.uniform(-30, 30, 500)
    once = Analysis.unwrap_freq(x)
    assert np.array_equal(Analysis.unwrap_freq(once), once)
    turns = (once - x) / (2 * np.pi)
    assert np.allclose(turns, np.round(turns), atol=1e-9)
    assert -np.pi < once[0] <= np.pi
    assert np.all(np.abs(np.diff(once)) <= np.pi + 1e-9)


def test_unwrap_freq_empty():
    assert Analysis.unwrap_freq([]).size == 0


def test_unwrap_freq_folds_alternating_jumps():
    x = np.tile([3.0, -3.0], 50)
    diffs = np.diff(Analysis.unwrap_freq(x))
    assert np.all((diffs > -np.pi) & (diffs <= np.pi))
    assert np.allclose(np.abs(diffs), 2 * np.pi - 6.0)


def test_anchor_to_dc_removes_branch_offset():
    true = phase_of(1.5, FREQS, 0.05)
    anchored = Analysis.anchor_to_dc(true + 3 * 2 * np.pi, FREQS)
    assert np.allclose(anchored, true)


def test_unwrap_layers_removes_slips():
    layers = range(1, 13)
    true = {N: 0.5 + 1.0 * N for N in layers}
    wrapped = {N: float(Analysis.wrap_phase(v)) for N, v in true.items()}
    corrected, m = Analysis.unwrap_layers(wrapped)
    for N in layers:
        assert corrected[N] == pytest.approx(true[N])
        assert corrected[N] - wrapped[N] == pytest.approx(2 * np.pi * m[N])
    assert m[1] == 0
    assert all(m[N] >= m[N - 1] for N in range(2, 13))


def test_unwrap_layers_single_slip():
    true = {N: 0.5 * N for N in range(1, 13)}
    slipped = {N: v - 2 * np.pi if N >= 7 else v for N, v in true.items()}
    corrected, m = Analysis.unwrap_layers(slipped)
    assert [m[N] for N in range(1, 13)] == [0] * 6 + [1] * 6
    assert [corrected[N] for N in range(1, 13)] == pytest.approx([true[N] for N in range(1, 13)])



def test_unwrap_layers_is_idempotent_and_keeps_first_value():
    wrapped = {N: float(Analysis.wrap_phase(0.5 + 2.0 * N)) for N in range(3, 10)}
    corrected, _ = Analysis.unwrap_layers(wrapped)
    again, m = Analysis.unwrap_layers(corrected)
    assert corrected[3] == wrapped[3]
    assert all(v == 0 for v in m.values())
    assert again == pytest.approx(corrected)


def test_unwrap_layers_requires_contiguous_counts():
    with pytest.raises(AnalysisError, match="missing"):
        Analysis.unwrap_layers({1: 0.1, 2: 0.2, 4: 0.3})


def layer_fixture(index=1.3, spacing=20e-3, layers=range(1, 13)):
    """Frequency-unwrapped spectra whose global branches were lost by folding."""
    true = {N: phase_of(index, FREQS, N * spacing) for N in layers}
    folded = {N: Analysis.unwrap_freq(Analysis.wrap_phase(phi)) for N, phi in true.items()}
    return true, folded


def test_unwrap_layer_spectra_restores_branches():
    true, folded = layer_fixture()
    assert any(not np.allclose(folded[N], true[N]) for N in true)
    corrected, m = Analysis.unwrap_layer_spectra(folded)
    for N in true:
        assert np.allclose(corrected[N], true[N])
    assert m[12] == round(true[12][0] / (2 * np.pi))


def test_far_from_gap_check_needs_layer_correction():
    true, folded = layer_fixture()
    corrected, _ = Analysis.unwrap_layer_spectra(folded)
    gap = gap_report()
    d = 12 * 20e-3
    good = Analysis.dispersion_from_phase(corrected[12], FREQS, d)
    bad = Analysis.dispersion_from_phase(folded[12], FREQS, d)
    assert Analysis.check_far_from_gap(good, gap, 0.5e9).passed
    failed = Analysis.check_far_from_gap(bad, gap, 0.5e9)
    assert not failed.passed
    assert failed.max_dispersion > failed.limit


def test_phase_to_index_inverts_phase_delay():
    n = Analysis.phase_to_index(phase_of(1.61, FREQS, 0.02), 0.02, FREQS)
    assert np.allclose(n, 1.61)
    with pytest.raises(AnalysisError):
        Analysis.phase_to_index(np.zeros(3), 0.0, FREQS[:3])
    with pytest.raises(AnalysisError):
        Analysis.phase_to_index(np.zeros(2), 0.01, [0.0, 1e9])


def test_constant_index_has_equal_group_index():
    n_g, dn = Analysis.group_index(np.full(FREQS.size, 1.61), FREQS)
    assert np.allclose(n_g, 1.61)
    assert np.allclose(dn, 0.0)


def test_group_index_matches_lorentz_model():
    freqs = np.arange(8e9, 14e9 + 1.0, 15e6)
    f0, linewidth = 11e9, 50e6
    gamma = 2 * np.pi * linewidth
    n, n_g = lorentz_index(freqs, f0, linewidth, strength=5 * gamma ** 2)
    d = 0.1
    result = Analysis.dispersion_from_phase(phase_of(n, freqs, d), freqs, d)
    away = np.abs(freqs - f0) >= 5 * linewidth
    away[[0, -1]] = False
    assert np.allclose(result.n, n, rtol=1e-12)
    assert np.max(np.abs(result.n_g[away] - n_g[away]) / np.abs(n_g[away])) < 1e-3


def test_group_index_smoothing_window_validation():
    n = np.linspace(1.0, 1.1, 50)
    smoothed, _ = Analysis.group_index(n, FREQS[:50], smoothing_window=7)
    assert smoothed.shape == n.shape
    with pytest.raises(AnalysisError):
        Analysis.group_index(n, FREQS[:50], smoothing_window=6)
    with pytest.raises(AnalysisError):
        Analysis.group_index(n[:2], FREQS[:2])


def test_regime_boundaries():
    labels = Analysis.regime_labels([1.0, 0.999, 0.06, 0.05, -0.05, -0.06, np.nan], zero_tol=0.05)
    assert list(labels) == ["subluminal", "superluminal", "superluminal", "infinite", "infinite", "negative", ""]


def test_classify_regimes_merges_runs():
    freqs = np.arange(7.0)
    segments = Analysis.classify_regimes([1.5, 1.5, 0.5, 0.5, 0.0, -0.5, 1.2], freqs)
    assert [(s.f_start, s.f_end, s.regime) for s in segments.segments] == [
        (0.0, 1.0, "subluminal"),
        (2.0, 3.0, "superluminal"),
        (4.0, 4.0, "infinite"),
        (5.0, 5.0, "negative"),
        (6.0, 6.0, "subluminal"),
    ]
    assert segments.f_step == 1.0
    total, longest = Analysis.superluminal_bandwidth(segments)
    assert (total, longest) == (4.0, 4.0)
    assert Analysis.superluminal_bandwidth(segments, 3.0, 4.0) == (2.0, 2.0)


def test_classify_regimes_linear_sweep_through_zero():
    freqs = np.linspace(8e9, 14e9, 201)
    segments = Analysis.classify_regimes(np.linspace(0.5, -0.5, 201), freqs).segments
    assert [s.regime for s in segments] == ["superluminal", "infinite", "negative"]
    assert segments[0].f_start == freqs[0]
    assert segments[-1].f_end == freqs[-1]
    assert all(a.f_end < b.f_start for a, b in zip(segments, segments[1:]))



def dip_spectrum(depth=0.999, center=11e9, width=0.3e9, freqs=FREQS, polarization="TM"):
    magnitude = 1.0 - depth * np.exp(-((freqs - center) / width) ** 2)
    return ComplexSpectrum(freqs, magnitude.astype(complex), SpectrumMeta(kind="normalized", polarization=polarization))


def test_detect_bandgap_finds_dip():
    gap = Analysis.detect_bandgap(dip_spectrum(), threshold_db=10.0)
    assert gap is not None
    assert gap.contains(11e9)
    assert gap.f_low < gap.f_center < gap.f_high
    assert gap.depth_dB >= 10.0
    assert gap.polarization == "TM"
    assert gap.f_center == pytest.approx(11e9, abs=50e6)


def notch_spectrum():
    inside = (FREQS >= 10.5e9 - 1.0) & (FREQS <= 11.5e9 + 1.0)
    return ComplexSpectrum(FREQS, np.where(inside, 0.01, 1.0).astype(complex))


def test_detect_bandgap_square_notch():
    gap = Analysis.detect_bandgap(notch_spectrum(), threshold_db=10.0)
    step = FREQS[1] - FREQS[0]
    assert gap.f_low == pytest.approx(10.5e9, abs=step)
    assert gap.f_high == pytest.approx(11.5e9, abs=step)
    assert gap.depth_dB == pytest.approx(40.0)
    assert gap.passband_dB == pytest.approx(0.0)


def test_detect_bandgap_ignores_global_phase():
    notch = notch_spectrum()
    turned = ComplexSpectrum(FREQS, notch.values * np.exp(1j * 2.3))
    plain = Analysis.detect_bandgap(notch).model_dump(exclude={"polarization"})
    rotated = Analysis.detect_bandgap(turned).model_dump(exclude={"polarization"})
    assert rotated == pytest.approx(plain, abs=1e-6)



def test_detect_bandgap_none_on_flat_spectrum():
    flat = ComplexSpectrum(FREQS, np.ones(FREQS.size))
    assert Analysis.detect_bandgap(flat) is None
    assert Analysis.detect_bandgap(dip_spectrum(depth=0.5)) is None


def test_transmission_db_floor():
    t = ComplexSpectrum(FREQS[:3], [1.0, 0.1, 0.0])
    assert list(Analysis.transmission_db(t)) == pytest.approx([0.0, -20.0, Analysis.FLOOR_DB])


def test_normalize_divides_and_tracks_convergence():
    ref = ComplexSpectrum(FREQS, np.full(FREQS.size, 2.0 + 0j), SpectrumMeta(kind="reference", converged=False))
    raw = ComplexSpectrum(FREQS, np.full(FREQS.size, 1.0j), SpectrumMeta(kind="raw", layers_N=3))
    t = Analysis.normalize(raw, ref)
    assert np.allclose(t.values, 0.5j)
    assert t.meta.kind == "normalized"
    assert t.meta.layers_N == 3
    assert t.meta.converged is False


def test_normalize_zero_sample_gives_zero_transmission():
    ref = ComplexSpectrum(FREQS, np.full(FREQS.size, 0.3 - 0.4j))
    t = Analysis.normalize(ComplexSpectrum(FREQS, np.zeros(FREQS.size)), ref)
    assert np.all(t.values == 0)
    assert Analysis.detect_bandgap(t) is None



def test_normalize_rejects_mismatch_and_vanishing_reference():
    ref = ComplexSpectrum(FREQS, np.ones(FREQS.size))
    with pytest.raises(SpectrumMismatchError):
        Analysis.normalize(ComplexSpectrum(FREQS[:-1], np.ones(FREQS.size - 1)), ref)
    holes = np.ones(FREQS.size)
    holes[10] = 0.0
    with pytest.raises(SpectrumMismatchError, match="GHz"):
        Analysis.normalize(ref, ComplexSpectrum(FREQS, holes))


def test_fit_slab_index_recovers_index():
    runs = []
    for d in (6.35e-3, 12.7e-3, 25.4e-3):
        t = np.exp(1j * phase_of(1.61, FREQS, d))
        runs.append((d, ComplexSpectrum(FREQS, t)))
    fit = Analysis.fit_slab_index(runs)
    assert fit.index == pytest.approx(1.61, rel=1e-9)
    assert fit.indices == pytest.approx([1.61] * 3, rel=1e-9)
    assert max(fit.residuals) < 1e-9
    with pytest.raises(AnalysisError):
        Analysis.fit_slab_index(runs[:1])


def test_dispersion_from_spectrum_uses_carried_thickness():
    d = 0.03
    t = ComplexSpectrum(FREQS, np.exp(1j * phase_of(1.4, FREQS, d)), SpectrumMeta(thickness=d, layers_N=2))
    result = Analysis.dispersion_from_spectrum(t)
    assert np.allclose(result.n, 1.4)
    assert np.allclose(result.n_g, 1.4)
    assert result.d == d
    assert result.meta["layers_N"] == 2
    assert set(result.regime) == {"subluminal"}
    with pytest.raises(AnalysisError):
        Analysis.dispersion_from_spectrum(ComplexSpectrum(FREQS, np.ones(FREQS.size)))


def test_dispersion_from_spectrum_applies_m():
    d = 0.03
    t = ComplexSpectrum(FREQS, np.exp(1j * phase_of(1.4, FREQS, d)))
    shifted = Analysis.dispersion_from_spectrum(t, d=d, m=1, anchor="none")
    assert np.allclose(shifted.delta_phi, phase_of(1.4, FREQS, d) + 2 * np.pi)
    assert shifted.m_corrections == 1


def test_anomalous_band_sits_in_resonance():
    freqs = np.arange(10e9, 12e9 + 1.0, 1e6)
    linewidth = 50e6
    n, _ = lorentz_index(freqs, 11e9, linewidth, strength=5 * (2 * np.pi * linewidth) ** 2)
    result = Analysis.dispersion_from_phase(phase_of(n, freqs, 0.1), freqs, 0.1)
    band = Analysis.anomalous_dispersion_band(result, gap_report(10.9e9, 11.1e9))
    assert band is not None
    assert band.f_start < 11e9 < band.f_end
    assert band.min_dn_domega < 0
    assert len(band.zero_crossings) == 2
    assert all(abs(f - 11e9) < 100e6 for f in band.zero_crossings)


def test_anomalous_band_absent_for_normal_dispersion():
    n = 1.5 + 0.01 * (FREQS / 14e9) ** 2
    result = Analysis.dispersion_from_phase(phase_of(n, FREQS, 0.1), FREQS, 0.1)
    assert Analysis.anomalous_dispersion_band(result, gap_report()) is None

import math

import numpy as np
import pytest

import settings
from errors import GeometryDomainError, GridBudgetError, NumericalInstabilityError, SourceBandwidthError
from knowledge_base import GAP_CENTER_HZ, GAP_CENTER_TOLERANCE_HZ, MAX_LAYERS, ROD_OUTER_RADIUS
from oracles import C, slab_transmission
from Stages.AnalysisStage.Analysis import (
    classify_regimes,
    detect_bandgap,
    dispersion_from_spectrum,
    normalize,
    superluminal_bandwidth,
    transmission_db,
    wrap_phase,
)
from Stages.FdtdStage import Fdtd
from Stages.FdtdStage.Fdtd import (
    COURANT_LIMIT_2D,
    DomainSpec,
    Polarization,
    SimConfig,
    SweepSpec,
    YeeSimulation,
    domain_for,
    reference_cache_key,
    run_reference,
    run_transmission,
)
from Stages.FdtdStage.cpml import axis_coefficients, layer_depth
from Stages.FdtdStage.source import GaussianPulse
from Stages.GeometryStage.Geometry import CrystalSpec, rasterize, slab_grid, tube_inner_radius_for_aff

COARSE_SWEEP = SweepSpec(f_start=8e9, f_stop=14e9, f_step=0.25e9)


def test_pulse_band_edges_are_at_minus_20_db():
    pulse = GaussianPulse(11e9, 10e9)
    lo, hi = pulse.band()
    assert (lo, hi) == (6e9, 16e9)
    level = math.exp(-(math.pi * pulse.tau * (hi - pulse.center_freq)) ** 2)
    assert level == pytest.approx(0.1)
    assert pulse.covers(8e9, 14e9)
    assert not pulse.covers(5e9, 14e9)
    assert abs(pulse(0.0)) < 1e-10


def test_cpml_profile_is_zero_inside_and_graded_in_layer():
    positions = np.arange(101, dtype=float)
    depth = layer_depth(positions, 100.0, 10)
    assert depth[10:91].max() == 0.0
    assert depth[0] == 1.0 and depth[100] == 1.0
    coeffs = axis_coefficients(positions, 100.0, 10, 0.25e-3, 5e-13)
    assert coeffs.b.shape == (101, 1)
    assert np.all(coeffs.c[20:80] == 0.0)
    assert np.all(coeffs.inv_kappa[20:80] == 1.0)
    assert np.all((coeffs.b > 0) & (coeffs.b <= 1))


def test_sim_config_rejects_courant_above_limit():
    with pytest.raises(ValueError):
        SimConfig(courant_factor=0.75)
    assert SimConfig().courant_factor < COURANT_LIMIT_2D


def test_domain_layout_orders_regions():
    domain = DomainSpec(cell_size=0.25e-3, ny=4, region_cells=100)
    layout = domain.layout(SimConfig())
    assert 12 < layout["source"] < layout["region_start"] < layout["region_end"] < layout["probe"] < layout["nx"] - 12
    assert layout["region_end"] - layout["region_start"] == 100


def test_domain_for_reserves_region_length():
    grid = slab_grid(5e-3, 1.61, 0.25e-3)
    assert domain_for(grid).region_cells == grid.nx
    assert domain_for(grid, 20e-3).region_cells == 80


def test_vacuum_phase_advances_with_distance():
    cfg = SimConfig()
    h = cfg.cell_size
    nx = 260
    sim = YeeSimulation(np.ones((nx, 4)), Polarization.TE, COARSE_SWEEP, cfg, h, 40, [100, 200])
    assert sim.run()
    near, far = sim.spectra()
    expected = 2.0 * np.pi * COARSE_SWEEP.freqs() * (100 * h) / C
    assert np.max(np.abs(wrap_phase(np.angle(far / near) - expected))) < np.deg2rad(1.0)
    assert np.allclose(np.abs(far / near), 1.0, atol=0.02)


@pytest.mark.parametrize("pol", [Polarization.TE, Polarization.TM])
def test_slab_matches_transfer_matrix(pol):
    grid = slab_grid(12.7e-3, 1.61, 0.25e-3)
    domain = domain_for(grid)
    cfg = SimConfig()
    t = normalize(run_transmission(grid, pol, COARSE_SWEEP, cfg, domain), run_reference(domain, pol, COARSE_SWEEP, cfg))
    expected = slab_transmission(t.freqs, 1.61, 12.7e-3)

    assert t.meta.converged
    assert np.all(np.abs(t.values) <= 1.02)
    assert np.max(np.abs(np.abs(t.values) - np.abs(expected)) / np.abs(expected)) < 0.02
    assert np.max(np.abs(wrap_phase(np.angle(t.values) - np.angle(expected)))) < np.deg2rad(2.0)


def test_reference_is_cached_and_deterministic():
    domain = DomainSpec(cell_size=0.25e-3, ny=4, region_cells=20)
    cfg = SimConfig()
    first = run_reference(domain, Polarization.TE, COARSE_SWEEP, cfg)
    assert run_reference(domain, Polarization.TE, COARSE_SWEEP, cfg) is first
    Fdtd.clear_reference_cache()
    again = run_reference(domain, Polarization.TE, COARSE_SWEEP, cfg)
    assert again is not first
    assert np.array_equal(first.values, again.values)
    assert first.meta.kind == "reference"
    assert first.meta.config_hash == reference_cache_key(domain, Polarization.TE, COARSE_SWEEP, cfg)


def test_energy_decays_after_source_turns_off():
    cfg = SimConfig(run_time=2400, check_interval=10)
    sim = YeeSimulation(np.ones((200, 4)), Polarization.TM, COARSE_SWEEP, cfg, cfg.cell_size, 40, [150])
    assert sim.run()
    source_off = cfg.pulse().duration / sim.dt
    trace = [(step, e) for step, e in sim.state.energy_trace if step > source_off]
    peak = sim.state.peak_energy
    assert len(trace) > 50
    for (_, before), (_, after) in zip(trace, trace[1:]):
        assert after <= 1.02 * before + 1e-6 * peak
    assert trace[-1][1] < cfg.decay_threshold * peak


def test_unstable_time_step_is_detected():
    cfg = SimConfig.model_construct(courant_factor=1.2)
    sim = YeeSimulation(np.ones((80, 4)), Polarization.TE, COARSE_SWEEP, cfg, 0.25e-3, 30, [60])
    with pytest.raises(NumericalInstabilityError, match="courant_factor"):
        sim.run()


def test_sweep_outside_source_band_is_rejected():
    grid = slab_grid(5e-3, 1.61, 0.25e-3)
    with pytest.raises(SourceBandwidthError):
        run_transmission(grid, Polarization.TE, SweepSpec(f_start=2e9, f_stop=5e9, f_step=1e9), SimConfig())


def test_cell_budget_is_enforced(monkeypatch):
    monkeypatch.setattr(settings, "MAX_GRID_CELLS", 100)
    grid = slab_grid(5e-3, 1.61, 0.25e-3)
    with pytest.raises(GridBudgetError):
        run_transmission(grid, Polarization.TE, COARSE_SWEEP, SimConfig())


def test_grid_must_match_domain():
    grid = slab_grid(5e-3, 1.61, 0.25e-3)
    with pytest.raises(GeometryDomainError):
        run_transmission(grid, Polarization.TE, COARSE_SWEEP, SimConfig(), DomainSpec(cell_size=0.25e-3, ny=8, region_cells=40))
    with pytest.raises(GeometryDomainError):
        run_transmission(grid, Polarization.TE, COARSE_SWEEP, SimConfig(), DomainSpec(cell_size=0.25e-3, ny=4, region_cells=5))


def test_raw_spectrum_metadata():
    grid = slab_grid(5e-3, 1.61, 0.25e-3)
    raw = run_transmission(grid, Polarization.TM, COARSE_SWEEP, SimConfig())
    assert raw.meta.kind == "raw"
    assert raw.meta.polarization == "TM"
    assert raw.meta.thickness == 5e-3
    assert raw.meta.convention == "exp(-iwt)"
    assert raw.meta.steps > 0
    assert len(raw) == COARSE_SWEEP.points


def test_empty_domain_matches_reference():
    grid = rasterize(CrystalSpec(outer_radius_R=ROD_OUTER_RADIUS, lattice_constant_a=2 * ROD_OUTER_RADIUS), 0.25e-3)
    domain = domain_for(grid, 10e-3)
    cfg = SimConfig()
    for pol in (Polarization.TE, Polarization.TM):
        raw = run_transmission(grid, pol, COARSE_SWEEP, cfg, domain)
        reference = run_reference(domain, pol, COARSE_SWEEP, cfg)
        assert np.max(np.abs(raw.values / reference.values - 1.0)) < 0.01


def test_polarization_order_does_not_matter():
    grid = slab_grid(5e-3, 1.61, 0.25e-3)
    cfg = SimConfig()
    te_first = [run_transmission(grid, pol, COARSE_SWEEP, cfg) for pol in (Polarization.TE, Polarization.TM)]
    Fdtd.clear_reference_cache()
    tm_first = [run_transmission(grid, pol, COARSE_SWEEP, cfg) for pol in (Polarization.TM, Polarization.TE)]
    assert np.array_equal(te_first[0].values, tm_first[1].values)
    assert np.array_equal(te_first[1].values, tm_first[0].values)


def _crystal(layers: int, aff: float = 0.60) -> CrystalSpec:
    return CrystalSpec(
        outer_radius_R=ROD_OUTER_RADIUS,
        inner_radius_r=tube_inner_radius_for_aff(aff, ROD_OUTER_RADIUS),
        lattice_constant_a=2 * ROD_OUTER_RADIUS,
        layers_N=layers,
    )


def _crystal_transmission(layers: int, pol: Polarization, cell_size: float = 0.25e-3, aff: float = 0.60):
    cfg = SimConfig(cell_size=cell_size)
    sweep = SweepSpec(f_step=50e6)
    grid = rasterize(_crystal(layers, aff), cell_size)
    domain = domain_for(grid)
    return normalize(run_transmission(grid, pol, sweep, cfg, domain), run_reference(domain, pol, sweep, cfg))


@pytest.mark.slow
@pytest.mark.parametrize("pol", [Polarization.TE, Polarization.TM])
def test_eighteen_layer_gap_near_eleven_ghz(pol):
    gap = detect_bandgap(_crystal_transmission(MAX_LAYERS, pol), 10.0)
    assert gap is not None
    assert gap.depth_dB >= 10.0
    assert abs(gap.f_center - GAP_CENTER_HZ) <= GAP_CENTER_TOLERANCE_HZ


@pytest.mark.slow
def test_gap_center_converges_with_resolution():
    coarse = detect_bandgap(_crystal_transmission(MAX_LAYERS, Polarization.TM, 0.25e-3), 10.0)
    fine = detect_bandgap(_crystal_transmission(MAX_LAYERS, Polarization.TM, 0.125e-3), 10.0)
    assert abs(fine.f_center - coarse.f_center) / coarse.f_center < 0.01


def _in_band_depth(t, f_lo: float = 10e9, f_hi: float = 12.5e9) -> float:
    level = transmission_db(t)
    band = (t.freqs >= f_lo) & (t.freqs <= f_hi)
    return float(np.median(level) - level[band].min())


@pytest.mark.slow
def test_tm_gap_forms_faster_than_te():
    te = _crystal_transmission(6, Polarization.TE)
    tm = _crystal_transmission(6, Polarization.TM)
    assert _in_band_depth(tm) > _in_band_depth(te)
    gap = detect_bandgap(tm, 5.0)
    assert gap is not None
    assert abs(gap.f_center - GAP_CENTER_HZ) <= GAP_CENTER_TOLERANCE_HZ


@pytest.mark.slow
def test_lower_aff_gives_narrower_shallower_gap():
    for pol in (Polarization.TE, Polarization.TM):
        high = detect_bandgap(_crystal_transmission(MAX_LAYERS, pol, aff=0.60), 10.0)
        low = detect_bandgap(_crystal_transmission(MAX_LAYERS, pol, aff=0.32), 10.0)
        assert high is not None
        assert low is None or (low.width < high.width and low.depth_dB < high.depth_dB)


@pytest.mark.slow
def test_group_index_below_one_across_the_gap():
    t = _crystal_transmission(MAX_LAYERS, Polarization.TM)
    gap = detect_bandgap(t, 10.0)
    result = dispersion_from_spectrum(t)
    segments = classify_regimes(result.n_g, result.freqs)
    _, longest = superluminal_bandwidth(segments, gap.f_low, gap.f_high)
    assert longest >= 0.5 * gap.width
    inside = [s for s in segments.segments if s.f_end >= gap.f_low and s.f_start <= gap.f_high]
    assert "infinite" in {s.regime for s in inside}


@pytest.mark.slow
def test_tm_superluminal_band_is_at_least_te():
    totals = {}
    for pol in (Polarization.TE, Polarization.TM):
        t = _crystal_transmission(MAX_LAYERS, pol)
        gap = detect_bandgap(t, 10.0)
        result = dispersion_from_spectrum(t)
        totals[pol], _ = superluminal_bandwidth(classify_regimes(result.n_g, result.freqs), gap.f_low, gap.f_high)
    assert totals[Polarization.TM] >= totals[Polarization.TE] > 0.0

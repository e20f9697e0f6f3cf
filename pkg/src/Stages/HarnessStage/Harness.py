"""
PBGLab command line: simulate, analyze, calibrate, report and run.

    python src/Stages/HarnessStage/Harness.py simulate --config campaign.json --out out/
    python src/Stages/HarnessStage/Harness.py analyze --in out/ --out out/analysis
    python src/Stages/HarnessStage/Harness.py report --in out/analysis --out out/report
    python src/Stages/HarnessStage/Harness.py calibrate --config campaign.json
    python src/Stages/HarnessStage/Harness.py run --config campaign.json --out out/

Exit code is 0 only if every run succeeded and every validity check passed.
"""
import argparse
import logging
import os
import sys
from collections import defaultdict
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

import settings
from errors import CampaignError, PbgError
from knowledge_base import MEASURED_ACRYLIC_INDEX
from provenance import CODE_VERSION
from Stages.AnalysisStage import Analysis
from Stages.AnalysisStage.models import (
    AnomalousBand,
    BandgapReport,
    ComplexSpectrum,
    FarFromGapCheck,
    SlabFitReport,
)
from Stages.FdtdStage import Fdtd
from Stages.GeometryStage.Geometry import Orientation, rasterize, slab_grid
from Stages.HarnessStage.campaign import (
    Campaign,
    Manifest,
    ReferenceRecord,
    RunRecord,
    RunSpec,
    layers_contiguous,
    read_manifest,
    write_manifest,
)
from Stages.IOStage import tables
from Stages.IOStage.Config import RunDescription, load_config
from Stages.IOStage.Touchstone import write_touchstone

logger = logging.getLogger(__name__)

SUMMARY_NAME = "analysis_summary.json"
CALIBRATION_NAME = "calibration.json"


class AnalysisRecord(BaseModel):
    run_hash: str
    group: str
    aff: float
    pol: str
    orientation: str
    layers_N: int
    thickness: float
    status: str = "ok"
    error: Optional[str] = None
    layer_unwrap: bool = False
    m_corrections: int = 0
    gap: Optional[BandgapReport] = None
    check: Optional[FarFromGapCheck] = None
    anomalous: Optional[AnomalousBand] = None
    superluminal_total: float = 0.0
    superluminal_longest: float = 0.0
    min_n_g: Optional[float] = None
    infinite_velocity: bool = False
    artifacts: Dict[str, str] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status in ("ok", "skipped") and (self.check is None or self.check.passed)


class AnalysisSummary(BaseModel):
    config_hash: str
    code_version: str = CODE_VERSION
    parameters: dict
    notices: List[str] = Field(default_factory=list)
    records: List[AnalysisRecord]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.records)


class CalibrationReport(BaseModel):
    index: float
    target: float
    tolerance: float
    relative_error: float
    passed: bool
    cell_size: float
    polarization: str
    measured_index: float = MEASURED_ACRYLIC_INDEX
    fit: SlabFitReport


# --------------------------------------------------------------------------- simulate


def _simulate_job(job: Tuple[str, str, RunSpec]) -> Tuple[str, str, Optional[ComplexSpectrum], Optional[str]]:
    """Worker: one crystal or reference simulation. Errors are returned, not raised."""
    kind, key, run = job
    try:
        if kind == "ref":
            spectrum = Fdtd.run_reference(run.domain, run.pol, run.sweep, run.sim)
        else:
            grid = rasterize(run.crystal, run.sim.cell_size, supersample=run.sim.supersample)
            spectrum = Fdtd.run_transmission(grid, run.pol, run.sweep, run.sim, run.domain)
            spectrum = spectrum.with_meta(config_hash=key)
        return kind, key, spectrum, None
    except Exception as e:
        logger.error("%s %s failed: %s", kind, key, e)
        return kind, key, None, f"{type(e).__name__}: {e}"


def _rel(path: Path, root: Path) -> str:
    return path.relative_to(root).as_posix()


def _write_spectrum(directory: Path, spectrum: ComplexSpectrum, root: Path) -> Dict[str, str]:
    """Write CSV and Touchstone copies; returns their paths relative to `root`."""
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "spectrum.csv"
    s1p_path = directory / "spectrum.s1p"
    csv_path.write_text(tables.write_spectrum_csv(spectrum), encoding="utf-8")
    s1p_path.write_bytes(write_touchstone(spectrum, "RI"))
    return {"csv": _rel(csv_path, root), "touchstone": _rel(s1p_path, root)}


def _read_spectrum(directory: Path) -> ComplexSpectrum:
    return tables.read_spectrum_csv((directory / "spectrum.csv").read_text(encoding="utf-8"))


def _map_jobs(jobs: List[tuple], workers: int) -> List[tuple]:
    if not jobs:
        return []
    if workers <= 1 or len(jobs) == 1:
        return [_simulate_job(job) for job in jobs]
    with Pool(processes=min(workers, len(jobs))) as pool:
        return pool.map(_simulate_job, jobs)


def _prepare(config_path: Path, resolution: Optional[float], orientation: Optional[str]) -> RunDescription:
    description = load_config(Path(config_path).read_bytes())
    if resolution:
        description = description.with_resolution(resolution)
    if orientation:
        description = description.with_orientation(Orientation(orientation))
    return description


def cmd_simulate(config_path: Path, out_dir: Path, jobs: Optional[int] = None,
                 resolution: Optional[float] = None, orientation: Optional[str] = None) -> Manifest:
    """
    Simulate every run of the campaign plus one vacuum reference per shared
    domain, and persist raw, reference and normalized spectra.

    Existing artifacts are reused; the manifest counts the simulations
    actually performed in `fdtd_invocations`.
    """
    description = _prepare(config_path, resolution, orientation)
    campaign = Campaign(description)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = jobs or settings.DEFAULT_JOBS

    ref_dirs = {key: out_dir / key / "ref" for key in campaign.references()}
    run_dirs = {run.run_hash: out_dir / run.run_hash for run in campaign.runs}

    pending: List[tuple] = []
    for key, run in campaign.references().items():
        if (ref_dirs[key] / "spectrum.csv").exists():
            logger.info("reference %s cached", key)
        else:
            pending.append(("ref", key, run))
    for run in campaign.runs:
        if (run_dirs[run.run_hash] / "raw" / "spectrum.csv").exists():
            logger.info("run %s (%s N=%d) cached", run.run_hash, run.group, run.layers_N)
        else:
            pending.append(("run", run.run_hash, run))

    logger.info("%d runs, %d references, %d simulations to perform with %d worker(s)",
                len(campaign.runs), len(ref_dirs), len(pending), workers)
    results = {(kind, key): (spectrum, error) for kind, key, spectrum, error in _map_jobs(pending, workers)}

    references: Dict[str, ReferenceRecord] = {}
    ref_spectra: Dict[str, ComplexSpectrum] = {}
    for key, run in campaign.references().items():
        spectrum, error = results.get(("ref", key), (None, None))
        cached = ("ref", key) not in results
        if cached:
            try:
                spectrum = _read_spectrum(ref_dirs[key])
            except PbgError as e:
                logger.error("cached reference %s unreadable: %s", key, e)
                spectrum, error = None, f"{type(e).__name__}: {e}"
        if spectrum is not None:
            artifacts = _write_spectrum(ref_dirs[key], spectrum, out_dir) if not cached else {
                "csv": _rel(ref_dirs[key] / "spectrum.csv", out_dir),
                "touchstone": _rel(ref_dirs[key] / "spectrum.s1p", out_dir)}
            ref_spectra[key] = spectrum
            references[key] = ReferenceRecord(reference_hash=key, pol=run.pol, status="ok",
                                              converged=spectrum.meta.converged, cached=cached, artifacts=artifacts)
        else:
            references[key] = ReferenceRecord(reference_hash=key, pol=run.pol, status="failed", error=error)

    records: List[RunRecord] = []
    for run in campaign.runs:
        key = run.run_hash
        record = dict(
            run_hash=key, group=run.group, aff=run.aff, layers_N=run.layers_N, pol=run.pol,
            orientation=run.crystal.orientation, rod_model=run.crystal.rod_model,
            thickness=run.thickness, reference_hash=run.reference_hash,
        )
        raw, error = results.get(("run", key), (None, None))
        cached = ("run", key) not in results
        try:
            if cached:
                raw = _read_spectrum(run_dirs[key] / "raw")
            if raw is None:
                raise CampaignError(error or "simulation produced no spectrum")
            if run.reference_hash not in ref_spectra:
                raise CampaignError(f"reference {run.reference_hash} failed: {references[run.reference_hash].error}")
            artifacts = {}
            if not cached:
                artifacts.update({f"raw_{k}": v for k, v in _write_spectrum(run_dirs[key] / "raw", raw, out_dir).items()})
            else:
                artifacts["raw_csv"] = _rel(run_dirs[key] / "raw" / "spectrum.csv", out_dir)
            norm_dir = run_dirs[key] / "norm"
            if cached and (norm_dir / "spectrum.csv").exists():
                norm = _read_spectrum(norm_dir)
                artifacts["norm_csv"] = _rel(norm_dir / "spectrum.csv", out_dir)
            else:
                norm = Analysis.normalize(raw, ref_spectra[run.reference_hash]).with_meta(config_hash=key)
                artifacts.update({f"norm_{k}": v for k, v in _write_spectrum(norm_dir, norm, out_dir).items()})
            records.append(RunRecord(**record, status="ok", converged=norm.meta.converged,
                                     cached=cached, artifacts=artifacts))
        except (PbgError, OSError) as e:
            logger.error("run %s (%s N=%d) failed: %s", key, run.group, run.layers_N, e)
            records.append(RunRecord(**record, status="failed", error=str(e) if error is None else error))

    manifest = Manifest(
        config_hash=description.config_hash(),
        description=description.model_dump(mode="json"),
        runs=records,
        references=list(references.values()),
        fdtd_invocations=len(pending),
    ).sorted()
    write_manifest(out_dir, manifest)
    failed = sum(r.status != "ok" for r in manifest.runs)
    logger.info("simulate finished: %d ok, %d failed, %d simulations", len(records) - failed, failed, len(pending))
    return manifest


# --------------------------------------------------------------------------- analyze


def _group_phases(spectra: Dict[int, ComplexSpectrum], description: RunDescription,
                  use_layers: bool) -> Tuple[Dict[int, np.ndarray], Dict[int, int]]:
    """Unwrapped phase delay and total applied 2 pi turns per layer count."""
    cfg = description.analysis
    folded = {N: Analysis.unwrap_freq(np.angle(t.values)) for N, t in spectra.items()}
    if use_layers:
        corrected, _ = Analysis.unwrap_layer_spectra(folded, threshold=cfg.slip_threshold)
        first = min(corrected)
        freqs = spectra[first].freqs
        shift = 0.0
        if cfg.anchor == "dc":
            shift = Analysis.anchor_to_dc(corrected[first], freqs, cfg.dc_fit_points)[0] - corrected[first][0]
        phases = {N: phi + shift for N, phi in corrected.items()}
    else:
        phases = {}
        for N, phi in folded.items():
            if cfg.anchor == "dc":
                phi = Analysis.anchor_to_dc(phi, spectra[N].freqs, cfg.dc_fit_points)
            phases[N] = phi
    turns = {N: int(np.round(np.median(phases[N] - folded[N]) / Analysis.TWO_PI)) for N in phases}
    return phases, turns


def cmd_analyze(in_dir: Path, out_dir: Path, threshold_db: Optional[float] = None,
                zero_tol: Optional[float] = None) -> AnalysisSummary:
    """
    Dispersion, bandgap, regimes and the far-from-gap check for every
    simulated run, with the layer-axis phase correction applied per group
    when its layer counts are contiguous.
    """
    manifest = read_manifest(in_dir)
    description = RunDescription.model_validate(manifest.description)
    updates = {}
    if threshold_db is not None:
        updates["threshold_db"] = threshold_db
    if zero_tol is not None:
        updates["zero_tol"] = zero_tol
    cfg = description.analysis.model_copy(update=updates)
    description = description.model_copy(update={"analysis": cfg})
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    notices: List[str] = []
    records: List[AnalysisRecord] = []
    grouped: Dict[str, List[RunRecord]] = defaultdict(list)
    for run in manifest.runs:
        grouped[run.group].append(run)

    for group, runs in sorted(grouped.items()):
        ok = sorted((r for r in runs if r.status == "ok" and r.layers_N > 0), key=lambda r: r.layers_N)
        for r in runs:
            if r.status != "ok":
                records.append(_record(r, status="failed", error=r.error or "simulation failed"))
            elif r.layers_N == 0:
                records.append(_record(r, status="skipped", error="empty crystal has no thickness"))
        if not ok:
            continue
        spectra = {r.layers_N: _read_spectrum((Path(in_dir) / r.artifacts["norm_csv"]).parent) for r in ok}
        layers = [r.layers_N for r in ok]
        contiguous = layers_contiguous(layers)
        use_layers = cfg.layer_unwrap and contiguous
        if cfg.layer_unwrap and not contiguous and len(layers) >= 2:
            notice = f"{group}: layer counts {layers} not contiguous; layer unwrap skipped, frequency-only unwrap used"
            logger.warning(notice)
            notices.append(notice)
        phases, turns = _group_phases(spectra, description, use_layers)

        for r in ok:
            t = spectra[r.layers_N]
            records.append(_analyze_run(r, t, phases[r.layers_N], turns[r.layers_N], use_layers, description, out_dir))

    summary = AnalysisSummary(
        config_hash=manifest.config_hash,
        parameters={"analysis": cfg.model_dump(mode="json"), "description": description.model_dump(mode="json")},
        notices=notices,
        records=sorted(records, key=lambda r: (r.group, r.layers_N)),
    )
    (out_dir / SUMMARY_NAME).write_text(summary.model_dump_json(indent=2), encoding="utf-8")
    failed = [r for r in summary.records if not r.passed]
    logger.info("analyze finished: %d records, %d not passing", len(summary.records), len(failed))
    return summary


def _record(run: RunRecord, **fields) -> AnalysisRecord:
    return AnalysisRecord(
        run_hash=run.run_hash,
        group=run.group,
        aff=run.aff,
        pol=run.pol.value,
        orientation=run.orientation.value,
        layers_N=run.layers_N,
        thickness=run.thickness,
        **fields,
    )


def _analyze_run(run: RunRecord, t: ComplexSpectrum, phase: np.ndarray, turns: int, use_layers: bool,
                 description: RunDescription, out_dir: Path) -> AnalysisRecord:
    cfg = description.analysis
    try:
        result = Analysis.dispersion_from_phase(
            phase, t.freqs, run.thickness, m=turns, smoothing_window=cfg.smoothing_window, zero_tol=cfg.zero_tol,
            meta={"polarization": run.pol.value, "layers_N": run.layers_N, "convention": t.meta.convention,
                  "anchor": cfg.anchor, "layer_unwrap": use_layers},
        )
        gap = Analysis.detect_bandgap(t, cfg.threshold_db)
        segments = Analysis.classify_regimes(result.n_g, result.freqs, cfg.zero_tol)
        check = Analysis.check_far_from_gap(result, gap, cfg.far_margin) if gap else None
        anomalous = Analysis.anomalous_dispersion_band(result, gap) if gap else None
        lo, hi = (gap.f_low, gap.f_high) if gap else (-np.inf, np.inf)
        total, longest = Analysis.superluminal_bandwidth(segments, lo, hi)
        inside = (result.freqs >= lo) & (result.freqs <= hi)
        min_n_g = float(np.min(result.n_g[inside])) if inside.any() else None
        infinite = any(s.regime == "infinite" and s.f_end >= lo and s.f_start <= hi for s in segments.segments)

        run_out = out_dir / run.run_hash / "analysis"
        run_out.mkdir(parents=True, exist_ok=True)
        artifacts = {
            "dispersion": run_out / "dispersion.csv",
            "transmission": run_out / "transmission.csv",
            "gap": run_out / "gap.json",
            "regimes": run_out / "regimes.json",
            "check": run_out / "check.json",
        }
        artifacts["dispersion"].write_text(tables.write_dispersion_csv(result), encoding="utf-8")
        artifacts["transmission"].write_text(tables.write_spectrum_csv(t), encoding="utf-8")
        artifacts["gap"].write_text(tables.dump_json(gap), encoding="utf-8")
        artifacts["regimes"].write_text(tables.dump_json(segments), encoding="utf-8")
        artifacts["check"].write_text(tables.dump_json(check), encoding="utf-8")
        if check is not None and not check.passed:
            logger.warning("%s N=%d fails the far-from-gap check (max |w dn/dw| = %.3g)",
                           run.group, run.layers_N, check.max_dispersion)
        return _record(
            run,
            layer_unwrap=use_layers,
            m_corrections=turns,
            gap=gap,
            check=check,
            anomalous=anomalous,
            superluminal_total=total,
            superluminal_longest=longest,
            min_n_g=min_n_g,
            infinite_velocity=infinite,
            artifacts={k: _rel(v, out_dir) for k, v in artifacts.items()},
        )
    except (PbgError, OSError) as e:
        logger.error("analysis of %s N=%d failed: %s", run.group, run.layers_N, e)
        return _record(run, status="failed", error=str(e))


# --------------------------------------------------------------------------- calibrate


def cmd_calibrate(config_path: Path, out_dir: Optional[Path] = None,
                  resolution: Optional[float] = None) -> CalibrationReport:
    """Simulate homogeneous sheets of each calibration thickness and fit their index."""
    description = _prepare(config_path, resolution, None)
    cal, sim, sweep = description.calibration, description.sim, description.sweep
    pol = description.polarizations[0]
    grids = [slab_grid(d, cal.index, sim.cell_size) for d in cal.thicknesses]
    domain = Fdtd.domain_for(grids[-1], max(cal.thicknesses))
    reference = Fdtd.run_reference(domain, pol, sweep, sim)

    runs = []
    for d, grid in zip(cal.thicknesses, grids):
        raw = Fdtd.run_transmission(grid, pol, sweep, sim, domain)
        runs.append((d, Analysis.normalize(raw, reference)))
    fit = Analysis.fit_slab_index(runs)
    error = (fit.index - cal.index) / cal.index
    report = CalibrationReport(
        index=fit.index,
        target=cal.index,
        tolerance=cal.tolerance,
        relative_error=error,
        passed=abs(error) <= cal.tolerance,
        cell_size=grids[0].cell_size,
        polarization=Fdtd.Polarization(pol).value,
        fit=fit,
    )
    logger.info("calibration: n = %.4f (target %.4f, %+.2f%%) %s",
                fit.index, cal.index, 100 * error, "PASS" if report.passed else "FAIL")
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / CALIBRATION_NAME).write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return report


# --------------------------------------------------------------------------- report


def _write_columns(path: Path, freqs: np.ndarray, columns: Dict[str, np.ndarray]) -> None:
    header = ",".join(["freq_hz"] + list(columns))
    table = np.column_stack([freqs] + list(columns.values()))
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")


def _layer_trends(records: List[AnalysisRecord]) -> List[str]:
    lines = []
    for group in sorted({r.group for r in records}):
        rows = sorted((r for r in records if r.group == group and r.status == "ok"), key=lambda r: r.layers_N)
        if len(rows) < 2:
            continue
        lines.append(f"  {group}")
        lines.append("      N   depth_dB   min_n_g   superluminal_MHz")
        for r in rows:
            depth = f"{r.gap.depth_dB:8.2f}" if r.gap else "       -"
            min_n_g = f"{r.min_n_g:8.3f}" if r.gap and r.min_n_g is not None else "       -"
            lines.append(f"    {r.layers_N:3d}   {depth}  {min_n_g}   {r.superluminal_total / 1e6:10.1f}")
    return lines


def _aff_comparison(records: List[AnalysisRecord]) -> List[str]:
    lines = []
    by_key: Dict[Tuple[str, str], Dict[float, AnalysisRecord]] = defaultdict(dict)
    for r in records:
        if r.status != "ok":
            continue
        current = by_key[(r.pol, r.orientation)].get(r.aff)
        if current is None or r.layers_N > current.layers_N:
            by_key[(r.pol, r.orientation)][r.aff] = r
    for (pol, orientation), per_aff in sorted(by_key.items()):
        affs = sorted(per_aff, reverse=True)
        for high, low in zip(affs, affs[1:]):
            a, b = per_aff[high], per_aff[low]
            if not (a.gap and b.gap):
                lines.append(f"  {pol} {orientation}: AFF {high:.2f} vs {low:.2f}: gap missing in one of them")
                continue
            wider = "wider" if a.gap.width > b.gap.width else "narrower"
            deeper = "deeper" if a.gap.depth_dB > b.gap.depth_dB else "shallower"
            lines.append(
                f"  {pol} {orientation} N={a.layers_N}: AFF {high:.2f} gap {wider} and {deeper} than AFF {low:.2f} "
                f"({a.gap.width / 1e9:.3f} vs {b.gap.width / 1e9:.3f} GHz, "
                f"{a.gap.depth_dB:.1f} vs {b.gap.depth_dB:.1f} dB, "
                f"centers {a.gap.f_center / 1e9:.3f} vs {b.gap.f_center / 1e9:.3f} GHz)"
            )
            if a.min_n_g is not None and b.min_n_g is not None:
                more = "more" if a.min_n_g < b.min_n_g else "less"
                lines.append(f"      minimum n_g {a.min_n_g:.3f} vs {b.min_n_g:.3f}: AFF {high:.2f} {more} superluminal")
    return lines


def _polarization_comparison(records: List[AnalysisRecord]) -> List[str]:
    lines = []
    best: Dict[Tuple[float, str, str], AnalysisRecord] = {}
    for r in records:
        if r.status != "ok":
            continue
        key = (r.aff, r.orientation, r.pol)
        if key not in best or r.layers_N > best[key].layers_N:
            best[key] = r
    for aff, orientation in sorted({(k[0], k[1]) for k in best}, reverse=True):
        te, tm = best.get((aff, orientation, "TE")), best.get((aff, orientation, "TM"))
        if te is None or tm is None or te.layers_N != tm.layers_N:
            continue
        lines.append(
            f"  AFF {aff:.2f} {orientation} N={tm.layers_N}: superluminal bandwidth TM {tm.superluminal_total / 1e6:.1f} MHz"
            f" vs TE {te.superluminal_total / 1e6:.1f} MHz"
        )
    return lines


def cmd_report(in_dir: Path, out_dir: Path) -> Path:
    """
    Columnar data behind the transmission, phase-index and group-index
    figures for every group, plus a plain-text summary.

    Returns:
        path of summary.txt
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    path = in_dir / SUMMARY_NAME
    if not path.exists():
        raise CampaignError(f"no {SUMMARY_NAME} in {in_dir}; run 'analyze' first")
    summary = AnalysisSummary.model_validate_json(path.read_text(encoding="utf-8"))
    out_dir.mkdir(parents=True, exist_ok=True)

    analyzed = [r for r in summary.records if r.status == "ok"]
    for group in sorted({r.group for r in analyzed}):
        rows = sorted((r for r in analyzed if r.group == group), key=lambda r: r.layers_N)
        results = [tables.read_dispersion_csv((in_dir / r.artifacts["dispersion"]).read_text(encoding="utf-8")) for r in rows]
        spectra = [tables.read_spectrum_csv((in_dir / r.artifacts["transmission"]).read_text(encoding="utf-8")) for r in rows]
        freqs = results[0].freqs
        labels = [f"N{r.layers_N}" for r in rows]
        _write_columns(out_dir / f"transmission_{group}.csv", freqs,
                       {label: Analysis.transmission_db(t) for label, t in zip(labels, spectra)})
        _write_columns(out_dir / f"phase_index_{group}.csv", freqs,
                       {label: res.n for label, res in zip(labels, results)})
        _write_columns(out_dir / f"group_index_{group}.csv", freqs,
                       {label: res.n_g for label, res in zip(labels, results)})

    lines = [f"PBGLab report (config {summary.config_hash}, code {summary.code_version})", ""]
    lines.append("Bandgaps and velocity regimes")
    for r in summary.records:
        head = f"  {r.group} N={r.layers_N}:"
        if r.status != "ok":
            lines.append(f"{head} {r.status} ({r.error})")
            continue
        if r.gap is None:
            lines.append(f"{head} no gap")
            continue
        lines.append(
            f"{head} gap {r.gap.f_low / 1e9:.3f}-{r.gap.f_high / 1e9:.3f} GHz, center {r.gap.f_center / 1e9:.3f} GHz, "
            f"depth {r.gap.depth_dB:.1f} dB; n_g < 1 over {r.superluminal_total / 1e6:.1f} MHz "
            f"(longest {r.superluminal_longest / 1e6:.1f} MHz), min n_g {r.min_n_g:.3f}"
            + ("; infinite group velocity reached" if r.infinite_velocity else "")
        )
        if r.anomalous is not None:
            crossings = ", ".join(f"{f / 1e9:.3f}" for f in r.anomalous.zero_crossings) or "none"
            lines.append(f"      anomalous dispersion {r.anomalous.f_start / 1e9:.3f}-{r.anomalous.f_end / 1e9:.3f} GHz,"
                         f" zero-dispersion crossings at {crossings} GHz")

    trends = _layer_trends(summary.records)
    if trends:
        lines += ["", "Layer trends"] + trends
    comparison = _aff_comparison(summary.records)
    if comparison:
        lines += ["", "AFF comparison"] + comparison
    polarization = _polarization_comparison(summary.records)
    if polarization:
        lines += ["", "Polarization comparison"] + polarization

    failures = [r for r in summary.records if r.check is not None and not r.check.passed]
    lines += ["", "Far-from-gap check"]
    if failures:
        for r in failures:
            lines.append(f"  FAILED {r.group} N={r.layers_N}: max |w dn/dw| = {r.check.max_dispersion:.3g} "
                         f"(limit {r.check.limit})")
    else:
        lines.append("  all analyzed runs pass")
    if summary.notices:
        lines += ["", "Notices"] + [f"  {n}" for n in summary.notices]

    summary_path = out_dir / "summary.txt"
    summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return summary_path


# --------------------------------------------------------------------------- CLI


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pbglab", description="Photonic bandgap transmission campaigns")
    parser.add_argument("--log-level", default=None, help="overrides PBG_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def sim_flags(p):
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--resolution", type=float, default=None, help="divide the configured cell size by this factor")
        p.add_argument("--orientation", choices=[o.value for o in Orientation], default=None)

    def analysis_flags(p):
        p.add_argument("--threshold-db", type=float, default=None)
        p.add_argument("--zero-tol", type=float, default=None)

    sim_flags(sub.add_parser("simulate", help="simulate crystals and references"))

    p = sub.add_parser("analyze", help="dispersion, gaps and regimes from simulated spectra")
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    analysis_flags(p)

    p = sub.add_parser("calibrate", help="fit the index of simulated homogeneous sheets")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--resolution", type=float, default=None)

    p = sub.add_parser("report", help="plot-ready tables and a summary")
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("run", help="simulate, analyze and report in one pipeline")
    sim_flags(p)
    analysis_flags(p)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level)
    try:
        if args.command == "simulate":
            manifest = cmd_simulate(args.config, args.out, args.jobs, args.resolution, args.orientation)
            return 0 if manifest.all_ok else 1
        if args.command == "analyze":
            summary = cmd_analyze(args.in_dir, args.out, args.threshold_db, args.zero_tol)
            return 0 if summary.all_passed else 1
        if args.command == "calibrate":
            report = cmd_calibrate(args.config, args.out, args.resolution)
            print(f"fitted n = {report.index:.4f} (target {report.target}, {100 * report.relative_error:+.2f}%, "
                  f"sheet measurement {report.measured_index}) {'PASS' if report.passed else 'FAIL'}")
            return 0 if report.passed else 1
        if args.command == "report":
            print(cmd_report(args.in_dir, args.out).read_text(encoding="utf-8"))
            return 0
        from workflow import run_workflow
        state = run_workflow(
            config_path=str(args.config), out_dir=str(args.out), jobs=args.jobs, resolution=args.resolution,
            orientation=args.orientation, threshold_db=args.threshold_db, zero_tol=args.zero_tol,
        )
        if state.get("error"):
            logger.error(state["error"])
            return 1
        return 0 if state.get("all_passed") else 1
    except PbgError as e:
        logger.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())

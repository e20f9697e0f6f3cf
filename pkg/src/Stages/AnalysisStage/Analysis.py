"""
Measurement-processing chain: normalization, phase unwrapping along frequency
and along layer count, phase-index inversion, group index, bandgap detection
and velocity-regime classification.

Phase delay follows the exp(-iwt) convention: for a sample of thickness d and
index n, arg t = (n - 1) w d / c, so

    n(w)   = 1 + c * dphi(w) / (w * d)
    n_g(w) = n(w) + w * dn/dw
"""
import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import savgol_filter

from errors import AnalysisError, SpectrumMismatchError
from Stages.AnalysisStage.models import (
    C0,
    AnomalousBand,
    BandgapReport,
    ComplexSpectrum,
    DispersionResult,
    FarFromGapCheck,
    RegimeSegment,
    RegimeSegments,
    SlabFitReport,
)

TWO_PI = 2.0 * np.pi

# Reported for |t| == 0 instead of -inf
FLOOR_DB = -400.0
# Largest |w dn/dw| accepted outside the gap
FAR_FROM_GAP_LIMIT = 0.1
DEFAULT_SLIP_THRESHOLD = -np.pi


def wrap_phase(x):
    """Fold angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)


def normalize(sample: ComplexSpectrum, reference: ComplexSpectrum) -> ComplexSpectrum:
    """
    Transmission t(w) = sample / reference.

    Raises:
        SpectrumMismatchError: different frequency grids, or a reference that
            vanishes (|ref| < 1e-9 x its peak) at some frequency
    """
    if len(sample) != len(reference) or not np.allclose(sample.freqs, reference.freqs, rtol=1e-12, atol=0.0):
        raise SpectrumMismatchError(
            f"frequency grids differ ({len(sample)} vs {len(reference)} points)"
        )
    magnitude = np.abs(reference.values)
    peak = magnitude.max() if magnitude.size else 0.0
    weak = magnitude < 1e-9 * peak if peak > 0 else np.ones(magnitude.shape, dtype=bool)
    if np.any(weak):
        f_bad = reference.freqs[np.argmax(weak)]
        raise SpectrumMismatchError(f"reference vanishes at {f_bad / 1e9:.6g} GHz")

    meta = sample.meta.model_copy(update={
        "kind": "normalized",
        "converged": sample.meta.converged and reference.meta.converged,
    })
    return ComplexSpectrum(sample.freqs, sample.values / reference.values, meta)


def unwrap_freq(wrapped) -> np.ndarray:
    """
    Unwrap along frequency: the first value is folded into (-pi, pi] and each
    consecutive difference is folded into (-pi, pi]. The output differs from
    the input by an integer multiple of 2 pi at every point.
    """
    x = np.asarray(wrapped, dtype=float)
    if x.size == 0:
        return x.copy()
    path = wrap_phase(x[0]) + np.concatenate(([0.0], np.cumsum(wrap_phase(np.diff(x)))))
    turns = np.round((path - x) / TWO_PI)
    return x + TWO_PI * turns


def anchor_to_dc(delta_phi, freqs, fit_points: int = 10) -> np.ndarray:
    """
    Pick the 2 pi branch of a frequency-unwrapped phase delay so that its
    low-frequency linear trend extrapolates to zero at w = 0.
    """
    phi = np.asarray(delta_phi, dtype=float)
    omega = TWO_PI * np.asarray(freqs, dtype=float)
    k = min(max(fit_points, 2), phi.size)
    if k < 2:
        return phi.copy()
    _, intercept = np.polyfit(omega[:k], phi[:k], 1)
    return phi - TWO_PI * np.round(intercept / TWO_PI)


def _check_contiguous(layers: Sequence[int]) -> None:
    if not layers:
        raise AnalysisError("no layer counts given")
    expected = list(range(layers[0], layers[0] + len(layers)))
    if list(layers) != expected:
        missing = sorted(set(expected) - set(layers))
        raise AnalysisError(
            f"layer counts must be contiguous for layer unwrapping; got {layers[0]}..{layers[-1]} missing {missing}"
        )


def _drop_counts(diffs: np.ndarray, threshold: float) -> np.ndarray:
    # smallest k with diff + 2 pi k in (threshold, threshold + 2 pi]
    k = np.floor((threshold - diffs) / TWO_PI) + 1.0
    return np.where(diffs < threshold, k, 0.0).astype(int)


def unwrap_layers(phi_of_N: Mapping[int, float],
                  threshold: float = DEFAULT_SLIP_THRESHOLD) -> Tuple[Dict[int, float], Dict[int, int]]:
    """
    Correct a phase-delay-versus-layer-count sequence at one frequency.

    Scanning N upward, every consecutive difference below `threshold` is a
    sharp drop; m(N) is the cumulative number of 2 pi slips so far and the
    output is phi(N) + 2 pi m(N).

    Raises:
        AnalysisError: layer counts not contiguous
    """
    layers = sorted(phi_of_N)
    _check_contiguous(layers)
    corrected: Dict[int, float] = {}
    m: Dict[int, int] = {}
    total = 0
    previous = None
    for N in layers:
        value = float(phi_of_N[N])
        if previous is not None:
            diff = value + TWO_PI * total - previous
            total += int(_drop_counts(np.array([diff]), threshold)[0])
        corrected[N] = value + TWO_PI * total
        m[N] = total
        previous = corrected[N]
    return corrected, m


def unwrap_layer_spectra(spectra: Mapping[int, np.ndarray],
                         threshold: float = DEFAULT_SLIP_THRESHOLD) -> Tuple[Dict[int, np.ndarray], Dict[int, int]]:
    """
    Layer-axis correction of whole phase-delay spectra.

    Each spectrum should already be unwrapped along frequency. Slips are
    counted frequency by frequency and each spectrum is shifted by 2 pi times
    its most common cumulative count.

    Raises:
        AnalysisError: layer counts not contiguous, or spectra of different lengths
    """
    layers = sorted(spectra)
    _check_contiguous(layers)
    stack = np.array([np.asarray(spectra[N], dtype=float) for N in layers])
    if stack.ndim != 2:
        raise AnalysisError("phase spectra must share one frequency grid")

    corrected: Dict[int, np.ndarray] = {layers[0]: stack[0].copy()}
    m: Dict[int, int] = {layers[0]: 0}
    total = 0
    for row, N in enumerate(layers[1:], start=1):
        diffs = stack[row] + TWO_PI * total - corrected[layers[row - 1]]
        counts = _drop_counts(diffs, threshold)
        values, occurrences = np.unique(counts, return_counts=True)
        total += int(values[np.argmax(occurrences)])
        corrected[N] = stack[row] + TWO_PI * total
        m[N] = total
    return corrected, m


def phase_to_index(delta_phi, d: float, freqs) -> np.ndarray:
    """
    Phase index from an unwrapped phase delay relative to free space.

    Raises:
        AnalysisError: d <= 0 or a non-positive frequency
    """
    if not d > 0:
        raise AnalysisError(f"thickness must be positive, got {d}")
    freqs = np.asarray(freqs, dtype=float)
    if np.any(freqs <= 0):
        raise AnalysisError("frequencies must be positive")
    omega = TWO_PI * freqs
    return 1.0 + C0 * np.asarray(delta_phi, dtype=float) / (omega * d)


def group_index(n, freqs, smoothing_window: Optional[int] = None,
                polyorder: int = 3) -> Tuple[np.ndarray, np.ndarray]:
    """
    n_g = n + w dn/dw with central differences (one-sided at the ends).

    If `smoothing_window` is given, n is first passed through a
    Savitzky-Golay filter of that (odd) window.

    Returns:
        (n_g, dn_domega)
    """
    n = np.asarray(n, dtype=float)
    if n.size < 3:
        raise AnalysisError("group index needs at least 3 points")
    if smoothing_window:
        if smoothing_window % 2 == 0 or smoothing_window <= polyorder or smoothing_window > n.size:
            raise AnalysisError(
                f"smoothing window {smoothing_window} must be odd, > {polyorder} and <= {n.size}"
            )
        n = savgol_filter(n, smoothing_window, polyorder)
    omega = TWO_PI * np.asarray(freqs, dtype=float)
    dn_domega = np.gradient(n, omega)
    return n + omega * dn_domega, dn_domega


def regime_labels(n_g, zero_tol: float = 0.05) -> np.ndarray:
    """Per-point regime; empty string where n_g is undefined."""
    n_g = np.asarray(n_g, dtype=float)
    labels = np.full(n_g.shape, "", dtype=object)
    defined = np.isfinite(n_g)
    labels[defined & (n_g >= 1.0)] = "subluminal"
    labels[defined & (n_g > zero_tol) & (n_g < 1.0)] = "superluminal"
    labels[defined & (np.abs(n_g) <= zero_tol)] = "infinite"
    labels[defined & (n_g < -zero_tol)] = "negative"
    return labels


def classify_regimes(n_g, freqs, zero_tol: float = 0.05) -> RegimeSegments:
    """Merge runs of equal per-point regime into ordered, disjoint segments."""
    freqs = np.asarray(freqs, dtype=float)
    labels = regime_labels(n_g, zero_tol)
    segments: List[RegimeSegment] = []
    start = None
    for i, label in enumerate(labels):
        if start is not None and label != labels[start]:
            segments.append(RegimeSegment(f_start=freqs[start], f_end=freqs[i - 1], regime=labels[start]))
            start = None
        if start is None and label:
            start = i
    if start is not None:
        segments.append(RegimeSegment(f_start=freqs[start], f_end=freqs[-1], regime=labels[start]))
    f_step = float(freqs[1] - freqs[0]) if freqs.size > 1 else 0.0
    return RegimeSegments(segments=segments, zero_tol=zero_tol, f_step=f_step)


def transmission_db(t: ComplexSpectrum) -> np.ndarray:
    magnitude = np.abs(t.values)
    with np.errstate(divide="ignore"):
        level = 20.0 * np.log10(magnitude)
    return np.where(magnitude > 0, level, FLOOR_DB)


def _crossing(f0: float, f1: float, l0: float, l1: float, level: float) -> float:
    if l1 == l0:
        return 0.5 * (f0 + f1)
    return f0 + (level - l0) * (f1 - f0) / (l1 - l0)


def detect_bandgap(t: ComplexSpectrum, threshold_db: float = 10.0) -> Optional[BandgapReport]:
    """
    Longest contiguous run at least `threshold_db` below the passband level
    (median of 20 log10 |t|). Returns None when there is no such run.
    """
    if len(t) < 2:
        return None
    freqs = t.freqs
    level = transmission_db(t)
    passband = float(np.median(level))
    cut = passband - threshold_db
    below = level <= cut

    best, best_len, start = None, 0, None
    for i, flag in enumerate(np.append(below, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best_len:
                best, best_len = (start, i - 1), i - start
            start = None
    if best is None:
        return None

    lo, hi = best
    f_low = freqs[0] if lo == 0 else _crossing(freqs[lo - 1], freqs[lo], level[lo - 1], level[lo], cut)
    f_high = freqs[-1] if hi == freqs.size - 1 else _crossing(freqs[hi], freqs[hi + 1], level[hi], level[hi + 1], cut)
    if not f_high > f_low:
        return None
    return BandgapReport(
        f_low=float(f_low),
        f_high=float(f_high),
        f_center=0.5 * float(f_low + f_high),
        depth_dB=float(passband - level[lo:hi + 1].min()),
        passband_dB=passband,
        threshold_dB=threshold_db,
        polarization=t.meta.polarization,
    )


def check_far_from_gap(result: DispersionResult, gap: BandgapReport, margin: float) -> FarFromGapCheck:
    """|w dn/dw| must stay below 0.1 outside [f_low - margin, f_high + margin]."""
    freqs = np.asarray(result.freqs, dtype=float)
    outside = (freqs < gap.f_low - margin) | (freqs > gap.f_high + margin)
    contribution = np.abs(TWO_PI * freqs * np.asarray(result.dn_domega, dtype=float))[outside]
    contribution = contribution[np.isfinite(contribution)]
    worst = float(contribution.max()) if contribution.size else 0.0
    return FarFromGapCheck(
        passed=worst < FAR_FROM_GAP_LIMIT,
        max_dispersion=worst,
        margin=margin,
        limit=FAR_FROM_GAP_LIMIT,
    )


def fit_slab_index(runs: Iterable[Tuple[float, ComplexSpectrum]]) -> SlabFitReport:
    """
    Fit a straight line to each unwrapped phase delay against w and convert
    the slope to an index, n = 1 + c * slope / d. The result is the
    thickness-weighted mean over the runs.

    Raises:
        AnalysisError: fewer than two distinct thicknesses, or d <= 0
    """
    runs = list(runs)
    thicknesses = [float(d) for d, _ in runs]
    if any(not d > 0 for d in thicknesses):
        raise AnalysisError("slab thicknesses must be positive")
    if len(set(thicknesses)) < 2:
        raise AnalysisError("slab fit needs at least two distinct thicknesses")

    slopes, indices, residuals = [], [], []
    for d, spectrum in runs:
        omega = spectrum.omega
        phi = unwrap_freq(np.angle(spectrum.values))
        slope, intercept = np.polyfit(omega, phi, 1)
        fitted = slope * omega + intercept
        slopes.append(float(slope))
        indices.append(float(1.0 + C0 * slope / d))
        residuals.append(float(np.sqrt(np.mean((phi - fitted) ** 2))))
    weights = np.asarray(thicknesses)
    index = float(np.sum(weights * np.asarray(indices)) / weights.sum())
    return SlabFitReport(
        index=index,
        thicknesses=thicknesses,
        slopes=slopes,
        indices=indices,
        residuals=residuals,
    )


def dispersion_from_phase(delta_phi, freqs, d: float, m: int = 0, smoothing_window: Optional[int] = None,
                          zero_tol: float = 0.05, meta: Optional[dict] = None) -> DispersionResult:
    """Phase index, group index and regime labels from an unwrapped phase delay."""
    freqs = np.asarray(freqs, dtype=float)
    delta_phi = np.asarray(delta_phi, dtype=float)
    n = phase_to_index(delta_phi, d, freqs)
    n_g, dn_domega = group_index(n, freqs, smoothing_window)
    info = dict(meta or {})
    info.update({"smoothing_window": smoothing_window, "zero_tol": zero_tol})
    return DispersionResult(
        freqs=freqs,
        delta_phi=delta_phi,
        n=n,
        n_g=n_g,
        dn_domega=dn_domega,
        m_corrections=int(m),
        d=float(d),
        c=C0,
        regime=regime_labels(n_g, zero_tol),
        meta=info,
    )


def dispersion_from_spectrum(t: ComplexSpectrum, d: Optional[float] = None, m: int = 0,
                             smoothing_window: Optional[int] = None, anchor: str = "dc",
                             zero_tol: float = 0.05) -> DispersionResult:
    """
    Full chain for a single normalized spectrum: frequency unwrap, optional
    branch anchoring at DC, 2 pi m shift, index inversion, group index.
    The thickness defaults to the one carried in the spectrum metadata.
    """
    d = t.meta.thickness if d is None else d
    if d is None:
        raise AnalysisError("thickness unknown: pass d or carry it in the spectrum metadata")
    phi = unwrap_freq(np.angle(t.values))
    if anchor == "dc":
        phi = anchor_to_dc(phi, t.freqs)
    elif anchor != "none":
        raise AnalysisError(f"unknown anchor mode {anchor!r}")
    phi = phi + TWO_PI * m
    meta = {
        "anchor": anchor,
        "convention": t.meta.convention,
        "polarization": t.meta.polarization,
        "layers_N": t.meta.layers_N,
    }
    return dispersion_from_phase(phi, t.freqs, d, m, smoothing_window, zero_tol, meta)


def anomalous_dispersion_band(result: DispersionResult, gap: BandgapReport) -> Optional[AnomalousBand]:
    """
    Contiguous run of dn/dw < 0 that contains, or lies closest to, the gap
    center, with the interpolated zero-dispersion crossings at its edges.
    """
    freqs = np.asarray(result.freqs, dtype=float)
    dn = np.asarray(result.dn_domega, dtype=float)
    negative = np.isfinite(dn) & (dn < 0)
    if not negative.any():
        return None

    runs: List[Tuple[int, int]] = []
    start = None
    for i, flag in enumerate(np.append(negative, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None

    def distance(run: Tuple[int, int]) -> float:
        lo, hi = freqs[run[0]], freqs[run[1]]
        if lo <= gap.f_center <= hi:
            return 0.0
        return min(abs(lo - gap.f_center), abs(hi - gap.f_center))

    lo, hi = min(runs, key=distance)
    crossings = []
    if lo > 0:
        crossings.append(_crossing(freqs[lo - 1], freqs[lo], dn[lo - 1], dn[lo], 0.0))
    if hi < freqs.size - 1:
        crossings.append(_crossing(freqs[hi], freqs[hi + 1], dn[hi], dn[hi + 1], 0.0))
    return AnomalousBand(
        f_start=float(freqs[lo]),
        f_end=float(freqs[hi]),
        min_dn_domega=float(dn[lo:hi + 1].min()),
        zero_crossings=[float(f) for f in crossings],
    )


def superluminal_bandwidth(segments: RegimeSegments, f_lo: float = -math.inf,
                           f_hi: float = math.inf) -> Tuple[float, float]:
    """
    Bandwidth with n_g < 1 inside [f_lo, f_hi], counted in grid steps.

    Superluminal, infinite and negative segments all count; adjacent ones are
    joined when finding the longest contiguous stretch.

    Returns:
        (total Hz, longest contiguous Hz)
    """
    step = segments.f_step
    if step <= 0:
        return 0.0, 0.0
    spans: List[Tuple[float, float]] = []
    for seg in segments.segments:
        if seg.regime == "subluminal":
            continue
        lo, hi = max(seg.f_start, f_lo), min(seg.f_end, f_hi)
        if hi < lo - 1e-6 * step:
            continue
        if spans and lo - spans[-1][1] <= 1.5 * step:
            spans[-1] = (spans[-1][0], hi)
        else:
            spans.append((lo, hi))
    widths = [(round((hi - lo) / step) + 1) * step for lo, hi in spans]
    return float(sum(widths)), float(max(widths, default=0.0))

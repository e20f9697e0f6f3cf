"""
Touchstone v1.0 reader and writer for 1-port (.s1p) and 2-port (.s2p) files.

    ! comment            (``! key=value`` comments carry spectrum metadata)
    # <unit> S <format> R <impedance>
    f  re/mag/dB  im/deg  ...

2-port rows hold S11 S21 S12 S22 on one line.
"""
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from errors import ParseError
from Stages.AnalysisStage.models import ComplexSpectrum, SpectrumMeta

FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
FORMATS = ("RI", "MA", "DB")
PARAMETER_ORDER = {1: ("S11",), 2: ("S11", "S21", "S12", "S22")}
_ARITY = {3: 1, 9: 2}
_META_KEYS = set(SpectrumMeta.model_fields) - {"comments"}


def _parse_option_line(tokens: List[str], line_no: int) -> Tuple[float, str, float]:
    unit, fmt, impedance = "GHZ", "MA", 50.0
    i = 0
    while i < len(tokens):
        token = tokens[i].upper()
        if token in FREQ_UNITS:
            unit = token
        elif token in FORMATS:
            fmt = token
        elif token == "S":
            pass
        elif token in ("Y", "Z", "H", "G"):
            raise ParseError(f"only S parameters are supported, got {tokens[i]!r}", line_no)
        elif token == "R":
            if i + 1 >= len(tokens):
                raise ParseError("option line: R needs an impedance value", line_no)
            try:
                impedance = float(tokens[i + 1])
            except ValueError:
                raise ParseError(f"option line: bad impedance {tokens[i + 1]!r}", line_no)
            i += 1
        else:
            raise ParseError(f"option line: unknown token {tokens[i]!r}", line_no)
        i += 1
    return FREQ_UNITS[unit], fmt, impedance


def _to_complex(a: np.ndarray, b: np.ndarray, fmt: str) -> np.ndarray:
    if fmt == "RI":
        return a + 1j * b
    magnitude = a if fmt == "MA" else np.power(10.0, a / 20.0)
    return magnitude * np.exp(1j * np.deg2rad(b))


def read_touchstone(data: bytes, parameter: Optional[str] = None) -> ComplexSpectrum:
    """
    Parse Touchstone v1.0 content into a spectrum of one S parameter.

    Args:
        data: file content
        parameter: "S11", "S21", "S12" or "S22"; default S21 for 2-port, S11 for 1-port

    Raises:
        ParseError: malformed content, with the offending line number when known
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"not UTF-8 text: {e.reason}")

    option = None
    comments: List[str] = []
    meta: Dict[str, str] = {}
    rows: List[List[float]] = []
    row_lines: List[int] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        body, _, comment = raw.partition("!")
        comment = comment.strip()
        if comment:
            key, sep, value = comment.partition("=")
            if sep and key.strip() in _META_KEYS:
                meta[key.strip()] = value.strip()
            else:
                comments.append(comment)
        body = body.strip()
        if not body:
            continue
        if body.startswith("["):
            raise ParseError(f"Touchstone 2.0 keyword {body.split()[0]!r} not supported (v1.0 only)", line_no)
        if body.startswith("#"):
            if option is None:
                option = _parse_option_line(body[1:].split(), line_no)
            continue
        if option is None:
            raise ParseError("data before the option line (missing '# <unit> S <format> R <z>')", line_no)
        try:
            values = [float(token) for token in body.split()]
        except ValueError:
            raise ParseError(f"non-numeric entry in {body!r}", line_no)
        if len(values) not in _ARITY:
            raise ParseError(f"row has {len(values)} values; expected 3 (1-port) or 9 (2-port)", line_no)
        if rows and len(values) != len(rows[0]):
            raise ParseError(f"row has {len(values)} values but earlier rows have {len(rows[0])}", line_no)
        rows.append(values)
        row_lines.append(line_no)

    if option is None:
        raise ParseError("missing option line")
    scale, fmt, _ = option
    ports = _ARITY[len(rows[0])] if rows else 1
    names = PARAMETER_ORDER[ports]
    if parameter is None:
        parameter = "S21" if ports == 2 else "S11"
    if parameter.upper() not in names:
        raise ParseError(f"{parameter} not present in a {ports}-port file")
    column = names.index(parameter.upper())

    table = np.array(rows, dtype=float).reshape(len(rows), 1 + 2 * len(names))
    first = table[:, 1 + 2 * column]
    second = table[:, 2 + 2 * column]
    for r, row in enumerate(table):
        finite = np.isfinite(row)
        if fmt == "DB":
            # zero magnitude is written as -inf dB
            finite[1::2] |= np.isneginf(row[1::2])
        if not finite.all():
            raise ParseError("NaN or infinite value", row_lines[r])

    freqs = table[:, 0] * scale
    for r in range(1, freqs.size):
        if not freqs[r] > freqs[r - 1]:
            raise ParseError("frequencies must be strictly ascending", row_lines[r])
    with np.errstate(over="ignore", invalid="ignore"):
        values = _to_complex(first, second, fmt)
    if not np.all(np.isfinite(values)):
        raise ParseError("value overflows after format conversion")

    try:
        spectrum_meta = SpectrumMeta.model_validate({**meta, "comments": tuple(comments)})
    except ValidationError as e:
        raise ParseError(f"invalid metadata comment: {e.errors()[0]['msg']}")
    try:
        return ComplexSpectrum(freqs, values, spectrum_meta)
    except ValueError as e:
        raise ParseError(str(e))


def _format_pair(values: np.ndarray, fmt: str) -> Tuple[np.ndarray, np.ndarray]:
    if fmt == "RI":
        return values.real, values.imag
    magnitude = np.abs(values)
    angle = np.rad2deg(np.angle(values))
    if fmt == "MA":
        return magnitude, angle
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(magnitude), angle


def write_touchstone(spectrum: ComplexSpectrum, fmt: str = "RI", ports: int = 1) -> bytes:
    """
    Serialize a spectrum as Touchstone v1.0 with frequencies in Hz.

    A 2-port file carries the values as S21 = S12 with S11 = S22 = 0.
    Metadata is written as ``! key=value`` comments.
    """
    fmt = fmt.upper()
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    if ports not in PARAMETER_ORDER:
        raise ValueError("only 1-port and 2-port files are supported")

    lines = []
    for key, value in spectrum.meta.model_dump(exclude={"comments"}).items():
        if value is not None:
            lines.append(f"! {key}={value!r}" if isinstance(value, float) else f"! {key}={value}")
    lines.extend(f"! {comment}" for comment in spectrum.meta.comments)
    lines.append(f"# Hz S {fmt} R 50")

    values = spectrum.values
    zeros = np.zeros_like(values)
    columns = [values] if ports == 1 else [zeros, values, values, zeros]
    pairs = [_format_pair(c, fmt) for c in columns]
    for i, f in enumerate(spectrum.freqs):
        cells = ["%.17g" % f]
        for a, b in pairs:
            cells.append("%.17g" % a[i])
            cells.append("%.17g" % b[i])
        lines.append(" ".join(cells))
    return ("\n".join(lines) + "\n").encode("utf-8")

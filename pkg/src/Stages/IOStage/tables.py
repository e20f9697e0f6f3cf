"""
CSV tables for spectra and dispersion results, and JSON report helpers.

Tables start with ``# key=value`` metadata lines followed by a header row.
Numbers are written with 17 significant digits so a write/read cycle is
lossless.
"""
import csv
import io
import json
from typing import Any, Dict, List, Tuple, Type, TypeVar

import numpy as np
from pydantic import BaseModel, ValidationError

from errors import ParseError
from Stages.AnalysisStage.models import C0, ComplexSpectrum, DispersionResult, SpectrumMeta

SPECTRUM_COLUMNS = ["freq_hz", "re", "im"]
DISPERSION_COLUMNS = ["freq_hz", "delta_phi", "n", "n_g", "dn_domega", "regime"]

_SPECTRUM_META_KEYS = set(SpectrumMeta.model_fields) - {"comments"}

Model = TypeVar("Model", bound=BaseModel)


def _num(x: float) -> str:
    return "%.17g" % x


def _encode(value: Any) -> str:
    return value if isinstance(value, str) else json.dumps(value)


def _decode(text: str) -> Any:
    try:
        return json.loads(text)
    except ValueError:
        return text


def _cells(line: str, line_no: int) -> List[str]:
    try:
        return next(csv.reader([line]))
    except csv.Error as e:
        raise ParseError(str(e), line_no)


def _split(text: str, columns: List[str]) -> Tuple[List[str], List[Tuple[int, List[str]]]]:
    """(comment bodies in order, numbered data rows) of a table."""
    comments, rows = [], []
    header_seen = False
    lines = text.splitlines()
    for line_no, line in enumerate(lines, start=1):
        if not header_seen and line.startswith("#"):
            body = line[1:].strip()
            if body:
                comments.append(body)
            continue
        if not header_seen:
            if not line.strip():
                continue
            header = _cells(line, line_no)
            if [h.strip() for h in header] != columns:
                raise ParseError(f"expected columns {','.join(columns)}, got {line.strip()!r}", line_no)
            header_seen = True
            continue
        if not line.strip():
            continue
        rows.append((line_no, _cells(line, line_no)))
    if not header_seen:
        raise ParseError("missing header row")
    return comments, rows


def _key_value(body: str) -> Tuple[str, str]:
    key, sep, value = body.partition("=")
    return (key.strip(), value.strip()) if sep else ("", body)


def _float(cell: str, line_no: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"{column}: not a number: {cell!r}", line_no)


def write_spectrum_csv(spectrum: ComplexSpectrum) -> str:
    out = io.StringIO()
    for key, value in spectrum.meta.model_dump(exclude={"comments"}).items():
        if value is not None:
            out.write(f"# {key}={_encode(value)}\n")
    for comment in spectrum.meta.comments:
        out.write(f"# {comment}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SPECTRUM_COLUMNS)
    for f, v in zip(spectrum.freqs, spectrum.values):
        writer.writerow([_num(f), _num(v.real), _num(v.imag)])
    return out.getvalue()


def read_spectrum_csv(text: str) -> ComplexSpectrum:
    """
    Raises:
        ParseError: malformed rows, non-finite values or bad metadata
    """
    lines, rows = _split(text, SPECTRUM_COLUMNS)
    meta: Dict[str, Any] = {}
    comments: List[str] = []
    for body in lines:
        key, value = _key_value(body)
        if key in _SPECTRUM_META_KEYS:
            meta[key] = value
        else:
            comments.append(body)

    freqs, values = [], []
    for line_no, cells in rows:
        if len(cells) != len(SPECTRUM_COLUMNS):
            raise ParseError(f"expected {len(SPECTRUM_COLUMNS)} columns, got {len(cells)}", line_no)
        f, re, im = (_float(c, line_no, name) for c, name in zip(cells, SPECTRUM_COLUMNS))
        if not all(np.isfinite([f, re, im])):
            raise ParseError("NaN or infinite value", line_no)
        freqs.append(f)
        values.append(complex(re, im))
    try:
        return ComplexSpectrum(freqs, values, SpectrumMeta.model_validate({**meta, "comments": tuple(comments)}))
    except ValidationError as e:
        raise ParseError(f"invalid metadata: {e.errors()[0]['msg']}")
    except ValueError as e:
        raise ParseError(str(e))


def write_dispersion_csv(result: DispersionResult) -> str:
    out = io.StringIO()
    header = {"d": result.d, "c": result.c, "m_corrections": result.m_corrections, **result.meta}
    for key, value in header.items():
        out.write(f"# {key}={_encode(value)}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(DISPERSION_COLUMNS)
    regime = result.regime if result.regime is not None else [""] * len(result.freqs)
    for row in zip(result.freqs, result.delta_phi, result.n, result.n_g, result.dn_domega, regime):
        writer.writerow([_num(x) for x in row[:5]] + [row[5]])
    return out.getvalue()


def read_dispersion_csv(text: str) -> DispersionResult:
    """
    Raises:
        ParseError: malformed rows, NaN in any numeric column (n_g included)
    """
    lines, rows = _split(text, DISPERSION_COLUMNS)
    header = {key: _decode(value) for key, value in map(_key_value, lines) if key}
    try:
        d = float(header.pop("d", 0.0))
        c = float(header.pop("c", C0))
        m = int(header.pop("m_corrections", 0))
    except (TypeError, ValueError):
        raise ParseError("d, c and m_corrections must be numeric")

    columns: List[List[float]] = [[] for _ in range(5)]
    regime: List[str] = []
    for line_no, cells in rows:
        if len(cells) != len(DISPERSION_COLUMNS):
            raise ParseError(f"expected {len(DISPERSION_COLUMNS)} columns, got {len(cells)}", line_no)
        for k, name in enumerate(DISPERSION_COLUMNS[:5]):
            value = _float(cells[k], line_no, name)
            if not np.isfinite(value):
                raise ParseError(f"{name} is not finite", line_no)
            columns[k].append(value)
        regime.append(cells[5])
    try:
        return DispersionResult(
            freqs=np.array(columns[0]),
            delta_phi=np.array(columns[1]),
            n=np.array(columns[2]),
            n_g=np.array(columns[3]),
            dn_domega=np.array(columns[4]),
            m_corrections=m,
            d=d,
            c=c,
            regime=np.array(regime, dtype=object),
            meta=header,
        )
    except ValueError as e:
        raise ParseError(str(e))


def dump_json(payload: Any) -> str:
    """JSON text for pydantic models, lists of them, or plain data."""
    def default(obj):
        if isinstance(obj, BaseModel):
            return obj.model_dump(mode="json")
        if isinstance(obj, np.generic):
            return obj.item()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        raise TypeError(f"cannot serialize {type(obj).__name__}")

    return json.dumps(payload, indent=2, default=default, sort_keys=False)


def load_json(text: str, model: Type[Model]) -> Model:
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        raise ParseError(f"invalid {model.__name__}: {e.errors()[0]['msg']}")

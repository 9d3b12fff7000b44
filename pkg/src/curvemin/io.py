"""Deterministic file formats: fields, masks, records, tables, and plots.

Writers normalize everything that could wobble between runs: floats are
rendered with ``repr`` (shortest round-trip decimal), CSV rows use CRLF
line endings with ``.`` decimals, JSON keys are sorted, and SVG coordinates
are rounded to a fixed precision.  A manifest lists the SHA-256 of every
artifact next to an echo of the config that produced it, so a re-run can be
compared byte for byte.

Grid-shaped data travels as two files: the payload (raw little-endian
float64 for fields, binary PGM for masks) and a text sidecar named
``<payload>.meta`` carrying the geometry (dimension, sides, spacing,
periodicity per axis).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import Mask, PeriodicGrid, ScalarField

_SIDECAR_SUFFIX = ".meta"


def fmt(x: float) -> str:
    """Shortest decimal that round-trips the float exactly."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# sidecar geometry headers


def _sidecar_path(path: Path) -> Path:
    return Path(str(path) + _SIDECAR_SUFFIX)


def _write_sidecar(payload_path: Path, grid: PeriodicGrid) -> None:
    lines = [
        f"d = {grid.dim}",
        "sides = " + " ".join(str(n) for n in grid.sides),
        f"h = {fmt(grid.spacing)}",
        "periodic = " + " ".join("1" if p else "0" for p in grid.periodic),
    ]
    _sidecar_path(payload_path).write_text("\n".join(lines) + "\n")


def read_sidecar(payload_path: str | Path) -> PeriodicGrid:
    """Reconstruct the grid named by the sidecar of ``payload_path``."""
    text = _sidecar_path(Path(payload_path)).read_text()
    entries: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed sidecar line {line!r}")
        entries[key.strip()] = value.strip()
    missing = {"d", "sides", "h", "periodic"} - entries.keys()
    if missing:
        raise ValueError(f"sidecar is missing keys {sorted(missing)}")
    sides = tuple(int(t) for t in entries["sides"].split())
    if len(sides) != int(entries["d"]):
        raise ValueError("sidecar dimension does not match its sides")
    periodic = tuple(t == "1" for t in entries["periodic"].split())
    return PeriodicGrid(sides, float(entries["h"]), periodic)


# ---------------------------------------------------------------------------
# scalar fields: raw little-endian float64, C order


def write_field(path: str | Path, field: ScalarField) -> Path:
    path = Path(path)
    np.ascontiguousarray(field.values, dtype="<f8").tofile(path)
    _write_sidecar(path, field.grid)
    return path


def read_field(path: str | Path) -> np.ndarray:
    """Load the raw float64 payload, shaped by its sidecar."""
    path = Path(path)
    grid = read_sidecar(path)
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != grid.cell_count:
        raise ValueError(
            f"payload holds {raw.size} values, sidecar grid needs {grid.cell_count}"
        )
    return raw.reshape(grid.sides)


def read_field_on_grid(path: str | Path) -> ScalarField:
    return ScalarField(read_sidecar(Path(path)), read_field(path))


# ---------------------------------------------------------------------------
# masks: binary PGM (P5), 0 = outside, 255 = inside


def write_mask_pgm(path: str | Path, mask: Mask) -> Path:
    if mask.grid.dim != 2:
        raise ValueError("PGM masks support d = 2 only")
    rows, cols = mask.grid.sides
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    payload = np.where(mask.cells, 255, 0).astype(np.uint8).tobytes()
    path = Path(path)
    path.write_bytes(header + payload)
    _write_sidecar(path, mask.grid)
    return path


def read_mask_pgm(path: str | Path) -> Mask:
    path = Path(path)
    data = path.read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) != 4 or tokens[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError("expected an 8-bit PGM")
    pos += 1
    body = np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=pos)
    grid = read_sidecar(path)
    if grid.sides != (rows, cols):
        raise ValueError("sidecar sides disagree with the PGM header")
    return Mask(grid, body.reshape(rows, cols) >= 128)


# ---------------------------------------------------------------------------
# structured records and tables


def write_record_json(path: str | Path, record: object) -> Path:
    """Serialize a dataclass (or mapping) as sorted-key JSON, skipping masks
    and None fields; nested dataclasses are flattened the same way."""

    def strip(value: object) -> object:
        if isinstance(value, Mask):
            return None
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            out = {}
            for f in dataclasses.fields(value):
                kept = strip(getattr(value, f.name))
                if kept is not None:
                    out[f.name] = kept
            return out
        if isinstance(value, dict):
            return {str(k): strip(v) for k, v in value.items() if strip(v) is not None}
        if isinstance(value, (list, tuple)):
            return [strip(v) for v in value]
        if isinstance(value, np.ndarray):
            return [strip(v) for v in value.tolist()]
        if isinstance(value, (np.floating, np.integer, np.bool_)):
            return value.item()
        return value

    path = Path(path)
    path.write_text(json.dumps(strip(record), sort_keys=True, indent=2) + "\n")
    return path


def _csv_cell(value: object) -> str:
    if isinstance(value, str):
        if any(ch in value for ch in ',"\r\n'):
            return '"' + value.replace('"', '""') + '"'
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return fmt(float(value))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(cell) for cell in row))
    path = Path(path)
    path.write_text("\r\n".join(lines) + "\r\n")
    return path


def write_curve_csv(path: str | Path, curve) -> Path:
    return write_csv(
        path,
        ("v", "f_lower", "f_upper", "lambda_minus", "lambda_plus", "status"),
        (
            (s.v, s.f_lower, s.f_upper, s.lambda_minus, s.lambda_plus, s.status)
            for s in curve.samples
        ),
    )


def write_anisotropy_csv(path: str | Path, anisotropy) -> Path:
    return write_csv(
        path,
        ("nux", "nuy", "phi", "residual"),
        ((s.nu[0], s.nu[1], s.phi, s.residual) for s in anisotropy.samples),
    )


def write_convergence_csv(path: str | Path, table) -> Path:
    return write_csv(
        path,
        ("v", "box_side", "symdiff_normalized", "energy_rescaled", "f0", "tolerance"),
        (
            (r.v, r.box_side, r.symdiff_normalized, r.energy_rescaled, r.f0, r.tolerance)
            for r in table.rows
        ),
    )


def write_oracle_csv(path: str | Path, table) -> Path:
    return write_csv(
        path,
        ("k", "volume", "f_exact"),
        (
            (k, table.cell_volumes[k], table.energies[k])
            for k in range(len(table.energies))
        ),
    )


def write_wulff_vertices(path: str | Path, wulff) -> Path:
    lines = [f"{fmt(x)} {fmt(y)}" for x, y in np.asarray(wulff.vertices)]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# manifests


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path: str | Path, config_text: str, artifacts: Sequence[str | Path]) -> Path:
    """Echo the config and hash every artifact, paths relative to the
    manifest's own directory with forward slashes."""
    path = Path(path)
    base = path.parent
    lines = ["[config]"]
    lines += [ln.rstrip() for ln in config_text.strip().splitlines()]
    lines += ["", "[artifacts]"]
    entries = []
    for art in artifacts:
        rel = Path(os.path.relpath(Path(art), base)).as_posix()
        entries.append((rel, sha256_file(art)))
    for rel, digest in sorted(entries):
        lines.append(f"{digest}  {rel}")
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# SVG plots (hand-rolled; fixed precision keeps them hashable)


_SVG_W, _SVG_H, _SVG_MARGIN = 640, 440, 56.0


def _coord(x: float) -> str:
    return f"{x:.2f}"


def _svg_open(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]


def _axis_map(lo: float, hi: float, pix_lo: float, pix_hi: float):
    span = hi - lo if hi > lo else 1.0

    def to_pix(x: float) -> float:
        return pix_lo + (x - lo) / span * (pix_hi - pix_lo)

    return to_pix


def write_curve_svg(path: str | Path, curve, *, title: str = "isovolumetric function") -> Path:
    """Plot (v, f_upper) with a short multiplier-slope segment per sample."""
    vs = [s.v for s in curve.samples]
    fs = [s.f_upper for s in curve.samples]
    v_lo, v_hi = min(vs), max(vs)
    pad = 0.05 * (max(fs) - min(fs) or 1.0)
    f_lo, f_hi = min(fs) - pad, max(fs) + pad
    X = _axis_map(v_lo, v_hi, _SVG_MARGIN, _SVG_W - _SVG_MARGIN / 2)
    Y = _axis_map(f_lo, f_hi, _SVG_H - _SVG_MARGIN, _SVG_MARGIN / 2)

    parts = _svg_open(title)
    parts.append(
        f'<line x1="{_coord(X(v_lo))}" y1="{_coord(Y(f_lo))}" x2="{_coord(X(v_hi))}" '
        f'y2="{_coord(Y(f_lo))}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{_coord(X(v_lo))}" y1="{_coord(Y(f_lo))}" x2="{_coord(X(v_lo))}" '
        f'y2="{_coord(Y(f_hi))}" stroke="black"/>'
    )
    for tick, anchor, dx, dy in (
        (v_lo, "middle", 0.0, 16.0),
        (v_hi, "middle", 0.0, 16.0),
    ):
        parts.append(
            f'<text x="{_coord(X(tick) + dx)}" y="{_coord(Y(f_lo) + dy)}" '
            f'text-anchor="{anchor}" font-family="sans-serif" font-size="11">{tick:.4g}</text>'
        )
    for tick in (f_lo + pad, f_hi - pad):
        parts.append(
            f'<text x="{_coord(X(v_lo) - 6)}" y="{_coord(Y(tick) + 4)}" '
            f'text-anchor="end" font-family="sans-serif" font-size="11">{tick:.4g}</text>'
        )
    pts = " ".join(f"{_coord(X(v))},{_coord(Y(f))}" for v, f in zip(vs, fs))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f5fbf" stroke-width="1.5"/>')
    dv = 0.04 * (v_hi - v_lo or 1.0)
    for s in curve.samples:
        slope = 0.5 * (s.lambda_minus + s.lambda_plus)
        parts.append(
            f'<line x1="{_coord(X(s.v - dv))}" y1="{_coord(Y(s.f_upper - slope * dv))}" '
            f'x2="{_coord(X(s.v + dv))}" y2="{_coord(Y(s.f_upper + slope * dv))}" '
            f'stroke="#bf3f1f" stroke-width="1"/>'
        )
        parts.append(
            f'<circle cx="{_coord(X(s.v))}" cy="{_coord(Y(s.f_upper))}" r="2.5" fill="#1f5fbf"/>'
        )
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n")
    return path


def _mask_rects(mask: Mask, X, Y, fill: str, opacity: float) -> list[str]:
    """One SVG rect per maximal run of filled cells along axis 1."""
    h = mask.grid.spacing
    rects = []
    for i, row in enumerate(mask.cells):
        j = 0
        n = row.shape[0]
        while j < n:
            if row[j]:
                j0 = j
                while j < n and row[j]:
                    j += 1
                x, y = X(j0 * h), Y(i * h)
                w = X(j * h) - x
                ht = Y((i + 1) * h) - y
                rects.append(
                    f'<rect x="{_coord(x)}" y="{_coord(y)}" width="{_coord(w)}" '
                    f'height="{_coord(ht)}" fill="{fill}" fill-opacity="{opacity}"/>'
                )
            else:
                j += 1
    return rects


def write_mask_svg(
    path: str | Path,
    masks: Sequence[Mask],
    *,
    circles: Sequence[tuple[tuple[float, float], float, str]] = (),
    title: str = "masks",
) -> Path:
    """Overlay d = 2 masks (axis 0 drawn downward, axis 1 rightward) with
    optional labeled circles given as ((center0, center1), radius, label)."""
    if not masks:
        raise ValueError("need at least one mask")
    grid = masks[0].grid
    if grid.dim != 2:
        raise ValueError("SVG overlays support d = 2 only")
    for m in masks:
        if m.grid is not grid and m.grid != grid:
            raise ValueError("masks must share one grid")
    side = min(_SVG_W, _SVG_H) - int(1.5 * _SVG_MARGIN)
    scale = side / max(grid.lengths)
    x0, y0 = _SVG_MARGIN, _SVG_MARGIN

    def X(c1: float) -> float:
        return x0 + c1 * scale

    def Y(c0: float) -> float:
        return y0 + c0 * scale

    parts = _svg_open(title)
    parts.append(
        f'<rect x="{_coord(x0)}" y="{_coord(y0)}" width="{_coord(grid.lengths[1] * scale)}" '
        f'height="{_coord(grid.lengths[0] * scale)}" fill="none" stroke="black"/>'
    )
    palette = ("#1f5fbf", "#bf3f1f", "#3f9f3f", "#9f3f9f")
    for mask, fill in zip(masks, palette):
        parts += _mask_rects(mask, X, Y, fill, 0.55 if len(masks) > 1 else 0.8)
    for (c0, c1), radius, label in circles:
        parts.append(
            f'<circle cx="{_coord(X(c1))}" cy="{_coord(Y(c0))}" r="{_coord(radius * scale)}" '
            f'fill="none" stroke="#333333" stroke-dasharray="4 3"/>'
        )
        parts.append(
            f'<text x="{_coord(X(c1))}" y="{_coord(Y(c0) - radius * scale - 4)}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n")
    return path

"""Config-driven experiment runner: every pipeline as a subcommand.

Configs are flat INI text (``[section]`` holding ``key = value`` lines, no
deeper nesting) so experiment provenance diffs cleanly.  Unknown sections or
keys are rejected before anything runs.  Every subcommand writes its
artifacts plus a manifest (the config echoed verbatim, then the SHA-256 of
each output file), and identical config plus seed reproduces every byte.
All randomness flows from one 64-bit seed through numpy's Philox
counter-based generator.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numeric or
solver failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from configparser import ConfigParser
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import io as cio
from .forcing import (
    BumpPair,
    RasterField,
    TrigMode,
    TrigPoly,
    build_field,
    check_condg,
    divergence_residual,
    solve_div_sigma,
    sufficient_condg_via_sigma,
)
from .grid import Mask, PeriodicGrid, ScalarField, unit_torus
from .homogenize import (
    asymptotic_convergence,
    default_directions,
    sample_anisotropy,
    wulff_shape,
)
from .isovol import check_scaling, check_subadditivity, isovolumetric_curve, run_two_bump_example
from .oracle import brute_force_isovol, brute_force_min, brute_force_penalized
from .solver import (
    minimize_penalized,
    minimize_unconstrained,
    minimize_volume_constrained,
)
from .stencil import PerimeterStencil, cell_cost, energy_ledger, make_stencil, perimeter


class ConfigError(ValueError):
    """Raised for any invalid configuration; maps to exit code 2."""


# ---------------------------------------------------------------------------
# config schema and parsing

_COMMON_SECTIONS = {
    "grid": {"sides", "length", "periodic"},
    "forcing": {
        "kind", "modes", "zero_mean", "path", "amplitude", "kmax",
        "center_a", "height_a", "radius_a", "center_b", "height_b", "radius_b",
    },
    "stencil": {"preset"},
    "run": {"id", "out", "seed"},
}

_COMMAND_SECTIONS = {
    "solve": {"v", "lam", "mu", "outside", "mode"},
    "sweep": {"v_list", "v_min", "v_max", "samples", "spacing", "outside", "checks"},
    "check-g": {"sandwich_masks"},
    "wulff": {"v", "max_norm", "directions", "widths", "resolution"},
    "asym": {"v_list", "max_norm", "widths", "margin", "resolution"},
    "example-nondiff": {"side", "v_lo", "v_hi", "samples", "refine_steps"},
    "oracle-verify": {"seeds", "grids"},
}


def _parse_bool(text: str, key: str) -> bool:
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key} must be a boolean flag, got {text!r}")


def _parse_floats(text: str, key: str) -> list[float]:
    try:
        return [float(t) for t in text.split()]
    except ValueError as exc:
        raise ConfigError(f"{key} must be whitespace-separated numbers: {exc}") from None


def _parse_ints(text: str, key: str) -> list[int]:
    try:
        return [int(t) for t in text.split()]
    except ValueError as exc:
        raise ConfigError(f"{key} must be whitespace-separated integers: {exc}") from None


def _load_sections(path: Path, command: str) -> tuple[dict[str, dict[str, str]], str]:
    parser = ConfigParser(interpolation=None, delimiters=("=",))
    text = path.read_text()
    try:
        parser.read_string(text, source=str(path))
    except Exception as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    allowed = dict(_COMMON_SECTIONS)
    allowed[command] = _COMMAND_SECTIONS[command]
    sections: dict[str, dict[str, str]] = {}
    for name in parser.sections():
        if name not in allowed:
            raise ConfigError(
                f"unknown config section [{name}] for command {command!r}"
            )
        entries = dict(parser.items(name))
        unknown = entries.keys() - allowed[name]
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)} in section [{name}]")
        sections[name] = entries
    return sections, text


def _build_grid(entries: dict[str, str]) -> PeriodicGrid:
    sides = _parse_ints(entries.get("sides", "256 256"), "grid.sides")
    length = float(entries.get("length", "1.0"))
    if length <= 0:
        raise ConfigError("grid.length must be positive")
    periodic_txt = entries.get("periodic")
    if periodic_txt is None:
        periodic: Sequence[bool] | bool = True
    else:
        flags = periodic_txt.split()
        if len(flags) != len(sides):
            raise ConfigError("grid.periodic needs one flag per axis")
        periodic = tuple(_parse_bool(t, "grid.periodic") for t in flags)
    try:
        return PeriodicGrid(sides, length / sides[0], periodic)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _random_field(grid: PeriodicGrid, seed: int, amplitude: float, kmax: int | None) -> ScalarField:
    """Zero-mean noise from Philox, optionally band-limited to |k|_inf <= kmax."""
    rng = np.random.Generator(np.random.Philox(seed))
    values = rng.normal(0.0, amplitude, grid.sides)
    if kmax is not None:
        spectrum = np.fft.fftn(values)
        for axis, n in enumerate(grid.sides):
            freq = np.minimum(np.arange(n), n - np.arange(n))
            shape = [1] * grid.dim
            shape[axis] = n
            spectrum = np.where(freq.reshape(shape) <= kmax, spectrum, 0.0)
        values = np.fft.ifftn(spectrum).real
    values = values - values.mean()
    return ScalarField(grid, values)


def _build_forcing(entries: dict[str, str], grid: PeriodicGrid, seed: int) -> ScalarField:
    kind = entries.get("kind", "zero")
    zero_mean = _parse_bool(entries.get("zero_mean", "1"), "forcing.zero_mean")
    try:
        if kind == "zero":
            return ScalarField(grid, np.zeros(grid.sides))
        if kind == "trig":
            modes = []
            for part in entries.get("modes", "").split(";"):
                part = part.strip()
                if not part:
                    continue
                nums = _parse_floats(part, "forcing.modes")
                if len(nums) not in (grid.dim + 1, grid.dim + 2):
                    raise ConfigError(
                        "each trig mode needs k per axis, amplitude, optional phase"
                    )
                k = tuple(int(round(x)) for x in nums[: grid.dim])
                amp = nums[grid.dim]
                phase = nums[grid.dim + 1] if len(nums) == grid.dim + 2 else 0.0
                modes.append(TrigMode(k=k, amplitude=amp, phase=phase))
            if not modes:
                raise ConfigError("forcing.kind = trig needs a nonempty modes list")
            return build_field(TrigPoly(modes=tuple(modes), zero_mean=zero_mean), grid)
        if kind == "bumps":
            required = ("center_a", "height_a", "radius_a", "center_b", "height_b", "radius_b")
            missing = [key for key in required if key not in entries]
            if missing:
                raise ConfigError(f"forcing.kind = bumps is missing {missing}")
            spec = BumpPair(
                center_a=tuple(_parse_floats(entries["center_a"], "center_a")),
                height_a=float(entries["height_a"]),
                radius_a=float(entries["radius_a"]),
                center_b=tuple(_parse_floats(entries["center_b"], "center_b")),
                height_b=float(entries["height_b"]),
                radius_b=float(entries["radius_b"]),
                zero_mean=zero_mean,
            )
            return build_field(spec, grid)
        if kind == "raster":
            if "path" not in entries:
                raise ConfigError("forcing.kind = raster needs a path")
            return build_field(RasterField(path=entries["path"], zero_mean=zero_mean), grid)
        if kind == "random":
            amplitude = float(entries.get("amplitude", "1.0"))
            kmax = int(entries["kmax"]) if "kmax" in entries else None
            return _random_field(grid, seed, amplitude, kmax)
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown forcing kind {kind!r}")


def _build_stencil(entries: dict[str, str], grid: PeriodicGrid) -> PerimeterStencil:
    preset = entries.get("preset", "d2_16" if grid.dim == 2 else "d3_26")
    try:
        stencil = make_stencil(preset)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if stencil.dim != grid.dim:
        raise ConfigError(
            f"stencil {preset!r} is {stencil.dim}-dimensional, grid is {grid.dim}"
        )
    return stencil


class Experiment:
    """Validated inputs for one subcommand run."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.quick = bool(args.quick)
        self.jobs = max(1, int(args.jobs))
        if args.config is not None:
            sections, raw = _load_sections(Path(args.config), command)
        else:
            sections, raw = {}, ""
        self.sections = sections
        self.raw_config = raw
        run = sections.get("run", {})
        self.seed = int(args.seed) if args.seed is not None else int(run.get("seed", "0"))
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative 64-bit integer")
        self.run_id = run.get("id", command.replace("-", "_"))
        out = args.out if args.out is not None else run.get("out", f"runs/{command}")
        self.out_dir = Path(out)
        self.grid = _build_grid(sections.get("grid", {}))
        self.stencil = _build_stencil(sections.get("stencil", {}), self.grid)
        self.params = sections.get(command, {})

    def forcing(self) -> ScalarField:
        return _build_forcing(self.sections.get("forcing", {}), self.grid, self.seed)

    def path(self, suffix: str) -> Path:
        return self.out_dir / f"{self.run_id}_{suffix}"

    def finish(self, artifacts: list[Path]) -> None:
        files = list(artifacts)
        for art in artifacts:
            sidecar = Path(str(art) + ".meta")
            if sidecar.exists() and sidecar not in files:
                files.append(sidecar)
        manifest = cio.write_manifest(self.path("manifest.txt"), self.raw_config, files)
        for line in sorted(f.name for f in files):
            print(f"wrote {self.out_dir / line}")
        print(f"wrote {manifest}")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_solve(exp: Experiment) -> int:
    p = exp.params
    g = exp.forcing()
    v = float(p["v"]) if "v" in p else None
    if v is not None and not 0.0 <= v <= exp.grid.total_volume:
        raise ConfigError(
            f"target volume {v} outside [0, {exp.grid.total_volume}]"
        )
    outside = p.get("outside", "free")
    if outside not in ("free", "empty"):
        raise ConfigError("solve.outside must be 'free' or 'empty'")
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    if "mu" in p:
        if v is None:
            raise ConfigError("penalized solves need a target volume v")
        res = minimize_penalized(g, float(p["mu"]), v, exp.stencil, outside=outside)
    elif v is not None:
        mode = p.get("mode", "adjusted")
        if mode not in ("adjusted", "bracketed"):
            raise ConfigError("solve.mode must be 'adjusted' or 'bracketed'")
        res = minimize_volume_constrained(g, v, exp.stencil, mode=mode, outside=outside)
    else:
        res = minimize_unconstrained(g, float(p.get("lam", "0.0")), exp.stencil, outside=outside)
    artifacts = [
        cio.write_record_json(exp.path("result.json"), res),
        cio.write_mask_pgm(exp.path("mask.pgm"), res.mask),
    ]
    print(
        f"status {res.status}  volume {res.volume:.8g}  energy {res.energy:.10g}"
    )
    exp.finish(artifacts)
    return 0


def _sweep_volumes(p: dict[str, str], total: float, quick: bool) -> list[float]:
    if "v_list" in p:
        vols = _parse_floats(p["v_list"], "sweep.v_list")
    else:
        try:
            v_min, v_max = float(p["v_min"]), float(p["v_max"])
        except KeyError:
            raise ConfigError("sweep needs v_list or v_min and v_max") from None
        count = int(p.get("samples", "9"))
        if count < 2 or v_min <= 0 or v_max <= v_min:
            raise ConfigError("sweep range must satisfy 0 < v_min < v_max, samples >= 2")
        if p.get("spacing", "log") == "log":
            vols = list(np.geomspace(v_min, v_max, count))
        else:
            vols = list(np.linspace(v_min, v_max, count))
    if not vols:
        raise ConfigError("empty volume list")
    if any(b <= a for a, b in zip(vols, vols[1:])):
        raise ConfigError("volumes must be strictly increasing")
    if vols[0] <= 0 or vols[-1] >= total:
        raise ConfigError(f"volumes must lie inside (0, {total})")
    if quick and len(vols) > 5:
        vols = vols[:: max(1, len(vols) // 5)][:5]
    return vols


def _cmd_sweep(exp: Experiment) -> int:
    p = exp.params
    g = exp.forcing()
    vols = _sweep_volumes(p, exp.grid.total_volume, exp.quick)
    outside = p.get("outside", "free")
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    curve = isovolumetric_curve(
        g, vols, exp.stencil, forcing_id=exp.run_id, jobs=exp.jobs, outside=outside
    )
    report: dict[str, object] = {"samples": len(curve.samples)}
    checks = p.get("checks", "").split()
    if "scaling" in checks:
        fit = check_scaling(curve)
        report["scaling"] = {
            "slope": fit.slope, "c_fit": fit.c_fit, "C_fit": fit.C_fit,
        }
        print(f"scaling slope {fit.slope:.4f}  c {fit.c_fit:.4f}  C {fit.C_fit:.4f}")
    if "subadditivity" in checks:
        sub = check_subadditivity(curve)
        report["subadditivity"] = {
            "pairs": sub.pairs_checked, "violations": len(sub.violations),
        }
        print(f"subadditivity pairs {sub.pairs_checked}  violations {len(sub.violations)}")
    artifacts = [
        cio.write_curve_csv(exp.path("curve.csv"), curve),
        cio.write_curve_svg(exp.path("curve.svg"), curve),
        cio.write_record_json(exp.path("report.json"), report),
    ]
    exp.finish(artifacts)
    return 0


def _cmd_check_g(exp: Experiment) -> int:
    p = exp.params
    g = exp.forcing()
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    mean = float(g.mean)
    sup = float(g.sup_norm)
    sigma = solve_div_sigma(g)
    residual = divergence_residual(sigma, g)
    lam_star = check_condg(g, exp.stencil)
    sufficient, margin = sufficient_condg_via_sigma(g)
    n_masks = int(p.get("sandwich_masks", "200"))
    if exp.quick:
        n_masks = min(n_masks, 50)
    rng = np.random.Generator(np.random.Philox(exp.seed))
    worst_lower = math.inf
    worst_upper = -math.inf
    for _ in range(n_masks):
        cells = rng.random(exp.grid.sides) < rng.uniform(0.2, 0.8)
        mask = Mask(exp.grid, cells)
        per = perimeter(mask, exp.stencil)
        if per == 0.0:
            continue
        led = energy_ledger(mask, exp.stencil, cell_cost(g.values, 0.0, exp.grid), "free")
        worst_lower = min(worst_lower, led.energy / per)
        worst_upper = max(worst_upper, led.energy / per)
    report = {
        "mean": mean,
        "sup": sup,
        "sigma_sup": float(sigma.sup_norm),
        "div_residual": float(residual),
        "lambda_star": float(lam_star),
        "sufficient_sigma_condition": bool(sufficient),
        "sigma_margin": float(margin),
        "sandwich_masks": n_masks,
        "energy_per_perimeter_min": float(worst_lower),
        "energy_per_perimeter_max": float(worst_upper),
    }
    lines = [f"{key} = {cio.fmt(val) if isinstance(val, float) else val}"
             for key, val in report.items()]
    text = "\n".join(lines) + "\n"
    report_path = exp.path("report.txt")
    report_path.write_text(text)
    print(text, end="")
    artifacts = [
        report_path,
        cio.write_csv(
            exp.path("report.csv"),
            tuple(report.keys()),
            [tuple(report.values())],
        ),
    ]
    exp.finish(artifacts)
    return 0


def _wulff_inputs(exp: Experiment) -> tuple[ScalarField, list[tuple[int, int]], tuple[int, ...], int]:
    p = exp.params
    g = exp.forcing()
    max_norm = int(p.get("max_norm", "4"))
    if "directions" in p:
        nums = _parse_ints(p["directions"], "directions")
        if len(nums) % 2:
            raise ConfigError("directions must be q0 q1 pairs")
        directions = [(nums[i], nums[i + 1]) for i in range(0, len(nums), 2)]
    else:
        directions = default_directions(2 if exp.quick else max_norm)
    if 2 * len(directions) < 8:
        raise ConfigError("insufficient directions: need at least 8 up to sign")
    widths = tuple(_parse_ints(p.get("widths", "8 16 32"), "widths"))
    if exp.quick:
        widths = tuple(w for w in widths if w <= 16) or (6, 10)
    if len(widths) < 2 or any(b <= a for a, b in zip(widths, widths[1:])):
        raise ConfigError("widths must be a strictly increasing list")
    resolution = int(p.get("resolution", "384"))
    if exp.quick:
        resolution = min(resolution, 128)
    if resolution < 16:
        raise ConfigError("raster resolution must be at least 16")
    return g, directions, widths, resolution


def _cmd_wulff(exp: Experiment) -> int:
    g, directions, widths, resolution = _wulff_inputs(exp)
    v = float(exp.params.get("v", "1.0"))
    if v <= 0:
        raise ConfigError("wulff target volume must be positive")
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    aniso = sample_anisotropy(
        g, exp.stencil, directions=directions, widths=widths, jobs=exp.jobs
    )
    wulff = wulff_shape(aniso, v, resolution=resolution)
    record = {
        "area": wulff.area,
        "f0": wulff.f0,
        "scale": wulff.scale,
        "target_volume": wulff.target_volume,
        "directions": len(aniso.samples),
        "sigma_sup": aniso.sigma_sup,
        "phi_min": min(s.phi for s in aniso.samples),
        "phi_max": max(s.phi for s in aniso.samples),
    }
    print(
        f"directions {len(aniso.samples)}  area {wulff.area:.8g}  f0 {wulff.f0:.8g}"
    )
    artifacts = [
        cio.write_anisotropy_csv(exp.path("anisotropy.csv"), aniso),
        cio.write_wulff_vertices(exp.path("wulff_vertices.txt"), wulff),
        cio.write_mask_pgm(exp.path("wulff.pgm"), wulff.mask),
        cio.write_record_json(exp.path("wulff.json"), record),
    ]
    exp.finish(artifacts)
    return 0


def _cmd_asym(exp: Experiment) -> int:
    p = exp.params
    g, directions, widths, resolution = _wulff_inputs(exp)
    vols = _parse_floats(p.get("v_list", "0.16 0.3 0.7 1.6"), "asym.v_list")
    if not vols or vols[0] <= 0 or any(b <= a for a, b in zip(vols, vols[1:])):
        raise ConfigError("asym.v_list must be positive and strictly increasing")
    if exp.quick:
        vols = vols[: max(2, len(vols) - 1)]
    margin = float(p.get("margin", "1.8"))
    if margin < 1.2:
        raise ConfigError("asym.margin must be at least 1.2")
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    aniso = sample_anisotropy(
        g, exp.stencil, directions=directions, widths=widths, jobs=exp.jobs
    )
    table = asymptotic_convergence(
        g, vols, exp.stencil, anisotropy=aniso, margin=margin, resolution=resolution
    )
    for row in table.rows:
        print(
            f"v {row.v:.6g}  symdiff {row.symdiff_normalized:.6f}  "
            f"energy {row.energy_rescaled:.8g}  f0 {row.f0:.8g}"
        )
    print(f"strictly decreasing: {table.strictly_decreasing}")
    record = {
        "strictly_decreasing": table.strictly_decreasing,
        "f0": table.wulff.f0,
        "area": table.wulff.area,
        "rows": len(table.rows),
    }
    artifacts = [
        cio.write_convergence_csv(exp.path("convergence.csv"), table),
        cio.write_record_json(exp.path("asym.json"), record),
        cio.write_mask_pgm(exp.path("wulff.pgm"), table.wulff.mask),
    ]
    exp.finish(artifacts)
    return 0


def _cmd_example_nondiff(exp: Experiment) -> int:
    p = exp.params
    side = int(p.get("side", "96" if exp.quick else "256"))
    if side < 32:
        raise ConfigError("example grid side must be at least 32")
    v_lo = float(p.get("v_lo", "0.004"))
    v_hi = float(p.get("v_hi", "0.06"))
    count = int(p.get("samples", "6" if exp.quick else "10"))
    if not 0 < v_lo < v_hi or count < 2:
        raise ConfigError("need 0 < v_lo < v_hi and samples >= 2")
    refine = int(p.get("refine_steps", "12" if exp.quick else "24"))
    spec = BumpPair(
        center_a=(0.25, 0.25), height_a=10.0, radius_a=0.05,
        center_b=(0.75, 0.75), height_b=2.5, radius_b=0.12,
    )
    grid = unit_torus(side)
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    result = run_two_bump_example(
        spec, list(np.geomspace(v_lo, v_hi, count)), exp.stencil,
        grid=grid, refine_steps=refine,
    )
    record = {
        "v_star": result.v_star,
        "lambda_jump": result.lambda_jump,
        "lambda_gap_lower": result.lambda_gap_lower,
        "f_step": result.f_step,
        "winner": result.winner,
    }
    if result.v_star is not None:
        print(
            f"transition at v* = {result.v_star:.8g}  lambda jump {result.lambda_jump:.6g}"
        )
    else:
        print(f"no transition in range; winner {result.winner}")
    artifacts = [
        cio.write_csv(
            exp.path("samples.csv"),
            ("v", "f_upper", "lambda_minus", "lambda_plus", "label"),
            ((s.v, s.f_upper, s.lambda_minus, s.lambda_plus, s.label) for s in result.samples),
        ),
        cio.write_record_json(exp.path("report.json"), record),
    ]
    masks = [m for m in (result.mask_before, result.mask_after) if m is not None]
    if result.mask_before is not None:
        artifacts.append(cio.write_mask_pgm(exp.path("mask_before.pgm"), result.mask_before))
    if result.mask_after is not None:
        artifacts.append(cio.write_mask_pgm(exp.path("mask_after.pgm"), result.mask_after))
    if masks:
        artifacts.append(
            cio.write_mask_svg(
                exp.path("overlay.svg"),
                masks,
                circles=(
                    (spec.center_a, spec.radius_a, "a"),
                    (spec.center_b, spec.radius_b, "b"),
                ),
                title="minimizers around the transition volume",
            )
        )
    exp.finish(artifacts)
    return 0


def _oracle_suite(exp: Experiment) -> tuple[list[str], bool]:
    p = exp.params
    n_seeds = int(p.get("seeds", "25"))
    if exp.quick:
        n_seeds = min(n_seeds, 5)
    shapes = []
    for token in p.get("grids", "3x3 4x4 4x5").split():
        parts = token.lower().split("x")
        if len(parts) != 2:
            raise ConfigError(f"bad grid token {token!r}; use NxM")
        shapes.append((int(parts[0]), int(parts[1])))
    stencil = make_stencil("d2_4")
    lines: list[str] = []
    ok = True
    rng = np.random.Generator(np.random.Philox(exp.seed))
    checked = 0
    for sides in shapes:
        grid = PeriodicGrid(sides, 1.0 / max(sides))
        for _ in range(n_seeds):
            values = rng.normal(0.0, 4.0, sides)
            g = ScalarField(grid, values)
            for lam in (-1.0, 0.0, 1.0):
                oracle = brute_force_min(
                    ScalarField(grid, values + lam), stencil
                )
                res = minimize_unconstrained(g, lam, stencil)
                if res.tilted_energy != oracle.energy:
                    ok = False
                    lines.append(
                        f"FAIL unconstrained {sides} lam={lam}: "
                        f"{res.tilted_energy!r} != {oracle.energy!r}"
                    )
                checked += 1
    lines.append(f"unconstrained oracle equality: {checked} instances")
    # penalized equality at fixed cell counts
    pen_checked = 0
    for _ in range(max(3, n_seeds // 5)):
        sides = shapes[0]
        grid = PeriodicGrid(sides, 1.0 / max(sides))
        values = rng.normal(0.0, 4.0, sides)
        g = ScalarField(grid, values)
        mu = 2.0 * float(np.abs(values).max()) + 1.0
        for k in (2, grid.cell_count // 2):
            v_target = k * grid.cell_volume
            oracle = brute_force_penalized(g, mu, v_target, stencil)
            res = minimize_penalized(g, mu, v_target, stencil)
            if res.penalized_energy != oracle.energy:
                ok = False
                lines.append(
                    f"FAIL penalized mu={mu}: {res.penalized_energy!r} != {oracle.energy!r}"
                )
            pen_checked += 1
    lines.append(f"penalized oracle equality: {pen_checked} instances")
    # exact isovolumetric table on one 4x4 fixture
    grid = PeriodicGrid((4, 4), 0.25)
    values = rng.normal(0.0, 2.0, (4, 4))
    g = ScalarField(grid, values)
    table = brute_force_isovol(g, stencil)
    for k in range(grid.cell_count + 1):
        res = minimize_volume_constrained(g, k * grid.cell_volume, stencil)
        if res.energy != table.energies[k]:
            ok = False
            lines.append(
                f"FAIL isovol table k={k}: {res.energy!r} != {table.energies[k]!r}"
            )
    lines.append(f"isovolumetric table equality: {grid.cell_count + 1} volumes")
    return lines, ok


def _cmd_oracle_verify(exp: Experiment) -> int:
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    lines, ok = _oracle_suite(exp)
    lines.append("verdict: PASS" if ok else "verdict: FAIL")
    text = "\n".join(lines) + "\n"
    report = exp.path("oracle.txt")
    report.write_text(text)
    print(text, end="")
    exp.finish([report])
    if not ok:
        raise RuntimeError("oracle verification failed")
    return 0


_COMMANDS: dict[str, Callable[[Experiment], int]] = {
    "solve": _cmd_solve,
    "sweep": _cmd_sweep,
    "check-g": _cmd_check_g,
    "wulff": _cmd_wulff,
    "asym": _cmd_asym,
    "example-nondiff": _cmd_example_nondiff,
    "oracle-verify": _cmd_oracle_verify,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvemin",
        description="volume-constrained prescribed-curvature experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", type=str, default=None, help="INI config path")
        cmd.add_argument("--out", type=str, default=None, help="output directory")
        cmd.add_argument("--jobs", type=int, default=1, help="worker processes")
        cmd.add_argument("--seed", type=int, default=None, help="64-bit run seed")
        cmd.add_argument("--quick", action="store_true", help="reduced-size run")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        exp = Experiment(args.command, args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](exp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError, ArithmeticError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

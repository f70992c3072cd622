"""Command-line front end: ``htfkit {htf,transform,stability,sweep}``.

Model files are plain text.  Blank lines and ``#`` comments are ignored;
scalar settings use ``key = value`` and Fourier coefficients use one line
per entry::

    omega_p = 1.0
    states = 1
    inputs = 1
    outputs = 1
    A 0 0 0 -1.0 0.0
    A 1 0 0 0.25 0.0

Parameter files for the inverter use ``key = value`` lines with the keys of
`VsiParams`.  CSV numbers carry 12 significant digits.
"""
from __future__ import annotations

import os

# BLAS pools size themselves at import, so this must run before numpy loads
if os.environ.get("HTFKIT_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["HTFKIT_THREADS"])

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ShapeError
from .frames import TRANSFORMS, is_block_diagonal, similarity
from .hss import LtpStateSpace, PoleHitError, htf_evaluate
from .stability import (decompose_loops, bode, default_grid, passivity_check,
                        phase_margin, small_gain_check)
from .vsi import M_RATED, VsiParams, build_vsi_hss, critical_droop_gain, z_closed_form

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INDETERMINATE = 0, 2, 3, 4

HTF_HEADER = ("s", "block_row", "block_col", "row", "col", "harmonic", "re", "im")
SWEEP_HEADER = ("f_hz", "entry", "gain_db", "phase_deg", "source")
BODE_HEADER = ("f_hz", "gain_db", "phase_deg")


class InputError(ValueError):
    """Bad user input; reported with exit code 2."""


def fmt(x) -> str:
    return f"{float(x):.12g}"


def fmt_c(z: complex) -> str:
    z = complex(z)
    return f"{fmt(z.real)}{'+' if z.imag >= 0 else '-'}{fmt(abs(z.imag))}j"


@dataclass
class RunConfig:
    command: str
    model: Path | None = None
    params: Path | None = None
    band: tuple[float, float] = (1e-1, 1e3)
    h: int = 5
    points: int = 200
    tol: float = 1e-8
    out: Path | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.band[0] < self.band[1]:
            raise InputError(f"band lower {self.band[0]} must be below upper {self.band[1]}")
        if self.h < 1:
            raise InputError("--h must be >= 1")
        if self.points < 2:
            raise InputError("--points must be >= 2")


# ---------------------------------------------------------------- parsing

_MODEL_KEYS = {"omega_p", "states", "inputs", "outputs", "real_valued"}
_COEFF_TAGS = ("A", "B", "C", "D")


def _lines(path: Path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line


def _number(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"{where}: not a number: {text!r}") from None


def read_model(path: Path) -> LtpStateSpace:
    """Parse a coefficient-list model file."""
    settings: dict[str, str] = {}
    entries = []
    for no, line in _lines(path):
        where = f"{path}:{no}"
        if "=" in line:
            key, value = (x.strip() for x in line.split("=", 1))
            if key not in _MODEL_KEYS:
                raise InputError(f"{where}: unknown key {key!r}")
            settings[key] = value
            continue
        parts = line.split()
        if parts[0] not in _COEFF_TAGS or len(parts) != 6:
            raise InputError(f"{where}: expected 'X n row col re im' with X in A/B/C/D")
        try:
            n, r, c = (int(x) for x in parts[1:4])
        except ValueError:
            raise InputError(f"{where}: n, row and col must be integers") from None
        val = complex(_number(parts[4], where), _number(parts[5], where))
        entries.append((parts[0], n, r, c, val, where))
    missing = {"omega_p", "states", "inputs", "outputs"} - settings.keys()
    if missing:
        raise InputError(f"{path}: missing keys {', '.join(sorted(missing))}")
    omega_p = _number(settings["omega_p"], f"{path}: omega_p")
    try:
        nx, nu, ny = (int(settings[k]) for k in ("states", "inputs", "outputs"))
    except ValueError:
        raise InputError(f"{path}: states/inputs/outputs must be integers") from None
    real = settings.get("real_valued", "false").lower() in ("1", "true", "yes")
    shapes = {"A": (nx, nx), "B": (nx, nu), "C": (ny, nx), "D": (ny, nu)}
    coeffs: dict[str, dict[int, np.ndarray]] = {k: {} for k in shapes}
    for tag, n, r, c, val, where in entries:
        rows, cols = shapes[tag]
        if not (0 <= r < rows and 0 <= c < cols):
            raise InputError(f"{where}: index ({r}, {c}) outside {tag} of shape {rows}x{cols}")
        mat = coeffs[tag].setdefault(n, np.zeros(shapes[tag], dtype=complex))
        mat[r, c] += val
    for tag in shapes:
        coeffs[tag].setdefault(0, np.zeros(shapes[tag], dtype=complex))
    try:
        return LtpStateSpace.from_coeffs(omega_p, coeffs["A"], coeffs["B"],
                                         coeffs["C"], coeffs["D"], real)
    except (ShapeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def write_model(model: LtpStateSpace, path: Path) -> None:
    """Inverse of `read_model`."""
    lines = [f"omega_p = {fmt(model.omega_p)}", f"states = {model.state_dim}",
             f"inputs = {model.input_dim}", f"outputs = {model.output_dim}"]
    for tag in _COEFF_TAGS:
        series = getattr(model, tag)
        for n in sorted(series.coeffs):
            mat = series.coeffs[n]
            for r, c in zip(*np.nonzero(mat)):
                v = complex(mat[r, c])
                lines.append(f"{tag} {n} {r} {c} {fmt(v.real)} {fmt(v.imag)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_params(path: Path) -> VsiParams:
    keys = set(VsiParams.keys())
    values = {}
    for no, line in _lines(path):
        where = f"{path}:{no}"
        if "=" not in line:
            raise InputError(f"{where}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in keys:
            raise InputError(f"{where}: unknown key {key!r}")
        values[key] = _number(value, where)
    try:
        return VsiParams(**values)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def parse_band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("band must be LO:HI") from None
    return lo, hi


def parse_gain_bracket(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("bracket must be LO:HI")
    lo, hi = (parse_m_list(x)[0] for x in parts)
    return lo, hi


def parse_m_list(text: str) -> list[float]:
    """Comma list of gains; an ``x`` suffix means multiples of the rated gain."""
    out = []
    for item in filter(None, (x.strip() for x in text.split(","))):
        try:
            out.append(float(item[:-1]) * M_RATED if item.endswith("x") else float(item))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad droop gain {item!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty gain list")
    return out


def parse_complex_list(text: str) -> list[complex]:
    try:
        return [complex(x.strip().replace(" ", "")) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("s values must be complex, e.g. 0.1j,1+2j") from None


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None


def band_grid(band, points: int) -> np.ndarray:
    lo, hi = band
    if lo > 0:
        return default_grid(band, points)
    return np.linspace(lo, hi, points)


# ---------------------------------------------------------------- output

class Output:
    """Routes CSV tables to files in ``out`` or to stdout."""

    def __init__(self, out: Path | None):
        self.out = out
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, header, rows) -> None:
        if self.out is None:
            w = csv.writer(sys.stdout, lineterminator="\n")
            print(f"# {name}")
            w.writerow(header)
            w.writerows(rows)
            return
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def report(self, lines) -> None:
        text = "\n".join(lines) + "\n"
        sys.stdout.write(text)
        if self.out is not None:
            (self.out / "report.txt").write_text(text)


def _load_model(cfg: RunConfig) -> tuple[LtpStateSpace, VsiParams | None]:
    if cfg.model is not None and cfg.params is not None:
        raise InputError("give either --model or --params, not both")
    if cfg.model is not None:
        return read_model(cfg.model), None
    if cfg.params is not None:
        p = read_params(cfg.params)
        return build_vsi_hss(p), p
    raise InputError("a model is required (--model FILE or --params FILE)")


def _points_s(cfg: RunConfig, params: VsiParams | None) -> list[complex]:
    s = list(cfg.extra.get("s") or [])
    f = cfg.extra.get("f") or []
    if f:
        if params is None:
            raise InputError("--f needs --params (Hz to per-unit); use --s for model files")
        s += [complex(x) for x in params.s_pu(f)]
    if not s:
        raise InputError("no evaluation points: give --s or --f")
    return s


def _htf_rows(G):
    p, q = G.output_dim, G.input_dim
    for r in range(G.matrix.shape[0]):
        for c in range(G.matrix.shape[1]):
            v = G.matrix[r, c]
            br, bc = r // p, c // q
            yield (fmt_c(G.s0), br, bc, r % p, c % q, bc - br,
                   fmt(v.real), fmt(v.imag))


# ---------------------------------------------------------------- commands

def cmd_htf(cfg: RunConfig, out: Output) -> int:
    model, params = _load_model(cfg)
    rows = []
    for s in _points_s(cfg, params):
        rows.extend(_htf_rows(htf_evaluate(model, s, cfg.h)))
    out.table("htf.csv", HTF_HEADER, rows)
    return EXIT_OK


def cmd_transform(cfg: RunConfig, out: Output) -> int:
    model, params = _load_model(cfg)
    names = cfg.extra.get("transform") or ["rotation"]
    rows, report = [], []
    for s in _points_s(cfg, params):
        G = htf_evaluate(model, s, cfg.h)
        for name in names:
            if name not in TRANSFORMS:
                raise InputError(f"unknown transform {name!r}; choose from "
                                 f"{', '.join(TRANSFORMS)}")
            make = TRANSFORMS[name]
            T = make(model.omega_p, G.output_dim) if name == "identity" \
                else make(model.omega_p)
            try:
                G = similarity(G, T)
            except ValueError as exc:
                raise InputError(str(exc)) from None
        margin = min(len(names), G.order)
        blk = is_block_diagonal(G, tol=cfg.tol, margin=margin)
        ent = is_block_diagonal(G, block=1, tol=cfg.tol, margin=margin)
        rows.extend(_htf_rows(G))
        report.append(
            f"s={fmt_c(s)} transforms={'+'.join(names)} "
            f"block_diagonal={blk.is_diagonal} block_residual={fmt(blk.relative)} "
            f"entry_diagonal={ent.is_diagonal} entry_residual={fmt(ent.relative)}")
    out.table("transform.csv", HTF_HEADER, rows)
    out.report(report)
    return EXIT_OK


def cmd_stability(cfg: RunConfig, out: Output) -> int:
    if cfg.params is None:
        raise InputError("stability needs --params FILE")
    base = read_params(cfg.params)
    ms = cfg.extra.get("m") or [base.m]
    grid = np.concatenate([-band_grid(cfg.band, cfg.points)[::-1],
                           band_grid(cfg.band, cfg.points)]) \
        if cfg.band[0] > 0 else band_grid(cfg.band, cfg.points)
    wb = base.omega_base
    verdicts = {}
    if cfg.extra.get("simulate"):
        from .simulator import stability_verdicts
        verdicts = {v.m: v for v in stability_verdicts(base, ms)}
    lines = []
    status = EXIT_OK
    for m in ms:
        p = base.with_m(m)
        zt = z_closed_form(p)
        loops = decompose_loops(zt)
        pm = phase_margin(loops.symmetric_plus, grid, wb)
        sg = small_gain_check(loops.asymmetric, grid, wb)
        sym_peak = small_gain_check(loops.symmetric_plus, grid, wb)
        pas = passivity_check(lambda s: 1j * zt.M(s), grid, wb)
        if pm.has_crossover:
            verdict = "stable" if pm.worst > 0 and sg.passed else "unstable"
            pm_text = f"{fmt(pm.worst)} crossover_hz={fmt(pm.worst_crossover_hz)}"
        elif sym_peak.passed and sg.passed:
            verdict, pm_text = "stable", "none crossover_hz=none"
        else:
            verdict, pm_text = "indeterminate", "none crossover_hz=none"
            status = max(status, EXIT_INDETERMINATE)
        ranges = ";".join(f"{fmt(a)}..{fmt(b)}" for a, b in pas.negative_ranges_hz)
        line = (f"m={fmt(m)} ({fmt(m / M_RATED)}x) phase_margin_deg={pm_text} "
                f"small_gain_peak={fmt(sg.peak)} at_hz={fmt(sg.peak_hz)} "
                f"droop_nonpassive_hz={ranges or 'none'} verdict={verdict}")
        if m in verdicts:
            v = verdicts[m]
            osc = "none" if v.oscillation_hz is None else fmt(v.oscillation_hz)
            line += (f" simulation={v.label} growth={fmt(v.growth_factor)}"
                     f" oscillation_hz={osc}")
        lines.append(line)
        for label, fn in (("symmetric", loops.symmetric_plus),
                          ("asymmetric", loops.asymmetric)):
            bd = bode(fn, grid, label, wb)
            out.table(f"bode_{label}_m{fmt(m)}.csv", BODE_HEADER,
                      [(fmt(f), fmt(g), fmt(ph)) for f, g, ph in
                       zip(bd.frequencies, bd.gain_db, bd.phase_deg)])
    bracket = cfg.extra.get("bracket")
    if bracket:
        try:
            mc = critical_droop_gain(base, bracket)
        except ValueError as exc:
            lines.append(f"m_crit=indeterminate ({exc})")
            status = max(status, EXIT_INDETERMINATE)
        else:
            lines.append(f"m_crit={fmt(mc)} ({fmt(mc / M_RATED)}x)")
    out.report(lines)
    return status


def cmd_sweep(cfg: RunConfig, out: Output) -> int:
    if cfg.params is None:
        raise InputError("sweep needs --params FILE")
    p = read_params(cfg.params)
    ms = cfg.extra.get("m")
    if ms:
        p = p.with_m(ms[0])
    f = band_grid(cfg.band, cfg.points)
    zt = z_closed_form(p)
    w_p = p.omega_p

    def rows_for(freqs, mats, source):
        for fk, Y in zip(freqs, mats):
            for i in (1, 2):
                for j in (1, 2):
                    v = Y[i - 1, j - 1]
                    if not np.isfinite(v):
                        continue
                    yield (fmt(fk), f"{i}{j}", fmt(20 * math.log10(abs(v))),
                           fmt(math.degrees(np.angle(v))), source)

    model = []
    for s1 in p.s_pu(f):
        try:
            model.append(zt.admittance(s1 - 1j * w_p))
        except np.linalg.LinAlgError:
            model.append(np.full((2, 2), np.nan))
    rows = list(rows_for(f, model, "model"))
    if cfg.extra.get("simulate"):
        from .simulator import sweep_admittance
        res = sweep_admittance(p, f)
        rows += list(rows_for(res.f_hz, res.measured, "simulation"))
    out.table("sweep.csv", SWEEP_HEADER, rows)
    return EXIT_OK


COMMANDS = {"htf": cmd_htf, "transform": cmd_transform,
            "stability": cmd_stability, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="htfkit", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--model", type=Path, help="coefficient-list model file")
    ap.add_argument("--params", type=Path, help="inverter parameter file")
    ap.add_argument("--h", type=int, default=5, help="truncation order")
    ap.add_argument("--band", type=parse_band, default=(1e-1, 1e3),
                    help="frequency band LO:HI in Hz")
    ap.add_argument("--points", type=int, default=200)
    ap.add_argument("--m", type=parse_m_list,
                    help="droop gains, e.g. 0.02,0.2 or 1x,10x")
    ap.add_argument("--s", type=parse_complex_list, help="Laplace points (model units)")
    ap.add_argument("--f", type=parse_float_list, help="frequencies in Hz (with --params)")
    ap.add_argument("--transform", type=lambda t: t.split(","),
                    help=f"comma list applied in order: {', '.join(TRANSFORMS)}")
    ap.add_argument("--bracket", type=parse_gain_bracket, help="m_crit search bracket LO:HI")
    ap.add_argument("--simulate", action="store_true",
                    help="add time-domain simulation results")
    ap.add_argument("--out", type=Path, help="output directory (default stdout)")
    ap.add_argument("--tol", type=float, default=1e-8)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = RunConfig(args.command, args.model, args.params, args.band, args.h,
                        args.points, args.tol, args.out,
                        {"m": args.m, "s": args.s, "f": args.f,
                         "transform": args.transform, "bracket": args.bracket,
                         "simulate": args.simulate})
        return COMMANDS[args.command](cfg, Output(cfg.out))
    except InputError as exc:
        print(f"htfkit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PoleHitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"htfkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

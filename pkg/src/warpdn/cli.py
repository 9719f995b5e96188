"""Command-line entry point ``warpdn``.

Exit codes: 0 success, 1 numerical failure or a verification outside its
tolerance, 2 usage error (bad flag, unreadable file, out-of-range value).
Output goes to ``--out`` (written atomically) or stdout, as CSV or JSON.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import bessel, cloak, dn_map, fit, geometry, sl_core, spectral
from .errors import ContractError, RegimeError, WarpDNError
from .geometry import WarpedMetric
from .profiles import CoefficientProfile

__all__ = ["RunConfig", "UsageError", "parse_config", "dispatch", "main", "load_problem", "write_table"]

SUBCOMMANDS = ("spectrum", "wtfunc", "dnmap", "gauge-verify", "conformal-ode", "indicator", "cam",
               "cloak-verify", "bessel", "fit")


class UsageError(Exception):
    """Invalid command line or input file (exit code 2)."""


@dataclass
class RunConfig:
    """Validated command line with its input files already loaded."""

    subcommand: str
    options: dict[str, Any]
    inputs: dict[str, Any] = field(default_factory=dict)
    out: str | None = None
    fmt: str = "csv"
    tol: float = 1e-10
    lam: float = 0.0


# --------------------------------------------------------------------------
# input files
# --------------------------------------------------------------------------

def load_problem(path: str) -> sl_core.SturmLiouvilleProblem:
    """``{"p": profile, "q": profile, "r": profile, "name": str}``."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        p, q, r = (CoefficientProfile.from_json(obj[k]) for k in ("p", "q", "r"))
    except KeyError as exc:
        raise ContractError(f"problem file lacks coefficient {exc}") from None
    return sl_core.SturmLiouvilleProblem(p, q, r, name=obj.get("name", os.path.basename(path)))


def _load_profile(path: str) -> CoefficientProfile:
    with open(path, encoding="utf-8") as fh:
        return CoefficientProfile.from_json(json.load(fh))


def _load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _load_blocks(path: str) -> list[dn_map.DNBlock]:
    """DN blocks from a ``dnmap`` CSV (columns m, n, mu, nu, L, T, R)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                L, T, R = float(row["L"]), float(row["T"]), float(row["R"])
                out.append(dn_map.DNBlock(int(row["m"]), int(row["n"]), float(row["mu"]), float(row["nu"]),
                                          np.array([[L, T], [T, R]])))
            except (KeyError, ValueError) as exc:
                raise ContractError(f"bad block row in {path}: {exc}") from None
    if not out:
        raise ContractError(f"{path} contains no blocks")
    return out


_LOADERS = {"metric": WarpedMetric.load, "metric_a": WarpedMetric.load, "metric_b": WarpedMetric.load,
            "problem": load_problem, "problem_a": load_problem, "problem_b": load_problem,
            "f1": _load_profile, "f2": _load_profile, "family": _load_json, "data": _load_blocks}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

# negative reals and complex literals such as -1+2j are values, not flags
_NEGATIVE = re.compile(r"^-(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?([-+](\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)?j?$")


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._negative_number_matcher = _NEGATIVE

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v
    return conv


def _finite(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be finite: {text!r}")
    return v


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="warpdn", description="Spectral and DN-map computations for warped cylinders.")
    sub = ap.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(p, tol=1e-10, lam=False):
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
        p.add_argument("--tol", type=_positive(float), default=tol)
        if lam:
            p.add_argument("--lambda", dest="lam", type=_finite, default=0.0)
        return p

    def source(p, suffix=""):
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument(f"--problem{suffix}", help="Sturm-Liouville problem JSON {p, q, r}")
        g.add_argument(f"--metric{suffix}", help="warped metric JSON")
        if not suffix:
            p.add_argument("--nu", type=float, default=0.0, help="fiber-2 eigenvalue for --metric")

    p = common(sub.add_parser("spectrum", help="eigenvalues of a radial problem"), lam=True)
    source(p)
    p.add_argument("--kind", default="DD", choices=("DD", "DN", "ND"))
    p.add_argument("--kmax", type=_positive(int), default=10)

    p = common(sub.add_parser("wtfunc", help="Weyl-Titchmarsh functions M, N"), lam=True)
    source(p)
    p.add_argument("--z", nargs="+", required=True, help="spectral parameters (Python complex syntax)")

    p = common(sub.add_parser("dnmap", help="DN blocks of the first harmonics"), lam=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--count", type=_positive(int), default=10)

    p = common(sub.add_parser("gauge-verify", help="DN map of a metric vs its normalisation"), tol=1e-6, lam=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--count", type=_positive(int), default=10)

    p = common(sub.add_parser("conformal-ode", help="conformal factor from Cauchy data"), tol=1e-8, lam=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--kappa0", type=_positive(float), default=1.0)
    p.add_argument("--nu0", type=_finite, default=0.0)
    p.add_argument("--cells", type=_positive(int), default=256)

    p = common(sub.add_parser("indicator", help="directional growth of characteristic functions"))
    source(p)
    p.add_argument("--which", default="delta", choices=("delta", "D", "E"))
    p.add_argument("--theta", type=_finite, default=math.pi / 2)
    p.add_argument("--radii", nargs="+", type=_positive(float), default=[10.0, 20.0, 50.0])

    p = common(sub.add_parser("cam", help="CAM discrepancy of two problems"), tol=1e-6)
    source(p, "-a")
    source(p, "-b")
    p.add_argument("--tmax", type=_positive(float), default=50.0)
    p.add_argument("--points", type=_positive(int), default=50)

    p = common(sub.add_parser("cloak-verify", help="DN invariance under changes inside the cloak"))
    p.add_argument("--variant", default="A", choices=("A", "B", "C", "D"))
    p.add_argument("--r", type=_finite, default=1.0)
    p.add_argument("--n", type=_positive(int), default=2)
    p.add_argument("--f1", required=True)
    p.add_argument("--f2", required=True)
    p.add_argument("--count", type=_positive(int), default=20)

    p = common(sub.add_parser("bessel", help="modified Bessel functions I and K"))
    p.add_argument("--nu", type=_finite, nargs="+", required=True)
    p.add_argument("--x", type=_finite, nargs="+", required=True)

    p = common(sub.add_parser("fit", help="fit family parameters to DN blocks"), tol=1e-3, lam=True)
    p.set_defaults(fmt="json")
    p.add_argument("--family", required=True, help='JSON {"family": name, "bounds": [[lo, hi], ...]}')
    p.add_argument("--data", required=True, help="CSV of DN blocks as written by dnmap")
    p.add_argument("--starts", type=_positive(int), default=8)
    p.add_argument("--maxiter", type=_positive(int), default=400)
    return ap


def parse_config(argv: Sequence[str] | None = None) -> RunConfig:
    """Parse and validate; raises :class:`UsageError` on any problem."""
    ns = _build_parser().parse_args(list(sys.argv[1:] if argv is None else argv))
    opts = vars(ns).copy()
    cmd = opts.pop("subcommand")
    out, fmt, tol = opts.pop("out", None), opts.pop("fmt", "csv"), opts.pop("tol", 1e-10)
    lam = opts.pop("lam", 0.0)
    inputs = {}
    for key, loader in _LOADERS.items():
        path = opts.get(key)
        if path is None:
            continue
        if not os.path.isfile(path):
            raise UsageError(f"{cmd}: file not found: {path}")
        try:
            inputs[key] = loader(path)
        except (OSError, ValueError, KeyError, TypeError, WarpDNError) as exc:
            raise UsageError(f"{cmd}: cannot load {path}: {exc}") from None
    for key in ("metric", "metric_a", "metric_b"):
        g = inputs.get(key)
        if g is not None and lam != 0.0 and g.regularity != "boundedElliptic":
            raise UsageError(f"{cmd}: lambda = {lam:g} requires a boundedElliptic metric "
                             f"({opts[key]} is {g.regularity})")
    if cmd == "cloak-verify":
        try:
            cloak.CloakFamily(opts["variant"], opts["r"], opts["n"], inputs["f1"])
            cloak.CloakFamily(opts["variant"], opts["r"], opts["n"], inputs["f2"])
        except ContractError as exc:
            raise UsageError(f"{cmd}: {exc}") from None
    if cmd == "fit":
        try:
            inputs["family"] = fit.family_from_json(inputs["family"])
        except ContractError as exc:
            raise UsageError(f"{cmd}: {exc}") from None
    if cmd == "wtfunc":
        try:
            opts["z"] = [complex(z.replace(" ", "")) for z in opts["z"]]
        except ValueError as exc:
            raise UsageError(f"{cmd}: bad spectral parameter: {exc}") from None
    if cmd == "bessel":
        for nu in opts["nu"]:
            if not 0 <= nu <= bessel.NU_MAX:
                raise UsageError(f"{cmd}: order {nu} outside [0, {bessel.NU_MAX:g}]")
        for x in opts["x"]:
            if not 0 < x <= bessel.X_MAX:
                raise UsageError(f"{cmd}: argument {x} outside (0, {bessel.X_MAX:g}]")
    return RunConfig(cmd, opts, inputs, out, fmt, float(tol), float(lam))


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_table(rows: list[dict], fmt: str, out: str | None, meta: dict | None = None) -> None:
    """Write rows as CSV or JSON; files are replaced atomically."""
    if fmt == "json":
        obj = {"rows": rows} if meta is None else {**meta, "rows": rows}
        text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"
    else:
        buf = io.StringIO()
        if rows:
            w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt(v) for k, v in r.items()})
        text = buf.getvalue()
    _emit(text, out)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    raise TypeError(f"not serialisable: {type(v)}")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".warpdn-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _problem(cfg: RunConfig, suffix: str = "") -> sl_core.SturmLiouvilleProblem:
    if cfg.inputs.get("problem" + suffix) is not None:
        return cfg.inputs["problem" + suffix]
    nu = cfg.options.get("nu", 0.0) if not suffix else 0.0
    return geometry.radial_problem(cfg.inputs["metric" + suffix], cfg.lam, nu)


def _cmd_spectrum(cfg):
    res = sl_core.spectra(_problem(cfg), cfg.options["kind"], cfg.options["kmax"], tol=cfg.tol)
    rows = [{"kind": res.boundaryKind, "k": k + 1, "eigenvalue": float(a), "tol": cfg.tol}
            for k, a in enumerate(res.eigenvalues)]
    return rows, 0


def _cmd_wtfunc(cfg):
    prob = _problem(cfg)
    rows = []
    for i, z in enumerate(cfg.options["z"]):
        w = sl_core.weyl_functions(prob, z)
        rows.append({"i": i, "z_re": z.real, "z_im": z.imag, "M_re": complex(w.M).real, "M_im": complex(w.M).imag,
                     "N_re": complex(w.N).real, "N_im": complex(w.N).imag, "tol": cfg.tol})
    return rows, 0


def _block_rows(blocks, tol):
    return [{"m": b.m, "n": b.n, "mu": b.mu, "nu": b.nu, "L": float(b.entries[0, 0]),
             "T": float(b.entries[0, 1]), "R": float(b.entries[1, 1]), "tol": tol} for b in blocks]


def _cmd_dnmap(cfg):
    g = cfg.inputs["metric"]
    hp = geometry.harmonic_pairs(g.fiber1, g.fiber2 if g.n2 else None, cfg.options["count"])
    return _block_rows(dn_map.dn_blocks(g, cfg.lam, hp), cfg.tol), 0


def _cmd_gauge(cfg):
    d = dn_map.gauge_discrepancy(cfg.inputs["metric"], cfg.lam, cfg.options["count"])
    ok = d <= cfg.tol
    return [{"count": cfg.options["count"], "discrepancy": d, "tol": cfg.tol, "pass": ok}], 0 if ok else 1


def _cmd_conformal(cfg):
    o = cfg.options
    prof = dn_map.conformal_factor_ode(cfg.inputs["metric"], cfg.lam, o["kappa0"], o["nu0"], o["cells"])
    rows = [{"x": float(x), "kappa": float(k), "nu": float(v), "tol": cfg.tol}
            for x, k, v in zip(prof.x, prof.kappa, prof.nu)]
    return rows, 0


def _cmd_indicator(cfg):
    o = cfg.options
    s = spectral.indicator_profile(_problem(cfg), o["which"], o["theta"], sorted(o["radii"]))
    rows = [{"which": s.which, "theta": s.theta, "radius": r, "value": v, "target": s.target, "tol": cfg.tol}
            for r, v in s.to_rows()]
    return rows, 0


def _cmd_cam(cfg):
    ts = np.linspace(cfg.options["tmax"] / cfg.options["points"], cfg.options["tmax"], cfg.options["points"])
    d = spectral.cam_discrepancy(_problem(cfg, "_a"), _problem(cfg, "_b"), ts)
    return [{"points": cfg.options["points"], "tmax": cfg.options["tmax"], "discrepancy": d,
             "tol": cfg.tol, "equivalent": d <= cfg.tol}], 0


def _cmd_cloak(cfg):
    o = cfg.options
    f1 = cloak.CloakFamily(o["variant"], o["r"], o["n"], cfg.inputs["f1"])
    f2 = f1.with_interior(cfg.inputs["f2"])
    b1 = cloak.cloak_dn_blocks(f1, o["count"])
    b2 = cloak.cloak_dn_blocks(f2, o["count"])
    rows, worst = [], 0.0
    for x, y in zip(b1, b2):
        d = float(np.max(np.abs(x.entries - y.entries)))
        worst = max(worst, d)
        rows.append({"m": x.m, "mu": x.mu, "L1": x.L, "R1": x.R, "L2": y.L, "R2": y.R,
                     "discrepancy": d, "tol": cfg.tol})
    return rows, 0 if worst <= cfg.tol else 1


def _cmd_bessel(cfg):
    rows = []
    for nu in cfg.options["nu"]:
        for x in cfg.options["x"]:
            rows.append({"nu": nu, "x": x, "I": bessel.bessel_i(nu, x), "K": bessel.bessel_k(nu, x), "tol": cfg.tol})
    return rows, 0


def _cmd_fit(cfg):
    o = cfg.options
    fam = cfg.inputs["family"]
    res = fit.fit_parameters(fam, cfg.inputs["data"], cfg.lam,
                             fit.FitConfig(starts=o["starts"], maxiter=o["maxiter"]))
    obj = {"family": fam.name, "tol": cfg.tol, **res.to_json()}
    obj["residuals"] = None if res.residuals is None else [
        {"m": b.m, "n": b.n, "L": float(r[0]), "T": float(r[1]), "R": float(r[2])}
        for b, r in zip(cfg.inputs["data"], res.residuals)]
    return obj, 0 if res.converged else 1


_COMMANDS = {"spectrum": _cmd_spectrum, "wtfunc": _cmd_wtfunc, "dnmap": _cmd_dnmap, "gauge-verify": _cmd_gauge,
             "conformal-ode": _cmd_conformal, "indicator": _cmd_indicator, "cam": _cmd_cam,
             "cloak-verify": _cmd_cloak, "bessel": _cmd_bessel, "fit": _cmd_fit}


def dispatch(cfg: RunConfig) -> int:
    """Run the command and write its output; returns the exit code."""
    try:
        result, code = _COMMANDS[cfg.subcommand](cfg)
    except RegimeError as exc:
        print(f"warpdn {cfg.subcommand}: {exc}", file=sys.stderr)
        return 2
    except (WarpDNError, ArithmeticError) as exc:
        print(f"warpdn {cfg.subcommand}: numerical failure: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, dict):
        _emit(json.dumps(result, indent=2, sort_keys=True, default=_jsonable) + "\n", cfg.out)
    else:
        write_table(result, cfg.fmt, cfg.out, {"subcommand": cfg.subcommand, "tol": cfg.tol})
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())

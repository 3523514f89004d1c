"""Command-line front end: ``compute``, ``scan`` and ``crosscheck``.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 abort near a spectral singularity.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional

import numpy as np

from . import rel_trace, schrodinger, ssf_trace, toy_models
from .errors import ConfigError, ConfigInvalid, ConvergenceError, SingularityProximity
from .operators import (OperatorKind, RankOneData, U0Kind, finite_pair, rank_one_pair,
                        read_dense_matrix)
from .ssf_trace import SsfCurve

log = logging.getLogger("ssfkit")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_SINGULAR = 0, 2, 3, 4

TOY_MODELS = ("toy:finite", "toy:jordan", "toy:rank1-disjoint", "toy:rank1-interacting")
PIPELINES = ("auto", "logdet", "cumulative", "bv", "cov", "closed", "schrodinger")
DEFAULT_GRIDS = {
    "toy:finite": (-1.0, 4.0, 201),
    "toy:jordan": (-0.5, 1.5, 201),
    "toy:rank1-disjoint": (-1.0, 2.0, 201),
    "toy:rank1-interacting": (-0.5, 1.5, 400),
    "finite": (-2.0, 2.0, 201),
    "schrodinger": (0.5, 4.0, 8),
}


@dataclass
class RunConfig:
    model: str = "toy:finite"
    pipeline: str = "auto"
    grid: Optional[tuple] = None
    eps: Optional[tuple] = None          # (e0, levels)
    resolution: int = 12
    anchor: Optional[float] = None
    out: Optional[str] = None
    beta: float = 0.2
    gamma: complex = 1.0
    c: Optional[float] = None
    m: int = 1
    tol: float = 1e-4
    h0_path: Optional[str] = None
    v_path: Optional[str] = None
    potential: dict = field(default_factory=dict)

    def validate(self):
        if self.model not in TOY_MODELS + ("finite", "schrodinger"):
            raise ConfigInvalid(f"unknown model {self.model!r}")
        if self.pipeline not in PIPELINES:
            raise ConfigInvalid(f"unknown pipeline {self.pipeline!r}")
        lo, hi, n = self.grid_spec()
        if n < 2 or not hi > lo:
            raise ConfigInvalid("grid needs min < max and count >= 2")
        if self.eps is not None:
            e0, levels = self.eps
            if not (e0 > 0 and levels >= 1):
                raise ConfigInvalid("eps needs e0 > 0 and levels >= 1")
        if self.resolution < 4:
            raise ConfigInvalid("resolution must be at least 4")
        if self.m < 1:
            raise ConfigInvalid("m must be a positive integer")
        if self.c is not None and not self.c > 0:
            raise ConfigInvalid("c must be positive")
        if self.model == "finite" and not (self.h0_path and self.v_path):
            raise ConfigInvalid("finite model needs h0 and v matrix files in the config")

    def grid_spec(self) -> tuple:
        if self.grid is not None:
            return self.grid
        return DEFAULT_GRIDS[self.model]

    def lambdas(self) -> np.ndarray:
        lo, hi, n = self.grid_spec()
        return np.linspace(lo, hi, int(n))

    def eps_schedule(self) -> Optional[list]:
        if self.eps is None:
            return None
        e0, levels = self.eps
        return [e0 / 2 ** k for k in range(int(levels))]

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d["gamma"] = [complex(self.gamma).real, complex(self.gamma).imag]
        d["grid"] = list(self.grid_spec())
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Argument and config parsing
# ---------------------------------------------------------------------------

def _parse_grid(s: str) -> tuple:
    try:
        lo, hi, n = s.split(":")
        return float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigInvalid(f"grid must be min:max:n, got {s!r}") from None


def _parse_eps(s: str) -> tuple:
    try:
        e0, levels = s.split(":")
        return float(e0), int(levels)
    except ValueError:
        raise ConfigInvalid(f"eps must be e0:levels, got {s!r}") from None


def _parse_complex(s) -> complex:
    try:
        return complex(str(s).replace(" ", ""))
    except ValueError:
        raise ConfigInvalid(f"not a number: {s!r}") from None


def read_config(path) -> dict:
    """INI file with optional [run], [model] and [potential] sections."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigInvalid(f"cannot read config {path}")
    out = {}
    base = Path(path).parent
    if cp.has_section("run"):
        r = cp["run"]
        for key in ("model", "pipeline", "out"):
            if key in r:
                out[key] = r[key]
        if "grid" in r:
            out["grid"] = _parse_grid(r["grid"])
        if "eps" in r:
            out["eps"] = _parse_eps(r["eps"])
        for key, conv in (("resolution", int), ("m", int), ("anchor", float), ("beta", float),
                          ("c", float), ("tol", float)):
            if key in r:
                out[key] = conv(r[key])
        if "gamma" in r:
            out["gamma"] = _parse_complex(r["gamma"])
    if cp.has_section("model"):
        mdl = cp["model"]
        for key in ("h0", "v"):
            if key in mdl:
                out[f"{key}_path"] = str((base / mdl[key]).resolve())
        if "kind" in mdl:
            out["model"] = mdl["kind"]
    if cp.has_section("potential"):
        out["potential"] = dict(cp["potential"])
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssfkit", description="spectral shift functions")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("compute", "scan", "crosscheck"):
        s = sub.add_parser(name)
        s.add_argument("--config")
        s.add_argument("--model")
        s.add_argument("--pipeline")
        s.add_argument("--grid")
        s.add_argument("--eps")
        s.add_argument("--resolution", type=int)
        s.add_argument("--anchor", type=float)
        s.add_argument("--out")
        s.add_argument("--beta", type=float)
        s.add_argument("--gamma")
        s.add_argument("--c", type=float)
        s.add_argument("--m", type=int)
        s.add_argument("--tol", type=float)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> RunConfig:
    values = read_config(args.config) if args.config else {}
    if args.model:
        values["model"] = args.model
    for key in ("pipeline", "resolution", "anchor", "out", "beta", "c", "m", "tol"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.grid:
        values["grid"] = _parse_grid(args.grid)
    if args.eps:
        values["eps"] = _parse_eps(args.eps)
    if args.gamma is not None:
        values["gamma"] = _parse_complex(args.gamma)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

def _potential(cfg: RunConfig) -> schrodinger.PotentialSpec:
    p = dict(cfg.potential)
    kw = {}
    if "amplitude" in p:
        kw["amplitude"] = _parse_complex(p.pop("amplitude"))
    for key in ("radius", "width", "cutoff_start", "q", "delta", "power"):
        if key in p:
            kw[key] = float(p.pop(key))
    if "kind" in p:
        kind = p.pop("kind").lower()
        kw["kind"] = (schrodinger.ProfileKind.OSCILLATING if kind.startswith("osc")
                      else schrodinger.ProfileKind.BUMP)
    if p:
        raise ConfigInvalid(f"unknown potential keys {sorted(p)}")
    pot = schrodinger.PotentialSpec(**kw)
    if complex(cfg.gamma) != 1.0:
        pot = pot.scaled(complex(cfg.gamma))
    return pot


def model_pair(cfg: RunConfig):
    """(H, H0, closed form or None) for the ssf pipelines."""
    if cfg.model == "toy:finite":
        h0, v = toy_models.example_4x4()
        return (*finite_pair(h0, v, "toy:finite"), toy_models.finite_ssf_closed_form(h0, v))
    if cfg.model == "toy:jordan":
        h0, v = toy_models.jordan_pair()
        return (*finite_pair(h0, v, "toy:jordan"), toy_models.finite_ssf_closed_form(h0, v))
    if cfg.model == "toy:rank1-disjoint":
        H, H0 = rank_one_pair(RankOneData(complex(cfg.gamma), U0Kind.DISJOINT, None, 1.0),
                              "toy:rank1-disjoint")
        return H, H0, toy_models.disjoint_rank_one_ssf(complex(cfg.gamma))
    if cfg.model == "toy:rank1-interacting":
        H, H0 = rank_one_pair(RankOneData(1j * cfg.beta), "toy:rank1-interacting")
        return H, H0, None
    if cfg.model == "finite":
        h0 = read_dense_matrix(cfg.h0_path)
        v = read_dense_matrix(cfg.v_path)
        try:
            closed = toy_models.finite_ssf_closed_form(h0, v)
        except ConfigError:
            closed = None
        return (*finite_pair(h0, v, "finite"), closed)
    raise ConfigInvalid(f"model {cfg.model} has no operator pair")


def available_pipelines(cfg: RunConfig) -> list:
    if cfg.model == "schrodinger":
        return ["schrodinger"]
    if cfg.model.startswith("toy:rank1"):
        return ["logdet", "closed"]
    out = ["logdet", "cumulative", "cov"]
    H, H0, closed = model_pair(cfg)
    if closed is not None:
        out.append("closed")
    return out


def _interacting_exclusions(beta: float) -> list:
    ex = [(0.0, 1e-3), (1.0, 1e-3)]
    if math.isclose(abs(beta), toy_models.BETA_CRIT, abs_tol=1e-15):
        ex.append((0.5, toy_models.SINGULAR_WINDOW))
    return ex


def run_pipeline(cfg: RunConfig, pipeline: str, grid: np.ndarray) -> SsfCurve:
    if cfg.model == "schrodinger":
        if pipeline not in ("auto", "schrodinger"):
            raise ConfigInvalid("the Schrodinger model only has the boundary-value pipeline")
        return schrodinger.xi_prime_essential(_potential(cfg), grid, cfg.resolution)
    H, H0, closed = model_pair(cfg)
    if pipeline == "auto":
        pipeline = "logdet"
    eps = cfg.eps_schedule()
    if pipeline == "closed":
        if cfg.model == "toy:rank1-interacting":
            return ssf_trace.closed_form_curve(cfg.beta, grid)
        if closed is None:
            raise ConfigInvalid("no closed form for this model")
        return SsfCurve(grid, np.asarray(closed(grid), dtype=complex), None,
                        ssf_trace.Pipeline.CLOSED_FORM, {"jumps": [list(j) for j in closed.jumps]})
    if pipeline == "logdet":
        ex = _interacting_exclusions(cfg.beta) if cfg.model == "toy:rank1-interacting" else ()
        return ssf_trace.ssf_via_logdet(H0, H, grid, eps, exclusions=ex)
    if H.kind != OperatorKind.FINITE:
        raise ConfigInvalid(f"pipeline {pipeline} needs a finite model")
    if pipeline == "cumulative":
        return ssf_trace.ssf_cumulative_from_pairings(H, H0, grid, anchor=cfg.anchor)
    if pipeline == "bv":
        return ssf_trace.ssf_derivative_bv(H, H0, grid, eps)
    if pipeline == "cov":
        cov = None
        if cfg.c is not None:
            cov = rel_trace.ChangeOfVariables(cfg.c, cfg.m)
        return rel_trace.ssf_change_of_variables(H, H0, cov, grid, m=cfg.m)
    raise ConfigInvalid(f"pipeline {pipeline} not available for {cfg.model}")


def _apply_anchor(cfg: RunConfig, curve: SsfCurve, pipeline: str) -> SsfCurve:
    """Renormalise xi to vanish at the anchor, which must sit in a spectral gap."""
    if cfg.anchor is None or curve.xi is None or pipeline in ("closed", "cumulative"):
        return curve
    if cfg.model != "schrodinger":
        H, H0, _ = model_pair(cfg)
        pts = ssf_trace.spectrum_points(H, H0)
        if pts.size and np.min(np.abs(pts - cfg.anchor)) < 1e-6:
            raise ConfigInvalid(f"anchor {cfg.anchor} is not inside a spectral gap")
    ref = run_pipeline(cfg, pipeline, np.array([cfg.anchor]))
    curve.xi = curve.xi - ref.xi[0]
    curve.meta["anchor"] = cfg.anchor
    return curve


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "nan" if not np.isfinite(x) else repr(float(x) + 0.0)   # no "-0.0"


def curve_to_csv(curve: SsfCurve, header: dict) -> str:
    buf = io.StringIO()
    for key in sorted(header):
        buf.write(f"# {key}: {json.dumps(header[key], sort_keys=True, default=str)}\n")
    buf.write("lambda,re_xi,im_xi,re_dxi,im_dxi,flag\n")
    n = curve.lambdas.size
    xi = curve.xi if curve.xi is not None else np.full(n, complex(np.nan, np.nan))
    dxi = curve.derivative_xi if curve.derivative_xi is not None else np.full(n, complex(np.nan, np.nan))
    for i in range(n):
        buf.write(",".join([_fmt(curve.lambdas[i]), _fmt(xi[i].real), _fmt(xi[i].imag),
                            _fmt(dxi[i].real), _fmt(dxi[i].imag), str(curve.flags[i])]) + "\n")
    return buf.getvalue()


def _header(cfg: RunConfig, curve: SsfCurve, pipeline: str) -> dict:
    return {"config_hash": cfg.digest(), "model": cfg.model, "pipeline": pipeline,
            "curve_pipeline": curve.pipeline.value, "grid": list(cfg.grid_spec()),
            "tolerances": {"eps_schedule": curve.meta.get("eps_schedule"),
                           "resolution": cfg.resolution, "crosscheck_tol": cfg.tol},
            "meta": curve.meta}


def _emit(text: str, out: Optional[str], sidecar: Optional[dict] = None):
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).write_text(text)
    if sidecar is not None:
        Path(out + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=str) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_compute(cfg: RunConfig) -> int:
    pipeline = cfg.pipeline
    if pipeline == "auto":
        pipeline = "schrodinger" if cfg.model == "schrodinger" else "logdet"
    curve = run_pipeline(cfg, pipeline, cfg.lambdas())
    curve = _apply_anchor(cfg, curve, pipeline)
    header = _header(cfg, curve, pipeline)
    _emit(curve_to_csv(curve, header), cfg.out, {"config": cfg.canonical(), **header})
    return EXIT_OK


def cmd_scan(cfg: RunConfig) -> int:
    lo, hi, n = cfg.grid_spec()
    if cfg.model == "schrodinger":
        rep = schrodinger.scan_singularities(_potential(cfg), (lo, hi), cfg.resolution, n)
        doc = json.loads(rep.to_json())
    elif cfg.model == "toy:rank1-interacting":
        lo, hi = max(lo, 0.0), min(hi, 1.0)
        entries = toy_models.scan_rank_one(cfg.beta, (lo, hi))
        doc = {"entries": [asdict(e) for e in entries],
               "meta": {"beta": cfg.beta, "range": [lo, hi], "threshold": 0.05}}
    else:
        raise ConfigInvalid("scan needs a Schrodinger or rank-one interacting model")
    doc["meta"]["config_hash"] = cfg.digest()
    _emit(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n", cfg.out)
    return EXIT_OK


def _comparable(curve: SsfCurve) -> np.ndarray:
    vals = curve.xi if curve.xi is not None else curve.derivative_xi
    return np.asarray(vals, dtype=complex)


def crosscheck_table(cfg: RunConfig) -> list:
    """Rows (a, b, max |xi_a - xi_b|, points compared) over jointly ok grid points.

    Smoothed curves (cumulative) are only compared further than two mollifier
    widths from spectrum points.
    """
    grid = cfg.lambdas()
    names = available_pipelines(cfg)
    curves = {name: run_pipeline(cfg, name, grid) for name in names}
    mask_extra = np.ones(grid.size, bool)
    if "cumulative" in curves:
        H, H0, _ = model_pair(cfg)
        w = curves["cumulative"].meta["mollifier_half_width"]
        for p in ssf_trace.spectrum_points(H, H0):
            mask_extra &= np.abs(grid - p) > 2 * w
    rows = []
    for a, b in combinations(names, 2):
        m = curves[a].mask_ok() & curves[b].mask_ok()
        if "cumulative" in (a, b):
            m &= mask_extra
        va, vb = _comparable(curves[a]), _comparable(curves[b])
        m &= np.isfinite(va) & np.isfinite(vb)
        d = float(np.max(np.abs(va[m] - vb[m]))) if np.any(m) else 0.0
        rows.append((a, b, d, int(m.sum())))
    return rows


def cmd_crosscheck(cfg: RunConfig) -> int:
    if len(available_pipelines(cfg)) < 2:
        raise ConfigInvalid(f"model {cfg.model} supports fewer than two pipelines")
    rows = crosscheck_table(cfg)
    lines = [f"# config_hash: {cfg.digest()}", f"# tol: {cfg.tol!r}", "pipeline_a,pipeline_b,max_abs_diff,points"]
    lines += [f"{a},{b},{d!r},{n}" for a, b, d, n in rows]
    _emit("\n".join(lines) + "\n", cfg.out)
    return EXIT_OK if all(d <= cfg.tol for _, _, d, _ in rows) else EXIT_CONVERGENCE


COMMANDS = {"compute": cmd_compute, "scan": cmd_scan, "crosscheck": cmd_crosscheck}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # negative ranges such as "--grid -0.5:1.5:400" would read as an option
    for i in range(len(argv) - 1):
        if argv[i] in ("--grid", "--anchor", "--eps") and argv[i + 1].startswith("-"):
            argv[i], argv[i + 1] = f"{argv[i]}={argv[i + 1]}", ""
    argv = [a for a in argv if a != ""]
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ValueError, TypeError, OSError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        log.error("no convergence: %s", exc)
        return EXIT_CONVERGENCE
    except SingularityProximity as exc:
        log.error("singularity: %s", exc)
        return EXIT_SINGULAR


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``gneumann verify | solve | lambda``."""

from __future__ import annotations

import os

# Cap BLAS threads before numpy is loaded; SOLVER_THREADS also bounds the
# thread pools used by multi-start searches.
if os.environ.get("SOLVER_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["SOLVER_THREADS"])

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import estimate_lambda, h_family, nonconstancy_certificate, threshold_check
from .cone import ConeSpec, project_k, project_sigma, qp_projection, random_k_profile
from .energy import radial_sup_bound, radial_sup_constant, weak_residual
from .grid import ConfigError, RadialProfile, build_grid, neumann_closure
from .quadrature import (
    exponent_bounds_quiet,
    luxemburg,
    modular,
    modular_pairing,
    monte_carlo_oracle,
)
from .solver import NumericalError, SolverConfig, constant_diagnostics, mountain_pass
from .young import ConditionError, exponent_bounds, parse_family, verify_young_axioms, xi_minus, xi_plus

GRID_KEYS = {"N": ("N", int), "s": ("s", float), "M": ("M", int), "E": ("E", int),
             "Rout": ("R_out", float), "Kang": ("K_ang", int)}
SUITES = ("young", "modular", "luxemburg", "radial", "constants", "cone", "pairing")


class UsageError(Exception):
    pass


# -- parsing -----------------------------------------------------------------

def parse_grid(text: str) -> dict:
    out = {}
    for item in filter(None, (x.strip() for x in text.split(","))):
        if "=" not in item:
            raise UsageError(f"grid entry '{item}' is not key=value")
        k, v = (x.strip() for x in item.split("=", 1))
        if k not in GRID_KEYS:
            raise UsageError(f"unknown grid key '{k}' (use {', '.join(GRID_KEYS)})")
        name, typ = GRID_KEYS[k]
        try:
            out[name] = typ(v)
        except ValueError:
            raise UsageError(f"grid value for {k} is not a number: '{v}'") from None
    return out


def _family(text: str):
    try:
        return parse_family(text)
    except (ValueError, ConditionError, OSError) as exc:
        raise UsageError(f"bad family '{text}': {exc}") from None


def resolve(args) -> dict:
    """Merge the JSON config (if any) with command-line flags; flags win."""
    cfg: dict = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    if "grid" in cfg and isinstance(cfg["grid"], dict):
        cfg.update(cfg.pop("grid"))
    if "family" in cfg:
        cfg["fam"] = cfg.pop("family")
    if args.family:
        cfg["fam"] = args.family
    if args.grid:
        cfg.update(parse_grid(args.grid))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "p", None) is not None:
        cfg["p"] = args.p
    if args.suite:
        cfg["suite"] = args.suite
    if args.out:
        cfg["out"] = args.out
    return cfg


def _prepare_out(path: str | None) -> Path | None:
    if path is None:
        return None
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory not writable: {exc}") from None
    return out


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dump_json(obj, path: Path | None) -> str:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        path.write_text(text)
    return text


def _grid_from(cfg: dict, **defaults):
    keys = ("N", "s", "M", "E", "R_out", "K_ang")
    params = {k: cfg.get(k, defaults.get(k)) for k in keys}
    params = {k: v for k, v in params.items() if v is not None}
    return build_grid(**params)


# -- verification suites -----------------------------------------------------

def suite_young(fam, grid, seed) -> dict:
    rep = verify_young_axioms(fam, samples=10_000, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = exponent_bounds(fam)
    return {"passed": rep.passed, "bounds": b.as_tuple(), "report": rep.to_dict()}


def _random_closed(fam, grid, rng):
    return neumann_closure(RadialProfile(random_k_profile(grid.n_int, rng)), fam, grid)


def suite_modular(fam, grid, seed, profiles=5, samples=100_000) -> dict:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(profiles):
        u = _random_closed(fam, grid, rng)
        mv = modular(u, fam, grid)
        est, se = monte_carlo_oracle(u, fam, grid, samples, seed=seed * 1000 + k)
        rows.append({"modular": mv.value, "tail_bound": mv.tail_bound, "mc": est, "se": se,
                     "z": (mv.value - est) / se if se > 0 else 0.0})
    return {"passed": all(abs(r["z"]) <= 3 for r in rows), "profiles": rows}


def suite_luxemburg(fam, grid, seed, profiles=20) -> dict:
    rng = np.random.default_rng(seed)
    b = exponent_bounds_quiet(fam)
    worst = math.inf
    for _ in range(profiles):
        u = _random_closed(fam, grid, rng)
        lux = luxemburg(u, fam, grid).value
        rho = modular(u, fam, grid).value
        lo, hi = float(xi_minus(lux, b)), float(xi_plus(lux, b))
        worst = min(worst, (rho - lo) / rho + 1e-9, (hi - rho) / rho + 1e-9)
    return {"passed": worst >= 0, "worst_relative_margin": worst}


def suite_radial(fam, grid, seed, profiles=100) -> dict:
    # The bound is proven on r <= 1/2 only; whole-ball violations are counted.
    rng = np.random.default_rng(seed)
    half = grid.r <= 0.5
    worst_half = worst = math.inf
    over = 0
    for _ in range(profiles):
        v = random_k_profile(grid.n_int, rng)
        sup, bound = radial_sup_bound(RadialProfile(v), grid)
        worst_half = min(worst_half, bound - float(v[half].max()))
        worst = min(worst, bound - sup)
        over += sup > bound
    return {"passed": worst_half >= 0, "constant": radial_sup_constant(grid.N),
            "worst_slack_half_ball": worst_half, "worst_slack_whole_ball": worst,
            "whole_ball_violations": over}


def suite_constants(fam, grid, seed, p=4.0) -> dict:
    cfg = SolverConfig(p=p, fam=fam, _grid=grid, **grid.params())
    d = constant_diagnostics(cfg)
    ok = d["u=0"]["residual_max_abs"] < 1e-10 and d["u=1"]["residual_max_abs"] < 1e-10
    return {"passed": bool(ok), **d}


def suite_cone(fam, grid, seed, trials=1000) -> dict:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 7))
        w = rng.uniform(0.1, 2.0, n)
        x = rng.normal(size=n) * rng.uniform(0.1, 5.0)
        spec = ConeSpec(w)
        worst = max(worst, float(np.max(np.abs(project_k(x, spec) - qp_projection(x, w, nonneg=True)))))
        if n >= 2:
            ref = qp_projection(x, w, zero_mean=True)
            nr = math.sqrt(float(w @ ref**2))
            if nr > 1e-6:
                worst = max(worst, float(np.max(np.abs(project_sigma(x, spec) - ref / nr))))
    return {"passed": worst <= 1e-6, "worst_deviation": worst}


def pairing_orders(fam, grid, rng, eps=(1e-3, 1e-4, 1e-5)) -> dict:
    """Errors of central differences of the modular against the pairing."""
    u = _random_closed(fam, grid, rng)
    phi = RadialProfile(rng.normal(size=grid.n_int), rng.normal(size=grid.E))
    pr = modular_pairing(u, phi, fam, grid)
    errs = []
    for e in eps:
        up = RadialProfile(u.interior + e * phi.interior, u.exterior + e * phi.exterior)
        um = RadialProfile(u.interior - e * phi.interior, u.exterior - e * phi.exterior)
        fd = (modular(up, fam, grid).value - modular(um, fam, grid).value) / (2 * e)
        errs.append(abs(fd - pr))
    scale = modular(RadialProfile(np.abs(u.interior) + np.abs(phi.interior),
                                  np.abs(u.exterior) + np.abs(phi.exterior)), fam, grid).value
    # roundoff in a central difference of a sum of size `scale`
    floors = [1e3 * np.finfo(float).eps * scale / e for e in eps]
    orders = [math.log10(errs[i] / errs[i + 1]) / math.log10(eps[i] / eps[i + 1])
              if errs[i + 1] > 0 else math.inf for i in range(len(eps) - 1)]
    exact = all(err <= fl for err, fl in zip(errs, floors))
    return {"pairing": pr, "errors": errs, "roundoff_floor": floors, "orders": orders,
            "exact_to_roundoff": exact, "passed": exact or min(orders) >= 1.9}


def suite_pairing(fam, grid, seed, directions=3) -> dict:
    rng = np.random.default_rng(seed)
    rows = [pairing_orders(fam, grid, rng) for _ in range(directions)]
    return {"passed": all(r["passed"] for r in rows), "directions": rows}


SUITE_FUNCS = {"young": suite_young, "modular": suite_modular, "luxemburg": suite_luxemburg,
               "radial": suite_radial, "constants": suite_constants, "cone": suite_cone,
               "pairing": suite_pairing}


# -- subcommands -------------------------------------------------------------

def cmd_verify(cfg: dict) -> int:
    suite = cfg.get("suite", "all")
    names = SUITES if suite == "all" else tuple(suite.split("+"))
    for n in names:
        if n not in SUITE_FUNCS:
            raise UsageError(f"unknown suite '{n}' (choose from {', '.join(SUITES)} or all)")
    fam = _family(cfg.get("fam", "power:2"))
    grid = _grid_from(cfg, M=32, E=24, R_out=4.0)
    seed = int(cfg.get("seed", 0))
    out = _prepare_out(cfg.get("out"))
    results = {n: SUITE_FUNCS[n](fam, grid, seed) for n in names}
    report = {"command": "verify", "version": __version__, "family": fam.label(),
              "grid": grid.params(), "seed": seed, "suites": results,
              "passed": all(r["passed"] for r in results.values())}
    if "modular" in results and grid.M >= 16:
        coarse = build_grid(**{**grid.params(), "M": grid.M // 2})
        u_f = RadialProfile.from_function(lambda r: r, grid)
        u_c = RadialProfile.from_function(lambda r: r, coarse)
        report["grid_convergence"] = {
            "modular_of_r_fine": modular(neumann_closure(u_f, fam, grid), fam, grid).value,
            "modular_of_r_coarse": modular(neumann_closure(u_c, fam, coarse), fam, coarse).value,
        }
    text = dump_json(report, out / "verify.json" if out else None)
    if out is None:
        sys.stdout.write(text)
    for n, r in results.items():
        print(f"{n}: {'pass' if r['passed'] else 'FAIL'}", file=sys.stderr)
    return 0 if report["passed"] else 1


def _solver_config(cfg: dict) -> SolverConfig:
    d = {k: v for k, v in cfg.items() if k not in ("suite", "out")}
    if "p" not in d:
        raise UsageError("solve needs the exponent p (config field or --p)")
    d.setdefault("fam", "power:2")
    if isinstance(d["fam"], str):
        d["fam"] = _family(d["fam"])
    sc = SolverConfig.from_dict(d)
    sc.validate()
    return sc


def cmd_solve(cfg: dict) -> int:
    sc = _solver_config(cfg)
    out = _prepare_out(cfg.get("out", "."))
    res = mountain_pass(sc)
    grid = sc.grid
    wr = weak_residual(res.profile, sc.fam, grid, sc.p)
    cert = nonconstancy_certificate(res, sc)
    coarse = None
    if sc.M // 2 >= 8:
        d = sc.to_dict()
        d.update(M=sc.M // 2, E=max(4, sc.E // 2), K_ang=max(16, sc.K_ang // 2))
        try:
            rc = mountain_pass(SolverConfig.from_dict(d))
            coarse = {"M": sc.M // 2, "c": rc.c, "c_difference": res.c - rc.c}
        except NumericalError as exc:
            coarse = {"M": sc.M // 2, "error": str(exc)}
    ok = wr.max_abs < sc.tol_residual and wr.neumann_max < 1e-6
    report = {
        "command": "solve", "version": __version__, "config": sc.to_dict(),
        "c": res.c, "I_K(1)": cert["I_K(1)"], "residual": wr.to_dict(),
        "result": res.to_dict(), "certificate": cert, "grid_convergence": coarse,
        "residual_tolerance_met": bool(ok),
    }
    res.profile.to_csv(out / "profile.csv", grid)
    dump_json(report, out / "solve.json")
    dump_json(cert, out / "certificate.json")
    print(f"c = {res.c:.12g}   I_K(1) = {cert['I_K(1)']:.12g}   residual = {wr.max_abs:.3e}",
          file=sys.stderr)
    return 0 if ok else 1


def cmd_lambda(cfg: dict) -> int:
    fam = _family(cfg.get("fam", "power:2"))
    p = float(cfg.get("p", 4.0))
    if not p > 2:
        raise UsageError(f"p must exceed 2, got {p}")
    grid = _grid_from(cfg, M=32, E=24)
    seed = int(cfg.get("seed", 0))
    out = _prepare_out(cfg.get("out", "."))
    est = estimate_lambda(fam, grid, seed=seed)
    b = exponent_bounds_quiet(fam)
    factor = (p / 2) ** ((b.q_plus - 2) / (p - 2))
    verdict = threshold_check(p, b.q_plus, est.value)
    coarse = None
    if grid.M // 2 >= 8:
        cg = build_grid(**{**grid.params(), "M": grid.M // 2})
        coarse = {"M": grid.M // 2, "value": estimate_lambda(fam, cg, seed=seed).value}
        coarse["relative_change"] = (est.value - coarse["value"]) / est.value
    vc = est.certificate
    h = h_family(RadialProfile(vc.interior), fam, grid, p, r=1.5)
    report = {
        "command": "lambda", "version": __version__, "family": fam.label(), "p": p,
        "grid": grid.params(), "seed": seed, **est.to_dict(),
        "threshold": (p - 2) / factor, "verdict": bool(verdict),
        "q_minus": b.q_minus, "q_plus": b.q_plus, "grid_convergence": coarse,
        "h_family": h.to_dict(),
    }
    dump_json(report, out / "lambda.json")
    vc.to_csv(out / "certificate.csv", grid)
    print(f"Lambda = {est.value:.10g}   verdict = {verdict}", file=sys.stderr)
    return 0


# -- main --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gneumann", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in (("verify", "run property suites"), ("solve", "mountain pass and fixed point"),
                      ("lambda", "estimate Lambda and test the threshold")):
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--suite", help="suite name, several joined by '+', or 'all'")
        sp.add_argument("--family", help="Young family, e.g. power:3 or doublepower:2,3")
        sp.add_argument("--grid", help="grid parameters, e.g. N=2,s=0.5,M=32")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--p", type=float, help="exponent of the power nonlinearity")
        sp.add_argument("--out", help="output directory")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = resolve(args)
        return {"verify": cmd_verify, "solve": cmd_solve, "lambda": cmd_lambda}[args.command](cfg)
    except (UsageError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

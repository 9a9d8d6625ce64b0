"""Batch front end: scenario configs in, CSV/JSON reports and a manifest out.

Configs are strict JSON (unknown keys rejected); every run embeds its fully
resolved config so outputs are reproducible byte for byte.  Timings live
only in the manifest and stay outside the hashed report body.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import __version__, functionals, pohozaev
from .fracops import assemble_fractional, assemble_laplacian, assemble_mixed, stencil_rows
from .geometry import Domain, boundary_quadrature, build_grid
from .solvers import (GridFunction, Nonlinearity, SystemNonlinearity, brezis_nirenberg,
                      constant_source, default_starts, linear, power, principal_eigenpair,
                      solve_linear, solve_semilinear, solve_system)

BUNDLED = ("torsion1d", "mixed_torsion1d", "dilation_manufactured", "eigen_flux",
           "disk_torsion2d", "bn_radial3d", "system_subcritical1d", "blowup_probe")

CSV_COLUMNS = ("scenario", "identity", "N", "h", "lhs", "rhs", "residual_abs",
               "residual_rel", "order", "extrapolated", "monotone", "warning")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# strict config validation
# ---------------------------------------------------------------------------

_TOP_KEYS = {"name", "domain", "grid", "operator", "nonlinearity", "solver",
             "checks", "diagnostics", "boundary_quadrature_M", "tolerances",
             "output_basename"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing key {key!r} in {where}")
    return d[key]


def parse_config(raw: dict) -> dict:
    """Validate and resolve a scenario config; returns the canonical dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config root")

    dom_raw = _need(raw, "domain", "config")
    _reject_unknown(dom_raw, {"kind", "radius"}, "domain")
    kind = _need(dom_raw, "kind", "domain")
    if kind not in ("interval", "disk2d", "ball3d_radial"):
        raise ConfigError(f"unsupported domain kind {kind!r}")
    domain = {"kind": kind, "radius": float(dom_raw.get("radius", 1.0))}

    grid_raw = _need(raw, "grid", "config")
    _reject_unknown(grid_raw, {"N", "N_list"}, "grid")
    if ("N" in grid_raw) == ("N_list" in grid_raw):
        raise ConfigError("grid needs exactly one of 'N' or 'N_list'")
    if "N" in grid_raw:
        grid = {"N_list": [int(grid_raw["N"])]}
    else:
        grid = {"N_list": [int(n) for n in grid_raw["N_list"]]}

    op_raw = _need(raw, "operator", "config")
    if {"a1", "s1", "a2", "s2"} & set(op_raw):
        _reject_unknown(op_raw, {"a1", "s1", "a2", "s2"}, "operator")
        operator = {
            "a1": float(op_raw.get("a1", 0.0)),
            "s1": None if op_raw.get("s1") is None else float(op_raw["s1"]),
            "a2": float(op_raw.get("a2", 0.0)),
            "s2": None if op_raw.get("s2") is None else float(op_raw["s2"]),
        }
        for i in ("1", "2"):
            if operator[f"a{i}"] > 0 and operator[f"s{i}"] is None:
                raise ConfigError(f"operator with a{i} > 0 needs 's{i}'")
    else:
        _reject_unknown(op_raw, {"a", "s"}, "operator")
        operator = {"a": float(op_raw.get("a", 0.0)),
                    "s": None if op_raw.get("s") is None else float(op_raw["s"])}
        if operator["a"] > 0 and operator["s"] is None:
            raise ConfigError("operator with a > 0 needs 's'")

    nl_raw = raw.get("nonlinearity")
    nonlinearity = None
    if nl_raw is not None:
        fam = _need(nl_raw, "family", "nonlinearity")
        if fam == "constant_source":
            _reject_unknown(nl_raw, {"family", "c"}, "nonlinearity")
            nonlinearity = {"family": fam, "c": float(_need(nl_raw, "c", "nonlinearity"))}
        elif fam == "linear":
            _reject_unknown(nl_raw, {"family", "lam"}, "nonlinearity")
            nonlinearity = {"family": fam, "lam": float(_need(nl_raw, "lam", "nonlinearity"))}
        elif fam == "power":
            _reject_unknown(nl_raw, {"family", "lam", "p"}, "nonlinearity")
            nonlinearity = {"family": fam, "lam": float(_need(nl_raw, "lam", "nonlinearity")),
                            "p": float(_need(nl_raw, "p", "nonlinearity"))}
        elif fam == "brezis_nirenberg":
            _reject_unknown(nl_raw, {"family", "lam"}, "nonlinearity")
            nonlinearity = {"family": fam, "lam": float(_need(nl_raw, "lam", "nonlinearity"))}
        elif fam == "system":
            keys = {"family", "lam1", "lam2", "delta", "alpha", "beta", "p", "q"}
            _reject_unknown(nl_raw, keys, "nonlinearity")
            nonlinearity = {"family": fam}
            for k in sorted(keys - {"family"}):
                nonlinearity[k] = float(_need(nl_raw, k, "nonlinearity"))
        else:
            raise ConfigError(f"unknown nonlinearity family {fam!r}")

    sol_raw = _need(raw, "solver", "config")
    skind = _need(sol_raw, "kind", "solver")
    if skind not in ("linear", "eigen", "semilinear", "system", "manufactured"):
        raise ConfigError(f"unknown solver kind {skind!r}")
    _reject_unknown(sol_raw, {"kind", "starts", "continuation", "profile"}, "solver")
    solver = {"kind": skind}
    if skind == "manufactured":
        prof = sol_raw.get("profile", "parabolic")
        if prof not in ("parabolic", "parabolic_sq"):
            raise ConfigError(f"unknown manufactured profile {prof!r}")
        solver["profile"] = prof
    if skind in ("semilinear", "system"):
        solver["starts"] = [float(m) for m in sol_raw.get("starts", [0.1, 0.5, 1.0, 2.0, 5.0])]
    if "continuation" in sol_raw:
        cont = sol_raw["continuation"]
        _reject_unknown(cont, {"lam_start", "lam_end"}, "solver.continuation")
        solver["continuation"] = {"lam_start": float(_need(cont, "lam_start", "continuation")),
                                  "lam_end": float(_need(cont, "lam_end", "continuation"))}

    checks = list(raw.get("checks", []))
    for c in checks:
        if c not in pohozaev.IDENTITIES:
            raise ConfigError(f"unknown check {c!r}")
    diagnostics = list(raw.get("diagnostics", []))
    for dname in diagnostics:
        if dname != "blowup":
            raise ConfigError(f"unknown diagnostic {dname!r}")

    tolerances = {str(k): float(v) for k, v in raw.get("tolerances", {}).items()}
    for k in tolerances:
        if k not in pohozaev.IDENTITIES:
            raise ConfigError(f"tolerance for unknown check {k!r}")

    system_mode = "a1" in operator
    system_checks = {"ET09A", "ET12C"}
    if system_mode:
        if skind != "system":
            raise ConfigError("a system operator needs the system solver")
        bad = [c for c in checks if c not in system_checks]
    else:
        bad = [c for c in checks if c in system_checks]
    if bad:
        raise ConfigError(f"check {bad[0]!r} does not match the operator/solver mode")
    if "COR13_flux" in checks and skind != "eigen":
        raise ConfigError("COR13_flux needs the eigen solver")
    if "COR15_bn" in checks:
        if domain["kind"] != "ball3d_radial":
            raise ConfigError("COR15_bn runs on the radial 3D ball only")
        if nonlinearity is None or nonlinearity["family"] != "brezis_nirenberg":
            raise ConfigError("COR15_bn needs the brezis_nirenberg nonlinearity")

    return {
        "name": str(raw.get("name", "scenario")),
        "domain": domain,
        "grid": grid,
        "operator": operator,
        "nonlinearity": nonlinearity,
        "solver": solver,
        "checks": checks,
        "diagnostics": diagnostics,
        "boundary_quadrature_M": int(raw.get("boundary_quadrature_M", 256)),
        "tolerances": tolerances,
        "output_basename": str(raw.get("output_basename", raw.get("name", "scenario"))),
    }


def _build_nonlinearity(spec: dict) -> Nonlinearity | SystemNonlinearity:
    fam = spec["family"]
    if fam == "constant_source":
        return constant_source(spec["c"])
    if fam == "linear":
        return linear(spec["lam"])
    if fam == "power":
        return power(spec["lam"], spec["p"])
    if fam == "brezis_nirenberg":
        return brezis_nirenberg(spec["lam"], 3)
    return SystemNonlinearity(spec["lam1"], spec["lam2"], spec["delta"],
                              spec["alpha"], spec["beta"], spec["p"], spec["q"])


# ---------------------------------------------------------------------------
# scenario execution
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    artifact_version: str
    config_hash: str
    body_hash: str
    outputs: dict
    timings: dict
    exit_code: int


def _manufactured(grid, profile: str) -> GridFunction:
    R = grid.domain.radius
    base = np.maximum(1.0 - (grid.radii / R) ** 2, 0.0)
    if profile == "parabolic_sq":
        base = base**2
    return GridFunction(grid, base)


def _run_one_grid(cfg: dict, N: int, results: dict, timings: dict) -> None:
    t0 = time.perf_counter()
    domain = Domain(cfg["domain"]["kind"], cfg["domain"]["radius"])
    grid = build_grid(domain, N)
    bq = boundary_quadrature(grid, cfg["boundary_quadrature_M"])
    op_spec = cfg["operator"]
    system_mode = "a1" in op_spec

    if system_mode:
        a1, s1, a2, s2 = (op_spec["a1"], op_spec["s1"], op_spec["a2"], op_spec["s2"])
        A1 = assemble_mixed(grid, a1, s1) if a1 > 0 else assemble_laplacian(grid)
        A2 = assemble_mixed(grid, a2, s2) if a2 > 0 else assemble_laplacian(grid)
        frac1 = assemble_fractional(grid, s1) if a1 > 0 else None
        frac2 = assemble_fractional(grid, s2) if a2 > 0 else None
    else:
        a, s = op_spec["a"], op_spec["s"]
        A = assemble_mixed(grid, a, s) if a > 0 else assemble_laplacian(grid)
        frac = assemble_fractional(grid, s) if s is not None else None

    nl = _build_nonlinearity(cfg["nonlinearity"]) if cfg["nonlinearity"] else None
    solver = cfg["solver"]
    solves = []
    u = v = eig = None

    if solver["kind"] == "manufactured":
        u = _manufactured(grid, solver["profile"])
    elif solver["kind"] == "linear":
        if nl is None or nl.family != "constant_source":
            raise ConfigError("linear solver needs a constant_source nonlinearity")
        g = GridFunction(grid, nl.f(np.zeros(grid.n_interior)))
        u = solve_linear(A, g)
        solves.append({"kind": "linear", "classification": "nontrivial"})
    elif solver["kind"] == "eigen":
        eig = principal_eigenpair(A)
        u = eig.function
        solves.append({"kind": "eigen", "eigenvalue": eig.value,
                       "residual": eig.residual, "iterations": eig.iterations})
    elif solver["kind"] == "semilinear":
        cont = solver.get("continuation")
        cont_t = (cont["lam_start"], cont["lam_end"]) if cont else None
        chosen = chosen_trivial = None
        for mu in solver["starts"]:
            u0 = GridFunction(grid, mu * np.maximum(
                1.0 - (grid.radii / domain.radius) ** 2, 0.0))
            rep = solve_semilinear(A, nl, u0, continuation=cont_t)
            solves.append({"kind": "semilinear", "start_amplitude": mu,
                           "classification": rep.classification,
                           "iterations": rep.iterations,
                           "final_residual": rep.final_residual,
                           "positive": rep.positive,
                           "message": rep.message})
            if chosen is None and rep.classification == "nontrivial":
                chosen = rep
            if chosen_trivial is None and rep.classification == "trivial":
                chosen_trivial = rep
        chosen = chosen or chosen_trivial
        if chosen is None:
            results.setdefault("failures", []).append(
                f"N={N}: no Newton start converged")
            timings[f"N={N}"] = time.perf_counter() - t0
            return
        u = chosen.solution
    else:  # system
        uv_trivial = None
        for mu in solver["starts"]:
            prof = np.maximum(1.0 - (grid.radii / domain.radius) ** 2, 0.0)
            st = (GridFunction(grid, mu * prof), GridFunction(grid, mu * prof))
            rep = solve_system(A1, A2, nl, st)
            solves.append({"kind": "system", "start_amplitude": mu,
                           "classification": rep.classification,
                           "component_classification": rep.component_classification,
                           "iterations": rep.iterations,
                           "final_residual": rep.final_residual,
                           "message": rep.message})
            if rep.classification == "nontrivial":
                u, v = rep.solution
                break
            if rep.classification == "trivial" and uv_trivial is None:
                uv_trivial = rep.solution
        if u is None and uv_trivial is not None:
            u, v = uv_trivial
        if u is None:
            results.setdefault("failures", []).append(
                f"N={N}: no system start converged")
            timings[f"N={N}"] = time.perf_counter() - t0
            return

    reports = {}
    for check in cfg["checks"]:
        if check == "ET01A":
            rep = pohozaev.check_ET01A(u, a, s, nl, frac, bq)
        elif check == "ET01A_equivalent":
            rep = pohozaev.check_ET01A_equivalent(u, a, s, nl, frac, bq)
        elif check in ("ET06B", "ET06C"):
            rb, rc = pohozaev.check_dilation(u, s, frac, bq)
            rep = rb if check == "ET06B" else rc
        elif check == "ET09A":
            rep = pohozaev.check_ET09A(u, v, a1, s1, a2, s2, nl, frac1, frac2, bq)
        elif check == "ET12C":
            rep = pohozaev.check_ET12C(u, v, nl, a1, s1, a2, s2, frac1, frac2, bq)
        elif check == "COR13_flux":
            rep = pohozaev.check_COR13_flux(eig, a, s, frac, bq)
        else:  # COR15_bn
            lam1s = principal_eigenpair(frac).value if frac is not None else 0.0
            rep = pohozaev.check_COR15_bn(u, nl.lam, a, s, frac, bq, lam1s)
        reports[check] = rep

    diag = {}
    if "blowup" in cfg["diagnostics"]:
        if frac is None:
            raise ConfigError("blowup diagnostic needs a fractional operator (set s)")
        blow = functionals.blowup_profile(u, frac)
        diag["blowup"] = {"slope": blow.slope, "log_beats_power": blow.log_beats_power,
                          "degenerate": blow.degenerate, "n_bins": blow.n_bins,
                          "bin_dist": list(blow.bin_dist), "bin_mean": list(blow.bin_mean)}

    results.setdefault("per_grid", {})[N] = {
        "reports": reports, "solves": solves, "diagnostics": diag,
    }
    timings[f"N={N}"] = time.perf_counter() - t0


def run_scenario(cfg: dict, out_dir: str, threads: int | None = None,
                 tolerance_overrides: dict | None = None) -> RunManifest:
    if threads is not None:
        import numba
        numba.set_num_threads(max(1, int(threads)))
    tols = dict(cfg["tolerances"])
    if tolerance_overrides:
        for k, vv in tolerance_overrides.items():
            if k not in pohozaev.IDENTITIES:
                raise ConfigError(f"tolerance override for unknown check {k!r}")
            tols[k] = float(vv)

    results: dict = {}
    timings: dict = {}
    t0 = time.perf_counter()
    for N in cfg["grid"]["N_list"]:
        _run_one_grid(cfg, N, results, timings)
    timings["total"] = time.perf_counter() - t0

    # assemble study summaries per check over the grids that ran
    per_grid = results.get("per_grid", {})
    Ns = sorted(per_grid)
    studies = {}
    for check in cfg["checks"]:
        res = [per_grid[N]["reports"][check].residual_rel for N in Ns if check in per_grid[N]["reports"]]
        if len(res) >= 3 and all(b == 2 * a for a, b in zip(Ns[:-1], Ns[1:])):
            # a study is only comparable when every grid produced a genuine
            # (non-degenerate) residual of the same solution branch
            degenerate = any(r < 1e-11 for r in res)
            monotone = all(b < a for a, b in zip(res[:-1], res[1:]))
            order = (float(np.mean([np.log2(x / y) for x, y in zip(res[:-1], res[1:])]))
                     if (monotone and not degenerate) else None)
            studies[check] = {"order": order, "monotone": monotone, "degenerate": degenerate}

    exit_code = 0
    if results.get("failures"):
        exit_code = 2
    for check, tol in tols.items():
        for N in Ns:
            rep = per_grid[N]["reports"].get(check)
            if rep is not None and rep.residual_rel > tol:
                exit_code = 2

    csv_text = _render_csv(cfg, per_grid, Ns, studies)
    json_text = _render_json(cfg, per_grid, Ns, studies, results.get("failures", []), tols)

    os.makedirs(out_dir, exist_ok=True)
    base = cfg["output_basename"]
    csv_path = os.path.join(out_dir, base + ".csv")
    json_path = os.path.join(out_dir, base + ".json")
    _atomic_write(csv_path, csv_text)
    _atomic_write(json_path, json_text)

    body_hash = hashlib.sha256((csv_text + json_text).encode()).hexdigest()
    config_hash = hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
    manifest = RunManifest(__version__, config_hash, body_hash,
                           {"csv": csv_path, "json": json_path},
                           timings, exit_code)
    man_path = os.path.join(out_dir, base + ".manifest.json")
    _atomic_write(man_path, json.dumps({
        "artifact_version": manifest.artifact_version,
        "config_hash": manifest.config_hash,
        "body_hash": manifest.body_hash,
        "outputs": manifest.outputs,
        "timings": manifest.timings,
        "exit_code": manifest.exit_code,
    }, indent=2, sort_keys=True) + "\n")
    return manifest


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _render_csv(cfg, per_grid, Ns, studies) -> str:
    lines = [",".join(CSV_COLUMNS)]
    name = cfg["name"]
    for N in Ns:
        for check in cfg["checks"]:
            rep = per_grid[N]["reports"].get(check)
            if rep is None:
                continue
            lines.append(",".join([
                name, check, str(N), repr(rep.h), repr(rep.lhs), repr(rep.rhs),
                repr(rep.residual_abs), repr(rep.residual_rel), "", "", "",
                (rep.warning or "").replace(",", ";"),
            ]))
    for check, st in studies.items():
        lines.append(",".join([
            name, check + "_study", "", "", "", "", "", "",
            _fmt(st["order"]), "", _fmt(st["monotone"]),
            "degenerate" if st["degenerate"] else "",
        ]))
    return "\n".join(lines) + "\n"


def _terms_dict(terms) -> dict:
    if isinstance(terms, tuple):
        return {"u": _terms_dict(terms[0]), "v": _terms_dict(terms[1])}
    return {k: getattr(terms, k) for k in
            ("hs_sq", "hs_sq_doublesum", "h1_sq", "int_F", "int_uf",
             "energy", "flux", "dil_local", "dil_nonlocal", "dil_collar")}


def _render_json(cfg, per_grid, Ns, studies, failures, tols) -> str:
    out = {"resolved_config": cfg, "tolerances_in_effect": tols,
           "per_grid": {}, "studies": studies, "failures": failures,
           "note": "nonexistence outcomes are numerical evidence consistent with "
                   "the corollaries, never a claim of proof"}
    for N in Ns:
        entry = {"solves": per_grid[N]["solves"],
                 "diagnostics": per_grid[N]["diagnostics"], "checks": {}}
        for check, rep in per_grid[N]["reports"].items():
            entry["checks"][check] = {
                "lhs": rep.lhs, "rhs": rep.rhs,
                "residual_abs": rep.residual_abs, "residual_rel": rep.residual_rel,
                "params": rep.params, "warning": rep.warning,
                "extra": rep.extra, "terms": _terms_dict(rep.terms),
            }
        out["per_grid"][str(N)] = entry
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".mixloc-")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# bundled scenarios
# ---------------------------------------------------------------------------

def bundled_config(name: str) -> dict:
    if name not in BUNDLED:
        raise ConfigError(f"unknown bundled scenario {name!r}")
    text = resources.files("mixloc").joinpath(f"scenarios/{name}.json").read_text()
    return parse_config(json.loads(text))


def list_scenarios() -> list[str]:
    return list(BUNDLED)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mixloc",
                                     description="Pohozaev-identity verification runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("--config", required=True,
                       help="path to a config JSON, or 'bundled:<name>'")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads (results are thread-count independent)")
    p_run.add_argument("--tolerance-override", action="append", default=[],
                       metavar="NAME=VAL")

    sub.add_parser("list-scenarios", help="print bundled scenario names")

    p_st = sub.add_parser("dump-stencil", help="dump the 1D fractional stencil as CSV")
    p_st.add_argument("--N", type=int, required=True)
    p_st.add_argument("--s", type=float, required=True)
    p_st.add_argument("--radius", type=float, default=1.0)

    args = parser.parse_args(argv)

    if args.command == "list-scenarios":
        for nm in BUNDLED:
            print(nm)
        return 0

    if args.command == "dump-stencil":
        grid = build_grid(Domain("interval", args.radius), args.N)
        print("offset,weight")
        for off, wgt in stencil_rows(grid, args.s):
            print(f"{off},{wgt!r}")
        return 0

    overrides = {}
    for item in args.tolerance_override:
        if "=" not in item:
            print(f"error: bad --tolerance-override {item!r}", file=sys.stderr)
            return 1
        k, vv = item.split("=", 1)
        overrides[k] = vv
    try:
        if args.config.startswith("bundled:"):
            cfg = bundled_config(args.config.split(":", 1)[1])
        else:
            with open(args.config) as fh:
                cfg = parse_config(json.load(fh))
        manifest = run_scenario(cfg, args.out, args.threads, overrides)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {manifest.outputs['csv']} and {manifest.outputs['json']} "
          f"(body {manifest.body_hash[:12]}, exit {manifest.exit_code})")
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())

"""Batch front-end: JSON configs in, JSON/CSV reports out.

Three subcommands cover the workflows: ``solve`` runs one system to
convergence and dumps the state, ``verify`` runs a named theorem check and
writes a verdict with every margin, ``sweep`` runs a scale family and
tabulates the derived quantities per member.

Exit codes partition outcomes: 0 pass, 1 usage error or refusal,
2 numerical failure (non-convergence or a false verdict), 3 I/O failure.
All outputs are written atomically (temp file + rename) and verdicts are
byte-reproducible from config + seed on the direct solver path.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from fractions import Fraction

import numpy as np

from . import analysis, maxprin
from .geometry import Grid, GridSpec, HolomorphicDatum, build_grid
from .solver import SolverConfig, continuation_solve, solve
from .system import BlowupError, CyclicSpec, make_spec, make_system, stability_check

THEOREMS = (
    "monotonicity",
    "nu-bounds",
    "curvature",
    "hitchin-fiber-comparison",
    "sp4-bounds",
    "max-principle",
    "sym-space-curvature",
)


class UsageError(ValueError):
    """Bad config or arguments; maps to exit code 1."""


# -- config parsing --------------------------------------------------------


def _complex_from(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise UsageError(f"expected number or [re, im] pair, got {value!r}")


def parse_datum(obj) -> HolomorphicDatum:
    """Datum from JSON: {"kind": ..., "coefficient(s)": ..., "degree": ...}."""
    if not isinstance(obj, dict) or "kind" not in obj:
        raise UsageError(f"datum must be an object with a 'kind', got {obj!r}")
    kind = obj["kind"]
    try:
        if kind == "zero":
            return HolomorphicDatum.zero()
        if kind == "constant":
            return HolomorphicDatum.constant(_complex_from(obj["coefficient"]))
        if kind == "monomial":
            return HolomorphicDatum.monomial(_complex_from(obj["coefficient"]),
                                             int(obj["degree"]))
        if kind == "polynomial":
            return HolomorphicDatum.polynomial([_complex_from(c)
                                                for c in obj["coefficients"]])
    except KeyError as exc:
        raise UsageError(f"datum {kind!r} is missing field {exc}") from exc
    raise UsageError(f"unknown datum kind {kind!r}")


def parse_grid(obj, resolution_override=None) -> Grid:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise UsageError("config needs a 'grid' object with a 'kind'")
    res = obj.get("resolution", 128)
    if resolution_override is not None:
        res = resolution_override
    if isinstance(res, list):
        res = tuple(int(r) for r in res)
    else:
        res = int(res)
    kwargs = {}
    if "radius" in obj:
        kwargs["radius"] = float(obj["radius"])
    if "periods" in obj:
        kwargs["periods"] = tuple(float(p) for p in obj["periods"])
    try:
        return build_grid(GridSpec(obj["kind"], res, **kwargs))
    except ValueError as exc:
        raise UsageError(f"bad grid: {exc}") from exc


def parse_spec(obj) -> CyclicSpec:
    if not isinstance(obj, dict):
        raise UsageError("config needs a 'spec' object")
    try:
        data = tuple(parse_datum(d) for d in obj["data"])
        degrees = obj.get("degrees")
        return make_spec(obj["variant"], int(obj["n"]), data,
                         t=_complex_from(obj.get("t", 1.0)),
                         degrees=tuple(degrees) if degrees is not None else None)
    except KeyError as exc:
        raise UsageError(f"spec is missing field {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"bad spec: {exc}") from exc


def parse_solver(obj) -> SolverConfig:
    obj = obj or {}
    known = {f for f in SolverConfig.__dataclass_fields__}
    extra = set(obj) - known
    if extra:
        raise UsageError(f"unknown solver options: {sorted(extra)}")
    try:
        return SolverConfig(**obj)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad solver config: {exc}") from exc


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config root must be a JSON object")
    return cfg


# -- output helpers --------------------------------------------------------


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, Fraction):
        return [obj.numerator, obj.denominator]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


_VOLATILE_KEYS = ("wall_time", "wall_time_s")


def _strip_volatile(obj):
    """Drop wall-clock fields so verdicts are byte-reproducible."""
    if isinstance(obj, dict):
        return {k: _strip_volatile(v) for k, v in obj.items()
                if k not in _VOLATILE_KEYS}
    if isinstance(obj, list):
        return [_strip_volatile(v) for v in obj]
    return obj


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, payload: dict, volatile_ok: bool = False) -> None:
    data = _json_ready(payload)
    if not volatile_ok:
        data = _strip_volatile(data)
    _atomic_write(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_state_csv(path: str, grid: Grid, u: np.ndarray) -> None:
    z = grid.z()
    rows = []
    header = ["x", "y"] + [f"u_{k + 1}" for k in range(u.shape[1])]
    for i in range(grid.n_nodes):
        rows.append([f"{z[i].real:.17g}", f"{z[i].imag:.17g}"]
                    + [f"{u[i, k]:.17g}" for k in range(u.shape[1])])
    _write_csv(path, header, rows)


def _write_csv(path: str, header, rows) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _default_boundary(grid: Grid) -> str:
    return "periodic" if grid.kind == "torus" else "fuchsian"


# -- subcommands -----------------------------------------------------------


def cmd_solve(cfg: dict, out_dir: str, resolution=None) -> int:
    grid = parse_grid(cfg.get("grid"), resolution)
    spec = parse_spec(cfg.get("spec"))
    sc = parse_solver(cfg.get("solver"))
    boundary = cfg.get("boundary", _default_boundary(grid))
    system = make_system(spec, grid, boundary=boundary)
    report = solve(system, config=sc)
    write_json(os.path.join(out_dir, "report.json"),
               report.to_json_dict(), volatile_ok=True)
    write_state_csv(os.path.join(out_dir, "state.csv"), grid, report.state.u)
    if not report.converged:
        print(f"solve: not converged ({report.message})", file=sys.stderr)
        return 2
    print(f"solve: converged in {report.iterations} iterations, "
          f"residual {report.final_residual:.3e}")
    return 0


def _run_theorem(theorem: str, cfg: dict, seed: int, resolution) -> dict:
    sc = parse_solver(cfg.get("solver"))
    mc = int(cfg.get("margin_cells", 5))
    if theorem == "monotonicity":
        grid = parse_grid(cfg.get("grid"), resolution)
        t_list = cfg.get("t_list")
        if not t_list:
            raise UsageError("monotonicity needs a nonempty 't_list'")
        return analysis.verify_monotonicity(parse_spec(cfg.get("spec")), grid,
                                            [float(t) for t in t_list], sc, mc)
    if theorem == "nu-bounds":
        grid = parse_grid(cfg.get("grid"), resolution)
        return analysis.verify_nu_bounds(parse_spec(cfg.get("spec")), grid, sc, mc)
    if theorem == "curvature":
        grid = parse_grid(cfg.get("grid"), resolution)
        return analysis.verify_curvature_bounds(parse_spec(cfg.get("spec")), grid, sc, mc)
    if theorem == "hitchin-fiber-comparison":
        grid = parse_grid(cfg.get("grid"), resolution)
        return analysis.verify_fiber_comparison(parse_spec(cfg.get("spec")), grid, sc, mc)
    if theorem == "sp4-bounds":
        grid = parse_grid(cfg.get("grid"), resolution)
        return analysis.verify_sp4_bounds(parse_spec(cfg.get("spec")), grid, sc, mc)
    if theorem == "max-principle":
        violate = cfg.get("violate")
        if violate is not None:
            grid = parse_grid(cfg.get("grid", {"kind": "torus", "resolution": [16, 16]}),
                              resolution)
            rng = np.random.default_rng(seed)
            sysv = maxprin.random_cooperative_system(grid, int(cfg.get("n", 3)),
                                                     rng, violate=violate)
            cond = maxprin.check_conditions(sysv)
            return {"passed": not cond.passed,
                    "note": "conditions fail, positivity not asserted",
                    "conditions": cond.to_json_dict()}
        return analysis.verify_max_principle(int(cfg.get("count", 200)), seed)
    if theorem == "sym-space-curvature":
        ns = tuple(int(n) for n in cfg.get("ranks", (2, 3, 4, 5, 6)))
        return analysis.verify_sym_space(int(cfg.get("samples", 10000)), seed, ns)
    raise UsageError(f"unknown theorem {theorem!r}")


def cmd_verify(cfg: dict, theorem: str, out_dir: str, seed: int, resolution=None) -> int:
    result = _run_theorem(theorem, cfg, seed, resolution)
    result["theorem"] = theorem
    result["seed"] = seed
    if "error" in result:
        result["inconclusive"] = True
    write_json(os.path.join(out_dir, "verdict.json"), result)
    status = "pass" if result.get("passed") else (
        "inconclusive" if result.get("inconclusive") else "fail")
    print(f"verify[{theorem}]: {status}")
    if result.get("inconclusive"):
        return 2
    return 0 if result["passed"] else 2


def cmd_sweep(cfg: dict, out_dir: str, resolution=None) -> int:
    grid = parse_grid(cfg.get("grid"), resolution)
    spec = parse_spec(cfg.get("spec"))
    sc = parse_solver(cfg.get("solver"))
    mc = int(cfg.get("margin_cells", 5))
    t_list = cfg.get("t_list")
    if not t_list:
        raise UsageError("sweep needs a nonempty 't_list'")
    t_list = [float(t) for t in t_list]

    if spec.degrees is not None and any(t == 0.0 for t in t_list):
        if not stability_check(spec.degrees, which_gamma_zero=spec.n):
            print("sweep: refused — the t=0 member is unstable for degrees "
                  f"{spec.degrees}: every partial sum of the degrees taken "
                  "from the top of the grading must be negative once the "
                  "closing arrow vanishes", file=sys.stderr)
            return 1

    from dataclasses import replace as _replace
    runs = continuation_solve(
        lambda t: make_system(_replace(spec, t=complex(t)), grid,
                              boundary=cfg.get("boundary", _default_boundary(grid))),
        t_list, sc)
    region = grid.verdict_region(mc)
    rows, summaries, energies = [], [], []
    for t, rep in runs:
        spec_t = _replace(spec, t=complex(t))
        if not rep.converged:
            summaries.append({"t": t, "converged": False,
                              "solver": rep.to_json_dict()})
            continue
        metric = analysis.pullback_metric(spec_t, rep.state)
        curv = analysis.extrinsic_curvature(spec_t, rep.state)
        kmin, kmax = curv.interior_range(region)
        g = metric.density[region]
        rows.append([f"{t:.17g}", f"{metric.morse_energy:.17g}",
                     f"{g.min():.17g}", f"{g.max():.17g}",
                     f"{kmin:.17g}", f"{kmax:.17g}"])
        energies.append(metric.morse_energy)
        summaries.append({"t": t, "converged": True,
                          "morse_energy": metric.morse_energy,
                          "g_min": float(g.min()), "g_max": float(g.max()),
                          "k_min": kmin, "k_max": kmax,
                          "solver": rep.to_json_dict()})
    _write_csv(os.path.join(out_dir, "sweep.csv"),
               ["t", "morse_energy", "g_min", "g_max", "k_min", "k_max"], rows)

    all_converged = all(s["converged"] for s in summaries) and len(summaries) == len(t_list)
    monotone = all(b > a for a, b in zip(energies, energies[1:]))
    # pairwise ratio margins are informational here; the thresholded strict
    # check is `verify --theorem monotonicity`
    ratio_margins = []
    if all_converged:
        for (ta, ra), (tb, rb) in zip(runs[:-1], runs[1:]):
            cmpres = analysis.compare_states(
                _replace(spec, t=complex(ta)), ra.state,
                _replace(spec, t=complex(tb)), rb.state,
                "ratio_fields", mc, sc.tol_residual)
            ratio_margins.append({"t_low": ta, "t_high": tb,
                                  "min_margin": cmpres.min_margin})
    verdict = {"passed": bool(all_converged and monotone),
               "all_converged": all_converged,
               "morse_energy_increasing": monotone,
               "ratio_margins": ratio_margins,
               "members": summaries}
    write_json(os.path.join(out_dir, "sweep.json"), verdict)
    if not all_converged:
        print("sweep: a member failed to converge", file=sys.stderr)
        return 2
    print(f"sweep: {len(rows)} members, monotone={monotone}")
    return 0 if verdict["passed"] else 2


# -- entry point -----------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hitchinlab",
        description="Planar laboratory for coupled scalar curvature systems "
                    "attached to cyclic holomorphic data.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (("solve", "run one system to convergence"),
                       ("verify", "run a named theorem check"),
                       ("sweep", "run a scale family and tabulate")):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", required=True, help="path to JSON run config")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--resolution", type=int, default=None,
                       help="override the grid resolution")
        if name == "verify":
            p.add_argument("--theorem", required=True, choices=THEOREMS)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        try:
            os.makedirs(args.out, exist_ok=True)
        except OSError as exc:
            print(f"cannot create output directory: {exc}", file=sys.stderr)
            return 3
        if args.command == "solve":
            return cmd_solve(cfg, args.out, args.resolution)
        if args.command == "verify":
            return cmd_verify(cfg, args.theorem, args.out, seed, args.resolution)
        return cmd_sweep(cfg, args.out, args.resolution)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BlowupError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

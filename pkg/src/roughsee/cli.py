"""Command line entry point: ``roughsee <command> ...``.

Every command writes its artifacts plus a manifest holding the full
configuration, its hash, library versions and seeds.  ``roughsee run
manifest.json`` (or any config file with a ``kind`` field) repeats a run.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import traceback
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .area import OperatorArea, read_area_blob, write_area_blob
from .diffusion import KernelModel
from .errors import DomainError, NumericFailure, ValidationError
from .hilbert import (SpectralOperator, TimeGrid, area_to_csv, path_from_csv, path_to_csv,
                      write_json)
from .noise import FbmSpec, NoisePath, dyadic_linearize, hurst_estimate, sample_fbm, window
from .reference import TrigNoise, lawson_rk4, rk4
from .rds import cocycle_residual
from .solver import SolverParams, global_solve, level_study, step_schedule

KINDS = ("noise", "area", "solve", "rds", "oracle", "schedule", "convergence")


# ---------------------------------------------------------------- helpers


def _need_file(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise DomainError(f"{what}: file not found: {path}")
    return p


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise DomainError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _levels(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.split(",")]


def _params(path: str | None) -> SolverParams:
    f = _need_file(path, "--params")
    return SolverParams() if f is None else SolverParams.from_json(f)


def _model(path: str | None, d: int | None = None) -> KernelModel:
    f = _need_file(path, "--model")
    if f is None:
        if d is None:
            raise DomainError("--model is required")
        return KernelModel(d)
    return KernelModel.from_json(f)


def _noise(path: str, level: int | None = None) -> NoisePath:
    p = path_from_csv(_need_file(path, "--noise"))
    noise = NoisePath(p)
    return dyadic_linearize(noise, level) if level is not None else noise


def _u0(spec: str, d: int) -> np.ndarray:
    if spec == "zero":
        return np.zeros(d)
    if spec.startswith("mode:"):
        parts = spec.split(":")
        k = int(parts[1])
        amp = float(parts[2]) if len(parts) > 2 else 1.0
        if not 1 <= k <= d:
            raise DomainError(f"--u0 mode:{k} outside 1..{d}")
        u = np.zeros(d)
        u[k - 1] = amp
        return u
    f = _need_file(spec, "--u0")
    text = f.read_text().strip()
    vals = json.loads(text) if text.startswith("[") else _floats(text.replace("\n", ","), "--u0")
    u = np.asarray(vals, dtype=float).ravel()
    if u.size != d:
        raise DomainError(f"--u0 has {u.size} entries, model has {d} modes")
    return u


def _from_zero(noise: NoisePath, area=None):
    """Restrict a (possibly two-sided) noise to ``t >= 0`` and shift area indices to match."""
    g = noise.grid
    if g.t0 == 0.0:
        return noise, area
    j = g.index_of(0.0)
    sub = window(noise, 0.0, g.T)
    if area is None:
        return sub, None
    return sub, (lambda a, b: area(a + j, b + j))


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest(config: dict, outputs: list[Path], target: Path, seeds: list[int] | None = None) -> None:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    write_json({
        "config": config,
        "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "versions": {"roughsee": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "seeds": seeds or [],
        "outputs": {str(p.name): _sha(p) for p in outputs if p.is_file()},
    }, target)


def _outdir(path: str) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------- commands


def cmd_noise(cfg: dict) -> int:
    a, b = _floats(cfg["window"], "--window")
    spec = FbmSpec.power_law(cfg["hurst"], cfg["modes"], cfg["decay_p"], cfg["scale"], cfg["seed"])
    noise = sample_fbm(spec, TimeGrid(a, b, cfg["grid_n"]))
    if cfg.get("level") is not None:
        noise = dyadic_linearize(noise, cfg["level"])
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    path_to_csv(noise.path, out, [f"mode_{i + 1}" for i in range(spec.dim)], with_index=False)
    msg = f"wrote {out}: {spec.dim} modes, {noise.grid.N + 1} points"
    if noise.grid.N >= 8:
        msg += f", estimated roughness {np.round(hurst_estimate(noise), 3).tolist()}"
    print(msg)
    _manifest(cfg, [out], Path(str(out) + ".manifest.json"), [cfg["seed"]])
    return 0


def cmd_area(cfg: dict) -> int:
    noise = _noise(cfg["noise"], cfg.get("level"))
    lf = _need_file(cfg["lambda_file"], "--lambda-file")
    data = json.loads(lf.read_text())
    if "eigenvalues" in data:
        op = SpectralOperator.from_dict(data)
    else:
        op = KernelModel.from_dict(data).spectrum
    if op.dim != noise.dim:
        raise DomainError(f"spectrum has {op.dim} modes, noise has {noise.dim}")
    A = OperatorArea.build(noise, op)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = write_area_blob(A, out, cfg["pairs"])
    print(f"wrote {out}: {meta['count']} pairs, d={meta['d']}, N={meta['N']}")
    _manifest(cfg, [out, Path(str(out) + ".json")], Path(str(out) + ".manifest.json"))
    return 0


def cmd_solve(cfg: dict) -> int:
    params = _params(cfg.get("params"))
    model = _model(cfg.get("model"))
    noise = _noise(cfg["noise"], cfg.get("level"))
    area = read_area_blob(_need_file(cfg["area"], "--area")) if cfg.get("area") else None
    if area is not None and (area.d != model.d or area.N != noise.grid.N):
        raise DomainError(f"area file is for d={area.d}, N={area.N}; noise has N={noise.grid.N}")
    noise, area = _from_zero(noise, area)
    u0 = _u0(cfg["u0"], model.d)
    T = cfg["T"] if cfg.get("T") is not None else noise.grid.T
    sol = global_solve(u0, T, params, noise, model, area=area, c=cfg.get("c"))
    out = _outdir(cfg["out"])
    files = [out / "solution.csv", out / "diagnostics.json"]
    path_to_csv(sol.pair.u, files[0], [f"u_{i + 1}" for i in range(model.d)], with_index=False)
    write_json(sol.to_dict(), files[1])
    if cfg.get("write_area"):
        files.append(out / "area.csv")
        area_to_csv(sol.pair.v, files[-1])
    _manifest(cfg, files, out / "manifest.json")
    worst = max(p.contraction for p in sol.pieces)
    print(f"solved on [0, {T:g}]: c={sol.c:.4g} K0={sol.K0} K={sol.K} intervals={len(sol.pieces)} "
          f"max contraction={worst:.3g} chen={sol.chen:.2e}")
    return 0


def cmd_rds(cfg: dict) -> int:
    params = _params(cfg.get("params"))
    model = _model(cfg.get("model"))
    noise = _noise(cfg["noise"], cfg.get("level"))
    u0 = _u0(cfg["u0"], model.d)
    taus = _floats(cfg["tau_list"], "--tau-list")
    rows = [cocycle_residual(noise, model, u0, tau, cfg["t"], params, c=cfg.get("c")).to_dict()
            for tau in taus]
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json({"t": cfg["t"], "level": cfg.get("level"), "residuals": rows}, out)
    for r in rows:
        print(f"tau={r['tau']:<8g} residual={r['residual']:.3e} relative={r['relative']:.3e}")
    _manifest(cfg, [out], Path(str(out) + ".manifest.json"))
    return 0


def cmd_oracle(cfg: dict) -> int:
    d = cfg["d"]
    params = _params(cfg.get("params"))
    model = _model(cfg.get("model"), d) if cfg.get("model") else KernelModel(d, amplitude=cfg["amplitude"])
    if model.d != d:
        raise DomainError(f"model has {model.d} modes, --d is {d}")
    noise = TrigNoise(tuple(cfg["noise_scale"] / (i + 1) for i in range(d)),
                      tuple(1.0 + i for i in range(d)))
    grid = TimeGrid(0.0, cfg["T"], cfg["grid_n"])
    u0 = _u0(cfg["u0"], d)
    sol = global_solve(u0, cfg["T"], params, noise.on(grid), model, c=cfg.get("c"))
    ref_steps = cfg["grid_n"] * cfg["refine"]
    solver = rk4 if d == 1 else lawson_rk4
    ref = solver(model, u0, noise, cfg["T"], ref_steps)[:: cfg["refine"]]
    err = float(np.max(np.abs(sol.pair.u.values - ref)) / max(np.max(np.abs(ref)), 1e-300))
    tol = 1e-3 if d == 1 else 5e-3
    out = _outdir(cfg["out"])
    files = [out / "oracle.json", out / "solution.csv", out / "reference.csv"]
    write_json({"d": d, "relative_error": err, "tolerance": tol, "pass": err <= tol,
                "reference": "rk4" if d == 1 else "lawson_rk4", "reference_steps": ref_steps,
                "solve": sol.to_dict()}, files[0])
    path_to_csv(sol.pair.u, files[1], [f"u_{i + 1}" for i in range(d)], with_index=False)
    from .hilbert import GridPath
    path_to_csv(GridPath(grid, ref), files[2], [f"u_{i + 1}" for i in range(d)], with_index=False)
    _manifest(cfg, files, out / "manifest.json")
    print(f"max relative error vs {'RK4' if d == 1 else 'Lawson RK4'}: {err:.3e} (tolerance {tol:g})")
    return 0


def cmd_schedule(cfg: dict) -> int:
    params = _params(cfg.get("params"))
    s = step_schedule(cfg["rho0"], cfg["c"], params, cfg["T0"], cfg["T"], cfg.get("K"))
    count = s.i_star if s.i_star is not None else f"about exp({s.log_i_star:.4g})"
    print(f"K = {s.K}")
    print(f"intervals = {count}")
    print(f"{'i':>6}  {'T_{i-1}':>14}  {'T_i':>14}  {'length':>12}  inequalities")
    shown = s.intervals[: cfg["show"]]
    for i, ((a, b), ok) in enumerate(zip(shown, s.checks), start=1):
        print(f"{i:>6}  {a:>14.8g}  {b:>14.8g}  {b - a:>12.6g}  {'hold' if ok else 'FAIL'}")
    if len(s.intervals) > len(shown):
        print(f"   ... {len(s.intervals) - len(shown)} more listed"
              + (" (list truncated)" if s.truncated else ""))
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        write_json(s.to_dict(), out)
        _manifest(cfg, [out], Path(str(out) + ".manifest.json"))
    return 0 if s.ok else 3


def cmd_convergence(cfg: dict) -> int:
    params = _params(cfg.get("params"))
    model = _model(cfg.get("model"))
    noise, _ = _from_zero(_noise(cfg["noise"]))
    u0 = _u0(cfg["u0"], model.d)
    study = level_study(u0, noise, model, params, _levels(cfg["levels"]), cfg.get("T"), cfg.get("c"))
    out = _outdir(cfg["out"])
    files = [out / "convergence.json", out / "distances.csv"]
    write_json(study.to_dict(), files[0])
    with open(files[1], "w") as fh:
        fh.write("level,next_level,distance,path_distance\n")
        for n, m, dist, pd in zip(study.levels, study.levels[1:], study.distances, study.path_distances):
            fh.write(f"{n},{m},{dist!r},{pd!r}\n")
    _manifest(cfg, files, out / "manifest.json")
    for n, dist in zip(study.levels, study.distances):
        print(f"level {n} -> {n + 1}: X distance {dist:.4e}")
    print(f"ratios {np.round(study.ratios, 4).tolist()}, geometric mean {study.mean_ratio:.4f}")
    return 0


COMMANDS = {"noise": cmd_noise, "area": cmd_area, "solve": cmd_solve, "rds": cmd_rds,
            "oracle": cmd_oracle, "schedule": cmd_schedule, "convergence": cmd_convergence}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roughsee", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"roughsee {__version__}")
    sub = ap.add_subparsers(dest="kind", required=True)

    p = sub.add_parser("noise", help="sample trace-class fBm")
    p.add_argument("action", choices=["sample"])
    p.add_argument("--hurst", type=float, default=0.45)
    p.add_argument("--modes", type=int, default=4)
    p.add_argument("--decay-p", type=float, default=2.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--grid-n", type=int, default=256)
    p.add_argument("--window", default="0,1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("area", help="build and store the twisted area of a noise path")
    p.add_argument("action", choices=["build"])
    p.add_argument("--noise", required=True)
    p.add_argument("--level", type=int)
    p.add_argument("--lambda-file", required=True)
    p.add_argument("--pairs", choices=["all", "coarse"], default="all")
    p.add_argument("--out", required=True)

    p = sub.add_parser("solve", help="global path-area solution")
    p.add_argument("--model", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--area")
    p.add_argument("--level", type=int)
    p.add_argument("--u0", default="zero")
    p.add_argument("--T", type=float)
    p.add_argument("--params")
    p.add_argument("--c", type=float)
    p.add_argument("--write-area", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("rds", help="cocycle residuals")
    p.add_argument("action", choices=["cocycle"])
    p.add_argument("--noise", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--params")
    p.add_argument("--level", type=int)
    p.add_argument("--u0", default="mode:1:0.05")
    p.add_argument("--tau-list", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--c", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("oracle", help="compare with a classical solver on smooth noise")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--model")
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--noise-scale", type=float, default=0.2)
    p.add_argument("--grid-n", type=int, default=256)
    p.add_argument("--refine", type=int, default=32)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--u0", default="mode:1:0.05")
    p.add_argument("--params")
    p.add_argument("--c", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("schedule", help="step-size schedule table")
    p.add_argument("--rho0", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--T0", type=float, default=0.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--K", type=int)
    p.add_argument("--params")
    p.add_argument("--show", type=int, default=20)
    p.add_argument("--out")

    p = sub.add_parser("convergence", help="distances between dyadic-level solutions")
    p.add_argument("--noise", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--params")
    p.add_argument("--u0", default="mode:1:0.05")
    p.add_argument("--levels", default="4..8")
    p.add_argument("--T", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="run from a JSON config or manifest")
    p.add_argument("config")
    return ap


def run_experiment(config: dict) -> int:
    """Run one configured experiment; ``config['kind']`` picks the command."""
    kind = config.get("kind")
    if kind not in COMMANDS:
        raise DomainError(f"config 'kind' must be one of {list(KINDS)}, got {kind!r}")
    defaults, required = _command_fields(build_parser(), kind)
    unknown = set(config) - set(defaults)
    if unknown:
        raise DomainError(f"unknown config fields for {kind}: {sorted(unknown)}")
    missing = sorted(required - set(config))
    if missing:
        raise DomainError(f"config for {kind} is missing: {missing}")
    return COMMANDS[kind]({**defaults, **config})


def _command_fields(parser: argparse.ArgumentParser, kind: str) -> tuple[dict, set]:
    """Defaults of every option of ``kind`` and the names that must be supplied."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    defaults = {"kind": kind}
    required = set()
    for act in sub.choices[kind]._actions:
        if act.dest == "help":
            continue
        if not act.option_strings:
            # positional actions such as "sample" have a single useful choice
            defaults[act.dest] = act.choices[0] if act.choices else None
            if not act.choices:
                required.add(act.dest)
        else:
            defaults[act.dest] = act.default
            if act.required:
                required.add(act.dest)
    return defaults, required


def _origin(exc: BaseException) -> str:
    frames = [f for f in traceback.extract_tb(exc.__traceback__) if "roughsee" in f.filename]
    if not frames:
        return "roughsee"
    return "roughsee." + Path(frames[-1].filename).stem


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = vars(args)
    try:
        if cfg["kind"] == "run":
            data = json.loads(_need_file(cfg["config"], "config").read_text())
            return run_experiment(data.get("config", data))
        return COMMANDS[cfg["kind"]](cfg)
    except (ValidationError, json.JSONDecodeError, OSError) as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numerical failure [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

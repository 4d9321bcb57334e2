"""Command-line entry point: ``ionphase <command> --config job.json --out DIR``.

Every command validates its job file against a JSON schema, writes its
outputs into ``--out`` and, on failure, writes ``error.json`` there (and to
stderr) and exits with a nonzero status. Floats in JSON reports carry 12
significant digits so reruns with the same config and seed are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import traceback
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import fock, metrics, optimizer, protocol
from .fock import HilbertConfig
from .noise import NoiseModel
from .schema import COMMANDS

CONFIG_PACKAGE = "ionphase.configs"


class JobError(Exception):
    """Invalid job file or flag combination."""


# --------------------------------------------------------------------------
# formatting


def _clean(obj):
    """Recursively convert numpy types and round floats to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.12g}")
    return obj


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    return f"{float(x):.12g}"


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# --------------------------------------------------------------------------
# config handling


def bundled_configs() -> list[str]:
    return sorted(p.name for p in resources.files(CONFIG_PACKAGE).iterdir() if p.name.endswith(".json"))


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        cand = resources.files(CONFIG_PACKAGE) / p.name
        if not cand.is_file():
            raise JobError(f"config {path!r} not found (bundled: {', '.join(bundled_configs())})")
        return json.loads(cand.read_text())
    return json.loads(p.read_text())


def validate(command: str, doc: dict) -> None:
    try:
        jsonschema.validate(doc, COMMANDS[command])
    except jsonschema.ValidationError as exc:
        loc = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise JobError(f"invalid {command} config at {loc}: {exc.message}") from None


def _alpha(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _alphas(doc) -> list[complex]:
    if isinstance(doc, list):
        return [_alpha(a) for a in doc]
    vals = np.linspace(doc["start"], doc["stop"], doc["num"])
    return [complex(0, v) if doc.get("axis", "imag") == "imag" else complex(v) for v in vals]


def _hilbert(doc: dict, args) -> HilbertConfig:
    h = dict(doc.get("hilbert", {}))
    if args.dim is not None:
        h["dim_fock"] = args.dim
    return HilbertConfig(**h)


def _protocol(pdoc: dict, args) -> protocol.ProtocolSpec:
    spec = protocol.protocol_from_dict(pdoc)
    if args.mode is not None:
        spec = protocol.with_h3_mode(spec, args.mode)
    return spec


def _input_state(doc: dict | None, config: HilbertConfig) -> np.ndarray:
    doc = doc or {}
    if doc.get("nbar") is not None:
        return fock.thermal_state(doc["nbar"], config)
    return fock.coherent_state(_alpha(doc.get("alpha", 0.0)), config)


def _noise(doc: dict | None) -> NoiseModel | None:
    if not doc:
        return None
    d = {k: v for k, v in doc.items() if k != "name"}
    return NoiseModel.from_dict(d)


def _run(spec, psi, config, noise, check_leakage=True):
    if noise is not None and not noise.is_trivial:
        from .noise import noisy_evolution
        return noisy_evolution(spec, psi, noise, config, check_leakage=check_leakage)
    return protocol.run_oscillator(spec, psi, config, check_leakage=check_leakage)


def _state_metrics(spec, target, psi, config, noise, xi_range=(-3.0, 3.0)) -> dict:
    gen = _run(spec, psi, config, noise)
    g, t = protocol.compare_states(gen, psi, target, config, spec.native_basis)
    out = {"fidelity": metrics.fidelity(g, t),
           "buffer_population": fock.buffer_population(gen, config)}
    try:
        scan = metrics.minimize_variance(g, target.order, target.basis, config, tuple(xi_range))
        out.update(xi_min=scan.xi_min, v_min=scan.v_min, zeta_eff=scan.zeta_eff)
    except RuntimeError as exc:
        out.update(xi_min=None, v_min=None, zeta_eff=None, variance_error=str(exc))
    return out, g, t


# --------------------------------------------------------------------------
# commands


def cmd_simulate(doc: dict, args, out: Path) -> dict:
    config = _hilbert(doc, args)
    spec = _protocol(doc["protocol"], args)
    target = protocol.target_from_dict(doc.get("target"))
    psi = _input_state(doc.get("input"), config)
    noise = _noise(doc.get("noise"))
    res, gen, tgt = _state_metrics(spec, target, psi, config, noise, doc.get("xi_range", (-3, 3)))
    wdoc = doc.get("wigner", {})
    ext, npts = wdoc.get("extent", 8.0), wdoc.get("points", 301)
    axis = np.linspace(-ext, ext, npts)
    auto = wdoc.get("auto_extend", False)
    wg = metrics.wigner(gen, axis, auto_extend=auto)
    wt = metrics.wigner(tgt, axis, auto_extend=auto)
    wg.to_csv(out / "wigner.csv")
    wt.to_csv(out / "wigner_target.csv")
    cdoc = doc.get("cut", {})
    qr = tuple(cdoc.get("q_range", (-ext, ext)))
    cut_g = metrics.wigner_cut(gen, cdoc.get("slope", 0.0), cdoc.get("intercept", 0.0), qr, cdoc.get("points", 401))
    cut_t = metrics.wigner_cut(tgt, cdoc.get("slope", 0.0), cdoc.get("intercept", 0.0), qr, cdoc.get("points", 401))
    write_csv(out / "cuts.csv", ["q", "p", "w_generated", "w_target"],
              zip(cut_g.q, cut_g.p, cut_g.w, cut_t.w))
    report = {
        "command": "simulate",
        "name": spec.name,
        "dim_fock": config.dim_fock,
        "total_time": spec.total_time,
        **res,
        "negativity_volume": {"generated": metrics.negativity_volume(wg),
                              "target": metrics.negativity_volume(wt)},
        "wigner_window": [float(wg.q_axis[0]), float(wg.q_axis[-1])],
        "normalization_defect": {"generated": wg.normalization_defect, "target": wt.normalization_defect},
        "squeezing_db": [fock.squeezing_db(b.value.real) for b in spec.blocks() if b.kind == "S"],
        "protocol": protocol.protocol_to_dict(spec),
    }
    if res.get("xi_min") is not None:
        report["qng_threshold_at_xi_min"] = metrics.qng_threshold(res["xi_min"])
    write_json(out / "report.json", report)
    return report


SWEEP_HEADER = ["alpha_re", "alpha_im", "abs_alpha", "fidelity", "xi_min", "v_min", "zeta_eff",
                "qng_threshold", "classical_threshold", "buffer_population", "error"]


def cmd_sweep(doc: dict, args, out: Path) -> dict:
    config = _hilbert(doc, args)
    spec = _protocol(doc["protocol"], args)
    target = protocol.target_from_dict(doc.get("target"))
    noise = _noise(doc.get("noise"))
    # the QNG line is drawn at the target strength, as a constant reference
    rows, n_err = [], 0
    for a in _alphas(doc["alphas"]):
        try:
            psi = fock.coherent_state(a, config)
            res, _, _ = _state_metrics(spec, target, psi, config, noise, doc.get("xi_range", (-3, 3)))
            xi = res.get("xi_min")
            rows.append([a.real, a.imag, abs(a), res["fidelity"], xi, res["v_min"], res["zeta_eff"],
                         metrics.qng_threshold(target.zeta),
                         metrics.classical_threshold(a), res["buffer_population"],
                         res.get("variance_error", "")])
        except Exception as exc:  # one bad α must not end the sweep
            n_err += 1
            rows.append([a.real, a.imag, abs(a), None, None, None, None, metrics.qng_threshold(target.zeta),
                         metrics.classical_threshold(a), None, f"{type(exc).__name__}: {exc}"])
    write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    summary = {"command": "sweep", "rows": len(rows), "errors": n_err,
               "qng_crossing_abs_alpha": qng_crossing(rows)}
    write_json(out / "summary.json", summary)
    return summary


def qng_crossing(rows) -> float | None:
    """|α| where v_min first rises above the QNG threshold (linear interpolation)."""
    pts = [(r[2], r[5] - r[7]) for r in rows if r[5] is not None and r[7] is not None]
    for (x0, d0), (x1, d1) in zip(pts, pts[1:]):
        if d0 < 0 <= d1:
            return float(x0 + (x1 - x0) * (-d0) / (d1 - d0))
    return None


def cmd_noise_study(doc: dict, args, out: Path) -> dict:
    config = _hilbert(doc, args)
    spec = _protocol(doc["protocol"], args)
    target = protocol.target_from_dict(doc.get("target"))
    rows = []
    for i, mdoc in enumerate(doc["models"]):
        name = mdoc.get("name", f"model{i}")
        model = _noise(mdoc) or NoiseModel()
        for a in _alphas(doc["alphas"]):
            try:
                psi = fock.coherent_state(a, config)
                res, _, _ = _state_metrics(spec, target, psi, config, model)
                rows.append([name, a.real, a.imag, res["fidelity"], res["buffer_population"], ""])
            except Exception as exc:
                rows.append([name, a.real, a.imag, None, None, f"{type(exc).__name__}: {exc}"])
    write_csv(out / "noise_study.csv",
              ["model", "alpha_re", "alpha_im", "fidelity", "buffer_population", "error"], rows)
    summary = {"command": "noise-study",
               "results": [{"model": r[0], "alpha": [r[1], r[2]], "fidelity": r[3]} for r in rows]}
    write_json(out / "noise_study.json", summary)
    return summary


def _cubic_vector(spec: protocol.ProtocolSpec):
    """(t1p, t3, r, β) per round, recovered from a cubic protocol's blocks."""
    x = []
    for rnd in spec.rounds:
        d = {b.kind: b for b in rnd}
        x += [d["U1p"].duration if "U1p" in d else 0.0, d["U3"].duration if "U3" in d else 0.0,
              d["S"].value.real if "S" in d else 0.0, d["D"].value.real if "D" in d else 0.0]
    return np.array(x)


def cmd_perturb(doc: dict, args, out: Path) -> dict:
    config = _hilbert(doc, args)
    pdoc = doc["protocol"]
    if pdoc.get("sequence", "cubic") != "cubic":
        raise JobError("perturb supports cubic protocols only")
    spec = _protocol(pdoc, args)
    target = protocol.target_from_dict(doc.get("target"))
    psi = _input_state(doc.get("input"), config)
    x0 = _cubic_vector(spec)
    kwargs = dict(system=spec.system, omegas=spec.omegas, phases=spec.phases, modes=spec.modes,
                  qubit_init=spec.qubit_init)
    build = optimizer.cubic_builder(spec.n_rounds, **kwargs)

    def fid(x):
        s = dataclasses.replace(build(x), pre_squeeze=spec.pre_squeeze)
        return optimizer.protocol_fidelity(s, target, config, [(psi, 1.0)], check_leakage=False)

    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    stats = optimizer.perturbation_study(x0, doc["magnitude"], doc["trials"], fid, seed=seed)
    stats["parameters"] = optimizer.cubic_space(spec.n_rounds).as_dict(x0)
    stats["command"] = "perturb"
    stats["seed"] = seed
    write_json(out / "perturb.json", stats)
    return stats


def cmd_variance_scan(doc: dict, args, out: Path) -> dict:
    config = _hilbert(doc, args)
    spec = _protocol(doc["protocol"], args)
    target = protocol.target_from_dict(doc.get("target"))
    psi = _input_state(doc.get("input"), config)
    gen = protocol.run_oscillator(spec, psi, config)
    g, t = protocol.compare_states(gen, psi, target, config, spec.native_basis)
    xd = doc.get("xi", {"start": -3.0, "stop": 3.0, "num": 241})
    xis = np.linspace(xd["start"], xd["stop"], xd["num"])
    j, b = target.order, target.basis
    cg = metrics.variance_moments(g, j, b, config)
    ct = metrics.variance_moments(t, j, b, config)
    vg = cg[0] + cg[1] * xis + cg[2] * xis**2
    vt = ct[0] + ct[1] * xis + ct[2] * xis**2
    write_csv(out / "variance_scan.csv", ["xi", "var_generated", "var_target", "qng_threshold"],
              [(x, a, c, metrics.qng_threshold(x)) for x, a, c in zip(xis, vg, vt)])
    xr = tuple(doc.get("xi_range", (-3.0, 3.0)))
    sg = metrics.minimize_variance(g, j, b, config, xr)
    st = metrics.minimize_variance(t, j, b, config, xr)
    summary = {"command": "variance-scan", "dim_fock": config.dim_fock,
               "generated": sg.to_dict(), "target": st.to_dict(),
               "fidelity": metrics.fidelity(g, t),
               "buffer_population": {"generated": fock.buffer_population(g, config),
                                     "target": fock.buffer_population(t, config)}}
    write_json(out / "variance_scan.json", summary)
    return summary


def cmd_diff_map(doc: dict, args, out: Path) -> dict:
    config = _hilbert(doc, args)
    target = protocol.target_from_dict(doc.get("target"))
    psi = _input_state(doc.get("input"), config)
    nmax = doc.get("n_max_display", 10)
    summary = {"command": "diff-map", "n_max_display": nmax, "units": 1e-3, "maps": []}
    for i, item in enumerate(doc["protocols"]):
        spec = _protocol(item["protocol"], args)
        gen = protocol.run_oscillator(spec, psi, config)
        g, t = protocol.compare_states(gen, psi, target, config, spec.native_basis)
        m = metrics.density_diff_map(fock.to_density(g), fock.to_density(t), nmax)
        fname = f"diff_map_{i}.csv"
        write_csv(out / fname, [f"n{k}" for k in range(nmax)], m)
        summary["maps"].append({"label": item["label"], "file": fname, "max": float(m.max()),
                                "fidelity": metrics.fidelity(g, t)})
    write_json(out / "diff_map.json", summary)
    return summary


def _workers() -> int:
    """Evaluation threads: $IONPHASE_THREADS, else one per CPU."""
    return int(os.environ.get("IONPHASE_THREADS", os.cpu_count() or 1))


def _sphere_objective(dim: int):
    space = optimizer.SearchSpace(tuple(f"x{i}" for i in range(dim)), (-1.0,) * dim, (1.0,) * dim)
    return (lambda x: float(np.sum(np.asarray(x) ** 2))), space, None


def _optimize_problem(doc: dict, args):
    tdoc = doc["template"]
    kind = tdoc["kind"]
    if kind == "sphere":
        return _sphere_objective(tdoc.get("dimension", 3))
    config = _hilbert(doc, args)
    pdoc = {k: v for k, v in tdoc.get("protocol", {}).items() if k != "n_rounds"}
    base = protocol.protocol_from_dict({**pdoc, "sequence": "cubic",
                                        "rounds": [{"t1p": 0, "t3": 0, "r": 0}]})
    if args.mode is not None:
        base = protocol.with_h3_mode(base, args.mode)
    common = dict(system=base.system, modes=base.modes, qubit_init=base.qubit_init)
    if kind == "cubic":
        n = tdoc.get("n_rounds", 1)
        pre = tdoc.get("presqueeze", False)
        builder = optimizer.cubic_builder(n, pre, omegas=base.omegas, phases=base.phases, **common)
        space = optimizer.cubic_space(n, pre)
        default_target = {"j": 3, "zeta": 1.0, "basis": "P"}
    elif kind == "quartic":
        omegas = {int(k): v for k, v in pdoc.get("omegas", {"2": 0.2, "4": 0.8}).items()}
        builder = optimizer.quartic_builder(omegas=omegas, **common)
        space = optimizer.quartic_space()
        default_target = {"j": 4, "zeta": 0.25, "basis": "X"}
    else:
        builder = optimizer.simultaneous_builder(omegas=base.omegas, phases=base.phases, **common)
        space = optimizer.simultaneous_space()
        default_target = {"j": 3, "zeta": 1.0, "basis": "P"}
    if "bounds" in doc:
        over = {b["name"]: (b["lower"], b["upper"]) for b in doc["bounds"]}
        unknown = set(over) - set(space.names)
        if unknown:
            raise JobError(f"unknown bound names: {sorted(unknown)}")
        lo = tuple(over.get(n, (l, h))[0] for n, l, h in zip(space.names, space.lower, space.upper))
        hi = tuple(over.get(n, (l, h))[1] for n, l, h in zip(space.names, space.lower, space.upper))
        space = optimizer.SearchSpace(space.names, lo, hi)
    target = protocol.target_from_dict(doc.get("target", default_target))
    odoc = doc.get("objective", {})
    inputs = [optimizer.InputState(_alpha(i.get("alpha", 0.0)), i.get("nbar"), i.get("weight", 1.0))
              for i in odoc.get("inputs", [{}])]
    obj = optimizer.Objective(builder, target, config, inputs, _noise(doc.get("noise")),
                              odoc.get("kind", "single-state-fidelity"))
    return (lambda x: optimizer.evaluate(x, obj)), space, (obj, builder, target, inputs)


def cmd_optimize(doc: dict, args, out: Path) -> dict:
    fun, space, extra = _optimize_problem(doc, args)
    de = dict(doc.get("de", {}))
    if "mutation" in de:
        de["mutation"] = tuple(de["mutation"])
    if args.seed is not None:
        de["seed"] = args.seed
    de.setdefault("workers", _workers())
    cfg = optimizer.DEConfig(**de)
    ckpt = out / "checkpoint.json"
    resume = str(ckpt) if args.resume and ckpt.exists() else None
    res = optimizer.differential_evolution(fun, space, cfg, checkpoint=str(ckpt), resume=resume)
    write_csv(out / "history.csv", ["generation", "best_loss"], enumerate(res.history))
    result = {"command": "optimize", "template": doc["template"]["kind"], "best_loss": res.fun,
              "best_params": space.as_dict(res.x), "generations": res.generations,
              "nfev": res.nfev, "converged": res.converged, "message": res.message,
              "seed": cfg.seed}
    if extra is not None:
        obj, builder, target, inputs = extra
        spec = builder(res.x)
        result["best_fidelity"] = -res.fun
        result["total_time"] = spec.total_time
        if "verify_dim" in doc:
            vcfg = dataclasses.replace(obj.config, dim_fock=doc["verify_dim"])
            prepared = [(i.build(vcfg), i.weight) for i in obj.inputs]
            result["verified_fidelity"] = optimizer.protocol_fidelity(
                spec, target, vcfg, prepared, obj.noise, check_leakage=False)
            result["verify_dim"] = doc["verify_dim"]
        result["protocol"] = protocol.protocol_to_dict(spec)
    write_json(out / "best_params.json", result)
    return result


HANDLERS = {
    "simulate": cmd_simulate, "optimize": cmd_optimize, "sweep": cmd_sweep,
    "noise-study": cmd_noise_study, "perturb": cmd_perturb,
    "variance-scan": cmd_variance_scan, "diff-map": cmd_diff_map,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ionphase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="job file, or the name of a bundled config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--dim", type=int, default=None, help="override hilbert.dim_fock")
        p.add_argument("--mode", choices=["ld", "full"], default=None,
                       help="third-sideband Hamiltonian: leading term only, or full series")
        if name == "optimize":
            p.add_argument("--resume", action="store_true", help="continue from out/checkpoint.json")
    sub.add_parser("list-configs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list-configs":
        print("\n".join(bundled_configs()))
        return 0
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").unlink(missing_ok=True)
        doc = load_config(args.config)
        validate(args.command, doc)
        result = HANDLERS[args.command](doc, args, out)
        print(json.dumps(_clean({k: v for k, v in result.items() if k not in ("protocol", "fidelities")}),
                         sort_keys=True))
        return 0
    except Exception as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command,
               "config": args.config}
        if not isinstance(exc, JobError):
            err["traceback"] = traceback.format_exc(limit=5)
        try:
            write_json(out / "error.json", err)
        except OSError:
            pass
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, JobError) else 1


if __name__ == "__main__":
    sys.exit(main())

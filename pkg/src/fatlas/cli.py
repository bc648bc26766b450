"""Command line front end: ``fatlas triangulate|qmmap|bounds|verify|exhaust``.

Every subcommand reads an optional JSON config, lets command-line flags win,
writes a JSON report with the top-level keys ``stage``, ``inputs``, ``metrics``
and ``witnesses`` and returns a documented exit code.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import alexander as alx
from .manifold import (
    build_mesh,
    comparison_volume,
    degree_bound,
    estimate_geometry,
    packing_bound,
)
from .meshio import MeshFormatError, read_mesh, write_obj, write_off
from .simplex import (
    ColoringError,
    check_even_incidence,
    chessboard_coloring,
    coherent_orientation,
    thickness_report,
    vertex_labeling,
)
from .surfaces import InvalidMetricError, from_spec
from .triangulate import (
    PipelineConfig,
    PipelineError,
    _auto_h_est,
    exhaustion_demo,
    fat_triangulation_pipeline,
)

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_CONFIG = 0, 1, 2, 3

# keys accepted in a config file, with defaults
DEFAULTS = {
    "surface": None,
    "eps": "auto",
    "safety": 0.9,
    "h": "auto",
    "seed": 0,
    "thicken_budget": 3000,
    "phi_target": 0.35,
    "max_move": 0.2,
    "max_retries": 5,
    "samples": 10000,  # total dilatation samples, spread evenly over simplices
    "phi0": 0.0,
    "mesh": None,
    "out": "fatlas_out",
    "base_point": None,
    "radii": None,
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config and reports
# ---------------------------------------------------------------------------

def _length(value, name):
    if value is None or value == "auto":
        return None
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number or 'auto', got {value!r}") from None
    if not (x > 0 and math.isfinite(x)):
        raise ConfigError(f"{name} must be positive")
    return x


def load_config(path, overrides: dict) -> dict:
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg.update(data)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("seed must be an integer")
    cfg["eps"] = _length(cfg["eps"], "eps")
    cfg["h"] = _length(cfg["h"], "h")
    if not isinstance(cfg["samples"], int) or cfg["samples"] <= 0:
        raise ConfigError("sample budget must be a positive integer")
    return cfg


def _surface(cfg):
    spec = cfg["surface"]
    if not isinstance(spec, dict):
        raise ConfigError("config needs a 'surface' object such as {\"type\": \"sphere\"}")
    try:
        return from_spec(spec)
    except (ValueError, InvalidMetricError) as exc:
        raise ConfigError(str(exc)) from exc


def _pipeline_config(cfg) -> PipelineConfig:
    try:
        return PipelineConfig(eps=cfg["eps"], safety=float(cfg["safety"]),
                              clamp_eps=cfg["eps"] is None, h=cfg["h"], seed=cfg["seed"],
                              thicken_budget=int(cfg["thicken_budget"]),
                              phi_target=float(cfg["phi_target"]),
                              max_move=float(cfg["max_move"]),
                              max_retries=int(cfg["max_retries"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _plain(x):
    """Recursively convert numpy values so json can write them."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def make_report(stage: str, inputs: dict, metrics: dict, witnesses, *, timings=None,
                timestamp: bool = True) -> dict:
    metrics = dict(metrics)
    if timestamp:
        metrics["timings"] = timings or {}
        metrics["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    return {"stage": stage, "inputs": inputs, "metrics": metrics, "witnesses": witnesses}


def write_report(path: Path, report: dict) -> str:
    text = json.dumps(_plain(report), sort_keys=True, indent=2) + "\n"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return text


def write_histogram(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bucket_lo", "bucket_hi", "count"])
        for lo, hi, c in rows:
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def _inputs(cfg, keys):
    return {k: ("auto" if k in ("eps", "h") and cfg[k] is None else cfg[k]) for k in keys}


def _emit(out: Path, name: str, report: dict):
    text = write_report(out / f"{name}.json", report)
    sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

_PIPE_KEYS = ("surface", "eps", "safety", "h", "seed", "thicken_budget", "phi_target",
              "max_move", "max_retries")


def cmd_triangulate(cfg, timestamp=True) -> int:
    surface = _surface(cfg)
    pcfg = _pipeline_config(cfg)
    out = Path(cfg["out"])
    inputs = _inputs(cfg, _PIPE_KEYS)
    try:
        res = fat_triangulation_pipeline(surface, pcfg)
    except PipelineError as exc:
        rep = make_report("triangulate", inputs, {"ok": False, "failed_stage": exc.stage,
                                                  "message": str(exc)},
                          {"stage": exc.stage, "witness": exc.witness, "trace": exc.trace},
                          timestamp=timestamp)
        _emit(out, "triangulate", rep)
        return EXIT_INVALID
    out.mkdir(parents=True, exist_ok=True)
    write_off(out / "mesh.off", res.thickened)
    write_obj(out / "mesh.obj", res.thickened)
    write_off(out / "subdivided.off", res.subdivided)
    write_histogram(out / "thickness.csv", res.after.histogram_rows())
    write_histogram(out / "thickness_subdivided.csv", res.final.histogram_rows())
    thick = make_report("thickness", inputs,
                        {"before": res.before.summary(), "after": res.after.summary(),
                         "subdivided": res.final.summary()},
                        {"thinnest_after": int(np.argmin(res.after.phi)),
                         "thinnest_subdivided": int(np.argmin(res.final.phi))},
                        timestamp=timestamp)
    write_report(out / "thickness.json", thick)
    metrics = {"ok": True, **res.summary(), "estimates": res.estimates.to_dict(),
               "net": res.net_report.to_dict(), "edge_ratio": list(res.edge_ratio),
               "even_incidence": res.even_incidence.ok,
               "stages": list(res.timings)}
    rep = make_report("triangulate", inputs, metrics,
                      {"trace": res.trace, "net_covering": res.net_report.covering_witness,
                       "net_separation": res.net_report.separation_witness},
                      timings=res.timings, timestamp=timestamp)
    _emit(out, "triangulate", rep)
    return EXIT_OK


def _external_complex(path):
    """Read a mesh and equip it with labels, orientation and a parity coloring.

    Returns ``(complex, None)`` or ``(None, (reason, witness))``.
    """
    cx = read_mesh(path)
    even = check_even_incidence(cx)
    if not even.ok:
        return None, ("even_incidence", {"offending_faces": even.offending})
    try:
        labels = vertex_labeling(cx)
    except ColoringError as exc:
        return None, ("vertex_labeling", {"faces": exc.cycle})
    orient = coherent_orientation(cx)
    if orient is None:
        return None, ("orientation", None)
    colors = alx.label_parity_coloring(cx, labels, orient)
    return cx.with_(vertex_labels=labels, orientation=orient, colors=colors), None


def cmd_qmmap(cfg, timestamp=True) -> int:
    out = Path(cfg["out"])
    inputs = _inputs(cfg, ("mesh", "samples", "seed") if cfg["mesh"] else
                     _PIPE_KEYS + ("samples",))

    def fail(reason, witness):
        rep = make_report("qmmap", inputs, {"ok": False, "failed_stage": reason},
                          {"stage": reason, "witness": witness}, timestamp=timestamp)
        _emit(out, "qmmap", rep)
        return EXIT_INVALID

    if cfg["mesh"]:
        try:
            cx, err = _external_complex(cfg["mesh"])
        except MeshFormatError as exc:
            raise ConfigError(str(exc)) from exc
        if err:
            return fail(*err)
    else:
        surface = _surface(cfg)
        try:
            cx = fat_triangulation_pipeline(surface, _pipeline_config(cfg)).subdivided
        except PipelineError as exc:
            return fail(exc.stage, {"witness": exc.witness, "trace": exc.trace})
    try:
        fmap = alx.assemble_qm_map(cx)
    except alx.ContractError as exc:
        return fail("contract", str(exc))
    per = max(1, math.ceil(cfg["samples"] / len(cx)))
    rep = alx.dilatation_report(fmap, per, seed=cfg["seed"])
    consistency = alx.face_consistency(fmap, 1000, seed=cfg["seed"])
    injectivity = alx.local_injectivity_check(fmap, 200, seed=cfg["seed"])
    K = rep.per_simplex_max
    hi = float(K.max()) if np.isfinite(K).all() else 1.0
    counts, edges = np.histogram(np.clip(K, 1.0, hi), bins=20, range=(1.0, max(hi, 1.0 + 1e-9)))
    write_histogram(out / "dilatation.csv",
                    [(a, b, c) for a, b, c in zip(edges[:-1], edges[1:], counts)])
    ok = rep.quasiregular
    metrics = {"ok": ok, **rep.summary(), "samples_per_simplex": per,
               "simplices": len(cx), "face_consistency": consistency,
               "local_injectivity_failures": len(injectivity),
               "thickness": thickness_report(cx).summary()}
    witnesses = {"violations": rep.violations[:20], "injectivity": injectivity[:20],
                 "worst_simplex": int(np.argmax(K))}
    _emit(out, "qmmap", make_report("qmmap", inputs, metrics, witnesses, timestamp=timestamp))
    return EXIT_OK if ok else EXIT_INVALID


def cmd_bounds(cfg, timestamp=True) -> int:
    surface = _surface(cfg)
    h = cfg["h"] or _auto_h_est(surface)
    try:
        est = estimate_geometry(surface, build_mesh(surface, h), seed=cfg["seed"])
    except (ValueError, MemoryError) as exc:
        raise ConfigError(str(exc)) from exc
    safety = float(cfg["safety"])
    eps = cfg["eps"]
    if eps is None and est.convrad_low is not None:
        eps = est.convrad_low * safety
    metrics = {"estimates": est.to_dict(), "injrad_low": est.injrad_low,
               "convrad_low": est.convrad_low, "injrad_rule": est.injrad_rule,
               "injrad_certified": est.injrad_certified, "eps": eps}
    witnesses = {}
    if eps is None:
        witnesses["eps"] = "no certified injectivity-radius bound; pass --eps"
    else:
        k = est.k_low
        metrics["V_k"] = {"k": k, "D_up": comparison_volume(k, est.D_up),
                          "eps/2": comparison_volume(k, eps / 2),
                          "5eps/2": comparison_volume(k, 2.5 * eps)}
        metrics["packing_bound"] = packing_bound(est, eps)
        metrics["degree_bound"] = degree_bound(est, eps)
    rep = make_report("bounds", _inputs(cfg, ("surface", "eps", "safety", "h", "seed")),
                      metrics, witnesses, timestamp=timestamp)
    _emit(Path(cfg["out"]), "bounds", rep)
    return EXIT_OK


def cmd_verify(cfg, timestamp=True) -> int:
    if not cfg["mesh"]:
        raise ConfigError("verify needs --mesh or a 'mesh' config entry")
    try:
        cx = read_mesh(cfg["mesh"])
    except MeshFormatError as exc:
        raise ConfigError(str(exc)) from exc
    phi0 = float(cfg["phi0"])
    rep = thickness_report(cx, phi0)
    even = check_even_incidence(cx)
    witnesses = {"below_phi0": rep.offending[:50], "odd_faces": even.offending[:50]}
    try:
        chessboard_coloring(cx)
        colorable = True
    except ColoringError as exc:
        colorable = False
        witnesses["coloring_cycle"] = exc.cycle
    ok = rep.phi_min >= phi0
    metrics = {"ok": ok, **rep.summary(), "even_incidence": even.ok, "colorable": colorable,
               "vertices": len(cx.vertices), "euler_characteristic": cx.euler_characteristic()}
    out = Path(cfg["out"])
    write_histogram(out / "verify_thickness.csv", rep.histogram_rows())
    _emit(out, "verify", make_report("verify", _inputs(cfg, ("mesh", "phi0")), metrics,
                                     witnesses, timestamp=timestamp))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_exhaust(cfg, timestamp=True) -> int:
    surface = _surface(cfg)
    if cfg["eps"] is None or not cfg["radii"] or cfg["base_point"] is None:
        raise ConfigError("exhaust needs numeric eps, radii and base_point")
    try:
        rep = exhaustion_demo(surface, cfg["base_point"], cfg["radii"], eps=cfg["eps"],
                              h=cfg["h"], seed=cfg["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    d = rep.to_dict()
    _emit(Path(cfg["out"]), "exhaust",
          make_report("exhaust", _inputs(cfg, ("surface", "eps", "h", "seed", "base_point",
                                                 "radii")),
                      {"nested": d["nested"], "covers_mesh": d["covers_mesh"]},
                      {"pieces": d["pieces"]}, timestamp=timestamp))
    return EXIT_OK


COMMANDS = {"triangulate": cmd_triangulate, "qmmap": cmd_qmmap, "bounds": cmd_bounds,
            "verify": cmd_verify, "exhaust": cmd_exhaust}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fatlas", description="Fat triangulations of surfaces.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--seed", type=int)
        s.add_argument("--eps", help="net scale, a number or 'auto'")
        s.add_argument("--h", help="mesh resolution, a number or 'auto'")
        s.add_argument("--safety", type=float)
        s.add_argument("--out", help="output directory")
        s.add_argument("--mesh", help="OFF/OBJ mesh (verify, qmmap)")
        s.add_argument("--phi0", type=float, help="thickness threshold (verify)")
        s.add_argument("--samples", type=int, help="total dilatation samples (qmmap)")
        s.add_argument("--no-timestamp", action="store_true",
                       help="omit timings and wall-clock time from reports")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("seed", "eps", "h", "safety", "out", "mesh",
                                                "phi0", "samples")}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, timestamp=not args.no_timestamp)
    except ConfigError as exc:
        print(f"fatlas: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

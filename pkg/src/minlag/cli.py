"""Command-line interface: JSON-configured runs with JSON/CSV results.

Subcommands: mesh, solve, continue, mpass, frame, wpcheck, selftest.
Exit codes: 0 success, 1 configuration or domain error, 2 numerical failure.
Outputs embed the sha256 hash of the canonicalized config for provenance and
are byte-identical across reruns except for the timestamp field.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys

import numpy as np
import jsonschema

from . import continuation, frame, mpass, pde, surface, wp
from .cubic import constant_cubic, cubic_to_json, synthetic_cubic

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


class ConfigError(ValueError):
    pass


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["backend", "cubic"],
    "properties": {
        "backend": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "n"],
                    "properties": {
                        "type": {"const": "torus"},
                        "n": {"type": "integer", "minimum": 4},
                        "side": {"type": "number", "exclusiveMinimum": 0},
                        "lambda0": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "refinement"],
                    "properties": {
                        "type": {"const": "octagon"},
                        "refinement": {"type": "integer", "minimum": 1},
                    },
                },
            ]
        },
        "cubic": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["constant"],
                    "properties": {
                        "constant": {
                            "type": "array", "minItems": 2, "maxItems": 2,
                            "items": {"type": "number"},
                        },
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["zeros"],
                    "properties": {
                        "zeros": {
                            "type": "array", "minItems": 1,
                            "items": {
                                "type": "array", "minItems": 2, "maxItems": 2,
                                "items": {"type": "integer", "minimum": 0},
                            },
                        },
                        "amplitude": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            ]
        },
        "t": {"type": "number", "minimum": 0},
        "dt0": {"type": "number", "exclusiveMinimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "theta": {"type": "number", "exclusiveMinimum": 2},
        "mpass": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path_nodes": {"type": "integer", "minimum": 3},
                "max_sweeps": {"type": "integer", "minimum": 1},
            },
        },
        "frame": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": {
                    "type": "array", "minItems": 2,
                    "items": {"type": "array", "minItems": 2, "maxItems": 2,
                              "items": {"type": "number"}},
                },
                "step": {"type": "number", "exclusiveMinimum": 0},
                "project": {"type": "boolean"},
                "trivial": {"type": "boolean"},
            },
        },
        "wpcheck": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "h": {"type": "number", "exclusiveMinimum": 0},
                "stencil": {"enum": ["centered", "oneside"]},
                "n_points": {"type": "integer", "minimum": 2},
            },
        },
    },
}


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def build_backend(cfg: dict) -> surface.DiscreteSurface:
    b = cfg["backend"]
    if b["type"] == "torus":
        return surface.build_flat_torus(b["n"], b.get("side", 1.0),
                                        b.get("lambda0", 1.0))
    return surface.build_genus2_octagon(b["refinement"])


def build_cubic(cfg: dict, s: surface.DiscreteSurface):
    c = cfg["cubic"]
    if "constant" in c:
        re, im = c["constant"]
        return constant_cubic(s, complex(re, im))
    zeros = [(int(a), int(b)) for a, b in c["zeros"]]
    for cls, _ in zeros:
        if cls >= s.n_classes:
            raise ConfigError(f"zero class {cls} out of range "
                              f"(surface has {s.n_classes} classes)")
    try:
        return synthetic_cubic(s, zeros, c.get("amplitude", 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def emit(payload: dict, cfg: dict, out_path: str | None) -> None:
    payload = dict(payload)
    payload["config_hash"] = config_hash(cfg)
    payload["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    text = json.dumps(payload, sort_keys=True, indent=2)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _require_t(cfg):
    if "t" not in cfg:
        raise ConfigError("this command requires a single 't' value")
    return float(cfg["t"])


def cmd_mesh(cfg, args) -> int:
    s = build_backend(cfg)
    payload = surface.mesh_to_json(s)
    payload["euler_characteristic"] = s.euler_characteristic()
    if s.genus >= 2:
        import math
        payload["area_error_vs_hyperbolic"] = abs(s.area - 4 * math.pi * (s.genus - 1))
    emit(payload, cfg, args.output)
    return EXIT_OK


def cmd_solve(cfg, args) -> int:
    s = build_backend(cfg)
    q = build_cubic(cfg, s)
    t = _require_t(cfg)
    tol = cfg.get("tol", 1e-10)
    try:
        p = pde.newton_solve(np.zeros(s.n_classes), t, s, q, tol=tol)
    except (pde.NonConvergence, pde.SingularJacobian) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    emit(p.to_json(), cfg, args.output)
    return EXIT_OK


def cmd_continue(cfg, args) -> int:
    s = build_backend(cfg)
    q = build_cubic(cfg, s)
    tol = cfg.get("tol", 1e-10)
    dt0 = cfg.get("dt0", 0.01)
    try:
        bound = continuation.nonexistence_bound(s, q)
    except continuation.ZeroCubic as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        curve = continuation.trace_curve(s, q, dt0=dt0, tol=tol)
        t0 = continuation.detect_fold(curve, tol=min(tol, 1e-11))
    except (continuation.StallBeforeFold, continuation.NoFoldDetected,
            pde.NonConvergence) as exc:
        print(f"continuation failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    base = args.output or "curve"
    csv_path = base + ".csv" if not base.endswith(".csv") else base
    json_path = csv_path[:-4] + ".json"
    continuation.write_curve_csv(curve, csv_path,
                                 comment=f"config_hash={config_hash(cfg)}")
    payload = continuation.curve_to_json(curve)
    payload["nonexistence_bound"] = bound
    with open(json_path, "w") as fh:
        payload["config_hash"] = config_hash(cfg)
        payload["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        json.dump(payload, fh, sort_keys=True, indent=2)
    print(f"T0 estimate: {t0:.8g}")
    print(f"nonexistence bound T: {bound:.8g}")
    print(f"curve written to {csv_path} and {json_path}")
    return EXIT_OK


def cmd_mpass(cfg, args) -> int:
    s = build_backend(cfg)
    q = build_cubic(cfg, s)
    t = _require_t(cfg)
    tol = cfg.get("tol", 1e-10)
    cp = mpass.build_cutoffs(cfg.get("theta", 3.0))
    opts = cfg.get("mpass", {})
    try:
        stable = _stable_branch_point(s, q, t, tol)
    except pde.NonConvergence as exc:
        print(f"no stable branch point at t = {t} (at or beyond the fold): {exc}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    try:
        p2 = mpass.find_mountain_pass(stable, t, s, q, cp, tol=tol,
                                      n_nodes=opts.get("path_nodes", 20),
                                      max_sweeps=opts.get("max_sweeps", 600))
    except mpass.DegenerateNorm as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (mpass.PathCollapse, mpass.VerificationFailure) as exc:
        print(f"mountain pass failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    payload = {
        "t": p2.t,
        "u2": [float(v) for v in p2.u],
        "residual_norm": p2.residual_norm,
        "lambda_min": p2.lambda_min,
        "vnorm_separation": p2.meta["vnorm_separation"],
        "path_iterations": p2.meta["path_iterations"],
        "sup_norm": float(np.abs(p2.u).max()),
    }
    emit(payload, cfg, args.output)
    return EXIT_OK


def _stable_branch_point(s, q, t, tol):
    """Warm-started walk along the canonical branch up to t."""
    u = np.zeros(s.n_classes)
    point = pde.newton_solve(u, 0.0, s, q, tol=tol)
    if t == 0.0:
        return point
    n_steps = 8
    step = t / n_steps
    tau = 0.0
    while tau < t - 1e-15 * max(1.0, t):
        target = min(t, tau + step)
        try:
            point = pde.newton_solve(point.u, target, s, q, tol=tol)
        except (pde.NonConvergence, pde.SingularJacobian):
            step *= 0.5
            if step < t * 1e-6:
                raise pde.NonConvergence(
                    f"branch walk stalled at t = {tau:.6g} before {t}")
            continue
        tau = target
    return point


def cmd_frame(cfg, args) -> int:
    s = build_backend(cfg)
    q = build_cubic(cfg, s)
    fcfg = cfg.get("frame", {})
    step = fcfg.get("step", 0.005)
    project = fcfg.get("project", False)
    tol = cfg.get("tol", 1e-10)
    if fcfg.get("path"):
        path = [complex(a, b) for a, b in fcfg["path"]]
    elif s.genus >= 2:
        import math
        path = [0j, complex(math.tanh(0.5), 0.0)]   # hyperbolic length 1
    else:
        side = cfg["backend"].get("side", 1.0)
        path = [side * (0.25 + 0.25j), side * (0.75 + 0.25j)]

    if fcfg.get("trivial", False) and s.genus >= 2:
        coeffs = frame.poincare_trivial_coefficients()
    else:
        t = float(cfg.get("t", 0.0))
        try:
            p = _stable_branch_point(s, q, t, tol)
        except pde.NonConvergence as exc:
            print(f"frame solve failed: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        coeffs = frame.MeshCoefficients(s, p.u, q)
    try:
        sheet = frame.integrate_frame(coeffs, path, step=step, project=project)
    except frame.StepTooLarge as exc:
        print(f"frame integration failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    payload = sheet.to_json()
    payload["max_unitarity_defect"] = float(sheet.defects[:, 0].max())
    payload["max_det_defect"] = float(sheet.defects[:, 1].max())
    emit(payload, cfg, args.output)
    return EXIT_OK


def cmd_wpcheck(cfg, args) -> int:
    s = build_backend(cfg)
    q = build_cubic(cfg, s)
    w = cfg.get("wpcheck", {})
    h = w.get("h", 0.01)
    try:
        rec = wp.area_record(s, q, h, n_points=w.get("n_points", 4),
                             stencil=w.get("stencil", "centered"),
                             tol=cfg.get("tol", 1e-12))
    except wp.BranchUnavailable as exc:
        print(f"wpcheck failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    base = args.output or "wpcheck"
    csv_path = base + ".csv" if not base.endswith(".csv") else base
    with open(csv_path, "w") as fh:
        fh.write(f"# config_hash={config_hash(cfg)}\n")
        fh.write("t,area\n")
        for t, a in rec.rows():
            fh.write(f"{t!r},{a!r}\n")
        fh.write(f"# fd1,{rec.fd1!r}\n")
        fh.write(f"# fd2,{rec.fd2!r},exact,{rec.exact_second!r},"
                 f"rel_err,{rec.rel_err!r}\n")
    print(f"area(0) = {rec.areas[0]:.8g}")
    print(f"first-variation estimate: {rec.fd1:.3e}")
    print(f"second variation: fd2 = {rec.fd2:.8g}, exact = "
          f"{rec.exact_second:.8g}, rel_err = {rec.rel_err:.3e}")
    print(f"table written to {csv_path}")
    return EXIT_OK


def cmd_selftest(cfg, args) -> int:
    """Fast end-to-end sanity checks on both backends."""
    import math
    failures = 0

    def check(name, ok, detail=""):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        failures += 0 if ok else 1

    s = surface.build_flat_torus(16, 1.0, 1.0)
    q = constant_cubic(s, 1.0)
    p = pde.newton_solve(np.zeros(s.n_classes), 0.0, s, q)
    check("torus trivial solution", np.abs(p.u).max() <= 1e-10
          and abs(p.lambda_min - 2.0) < 1e-2, f"lambda_min={p.lambda_min:.6f}")

    o = surface.build_genus2_octagon(2)
    check("octagon topology", o.euler_characteristic() == -2,
          f"chi={o.euler_characteristic()}")
    p = pde.newton_solve(np.zeros(o.n_classes), 0.0, o,
                         synthetic_cubic(o, [(0, 6)], 1.0))
    check("octagon trivial solution", np.abs(p.u).max() <= 1e-10)

    one = np.ones(s.n_classes)
    check("D(1) = 1 (torus)", np.abs(wp.d_operator(s, one) - 1.0).max() < 1e-12)
    check("D(1) = 1 (octagon)",
          np.abs(wp.d_operator(o, np.ones(o.n_classes)) - 1.0).max() < 1e-12)

    rng = np.random.default_rng(cfg.get("seed", 0))
    a = 1.0 + rng.uniform(0.0, 1e6, 2000)
    b = rng.uniform(0.0, 1e3, 2000)
    hs = [pde.legendre_pair(ai, bi) for ai, bi in zip(a, b)]
    ok = all(ai * bi <= h + hst + 1e-9 * max(1.0, ai * bi)
             for (ai, bi), (h, hst) in zip(zip(a, b), hs))
    check("Legendre-transform inequality", ok)

    cp = mpass.build_cutoffs(3.0)
    grid = np.linspace(-3.0, 3.0, 1201)
    d = np.diff(cp.F1(grid))
    mids = 0.5 * (grid[:-1] + grid[1:])
    ok = np.abs(d / np.diff(grid) - cp.f1(mids)).max() < 1e-2
    check("cutoff antiderivative F1' = f1", ok)

    print(f"{'OK' if failures == 0 else 'FAILED'}: "
          f"{failures} failing check(s)")
    return EXIT_OK if failures == 0 else EXIT_NUMERICAL


COMMANDS = {
    "mesh": cmd_mesh,
    "solve": cmd_solve,
    "continue": cmd_continue,
    "mpass": cmd_mpass,
    "frame": cmd_frame,
    "wpcheck": cmd_wpcheck,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="minlag",
        description="Structure-equation solver for minimal Lagrangian "
                    "surface data (u, t, q) with continuation, mountain-pass "
                    "and frame tooling.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name != "selftest":
            p.add_argument("config", help="JSON configuration file")
        else:
            p.add_argument("config", nargs="?", help="optional JSON config")
        p.add_argument("-o", "--output", default=None,
                       help="output file (JSON; or CSV base name for "
                            "continue/wpcheck)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config) if args.config else {}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (continuation.ZeroCubic, mpass.DegenerateNorm, ValueError) as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (pde.NonConvergence, pde.SingularJacobian, surface.MeshError,
            continuation.StallBeforeFold, continuation.NoFoldDetected,
            mpass.PathCollapse, mpass.VerificationFailure,
            frame.StepTooLarge, wp.BranchUnavailable) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

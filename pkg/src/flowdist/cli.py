"""Command-line interface.

One subcommand per workflow, each driven by a JSON config whose sha256
hash is embedded in every artifact.  Exit codes: 0 success, 1 a
computation raised a library error, 2 the config is invalid.
"""

from __future__ import annotations

import argparse
import os
import sys

# thread-count override must land before numpy spins up its pools
_threads = os.environ.get("FLOWDIST_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import numpy as np

from . import config as cfgmod
from . import extension, fields, flow, flownet, metric, reporting, sobolev, transport
from .errors import ComputationFailed, ConfigInvalid, FlowdistError
from .flow import FBCurve


def _opt(cfg, key, default=None, required=False):
    if key in cfg.options:
        return cfg.options[key]
    if required:
        raise ConfigInvalid(f"{cfg.subcommand} needs options.{key}")
    return default


def _need(cfg, *keys):
    for key in keys:
        if getattr(cfg, key) is None:
            raise ConfigInvalid(f"{cfg.subcommand} needs top-level {key!r}")


def _out(cfg, name: str) -> str:
    os.makedirs(cfg.outdir, exist_ok=True)
    return os.path.join(cfg.outdir, name)


def _pair_cols(x, y, lam, value, status, h, dt, snap):
    return [x[0], x[1], y[0], y[1], lam, value, status, h, dt, snap]


DIST_COLUMNS = ["x0", "x1", "y0", "y1", "lambda", "value", "status", "h", "dt", "snap_err"]


def _family(cfg, spec, ds):
    params = _opt(cfg, "family_params")
    if params is None:
        return None
    return flow.build_multiflow(spec, params, ds=ds)


def run_distance(cfg, want_figures):
    _need(cfg, "h", "dt")
    spec = config_field(cfg)
    x = _opt(cfg, "x", required=True)
    y = _opt(cfg, "y", required=True)
    mode = _opt(cfg, "mode", "zero")
    T = spec.box.T
    meta = reporting.base_meta(cfgmod.config_hash(cfg), cfg)
    rows = []
    lam_vals = []
    if mode == "lambda":
        if cfg.schedule is None:
            raise ConfigInvalid("mode 'lambda' needs a schedule")
        g = metric.build_metric_graph(spec, cfg.h, cfg.dt, cfg.schedule[0])
        for lam in cfg.schedule:
            r = metric.distance_lambda(g.with_lambda(lam), x, y)
            val, status = reporting.csv_value(r.value, T)
            rows.append(_pair_cols(x, y, lam, val, status, cfg.h, cfg.dt, r.snap_err))
            lam_vals.append((lam, r.value))
    elif mode == "zero":
        if cfg.schedule is None:
            raise ConfigInvalid("mode 'zero' needs a schedule")
        mf = _family(cfg, spec, cfg.ds or cfg.dt)
        res = flownet.network_distance_zero(
            spec, mf, x, y, cfg.schedule, cfg.h, cfg.dt,
            tol_limit=_opt(cfg, "tol_limit"), cap=_opt(cfg, "cap"),
        )
        for lam, v in zip(res.extra["lambdas"], res.extra["values"]):
            val, status = reporting.csv_value(v, T)
            rows.append(_pair_cols(x, y, lam, val, status, cfg.h, cfg.dt, res.snap_err))
            lam_vals.append((lam, v))
        val, _ = reporting.csv_value(res.value, T)
        rows.append(_pair_cols(x, y, 0.0, val, res.status, cfg.h, cfg.dt, res.snap_err))
    elif mode == "fb":
        mf = _family(cfg, spec, cfg.ds or cfg.dt)
        res = flownet.network_fb_distance(spec, x, y, cfg.h, cfg.dt, mf=mf)
        val, status = reporting.csv_value(res.value, T)
        status = res.status if res.status != "finite" else status
        rows.append(_pair_cols(x, y, 0.0, val, res.status, cfg.h, cfg.dt, res.snap_err))
    else:
        raise ConfigInvalid(f"unknown distance mode {mode!r}")
    path = _out(cfg, "distance.csv")
    reporting.write_csv(path, DIST_COLUMNS, rows, meta)
    print(f"wrote {path} ({len(rows)} rows)")
    if want_figures and lam_vals:
        from . import figures

        figures.distance_figure(
            _out(cfg, "distance.png"),
            [lv[0] for lv in lam_vals], [lv[1] for lv in lam_vals],
        )
        print(f"wrote {_out(cfg, 'distance.png')}")
    return 0


def _tube_phi(cfg, spec, ds):
    params = _opt(cfg, "family_params", required=True)
    mf = flow.build_multiflow(spec, params, ds=ds)
    tube = flow.build_flowtube(mf, _opt(cfg, "tube_params", params))
    spec_phi = _opt(cfg, "phi", required=True)
    kind = spec_phi.get("kind")
    if kind == "branch_indicator":
        phi = extension.branch_indicator(
            tube, spec_phi["one_params"], float(spec_phi.get("clearance", 0.0))
        )
    elif kind == "coordinate":
        phi = extension.coordinate_function(tube)
    elif kind == "branch_root":
        phi = extension.SampledFunction(
            tube.points, extension.branch_root_values(tube.points), provenance=tube
        )
    elif kind == "values":
        phi = extension.SampledFunction(
            np.asarray(spec_phi["points"], float),
            np.asarray(spec_phi["values"], float),
            provenance=tube,
        )
    else:
        raise ConfigInvalid(f"unknown phi kind {kind!r}")
    return mf, tube, phi


def run_lipschitz(cfg, want_figures):
    _need(cfg, "h", "dt", "schedule")
    spec = config_field(cfg)
    _, _, phi = _tube_phi(cfg, spec, cfg.ds or cfg.dt)
    prof = extension.lip_profile(phi, cfg.schedule, cfg.h, cfg.dt)
    meta = reporting.base_meta(cfgmod.config_hash(cfg), cfg)
    rows = [[lam, lv, "ok"] for lam, lv in zip(prof.lambdas, prof.lip_values)]
    rows.append([0.0, prof.lip0, "fb"])
    path = _out(cfg, "lipschitz.csv")
    reporting.write_csv(path, ["lambda", "lip", "status"], rows, meta)
    summary = {
        "config": cfgmod.config_hash(cfg),
        "lip0": prof.lip0,
        "euclid_lip": prof.euclid_lip,
        "lambdas": list(prof.lambdas),
        "lip_values": list(prof.lip_values),
        "n_points": prof.extra["n_points"],
    }
    if cfg.epsilon is not None:
        summary["lambda_bar"] = extension.select_lambda_bar(prof, cfg.epsilon)
    reporting.write_json(_out(cfg, "lipschitz.json"), summary, spec.box.T)
    print(f"wrote {path} and lipschitz.json (lip0={prof.lip0:.6g})")
    if want_figures:
        from . import figures

        figures.profile_figure(_out(cfg, "lipschitz.png"), prof)
        print(f"wrote {_out(cfg, 'lipschitz.png')}")
    return 0


def _rest_fb_curves(spec, g):
    """Constant-height orbits at the field's rest heights that sit
    exactly on the lattice; exact fb curves, exact snaps."""
    out = []
    if spec.kind != "catalog":
        return out
    for hfun in spec.entry.degenerate_heights(spec.params):
        samples = np.column_stack([g.times, np.asarray(hfun(g.times), dtype=float)])
        if max(g.snap_point(p)[1] for p in samples) > 1e-12:
            continue
        out.append(FBCurve(samples=samples, ds=g.dt, profile=np.ones(len(g.times) - 1)))
    return out


def run_extend(cfg, want_figures):
    _need(cfg, "h", "dt", "schedule", "epsilon")
    spec = config_field(cfg)
    _, _, phi = _tube_phi(cfg, spec, cfg.ds or cfg.dt)
    prof = extension.lip_profile(phi, cfg.schedule, cfg.h, cfg.dt)
    # half the budget selects lambda, half absorbs discretization slack
    lam_bar = extension.select_lambda_bar(prof, 0.5 * cfg.epsilon)
    L_ext = float(_opt(cfg, "L_ext", prof.lip0 + 0.5 * cfg.epsilon))
    g = metric.build_metric_graph(spec, cfg.h, cfg.dt, lam_bar)
    phit = extension.mcshane_extend(phi, g, L_ext)
    rep = extension.verify_extension(phit, phi, _rest_fb_curves(spec, g), L_ext)

    grid = fields.SampledGrid(
        spec.box, (g.nspace,), len(g.times),
        phit.values.reshape(len(g.times), g.nspace)[..., None],
    )
    field_path = _out(cfg, "extend_values.field")
    fields.save_sampled_field(grid, field_path)
    summary = {
        "config": cfgmod.config_hash(cfg),
        "lambda_bar": lam_bar,
        "L_ext": L_ext,
        "lip0": prof.lip0,
        "lip_values": list(prof.lip_values),
        "lambdas": list(prof.lambdas),
        "report": rep.to_dict(),
    }
    reporting.write_json(_out(cfg, "extend_report.json"), summary, spec.box.T)
    print(
        f"wrote {field_path} and extend_report.json "
        f"(lambda_bar={lam_bar:.6g}, L_ext={L_ext:.6g}, passed={rep.passed})"
    )
    if not rep.passed:
        raise ComputationFailed("extension verification failed; see extend_report.json")
    if want_figures:
        from . import figures

        figures.extension_figure(_out(cfg, "extend.png"), g, phit.values)
        figures.profile_figure(_out(cfg, "extend_profile.png"), prof)
        print(f"wrote {_out(cfg, 'extend.png')} and extend_profile.png")
    return 0


def run_flow(cfg, want_figures):
    _need(cfg, "ds")
    spec = config_field(cfg)
    meta = reporting.base_meta(cfgmod.config_hash(cfg), cfg)
    mf = None
    if "family_params" in cfg.options:
        mf = flow.build_multiflow(spec, cfg.options["family_params"], ds=cfg.ds)
        rows = []
        for i, p in enumerate(mf.params):
            for t, height in zip(mf.tgrid, mf.heights[i]):
                val, status = reporting.csv_value(height, spec.box.T)
                rows.append([p, t, val, "exited" if status == "inf" else status])
        path = _out(cfg, "flow_family.csv")
        reporting.write_csv(path, ["param", "t", "height", "status"], rows, meta)
        print(f"wrote {path} ({len(mf.params)} curves)")
    else:
        start = _opt(cfg, "start", required=True)
        c = flow.integrate_curve(
            spec, start, int(_opt(cfg, "direction", 1)),
            float(_opt(cfg, "duration", required=True)), cfg.ds,
        )
        rows = [
            [k * c.ds, s[0], s[1], "ok"] for k, s in enumerate(c.samples)
        ]
        path = _out(cfg, "flow_curve.csv")
        reporting.write_csv(path, ["s", "x0", "x1", "status"], rows, meta)
        reporting.write_json(
            _out(cfg, "flow_curve.json"),
            {
                "config": cfgmod.config_hash(cfg),
                "duration": c.duration,
                "clipped": c.clipped,
                "max_residual": c.max_residual,
                "tol_ode": c.tol_ode,
            },
            spec.box.T,
        )
        print(f"wrote {path} ({len(c.samples)} samples)")
    if want_figures and mf is not None:
        from . import figures

        figures.curves_figure(_out(cfg, "flow_family.png"), mf)
        print(f"wrote {_out(cfg, 'flow_family.png')}")
    return 0


def run_fbcheck(cfg, want_figures):
    spec = config_field(cfg)
    curve_path = _opt(cfg, "curve_path", required=True)
    c = flow.read_fb_curve(curve_path)
    tol = _opt(cfg, "tol")
    if tol is None:
        tol = flow.default_tol_ode(spec, c.ds)
    rep = flow.validate_fb_curve(spec, c, float(tol))
    out = {
        "config": cfgmod.config_hash(cfg),
        "max_residual": rep.max_residual,
        "displacement_gap": rep.displacement_gap,
        "tol": rep.tol,
        "passed": rep.passed,
    }
    if "family_params" in cfg.options:
        mf = flow.build_multiflow(spec, cfg.options["family_params"], ds=c.ds)
        out["triviality"] = flow.fb_triviality_check(spec, c, mf)
    reporting.write_json(_out(cfg, "fbcheck.json"), out, spec.box.T)
    print(f"wrote fbcheck.json (passed={rep.passed})")
    return 0


def run_maximal(cfg, want_figures):
    _need(cfg, "h")
    spec = config_field(cfg)
    lo, hi = spec.box.xlo[0], spec.box.xhi[0]
    axis = lo + np.arange(int(round((hi - lo) / cfg.h)) + 1) * cfg.h
    fdef = _opt(cfg, "function", required=True)
    kind = fdef.get("kind")
    if kind == "power":
        vals = np.abs(axis) ** float(fdef["exponent"])
    elif kind == "affine":
        vals = float(fdef["slope"]) * axis + float(fdef.get("offset", 0.0))
    elif kind == "indicator":
        vals = ((axis >= fdef["lo"]) & (axis <= fdef["hi"])).astype(float)
    elif kind == "values":
        vals = np.asarray(fdef["values"], float)
    else:
        raise ConfigInvalid(f"unknown function kind {kind!r}")
    f = sobolev.GridScalarField(axis, vals)
    radii = _opt(cfg, "radii")
    radii = np.asarray(radii, float) if radii else sobolev.radii_ladder(cfg.h, hi - lo)
    m = sobolev.maximal_function(f, radii)
    meta = reporting.base_meta(cfgmod.config_hash(cfg), cfg)
    rows = [[x, fv, mv] for x, fv, mv in zip(axis, f.values, m.values)]
    path = _out(cfg, "maximal.csv")
    reporting.write_csv(path, ["x", "f", "maximal"], rows, meta)
    summary = {"config": cfgmod.config_hash(cfg), "n_radii": int(len(radii))}
    p = _opt(cfg, "p")
    if p is not None:
        pairs = sobolev.sample_pairs(len(axis), int(_opt(cfg, "n_pairs", 2000)), cfg.seed)
        rep = sobolev.maximal_ratio_check(f, float(p), pairs, radii)
        summary.update(rep.to_dict())
    reporting.write_json(_out(cfg, "maximal.json"), summary, spec.box.T)
    print(f"wrote {path} and maximal.json")
    if want_figures:
        from . import figures

        figures.maximal_figure(_out(cfg, "maximal.png"), f, m)
        print(f"wrote {_out(cfg, 'maximal.png')}")
    return 0


def run_certify(cfg, want_figures):
    _need(cfg, "h", "ds")
    spec = config_field(cfg)
    p = float(_opt(cfg, "p", required=True))
    p_tilde = _opt(cfg, "p_tilde")
    starts = _opt(cfg, "starts")
    if starts is None:
        rng = np.random.default_rng(cfg.seed)
        lo, hi = _opt(cfg, "start_range", required=True)
        starts = rng.uniform(lo, hi, size=int(_opt(cfg, "n_starts", 1000)))
    radii = _opt(cfg, "radii")
    radii = (
        np.asarray(radii, float)
        if radii
        else sobolev.radii_ladder(cfg.h, spec.box.xhi[0] - spec.box.xlo[0])
    )
    cert = sobolev.uniqueness_certificate(
        spec, p, None if p_tilde is None else float(p_tilde),
        starts, cfg.ds, radii, cap=_opt(cfg, "cap"),
    )
    meta = reporting.base_meta(cfgmod.config_hash(cfg), cfg)
    rows = []
    for s, phi in zip(cert.start_points, cert.integrals):
        val, status = reporting.csv_value(phi, spec.box.T)
        rows.append([s, val, "excluded" if status == "inf" else status])
    path = _out(cfg, "certify.csv")
    reporting.write_csv(path, ["start", "phi", "status"], rows, meta)
    summary = {"config": cfgmod.config_hash(cfg), **cert.to_dict()}
    reporting.write_json(_out(cfg, "certify.json"), summary, spec.box.T)
    print(f"wrote {path} (finite_fraction={cert.finite_fraction:.4f})")
    if want_figures:
        from . import figures

        figures.certificate_figure(_out(cfg, "certify.png"), cert)
        print(f"wrote {_out(cfg, 'certify.png')}")
    return 0


def run_transport(cfg, want_figures):
    _need(cfg, "h")
    spec = config_field(cfg)
    u0def = _opt(cfg, "u0", required=True)
    axis = transport.density_lattice(spec.box, cfg.h)
    u0 = sobolev.GridScalarField(
        axis,
        transport.bump_values(
            axis, float(u0def["center"]), float(u0def["radius"]),
            int(u0def.get("degree", 3)),
        ),
    )
    times = _opt(cfg, "times")
    if times is None:
        times = [spec.box.t0, spec.box.t1]
    solver = _opt(cfg, "solver", "both")
    meta = reporting.base_meta(cfgmod.config_hash(cfg), cfg)
    sols = {}
    if solver in ("lagrangian", "both"):
        if cfg.ds is None:
            raise ConfigInvalid("lagrangian solves need ds")
        sols["lagrangian"] = transport.lagrangian_solve(spec, u0, times, cfg.ds)
    if solver in ("eulerian", "both"):
        vmax = transport._vmax(spec)
        dt_cfl = _opt(cfg, "dt_cfl", cfg.h / (2.0 * vmax) if vmax > 0 else cfg.h)
        sols["eulerian"] = transport.eulerian_solve(
            spec, u0, cfg.h, float(dt_cfl), times=times
        )
    rows = []
    for name in sorted(sols):
        d = sols[name]
        for k, t in enumerate(d.times):
            for x, v in zip(d.axis, d.values[k]):
                rows.append([name, t, x, v])
    path = _out(cfg, "transport.csv")
    reporting.write_csv(path, ["solver", "t", "x", "value"], rows, meta)
    summary = {"config": cfgmod.config_hash(cfg)}
    for name, d in sols.items():
        summary[f"{name}_mass"] = list(d.masses)
    if "eulerian" in sols:
        summary["boundary_flux"] = list(sols["eulerian"].extra["boundary_flux"])
    if len(sols) == 2:
        summary["l1_distance"] = list(
            transport.compare_solutions(sols["lagrangian"], sols["eulerian"])
        )
    tests = _opt(cfg, "tests")
    if tests:
        tfs = [transport.TestFunction(**t) for t in tests]
        target = sols.get("lagrangian") or sols["eulerian"]
        summary["weak_residuals"] = list(
            transport.weak_residual(target, spec, u0, tfs)
        )
    reporting.write_json(_out(cfg, "transport.json"), summary, spec.box.T)
    print(f"wrote {path} and transport.json ({', '.join(sorted(sols))})")
    if want_figures:
        from . import figures

        for name, d in sols.items():
            figures.density_figure(_out(cfg, f"transport_{name}.png"), d)
            print(f"wrote {_out(cfg, f'transport_{name}.png')}")
    return 0


def run_catalog(cfg, want_figures):
    rows = fields.catalog_table()
    width = max(len(r["name"]) for r in rows) + 2
    print(f"{'name':<{width}}formula  (params)")
    for r in rows:
        suffix = f"  ({r['params']})" if r["params"] else ""
        print(f"{r['name']:<{width}}{r['formula']}{suffix}")
    return 0


_RUNNERS = {
    "distance": run_distance,
    "lipschitz": run_lipschitz,
    "extend": run_extend,
    "flow": run_flow,
    "fbcheck": run_fbcheck,
    "maximal": run_maximal,
    "certify": run_certify,
    "transport": run_transport,
    "catalog": run_catalog,
}


def config_field(cfg):
    return cfgmod.build_field(cfg)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="flowdist",
        description="Flow-adapted distances, Lipschitz extensions, "
        "uniqueness certificates, and transport cross-checks.",
    )
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} workflow")
        if name != "catalog":
            p.add_argument("--config", required=True, help="JSON config file")
        else:
            p.add_argument("--config", required=False, help="ignored for catalog")
        p.add_argument(
            "--figures", action="store_true",
            help="also render matplotlib figures next to the delimited output",
        )
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.subcommand == "catalog" and not args.config:
            cfg = cfgmod.RunConfig(subcommand="catalog")
        else:
            cfg = cfgmod.from_file(args.config)
            if cfg.subcommand != args.subcommand:
                raise ConfigInvalid(
                    f"config is for {cfg.subcommand!r}, not {args.subcommand!r}"
                )
        return _RUNNERS[args.subcommand](cfg, args.figures)
    except ConfigInvalid as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FlowdistError as e:
        print(f"computation failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

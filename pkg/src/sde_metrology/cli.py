"""Command line for single-photon detector efficiency sessions (sde-metrology).

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io as sio
from . import nonlin, sde
from .errors import DataError, MetrologyError, NumericalError
from .instrument import (
    CpmCalibration,
    attenuator_result,
    load_atten_cal,
    load_switch_cal,
    switching_ratio,
)
from .pipeline import analyze_polscan, analyze_stability, calibrate_session, quiet
from .sim.acquisition import simulate_session
from .sim.scenario import SimScenario

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("sde_metrology")


def _session(args) -> sio.Session:
    return sio.Session.open(args.session)


def _emit(obj, out):
    text = sio.dump_json(obj)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_calib(path, session) -> sde.Calibration:
    doc = sio.load_json(path)
    kind = doc.get("kind")
    if kind == "CalibrationBundle":
        return sde.Calibration.from_dict(doc)
    if kind == "NonlinModel":
        from .pipeline import calibration_from_model
        return calibration_from_model(session, nonlin.NonlinModel.from_dict(doc))
    raise DataError(f"unrecognised calibration document kind {kind!r}", path=path)


def _check_wavelength(args, lam):
    if args.wavelength_nm is not None and abs(args.wavelength_nm - lam) > 0.01:
        from .errors import CalibrationMismatchError
        raise CalibrationMismatchError(f"session is at {lam} nm, --wavelength-nm asked for {args.wavelength_nm}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    sc = SimScenario.load(args.scenario) if args.scenario else SimScenario()
    if args.seed is not None:
        sc.seed = args.seed
    if args.wavelength_nm is not None:
        sc.wavelength_nm = args.wavelength_nm
    if not args.out:
        raise DataError("--out is required for simulate")
    bundle, notes = quiet(simulate_session, sc, args.out, polscan=not args.no_polscan,
                          stability=not args.no_stability, stability_s=args.stability_s,
                          attval=args.att_db if args.att_db is not None else 31.0,
                          rngval=args.range_dbm if args.range_dbm is not None else -30)
    print(f"session written to {args.out} ({len(bundle.tables) + len(bundle.documents)} files)")
    return EXIT_OK


def cmd_cal_nonlin(args):
    s = _session(args)
    _check_wavelength(args, s.wavelength_nm)
    recs = nonlin.load_nonlin_records(s.path("nonlin"))
    model, notes = quiet(nonlin.calibrate_nonlinearity, recs, selection=args.selection)
    model.source_digest = s.manifest["files"]["nonlin"]["sha256"]
    doc = model.to_dict()
    doc["warnings"] = notes
    _emit(doc, args.out)
    return EXIT_OK


def cmd_cal_switch(args):
    s = _session(args)
    _check_wavelength(args, s.wavelength_nm)
    model = None
    if args.calib:
        doc = sio.load_json(args.calib)
        model = (nonlin.NonlinModel.from_dict(doc["nonlin"]) if doc.get("kind") == "CalibrationBundle"
                 else nonlin.NonlinModel.from_dict(doc))
    else:
        model, _ = quiet(nonlin.calibrate_nonlinearity, nonlin.load_nonlin_records(s.path("nonlin")),
                         selection=args.selection)
    rec = load_switch_cal(s.path("switch_cal"))
    r_sw = switching_ratio(rec, model)
    cpm = CpmCalibration.from_dict(sio.load_json(s.path("cpm_certificate")))
    cal = sde.Calibration(model, r_sw, cpm, s.wavelength_nm)
    _emit(cal.to_dict(), args.out)
    return EXIT_OK


def cmd_cal_atten(args):
    s = _session(args)
    _check_wavelength(args, s.wavelength_nm)
    cal = _load_calib(args.calib, s) if args.calib else calibrate_session(s, args.selection)
    out = {"kind": "AttenuatorCalibration", "wavelength_nm": s.wavelength_nm, "attenuators": {}}
    for rec in load_atten_cal(s.path("atten_cal")):
        if args.range_dbm is not None and rec.range_dbm != args.range_dbm:
            continue
        if args.att_db is not None and rec.nominal_db != args.att_db:
            continue
        res, _ = quiet(attenuator_result, rec, cal.nonlin)
        out["attenuators"][str(rec.attenuator_id)] = {
            "nominal_db": rec.nominal_db, "range_dbm": rec.range_dbm,
            "alpha": sio.uv_to_json(res.alpha), "relative_sigma": res.alpha.relative_sigma}
    if not out["attenuators"]:
        raise DataError("no attenuator calibration matches the requested range/setting")
    _emit(out, args.out)
    return EXIT_OK


def _sde_result(args, s):
    cal = _load_calib(args.calib, s) if args.calib else calibrate_session(s, args.selection)
    res, notes = quiet(sde.sde_curve, s, cal)
    top = max(res.curves["maxpol"], key=lambda p: p.bias_v)
    res.metadata["pileup"] = {
        "model": args.model,
        "dead_time_s": args.dead_time_s,
        "max_sde_at_top_bias": sde.pileup_max_sde(top.light_rate.value, args.dead_time_s, args.model),
    }
    res.metadata["warnings"] = notes
    return res, cal


def cmd_sde(args):
    s = _session(args)
    _check_wavelength(args, s.wavelength_nm)
    res, _ = _sde_result(args, s)
    _emit(res.to_dict(), args.out)
    if args.out:
        res.write_csv(Path(args.out).with_suffix(".csv"))
    return EXIT_OK


def cmd_polscan(args):
    s = _session(args)
    r = analyze_polscan(s)
    _emit(r.to_dict(s.params.get("polscan", {}).get("grid")), args.out)
    return EXIT_OK


def cmd_allan(args):
    src = args.input
    if src is None:
        s = _session(args)
        src = s.path("stability")
    taus = args.tau or None
    rows = analyze_stability(src, taus)
    if args.out:
        sio.write_csv(args.out, ["tau_s", "adev"], rows)
    else:
        sys.stdout.write("tau_s,adev\n")
        for t, a in rows:
            sys.stdout.write(f"{sio.fmt(t)},{sio.fmt(a)}\n")
    return EXIT_OK


def _pct(x):
    return f"{100 * x:.3f}%"


def build_report(s: sio.Session, args) -> tuple[dict, str]:
    if not s.manifest["files"]:
        raise DataError("session lists no files", path=s.root)
    doc = {"kind": "Report", "session_id": s.manifest.get("session_id"), "wavelength_nm": s.wavelength_nm}
    lines = [f"session {doc['session_id']}  wavelength {s.wavelength_nm:g} nm"]
    if s.has("sde_maxpol"):
        res, _ = _sde_result(args, s)
        doc["sde"] = res.to_dict()
        lines.append("")
        lines.append("SDE vs bias")
        lines.append(f"{'phase':<8}{'bias_uA':>10}{'SDE':>12}{'sigma':>12}")
        for ph, pts in res.curves.items():
            for p in pts:
                lines.append(f"{ph:<8}{p.bias_a * 1e6:>10.3f}{p.sde.value:>12.5f}{p.sde.sigma:>12.5f}")
        top = max(res.curves["maxpol"], key=lambda p: p.bias_v)
        lines.append("")
        lines.append(f"error budget at {top.bias_a * 1e6:.2f} uA (maxpol), relative k=1")
        for label, v in sorted(top.sde.budget().items(), key=lambda kv: -kv[1]):
            lines.append(f"  {label:<16}{_pct(v):>10}")
        lines.append(f"  {'total':<16}{_pct(top.sde.relative_sigma):>10}")
        doc["error_budget"] = {"bias_ua": top.bias_a * 1e6, "terms": top.sde.budget(),
                               "total": top.sde.relative_sigma}
    nominal = {}
    for base in ("independent", "shared"):
        for rate in (2.3e5, 1e5):
            u = sde.budget_sde(light_rate=rate, alpha_base=base)
            nominal.setdefault(base, {})[format(rate, ".17g")] = {"total": u.sigma, "terms": u.budget()}
    doc["nominal_budget"] = nominal
    lines.append("")
    lines.append("nominal budget (table inputs + counting, 10 x 1 s gates, dark 1e4/s)")
    for base, by_rate in nominal.items():
        for rate, b in by_rate.items():
            lines.append(f"  {base} attenuator base, {float(rate):.1e} counts/s: {_pct(b['total'])}")
    if s.has("polscan"):
        r = analyze_polscan(s)
        doc["polarization"] = r.to_dict(s.params.get("polscan", {}).get("grid"))
        lines.append("")
        lines.append(f"PS = {r.ps.value:.4f} +/- {r.ps.sigma:.4f}")
    if s.has("stability"):
        rows = analyze_stability(s.path("stability"), [10.0])
        doc["allan"] = [{"tau_s": t, "adev": a} for t, a in rows]
        lines.append(f"ADEV({rows[0][0]:.2f} s) = {rows[0][1]:.3e}")
    return doc, "\n".join(lines) + "\n"


def cmd_report(args):
    s = _session(args)
    doc, text = build_report(s, args)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(sio.dump_json(doc))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sde-metrology", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, session=True):
        if session:
            sp.add_argument("--session", help=f"session directory (default ${sio.DATA_DIR_ENV})")
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--wavelength-nm", type=float)
        sp.add_argument("--selection", choices=nonlin.SELECTION_RULES, default="redchi",
                        help="polynomial order selection rule")

    sp = sub.add_parser("simulate", help="run the virtual bench and write a session")
    common(sp, session=False)
    sp.add_argument("--scenario", help="scenario JSON (defaults if omitted)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--att-db", type=float, help="attenuator setting for the SDE run (default 31)")
    sp.add_argument("--range-dbm", type=int, help="MPM range for attenuator calibration (default -30)")
    sp.add_argument("--no-polscan", action="store_true")
    sp.add_argument("--no-stability", action="store_true")
    sp.add_argument("--stability-s", type=float, default=3600.0)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("cal-nonlin", help="fit the monitor meter nonlinearity")
    common(sp)
    sp.set_defaults(func=cmd_cal_nonlin)

    sp = sub.add_parser("cal-switch", help="switch ratio; writes a calibration bundle")
    common(sp)
    sp.add_argument("--calib", help="NonlinModel or calibration bundle JSON")
    sp.set_defaults(func=cmd_cal_switch)

    sp = sub.add_parser("cal-atten", help="attenuator transmissions")
    common(sp)
    sp.add_argument("--calib")
    sp.add_argument("--range-dbm", type=int)
    sp.add_argument("--att-db", type=float)
    sp.set_defaults(func=cmd_cal_atten)

    for name, fn, hlp in (("sde", cmd_sde, "SDE versus bias"), ("report", cmd_report, "summary report")):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--calib")
        sp.add_argument("--model", choices=sde.DEAD_TIME_MODELS, default="paralyzable")
        sp.add_argument("--dead-time-s", type=float, default=175e-9)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("polscan", help="polarization sensitivity from a grid scan")
    common(sp)
    sp.set_defaults(func=cmd_polscan)

    sp = sub.add_parser("allan", help="overlapping Allan deviation")
    common(sp)
    sp.add_argument("--in", dest="input", help="stability CSV (default: session file)")
    sp.add_argument("--tau", type=float, action="append", help="averaging time in s (repeatable)")
    sp.set_defaults(func=cmd_allan)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, MetrologyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

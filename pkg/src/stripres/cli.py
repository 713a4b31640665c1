"""Command-line front end.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage or
configuration errors.  Each check prints one verdict line.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cell_operator import band_eigs
from .errors import ConfigError, StripResError
from .floquet import GridFunction, strip_resolvent_check
from .medium import ModeBasis
from .pipeline import RunConfig, run_pipeline, write_csv, write_json
from .pole_tracker import cyl_dist, pencil_spectrum
from .symbol import (
    free_pole_oracle,
    free_poles_in_D,
    hammer_violations,
    min_gap,
    min_gap_brute,
    select_tau1,
    symbol,
)

TWO_PI = 2.0 * np.pi
COMMANDS = (
    "verify-estimates",
    "band",
    "free-poles",
    "formres-check",
    "track-poles",
    "a-decay",
    "fredholm-scan",
    "run-all",
)
K_PATHS = {"gamma-x-m-gamma": [(0.0, 0.0), (np.pi, 0.0), (np.pi, np.pi), (0.0, 0.0)]}


def _verdict(name: str, ok: bool, detail: str = "") -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
    return ok


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over: dict = {}
    if args.out is not None:
        over["out_dir"] = args.out
    if args.threads is not None:
        over["threads"] = args.threads
    if args.lam is not None:
        over["lam"] = args.lam
    if args.q_line is not None:
        over["q_line"] = args.q_line
    if args.basis_n1 is not None:
        over["n1_margin"] = args.basis_n1
    if args.basis_n2 is not None:
        over["n2_margin"] = args.basis_n2
    if args.ell_max is not None:
        lo = int(np.ceil(min(cfg.ells)))
        if args.ell_max < lo:
            raise ConfigError(f"--ell-max {args.ell_max} below the first sweep height {lo}")
        over["ells"] = tuple(float(e) for e in range(lo, int(args.ell_max) + 1))
    cfg = replace(cfg, **over)
    cfg.validate()
    return cfg


def cmd_verify_estimates(args) -> int:
    ok = True
    v1, v2 = hammer_violations(args.samples, seed=0)
    ok &= _verdict("hammer bounds", v1 == 0 and v2 == 0, f"{args.samples} draws, violations b1={v1} b2={v2}")
    tight = abs(min_gap_brute(np.pi / 2, 0.0, 200, 100_000) - 7 * np.pi**2 / 4)
    ok &= _verdict("min_gap tightness", tight <= 1e-9 * 7 * np.pi**2 / 4, f"|brute - 7π²/4| = {tight:.3e}")
    worst = np.inf
    for beta in (np.pi / 8, np.pi / 4, np.pi / 2, 3 * np.pi / 4):
        for n in range(6):
            bound = min_gap(beta, TWO_PI * n)
            worst = min(worst, min_gap_brute(beta, TWO_PI * n) - bound * (1 - 1e-12))
    ok &= _verdict("min_gap lower bound", worst >= 0, f"min(brute - bound) = {worst:.3e}")
    mono = True
    for theta in np.linspace(0.2, 3.0, 8):
        taus = [select_tau1(1.0, s, theta) for s in (0.5, 1, 2, 5, 10, 50, 100)]
        mono &= all(b >= a for a, b in zip(taus, taus[1:]))
    for prod in (1.0, 10.0, 100.0):
        taus = [select_tau1(prod, 1.0, t) for t in np.linspace(0.2, 3.0, 8)]
        mono &= all(b <= a for a, b in zip(taus, taus[1:]))
    ok &= _verdict("select_tau1 monotonicity", mono)
    rng = np.random.default_rng(1)
    rel = 0.0
    for _ in range(100):
        m = TWO_PI * rng.integers(-8, 9, size=2)
        xi2 = rng.uniform(np.pi - np.pi / 8, np.pi + np.pi / 8)
        ell = TWO_PI * rng.integers(0, 6)
        for sign in (1, -1):
            k1 = free_pole_oracle(m, xi2, ell, sign)
            k2 = xi2 + 1j * (np.pi / 2 + ell)
            scale = abs(m[0] + k1) ** 2 + abs(m[1] + k2) ** 2
            rel = max(rel, abs(symbol(m, (k1, k2))) / scale)
    ok &= _verdict("free pole oracle zeroes the symbol", rel <= 1e-12, f"max relative residual {rel:.3e}")
    return 0 if ok else 1


def cmd_band(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    basis = ModeBasis.symmetric(args.basis_n1 or 4, args.basis_n2 or 4)
    corners = K_PATHS[args.k_path]
    rows, s_acc = [], 0.0
    for seg, (a, b) in enumerate(zip(corners, corners[1:])):
        length = float(np.hypot(b[0] - a[0], b[1] - a[1]))
        last = seg == len(corners) - 2
        ts = np.linspace(0.0, 1.0, args.points + 1)
        for t in ts if last else ts[:-1]:
            k = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
            w = band_eigs(k, cfg.medium, basis, args.bands)
            row = {"s": s_acc + t * length, "k1": k[0], "k2": k[1]}
            row.update({f"band_{i}": float(v) for i, v in enumerate(w)})
            rows.append(row)
        s_acc += length
    cols = ["s", "k1", "k2"] + [f"band_{i}" for i in range(args.bands)]
    path = write_csv(Path(args.out or cfg.out_dir) / "bands.csv", rows, cols)
    lowest = min(r["band_0"] for r in rows)
    ok = lowest >= -1e-9 * max(1.0, max(r[cols[-1]] for r in rows))
    _verdict("band", ok, f"{len(rows)} k-points, first band at start {rows[0]['band_0']:.3e}, written to {path}")
    return 0 if ok else 1


def cmd_free_poles(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    n_ell = args.ell_max if args.ell_max is not None else 1
    ell = TWO_PI * n_ell
    tau1 = cfg.tau1 if cfg.tau1 is not None else TWO_PI
    k2 = complex(np.pi, np.pi / 2 + ell)
    h1 = args.basis_n1 if args.basis_n1 is not None else int(n_ell) + 4
    h2 = args.basis_n2 if args.basis_n2 is not None else int(round(tau1 / TWO_PI)) + 4
    basis = ModeBasis.symmetric(h1, h2)
    spec = pencil_spectrum(k2, 0.0, cfg.medium, basis, tau1)
    oracle = free_poles_in_D(np.pi, ell, tau1, h2)
    got = [r.k1 for r in spec.records]
    err = max((min(float(cyl_dist(z, g)) for g in got) for z in oracle), default=0.0) if got else np.inf
    ok = len(got) == len(oracle) and err <= 1e-8
    rows = [{"re_k1": z.real, "im_k1": z.imag, "source": "oracle"} for z in oracle]
    rows += [{"re_k1": z.real, "im_k1": z.imag, "source": "pencil"} for z in got]
    path = write_csv(Path(args.out or cfg.out_dir) / "free_poles.csv", rows, ["re_k1", "im_k1", "source"])
    _verdict("free-poles", ok, f"{len(got)} records vs {len(oracle)} oracle poles, max error {err:.3e}, written to {path}")
    return 0 if ok else 1


def cmd_formres(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    lam = args.lam if args.lam is not None else -1.0
    free = cfg.medium.is_free
    L, tol = (8, 1e-10) if free else (16, 1e-8)
    basis = ModeBasis.symmetric(args.basis_n1 or 4, args.basis_n2 or 4)
    g = 2 * max(basis.N1, basis.N2)
    rng = np.random.default_rng(0)
    f = GridFunction(rng.standard_normal((g, g)) + 1j * rng.standard_normal((g, g)), g, g)
    res = strip_resolvent_check(0.7, lam, cfg.medium, basis, L, f)
    ok = res.rel_err <= tol
    _verdict("formres-check", ok, f"L={L}, rel_err {res.rel_err:.3e} (tolerance {tol:g})")
    return 0 if ok else 1


def _pipeline(args, until) -> int:
    cfg = _config(args)
    rep = run_pipeline(cfg, write=True, until=until)
    for s in rep.stages:
        if s.status != "skipped":
            _verdict(s.name, s.status == "passed", s.message)
    print(f"report: {rep.artifacts.get('report')}")
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stripres", description="Spectral checks for a periodic strip with a defect.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker cap for quadrature")
    common.add_argument("--ell-max", type=float, dest="ell_max", help="largest sweep ℓ in units of 2π")
    common.add_argument("--q-line", type=int, dest="q_line", help="line quadrature nodes")
    common.add_argument("--basis-n1", type=int, dest="basis_n1", help="n1 half-width (fixed bases) or margin (pipeline)")
    common.add_argument("--basis-n2", type=int, dest="basis_n2", help="n2 half-width (fixed bases) or margin (pipeline)")
    common.add_argument("--lambda", type=float, dest="lam", help="spectral parameter λ")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True
    ve = sub.add_parser("verify-estimates", parents=[common], help="symbol estimate sweeps")
    ve.add_argument("--samples", type=int, default=1_000_000)
    bd = sub.add_parser("band", parents=[common], help="band structure along a k-path")
    bd.add_argument("--k-path", dest="k_path", choices=sorted(K_PATHS), default="gamma-x-m-gamma")
    bd.add_argument("--bands", type=int, default=8)
    bd.add_argument("--points", type=int, default=16, help="samples per path segment")
    sub.add_parser("free-poles", parents=[common], help="pencil poles against the free oracle")
    sub.add_parser("formres-check", parents=[common], help="supercell strip-resolvent identity")
    sub.add_parser("track-poles", parents=[common], help="pipeline up to pole tracking")
    sub.add_parser("a-decay", parents=[common], help="pipeline up to the decay sweep")
    sub.add_parser("fredholm-scan", parents=[common], help="pipeline up to the Fredholm scan")
    sub.add_parser("run-all", parents=[common], help="full pipeline with report")
    return p


HANDLERS = {
    "verify-estimates": cmd_verify_estimates,
    "band": cmd_band,
    "free-poles": cmd_free_poles,
    "formres-check": cmd_formres,
    "track-poles": lambda a: _pipeline(a, "track"),
    "a-decay": lambda a: _pipeline(a, "a_decay"),
    "fredholm-scan": lambda a: _pipeline(a, "fredholm"),
    "run-all": lambda a: _pipeline(a, None),
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StripResError as exc:
        _verdict(args.command, False, f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line: apply, decompose, cz, scan, verify, calibrate-kappa."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from ..cz import cz_split
from ..field import indicator, read_choice, read_field, write_field
from ..geometry import DyadicCube, Tile, read_tiles, write_tiles
from ..maximal import choose_q, exceptional_set, inv
from ..operator import TileSystem, apply_Dr
from ..trees import certify_decomposition, decompose
from . import experiments as X
from . import suites as S
from .config import load_config
from .reports import csv_text, dumps


def _common(p: argparse.ArgumentParser, out_help: str = "output directory") -> None:
    p.add_argument("--seed", type=int, default=None, help="run seed (overrides the config)")
    p.add_argument("--config", default=None, help="key=value text file")
    p.add_argument("--dim", type=int, default=None, help="dimension of the desk defaults (1 or 2)")
    p.add_argument("--out", default="out", help=out_help)


def _cfg(args, **kw):
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.dim is not None:
        kw["dim"] = args.dim
    return load_config(args.config, **kw)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    return p


def cmd_apply(args) -> int:
    tiles = read_tiles(args.tiles)
    f = read_field(args.field)
    N = read_choice(args.choice)
    sysm = TileSystem(tiles, args.r, N, f.grid)
    Df = apply_Dr(sysm, f, oracle=args.oracle)
    write_field(args.out, Df)
    print(json.dumps({"tiles": len(sysm.D), "oracle": args.oracle, "max_abs": float(np.abs(Df.samples).max(initial=0.0)),
                      "out": str(args.out)}, sort_keys=True))
    return 0


def _decompose_inputs(args, cfg):
    if args.tiles and args.field and args.choice:
        P = read_tiles(args.tiles)
        f = read_field(args.field)
        N = read_choice(args.choice)
        E = read_field(args.E).samples.real > 0.5 if args.E else np.ones(f.grid.shape, bool)
        return P, f, E, N
    d, _ = X.draw(cfg, "decompose", 0, max_tiles=cfg.max_tiles or 200)
    grid = S.desk_grid(cfg)
    F, E, N = d.build(grid)
    om = exceptional_set(F, float(E.sum() * grid.cell_volume), cfg.p, cfg.kappa, cfg.family)
    P = [s for s in d.tiles if not om.contains_cube(s.time)]
    return P, F, E & ~om.cells, N


def cmd_decompose(args) -> int:
    cfg = _cfg(args)
    r = args.r or cfg.r
    gamma = args.gamma or cfg.gamma
    P, f, E, N = _decompose_inputs(args, cfg)
    dec = decompose(P, f, E, N, r, gamma, cfg.depth, certify=False)
    out = Path(args.out)
    fails = []
    if args.certify:
        certs = certify_decomposition(dec, P, f, E, N, gamma)
        fails = [c for c in certs if not c["ok"]]
        _write(out, "certificates.csv", csv_text(certs))
    _write(out, "decomposition.json", dec.dumps() + "\n")
    layers = [{"j": L.j, "floor": L.floor, "trees": len(L.trees), "tiles": len(L.tiles), "top_volume": L.top_volume()} for L in dec.layers]
    _write(out, "layers.csv", csv_text(layers))
    print(json.dumps({"tiles": len(P), "layers": len(dec.layers), "m0": dec.m0, "certified": bool(args.certify), "failures": len(fails)}, sort_keys=True))
    return 1 if fails else 0


def _parse_cube(text: str) -> DyadicCube:
    scale, idx = text.split(":")
    return DyadicCube(int(scale), tuple(int(v) for v in idx.split(",")))


def cmd_cz(args) -> int:
    cfg = _cfg(args)
    if args.field:
        F = read_field(args.field)
    else:
        rng = S.trial_rng(cfg.seed, "cz", 0)
        F, _ = S.random_F(rng, S.desk_grid(cfg), cfg, (2.0**-6, 2.0**-1))
    if args.top:
        top = _parse_cube(args.top)
    else:
        rng = S.trial_rng(cfg.seed, "cz-top", 0)
        k = max(cfg.scales)
        top = S.random_cubes(rng, cfg.dim, cfg.F_half, (k, k), 1)[0]
    q = args.q if args.q is not None else choose_q(cfg.p, F.measure())
    c = args.c if args.c is not None else cfg.kappa * 2.0 ** inv(q)
    mod = tuple(float(v) for v in args.modulation.split(",")) if args.modulation else None
    cz = cz_split(F, top, q, c, modulation=mod, family=cfg.family)
    out = Path(args.out)
    _write(out, "cz.json", dumps(cz.to_json()))
    _write(out, "cz_bounds.csv", csv_text(cz.bounds_table))
    print(json.dumps({"status": cz.status, "cubes": len(cz.cubes), "compliance_11p": cz.compliance_11p()}, sort_keys=True))
    return 0


def _run(names, cfg, out: Path) -> int:
    bad = 0
    for name in names:
        rep = X.EXPERIMENTS[name](cfg)
        rep.write(out)
        print(f"{name}: {'ok' if rep.ok else 'FAILED'} stable={rep.stable} {json.dumps(rep.checks, sort_keys=True)}")
        bad += not rep.ok
    return 1 if bad else 0


def _names(text: str, allowed: tuple) -> list:
    names = allowed if text == "all" else tuple(t.strip().upper() for t in text.split(","))
    for n in names:
        if n not in allowed:
            raise SystemExit(f"unknown experiment {n!r}; choose from {', '.join(allowed)}")
    return list(names)


def cmd_scan(args) -> int:
    cfg = _cfg(args, **({"refine": True} if args.refine else {}))
    return _run(_names(args.experiment, ("E2", "E6")), cfg, Path(args.out))


def cmd_verify(args) -> int:
    cfg = _cfg(args, **({"refine": True} if args.refine else {}))
    return _run(_names(args.experiment, ("E1", "E3", "E4", "E5", "BESSEL")), cfg, Path(args.out))


def cmd_calibrate(args) -> int:
    cfg = _cfg(args)
    rep = X.calibrate_kappa(cfg)
    out = Path(args.out)
    rep.write(out)
    _write(out, "kappa.conf", f"kappa={rep.constants['kappa']!r}\n")
    print(json.dumps({"kappa": rep.constants["kappa"], "omega_half": rep.checks["omega_half"]}, sort_keys=True))
    return 0 if rep.ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dyadsum", description="Dyadic sum operator experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("apply", help="evaluate D_r f for tiles, field and choice map files")
    p.add_argument("--tiles", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--choice", required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--oracle", action="store_true", help="direct summation instead of the fast path")
    _common(p, "output field file")
    p.set_defaults(fn=cmd_apply)

    p = sub.add_parser("decompose", help="layered tree selection (random suite member unless files are given)")
    p.add_argument("--tiles")
    p.add_argument("--field")
    p.add_argument("--choice")
    p.add_argument("--E", help="field file whose nonzero cells form E'")
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--gamma", type=int, default=None)
    p.add_argument("--certify", action="store_true", help="re-verify every certificate from scratch")
    _common(p)
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("cz", help="Calderon-Zygmund split of chi_{F cap 3I_t}")
    p.add_argument("--field", help="indicator field of F")
    p.add_argument("--top", help="tree top cube as scale:i[,j]")
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--modulation", default=None, help="comma-separated frequency")
    _common(p)
    p.set_defaults(fn=cmd_cz)

    for name, fn, allowed, h in (("scan", cmd_scan, "E2,E6", "lambda scans"), ("verify", cmd_verify, "E1,E3,E4,E5,BESSEL", "inequality suites")):
        p = sub.add_parser(name, help=f"{h} ({allowed})")
        p.add_argument("--experiment", default="all", help=f"comma list from {allowed}, or all")
        p.add_argument("--refine", action="store_true", help="also run on the doubled grid and flag stability")
        _common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("calibrate-kappa", help="least kappa with |Omega| <= |E|/2 on the suite")
    _common(p)
    p.set_defaults(fn=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

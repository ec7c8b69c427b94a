"""Write a tile file, an indicator field and a choice map for `dyadsum apply`."""

import argparse
from pathlib import Path

from dyadsum.field import indicator, write_choice, write_field
from dyadsum.geometry import write_tiles
from dyadsum.harness import suites as S
from dyadsum.harness.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", default=None)
    ap.add_argument("--max-tiles", type=int, default=500)
    ap.add_argument("--out", default="inputs")
    args = ap.parse_args()
    cfg = load_config(args.config, seed=args.seed)
    rng = S.trial_rng(cfg.seed, "inputs", 0)
    grid = S.desk_grid(cfg)
    F, cubes = S.random_F(rng, grid, cfg)
    N = S.random_choice(rng, grid, cfg)
    tiles = S.subsample(rng, S.window_tiles(cfg), args.max_tiles)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tiles(out / "tiles.json", tiles)
    write_field(out / "F.field", F)
    write_choice(out / "N.choice", N)
    print(f"{len(tiles)} tiles, |F| = {F.measure()}, grid {grid.points_per_axis}^{grid.dim} -> {out}")


if __name__ == "__main__":
    main()

"""Maximal dyadic sum operators, their tile functionals and decompositions."""

from .field import ChoiceMap, Grid, SampledField, indicator, inner, lp_norm
from .geometry import DyadicCube, SemiTile, Tile, Tree, is_rtree, semitile, tile_leq
from .packets import bump_hat, synthesize_mother, wave_packet

__version__ = "0.1.0"

__all__ = [
    "ChoiceMap",
    "DyadicCube",
    "Grid",
    "SampledField",
    "SemiTile",
    "Tile",
    "Tree",
    "bump_hat",
    "indicator",
    "inner",
    "is_rtree",
    "lp_norm",
    "semitile",
    "synthesize_mother",
    "tile_leq",
    "wave_packet",
]

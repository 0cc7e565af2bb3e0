"""Seen/unseen split fixtures for three public aerial detection benchmarks.

Only the class lists ship here; images, annotations, and loaders for the
real datasets are out of scope.  The splits are useful as realistic catalog
shapes for tests and as starting points for embedding files produced
elsewhere.
"""

from __future__ import annotations

from .catalog import ClassSplit

__all__ = ["DIOR_SPLIT", "DOTA_SPLIT", "XVIEW_SPLIT", "BENCHMARK_SPLITS"]

DIOR_SPLIT = ClassSplit(
    seen=(
        "airplane",
        "baseballfield",
        "bridge",
        "chimney",
        "dam",
        "Expressway-Service-area",
        "Expressway-toll-station",
        "golffield",
        "harbor",
        "overpass",
        "ship",
        "stadium",
        "storagetank",
        "tenniscourt",
        "trainstation",
        "vehicle",
    ),
    unseen=(
        "airport",
        "basketballcourt",
        "groundtrackfield",
        "windmill",
    ),
)

DOTA_SPLIT = ClassSplit(
    seen=(
        "plane",
        "ship",
        "storage-tank",
        "baseball-diamond",
        "basketball-court",
        "ground-track-field",
        "harbor",
        "bridge",
        "large-vehicle",
        "small-vehicle",
        "roundabout",
    ),
    unseen=(
        "tennis-court",
        "helicopter",
        "soccer-ball-field",
        "swimming-pool",
    ),
)

XVIEW_SPLIT = ClassSplit(
    seen=(
        "fixed wing aircraft",
        "small aircraft",
        "passenger plane or cargo plane",
        "passenger vehicle",
        "small car",
        "utility truck",
        "truck",
        "cargo truck",
        "truck tractor",
        "trailer",
        "truck tractor with flatbed trailer",
        "truck tractor with liquid tank",
        "crane truck",
        "railway vehicle",
        "passenger car",
        "cargo car or container car",
        "flat car",
        "tank car",
        "locomotive",
        "sailboat",
        "tugboat",
        "fishing vessel",
        "ferry",
        "yacht",
        "container ship",
        "oil tanker",
        "engineering vehicle",
        "tower crane",
        "container crane",
        "straddle carrier",
        "dump truck",
        "haul truck",
        "front loader or bulldozer",
        "cement mixer",
        "ground grader",
        "hut or tent",
        "shed",
        "building",
        "aircraft hangar",
        "damaged building",
        "facility",
        "construction site",
        "vehicle lot",
        "helipad",
        "storage tank",
        "shipping container",
        "pylon",
        "tower",
    ),
    unseen=(
        "helicopter",
        "bus",
        "pickup truck",
        "truck tractor with box trailer",
        "maritime vessel",
        "motorboat",
        "barge",
        "reach stacker",
        "mobile crane",
        "scraper or tractor",
        "excavator",
        "shipping container lot",
    ),
)

BENCHMARK_SPLITS = {
    "dior": DIOR_SPLIT,
    "dota": DOTA_SPLIT,
    "xview": XVIEW_SPLIT,
}

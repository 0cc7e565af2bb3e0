"""Region samples and ground-truth boxes, with their tab-separated files.

Boxes are (x1, y1, x2, y2) reals in an abstract 800x800 coordinate space.
A region is a proposal box with a pooled feature vector and a label; the
label ``__bg__`` marks background regions.

Regions file::

    descreg-regions v1
    dim <D>
    <image_id><TAB><x1> <y1> <x2> <y2><TAB><label><TAB><f1> ... <fD>

Ground-truth file::

    descreg-gt v1
    <image_id><TAB><x1> <y1> <x2> <y2><TAB><class>
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .textio import format_vector, parse_vector, require_header, split_lines

__all__ = [
    "BACKGROUND_LABEL",
    "Box",
    "RegionSample",
    "GroundTruthBox",
    "parse_regions",
    "serialize_regions",
    "load_regions",
    "save_regions",
    "parse_ground_truth",
    "serialize_ground_truth",
    "load_ground_truth",
    "save_ground_truth",
]

BACKGROUND_LABEL = "__bg__"

REGIONS_HEADER = "descreg-regions v1"
GT_HEADER = "descreg-gt v1"

Box = tuple[float, float, float, float]


def _parse_box(text: str, lineno: int) -> Box:
    values = parse_vector(text, lineno, expected_dim=4)
    x1, y1, x2, y2 = (float(v) for v in values)
    if not (x1 <= x2 and y1 <= y2):
        raise FormatError(f"line {lineno}: box corners are not ordered")
    return (x1, y1, x2, y2)


@dataclass
class RegionSample:
    image_id: str
    box: Box
    label: str
    feature: np.ndarray

    def __post_init__(self) -> None:
        self.feature = np.asarray(self.feature, dtype=float)
        if self.feature.ndim != 1:
            raise ValueError("region feature must be a 1-d vector")

    @property
    def is_background(self) -> bool:
        return self.label == BACKGROUND_LABEL


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: str
    box: Box
    label: str


def parse_regions(text: str) -> list[RegionSample]:
    lines = split_lines(text)
    require_header(lines, REGIONS_HEADER)
    if len(lines) < 2:
        raise FormatError("line 2: missing 'dim <D>' line")
    parts = lines[1].split()
    if len(parts) != 2 or parts[0] != "dim" or not parts[1].isdigit():
        raise FormatError(f"line 2: expected 'dim <D>', got {lines[1]!r}")
    dim = int(parts[1])
    regions: list[RegionSample] = []
    for offset, line in enumerate(lines[2:], start=3):
        fields = line.split("\t")
        if len(fields) != 4:
            raise FormatError(f"line {offset}: expected 4 tab-separated fields")
        image_id, box_text, label, payload = fields
        if image_id == "" or label == "":
            raise FormatError(f"line {offset}: empty image id or label")
        regions.append(
            RegionSample(
                image_id=image_id,
                box=_parse_box(box_text, offset),
                label=label,
                feature=parse_vector(payload, offset, expected_dim=dim),
            )
        )
    return regions


def serialize_regions(regions: list[RegionSample]) -> str:
    if not regions:
        raise ValueError("cannot serialize an empty region list")
    dim = regions[0].feature.shape[0]
    lines = [REGIONS_HEADER, f"dim {dim}"]
    for region in regions:
        if region.feature.shape[0] != dim:
            raise ValueError("regions carry mixed feature dimensions")
        lines.append(
            "\t".join(
                (
                    region.image_id,
                    format_vector(region.box),
                    region.label,
                    format_vector(region.feature),
                )
            )
        )
    return "\n".join(lines) + "\n"


def parse_ground_truth(text: str) -> list[GroundTruthBox]:
    lines = split_lines(text)
    require_header(lines, GT_HEADER)
    boxes: list[GroundTruthBox] = []
    for offset, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError(f"line {offset}: expected 3 tab-separated fields")
        image_id, box_text, label = fields
        if image_id == "" or label == "":
            raise FormatError(f"line {offset}: empty image id or class")
        boxes.append(GroundTruthBox(image_id, _parse_box(box_text, offset), label))
    return boxes


def serialize_ground_truth(boxes: list[GroundTruthBox]) -> str:
    lines = [GT_HEADER]
    for gt in boxes:
        lines.append("\t".join((gt.image_id, format_vector(gt.box), gt.label)))
    return "\n".join(lines) + "\n"


def load_regions(path) -> list[RegionSample]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_regions(fh.read())


def save_regions(regions: list[RegionSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_regions(regions))


def load_ground_truth(path) -> list[GroundTruthBox]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_ground_truth(fh.read())


def save_ground_truth(boxes: list[GroundTruthBox], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_ground_truth(boxes))

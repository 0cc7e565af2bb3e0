"""Class catalogs: names, seen/unseen split, and the two embedding files.

A catalog binds three things together in one canonical order:

* a split of class names into seen and unseen groups,
* semantic embeddings (one vector per class),
* description embeddings (one vector per class).

The canonical class order is seen classes first, in split order, then unseen
classes.  Everything downstream (similarity rows, projection rows, score
columns) indexes classes by this order, so it is fixed here and nowhere else.

Two text formats are owned by this module.

Embeddings file::

    descreg-embeddings v1
    dim <D>
    <name><TAB><f1> <f2> ... <fD>

Split file::

    descreg-split v1
    seen <name>
    unseen <name>

Names may contain spaces: embedding rows are tab-separated, and split rows
treat everything after the first space as the name.  Vectors are base-10
reals.  Embedding vectors are stored as given; no normalization happens at
ingestion.  ``serialize_*`` emit the canonical form and round-trip canonical
files byte for byte.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .textio import format_vector, parse_vector, require_header, split_lines

__all__ = [
    "EmbeddingSet",
    "ClassSplit",
    "ClassCatalog",
    "parse_embeddings",
    "serialize_embeddings",
    "load_embeddings",
    "save_embeddings",
    "parse_split",
    "serialize_split",
    "load_split",
    "save_split",
    "build_catalog",
]

log = logging.getLogger(__name__)

EMBEDDINGS_HEADER = "descreg-embeddings v1"
SPLIT_HEADER = "descreg-split v1"


@dataclass
class EmbeddingSet:
    """An ordered set of named vectors sharing one dimensionality."""

    names: list[str]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d array, one row per name")
        if len(self.names) != self.vectors.shape[0]:
            raise ValueError(
                f"{len(self.names)} names but {self.vectors.shape[0]} vector rows"
            )
        if self.vectors.shape[1] < 1:
            raise ValueError("embedding dimension must be at least 1")
        seen: set[str] = set()
        for name in self.names:
            if name in seen:
                raise ValueError(f"duplicate name {name!r}")
            seen.add(name)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.names)

    def entries(self):
        """Iterate (name, vector) pairs in file order."""
        for name, row in zip(self.names, self.vectors):
            yield name, row

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown class {name!r}") from None

    def vector(self, name: str) -> np.ndarray:
        return self.vectors[self.index(name)]

    def reordered(self, names: list[str]) -> "EmbeddingSet":
        """A copy restricted to ``names``, in that order."""
        rows = [self.index(n) for n in names]
        return EmbeddingSet(list(names), self.vectors[rows].copy())


@dataclass(frozen=True)
class ClassSplit:
    """Seen and unseen class names; their union fixes the catalog order."""

    seen: tuple[str, ...]
    unseen: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "seen", tuple(self.seen))
        object.__setattr__(self, "unseen", tuple(self.unseen))
        all_names = self.seen + self.unseen
        if len(set(all_names)) != len(all_names):
            overlap = sorted(
                {n for n in self.seen if n in set(self.unseen)}
                | {n for n in all_names if all_names.count(n) > 1}
            )
            raise ValueError(f"split names must be unique and disjoint: {overlap}")

    @property
    def classes(self) -> tuple[str, ...]:
        return self.seen + self.unseen

    @property
    def n_seen(self) -> int:
        return len(self.seen)

    @property
    def n_unseen(self) -> int:
        return len(self.unseen)

    @property
    def n_classes(self) -> int:
        return len(self.seen) + len(self.unseen)

    def is_seen(self, name: str) -> bool:
        return name in set(self.seen)


@dataclass
class ClassCatalog:
    """Split plus both embedding sets, aligned to the canonical class order."""

    split: ClassSplit
    semantic: EmbeddingSet
    descriptions: EmbeddingSet
    class_names: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        self.class_names = self.split.classes
        for label, es in (("semantic", self.semantic), ("description", self.descriptions)):
            if tuple(es.names) != self.class_names:
                raise ValueError(
                    f"{label} embeddings are not aligned to the split order; "
                    "use build_catalog to construct catalogs"
                )

    @property
    def n_classes(self) -> int:
        return self.split.n_classes

    @property
    def n_seen(self) -> int:
        return self.split.n_seen

    @property
    def n_unseen(self) -> int:
        return self.split.n_unseen

    def source_matrix(self, source: str) -> np.ndarray:
        """Embedding matrix for a projection input source."""
        if source == "semantic":
            return self.semantic.vectors
        if source == "description":
            return self.descriptions.vectors
        raise ValueError(f"unknown embedding source {source!r}")


def parse_embeddings(text: str) -> EmbeddingSet:
    """Parse an embeddings file.  Errors name the offending line."""
    lines = split_lines(text)
    require_header(lines, EMBEDDINGS_HEADER)
    if len(lines) < 2:
        raise FormatError("line 2: missing 'dim <D>' line")
    dim_parts = lines[1].split()
    if len(dim_parts) != 2 or dim_parts[0] != "dim" or not dim_parts[1].isdigit():
        raise FormatError(f"line 2: expected 'dim <D>', got {lines[1]!r}")
    dim = int(dim_parts[1])
    if dim < 1:
        raise FormatError("line 2: dimension must be at least 1")

    names: list[str] = []
    rows: list[np.ndarray] = []
    taken: set[str] = set()
    for offset, line in enumerate(lines[2:], start=3):
        if line == "":
            raise FormatError(f"line {offset}: blank line inside embedding rows")
        if "\t" not in line:
            raise FormatError(f"line {offset}: expected '<name><TAB><values>'")
        name, _, payload = line.partition("\t")
        if name == "":
            raise FormatError(f"line {offset}: empty class name")
        if name in taken:
            raise FormatError(f"line {offset}: duplicate class {name!r}")
        taken.add(name)
        names.append(name)
        rows.append(parse_vector(payload, offset, expected_dim=dim))
    if not names:
        raise FormatError("line 3: no embedding rows")
    return EmbeddingSet(names, np.vstack(rows))


def serialize_embeddings(embeddings: EmbeddingSet) -> str:
    lines = [EMBEDDINGS_HEADER, f"dim {embeddings.dim}"]
    for name, row in embeddings.entries():
        lines.append(f"{name}\t{format_vector(row)}")
    return "\n".join(lines) + "\n"


def parse_split(text: str) -> ClassSplit:
    lines = split_lines(text)
    require_header(lines, SPLIT_HEADER)
    seen: list[str] = []
    unseen: list[str] = []
    taken: set[str] = set()
    for offset, line in enumerate(lines[1:], start=2):
        if line == "":
            raise FormatError(f"line {offset}: blank line inside split rows")
        role, _, name = line.partition(" ")
        if role not in ("seen", "unseen") or name == "":
            raise FormatError(f"line {offset}: expected 'seen <name>' or 'unseen <name>'")
        if name in taken:
            raise FormatError(f"line {offset}: duplicate class {name!r}")
        taken.add(name)
        (seen if role == "seen" else unseen).append(name)
    if not seen and not unseen:
        raise FormatError("line 2: split file lists no classes")
    return ClassSplit(tuple(seen), tuple(unseen))


def serialize_split(split: ClassSplit) -> str:
    lines = [SPLIT_HEADER]
    lines.extend(f"seen {name}" for name in split.seen)
    lines.extend(f"unseen {name}" for name in split.unseen)
    return "\n".join(lines) + "\n"


def load_embeddings(path) -> EmbeddingSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_embeddings(fh.read())


def save_embeddings(embeddings: EmbeddingSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_embeddings(embeddings))


def load_split(path) -> ClassSplit:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_split(fh.read())


def save_split(split: ClassSplit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_split(split))


def build_catalog(
    semantic: EmbeddingSet, descriptions: EmbeddingSet, split: ClassSplit
) -> ClassCatalog:
    """Align both embedding sets to the split order and bundle them.

    Every split class must appear in both embedding sets; embeddings for
    classes outside the split are dropped with a warning.
    """
    order = list(split.classes)
    for label, es in (("semantic", semantic), ("description", descriptions)):
        missing = [n for n in order if n not in set(es.names)]
        if missing:
            raise ValueError(f"{label} embeddings missing split classes: {missing}")
        extras = [n for n in es.names if n not in set(order)]
        if extras:
            log.warning("dropping %d %s embedding(s) outside the split: %s",
                        len(extras), label, extras)
    return ClassCatalog(split, semantic.reordered(order), descriptions.reordered(order))

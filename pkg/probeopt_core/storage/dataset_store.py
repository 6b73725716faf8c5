"""Labeled PBM datasets: binary record stream, CSV export and split filtering.

File layout: ASCII header lines ``key=value`` terminated by ``END_HEADER``,
then packed little-endian records with no padding. Every record holds, in
order: location index (uint32), combination index (uint16), split code
(uint8), sum rate (float64) and ``dim`` PBM values (float64), so a record is
``15 + 8 * dim`` bytes. The header repeats this as ``byte_order=little`` and
``record_layout=...``.
"""

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Union

import numpy as np

from probeopt_core.errors import DatasetFormatError, OutputPathError, ProvenanceError, ShapeError

logger = logging.getLogger(__name__)

MAGIC_LINE = "PROBEOPT-DATASET 1"
END_HEADER = "END_HEADER"
BYTE_ORDER = "little"
RECORD_FIELDS = (("location", "<u4"), ("combo", "<u2"), ("split", "<u1"), ("rate", "<f8"))


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"

    @property
    def code(self) -> int:
        return _SPLIT_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "Split":
        return _SPLITS_BY_CODE[int(code)]


_SPLIT_CODES = {Split.TRAIN: 0, Split.VALIDATION: 1, Split.TEST: 2}
_SPLITS_BY_CODE = {code: split for split, code in _SPLIT_CODES.items()}


def record_dtype(dim: int) -> np.dtype:
    return np.dtype([*RECORD_FIELDS, ("pbm", "<f8", (dim,))])


def record_layout(dim: int) -> str:
    """Header form of the record fields, e.g. ``location:<u4,...,pbm:<f8x12``."""
    fields = [f"{name}:{code}" for name, code in RECORD_FIELDS]
    return ",".join(fields + [f"pbm:<f8x{dim}"])


def ensure_not_test(splits: Optional[Iterable[Union[Split, int, str]]], stage: str) -> None:
    """
    Reject test-split samples on a training path.

    Raises:
        ProvenanceError: If any sample is tagged as test
    """
    if splits is None:
        return
    for tag in splits:
        split = Split.from_code(tag) if isinstance(tag, (int, np.integer)) else Split(tag)
        if split == Split.TEST:
            raise ProvenanceError(f"{stage} received test-split samples")


@dataclass
class LabeledDataset:
    """PBM vectors with their sum-rate labels and provenance."""
    pbm: np.ndarray  # (n, d)
    rate: np.ndarray  # (n,)
    combo: np.ndarray  # (n,) 1-based
    location: np.ndarray  # (n,)
    split: np.ndarray  # (n,) split codes
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.pbm = np.asarray(self.pbm, dtype=float)
        if self.pbm.ndim != 2:
            raise ShapeError(f"pbm must be (n, d), got {self.pbm.shape}")
        n = self.pbm.shape[0]
        self.rate = np.asarray(self.rate, dtype=float).reshape(n)
        self.combo = np.asarray(self.combo, dtype=int).reshape(n)
        self.location = np.asarray(self.location, dtype=int).reshape(n)
        self.split = np.asarray(self.split, dtype=int).reshape(n)

    def __len__(self) -> int:
        return self.pbm.shape[0]

    @property
    def dim(self) -> int:
        return self.pbm.shape[1]

    @classmethod
    def empty(cls, dim: int, metadata: Optional[Dict[str, Any]] = None) -> "LabeledDataset":
        return cls(np.zeros((0, dim)), [], [], [], [], dict(metadata or {}))

    @classmethod
    def from_records(cls, records: Sequence[Dict[str, Any]], dim: int, metadata: Dict[str, Any] = None):
        """Build from dicts with keys pbm, rate, combo, location, split."""
        if not records:
            return cls.empty(dim, metadata)
        return cls(
            pbm=np.vstack([r["pbm"] for r in records]),
            rate=[r["rate"] for r in records],
            combo=[r["combo"] for r in records],
            location=[r["location"] for r in records],
            split=[Split(r["split"]).code for r in records],
            metadata=dict(metadata or {}),
        )

    def _subset(self, mask: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(
            self.pbm[mask], self.rate[mask], self.combo[mask], self.location[mask], self.split[mask], dict(self.metadata)
        )

    def filter(self, split: Optional[Split] = None, combos: Optional[Iterable[int]] = None) -> "LabeledDataset":
        mask = np.ones(len(self), dtype=bool)
        if split is not None:
            mask &= self.split == Split(split).code
        if combos is not None:
            mask &= np.isin(self.combo, list(combos))
        return self._subset(mask)

    def limit_per_combo(self, limit: int) -> "LabeledDataset":
        """Keep the first ``limit`` samples of every combination in location order; 0 keeps all."""
        if limit <= 0:
            return self
        order = np.lexsort((self.location, self.combo))
        keep = np.zeros(len(self), dtype=bool)
        counts: Dict[int, int] = {}
        for index in order:
            combo = int(self.combo[index])
            if counts.get(combo, 0) < limit:
                keep[index] = True
                counts[combo] = counts.get(combo, 0) + 1
        return self._subset(keep)

    def by_combo(self) -> Dict[int, "LabeledDataset"]:
        return {int(c): self._subset(self.combo == c) for c in np.unique(self.combo)}

    def splits(self) -> Sequence[Split]:
        return [Split.from_code(code) for code in self.split]

    def save(self, path: Union[str, Path]) -> None:
        """
        Write the binary record stream.

        Raises:
            OutputPathError: If the file cannot be written
        """
        records = np.zeros(len(self), dtype=record_dtype(self.dim))
        records["location"] = self.location
        records["combo"] = self.combo
        records["split"] = self.split
        records["rate"] = self.rate
        records["pbm"] = self.pbm
        header = [
            MAGIC_LINE,
            f"dim={self.dim}",
            f"count={len(self)}",
            f"byte_order={BYTE_ORDER}",
            f"record_layout={record_layout(self.dim)}",
        ]
        header += [f"{key}={self.metadata[key]}" for key in sorted(self.metadata)]
        header.append(END_HEADER)
        try:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("wb") as f:
                f.write(("\n".join(header) + "\n").encode("ascii"))
                f.write(records.tobytes())
        except OSError as e:
            raise OutputPathError(f"Failed to write dataset {path}: {e}")
        logger.info("Wrote dataset", extra={"fields": {"path": str(path), "samples": len(self)}})

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LabeledDataset":
        """
        Read a dataset written by ``save``.

        Metadata values come back as strings.

        Raises:
            DatasetFormatError: If the header or payload is malformed
        """
        data = Path(path).read_bytes()
        marker = (END_HEADER + "\n").encode("ascii")
        end = data.find(marker)
        if end < 0:
            raise DatasetFormatError(f"{path}: missing {END_HEADER}")
        lines = data[:end].decode("ascii").splitlines()
        if not lines or lines[0] != MAGIC_LINE:
            raise DatasetFormatError(f"{path}: not a dataset file")
        header = dict(line.split("=", 1) for line in lines[1:] if "=" in line)
        try:
            dim, count = int(header.pop("dim")), int(header.pop("count"))
        except (KeyError, ValueError):
            raise DatasetFormatError(f"{path}: header lacks dim/count")
        byte_order = header.pop("byte_order", BYTE_ORDER)
        layout = header.pop("record_layout", record_layout(dim))
        if byte_order != BYTE_ORDER or layout != record_layout(dim):
            raise DatasetFormatError(f"{path}: unsupported record format {byte_order} {layout}")
        payload = data[end + len(marker) :]
        dtype = record_dtype(dim)
        if len(payload) != count * dtype.itemsize:
            raise DatasetFormatError(
                f"{path}: expected {count} records of {dtype.itemsize} bytes, found {len(payload)} bytes"
            )
        records = np.frombuffer(payload, dtype=dtype)
        return cls(
            pbm=records["pbm"].astype(float).reshape(count, dim),
            rate=records["rate"].astype(float),
            combo=records["combo"].astype(int),
            location=records["location"].astype(int),
            split=records["split"].astype(int),
            metadata=header,
        )

    def to_csv(self, path: Union[str, Path]) -> None:
        """One row per sample: location, combo, split, rate, pbm_0..pbm_{d-1}."""
        try:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", newline="") as f:
                writer = csv.writer(f)
                comment = " ".join(f"{k}={self.metadata[k]}" for k in sorted(self.metadata))
                f.write(f"# {comment}\n")
                writer.writerow(["location", "combo", "split", "rate"] + [f"pbm_{j}" for j in range(self.dim)])
                for i in range(len(self)):
                    writer.writerow(
                        [int(self.location[i]), int(self.combo[i]), Split.from_code(self.split[i]).value, repr(float(self.rate[i]))]
                        + [repr(float(v)) for v in self.pbm[i]]
                    )
        except OSError as e:
            raise OutputPathError(f"Failed to write dataset CSV {path}: {e}")

"""Dataset ingestion.

On-disk layout mirrors the usual industrial-inspection convention of one
directory per product category and one per anomaly type, with paired
background/mask files:

    root/<category>/<anomaly_type>/<stem>_bg.aft    (TensorFile, C x H x W)
    root/<category>/<anomaly_type>/<stem>_mask.pgm  (binary PGM)

Every mask must pair with exactly one background image of the same spatial
size.
"""
from dataclasses import dataclass
from pathlib import Path

from .tensorfile import TensorFormatError, load_mask, load_tensor


@dataclass(frozen=True)
class DatasetEntry:
    category: str
    anomaly_type: str
    background: Path
    mask: Path


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    entries: tuple

    def __len__(self):
        return len(self.entries)

    def load_pair(self, entry: DatasetEntry):
        x0 = load_tensor(entry.background).astype(float)
        if x0.ndim != 3:
            raise TensorFormatError(
                f"{entry.background}: background must be C x H x W, got {x0.shape}")
        M = load_mask(entry.mask)
        if x0.shape[-2:] != M.shape:
            raise TensorFormatError(
                f"{entry.background}: image {x0.shape[-2:]} vs mask {M.shape}")
        return x0, M

    def pairs(self):
        return [self.load_pair(e) for e in self.entries]


def scan_dataset(root) -> DatasetIndex:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    entries = []
    for bg in sorted(root.glob("*/*/*_bg.aft")):
        stem = bg.name[:-len("_bg.aft")]
        mask = bg.with_name(f"{stem}_mask.pgm")
        if not mask.exists():
            raise TensorFormatError(f"{bg}: no matching mask {mask.name}")
        entries.append(DatasetEntry(category=bg.parent.parent.name,
                                    anomaly_type=bg.parent.name,
                                    background=bg, mask=mask))
    if not entries:
        raise TensorFormatError(f"no *_bg.aft/*_mask.pgm pairs under {root}")
    index = DatasetIndex(root=root, entries=tuple(entries))
    for e in index.entries:
        index.load_pair(e)  # validates pairing and shapes up front
    return index

"""Report CSVs stamped with the config hash and seed, plus a plain-text summary."""

import csv
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

from probeopt_core.errors import OutputPathError

PathLike = Union[str, Path]


def write_report_csv(
    path: PathLike, columns: Sequence[str], rows: Sequence[Sequence[Any]], config_hash: str, seed: int
) -> Path:
    """
    Write a CSV whose first line is ``# config_hash=<h> seed=<s>``.

    Raises:
        OutputPathError: If the file cannot be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            f.write(f"# config_hash={config_hash} seed={seed}\n")
            writer = csv.writer(f)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    except OSError as e:
        raise OutputPathError(f"Failed to write report {path}: {e}")
    return path


def read_report_csv(path: PathLike) -> Tuple[Dict[str, str], List[Dict[str, str]]]:
    """
    Read a report CSV.

    Returns:
        tuple: (stamp, rows) where stamp holds the comment-line key/values
    """
    stamp: Dict[str, str] = {}
    with Path(path).open("r", newline="") as f:
        lines = []
        for line in f:
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, value = token.split("=", 1)
                        stamp[key] = value
            else:
                lines.append(line)
    return stamp, list(csv.DictReader(lines))


def write_summary(path: PathLike, title: str, sections: Dict[str, Dict[str, Any]]) -> Path:
    """Plain-text summary: a title, then one ``key: value`` block per section."""
    path = Path(path)
    out = [title, "=" * len(title), ""]
    for name, values in sections.items():
        out.append(f"[{name}]")
        out.extend(f"  {key}: {value}" for key, value in values.items())
        out.append("")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(out), encoding="utf-8")
    except OSError as e:
        raise OutputPathError(f"Failed to write summary {path}: {e}")
    return path

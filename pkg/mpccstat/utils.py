from __future__ import annotations

import hashlib
import io
import logging
import typing as t
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .grid import Grid, GridFunction

# Set up logging
logger = logging.getLogger("mpccstat")

# Directory constants
ROOT_DIR = Path(__file__).parent
PROJECT_DIR = ROOT_DIR.parent
DEFAULT_CONFIG_FILE = PROJECT_DIR / "mpccstat.toml"

# 17 significant digits round-trip every IEEE-754 double
FLOAT_FORMAT = "%.17g"


def format_float(value: float) -> str:
    return FLOAT_FORMAT % float(value)


def grid_function_to_csv(u: GridFunction) -> str:
    """
    Serialize a grid function as `midpoint,value` CSV.

    Args:
        u: The function to write

    Returns:
        CSV text with a header row and one row per cell
    """
    buffer = io.StringIO()
    np.savetxt(
        buffer,
        np.column_stack([u.grid.midpoints, u.values]),
        fmt=FLOAT_FORMAT,
        delimiter=",",
        header="midpoint,value",
        comments="",
    )
    return buffer.getvalue()


def write_grid_function(path: Path, u: GridFunction) -> None:
    path.write_text(grid_function_to_csv(u), encoding="utf-8")
    logger.debug(f"Wrote {u.grid.n} cells to {path}")


def read_grid_function(path: Path, grid: Grid) -> GridFunction:
    """
    Read a `midpoint,value` CSV onto an existing grid.

    Args:
        path: CSV file
        grid: Grid the values are meant for; midpoints must match

    Returns:
        The grid function
    """
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise InvalidArgument(f"cannot read grid function from {path}: {e}") from e

    if table.shape != (grid.n, 2):
        raise InvalidArgument(
            f"{path} has {table.shape[0]} rows of {table.shape[1]} columns, "
            f"expected {grid.n} rows of 2"
        )
    if not np.allclose(table[:, 0], grid.midpoints, rtol=0.0, atol=1e-9 * grid.total_measure):
        raise InvalidArgument(f"midpoints in {path} do not match the grid")
    return GridFunction(grid, table[:, 1])


def write_table(path: Path | None, header: t.Sequence[str], rows: t.Iterable[t.Sequence[t.Any]]) -> str:
    """
    Write a small CSV table; floats use the round-trip format.

    Returns:
        The CSV text (also written to `path` when given)
    """
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for value in row:
            if isinstance(value, (float, np.floating)):
                cells.append(format_float(value))
            else:
                cells.append(str(value))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"

    if path is not None:
        path.write_text(text, encoding="utf-8")
        logger.info(f"Wrote table with {len(lines) - 1} rows to {path}")
    return text


def hash_inputs(paths: t.Iterable[Path | None]) -> str:
    """sha256 over the bytes of every given input file, in order."""
    digest = hashlib.sha256()
    for path in paths:
        if path is None:
            continue
        digest.update(path.name.encode("utf-8"))
        digest.update(b"\0")
        digest.update(path.read_bytes())
    return digest.hexdigest()


def parse_index_list(text: str) -> list[int]:
    """Parse "0,3,4" (or an empty string) into cell indices."""
    text = text.strip()
    if not text:
        return []
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise InvalidArgument(f"invalid cell index list '{text}'") from e

"""
Atomic file writes: data goes to `<path>.tmp` and is moved into place only
after the writer finishes, so a failed command leaves no partial output.
"""
from __future__ import annotations

import json
import os
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any, Iterator, Union

from dpl.core.errors import FormatError

PathLike = Union[str, os.PathLike]


@contextmanager
def atomic_open(path: PathLike, mode: str = "w", **kwargs) -> Iterator[IO]:
    """Open `<path>.tmp` for writing and replace `path` on success."""
    target = Path(path)
    temp_file = target.with_name(target.name + ".tmp")
    if "b" not in mode:
        kwargs.setdefault("encoding", "utf-8")
        kwargs.setdefault("newline", "")
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(temp_file, mode, **kwargs) as handle:
            yield handle
        os.replace(temp_file, target)
    except OSError as e:
        if temp_file.exists():
            temp_file.unlink()
        raise FormatError(f"Cannot write file: {e}", path=str(target)) from e
    except BaseException:
        if temp_file.exists():
            temp_file.unlink()
        raise


def save_json_file(path: PathLike, data: Any) -> None:
    """Save JSON atomically with stable key order and a trailing newline."""
    with atomic_open(path, "w") as f:
        f.write(json.dumps(data, indent=2, sort_keys=True))
        f.write("\n")


def load_json_file(path: PathLike, error_cls=FormatError) -> Any:
    """Load a JSON document, mapping I/O and syntax errors to `error_cls`."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise error_cls("File not found", path=str(path)) from e
    except json.JSONDecodeError as e:
        raise error_cls(f"Invalid JSON (line {e.lineno}): {e.msg}", path=str(path)) from e
    except (OSError, UnicodeDecodeError) as e:
        raise error_cls(f"Cannot read file: {e}", path=str(path)) from e

"""Small file helpers: atomic writes and versioned JSON documents."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from .errors import InputError, ParseError, SchemaError

FORMAT_VERSION = 1


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory.

    The rename is atomic on POSIX, so readers never observe a partial file.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def read_json_document(path: str | Path, kind: str) -> dict:
    """Load a JSON object from ``path``, mapping failures to package errors."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{kind} file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return doc


def check_format_version(doc: dict, source: str) -> None:
    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise SchemaError(
            f"{source}: unsupported format_version {version!r} (supported: {FORMAT_VERSION})"
        )


def dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"

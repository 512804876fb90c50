"""Artifact files: one JSON header line, then a body whose SHA-256 the header pins."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import __version__

HEADER_PREFIX = "# "


class IntegrityError(ValueError):
    """File body does not match the digest in its header."""


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def render_artifact(kind: str, meta: dict[str, Any], body: str) -> str:
    header = {"tool": "fpplab", "version": __version__, "kind": kind,
              "body_sha256": sha256_text(body), **meta}
    return HEADER_PREFIX + canonical_json(header) + "\n" + body


def write_artifact(path: Path, kind: str, meta: dict[str, Any], body: str) -> Path:
    path = Path(path)
    path.write_text(render_artifact(kind, meta, body), encoding="utf-8", newline="\n")
    return path


def read_artifact(path: Path, kind: str | None = None) -> tuple[dict[str, Any], str]:
    text = Path(path).read_text(encoding="utf-8")
    first, sep, body = text.partition("\n")
    if not first.startswith(HEADER_PREFIX) or not sep:
        raise IntegrityError(f"{path}: missing header line")
    try:
        header = json.loads(first[len(HEADER_PREFIX):])
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{path}: unreadable header") from exc
    if kind is not None and header.get("kind") != kind:
        raise IntegrityError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
    if header.get("body_sha256") != sha256_text(body):
        raise IntegrityError(f"{path}: checksum mismatch")
    return header, body


def csv_body(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def read_csv_body(body: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(body)))

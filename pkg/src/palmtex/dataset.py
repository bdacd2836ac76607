"""Dataset manifests: one CSV row per image sample."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import UnreadableFile, ValidationError

MANIFEST_FIELDS = ("subject_id", "session", "sample_index", "path", "band")


@dataclass(frozen=True)
class ManifestRow:
    subject_id: str
    session: int
    sample_index: int
    path: Path
    band: Optional[str] = None

    @property
    def key(self) -> tuple:
        return (self.subject_id, self.session, self.sample_index)

    def label(self) -> str:
        return f"subject={self.subject_id} session={self.session} sample={self.sample_index} path={self.path}"


def manifest_text(rows: list[ManifestRow], base: Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_FIELDS)
    for r in rows:
        path = r.path
        if base is not None:
            try:
                path = Path(r.path).relative_to(base)
            except ValueError:
                pass
        writer.writerow([r.subject_id, r.session, r.sample_index, path.as_posix(), r.band or ""])
    return buf.getvalue()


def write_manifest(rows: list[ManifestRow], path) -> None:
    path = Path(path)
    path.write_text(manifest_text(rows, path.parent), encoding="utf-8")


def read_manifest(path) -> list[ManifestRow]:
    """Parse a manifest; relative image paths resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableFile(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    missing = {"subject_id", "session", "sample_index", "path"} - set(reader.fieldnames or ())
    if missing:
        raise ValidationError(f"manifest {path} lacks columns {sorted(missing)}")
    rows, seen = [], set()
    for lineno, rec in enumerate(reader, start=2):
        try:
            row = ManifestRow(
                subject_id=rec["subject_id"].strip(),
                session=int(rec["session"]),
                sample_index=int(rec["sample_index"]),
                path=(path.parent / rec["path"].strip()),
                band=(rec.get("band") or "").strip() or None,
            )
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:{lineno}: malformed manifest row ({exc})") from exc
        if not row.subject_id:
            raise ValidationError(f"{path}:{lineno}: empty subject_id")
        if row.key in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate row {row.key}")
        seen.add(row.key)
        rows.append(row)
    if not rows:
        raise ValidationError(f"manifest {path} has no rows")
    return rows

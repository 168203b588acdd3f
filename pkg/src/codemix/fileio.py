"""Small file helpers shared by the pipeline stages."""
from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from codemix.errors import ValidationError


@contextmanager
def atomic_write(path, mode: str = "w", encoding: str | None = "utf-8"):
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        if "b" in mode:
            with open(tmp, mode) as f:
                yield f
        else:
            with open(tmp, mode, encoding=encoding, newline="") as f:
                yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, record)``; blank lines are skipped."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise ValidationError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, rec


def dump_jsonl_line(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False) + "\n"


def read_token_file(path) -> list[str]:
    """One token per line; blank lines and ``#`` comments are ignored."""
    tokens = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                tokens.append(line)
    return tokens


def write_token_file(path, tokens, header: str | None = None) -> None:
    with atomic_write(path) as f:
        if header:
            f.write(f"# {header}\n")
        for tok in tokens:
            f.write(f"{tok}\n")

"""Experiment configs and deterministic file output.

Config files are flat ``key = value`` text grouped into ``[sections]``, with
JSON accepted as an alternative encoding of the same shape; every parse or
type error carries file:line context.  CSV emission pins the float format to
17 significant digits and the line terminator to "\\n", so identical runs
produce byte-identical bodies regardless of platform line conventions.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import numbers
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, FkdynError

__all__ = [
    "RawValue",
    "RawConfig",
    "read_config",
    "format_float",
    "config_hash",
    "write_csv",
    "write_json",
]

_REQUIRED = object()


def format_float(x: float) -> str:
    """17-significant-digit decimal form: round-trips any float64."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return format_float(float(value))
    if isinstance(value, str):
        return value
    raise FkdynError(f"cannot serialize {type(value).__name__} into a CSV cell")


def write_csv(path, columns, rows) -> None:
    """Write rows (dicts keyed by column, or aligned sequences) under a header."""
    columns = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                missing = [c for c in columns if c not in row]
                if missing:
                    raise FkdynError(f"row is missing columns {missing}")
                row = [row[c] for c in columns]
            elif len(row) != len(columns):
                raise FkdynError(
                    f"row has {len(row)} cells for {len(columns)} columns")
            writer.writerow([_cell(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, numbers.Integral):
        return int(obj)
    if isinstance(obj, numbers.Real):
        x = float(obj)
        return None if math.isnan(x) or math.isinf(x) else x
    raise FkdynError(f"cannot serialize {type(obj).__name__} into JSON")


def write_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, NaN/inf lowered to null."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(resolved: dict) -> str:
    """Short stable digest of a resolved config mapping."""
    canonical = json.dumps(_jsonable(resolved), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class RawValue:
    """A config value plus the line it came from (None for JSON configs)."""

    value: object
    line: int | None


class RawConfig:
    """Sectioned config with provenance-carrying typed getters.

    INI-style values arrive as strings and are coerced on access; JSON values
    arrive native and are type-checked on access.  Every failure message
    names the file and, when known, the line.
    """

    def __init__(self, path: str, sections: dict):
        self.path = str(path)
        self.sections = sections

    def _where(self, raw: RawValue | None) -> str:
        if raw is not None and raw.line is not None:
            return f"{self.path}:{raw.line}"
        return self.path

    def has_section(self, section: str) -> bool:
        return section in self.sections

    def keys(self, section: str):
        return tuple(self.sections.get(section, {}))

    def reject_unknown(self, section: str, known) -> None:
        extra = [k for k in self.sections.get(section, {}) if k not in known]
        if extra:
            raw = self.sections[section][extra[0]]
            raise ConfigError(
                f"{self._where(raw)}: unknown key '{extra[0]}' in [{section}]"
                f" (known: {', '.join(sorted(known))})")

    def _fetch(self, section: str, key: str, default):
        sec = self.sections.get(section)
        if sec is None or key not in sec:
            if default is _REQUIRED:
                raise ConfigError(
                    f"{self.path}: missing required key '{key}' in [{section}]")
            return None, default
        return sec[key], _REQUIRED

    def _typed(self, section, key, default, coerce, type_name):
        raw, fallback = self._fetch(section, key, default)
        if raw is None:
            return fallback
        try:
            return coerce(raw.value)
        except (TypeError, ValueError):
            raise ConfigError(
                f"{self._where(raw)}: [{section}] {key} = {raw.value!r} "
                f"is not {type_name}") from None

    def get_str(self, section, key, default=_REQUIRED) -> str:
        def coerce(v):
            if not isinstance(v, str):
                raise TypeError
            return v
        return self._typed(section, key, default, coerce, "a string")

    def get_int(self, section, key, default=_REQUIRED) -> int:
        def coerce(v):
            if isinstance(v, bool) or isinstance(v, float):
                raise TypeError
            if isinstance(v, numbers.Integral):
                return int(v)
            return int(str(v).strip(), 10)
        return self._typed(section, key, default, coerce, "an integer")

    def get_float(self, section, key, default=_REQUIRED) -> float:
        def coerce(v):
            if isinstance(v, bool):
                raise TypeError
            if isinstance(v, numbers.Real):
                return float(v)
            return float(str(v).strip())
        return self._typed(section, key, default, coerce, "a number")

    def get_bool(self, section, key, default=_REQUIRED) -> bool:
        def coerce(v):
            if isinstance(v, bool):
                return v
            text = str(v).strip().lower()
            if text in ("true", "yes", "1", "on"):
                return True
            if text in ("false", "no", "0", "off"):
                return False
            raise ValueError
        return self._typed(section, key, default, coerce, "a boolean")

    def get_floats(self, section, key, default=_REQUIRED) -> tuple:
        def coerce(v):
            if isinstance(v, str):
                parts = [s for s in (t.strip() for t in v.split(",")) if s]
                return tuple(float(s) for s in parts)
            if isinstance(v, (list, tuple)):
                return tuple(float(x) for x in v)
            raise TypeError
        return self._typed(section, key, default, coerce,
                           "a comma-separated number list")

    def get_ints(self, section, key, default=_REQUIRED) -> tuple:
        def coerce(v):
            if isinstance(v, str):
                parts = [s for s in (t.strip() for t in v.split(",")) if s]
                return tuple(int(s, 10) for s in parts)
            if isinstance(v, (list, tuple)):
                return tuple(int(x) for x in v)
            raise TypeError
        return self._typed(section, key, default, coerce,
                           "a comma-separated integer list")

    def get_choice(self, section, key, choices, default=_REQUIRED) -> str:
        value = self.get_str(section, key, default)
        if value is not default or default is _REQUIRED:
            if value not in choices:
                raw, _ = self._fetch(section, key, None)
                raise ConfigError(
                    f"{self._where(raw)}: [{section}] {key} = {value!r} "
                    f"must be one of {', '.join(sorted(choices))}")
        return value

    def resolved(self) -> dict:
        """Plain nested mapping of everything parsed (for manifests/hashing)."""
        return {
            name: {key: raw.value for key, raw in sec.items()}
            for name, sec in self.sections.items()
        }


def _from_json(path: str, text: str) -> RawConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object of sections")
    sections = {}
    for name, body in data.items():
        if not isinstance(body, dict):
            raise ConfigError(
                f"{path}: section '{name}' must be an object, got "
                f"{type(body).__name__}")
        sections[str(name)] = {
            str(k): RawValue(v, None) for k, v in body.items()
        }
    return RawConfig(path, sections)


def read_config(path) -> RawConfig:
    """Parse a config file: sectioned key=value text, or JSON of the same shape."""
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    if path.endswith(".json") or text.lstrip()[:1] == "{":
        return _from_json(path, text)
    sections: dict = {}
    current = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(
                    f"{path}:{line_no}: malformed section header {raw_line.strip()!r}")
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"{path}:{line_no}: empty section name")
            if name in sections:
                raise ConfigError(f"{path}:{line_no}: duplicate section [{name}]")
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(
                f"{path}:{line_no}: expected 'key = value', got {raw_line.strip()!r}")
        if current is None:
            raise ConfigError(f"{path}:{line_no}: key outside any [section]")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"{path}:{line_no}: empty key")
        if key in current:
            raise ConfigError(f"{path}:{line_no}: duplicate key '{key}'")
        current[key] = RawValue(value, line_no)
    return RawConfig(path, sections)

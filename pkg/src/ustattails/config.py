"""Flat key-value configs for the command line tools.

One ``section.key = value`` assignment per line, ``#`` starts a comment,
blank lines are ignored.  Errors carry the file path and line number of the
offending entry.  Values stay strings until a stage asks for them with a
typed getter.
"""

from dataclasses import dataclass, field

import numpy as np


class ConfigError(Exception):
    pass


_MISSING = object()


@dataclass
class Config:
    path: str
    entries: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text, path="<config>"):
        entries = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'section.key = value', got {line!r}"
                )
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if not key or "." not in key:
                raise ConfigError(
                    f"{path}:{lineno}: keys are dotted like 'run.seed', got {key!r}"
                )
            if key in entries:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            entries[key] = (value, lineno)
        return cls(path, entries)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, "r") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc}") from exc
        return cls.from_text(text, str(path))

    def override(self, key, value):
        # line 0 marks command-line overrides in error messages
        if "." not in key:
            raise ConfigError(f"{self.path}: override keys are dotted, got {key!r}")
        self.entries[key] = (str(value), 0)

    def has(self, key):
        return key in self.entries

    def _where(self, key):
        lineno = self.entries.get(key, ("", 0))[1]
        return f"{self.path}:{lineno}" if lineno else f"{self.path} (--set {key})"

    def fail(self, key, message):
        raise ConfigError(f"{self._where(key)}: {message}")

    def get_str(self, key, default=_MISSING, *, choices=None):
        if key not in self.entries:
            if default is _MISSING:
                raise ConfigError(f"{self.path}: missing required key {key!r}")
            return default
        value = self.entries[key][0]
        if choices is not None and value not in choices:
            self.fail(key, f"{key} must be one of {', '.join(choices)}; got {value!r}")
        return value

    def _get_cast(self, key, default, cast, what):
        if key not in self.entries:
            if default is _MISSING:
                raise ConfigError(f"{self.path}: missing required key {key!r}")
            return default
        raw = self.entries[key][0]
        try:
            return cast(raw)
        except ValueError:
            self.fail(key, f"{key} must be {what}, got {raw!r}")

    def get_int(self, key, default=_MISSING):
        return self._get_cast(key, default, int, "an integer")

    def get_float(self, key, default=_MISSING):
        return self._get_cast(key, default, float, "a number")

    def get_bool(self, key, default=_MISSING):
        def cast(raw):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)

        return self._get_cast(key, default, cast, "a boolean (true/false)")

    def get_floats(self, key, default=_MISSING):
        def cast(raw):
            return [float(tok) for tok in raw.split(",") if tok.strip()]

        return self._get_cast(key, default, cast, "a comma list of numbers")

    def get_ints(self, key, default=_MISSING):
        def cast(raw):
            return [int(tok) for tok in raw.split(",") if tok.strip()]

        return self._get_cast(key, default, cast, "a comma list of integers")


def parse_grid(spec):
    """Grid specs: ``lin:LO:HI:K``, ``log:LO:HI:K``, ``quantile:QLO:QHI:K``,
    or a plain comma list of values.

    Returns ("array", values) for resolved grids and ("quantile", (qlo, qhi,
    k)) when the grid must be placed on data quantiles by the caller.
    """
    spec = spec.strip()
    head = spec.split(":", 1)[0]
    if head in ("lin", "log", "quantile"):
        parts = spec.split(":")
        if len(parts) != 4:
            raise ValueError(f"grid spec {spec!r} needs the form {head}:LO:HI:K")
        lo, hi, k = float(parts[1]), float(parts[2]), int(parts[3])
        if k < 2:
            raise ValueError("grids need at least 2 points")
        if head == "lin":
            return "array", np.linspace(lo, hi, k)
        if head == "log":
            if lo <= 0 or hi <= lo:
                raise ValueError("log grids need 0 < LO < HI")
            return "array", np.geomspace(lo, hi, k)
        if not (0 <= lo < hi <= 1):
            raise ValueError("quantile grids need 0 <= QLO < QHI <= 1")
        return "quantile", (lo, hi, k)
    values = np.array([float(tok) for tok in spec.split(",") if tok.strip()])
    if values.size < 1:
        raise ValueError(f"empty grid spec {spec!r}")
    return "array", values


def resolve_grid(spec, data=None):
    """Resolve a grid spec, placing quantile grids on the given data."""
    kind, payload = parse_grid(spec)
    if kind == "array":
        return payload
    if data is None:
        raise ValueError("quantile grid used where no calibration data exists")
    qlo, qhi, k = payload
    grid = np.unique(np.quantile(np.asarray(data, dtype=float), np.linspace(qlo, qhi, k)))
    if grid.size < 2:
        raise ValueError("quantile grid collapsed to fewer than 2 distinct levels")
    return grid

from __future__ import annotations

import os
from pathlib import Path
from typing import Any

DEFAULTS: dict[str, Any] = {
    "GTNN_SEED": 0,
    "GTNN_JOBS": 1,
    "GTNN_LOG_LEVEL": "WARNING",
    "GTNN_NORM_TOLERANCE": 1e-6,
    "GTNN_GUARD_SCALE": 1e-6,
    "GTNN_REPORTS_WATERMARK_WORD": None,
    "GTNN_REPORTS_WATERMARK_FONT": ("Helvetica", 100),
    "GTNN_REPORTS_HEADER_LINE": "gtnn benchmark",
}

ENV_PREFIX = "GTNN_"


class ConfigFileError(Exception):
    def __init__(self, message, code=None):
        super().__init__(message)
        self.code = code


def read_config_file(path: str | Path) -> dict[str, str]:
    """Returns the key=value pairs of a config file as strings.

    Blank lines and lines starting with `#` are skipped.
    """
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigFileError(f"Invalid config line. Got {path}:{lineno}: {line!r}")
        values[key.strip()] = value.strip()
    return values


class Settings:
    """Process-wide settings, read with ``getattr(settings, "GTNN_...", default)``.

    Values resolve from the defaults, then `GTNN_*` environment variables, then
    anything passed to `configure` (config file or CLI).
    """

    def __init__(self, environ: dict[str, str] | None = None):
        self._values: dict[str, Any] = {}
        self.reset(environ)

    def reset(self, environ: dict[str, str] | None = None) -> None:
        environ = os.environ if environ is None else environ
        self._values = dict(DEFAULTS)
        for key, value in environ.items():
            if key.startswith(ENV_PREFIX):
                self._values[key] = self._coerce(key, value)

    def configure(self, **options) -> None:
        for key, value in options.items():
            if not key.startswith(ENV_PREFIX):
                raise ConfigFileError(
                    f"Settings names must start with {ENV_PREFIX}. Got {key}."
                )
            self._values[key] = self._coerce(key, value)

    def __getattr__(self, name: str) -> Any:
        try:
            return self.__dict__["_values"][name]
        except KeyError:
            raise AttributeError(name)

    @staticmethod
    def _coerce(key: str, value: Any) -> Any:
        default = DEFAULTS.get(key)
        if not isinstance(value, str) or default is None or isinstance(default, str):
            return value
        if isinstance(default, bool):
            return value.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            name, size = value.split(",")
            return name.strip(), int(size)
        return value


settings = Settings()

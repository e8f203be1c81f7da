from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("gtnn")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "unknown"

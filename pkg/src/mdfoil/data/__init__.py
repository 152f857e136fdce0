"""Sample UIUC airfoil coordinate files shipped with the package.

The files are a subset of the UIUC Airfoil Coordinates Database
(https://m-selig.ae.illinois.edu/ads/coord_database.html), all in Selig
format and all known to pass the feature pipeline with default settings.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..geometry import AirfoilCoordinates, read_coordinate_file

__all__ = ["bundled_names", "bundled_path", "bundled_paths", "load_bundled"]


def _root() -> Path:
    return Path(str(resources.files(__package__) / "uiuc"))


def bundled_names() -> list[str]:
    return sorted(p.stem for p in _root().glob("*.dat"))


def bundled_path(name: str) -> Path:
    path = _root() / f"{name}.dat"
    if not path.exists():
        raise KeyError(f"no bundled airfoil named {name!r}")
    return path


def bundled_paths() -> list[Path]:
    return [bundled_path(n) for n in bundled_names()]


def load_bundled(name: str) -> AirfoilCoordinates:
    return read_coordinate_file(bundled_path(name))

"""Paths to the data files bundled with the package.

The bundled kitchen, route, and experiment configs are the reference
inputs used by the test suite and the README walkthrough; they are plain
files in the documented formats, not special-cased in any way.
"""

from __future__ import annotations

from importlib.resources import files
from pathlib import Path


def fixture_path(name: str) -> Path:
    return Path(str(files("relotrack").joinpath("data", name)))


def kitchen_scene_path() -> Path:
    return fixture_path("kitchen_default.json")


def route_path() -> Path:
    return fixture_path("route_default.json")


def camera_config_path() -> Path:
    return fixture_path("camera_default.json")


def detector_clean_config_path() -> Path:
    return fixture_path("detector_clean.json")


def detector_noisy_config_path() -> Path:
    return fixture_path("detector_noisy.json")


def tracker_config_path() -> Path:
    return fixture_path("tracker_default.json")


def experiment_noisy_config_path() -> Path:
    return fixture_path("experiment_noisy.json")


def experiment_clean_config_path() -> Path:
    return fixture_path("experiment_clean.json")


def experiment_null_config_path() -> Path:
    return fixture_path("experiment_null.json")


def changeset_large_moves_path() -> Path:
    return fixture_path("changeset_large_moves.json")


def changeset_empty_path() -> Path:
    return fixture_path("changeset_empty.json")

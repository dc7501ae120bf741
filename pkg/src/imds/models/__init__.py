"""Bundled example models."""

from importlib import resources


def path(name: str):
    return resources.files(__name__).joinpath(name)


def read(name: str) -> str:
    return path(name).read_text(encoding="utf-8")

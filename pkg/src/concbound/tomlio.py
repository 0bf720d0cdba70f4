"""TOML loading with errors mapped onto the package hierarchy."""
from __future__ import annotations

from typing import Union

try:  # Python 3.11+
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as _toml

from .errors import SpecSyntaxError


def load_toml(data: Union[bytes, str]) -> dict:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SpecSyntaxError(f"spec file is not UTF-8: {exc}") from None
    try:
        return _toml.loads(data)
    except _toml.TOMLDecodeError as exc:
        raise SpecSyntaxError(f"malformed spec file: {exc}") from None

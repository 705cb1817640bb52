"""JSON schemas of every artifact the CLI writes."""

from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path

import jsonschema

SCHEMA_DIR = Path(__file__).parent / "schemas"


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    with open(SCHEMA_DIR / f"{name}.json") as fh:
        return json.load(fh)


def validate(name: str, data) -> None:
    """Raise ``jsonschema.ValidationError`` when ``data`` does not match."""
    jsonschema.validate(data, load_schema(name))

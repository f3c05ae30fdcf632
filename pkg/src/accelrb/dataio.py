"""Dataset interchange: one JSON object per line with fields
``mode``, ``m``, ``shots``, ``survivals``."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .errors import ConfigError, DomainError
from .model import Datum, ExperimentDesign


def datum_to_dict(d: Datum) -> dict:
    return {"mode": d.design.mode.value, "m": d.design.m, "shots": d.shots, "survivals": d.survivals}


def datum_from_dict(obj: dict) -> Datum:
    try:
        return Datum(ExperimentDesign(int(obj["m"]), obj["mode"]), int(obj["shots"]), int(obj["survivals"]))
    except KeyError as exc:
        raise ConfigError(f"dataset record missing field {exc}") from None
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise ConfigError(f"bad dataset record {obj!r}: {exc}") from None


def write_dataset(data: Iterable[Datum], path) -> None:
    with open(path, "w") as fh:
        for d in data:
            fh.write(json.dumps(datum_to_dict(d)) + "\n")


def read_dataset(path) -> list[Datum]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        out.append(datum_from_dict(obj))
    if not out:
        raise ConfigError(f"{path}: empty dataset")
    return out

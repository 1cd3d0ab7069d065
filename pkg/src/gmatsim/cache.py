"""Versioned on-disk cache of eigenpairs (npz files keyed by a content hash)."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CacheCorrupt
from .spectrum import EigenSet

log = logging.getLogger(__name__)
CACHE_FORMAT = 1


def cache_key(device_hash: str, mesh_hash: str, bias, flags_key, count: int, extra: str = "") -> str:
    payload = json.dumps(
        {
            "device": device_hash,
            "mesh": mesh_hash,
            "bias": sorted((str(k), float(v)) for k, v in dict(bias).items()),
            "flags": [repr(f) for f in flags_key],
            "count": int(count),
            "extra": extra,
            "version": __version__,
            "format": CACHE_FORMAT,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


class EigenCache:
    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.npz"

    def get(self, key: str) -> EigenSet | None:
        p = self.path(key)
        if not p.exists():
            self.misses += 1
            return None
        try:
            with np.load(p, allow_pickle=False) as data:
                if int(data["format"]) != CACHE_FORMAT or str(data["key"]) != key:
                    raise CacheCorrupt(f"cache entry {p.name} has a mismatched header")
                es = EigenSet(
                    energies=data["energies"].copy(),
                    states=data["states"].copy(),
                    residuals=data["residuals"].copy(),
                    diagnostics={"cache": "hit"},
                )
        except CacheCorrupt:
            raise
        except Exception as exc:  # truncated or foreign file
            raise CacheCorrupt(f"cannot read cache entry {p.name}: {exc}") from None
        self.hits += 1
        log.info("cache hit %s", key[:12])
        return es

    def put(self, key: str, es: EigenSet) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        os.close(fd)
        with open(tmp, "wb") as fh:
            np.savez(
                fh, format=CACHE_FORMAT, key=key, energies=es.energies, states=es.states, residuals=es.residuals,
            )
        os.replace(tmp, self.path(key))

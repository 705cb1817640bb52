"""The shipped benchmark kernels (IR text under corpus/<version>/)."""

from __future__ import annotations

import os
from functools import lru_cache
from pathlib import Path

from ..mir import Program, parse

CORPUS_VERSION = "v1"
KERNELS = ("sw_naive", "sw_tuned", "grid_diffusion_checked", "grid_diffusion_padded", "tcell_walk")
FAMILY = {
    "sw_naive": "sw",
    "sw_tuned": "sw",
    "grid_diffusion_checked": "diffusion",
    "grid_diffusion_padded": "diffusion",
    "tcell_walk": "tcell",
}


def corpus_dir() -> Path:
    """``$EVOMIR_CORPUS`` if set, else the versioned directory in the package."""
    env = os.environ.get("EVOMIR_CORPUS")
    if env:
        return Path(env)
    return Path(__file__).parent / "corpus" / CORPUS_VERSION


def kernel_path(name: str) -> Path:
    if name not in KERNELS:
        raise KeyError(f"unknown kernel {name!r}; available: {', '.join(KERNELS)}")
    return corpus_dir() / f"{name}.ir"


@lru_cache(maxsize=None)
def _load(path: str, mtime: float) -> Program:
    with open(path) as fh:
        return parse(fh.read())


def load_kernel(name: str) -> Program:
    path = kernel_path(name)
    return _load(str(path), path.stat().st_mtime)


def sw_kernel_naive() -> Program:
    return load_kernel("sw_naive")


def sw_kernel_tuned() -> Program:
    return load_kernel("sw_tuned")


def grid_diffusion_checked() -> Program:
    return load_kernel("grid_diffusion_checked")


def grid_diffusion_padded() -> Program:
    return load_kernel("grid_diffusion_padded")


def tcell_walk() -> Program:
    return load_kernel("tcell_walk")

"""Smith-Waterman local alignment: sequential reference oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALPHABET = "ACGT"
CODE = {c: i for i, c in enumerate(ALPHABET)}


@dataclass(frozen=True)
class ScoringParams:
    match: int = 2
    mismatch: int = -2
    gap: int = -1

    def __post_init__(self):
        if self.match <= 0 or self.mismatch >= 0 or self.gap >= 0:
            raise ValueError("need match > 0, mismatch < 0, gap < 0")


@dataclass(frozen=True)
class Alignment:
    a: str          # aligned fragment of A, '-' for gaps
    b: str          # aligned fragment of B
    start: tuple    # (i, j) of the first aligned cell, 1-based
    end: tuple      # (i, j) of the best cell


def encode(seq: str) -> np.ndarray:
    bad = set(seq) - set(ALPHABET)
    if bad:
        raise ValueError(f"non-ACGT symbols: {''.join(sorted(bad))}")
    return np.array([CODE[c] for c in seq], dtype=np.int64)


def score_matrix(a: str, b: str, params: ScoringParams = ScoringParams()) -> np.ndarray:
    ea, eb = encode(a), encode(b)
    n, m = len(ea), len(eb)
    H = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i in range(1, n + 1):
        s = np.where(eb == ea[i - 1], params.match, params.mismatch)
        row = H[i]
        prev = H[i - 1]
        # diagonal and vertical moves vectorize; the horizontal one is a scan
        cand = np.maximum(np.maximum(prev[:-1] + s, prev[1:] + params.gap), 0)
        for j in range(1, m + 1):
            row[j] = max(cand[j - 1], row[j - 1] + params.gap)
    return H


def sw_reference(a: str, b: str, params: ScoringParams = ScoringParams()):
    """Return (H, best score, traceback alignment).

    The traceback starts at the first maximal cell in row-major order and
    follows score-deriving predecessors (diagonal, then up, then left) until
    it reaches a zero cell.
    """
    if not a or not b:
        raise ValueError("sequences must be nonempty")
    H = score_matrix(a, b, params)
    best = int(H.max())
    i, j = (int(x) for x in np.unravel_index(int(np.argmax(H)), H.shape))
    end = (i, j)
    out_a, out_b = [], []
    while i > 0 and j > 0 and H[i, j] > 0:
        s = params.match if a[i - 1] == b[j - 1] else params.mismatch
        if H[i, j] == H[i - 1, j - 1] + s:
            out_a.append(a[i - 1])
            out_b.append(b[j - 1])
            i, j = i - 1, j - 1
        elif H[i, j] == H[i - 1, j] + params.gap:
            out_a.append(a[i - 1])
            out_b.append("-")
            i -= 1
        else:
            out_a.append("-")
            out_b.append(b[j - 1])
            j -= 1
    aln = Alignment("".join(reversed(out_a)), "".join(reversed(out_b)), (i + 1, j + 1), end)
    return H, best, aln

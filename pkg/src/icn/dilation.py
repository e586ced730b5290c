"""Feature-similarity matching and channel dilation of demand windows."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import FEATURE_GROUPS, FeatureBundle
from .errors import DimensionError

_ABBREV = {"demographic": "d", "functionality": "f", "transport": "t"}


def pearson(u, v) -> float:
    """Pearson correlation of two vectors; 0.0 when either has zero variance."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionError(f"pearson: length mismatch {u.size} vs {v.size}")
    if u.size < 2:
        raise DimensionError("pearson needs vectors of length >= 2")
    du = u - u.mean()
    dv = v - v.mean()
    nu = np.sqrt(np.sum(du * du))
    nv = np.sqrt(np.sum(dv * dv))
    if nu == 0 or nv == 0:
        return 0.0
    r = float(np.sum((du / nu) * (dv / nv)))
    return min(1.0, max(-1.0, r))


def _standardize_columns(m: np.ndarray) -> np.ndarray:
    sd = m.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return (m - m.mean(axis=0)) / sd


def correlation_matrix(m: np.ndarray) -> np.ndarray:
    """Row-by-row Pearson matrix.

    Each entry is reduced along a contiguous row, so identical rows produce
    bit-identical correlations and ties stay exact ties.
    """
    d = m - m.mean(axis=1, keepdims=True)
    norm = np.sqrt(np.sum(d * d, axis=1))
    ok = norm > 0
    unit = np.zeros_like(d)
    unit[ok] = d[ok] / norm[ok, None]
    n = m.shape[0]
    corr = np.empty((n, n))
    for i in range(n):
        corr[i] = np.sum(unit * unit[i], axis=1)
    return np.clip(corr, -1.0, 1.0)


@dataclass(frozen=True)
class SpatialMatchTable:
    match_d: np.ndarray
    match_f: np.ndarray
    match_t: np.ndarray
    corr_d: np.ndarray
    corr_f: np.ndarray
    corr_t: np.ndarray

    def __post_init__(self):
        n = len(self.match_d)
        for g in FEATURE_GROUPS:
            m = self.match(g)
            if len(m) != n or np.any(m < 0) or np.any(m >= n):
                raise ValueError(f"{g} matches must be indices in [0, {n})")
            if np.any(m == np.arange(n)):
                raise ValueError(f"{g} match table maps an area to itself")

    @property
    def n_areas(self) -> int:
        return len(self.match_d)

    def match(self, group: str) -> np.ndarray:
        return getattr(self, f"match_{_ABBREV[group]}")

    def corr(self, group: str) -> np.ndarray:
        return getattr(self, f"corr_{_ABBREV[group]}")

    def gather_index(self, channels: Sequence[str] = FEATURE_GROUPS) -> np.ndarray:
        """``(C, N)`` row sources; channel 0 is the area itself."""
        rows = [np.arange(self.n_areas)] + [self.match(g) for g in channels]
        return np.stack(rows).astype(np.intp)

    def permuted(self, perm: Sequence[int]) -> "SpatialMatchTable":
        """Table for areas reordered so that new area k is old area perm[k]."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        fields = {}
        for g in FEATURE_GROUPS:
            a = _ABBREV[g]
            fields[f"match_{a}"] = inv[self.match(g)[perm]]
            fields[f"corr_{a}"] = self.corr(g)[perm]
        return SpatialMatchTable(**fields)

    def to_csv(self, path: str | Path, area_ids: Sequence[str]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["area_id", "match_d", "corr_d", "match_f", "corr_f", "match_t", "corr_t"])
            for i, a in enumerate(area_ids):
                row = [a]
                for g in FEATURE_GROUPS:
                    row += [area_ids[self.match(g)[i]], repr(float(self.corr(g)[i]))]
                w.writerow(row)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "SpatialMatchTable":
        out = {}
        for k in cls.__dataclass_fields__:
            out[k] = np.asarray(d[k], dtype=np.intp if k.startswith("match") else np.float64)
        return cls(**out)


def best_partners(m: np.ndarray, standardize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Index and value of the most correlated other row, smallest index on ties."""
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    if n < 2:
        raise ValueError("at least two areas are needed to pick a partner")
    if standardize:
        m = _standardize_columns(m)
    corr = correlation_matrix(m)
    np.fill_diagonal(corr, -np.inf)
    idx = np.argmax(corr, axis=1)  # argmax returns the first maximum
    return idx.astype(np.intp), corr[np.arange(n), idx]


def build_match_table(features: FeatureBundle, standardize: bool = True) -> SpatialMatchTable:
    fields = {}
    for g in FEATURE_GROUPS:
        idx, val = best_partners(features.group(g), standardize)
        fields[f"match_{_ABBREV[g]}"] = idx
        fields[f"corr_{_ABBREV[g]}"] = val
    return SpatialMatchTable(**fields)


class DilatedInput:
    """``(C, N, T)`` stack ``[own, demographic, functionality, transport]``.

    A separate type so a dilated tensor can't be fed back in as a demand window.
    """

    __slots__ = ("channels",)

    def __init__(self, channels: np.ndarray):
        self.channels = channels

    @property
    def shape(self):
        return self.channels.shape

    def __array__(self, dtype=None, copy=None):
        return self.channels if dtype is None else self.channels.astype(dtype)


def dilate(x, table: SpatialMatchTable, channels: Sequence[str] = FEATURE_GROUPS) -> DilatedInput:
    """Row-gather ``x`` (N, T) into C channels.  Also accepts a leading batch axis."""
    if isinstance(x, DilatedInput):
        raise TypeError("input is already dilated")
    x = np.asarray(x)
    if x.ndim not in (2, 3) or x.shape[-2] != table.n_areas:
        raise DimensionError(f"dilate: demand window {x.shape} does not have {table.n_areas} area rows")
    gather = table.gather_index(channels)
    return DilatedInput(x[..., gather, :])

"""Analysis dataset container."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Raised when a dataset violates its structural invariants."""


@dataclass(frozen=True)
class Dataset:
    """Sampled rows (S=1) with outcome, binary group, covariates and design info.

    Parameters
    ----------
    y : (n,) outcome
    a : (n,) group indicator in {0, 1}
    x : (n, p) covariate matrix; ``columns`` holds its column names
    sel_weight : (n,) selection weights, 1 / Pr(S=1 | A, X)
    stratum_id, psu_id : optional (n,) design labels
    pop_size : optional super-population size N
    """

    y: np.ndarray
    a: np.ndarray
    x: np.ndarray
    sel_weight: np.ndarray
    columns: tuple = ()
    stratum_id: Optional[np.ndarray] = None
    psu_id: Optional[np.ndarray] = None
    pop_size: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        a = np.asarray(self.a)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        w = np.asarray(self.sel_weight, dtype=float)
        n = y.shape[0]
        if a.shape != (n,) or w.shape != (n,) or x.shape[0] != n:
            raise DataError("y, a, x and sel_weight must have the same number of rows")
        if not np.all(np.isin(a, (0, 1))):
            raise DataError("group indicator must take only the values 0 and 1")
        a = a.astype(int)
        counts = np.bincount(a, minlength=2)
        if counts.min() < 1:
            raise DataError(f"both groups must be present, got counts {counts.tolist()}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DataError("sel_weight must be strictly positive and finite")
        if not np.all(np.isfinite(y)):
            raise DataError("outcome contains non-finite values")
        if not np.all(np.isfinite(x)):
            raise DataError("covariates contain non-finite values")
        columns = tuple(self.columns) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(columns) != x.shape[1]:
            raise DataError("columns must name every covariate column")
        stratum = None if self.stratum_id is None else np.asarray(self.stratum_id)
        psu = None if self.psu_id is None else np.asarray(self.psu_id)
        if psu is not None and stratum is None:
            raise DataError("psu_id requires stratum_id")
        for lab, name in ((stratum, "stratum_id"), (psu, "psu_id")):
            if lab is not None and lab.shape != (n,):
                raise DataError(f"{name} must have one label per row")
        if self.pop_size is not None and self.pop_size < n:
            raise DataError(f"pop_size {self.pop_size} is smaller than the sample size {n}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "sel_weight", w)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "stratum_id", stratum)
        object.__setattr__(self, "psu_id", psu)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def cols(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        """Covariate submatrix for ``names`` (all columns when None)."""
        if names is None:
            return self.x
        idx = []
        for name in names:
            if name not in self.columns:
                raise DataError(f"unknown covariate column {name!r}")
            idx.append(self.columns.index(name))
        return self.x[:, idx]

    def subset(self, mask: np.ndarray) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(
            y=self.y[mask],
            a=self.a[mask],
            x=self.x[mask],
            sel_weight=self.sel_weight[mask],
            columns=self.columns,
            stratum_id=None if self.stratum_id is None else self.stratum_id[mask],
            psu_id=None if self.psu_id is None else self.psu_id[mask],
            pop_size=self.pop_size,
        )

    def swap_groups(self) -> "Dataset":
        """Same rows with a relabeled as 1 - a."""
        return Dataset(
            y=self.y, a=1 - self.a, x=self.x, sel_weight=self.sel_weight,
            columns=self.columns, stratum_id=self.stratum_id, psu_id=self.psu_id,
            pop_size=self.pop_size,
        )

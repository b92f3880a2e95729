"""CSV ingestion and design-matrix construction from a small term syntax.

Terms are comma separated. A term is one or more factors joined by ``:``;
a factor is a column name, optionally raised to an integer power with
``^`` (numeric columns only), e.g. ``x1,K^2,umid:K``.

Categorical factors use treatment coding with the first level (file order)
as reference, unless the term obtained by dropping that factor is absent
from the model; then every level gets an indicator, so ``est:des`` without
a ``des`` main effect gives one slope per level of ``est``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DataLoadError(ValueError):
    pass


@dataclass
class Dataset:
    columns: list
    raw: dict
    categorical: set = field(default_factory=set)
    levels: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(next(iter(self.raw.values()))) if self.raw else 0

    def numeric(self, name: str) -> np.ndarray:
        values = self._column(name)
        if name in self.categorical:
            raise DataLoadError(f"column {name!r} is categorical, a number was expected")
        return np.array([float(v) for v in values])

    def response(self, name: str) -> np.ndarray:
        y = self.numeric(name)
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise DataLoadError(f"response {name!r} must hold non-negative integers")
        return y

    def _column(self, name: str) -> list:
        if name not in self.raw:
            raise DataLoadError(f"unknown column {name!r}; available: {', '.join(self.columns)}")
        values = self.raw[name]
        missing = [i + 2 for i, v in enumerate(values) if v == ""]
        if missing:
            raise DataLoadError(f"column {name!r} has missing values (lines {missing[:5]})")
        return values


def _is_number(token: str) -> bool:
    try:
        return math.isfinite(float(token))
    except ValueError:
        return False


def load_csv(path, categorical: Sequence[str] = (), reference: Optional[dict] = None) -> Dataset:
    """Read a headed UTF-8 CSV; any non-numeric token makes a column categorical."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataLoadError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataLoadError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataLoadError("duplicate column names in header")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataLoadError(f"row {i + 2} has {len(r)} fields, header has {len(header)}")
    raw = {h: [r[j].strip() for r in body] for j, h in enumerate(header)}

    cats = set(categorical)
    unknown = cats - set(header)
    if unknown:
        raise DataLoadError(f"--categorical names unknown columns: {sorted(unknown)}")
    for h in header:
        if any(v != "" and not _is_number(v) for v in raw[h]):
            cats.add(h)

    levels = {}
    for h in cats:
        order = list(dict.fromkeys(v for v in raw[h] if v != ""))
        ref = (reference or {}).get(h)
        if ref is not None:
            if ref not in order:
                raise DataLoadError(f"reference level {ref!r} not found in column {h!r}")
            order.remove(ref)
            order.insert(0, ref)
        levels[h] = order
    return Dataset(columns=header, raw=raw, categorical=cats, levels=levels)


def parse_terms(spec: str) -> list[tuple]:
    """``"x1,K^2,umid:K"`` -> [(("x1", 1),), (("K", 2),), (("umid", 1), ("K", 1))]."""
    terms = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        factors = []
        for part in chunk.split(":"):
            name, _, power = part.strip().partition("^")
            name = name.strip()
            if not name:
                raise DataLoadError(f"empty factor in term {chunk!r}")
            try:
                k = int(power) if power else 1
            except ValueError:
                raise DataLoadError(f"bad power in {part!r}") from None
            if k < 1:
                raise DataLoadError(f"power must be a positive integer in {part!r}")
            factors.append((name, k))
        terms.append(tuple(factors))
    return terms


def _factor_label(name: str, k: int) -> str:
    return name if k == 1 else f"{name}^{k}"


@dataclass
class DesignMatrix:
    X: np.ndarray
    names: list
    terms: list

    @property
    def p(self) -> int:
        return self.X.shape[1]


def build_design(data: Dataset, terms, intercept: bool = True) -> DesignMatrix:
    if isinstance(terms, str):
        terms = parse_terms(terms)
    present = {frozenset(t) for t in terms}
    if intercept:
        present.add(frozenset())
    cols, names = [], []
    if intercept:
        cols.append(np.ones(data.n))
        names.append("(Intercept)")

    for term in terms:
        numeric = np.ones(data.n)
        num_labels = []
        cat_parts = []
        for name, k in term:
            if name in data.categorical:
                if k != 1:
                    raise DataLoadError(f"cannot raise categorical column {name!r} to a power")
                rest = frozenset(f for f in term if f != (name, k))
                lv = data.levels[name]
                coded = lv[1:] if rest in present else lv
                values = data._column(name)
                cat_parts.append([(f"{name}[{lev}]", np.array([v == lev for v in values], float))
                                  for lev in coded])
            else:
                numeric = numeric * data.numeric(name) ** k
                num_labels.append(_factor_label(name, k))
        if not cat_parts:
            cols.append(numeric)
            names.append(":".join(num_labels))
            continue
        for combo in itertools.product(*cat_parts):
            col = numeric.copy()
            labels = []
            for label, ind in combo:
                col = col * ind
                labels.append(label)
            cols.append(col)
            names.append(":".join(labels + num_labels))

    if not cols:
        raise DataLoadError("model has no columns")
    return DesignMatrix(np.column_stack(cols), names, list(terms))


def is_nested(small: Sequence[str], big: Sequence[str]) -> bool:
    return set(small) <= set(big)

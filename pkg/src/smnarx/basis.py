"""Polynomial regressor dictionaries over lagged input/output vectors.

The lagged vector at time k is laid out as

    x_k = [y_{k-1}, ..., y_{k-n_a}, u_{k-1}, ..., u_{k-n_b}]

with each input lag contributing a block of q entries, for a total length
p = n_a + q * n_b.  A basis is the set of all monomials of x_k up to total
degree n_d, held as exponent vectors in graded lexicographic order (degree
ascending, ties broken by lexicographic comparison of the exponent tuples)
so that term indices are reproducible across runs.  The first term is always
the constant regressor.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisConfig",
    "PolynomialBasis",
    "enumerate_basis",
    "evaluate_regressors",
    "regressor_matrix",
    "lagged_matrix",
    "build_design_matrix",
    "DesignMatrix",
]


@dataclass(frozen=True)
class BasisConfig:
    """Lag structure and expansion degree of the regressor dictionary.

    Parameters
    ----------
    n_a : int
        Number of output lags (>= 1).
    n_b : int
        Number of input lags (>= 1).
    q : int
        Input dimension (>= 1).
    n_d : int
        Maximum total monomial degree (>= 1).
    """

    n_a: int
    n_b: int
    q: int = 1
    n_d: int = 1

    def __post_init__(self) -> None:
        for name in ("n_a", "n_b", "q", "n_d"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def lag_vector_length(self) -> int:
        """Length p of the lagged vector."""
        return self.n_a + self.q * self.n_b

    @property
    def max_lag(self) -> int:
        """Warm-up depth: samples consumed before the first usable row."""
        return max(self.n_a, self.n_b)

    @property
    def n_terms(self) -> int:
        """Dictionary size C(p + n_d, n_d)."""
        return math.comb(self.lag_vector_length + self.n_d, self.n_d)

    def to_json(self) -> dict:
        return {"n_a": self.n_a, "n_b": self.n_b, "q": self.q, "n_d": self.n_d}

    @classmethod
    def from_json(cls, obj: dict) -> "BasisConfig":
        return cls(n_a=obj["n_a"], n_b=obj["n_b"], q=obj["q"], n_d=obj["n_d"])


class PolynomialBasis:
    """Monomial dictionary over a lagged vector, in graded-lex order.

    ``exponents`` is an (n, p) integer array; row i is the exponent vector of
    term i.  Besides the raw exponents, an evaluation plan is precomputed:
    every non-constant term equals a lower-degree term times a single
    variable, which lets both single-vector and matrix evaluation run in one
    multiply per term.
    """

    def __init__(self, config: BasisConfig, exponents: np.ndarray):
        exponents = np.ascontiguousarray(exponents, dtype=np.int64)
        p = config.lag_vector_length
        if exponents.ndim != 2 or exponents.shape[1] != p:
            raise ValueError(f"exponent rows must have length {p}")
        if np.any(exponents < 0):
            raise ValueError("exponents must be non-negative")
        if np.any(exponents.sum(axis=1) > config.n_d):
            raise ValueError(f"term degree exceeds n_d={config.n_d}")
        if np.any(exponents[0] != 0):
            raise ValueError("first term must be the constant regressor")
        self.config = config
        self.exponents = exponents
        self.n = exponents.shape[0]
        self._index = {tuple(row): i for i, row in enumerate(exponents)}
        if len(self._index) != self.n:
            raise ValueError("duplicate terms in basis")
        self._parent, self._var = self._evaluation_plan()

    @property
    def n_terms(self) -> int:
        return self.n

    def _evaluation_plan(self) -> tuple[np.ndarray, np.ndarray]:
        parent = np.zeros(self.n, dtype=np.int64)
        var = np.zeros(self.n, dtype=np.int64)
        for t in range(1, self.n):
            e = self.exponents[t]
            j = int(np.flatnonzero(e)[0])
            reduced = e.copy()
            reduced[j] -= 1
            parent[t] = self._index[tuple(reduced)]
            var[t] = j
        return parent, var

    def index_of(self, exponent: tuple[int, ...] | np.ndarray) -> int:
        """Index of a term given its exponent vector; KeyError if absent."""
        return self._index[tuple(int(v) for v in exponent)]

    def term_label(self, t: int) -> str:
        """Human-readable monomial label, e.g. ``y[k-1]*u1[k-2]^2``."""
        cfg = self.config
        e = self.exponents[t]
        factors = []
        for j, power in enumerate(e):
            if power == 0:
                continue
            if j < cfg.n_a:
                name = f"y[k-{j + 1}]"
            else:
                lag, channel = divmod(j - cfg.n_a, cfg.q)
                name = f"u{channel + 1}[k-{lag + 1}]"
            factors.append(name if power == 1 else f"{name}^{power}")
        return "*".join(factors) if factors else "1"

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "terms": self.exponents.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PolynomialBasis":
        return cls(BasisConfig.from_json(obj["config"]), np.asarray(obj["terms"]))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, PolynomialBasis)
            and self.config == other.config
            and np.array_equal(self.exponents, other.exponents)
        )

    def __repr__(self) -> str:
        return f"PolynomialBasis(p={self.config.lag_vector_length}, n_d={self.config.n_d}, n={self.n})"


def enumerate_basis(config: BasisConfig) -> PolynomialBasis:
    """Enumerate all monomials of degree <= n_d over the lagged vector.

    Terms come out in graded lexicographic order with the constant term
    first; the count equals C(p + n_d, n_d).
    """
    p = config.lag_vector_length
    terms: list[tuple[int, ...]] = []
    for degree in range(config.n_d + 1):
        block = []
        for combo in itertools.combinations_with_replacement(range(p), degree):
            e = [0] * p
            for j in combo:
                e[j] += 1
            block.append(tuple(e))
        terms.extend(sorted(block))
    return PolynomialBasis(config, np.array(terms, dtype=np.int64))


def evaluate_regressors(basis: PolynomialBasis, x: np.ndarray) -> np.ndarray:
    """Evaluate every monomial at a single lagged vector x (length p)."""
    x = np.asarray(x, dtype=np.float64)
    p = basis.config.lag_vector_length
    if x.shape != (p,):
        raise ValueError(f"lagged vector must have shape ({p},), got {x.shape}")
    out = np.empty(basis.n)
    out[0] = 1.0
    parent, var = basis._parent, basis._var
    for t in range(1, basis.n):
        out[t] = out[parent[t]] * x[var[t]]
    return out


def regressor_matrix(basis: PolynomialBasis, lagged: np.ndarray) -> np.ndarray:
    """Row-wise monomial evaluation for a matrix of lagged vectors.

    Returns an (N, n) Fortran-ordered matrix (column access dominates the
    coordinate-descent solver downstream).
    """
    lagged = np.asarray(lagged, dtype=np.float64)
    p = basis.config.lag_vector_length
    if lagged.ndim != 2 or lagged.shape[1] != p:
        raise ValueError(f"lagged matrix must have {p} columns")
    out = np.empty((lagged.shape[0], basis.n), order="F")
    out[:, 0] = 1.0
    parent, var = basis._parent, basis._var
    for t in range(1, basis.n):
        np.multiply(out[:, parent[t]], lagged[:, var[t]], out=out[:, t])
    return out


def lagged_matrix(config: BasisConfig, y: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Stack lagged vectors x_k for k = max_lag .. L-1 of one segment.

    The first max(n_a, n_b) samples only supply lags and produce no row;
    shorter segments are an error.
    """
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    L = y.shape[0]
    if u.shape[0] != L:
        raise ValueError("y and u must have equal length")
    if u.shape[1] != config.q:
        raise ValueError(f"u must have {config.q} channels, got {u.shape[1]}")
    d = config.max_lag
    if L <= d:
        raise ValueError(
            f"segment of length {L} is shorter than the required lag depth "
            f"{d} + 1; no usable rows"
        )
    rows = L - d
    X = np.empty((rows, config.lag_vector_length))
    for lag in range(1, config.n_a + 1):
        X[:, lag - 1] = y[d - lag : L - lag]
    col = config.n_a
    for lag in range(1, config.n_b + 1):
        X[:, col : col + config.q] = u[d - lag : L - lag, :]
        col += config.q
    return X


@dataclass
class DesignMatrix:
    """Stacked per-segment design rows with the row-to-sample exclusion map.

    ``segment_slices[i]`` selects the rows of segment i; ``row_segment`` and
    ``row_sample`` give, for each row, the owning segment index and the local
    sample index within that segment (warm-up samples produce no row, so
    ``row_sample`` starts at max_lag).
    """

    phi: np.ndarray
    targets: np.ndarray
    segment_slices: list[slice]
    row_segment: np.ndarray
    row_sample: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.phi.shape[0]

    def segment_phi(self, i: int) -> np.ndarray:
        return self.phi[self.segment_slices[i]]

    def segment_targets(self, i: int) -> np.ndarray:
        return self.targets[self.segment_slices[i]]


def build_design_matrix(basis: PolynomialBasis, dataset, split: str | None = None) -> DesignMatrix:
    """Evaluate the dictionary on every usable row of a dataset.

    Rows whose lagged vector would need samples before the start of their
    segment are excluded; the returned map records segment and local sample
    index per row so posteriors and true modes stay aligned.
    """
    segments = dataset.segments if split is None else dataset.segments_for(split)
    if not segments:
        raise ValueError(f"dataset has no segments for split {split!r}")
    cfg = basis.config
    d = cfg.max_lag
    blocks, targets, seg_ids, sample_ids, slices = [], [], [], [], []
    offset = 0
    for i, seg in enumerate(segments):
        lagged = lagged_matrix(cfg, seg.y, seg.u)
        rows = lagged.shape[0]
        blocks.append(regressor_matrix(basis, lagged))
        targets.append(seg.y[d:])
        seg_ids.append(np.full(rows, i, dtype=np.int64))
        sample_ids.append(np.arange(d, d + rows, dtype=np.int64))
        slices.append(slice(offset, offset + rows))
        offset += rows
    phi = np.asfortranarray(np.vstack(blocks))
    return DesignMatrix(
        phi=phi,
        targets=np.concatenate(targets),
        segment_slices=slices,
        row_segment=np.concatenate(seg_ids),
        row_sample=np.concatenate(sample_ids),
    )

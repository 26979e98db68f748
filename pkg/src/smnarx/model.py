"""Model containers: switched polynomial NARX parameters and JSON I/O.

A model bundles a polynomial basis with per-mode coefficient vectors, a
shared noise variance, a Markov transition matrix and an initial mode
distribution.  Coefficients are serialized sparsely (indices + values per
mode) so large bases stay readable on disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisConfig, PolynomialBasis

__all__ = ["SmnarxModel", "TrueSystem", "uniform_initial", "uniform_transition"]

VAR_FLOOR = 1e-12
_ROW_SUM_TOL = 1e-10


def uniform_initial(n_modes: int) -> np.ndarray:
    return np.full(n_modes, 1.0 / n_modes)


def uniform_transition(n_modes: int) -> np.ndarray:
    return np.full((n_modes, n_modes), 1.0 / n_modes)


def _check_stochastic(mat: np.ndarray, name: str, tol: float = _ROW_SUM_TOL) -> None:
    if np.any(mat < -1e-15):
        raise ValueError(f"{name} has negative entries")
    sums = mat.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValueError(f"{name} rows must sum to 1 (max dev {np.max(np.abs(sums - 1.0)):.3g})")


@dataclass
class SmnarxModel:
    """Parameters of a switched polynomial NARX model.

    Parameters
    ----------
    basis : PolynomialBasis
        Shared regressor dictionary.
    theta : ndarray, shape (n_modes, n_terms)
        Per-mode coefficient vectors over the basis.
    sigma2 : float
        Shared output noise variance.
    transition : ndarray, shape (n_modes, n_modes)
        Row-stochastic mode transition matrix.
    initial : ndarray, shape (n_modes,)
        Initial mode distribution.
    """

    basis: PolynomialBasis
    theta: np.ndarray
    sigma2: float
    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self) -> None:
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.float64))
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        self.sigma2 = float(self.sigma2)
        s = self.theta.shape[0]
        if self.theta.shape[1] != self.basis.n_terms:
            raise ValueError(
                f"theta has {self.theta.shape[1]} columns, basis has {self.basis.n_terms} terms"
            )
        if self.transition.shape != (s, s):
            raise ValueError(f"transition must be ({s}, {s})")
        if self.initial.shape != (s,):
            raise ValueError(f"initial must have length {s}")
        if self.sigma2 < VAR_FLOOR:
            raise ValueError(f"sigma2 must be >= {VAR_FLOOR}")
        _check_stochastic(self.transition, "transition")
        _check_stochastic(self.initial, "initial")

    @property
    def n_modes(self) -> int:
        return self.theta.shape[0]

    @property
    def config(self) -> BasisConfig:
        return self.basis.config

    def supports(self) -> list[np.ndarray]:
        """Indices of nonzero coefficients per mode."""
        return [np.flatnonzero(self.theta[s]) for s in range(self.n_modes)]

    def support_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.supports()], dtype=np.int64)

    def describe(self) -> str:
        """Human-readable listing of the active terms per mode."""
        lines = []
        for s in range(self.n_modes):
            terms = [
                f"{self.theta[s, i]:+.4f}*{self.basis.term_label(i)}"
                for i in np.flatnonzero(self.theta[s])
            ]
            lines.append(f"mode {s + 1}: " + (" ".join(terms) if terms else "0"))
        lines.append(f"sigma2: {self.sigma2:.6g}")
        return "\n".join(lines)

    def _payload(self) -> dict:
        modes = []
        for s in range(self.n_modes):
            idx = np.flatnonzero(self.theta[s])
            modes.append(
                {
                    "indices": [int(i) for i in idx],
                    "values": [float(v) for v in self.theta[s, idx]],
                }
            )
        return {
            "basis": self.basis.to_json(),
            "n_modes": self.n_modes,
            "theta": modes,
            "sigma2": self.sigma2,
            "transition": self.transition.tolist(),
            "initial": self.initial.tolist(),
        }

    def to_json(self) -> dict:
        return self._payload()

    @classmethod
    def from_json(cls, payload: dict) -> "SmnarxModel":
        basis = PolynomialBasis.from_json(payload["basis"])
        s = int(payload["n_modes"])
        theta = np.zeros((s, basis.n_terms))
        for m, entry in enumerate(payload["theta"]):
            idx = np.asarray(entry["indices"], dtype=np.int64)
            if idx.size:
                theta[m, idx] = np.asarray(entry["values"], dtype=np.float64)
        return cls(
            basis=basis,
            theta=theta,
            sigma2=float(payload["sigma2"]),
            transition=np.asarray(payload["transition"], dtype=np.float64),
            initial=np.asarray(payload["initial"], dtype=np.float64),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SmnarxModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class TrueSystem:
    """Ground-truth system: model parameters plus the input excitation law.

    Unlike :class:`SmnarxModel` the noise level may be exactly zero, which
    is useful for deterministic simulations; ``as_model`` floors the
    variance so the result is always usable for inference.
    """

    basis: PolynomialBasis
    theta: np.ndarray
    noise_std: float
    transition: np.ndarray
    initial: np.ndarray
    input_law: dict = field(default_factory=lambda: {"kind": "uniform", "low": -1.0, "high": 1.0})

    def __post_init__(self) -> None:
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.float64))
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        self.noise_std = float(self.noise_std)
        s = self.theta.shape[0]
        if self.theta.shape[1] != self.basis.n_terms:
            raise ValueError("theta width must match the basis size")
        if self.transition.shape != (s, s) or self.initial.shape != (s,):
            raise ValueError("transition/initial shapes must match the mode count")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be >= 0")
        _check_stochastic(self.transition, "transition", tol=1e-12)
        _check_stochastic(self.initial, "initial", tol=1e-12)
        kind = self.input_law.get("kind")
        if kind != "uniform":
            raise ValueError(f"unsupported input law {kind!r}")
        if float(self.input_law["low"]) >= float(self.input_law["high"]):
            raise ValueError("input law requires low < high")

    @property
    def n_modes(self) -> int:
        return self.theta.shape[0]

    @property
    def config(self) -> BasisConfig:
        return self.basis.config

    def as_model(self) -> SmnarxModel:
        """The same parameters as an inference-ready model (variance floored)."""
        return SmnarxModel(
            basis=self.basis,
            theta=self.theta.copy(),
            sigma2=max(self.noise_std**2, VAR_FLOOR),
            transition=self.transition.copy(),
            initial=self.initial.copy(),
        )

    def to_json(self) -> dict:
        payload = self.as_model().to_json()
        payload["sigma2"] = self.noise_std**2
        payload["input_law"] = dict(self.input_law)
        return payload

    @classmethod
    def from_json(cls, payload: dict) -> "TrueSystem":
        basis = PolynomialBasis.from_json(payload["basis"])
        s = int(payload["n_modes"])
        theta = np.zeros((s, basis.n_terms))
        for m, entry in enumerate(payload["theta"]):
            idx = np.asarray(entry["indices"], dtype=np.int64)
            if idx.size:
                theta[m, idx] = np.asarray(entry["values"], dtype=np.float64)
        law = payload.get("input_law", {"kind": "uniform", "low": -1.0, "high": 1.0})
        return cls(
            basis=basis,
            theta=theta,
            noise_std=float(payload["sigma2"]) ** 0.5,
            transition=np.asarray(payload["transition"], dtype=np.float64),
            initial=np.asarray(payload["initial"], dtype=np.float64),
            input_law=dict(law),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrueSystem":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

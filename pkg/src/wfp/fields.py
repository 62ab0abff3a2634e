"""Space-time field and spectrum containers with CSV / raw-binary round trips.

The CSV layout puts the spatial grid in the header row and one row per
output time, each row starting with the time value. The binary format is
raw little-endian float64 samples (time-major) next to a JSON sidecar that
stores the grids, so a file pair is self-describing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class SpaceTimeField:
    """Samples u(t_i, x_q) of a scalar field on a tensor-product grid.

    Attributes
    ----------
    x : ndarray, shape (Q,)
        Spatial sample points, ascending.
    t : ndarray, shape (Nt,)
        Output times, ascending.
    u : ndarray, shape (Nt, Q)
        Field samples, u[i, q] at (t[i], x[q]).
    """

    x: np.ndarray
    t: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (self.t.size, self.x.size):
            raise ValueError(
                f"field shape {self.u.shape} does not match grid "
                f"({self.t.size}, {self.x.size})"
            )

    def same_grid(self, other: "SpaceTimeField", tol: float = 1e-12) -> bool:
        return (
            self.x.shape == other.x.shape
            and self.t.shape == other.t.shape
            and np.allclose(self.x, other.x, rtol=0.0, atol=tol)
            and np.allclose(self.t, other.t, rtol=0.0, atol=tol)
        )

    def to_csv(self, path):
        # repr of the builtin float round-trips exactly; numpy scalar repr
        # carries a type prefix that float() cannot parse back
        with open(path, "w") as fh:
            fh.write(",".join(repr(float(v)) for v in self.x) + "\n")
            for ti, row in zip(self.t, self.u):
                fh.write(repr(float(ti)) + ","
                         + ",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "SpaceTimeField":
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        x = np.array([float(v) for v in lines[0].split(",")])
        t = np.empty(len(lines) - 1)
        u = np.empty((len(lines) - 1, x.size))
        for i, ln in enumerate(lines[1:]):
            vals = [float(v) for v in ln.split(",")]
            t[i] = vals[0]
            u[i] = vals[1:]
        return cls(x=x, t=t, u=u)

    def to_binary(self, path):
        path = Path(path)
        path.write_bytes(self.u.astype("<f8").tobytes())
        sidecar = {
            "dtype": "<f8",
            "order": "time-major",
            "nt": int(self.t.size),
            "nx": int(self.x.size),
            "t": self.t.tolist(),
            "x": self.x.tolist(),
        }
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps(sidecar, indent=1)
        )

    @classmethod
    def from_binary(cls, path) -> "SpaceTimeField":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        u = np.frombuffer(path.read_bytes(), dtype=meta["dtype"]).reshape(
            meta["nt"], meta["nx"]
        )
        return cls(x=np.array(meta["x"]), t=np.array(meta["t"]), u=u.copy())


@dataclass
class Spectrum:
    """One-sided magnitude spectrum |u_hat| at ascending angular frequencies."""

    omega: np.ndarray
    magnitude: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.magnitude = np.asarray(self.magnitude, dtype=float)
        if self.omega.shape != self.magnitude.shape:
            raise ValueError("omega and magnitude must have the same shape")
        if np.any(np.diff(self.omega) <= 0):
            raise ValueError("frequencies must be strictly ascending")
        if np.any(self.magnitude < 0):
            raise ValueError("magnitudes must be nonnegative")

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("omega,magnitude\n")
            for w, m in zip(self.omega, self.magnitude):
                fh.write(f"{float(w)!r},{float(m)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "Spectrum":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(omega=data[:, 0], magnitude=data[:, 1])

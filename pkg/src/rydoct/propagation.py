"""Split-operator propagation of a wave packet under H(t) = H0 + E(t) z.

H0 is diagonal in the stored basis, so each half step is a phase rotation.
The field factor exp(-i E z dt) is applied exactly through a cached
eigendecomposition of the z matrix.  Every factor is unitary, which makes
forward and (adjoint) backward sweeps exact inverses of each other; the
scheme is accurate to second order in the time step.

The field is treated as piecewise constant over each step, with the value
taken at the step's left endpoint.  The optimal-control sweeps rely on this
one convention being used everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .atomic import HamiltonianData, StateLabel
from .errors import InvalidSpecError

__all__ = [
    "WavePacket",
    "PulseGrid",
    "ZEigensystem",
    "precompute_z_eigensystem",
    "split_step",
    "propagate",
    "apply_absorber_mask",
    "boundary_labels",
]


@dataclass
class WavePacket:
    """Complex amplitudes over the basis labels at one instant."""

    amplitudes: np.ndarray
    time: float = 0.0

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class PulseGrid:
    """Uniformly sampled real control field E(t_j), t_j = t0 + j dt.

    The horizon is T = t0 + (len(samples) - 1) dt; propagation over the grid
    takes len(samples) - 1 steps, step j using E(t_j).  The final sample is
    the field value at T itself and is not consumed by any step.
    """

    t0: float
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidSpecError(f"dt must be positive, got {self.dt}")
        if len(self.samples) < 2:
            raise InvalidSpecError("a pulse grid needs at least 2 samples")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidSpecError("pulse samples must be finite")

    @property
    def n_steps(self) -> int:
        return len(self.samples) - 1

    @property
    def horizon(self) -> float:
        return self.t0 + self.n_steps * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    def with_samples(self, samples: np.ndarray) -> "PulseGrid":
        return PulseGrid(t0=self.t0, dt=self.dt, samples=np.asarray(samples, dtype=float))

    @classmethod
    def zeros(cls, t0: float, dt: float, n_samples: int) -> "PulseGrid":
        return cls(t0=t0, dt=dt, samples=np.zeros(n_samples))


@dataclass(frozen=True)
class ZEigensystem:
    """Cached spectral decomposition z = V diag(w) V^T (V orthogonal)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    hamiltonian: HamiltonianData

    def reconstruction_error(self) -> float:
        z = (self.vectors * self.eigenvalues) @ self.vectors.T
        return float(np.max(np.abs(z - self.hamiltonian.z_matrix)))


def precompute_z_eigensystem(h: HamiltonianData) -> ZEigensystem:
    """Diagonalize the z matrix once; reused by every step of every sweep."""
    scale = max(float(np.max(np.abs(h.z_matrix))), 1.0)
    if float(np.max(np.abs(h.z_matrix - h.z_matrix.T))) > 1e-12 * scale:
        raise InvalidSpecError("z matrix must be symmetric")
    w, v = np.linalg.eigh(h.z_matrix)
    return ZEigensystem(eigenvalues=w, vectors=np.ascontiguousarray(v), hamiltonian=h)


def _step(
    amps: np.ndarray,
    e_field: float,
    half_phase: np.ndarray,
    dt: float,
    zsys: ZEigensystem,
) -> np.ndarray:
    a = half_phase * amps
    if e_field != 0.0:
        a = zsys.vectors @ (np.exp(-1j * dt * e_field * zsys.eigenvalues) * (zsys.vectors.T @ a))
    return half_phase * a


def split_step(
    psi: WavePacket,
    e_field: float,
    dt: float,
    h: HamiltonianData,
    zsys: ZEigensystem,
) -> WavePacket:
    """One symmetric step exp(-i H0 dt/2) exp(-i E z dt) exp(-i H0 dt/2).

    Each factor is unitary, so the norm is preserved exactly.  A negative dt
    applies the adjoint (inverse) step, which backward costate sweeps use.
    """
    half = np.exp(-0.5j * dt * h.energies)
    return WavePacket(
        amplitudes=_step(psi.amplitudes, e_field, half, dt, zsys),
        time=psi.time + dt,
    )


def boundary_labels(h: HamiltonianData) -> list[StateLabel]:
    """States on the basis edges: lowest n, highest n, and highest l shell."""
    n_min = min(s.n for s in h.labels)
    n_max = max(s.n for s in h.labels)
    l_top = max(s.l for s in h.labels)
    return [s for s in h.labels if s.n in (n_min, n_max) or s.l == l_top]


def apply_absorber_mask(
    psi: WavePacket,
    labels,
    strength: float,
    h: HamiltonianData,
) -> WavePacket:
    """Damp amplitudes on the given states by (1 - strength); norm never grows."""
    if not 0.0 <= strength <= 1.0:
        raise InvalidSpecError(f"absorber strength must be in [0, 1], got {strength}")
    amps = psi.amplitudes.copy()
    for label in labels:
        amps[h.index(label)] *= 1.0 - strength
    return WavePacket(amplitudes=amps, time=psi.time)


def propagate(
    psi0: WavePacket,
    pulse: PulseGrid,
    h: HamiltonianData,
    zsys: ZEigensystem,
    record: int | None = 1,
    absorber: tuple[list, float] | None = None,
) -> tuple[list[WavePacket], WavePacket]:
    """Propagate psi0 across the whole pulse grid.

    `record` is the sampling stride: 1 stores every step, k every k-th step,
    None only the final state.  The initial state and the final state are
    always part of a recorded trajectory.  `absorber` is an optional
    (labels, strength) pair applied after every step; it breaks unitarity
    and is meant for forward-only diagnostics, not for optimization sweeps.
    """
    if abs(psi0.norm() - 1.0) > 1e-8:
        raise InvalidSpecError("initial wave packet must be normalized")
    if record is not None and record < 1:
        raise InvalidSpecError("record stride must be a positive integer or None")

    mask = None
    if absorber is not None:
        labels, strength = absorber
        if not 0.0 <= strength <= 1.0:
            raise InvalidSpecError(f"absorber strength must be in [0, 1], got {strength}")
        mask = np.ones(h.dim)
        for label in labels:
            mask[h.index(label)] = 1.0 - strength

    half = np.exp(-0.5j * pulse.dt * h.energies)
    amps = psi0.amplitudes.astype(complex)
    t = pulse.t0
    trajectory: list[WavePacket] = []
    if record is not None:
        trajectory.append(WavePacket(amplitudes=amps.copy(), time=t))

    samples = pulse.samples
    for j in range(pulse.n_steps):
        amps = _step(amps, float(samples[j]), half, pulse.dt, zsys)
        if mask is not None:
            amps = amps * mask
        t += pulse.dt
        if record is not None and ((j + 1) % record == 0 or j + 1 == pulse.n_steps):
            trajectory.append(WavePacket(amplitudes=amps.copy(), time=t))

    final = WavePacket(amplitudes=amps, time=t)
    if record is None:
        trajectory = [final]
    return trajectory, final

"""Restricted-basis model atom: quantum-defect energies and dipole couplings.

The model Hamiltonian is H(t) = H0 + E(t) z in a truncated set of bound
states |n, l> (m = 0 throughout).  Level energies come from the
quantum-defect formula E = -1/(2 (n - delta_l)^2).  Radial wavefunctions are
obtained by integrating the Coulomb equation inward at that energy on a
square-root radial mesh, which reproduces the exact hydrogen functions when
all defects vanish and the standard outer-region (Whittaker-like)
approximation otherwise.  For nonzero defects the rapid oscillations of the
true wavefunction inside the ionic core are not represented; dipole matrix
elements between high-n states are dominated by large radii where the
approximation is good.

All quantities are in Hartree atomic units.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ConvergenceError,
    GridExtentError,
    InvalidSpecError,
    ValidationError,
)

# Spectroscopic letters for l = 0, 1, 2, ...; j is skipped by convention.
_L_LETTERS = "spdfghiklmnoqrtuvwxyz"

#: Cesium-like quantum defects (s, p, d, f); zero for higher l.
CESIUM_DEFECTS = {0: 4.05, 1: 3.59, 2: 2.47, 3: 0.033}


def l_letter(l: int) -> str:
    if 0 <= l < len(_L_LETTERS):
        return _L_LETTERS[l]
    return f"(l={l})"


@dataclass(frozen=True, order=True)
class StateLabel:
    """One basis orbital |n, l> with m = 0."""

    n: int
    l: int

    def __post_init__(self):
        if not (0 <= self.l < self.n):
            raise InvalidSpecError(f"invalid state: n={self.n}, l={self.l}")

    def __str__(self) -> str:
        return f"{self.n}{l_letter(self.l)}"

    @classmethod
    def parse(cls, text: str) -> "StateLabel":
        m = re.fullmatch(r"(\d+)([a-z])", text.strip())
        if not m:
            raise InvalidSpecError(f"cannot parse state label {text!r}")
        letter = m.group(2)
        if letter not in _L_LETTERS:
            raise InvalidSpecError(f"unknown angular-momentum letter in {text!r}")
        return cls(n=int(m.group(1)), l=_L_LETTERS.index(letter))


@dataclass(frozen=True)
class BasisSpec:
    """Rectangular basis selection: n in [n_min, n_max], l < min(n, l_max).

    `quantum_defects` maps l to the defect delta_l; unlisted l have zero
    defect.  Defects must keep every included state bound (delta_l < n_min).
    """

    n_min: int
    n_max: int
    l_max: int
    quantum_defects: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_min < 1:
            raise InvalidSpecError(f"n_min must be >= 1, got {self.n_min}")
        if self.n_max < self.n_min:
            raise InvalidSpecError(f"n_max={self.n_max} < n_min={self.n_min}")
        if self.l_max < 1:
            raise InvalidSpecError(f"l_max must be >= 1, got {self.l_max}")
        for l, delta in self.quantum_defects.items():
            if delta < 0:
                raise InvalidSpecError(f"negative quantum defect for l={l}")
            if delta >= self.n_min:
                raise InvalidSpecError(
                    f"quantum defect {delta} for l={l} exceeds n_min={self.n_min}; "
                    "states would be unbound or invalid"
                )

    def defect(self, l: int) -> float:
        return float(self.quantum_defects.get(l, 0.0))

    def states(self) -> list[StateLabel]:
        return [
            StateLabel(n, l)
            for n in range(self.n_min, self.n_max + 1)
            for l in range(0, min(n, self.l_max))
        ]


@dataclass(frozen=True)
class RadialGrid:
    """Square-root radial mesh: x = sqrt(r) uniform, r strictly increasing."""

    r: np.ndarray
    x: np.ndarray
    kind: str = "sqrt"

    def __post_init__(self):
        if self.r[0] <= 0:
            raise InvalidSpecError("radial grid must start at r > 0")
        if np.any(np.diff(self.r) <= 0):
            raise InvalidSpecError("radial grid must be strictly increasing")

    @property
    def n_points(self) -> int:
        return len(self.r)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @classmethod
    def for_basis(
        cls,
        n_max: int,
        n_points: int = 20000,
        r_min: float = 1e-4,
        r_max: float | None = None,
    ) -> "RadialGrid":
        """Default mesh: 20000 points on r in [1e-4, 2.5 n_max^2]."""
        if r_max is None:
            r_max = 2.5 * n_max * n_max
        x = np.linspace(math.sqrt(r_min), math.sqrt(r_max), n_points)
        return cls(r=x * x, x=x)


def quantum_defect_energy(n: int, l: int, defects: dict[int, float]) -> float:
    """Level energy -1 / (2 (n - delta_l)^2) in Hartree.

    Raises InvalidSpecError if n <= delta_l (no bound state).
    """
    delta = float(defects.get(l, 0.0))
    if n <= delta:
        raise InvalidSpecError(f"n={n} does not exceed quantum defect {delta} for l={l}")
    nu = n - delta
    return -1.0 / (2.0 * nu * nu)


@dataclass(frozen=True)
class RadialSolution:
    """Normalized reduced radial wavefunction u(r) = r R(r) on the grid."""

    n: int
    l: int
    energy: float
    u: np.ndarray
    nodes: int


def _numerov_inward(g: np.ndarray, h: float, k_start: int) -> np.ndarray:
    """Integrate y'' = g y from index k_start down to 0; y = 0 above k_start."""
    y = np.zeros(len(g))
    if k_start < 2:
        raise GridExtentError("grid too small for inward integration")
    y[k_start] = 0.0
    y[k_start - 1] = 1e-15
    c = h * h / 12.0
    glist = g.tolist()
    ylist = y.tolist()
    for k in range(k_start - 1, 0, -1):
        gk = glist[k]
        ylist[k - 1] = (
            2.0 * ylist[k] * (1.0 + 5.0 * c * gk) - ylist[k + 1] * (1.0 - c * glist[k + 1])
        ) / (1.0 - c * glist[k - 1])
    return np.asarray(ylist)


def _numerov_outward(g: np.ndarray, h: float, y0: float, y1: float, k_stop: int) -> np.ndarray:
    """Integrate y'' = g y from index 0 up to k_stop (inclusive)."""
    c = h * h / 12.0
    glist = g.tolist()
    ylist = [0.0] * (k_stop + 1)
    ylist[0], ylist[1] = y0, y1
    for k in range(1, k_stop):
        gk = glist[k]
        ylist[k + 1] = (
            2.0 * ylist[k] * (1.0 + 5.0 * c * gk) - ylist[k - 1] * (1.0 - c * glist[k - 1])
        ) / (1.0 - c * glist[k + 1])
    return np.asarray(ylist)


def _sqrt_mesh_g(grid: RadialGrid, l: int, energy: float) -> np.ndarray:
    # On the x = sqrt(r) mesh with y = u / sqrt(2 x), the radial equation
    # becomes y'' = g(x) y with an effective centrifugal index 2l + 1/2.
    lam = 2 * l + 0.5
    return lam * (lam + 1.0) / (grid.x * grid.x) - 8.0 - 8.0 * energy * grid.x * grid.x


def _count_nodes(u: np.ndarray) -> int:
    # Sign changes between samples of substantial amplitude; the floor keeps
    # residual integration noise near the origin from registering as nodes.
    floor = 1e-6 * float(np.max(np.abs(u)))
    signs = np.sign(u[np.abs(u) > floor])
    if len(signs) < 2:
        return 0
    return int(np.count_nonzero(signs[:-1] * signs[1:] < 0))


def solve_radial(
    n: int,
    l: int,
    defects: dict[int, float],
    grid: RadialGrid,
) -> RadialSolution:
    """Solve for u(r) at the quantum-defect energy by inward Numerov integration.

    The energy is fixed at -1/(2 nu^2), nu = n - delta_l, and the pure Coulomb
    equation is integrated inward from the classically forbidden outer region.
    For delta_l = 0 this is the exact hydrogen eigenfunction and carries
    n - l - 1 radial nodes (enforced).  For delta_l > 0 the solution is the
    outer-region approximation to the true alkali wavefunction; it is
    truncated where it starts to diverge inside the core, and its node count
    reflects the effective quantum number rather than n.

    Raises GridExtentError if the grid cannot hold the state.
    """
    delta = float(defects.get(l, 0.0))
    energy = quantum_defect_energy(n, l, defects)
    nu = n - delta

    r_needed = 2.0 * nu * nu
    if grid.r[-1] < 1.02 * r_needed:
        raise GridExtentError(
            f"grid extends to r={grid.r[-1]:.1f} but state {n}{l_letter(l)} "
            f"requires roughly {1.02 * r_needed:.1f} bohr"
        )

    # Start the inward sweep far enough outside the turning point that the
    # decaying tail is negligible there, but close enough to avoid overflow.
    r_start = min(grid.r[-1], 2.0 * nu * (nu + 15.0))
    k_start = min(int(np.searchsorted(grid.r, r_start)), grid.n_points - 1)

    g = _sqrt_mesh_g(grid, l, energy)
    y = _numerov_inward(g, grid.dx, k_start)
    u = y * np.sqrt(2.0 * grid.x)

    # Below the inner turning point |u| must decrease toward the origin.
    # Inward integration eventually excites the irregular solution there
    # (physically for nonzero defects, numerically for l >= 1); cut at the
    # minimum of |u| if the amplitude starts growing again.
    disc = 1.0 - l * (l + 1.0) / (nu * nu)
    r_inner = nu * nu * (1.0 - math.sqrt(disc)) if disc > 0 else 0.0
    k_inner = int(np.searchsorted(grid.r, max(r_inner, grid.r[0])))
    if k_inner > 2:
        seg = np.abs(u[:k_inner])
        k_cut = int(np.argmin(seg))
        if k_cut > 0:
            u = u.copy()
            u[:k_cut] = 0.0

    peak = float(np.max(np.abs(u)))
    if peak == 0.0:
        raise ConvergenceError(f"inward integration produced no amplitude for {n}{l_letter(l)}")

    # Decay check at the outer boundary (skipped when the start point already
    # sits well inside the grid, where the tail is zero by construction).
    if k_start >= grid.n_points - 2:
        tail = float(np.max(np.abs(u[-grid.n_points // 50 :])))
        if tail > 0.05 * peak:
            raise GridExtentError(
                f"wavefunction of {n}{l_letter(l)} has not decayed at the grid boundary"
            )

    norm = math.sqrt(np.trapezoid(u * u, grid.r))
    u = u / norm
    # Sign convention: positive outermost antinode.
    k_peak = int(np.argmax(np.abs(u)))
    if u[k_peak] < 0:
        u = -u

    nodes = _count_nodes(u)
    if delta == 0.0 and nodes != n - l - 1:
        raise ConvergenceError(
            f"hydrogenic state {n}{l_letter(l)} produced {nodes} nodes, "
            f"expected {n - l - 1}; grid too coarse?"
        )
    return RadialSolution(n=n, l=l, energy=energy, u=u, nodes=nodes)


def find_coulomb_eigenvalue(
    l: int,
    target_nodes: int,
    grid: RadialGrid,
    e_min: float,
    e_max: float,
    tol: float = 1e-10,
) -> float:
    """Locate a Coulomb bound energy by two-sided shooting on [e_min, e_max].

    Integrates outward from the origin and inward from the boundary and
    bisects on the derivative mismatch at the matching point.  This is an
    independent check of the quantum-defect formula for integer effective
    quantum number (hydrogen).  Raises ConvergenceError if the bracket does
    not contain a sign change or the converged state has the wrong node count.
    """
    if not (e_min < e_max < 0.0):
        raise ConvergenceError("eigenvalue bracket must satisfy e_min < e_max < 0")

    def shoot(energy: float) -> tuple[float, np.ndarray]:
        # Integrate outward from the origin well past the outer turning
        # point.  The diverging tail there is dominated by the growing
        # solution, whose coefficient changes sign exactly at eigenvalues.
        nu = 1.0 / math.sqrt(-2.0 * energy)
        r_far = min(grid.r[-1], 2.0 * nu * (nu + 15.0))
        k_far = min(int(np.searchsorted(grid.r, r_far)), grid.n_points - 1)
        if grid.r[k_far] < 2.2 * nu * nu:
            raise GridExtentError("grid too small for the eigenvalue search")
        g = _sqrt_mesh_g(grid, l, energy)
        y0 = grid.x[0] ** (2 * l + 1.5)
        y1 = grid.x[1] ** (2 * l + 1.5)
        y = _numerov_outward(g, grid.dx, y0, y1, k_far)
        return float(y[k_far] / np.max(np.abs(y))), y

    f_lo, _ = shoot(e_min)
    f_hi, _ = shoot(e_max)
    if f_lo * f_hi > 0:
        raise ConvergenceError(
            f"eigenvalue search failed to bracket a root in [{e_min}, {e_max}]"
        )
    energy = float(brentq(lambda e: shoot(e)[0], e_min, e_max, xtol=tol))

    _, y = shoot(energy)
    # Count nodes below the outer turning point; the residual tail beyond it
    # still carries a slightly off-eigenvalue divergence.
    nu = 1.0 / math.sqrt(-2.0 * energy)
    k_out = max(int(np.searchsorted(grid.r, 2.0 * nu * nu)), 2)
    nodes = _count_nodes(y[:k_out])
    if nodes != target_nodes:
        raise ConvergenceError(
            f"converged to a state with {nodes} nodes, expected {target_nodes}"
        )
    return energy


def angular_dipole_factor(l_lower: int) -> float:
    """<l+1, 0 | cos(theta) | l, 0> for m = 0."""
    l = l_lower
    return (l + 1.0) / math.sqrt((2.0 * l + 1.0) * (2.0 * l + 3.0))


class RadialBasisSolver:
    """Caches radial solutions for one (defects, grid) combination."""

    def __init__(self, defects: dict[int, float], grid: RadialGrid):
        self.defects = dict(defects)
        self.grid = grid
        self._cache: dict[tuple[int, int], RadialSolution] = {}

    def solution(self, n: int, l: int) -> RadialSolution:
        key = (n, l)
        if key not in self._cache:
            self._cache[key] = solve_radial(n, l, self.defects, self.grid)
        return self._cache[key]


def dipole_matrix_element(a: StateLabel, b: StateLabel, solver: RadialBasisSolver) -> float:
    """<a| z |b> in atomic units; exactly zero unless |l_a - l_b| = 1."""
    if abs(a.l - b.l) != 1:
        return 0.0
    ua = solver.solution(a.n, a.l).u
    ub = solver.solution(b.n, b.l).u
    radial = float(np.trapezoid(ua * solver.grid.r * ub, solver.grid.r))
    return angular_dipole_factor(min(a.l, b.l)) * radial


@dataclass
class HamiltonianData:
    """Field-free energies and the z (dipole) matrix over the basis labels."""

    labels: tuple[StateLabel, ...]
    energies: np.ndarray
    z_matrix: np.ndarray
    provenance: str = "generated"
    basis_spec: BasisSpec | None = None

    def __post_init__(self):
        self._index = {label: i for i, label in enumerate(self.labels)}

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: StateLabel | str) -> int:
        if isinstance(label, str):
            label = StateLabel.parse(label)
        try:
            return self._index[label]
        except KeyError:
            raise InvalidSpecError(f"state {label} is not in the basis") from None

    def validate(self) -> None:
        if len(self.energies) != self.dim or self.z_matrix.shape != (self.dim, self.dim):
            raise ValidationError("energies / z_matrix shapes do not match the labels")
        if np.any(self.energies >= 0):
            bad = self.labels[int(np.argmax(self.energies >= 0))]
            raise ValidationError(f"energy of {bad} is not negative")
        scale = max(float(np.max(np.abs(self.z_matrix))), 1.0)
        asym = np.abs(self.z_matrix - self.z_matrix.T)
        if float(np.max(asym)) > 1e-12 * scale:
            i, j = np.unravel_index(int(np.argmax(asym)), asym.shape)
            raise ValidationError(
                f"z matrix is not symmetric at ({self.labels[i]}, {self.labels[j]})"
            )
        for i, a in enumerate(self.labels):
            for j, b in enumerate(self.labels):
                if abs(a.l - b.l) != 1 and self.z_matrix[i, j] != 0.0:
                    raise ValidationError(
                        f"selection-rule violation: <{a}|z|{b}> = {self.z_matrix[i, j]}"
                    )


def build_hamiltonian(spec: BasisSpec, grid: RadialGrid | None = None) -> HamiltonianData:
    """Construct HamiltonianData for every state selected by `spec`.

    Labels are ordered by (n, l).  The z matrix is computed only for
    selection-rule-allowed pairs and is symmetric by construction.
    """
    if grid is None:
        grid = RadialGrid.for_basis(spec.n_max)
    labels = tuple(spec.states())
    solver = RadialBasisSolver(spec.quantum_defects, grid)
    energies = np.array(
        [quantum_defect_energy(s.n, s.l, spec.quantum_defects) for s in labels]
    )
    dim = len(labels)
    z = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(i + 1, dim):
            if abs(labels[i].l - labels[j].l) == 1:
                val = dipole_matrix_element(labels[i], labels[j], solver)
                z[i, j] = val
                z[j, i] = val
    data = HamiltonianData(
        labels=labels, energies=energies, z_matrix=z, provenance="generated", basis_spec=spec
    )
    data.validate()
    return data


# ---------------------------------------------------------------------------
# Hamiltonian file format: key-value header, then [energies] and [dipoles]
# sections.  Values are written with repr() so a save/load round trip is
# bit-exact.  Only nonzero dipole entries are stored, one per unordered pair.
# ---------------------------------------------------------------------------


def save_hamiltonian(data: HamiltonianData, path) -> None:
    data.validate()
    spec = data.basis_spec
    if spec is None:
        raise ValidationError("cannot save a Hamiltonian without its basis spec")
    lines = ["# rydoct hamiltonian format 1"]
    lines.append(f"n_min {spec.n_min}")
    lines.append(f"n_max {spec.n_max}")
    lines.append(f"l_max {spec.l_max}")
    for l in sorted(spec.quantum_defects):
        lines.append(f"defect {l} {spec.quantum_defects[l]!r}")
    lines.append(f"provenance {data.provenance}")
    lines.append("[energies]")
    for label, energy in zip(data.labels, data.energies):
        lines.append(f"{label} {float(energy)!r}")
    lines.append("[dipoles]")
    for i, a in enumerate(data.labels):
        for j in range(i + 1, data.dim):
            if data.z_matrix[i, j] != 0.0:
                lines.append(f"{a} {data.labels[j]} {float(data.z_matrix[i, j])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_hamiltonian(path) -> HamiltonianData:
    """Load and validate a Hamiltonian file; raises ValidationError on defects."""
    header: dict[str, str] = {}
    defects: dict[int, float] = {}
    energies: dict[StateLabel, float] = {}
    dipoles: dict[tuple[StateLabel, StateLabel], float] = {}
    section = "header"
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "[energies]":
                section = "energies"
                continue
            if line == "[dipoles]":
                section = "dipoles"
                continue
            parts = line.split()
            try:
                if section == "header":
                    if parts[0] == "defect":
                        defects[int(parts[1])] = float(parts[2])
                    else:
                        header[parts[0]] = parts[1]
                elif section == "energies":
                    energies[StateLabel.parse(parts[0])] = float(parts[1])
                else:
                    a = StateLabel.parse(parts[0])
                    b = StateLabel.parse(parts[1])
                    value = float(parts[2])
                    key = (a, b) if a <= b else (b, a)
                    if key in dipoles and dipoles[key] != value:
                        raise ValidationError(
                            f"line {lineno}: <{a}|z|{b}> = {value} contradicts the "
                            f"transposed entry {dipoles[key]}"
                        )
                    dipoles[key] = value
            except (IndexError, ValueError) as exc:
                raise ValidationError(f"line {lineno}: cannot parse {line!r}") from exc

    for key in ("n_min", "n_max", "l_max"):
        if key not in header:
            raise ValidationError(f"missing header key {key!r}")
    spec = BasisSpec(
        n_min=int(header["n_min"]),
        n_max=int(header["n_max"]),
        l_max=int(header["l_max"]),
        quantum_defects=defects,
    )
    labels = tuple(spec.states())
    for label in labels:
        if label not in energies:
            raise ValidationError(f"missing energy for state {label}")
    for label in energies:
        if label not in labels:
            raise ValidationError(f"energy row for {label} is outside the declared basis")

    dim = len(labels)
    index = {label: i for i, label in enumerate(labels)}
    z = np.zeros((dim, dim))
    for (a, b), value in dipoles.items():
        if a not in index or b not in index:
            raise ValidationError(f"dipole entry ({a}, {b}) is outside the declared basis")
        if abs(a.l - b.l) != 1:
            raise ValidationError(f"selection-rule violation in file: <{a}|z|{b}> = {value}")
        z[index[a], index[b]] = value
        z[index[b], index[a]] = value

    data = HamiltonianData(
        labels=labels,
        energies=np.array([energies[label] for label in labels]),
        z_matrix=z,
        provenance=header.get("provenance", "loaded"),
        basis_spec=spec,
    )
    data.validate()
    return data

"""Dense complex-matrix helpers and the density-operator data model.

All operators live in the fixed basis (|m>, |n>, |e>, |a>). Population in the
untouched levels |1>...|N> is carried as a single scalar ``spectator_weight``;
those levels never mix with the simulated block.
"""

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
import numpy.typing as npt

from stirap_tomo.errors import DimensionError, PhysicalityError, SupportError

ComplexMatrix = npt.NDArray[np.complex128]

# Basis order
M, N, E, A = 0, 1, 2, 3
DIM = 4

HERMITIAN_TOL = 1e-12
EIGENVALUE_TOL = 1e-10
# Accumulated round-off after long dissipative integrations
RELAXED_HERMITIAN_TOL = 1e-10
RELAXED_EIGENVALUE_TOL = 1e-8
TRACE_TOL = 1e-10
SUPPORT_TOL = 1e-10


def ket(index: int, dim: int = DIM) -> npt.NDArray[np.complex128]:
    """Return the computational basis vector ``|index>``."""
    vec = np.zeros(dim, dtype=np.complex128)
    vec[index] = 1.0
    return vec


def projector(index: int, dim: int = DIM) -> ComplexMatrix:
    """Return ``|index><index|``."""
    op = np.zeros((dim, dim), dtype=np.complex128)
    op[index, index] = 1.0
    return op


def outer(bra_side: np.ndarray, ket_side: np.ndarray) -> ComplexMatrix:
    """Return ``|bra_side><ket_side|`` (the second vector is conjugated)."""
    return np.outer(bra_side, np.conj(ket_side))


def as_square(m: npt.ArrayLike) -> ComplexMatrix:
    """Coerce ``m`` to a square complex matrix or raise ``DimensionError``."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def hermitian_defect(m: npt.ArrayLike) -> float:
    """Return ``max |m[i, j] - conj(m[j, i])|`` over all entries."""
    arr = as_square(m)
    return float(np.max(np.abs(arr - arr.conj().T)))


def min_eigenvalue(m: npt.ArrayLike, tol: float = EIGENVALUE_TOL) -> float:
    """Return the smallest eigenvalue of a Hermitian matrix.

    Args:
        m: Square matrix, Hermitian within ``tol`` relative to its norm.
        tol: Relative Hermiticity tolerance.

    Returns:
        The smallest eigenvalue.

    Raises:
        PhysicalityError: If ``m`` is not Hermitian within tolerance.
    """
    arr = as_square(m)
    scale = max(1.0, float(np.linalg.norm(arr, ord=2)))
    defect = hermitian_defect(arr)
    if defect > tol * scale:
        raise PhysicalityError(f"matrix is not Hermitian (defect {defect:.3e})")
    return float(np.linalg.eigvalsh(0.5 * (arr + arr.conj().T))[0])


def purity(rho: "DensityMatrix") -> float:
    """Return ``trace(rho^2)``."""
    return float(np.real(np.trace(rho.rho @ rho.rho)))


@dataclass(frozen=True)
class DensityMatrix:
    """Density operator over (|m>, |n>, |e>, |a>) plus spectator weight.

    The matrix is copied and made read-only on construction. ``relaxed``
    selects the looser tolerances used for states that come out of long
    integrations.
    """

    rho: ComplexMatrix
    spectator_weight: float = 0.0
    relaxed: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        arr = np.array(self.rho, dtype=np.complex128)
        if arr.shape != (DIM, DIM):
            raise DimensionError(f"density matrix must be {DIM}x{DIM}, got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "rho", arr)

        herm_tol = RELAXED_HERMITIAN_TOL if self.relaxed else HERMITIAN_TOL
        eig_tol = RELAXED_EIGENVALUE_TOL if self.relaxed else EIGENVALUE_TOL
        defect = hermitian_defect(arr)
        if defect > herm_tol:
            raise PhysicalityError(f"density matrix is not Hermitian (defect {defect:.3e})")
        lowest = float(np.linalg.eigvalsh(0.5 * (arr + arr.conj().T))[0])
        if lowest < -eig_tol:
            raise PhysicalityError(f"density matrix is not positive (eigenvalue {lowest:.3e})")
        if not 0.0 <= self.spectator_weight <= 1.0:
            raise PhysicalityError(f"spectator weight {self.spectator_weight} outside [0, 1]")
        if self.trace + self.spectator_weight > 1.0 + TRACE_TOL:
            raise PhysicalityError(
                f"trace {self.trace:.12f} + spectator weight {self.spectator_weight} exceeds 1"
            )

    @classmethod
    def from_block(cls, block: npt.ArrayLike, spectator_weight: float = 0.0) -> "DensityMatrix":
        """Embed a 2x2 block over (|m>, |n>) into the four-level space."""
        blk = np.asarray(block, dtype=np.complex128)
        if blk.shape != (2, 2):
            raise DimensionError(f"block must be 2x2, got {blk.shape}")
        rho = np.zeros((DIM, DIM), dtype=np.complex128)
        rho[:2, :2] = blk
        return cls(rho, spectator_weight)

    @classmethod
    def pure(cls, vector: npt.ArrayLike, spectator_weight: float = 0.0) -> "DensityMatrix":
        """Return ``|vector><vector|``."""
        vec = np.asarray(vector, dtype=np.complex128)
        if vec.shape != (DIM,):
            raise DimensionError(f"state vector must have {DIM} entries, got {vec.shape}")
        return cls(outer(vec, vec), spectator_weight)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    @property
    def block(self) -> ComplexMatrix:
        """The addressed 2x2 block over (|m>, |n>)."""
        return np.array(self.rho[:2, :2])

    def population(self, index: int) -> float:
        return float(np.real(self.rho[index, index]))

    def projection(self, vector: npt.ArrayLike) -> float:
        """Return ``<v|rho|v>``."""
        vec = np.asarray(vector, dtype=np.complex128)
        return float(np.real(np.conj(vec) @ self.rho @ vec))


@dataclass(frozen=True)
class StateVector:
    """Possibly sub-normalised amplitude vector."""

    amplitudes: npt.NDArray[np.complex128]
    norm_tol: float = field(default=1e-12, repr=False, compare=False)

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 1 or amps.size < 1:
            raise DimensionError(f"state vector must be one-dimensional, got shape {amps.shape}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        if self.norm > 1.0 + self.norm_tol:
            raise PhysicalityError(f"state vector norm {self.norm:.15f} exceeds 1")

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __getitem__(self, index: int) -> complex:
        return complex(self.amplitudes[index])


def expectation(rho: DensityMatrix, op: npt.ArrayLike) -> complex:
    """Return ``trace(rho @ op)``.

    Raises:
        DimensionError: If ``op`` is not 4x4.
    """
    arr = as_square(op)
    if arr.shape != (DIM, DIM):
        raise DimensionError(f"operator must be {DIM}x{DIM}, got {arr.shape}")
    return complex(np.trace(rho.rho @ arr))


def random_block(
    rng: np.random.Generator,
    kind: Literal["pure", "mixed"] = "mixed",
    trace: float = 1.0,
) -> ComplexMatrix:
    """Draw a random physical 2x2 block with the given trace.

    ``pure`` draws a Haar-random ket; ``mixed`` draws from the Ginibre
    ensemble (``G G^dagger`` normalised).
    """
    if kind == "pure":
        vec = rng.normal(size=2) + 1j * rng.normal(size=2)
        vec /= np.linalg.norm(vec)
        blk = np.outer(vec, vec.conj())
    elif kind == "mixed":
        g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        blk = g @ g.conj().T
        blk /= np.real(np.trace(blk))
    else:
        raise ValueError(f"unknown block kind: {kind}")
    blk = 0.5 * (blk + blk.conj().T)
    return trace * blk


def random_density_matrix(
    rng: np.random.Generator,
    kind: Literal["pure", "mixed"] = "mixed",
    spectator_weight: Optional[float] = None,
) -> DensityMatrix:
    """Draw a random block state; the spectator weight is random unless given."""
    weight = float(rng.uniform(0.0, 0.5)) if spectator_weight is None else spectator_weight
    return DensityMatrix.from_block(random_block(rng, kind, 1.0 - weight), weight)


def require_block_support(rho: DensityMatrix, tol: float = SUPPORT_TOL) -> None:
    """Raise ``SupportError`` if ``rho`` has entries touching |e> or |a>."""
    outside = np.abs(rho.rho[2:, :]).max(initial=0.0)
    outside = max(outside, np.abs(rho.rho[:, 2:]).max(initial=0.0))
    if outside > tol:
        raise SupportError(f"state has weight {outside:.3e} outside the {{m, n}} block")

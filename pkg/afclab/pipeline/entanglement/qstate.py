"""
Two-qubit time-bin states and dichotomic measurements

Basis ordering is fixed as {|E_s E_i>, |E_s L_i>, |L_s E_i>, |L_s L_i>}, signal
qubit first. State vectors may be sub-normalized (loss before post-selection);
every measurement renormalizes.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError, ZeroNormError

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
EIGEN_TOL = 1e-10
ZERO_NORM = 1e-30
TSIRELSON_BOUND = 2.0 * np.sqrt(2.0)

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(m - m.conj().T)) < tol)


@dataclass(frozen=True)
class StateVector:
    """
    Four complex amplitudes in the EE, EL, LE, LL basis
    """
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if a.shape != (4,):
            raise ValidationError(f"state vector needs 4 amplitudes, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("state vector has non-finite amplitudes")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def normalized(self) -> "StateVector":
        n2 = self.norm2
        if n2 < ZERO_NORM:
            raise ZeroNormError(f"cannot normalize state with norm^2={n2:.3e}")
        return StateVector(self.amplitudes / np.sqrt(n2))

    def scaled(self, factor: complex) -> "StateVector":
        return StateVector(self.amplitudes * factor)


@dataclass(frozen=True)
class DensityMatrix:
    """
    4x4 Hermitian, positive semidefinite, trace in (0, 1]
    """
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValidationError(f"density matrix must be 4x4, got {m.shape}")
        if not _is_hermitian(m):
            raise ValidationError("density matrix is not Hermitian")
        # exact dense solver, 4x4 only
        if np.min(np.linalg.eigvalsh(m)) < -EIGEN_TOL:
            raise ValidationError("density matrix has negative eigenvalues")
        tr = float(np.real(np.trace(m)))
        if not (0.0 < tr <= 1.0 + HERMITIAN_TOL):
            raise ValidationError(f"density matrix trace {tr} outside (0, 1]")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def mix(self, other: "DensityMatrix", weight: float) -> "DensityMatrix":
        """weight*self + (1-weight)*other"""
        if not 0.0 <= weight <= 1.0:
            raise ValidationError(f"mixing weight {weight} outside [0, 1]")
        return DensityMatrix(weight * self.matrix + (1.0 - weight) * other.matrix)


@dataclass(frozen=True)
class Observable:
    """
    Hermitian 2x2 (single qubit) or 4x4 (joint) operator
    """
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape not in ((2, 2), (4, 4)):
            raise ValidationError(f"observable must be 2x2 or 4x4, got {m.shape}")
        if not _is_hermitian(m):
            raise ValidationError("observable is not Hermitian")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def is_dichotomic(self) -> bool:
        ev = np.linalg.eigvalsh(self.matrix)
        return bool(np.all(np.abs(np.abs(ev) - 1.0) < EIGEN_TOL))


SX = Observable(SIGMA_X)
SY = Observable(SIGMA_Y)
SZ = Observable(SIGMA_Z)


def as_observable(a) -> Observable:
    return a if isinstance(a, Observable) else Observable(a)


def bell_state(phase: float = 0.0) -> StateVector:
    """(|EE> + e^{i phase}|LL>)/sqrt(2)"""
    return StateVector(np.array([1.0, 0.0, 0.0, np.exp(1j * phase)]) / np.sqrt(2.0))


def asymmetric_state(alpha: float) -> StateVector:
    """
    (alpha|EE> + |LL>)/sqrt(1+alpha^2); alpha relates to the absorption
    efficiency of the memory
    """
    if alpha < 0:
        raise ValidationError(f"alpha must be >= 0, got {alpha}")
    return StateVector(np.array([alpha, 0.0, 0.0, 1.0]) / np.sqrt(1.0 + alpha ** 2))


def product_state(signal: Sequence[complex], idler: Sequence[complex]) -> StateVector:
    """|signal> (x) |idler> with single-qubit vectors given as (E, L)"""
    return StateVector(np.kron(np.asarray(signal, dtype=complex),
                               np.asarray(idler, dtype=complex)))


def to_density(psi: StateVector) -> DensityMatrix:
    n2 = psi.norm2
    if n2 < ZERO_NORM:
        raise ZeroNormError(f"cannot build density matrix from norm^2={n2:.3e}")
    a = psi.amplitudes
    return DensityMatrix(np.outer(a, a.conj()) / n2)


def werner(V: float, phase: float = 0.0) -> DensityMatrix:
    """V |Phi(phase)><Phi(phase)| + (1-V) I/4"""
    if not 0.0 <= V <= 1.0:
        raise ValidationError(f"visibility V={V} outside [0, 1]")
    bell = to_density(bell_state(phase)).matrix
    return DensityMatrix(V * bell + (1.0 - V) * np.eye(4) / 4.0)


def maximally_mixed() -> DensityMatrix:
    return DensityMatrix(np.kron(IDENTITY, IDENTITY) / 4.0)


def expectation(rho: DensityMatrix, A, B) -> float:
    """
    Tr[rho (A x B)] / Tr[rho]
    """
    A, B = as_observable(A), as_observable(B)
    if A.matrix.shape != (2, 2) or B.matrix.shape != (2, 2):
        raise ValidationError("expectation needs two single-qubit observables")

    value = np.trace(rho.matrix @ np.kron(A.matrix, B.matrix)) / rho.trace
    if abs(value.imag) > 1e-10:
        raise ValidationError(f"expectation value is not real: {value}")
    return float(value.real)


def chsh(rho: DensityMatrix, settings: Sequence) -> float:
    """
    S = E(X1Y1) + E(X2Y1) + E(X1Y2) - E(X2Y2) for settings (X1, X2, Y1, Y2)
    """
    if len(settings) != 4:
        raise ValidationError("chsh needs exactly four observables X1, X2, Y1, Y2")
    X1, X2, Y1, Y2 = (as_observable(s) for s in settings)
    for obs in (X1, X2, Y1, Y2):
        if not obs.is_dichotomic:
            raise ValidationError("chsh settings must have eigenvalues +1/-1")

    return (expectation(rho, X1, Y1) + expectation(rho, X2, Y1)
            + expectation(rho, X1, Y2) - expectation(rho, X2, Y2))


def canonical_chsh_settings():
    """X1=sx, X2=sz, Y1=(sx+sz)/sqrt2, Y2=(sx-sz)/sqrt2: 2*sqrt2 on bell_state(0)"""
    r = 1.0 / np.sqrt(2.0)
    return (SX, SZ, Observable(r * (SIGMA_X + SIGMA_Z)),
            Observable(r * (SIGMA_X - SIGMA_Z)))


def fidelity_to(rho: DensityMatrix, psi: StateVector) -> float:
    """<psi|rho|psi>, psi renormalized"""
    a = psi.normalized().amplitudes
    value = np.real(a.conj() @ (rho.matrix / rho.trace) @ a)
    return float(np.clip(value, 0.0, 1.0))


def partial_trace(rho: DensityMatrix, keep: str = "idler") -> np.ndarray:
    """Reduced 2x2 state of the signal or idler qubit"""
    m = (rho.matrix / rho.trace).reshape(2, 2, 2, 2)
    if keep == "signal":
        return np.einsum("ijkj->ik", m)
    if keep == "idler":
        return np.einsum("jijk->ik", m)
    raise ValidationError(f"keep must be 'signal' or 'idler', got {keep!r}")


def concurrence(rho: DensityMatrix) -> float:
    """Wootters concurrence"""
    m = rho.matrix / rho.trace
    yy = np.kron(SIGMA_Y, SIGMA_Y)
    r = m @ yy @ m.conj() @ yy
    ev = np.sqrt(np.clip(np.sort(np.real(np.linalg.eigvals(r)))[::-1], 0.0, None))
    return float(max(0.0, ev[0] - ev[1] - ev[2] - ev[3]))


def random_density(rng: Optional[np.random.Generator] = None, rank: int = 4) -> DensityMatrix:
    """Random mixed state from a Ginibre matrix"""
    rng = rng or np.random.default_rng()
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.real(np.trace(m)))


def random_product_state(rng: Optional[np.random.Generator] = None) -> StateVector:
    rng = rng or np.random.default_rng()

    def qubit():
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        return v / np.linalg.norm(v)

    return product_state(qubit(), qubit())


def random_dichotomic(rng: Optional[np.random.Generator] = None) -> Observable:
    """n.sigma for a random unit vector n"""
    rng = rng or np.random.default_rng()
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    return Observable(n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z)

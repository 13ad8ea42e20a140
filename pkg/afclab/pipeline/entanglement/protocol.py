"""
Analytic layer of the two Bell protocols

- Franson coincidence law for the partial-readout / fiber-interferometer pair
- Hybrid-qubit measurement: theta from the echo/transmission budget, the
  effective observables X1/X2, the predicted CHSH value and the generalized
  measurement (two sub-normalized projection vectors) that realizes it
- Visibility -> fidelity chain and the Peres threshold

The hybrid qubit's Bloch sphere places the transmitted mode L on the +z
pole; POVM vectors are written in the {L, E} basis.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .qstate import (
    SIGMA_X,
    SIGMA_Z,
    Observable,
    asymmetric_state,
    as_observable,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
PERES_THRESHOLD = 0.5
ANALYZER_KINDS = ("partial_readout", "fiber_interferometer", "hybrid_memory")


def _check_unit_interval(name: str, value: float):
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name}={value} outside [0, 1]")


@dataclass(frozen=True)
class AnalyzerSetting:
    kind: str
    phase: float = 0.0
    theta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ANALYZER_KINDS:
            raise ValidationError(
                f"analyzer kind {self.kind!r} not in {ANALYZER_KINDS}")
        object.__setattr__(self, "phase", float(np.mod(self.phase, TWO_PI)))
        if self.kind == "hybrid_memory":
            if self.theta is None or not 0.0 <= self.theta <= np.pi / 2:
                raise ValidationError(
                    f"hybrid analyzer needs theta in [0, pi/2], got {self.theta}")


@dataclass(frozen=True)
class HybridBudget:
    """
    Echo/transmission budget of the memory used as hybrid-qubit analyzer.
    eta_trans + eta_abs <= 1 is not required: residual absorption between
    the comb peaks removes light from both.
    """
    eta_trans: float
    eta_echo: float
    eta_abs: Optional[float] = None
    eta: Optional[float] = None

    def __post_init__(self):
        for name in ("eta_trans", "eta_echo", "eta_abs", "eta"):
            value = getattr(self, name)
            if value is not None:
                _check_unit_interval(name, value)

        if self.eta_abs is not None and self.eta is not None:
            if abs(self.eta_echo - self.eta_abs ** 2 * self.eta) > 1e-9:
                raise ValidationError(
                    "eta_echo must equal eta_abs^2 * eta "
                    f"({self.eta_echo} != {self.eta_abs ** 2 * self.eta})")

    @classmethod
    def from_measured(cls, eta_trans: float, eta_echo: float,
                      eta_abs: float = 0.5) -> "HybridBudget":
        """
        Complete a measured (eta_trans, eta_echo) pair with an assumed
        absorption efficiency; eta follows from eta_echo = eta_abs^2 * eta
        """
        if eta_abs <= 0:
            raise ValidationError("eta_abs must be > 0")
        eta = eta_echo / eta_abs ** 2
        if eta > 1.0:
            raise ValidationError(
                f"eta_abs={eta_abs} too small for eta_echo={eta_echo} (eta={eta:.3f} > 1)")
        return cls(eta_trans=eta_trans, eta_echo=eta_echo, eta_abs=eta_abs, eta=eta)

    @property
    def ratio(self) -> float:
        """eta_echo / eta_trans"""
        return self.eta_echo / self.eta_trans if self.eta_trans > 0 else np.inf


def franson_prob(dphi_s: float, dphi_i: float, V: float) -> float:
    """
    (1 + V cos(dphi_s + dphi_i)) / 2, phase-averaged value 1/2
    """
    _check_unit_interval("V", V)
    return 0.5 * (1.0 + V * np.cos(dphi_s + dphi_i))


def hybrid_theta(budget: HybridBudget) -> float:
    """theta = atan(sqrt(eta_echo / eta_trans)) in [0, pi/2]"""
    if budget.eta_trans + budget.eta_echo <= 0:
        raise ValidationError("hybrid_theta needs eta_trans + eta_echo > 0")
    return float(np.arctan2(np.sqrt(budget.eta_echo), np.sqrt(budget.eta_trans)))


def _phase_sign(phi_s_choice: float) -> float:
    wrapped = np.mod(phi_s_choice, TWO_PI)
    if np.isclose(wrapped, 0.0, atol=1e-9) or np.isclose(wrapped, TWO_PI, atol=1e-9):
        return 1.0
    if np.isclose(wrapped, np.pi, atol=1e-9):
        return -1.0
    raise ValidationError(f"phi_s choice must be 0 or pi, got {phi_s_choice}")


def hybrid_observables(theta: float, phi_s_choice: float) -> Observable:
    """
    X1 (phi_s=0) = sin2t sx + cos2t sz;  X2 (phi_s=pi) = -sin2t sx + cos2t sz
    """
    if not 0.0 <= theta <= np.pi / 2 + 1e-12:
        raise ValidationError(f"theta={theta} outside [0, pi/2]")
    sign = _phase_sign(phi_s_choice)
    return Observable(sign * np.sin(2 * theta) * SIGMA_X + np.cos(2 * theta) * SIGMA_Z)


def hybrid_predicted_S(theta: float) -> float:
    if not 0.0 <= theta <= np.pi / 2 + 1e-12:
        raise ValidationError(f"theta={theta} outside [0, pi/2]")
    return float(2.0 * np.cos(2 * theta) + 2.0 * np.sin(2 * theta))


def optimal_echo_ratio() -> float:
    """eta_echo/eta_trans maximizing S: tan^2(22.5 deg) = 1/(3+2 sqrt2)"""
    return 1.0 / (3.0 + 2.0 * np.sqrt(2.0))


@dataclass(frozen=True)
class HybridPOVM:
    """
    Conclusive elements of the hybrid measurement as bra coefficients in the
    {L, E} basis: <Pi| = plus[0] <L| + plus[1] <E|.

    `scale` is the common factor applied to both vectors when the raw
    elements would violate completeness; post-selected correlators do not
    depend on it.
    """
    plus: np.ndarray
    minus: np.ndarray
    phi_s: float
    scale: float = 1.0
    budget: Optional[HybridBudget] = field(default=None, compare=False)

    def completeness(self) -> np.ndarray:
        return sum(np.outer(v.conj(), v) for v in (self.plus, self.minus))

    def _conditional(self, psi_le: np.ndarray):
        # psi_le: 2x2 amplitudes [signal, idler] in (L, E) ordering
        return [v @ psi_le for v in (self.plus, self.minus)]

    def conclusive_probability(self, state=None) -> float:
        psi = _hybrid_frame(state if state is not None else self._default_state())
        return float(sum(np.vdot(c, c).real for c in self._conditional(psi)))

    def correlator(self, Y, state=None) -> float:
        """
        Post-selected E(X Y): outcomes +1/-1 of the conclusive elements,
        Y measured on the idler (matrix given in the {L, E} frame)
        """
        Y = as_observable(Y).matrix
        psi = _hybrid_frame(state if state is not None else self._default_state())
        chi_plus, chi_minus = self._conditional(psi)
        norm = np.vdot(chi_plus, chi_plus).real + np.vdot(chi_minus, chi_minus).real
        if norm <= 0:
            raise ValidationError("no conclusive outcome for this state")
        value = (np.vdot(chi_plus, Y @ chi_plus) - np.vdot(chi_minus, Y @ chi_minus)) / norm
        return float(np.real(value))

    def idler_marginals(self, state=None) -> Dict[str, np.ndarray]:
        """Normalized idler states conditioned on each conclusive outcome"""
        psi = _hybrid_frame(state if state is not None else self._default_state())
        out = {}
        for label, chi in zip(("+1", "-1"), self._conditional(psi)):
            n = np.vdot(chi, chi).real
            out[label] = np.outer(chi, chi.conj()) / n if n > 0 else np.zeros((2, 2))
        return out

    def _default_state(self):
        if self.budget is None or self.budget.eta_abs is None:
            raise ValidationError("a state or a budget with eta_abs is required")
        return asymmetric_state(np.sqrt(self.budget.eta_abs))


def _hybrid_frame(state) -> np.ndarray:
    # reversing the amplitude order relabels E<->L on both qubits
    a = np.asarray(state.amplitudes, dtype=complex)
    return a[::-1].reshape(2, 2)


def hybrid_povm(budget: HybridBudget, phi_s: float) -> HybridPOVM:
    """
    Pi_+1 = sqrt(eta_trans) <L| + e^{i phi} sqrt(eta eta_abs) <E|
    Pi_-1 = e^{i(phi+pi)} sqrt(eta) eta_abs <L| + sqrt(eta_trans/eta_abs) <E|
    """
    if budget.eta_abs is None or budget.eta is None:
        raise ValidationError("hybrid_povm needs eta_abs and eta in the budget")
    if budget.eta_abs <= 0:
        raise ValidationError("hybrid_povm is undefined for eta_abs = 0")

    eta, eta_abs, eta_trans = budget.eta, budget.eta_abs, budget.eta_trans
    plus = np.array([np.sqrt(eta_trans), np.exp(1j * phi_s) * np.sqrt(eta * eta_abs)])
    minus = np.array([np.exp(1j * (phi_s + np.pi)) * np.sqrt(eta) * eta_abs,
                      np.sqrt(eta_trans / eta_abs)])

    povm = HybridPOVM(plus=plus, minus=minus, phi_s=phi_s, budget=budget)
    lam = float(np.max(np.linalg.eigvalsh(povm.completeness())))
    if lam > 1.0:
        scale = 1.0 / np.sqrt(lam)
        logger.debug(f"hybrid POVM rescaled by {scale:.4f} to satisfy completeness")
        povm = HybridPOVM(plus=plus * scale, minus=minus * scale, phi_s=phi_s,
                          scale=scale, budget=budget)
    return povm


def hybrid_povm_correlator(budget: HybridBudget, phi_s: float, Y) -> float:
    return hybrid_povm(budget, phi_s).correlator(Y)


def fidelity_from_visibility(V_mean: float) -> float:
    """(1 + 3V)/4, white-noise (Werner) assumption"""
    _check_unit_interval("V_mean", V_mean)
    return (1.0 + 3.0 * V_mean) / 4.0


def peres_entangled(F: float) -> bool:
    _check_unit_interval("F", F)
    return F >= PERES_THRESHOLD


def chsh_threshold_visibility() -> float:
    """Minimum fringe visibility for S > 2 with equatorial analyzers"""
    return 1.0 / np.sqrt(2.0)


def partial_readout_settings() -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """Signal phases (X1, X2) and idler phases (Y1, Y2) reaching 2 sqrt2"""
    return (0.0, np.pi / 2), (np.mod(-np.pi / 4, TWO_PI), np.pi / 4)


def partial_readout_predicted_S(V: float) -> float:
    _check_unit_interval("V", V)
    (a1, a2), (b1, b2) = partial_readout_settings()
    E = lambda a, b: V * np.cos(a + b)
    return float(E(a1, b1) + E(a2, b1) + E(a1, b2) - E(a2, b2))


def pair_probability(p: float) -> Tuple[float, float, float]:
    """
    Photon-number distribution of one mode of a two-mode squeezed state with
    mean pair number p: P(0), P(1), P(>=2)
    """
    if p < 0:
        raise ValidationError("mean pair number must be >= 0")
    p0 = 1.0 / (1.0 + p)
    p1 = p / (1.0 + p) ** 2
    return p0, p1, max(0.0, 1.0 - p0 - p1)

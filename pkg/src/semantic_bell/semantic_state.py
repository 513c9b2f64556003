"""Finite-dimensional semantic states, observables, and their measurement.

A semantic expression is represented by a unit vector in a small complex
Hilbert space; an interpretive act is a Hermitian observable whose
eigenvalues label the possible interpretations.  Everything here is exact
dense linear algebra via numpy, which is plenty for the dimensions used by
the Bell test (2 per word, 4 for a pair of parties).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-12
DEGENERACY_TOL = 1e-8


class DimensionError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SemanticState:
    """A normalized state vector ``|psi>`` in the coordinate basis ``{|e_i>}``."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size < 1:
            raise DimensionError("a semantic state needs at least one amplitude")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (|psi|^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_unnormalized(cls, amplitudes) -> "SemanticState":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def inner(self, other: "SemanticState") -> complex:
        """``<self|other>``."""
        _check_dims(self.dim, other.dim)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def allclose(self, other: "SemanticState", atol: float = NORM_TOL) -> bool:
        return self.dim == other.dim and bool(
            np.allclose(self.amplitudes, other.amplitudes, atol=atol, rtol=0)
        )


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian operator on a ``dim``-dimensional semantic space."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DimensionError(f"observable must be a square matrix, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise NotHermitianError("observable matrix is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def is_dichotomic(self, tol: float = NORM_TOL) -> bool:
        # Hermitian with M^2 = I  <=>  spectrum contained in {+1, -1}
        sq = self.matrix @ self.matrix
        return bool(np.max(np.abs(sq - np.eye(self.dim))) <= tol)

    def tensor(self, other: "Observable") -> "Observable":
        return Observable(np.kron(self.matrix, other.matrix))


@dataclass(frozen=True)
class EvolutionSpec:
    hamiltonian: Observable
    duration: float
    hbar_sem: float = 1.0

    def __post_init__(self):
        if not isinstance(self.hamiltonian, Observable):
            object.__setattr__(self, "hamiltonian", Observable(self.hamiltonian))
        if not self.hbar_sem > 0:
            raise ValueError("hbar_sem must be positive")


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise DimensionError(f"dimension mismatch: {a} vs {b}")


def eigenprojectors(obs: Observable) -> list[tuple[float, np.ndarray]]:
    """Spectral decomposition as ``(eigenvalue, projector)`` pairs.

    Eigenvalues closer than ``DEGENERACY_TOL`` are merged into a single
    eigenspace; the reported eigenvalue is the mean of the merged group.
    Pairs are sorted by descending eigenvalue.
    """
    vals, vecs = np.linalg.eigh(obs.matrix)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    groups: list[list[int]] = []
    for i, v in enumerate(vals):
        if groups and abs(vals[groups[-1][0]] - v) <= DEGENERACY_TOL:
            groups[-1].append(i)
        else:
            groups.append([i])
    out = []
    for idx in groups:
        basis = vecs[:, idx]
        out.append((float(np.mean(vals[idx])), basis @ basis.conj().T))
    return out


def born_probabilities(state: SemanticState, obs: Observable) -> list[tuple[float, float]]:
    """Outcome distribution ``P(m_i) = <psi|P_i|psi>`` for measuring *obs* on *state*."""
    _check_dims(state.dim, obs.dim)
    psi = state.amplitudes
    out = []
    for val, proj in eigenprojectors(obs):
        p = float(np.vdot(psi, proj @ psi).real)
        out.append((val, min(max(p, 0.0), 1.0)))
    return out


def measure(state: SemanticState, obs: Observable, rng: np.random.Generator):
    """Sample one outcome and return ``(eigenvalue, collapsed_state)``."""
    _check_dims(state.dim, obs.dim)
    spectrum = eigenprojectors(obs)
    psi = state.amplitudes
    probs = np.array([np.vdot(psi, p @ psi).real for _, p in spectrum])
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    k = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    k = min(k, len(spectrum) - 1)
    val, proj = spectrum[k]
    projected = proj @ psi
    norm = np.linalg.norm(projected)
    if norm == 0:
        raise RuntimeError("sampled an outcome with zero probability")
    return val, SemanticState(projected / norm)


def commutator_norm(a: Observable, b: Observable) -> float:
    """Largest absolute entry of ``AB - BA``."""
    _check_dims(a.dim, b.dim)
    comm = a.matrix @ b.matrix - b.matrix @ a.matrix
    return float(np.max(np.abs(comm)))


def evolve(state: SemanticState, spec: EvolutionSpec) -> SemanticState:
    """Apply ``exp(-i H t / hbar_sem)`` using the eigendecomposition of ``H``."""
    _check_dims(state.dim, spec.hamiltonian.dim)
    energies, vecs = np.linalg.eigh(spec.hamiltonian.matrix)
    phases = np.exp(-1j * energies * spec.duration / spec.hbar_sem)
    unitary = (vecs * phases) @ vecs.conj().T
    out = unitary @ state.amplitudes
    # renormalize away rounding drift; the unitary itself is exact to ~1e-15
    return SemanticState(out / np.linalg.norm(out))


def joint_correlation(state: SemanticState, obs_a: Observable, obs_b: Observable) -> float:
    """``<psi| A (x) B |psi>`` for a state on the product of two subsystems."""
    joint = obs_a.tensor(obs_b)
    _check_dims(state.dim, joint.dim)
    psi = state.amplitudes
    return float(np.vdot(psi, joint.matrix @ psi).real)


def joint_distribution(state: SemanticState, obs_a: Observable, obs_b: Observable) -> dict:
    """Probabilities of each ``(a, b)`` eigenvalue pair under a joint local measurement."""
    _check_dims(state.dim, obs_a.dim * obs_b.dim)
    psi = state.amplitudes
    dist = {}
    for va, pa in eigenprojectors(obs_a):
        for vb, pb in eigenprojectors(obs_b):
            p = float(np.vdot(psi, np.kron(pa, pb) @ psi).real)
            dist[(va, vb)] = max(p, 0.0)
    return dist


# Standard constructions used by the Bell-test oracle.

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def spin_observable(theta: float) -> Observable:
    """Dichotomic observable ``cos(theta) Z + sin(theta) X`` in the x-z plane."""
    return Observable(np.cos(theta) * PAULI_Z + np.sin(theta) * PAULI_X)


def singlet() -> SemanticState:
    """``(|01> - |10>) / sqrt(2)``; gives ``<A(a) B(b)> = -cos(a - b)``."""
    s = 1 / np.sqrt(2)
    return SemanticState([0, s, -s, 0])


TSIRELSON_ANGLES = (0.0, np.pi / 2, np.pi / 4, 3 * np.pi / 4)

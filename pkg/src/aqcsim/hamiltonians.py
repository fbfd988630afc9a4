"""Problem/bias Hamiltonian construction and exact diagonalization.

The annealing Hamiltonian is H(lam) = H_p + lam * H_b with lam swept from 1
down to 0.  H_p is diagonal in the computational basis: a random sum over
every nontrivial product of sigma_z factors, with Gaussian coefficients of
standard deviation n**2.  H_b = -Z * sum_i sigma_x^(i) is a strong uniform
transverse field, Z = 10**(n/2) by default, whose ground state is the equal
superposition of all basis states.

Index convention: basis states and sigma_z-product labels are integers whose
bit i (least significant = qubit 1) says whether qubit i is |1> (for states)
or carries a sigma_z factor (for labels).  The eigenvalue of the product
labelled j on basis state b is then (-1)**popcount(j & b).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGroundError
from .state import WaveState

__all__ = [
    "ProblemSpec",
    "BiasSpec",
    "HamiltonianPair",
    "EigenSystem",
    "default_bias_strength",
    "sample_problem",
    "build_problem",
    "build_bias",
    "make_pair",
    "pair_from_seed",
    "total_hamiltonian",
    "diagonalize",
    "spectrum_at",
    "bias_ground_state",
    "problem_ground_index",
]


def default_bias_strength(n: int) -> float:
    """Strong-bias field strength used throughout: Z = 10**(n/2)."""
    return 10.0 ** (n / 2.0)


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients of a random diagonal problem Hamiltonian.

    epsilon[j-1] multiplies the sigma_z product labelled j = 1 .. 2**n - 1.
    The seed that produced epsilon is carried along so any instance can be
    reconstructed exactly from (n, seed).
    """

    n: int
    epsilon: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "epsilon", np.asarray(self.epsilon, dtype=float))
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")
        if self.epsilon.shape != (2**self.n - 1,):
            raise ValueError(
                f"epsilon must have length 2**n - 1 = {2**self.n - 1}, "
                f"got shape {self.epsilon.shape}"
            )

    def to_json(self) -> str:
        """Serialize to a one-line JSON record; floats round-trip exactly."""
        return json.dumps(
            {"n": self.n, "seed": self.seed, "epsilon": self.epsilon.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "ProblemSpec":
        rec = json.loads(text)
        return cls(n=rec["n"], epsilon=np.array(rec["epsilon"]), seed=rec["seed"])


@dataclass(frozen=True)
class BiasSpec:
    n: int
    Z: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")
        if self.Z <= 0:
            raise ValueError(f"need Z > 0, got {self.Z}")

    @classmethod
    def default(cls, n: int) -> "BiasSpec":
        return cls(n=n, Z=default_bias_strength(n))


@dataclass(frozen=True)
class HamiltonianPair:
    """The (H_p, H_b) pair defining one annealing instance.

    problem_diag is the diagonal of H_p; bias is the dense symmetric H_b.
    n, Z and seed are carried through for bookkeeping and output manifests.
    """

    problem_diag: np.ndarray
    bias: np.ndarray
    n: int
    Z: float
    seed: int

    def __post_init__(self):
        object.__setattr__(
            self, "problem_diag", np.asarray(self.problem_diag, dtype=float)
        )
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float))

    @property
    def dim(self) -> int:
        return self.problem_diag.size


@dataclass(frozen=True)
class EigenSystem:
    """Instantaneous spectrum of H(lam): sorted energies and eigencolumns."""

    lam: float | None
    energies: np.ndarray
    states: np.ndarray

    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])


def sample_problem(n: int, seed: int) -> ProblemSpec:
    """Draw the 2**n - 1 coupling strengths for one random instance.

    Uses PCG64 seeded through SeedSequence, so results are identical across
    platforms and numpy versions that share the generator.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    eps = rng.normal(loc=0.0, scale=float(n) ** 2, size=2**n - 1)
    return ProblemSpec(n=n, epsilon=eps, seed=seed)


def _popcount_table(dim: int) -> np.ndarray:
    return np.array([bin(x).count("1") for x in range(dim)])


def build_problem(spec: ProblemSpec) -> np.ndarray:
    """Diagonal of H_p in the computational basis.

    Entry b is sum_j epsilon_j * (-1)**popcount(j & b): each sigma_z product
    is diagonal, so H_p is as well.
    """
    dim = 2**spec.n
    pop = _popcount_table(dim)
    b = np.arange(dim)
    diag = np.zeros(dim)
    for j in range(1, dim):
        diag += spec.epsilon[j - 1] * (1.0 - 2.0 * (pop[j & b] & 1))
    return diag


def build_bias(spec: BiasSpec) -> np.ndarray:
    """Dense -Z * sum_i sigma_x^(i): entries -Z between labels one bit apart."""
    dim = 2**spec.n
    H = np.zeros((dim, dim))
    rows = np.arange(dim)
    for i in range(spec.n):
        H[rows, rows ^ (1 << i)] = -spec.Z
    return H


def make_pair(problem: ProblemSpec, bias: BiasSpec | None = None) -> HamiltonianPair:
    if bias is None:
        bias = BiasSpec.default(problem.n)
    if bias.n != problem.n:
        raise ValueError(f"bias is for n={bias.n} but problem has n={problem.n}")
    return HamiltonianPair(
        problem_diag=build_problem(problem),
        bias=build_bias(bias),
        n=problem.n,
        Z=bias.Z,
        seed=problem.seed,
    )


def pair_from_seed(n: int, seed: int, Z: float | None = None) -> HamiltonianPair:
    """Convenience: sample, build and pair up one instance."""
    bias = BiasSpec(n=n, Z=Z) if Z is not None else None
    return make_pair(sample_problem(n, seed), bias)


def total_hamiltonian(pair: HamiltonianPair, lam: float) -> np.ndarray:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return np.diag(pair.problem_diag) + lam * pair.bias


def diagonalize(H: np.ndarray, lam: float | None = None) -> EigenSystem:
    """Full eigendecomposition with a reproducible eigenvector phase.

    Eigenvalues come out ascending.  Each eigenvector is flipped so that its
    largest-magnitude component is real positive; without this, matrix
    elements between eigenstates would depend on LAPACK internals.
    """
    H = np.asarray(H)
    hnorm = np.linalg.norm(H)
    if hnorm > 0 and np.linalg.norm(H - H.conj().T) > 1e-10 * hnorm:
        raise ValueError("matrix is not Hermitian")
    w, V = np.linalg.eigh(H)
    lead = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[lead, np.arange(V.shape[1])].real)
    signs[signs == 0] = 1.0
    V = V * signs
    return EigenSystem(lam=lam, energies=w, states=V)


def spectrum_at(pair: HamiltonianPair, lam: float) -> EigenSystem:
    return diagonalize(total_hamiltonian(pair, lam), lam)


def bias_ground_state(n: int) -> WaveState:
    """Equal superposition of all 2**n basis states (ground state of H_b)."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    dim = 2**n
    return WaveState(amplitudes=np.full(dim, dim**-0.5, dtype=complex), lam=1.0)


def problem_ground_index(pair: HamiltonianPair) -> int:
    """Basis index of the unique minimum of H_p's diagonal.

    Raises DegenerateGroundError when the two smallest entries are closer
    than 1e-12 times the diagonal's spread; success probability is not
    well defined for such instances and ensembles drop them.
    """
    diag = pair.problem_diag
    order = np.argsort(diag, kind="stable")
    spread = float(diag[order[-1]] - diag[order[0]])
    if diag.size > 1 and diag[order[1]] - diag[order[0]] <= 1e-12 * spread:
        raise DegenerateGroundError(
            f"tied ground states {order[0]} and {order[1]} "
            f"(gap {diag[order[1]] - diag[order[0]]:.3g}, spread {spread:.3g})"
        )
    return int(order[0])

"""Level dynamics along the sweep and the ground-state curvature signal.

Instead of re-diagonalizing H(lam) at every schedule point, the spectrum can
be propagated in lam with the Pechukas-Yukawa equations of motion, which
treat the eigenvalues E_l as interacting particles with velocities
v_l = <l|H_b|l> and couplings l_lj = (E_l - E_j) <l|H_b|j>:

    dE_l/dlam = v_l
    dv_l/dlam = sum_{k != l}    2 |l_lk|^2 / (E_l - E_k)^3
    dl_lj/dlam = sum_{k != l,j} l_lk l_kj (1/(E_l - E_k)^2 - 1/(E_j - E_k)^2)

The ground-state curvature d^2 E_0 / dlam^2 is the l = 0 line of the
velocity equation; its two-level truncation keeps only the k = 1 term.
Both are exposed: the feedback controller uses the full sum, and the pair
term documents how dominant the nearest level is.

Everything here is a pure function of the Hamiltonian pair; trajectories
for different instances can be computed concurrently without shared state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import hamiltonians as ham
from .errors import IntegrationFailureError, NearDegeneracyError

__all__ = [
    "SpectrumState",
    "CurvatureSample",
    "LevelFlow",
    "init_spectrum",
    "py_rhs",
    "solve_levels",
    "integrate_py",
    "curvature",
    "curvature_from_spectrum",
    "curvature_profile",
]

# Levels closer than this fraction of the spectral spread make the equations
# of motion singular; the integrator refuses to continue rather than produce
# garbage, and callers fall back to direct diagonalization.
COLLISION_FLOOR = 1e-12


@dataclass
class SpectrumState:
    """One Pechukas-Yukawa phase-space point.

    E: level energies (ascending at lam = 1; the flow preserves order for
       the nondegenerate ensemble).
    v: level velocities <l|H_b|l>.
    L: coupling matrix l_lj, zero diagonal, L[l, j] == -conj(L[j, l]).
    """

    lam: float
    E: np.ndarray
    v: np.ndarray
    L: np.ndarray

    @property
    def dim(self) -> int:
        return self.E.size


@dataclass(frozen=True)
class CurvatureSample:
    lam: float
    c2_pair: float
    c2_full: float


def _check_separation(E: np.ndarray, lam: float, scale: float) -> None:
    E_sorted = np.sort(E)
    gaps = np.diff(E_sorted)
    k = int(np.argmin(gaps))
    if gaps[k] < COLLISION_FLOOR * scale:
        raise NearDegeneracyError(
            f"levels {k} and {k + 1} separated by {gaps[k]:.3e} at "
            f"lambda={lam:.6f} (floor {COLLISION_FLOOR * scale:.3e})",
            pair=(k, k + 1),
        )


def init_spectrum(pair: ham.HamiltonianPair) -> SpectrumState:
    """Initial data at lam = 1 from exact diagonalization."""
    es = ham.spectrum_at(pair, 1.0)
    scale = float(es.energies[-1] - es.energies[0])
    _check_separation(es.energies, 1.0, scale)
    M = es.states.T @ pair.bias @ es.states
    v = np.diag(M).copy()
    L = (es.energies[:, None] - es.energies[None, :]) * M
    np.fill_diagonal(L, 0.0)
    return SpectrumState(lam=1.0, E=es.energies.copy(), v=v, L=L.astype(complex))


def py_rhs(state: SpectrumState):
    """Right-hand side of the equations of motion; returns (dE, dv, dL).

    All pair sums are evaluated with matrix algebra: the difference matrix
    D[l, k] = E_l - E_k gets a dummy unit diagonal, and weight matrices with
    zeroed diagonals make the k != l (and k != j) exclusions automatic --
    the j-column/l-row terms the triple sum would exclude cancel identically
    because L has zero diagonal.
    """
    scale = float(np.max(state.E) - np.min(state.E)) or 1.0
    _check_separation(state.E, state.lam, scale)
    E, L = state.E, state.L
    D = E[:, None] - E[None, :]
    np.fill_diagonal(D, 1.0)
    W = 1.0 / D**2
    np.fill_diagonal(W, 0.0)
    A = 2.0 * np.abs(L) ** 2 / D**3
    np.fill_diagonal(A, 0.0)
    dv = A.sum(axis=1)
    dL = (L * W) @ L - L @ (L * W.T)
    np.fill_diagonal(dL, 0.0)
    return state.v.copy(), dv, dL


def _pack(E, v, L):
    return np.concatenate([E.astype(complex), v.astype(complex), L.ravel()])


def _unpack(y, dim):
    return y[:dim].real, y[dim : 2 * dim].real, y[2 * dim :].reshape(dim, dim)


class LevelFlow:
    """Dense-in-lam solution of the level equations for one instance.

    Wraps the integrator's dense output so schedules can query energies and
    curvature at arbitrary lam in [0, 1] without further integration.
    """

    def __init__(self, pair: ham.HamiltonianPair, sol):
        self.pair = pair
        self._sol = sol

    def state_at(self, lam: float) -> SpectrumState:
        E, v, L = _unpack(self._sol.sol(lam), self.pair.dim)
        return SpectrumState(lam=float(lam), E=E, v=v, L=L)

    def energies(self, lams) -> np.ndarray:
        """Levels at each requested lam, shape (dim, len(lams))."""
        y = self._sol.sol(np.atleast_1d(lams))
        return y[: self.pair.dim].real

    def curvatures(self, lams) -> tuple[np.ndarray, np.ndarray]:
        """(c2_full, c2_pair) arrays at the requested lam values."""
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        dim = self.pair.dim
        y = self._sol.sol(np.clip(lams, 0.0, 1.0))
        E = y[:dim].real
        L0 = y[2 * dim : 2 * dim + dim]  # row l = 0 of L
        num = 2.0 * np.abs(L0[1:]) ** 2
        den = (E[1:] - E[0:1]) ** 3
        c2_full = -np.sum(num / den, axis=0)
        c2_pair = -num[0] / den[0]
        return c2_full, c2_pair


def solve_levels(
    pair: ham.HamiltonianPair, rtol: float = 1e-8, atol: float = 1e-10
) -> LevelFlow:
    """Integrate the level equations from lam = 1 down to 0."""
    dim = pair.dim
    start = init_spectrum(pair)
    scale = float(np.max(start.E) - np.min(start.E)) or 1.0

    def rhs(lam, y):
        E = y[:dim].real
        L = y[2 * dim :].reshape(dim, dim)
        _check_separation(E, lam, scale)
        D = E[:, None] - E[None, :]
        np.fill_diagonal(D, 1.0)
        W = 1.0 / D**2
        np.fill_diagonal(W, 0.0)
        A = 2.0 * np.abs(L) ** 2 / D**3
        np.fill_diagonal(A, 0.0)
        dv = A.sum(axis=1)
        dL = (L * W) @ L - L @ (L * W.T)
        np.fill_diagonal(dL, 0.0)
        return np.concatenate([y[dim : 2 * dim], dv.astype(complex), dL.ravel()])

    sol = solve_ivp(
        rhs,
        (1.0, 0.0),
        _pack(start.E, start.v, start.L),
        method="DOP853",
        rtol=rtol,
        atol=atol,
        dense_output=True,
    )
    if sol.status != 0:
        raise IntegrationFailureError(f"level integration stopped: {sol.message}")
    return LevelFlow(pair, sol)


def integrate_py(pair: ham.HamiltonianPair, grid, rtol=1e-8, atol=1e-10):
    """Solve the level equations and sample them on the given lam grid.

    The grid must descend from 1 to 0 (the direction of the sweep).
    """
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 1.0 or grid[-1] != 0.0 or np.any(np.diff(grid) >= 0):
        raise ValueError("grid must descend strictly from 1 to 0")
    flow = solve_levels(pair, rtol=rtol, atol=atol)
    return [flow.state_at(lam) for lam in grid]


def curvature(state: SpectrumState) -> CurvatureSample:
    """Ground-state curvature from one spectrum point.

    c2_pair keeps only the coupling to the first excited level; c2_full sums
    over every excited level and equals d^2 E_0 / dlam^2 exactly.  Both are
    <= 0 for the ground level (every term pushes E_0 down).
    """
    E, L = state.E, state.L
    if E[1] <= E[0]:
        raise NearDegeneracyError(
            f"level order violated at lambda={state.lam:.6f}: "
            f"E1 - E0 = {E[1] - E[0]:.3e}",
            pair=(0, 1),
        )
    num = 2.0 * np.abs(L[0, 1:]) ** 2
    den = (E[1:] - E[0]) ** 3
    c2_full = -float(np.sum(num / den))
    c2_pair = -float(num[0] / den[0])
    return CurvatureSample(lam=state.lam, c2_pair=c2_pair, c2_full=c2_full)


def curvature_from_spectrum(es: ham.EigenSystem, bias: np.ndarray) -> CurvatureSample:
    """Curvature directly from eigenvectors (second-order perturbation sum).

    |l_0k|^2 / (E_k - E_0)^3 reduces to |<0|H_b|k>|^2 / (E_k - E_0), so this
    needs only one diagonalization.  Used as the fallback when the level
    equations hit a near-degeneracy, and as an independent cross-check.
    """
    w, V = es.energies, es.states
    m = V[:, 0] @ bias @ V[:, 1:]
    gaps = w[1:] - w[0]
    terms = 2.0 * np.abs(m) ** 2 / gaps
    return CurvatureSample(
        lam=es.lam if es.lam is not None else float("nan"),
        c2_pair=-float(terms[0]),
        c2_full=-float(np.sum(terms)),
    )


def curvature_profile(pair: ham.HamiltonianPair, resolution: int):
    """Tabulate curvature on a uniform descending lam grid.

    Tries the level-dynamics route first; if the instance sits too close to
    a level collision for the equations of motion, falls back to direct
    diagonalization at each grid point (slower, but always defined as long
    as the ground state itself stays separated).
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    lams = np.linspace(1.0, 0.0, resolution)
    try:
        flow = solve_levels(pair)
        c2_full, c2_pair = flow.curvatures(lams)
        return [
            CurvatureSample(lam=float(l), c2_pair=float(p), c2_full=float(f))
            for l, p, f in zip(lams, c2_pair, c2_full)
        ]
    except (NearDegeneracyError, IntegrationFailureError):
        return [
            curvature_from_spectrum(ham.spectrum_at(pair, lam), pair.bias)
            for lam in lams
        ]

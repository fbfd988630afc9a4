"""Wavefunction propagation through the annealing sweep.

The sweep integrates d|psi>/dlam = -i (dt/dlam) H(lam) |psi> from lam = 1
to 0.  The pace dt/dlam is set by a controller: constant T_total for linear
interpolation, or k * max(|c2|, floor) for curvature feedback, where c2 is
the ground-state curvature supplied by the spectral module (live) or by a
replayed profile table.  Total time T accumulates as the integral of the
pace over lam.

Stepping is unitary by construction: each lam cell applies the exact
exponential of the midpoint Hamiltonian, exp(-i H(lam_mid) dt), through its
eigendecomposition.  Norm drift is therefore a genuine error indicator
(roundoff only), and accuracy in lam is second order in the cell width.

The lam grid is not uniform.  Cells are distributed by blending a uniform
measure with the rotation rate of the instantaneous ground state, found by
adaptive bisection.  Narrow avoided crossings -- where the ground state can
turn by nearly pi/2 over a tiny lam interval, and where all the interesting
physics happens -- are resolved automatically this way; uniform grids of
practical size step right over them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from . import hamiltonians as ham
from . import spectral
from .errors import InvalidStateError
from .state import WaveState

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

__all__ = [
    "PaceController",
    "RunRecord",
    "BackactionWindow",
    "SchedulePlan",
    "build_schedule",
    "pace",
    "evolve",
    "gain_for_time",
    "pace_time_integral",
    "success_probability",
    "min_gap",
    "adiabatic_time",
    "backaction_window_ok",
]

SAMPLE_COLUMNS = ("lambda", "t", "P_instantaneous", "gap", "abs_curvature")

# Fraction of the profile's curvature maximum used as the default pace floor:
# the controller alone would run unboundedly fast where the curvature
# vanishes (the lam -> 1 plateau), which no stepper can follow.
DEFAULT_FLOOR_FRACTION = 1e-6

_ROT_MAX = 0.08  # max ground-state rotation per grid cell, radians
_BASE_CELLS = 64  # uniform cells seeding the adaptive bisection
_MIN_CELL = 1e-7  # bisection width guard
_ROT_WEIGHT = 0.5  # blend between uniform and rotation-proportional measure


@dataclass(frozen=True)
class PaceController:
    """Schedule policy: how fast lam moves at each point of the sweep.

    kind "linear": dt/dlam = T_total, constant.
    kind "feedback": dt/dlam = k * max(|c2|, curvature_floor).  The signal
    c2 comes from the live level dynamics or from a replayed (lam, c2)
    profile.  curvature_floor may be left None to mean "resolve to
    DEFAULT_FLOOR_FRACTION of the profile's |c2| maximum at run time".
    """

    kind: str
    T_total: float | None = None
    k: float | None = None
    curvature_floor: float | None = None
    source: str = "live"
    profile: tuple | None = None  # (lam descending, c2) arrays for replay

    def __post_init__(self):
        if self.kind == "linear":
            if self.T_total is None or self.T_total <= 0:
                raise ValueError("linear controller needs T_total > 0")
            if self.k is not None:
                raise ValueError("k is not a linear-controller parameter")
        elif self.kind == "feedback":
            if self.k is None or self.k <= 0:
                raise ValueError("feedback controller needs gain k > 0")
            if self.T_total is not None:
                raise ValueError("T_total is not a feedback-controller parameter")
            if self.curvature_floor is not None and self.curvature_floor <= 0:
                raise ValueError("curvature_floor must be positive")
            if self.source not in ("live", "replay"):
                raise ValueError(f"unknown curvature source {self.source!r}")
            if (self.source == "replay") != (self.profile is not None):
                raise ValueError("replay source requires a profile (and only then)")
        else:
            raise ValueError(f"unknown controller kind {self.kind!r}")

    @classmethod
    def linear(cls, T_total: float) -> "PaceController":
        return cls(kind="linear", T_total=T_total)

    @classmethod
    def feedback(cls, k, curvature_floor=None, source="live", profile=None):
        return cls(
            kind="feedback",
            k=k,
            curvature_floor=curvature_floor,
            source=source,
            profile=profile,
        )


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one sweep: success probability, realized time, diagnostics."""

    pair: ham.HamiltonianPair
    controller: PaceController
    P: float
    T: float
    norm_drift: float
    psi: WaveState
    samples: np.ndarray | None = None  # rows of SAMPLE_COLUMNS


@dataclass(frozen=True)
class BackactionWindow:
    delta_min: float
    omega_lc: float
    gamma_lc: float

    def __post_init__(self):
        if self.delta_min <= 0 or self.omega_lc <= 0 or self.gamma_lc < 0:
            raise ValueError("need delta_min > 0, omega_lc > 0, gamma_lc >= 0")


@dataclass(frozen=True)
class SchedulePlan:
    """Precomputed lam grid and midpoint eigensystems for one instance.

    Building the plan costs one eigendecomposition per cell; every run on
    the instance (any controller, any T) then reuses it, which is what makes
    the time-to-target scans affordable.
    """

    pair: ham.HamiltonianPair
    lams: np.ndarray  # nodes, descending, lams[0] = 1, lams[-1] = 0
    mids: np.ndarray
    widths: np.ndarray  # positive cell widths in lam
    mid_energies: np.ndarray  # (cells, dim)
    mid_states: np.ndarray  # (cells, dim, dim)
    psi0: np.ndarray  # ground state of H(1)
    ground_index: int

    @property
    def cells(self) -> int:
        return self.widths.size


def _ground_rotation_cells(pair: ham.HamiltonianPair):
    """Bisect [1, 0] until the ground state turns <= _ROT_MAX per cell."""
    vec_cache: dict[float, np.ndarray] = {}

    def ground(lam: float) -> np.ndarray:
        v = vec_cache.get(lam)
        if v is None:
            v = ham.spectrum_at(pair, lam).states[:, 0]
            vec_cache[lam] = v
        return v

    def rotation(a: float, b: float) -> float:
        overlap = min(1.0, abs(float(ground(a) @ ground(b))))
        return math.acos(overlap)

    base = np.linspace(1.0, 0.0, _BASE_CELLS + 1)
    stack = [(base[i], base[i + 1]) for i in range(_BASE_CELLS)]
    cells = []
    while stack:
        a, b = stack.pop()
        rot = rotation(a, b)
        if rot > _ROT_MAX and (a - b) > _MIN_CELL:
            m = 0.5 * (a + b)
            stack.append((a, m))
            stack.append((m, b))
        else:
            cells.append((a, b, rot))
    cells.sort(key=lambda cell: -cell[0])
    return cells


def build_schedule(pair: ham.HamiltonianPair, steps: int = 2048) -> SchedulePlan:
    """Lay out the lam grid and cache the midpoint eigensystems."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    cells = _ground_rotation_cells(pair)
    steps = max(steps, len(cells))
    widths = np.array([a - b for a, b, _ in cells])
    rots = np.array([r for _, _, r in cells])
    total_rot = float(rots.sum())
    if total_rot > 0:
        weights = (1.0 - _ROT_WEIGHT) * widths + _ROT_WEIGHT * rots / total_rot
    else:
        weights = widths.copy()
    alloc = np.maximum(1, np.round(steps * weights / weights.sum()).astype(int))
    while alloc.sum() > steps:
        candidates = np.where(alloc > 1)[0]
        if candidates.size == 0:
            break
        alloc[candidates[np.argmax(alloc[candidates])]] -= 1
    while alloc.sum() < steps:
        alloc[np.argmax(weights / alloc)] += 1

    nodes = [1.0]
    for (a, b, _), m in zip(cells, alloc):
        nodes.extend(np.linspace(a, b, m + 1)[1:])
    lams = np.asarray(nodes)
    lams[-1] = 0.0
    mids = 0.5 * (lams[:-1] + lams[1:])
    cell_widths = lams[:-1] - lams[1:]

    dim = pair.dim
    mid_energies = np.empty((mids.size, dim))
    mid_states = np.empty((mids.size, dim, dim))
    for s, lam in enumerate(mids):
        es = ham.spectrum_at(pair, lam)
        mid_energies[s] = es.energies
        mid_states[s] = es.states

    psi0 = ham.spectrum_at(pair, 1.0).states[:, 0].astype(complex)
    return SchedulePlan(
        pair=pair,
        lams=lams,
        mids=mids,
        widths=cell_widths,
        mid_energies=mid_energies,
        mid_states=mid_states,
        psi0=psi0,
        ground_index=ham.problem_ground_index(pair),
    )


def _propagate_chain_py(Vs, ws, dts, psi0):
    """Numpy fallback for the stepping kernel (same contract as the jitted one)."""
    psi = psi0.copy()
    drift = 0.0
    for s in range(Vs.shape[0]):
        V = Vs[s]
        coeff = (V.T @ psi) * np.exp(-1j * ws[s] * dts[s])
        psi = V @ coeff
        drift = max(drift, abs(np.linalg.norm(psi) - 1.0))
    return psi, drift


if numba is not None:

    @numba.njit(cache=True)
    def _propagate_chain(Vs, ws, dts, psi0):  # pragma: no cover - jitted
        steps, dim = ws.shape
        psi = psi0.copy()
        tmp = np.empty(dim, dtype=np.complex128)
        drift = 0.0
        for s in range(steps):
            V = Vs[s]
            for i in range(dim):
                acc = 0j
                for k in range(dim):
                    acc += V[k, i] * psi[k]
                tmp[i] = acc * np.exp(-1j * ws[s, i] * dts[s])
            norm2 = 0.0
            for i in range(dim):
                acc = 0j
                for k in range(dim):
                    acc += V[i, k] * tmp[k]
                psi[i] = acc
                norm2 += acc.real**2 + acc.imag**2
            d = abs(math.sqrt(norm2) - 1.0)
            if d > drift:
                drift = d
        return psi, drift

else:  # pragma: no cover - exercised only without numba
    _propagate_chain = _propagate_chain_py


def pace(controller: PaceController, c2: float) -> float:
    """|dt/dlam| at the current point; the stepper supplies the sign."""
    if controller.kind == "linear":
        return controller.T_total
    if controller.curvature_floor is None:
        raise ValueError(
            "feedback controller has an unresolved curvature_floor; "
            "evolve() resolves it from the curvature profile"
        )
    return controller.k * max(abs(c2), controller.curvature_floor)


def _curvature_on_grid(controller, plan, flow):
    """|c2| at the plan's nodes and midpoints, per the controller's source."""
    lams_all = np.concatenate([plan.lams, plan.mids])
    if controller.source == "replay":
        lam_tab, c2_tab = controller.profile
        # np.interp wants ascending abscissae; profiles are stored descending.
        values = np.interp(lams_all[::-1], lam_tab[::-1], c2_tab[::-1])[::-1]
        abs_c2 = np.abs(values)
    else:
        if flow is None:
            flow = spectral.solve_levels(plan.pair)
        c2_full, _ = flow.curvatures(lams_all)
        abs_c2 = np.abs(c2_full)
    n_nodes = plan.lams.size
    return abs_c2[:n_nodes], abs_c2[n_nodes:], flow


def _resolve_controller(controller, plan, flow):
    """Fill in the default curvature floor; return pace values on the grid."""
    if controller.kind == "linear":
        nodes = np.full(plan.lams.size, controller.T_total)
        mids = np.full(plan.mids.size, controller.T_total)
        return controller, nodes, mids, flow
    c2_nodes, c2_mids, flow = _curvature_on_grid(controller, plan, flow)
    if controller.curvature_floor is None:
        peak = max(float(c2_nodes.max()), float(c2_mids.max()))
        controller = replace(controller, curvature_floor=DEFAULT_FLOOR_FRACTION * peak)
    floor = controller.curvature_floor
    nodes = controller.k * np.maximum(c2_nodes, floor)
    mids = controller.k * np.maximum(c2_mids, floor)
    return controller, nodes, mids, flow


def _cell_times(plan, pace_nodes, pace_mids):
    """Per-cell dt by Simpson's rule on the pace: (h/6)(left + 4 mid + right)."""
    return (plan.widths / 6.0) * (pace_nodes[:-1] + 4.0 * pace_mids + pace_nodes[1:])


def pace_time_integral(plan, pace_nodes, pace_mids) -> float:
    """Total time of a schedule: the integral of the pace over lam in [0, 1]."""
    return float(_cell_times(plan, pace_nodes, pace_mids).sum())


def gain_for_time(
    plan: SchedulePlan,
    T_target: float,
    curvature_floor: float | None = None,
    flow: spectral.LevelFlow | None = None,
):
    """Feedback gain k whose schedule takes exactly T_target.

    The realized time of a feedback run is k times the pace integral at
    unit gain, so k = T_target / integral.  Returns (controller, flow) with
    the floor resolved, reusing the level flow across calls.
    """
    probe = PaceController.feedback(k=1.0, curvature_floor=curvature_floor)
    probe, nodes, mids, flow = _resolve_controller(probe, plan, flow)
    unit_time = pace_time_integral(plan, nodes, mids)
    controller = replace(probe, k=T_target / unit_time)
    return controller, flow


def evolve(
    pair: ham.HamiltonianPair,
    controller: PaceController,
    *,
    steps: int = 2048,
    sample_stride: int = 0,
    plan: SchedulePlan | None = None,
    flow: spectral.LevelFlow | None = None,
) -> RunRecord:
    """Run one sweep from lam = 1 to 0 and score it.

    sample_stride > 0 records a trajectory row every that-many grid nodes
    (plus the endpoints): lam, t, instantaneous ground-state population,
    gap, and |c2| recomputed from the spectrum at the node.  plan and flow
    allow reuse of the per-instance precomputations across runs.
    """
    if plan is None:
        plan = build_schedule(pair, steps)
    controller, pace_nodes, pace_mids, flow = _resolve_controller(
        controller, plan, flow
    )
    dts = _cell_times(plan, pace_nodes, pace_mids)

    Vs, ws = plan.mid_states, plan.mid_energies
    if sample_stride > 0:
        marks = list(range(0, plan.lams.size - 1, sample_stride))
        if marks[-1] != plan.lams.size - 1:
            marks.append(plan.lams.size - 1)
        rows = []
        psi = plan.psi0.copy()
        drift = 0.0
        t_cum = np.concatenate([[0.0], np.cumsum(dts)])
        rows.append(_sample_row(pair, plan.lams[0], 0.0, psi))
        for a, b in zip(marks[:-1], marks[1:]):
            psi, d = _propagate_chain(Vs[a:b], ws[a:b], dts[a:b], psi)
            drift = max(drift, d)
            rows.append(_sample_row(pair, plan.lams[b], t_cum[b], psi))
        samples = np.array(rows)
    else:
        psi, drift = _propagate_chain(Vs, ws, dts, plan.psi0.copy())
        samples = None

    T = float(dts.sum())
    final = WaveState(amplitudes=psi, lam=0.0, t_elapsed=T)
    return RunRecord(
        pair=pair,
        controller=controller,
        P=success_probability(final, pair, ground_index=plan.ground_index),
        T=T,
        norm_drift=float(drift),
        psi=final,
        samples=samples,
    )


def _sample_row(pair, lam, t, psi):
    es = ham.spectrum_at(pair, lam)
    c2 = spectral.curvature_from_spectrum(es, pair.bias)
    p_inst = float(abs(es.states[:, 0] @ psi.conj()) ** 2)
    return (float(lam), float(t), p_inst, es.gap(), abs(c2.c2_full))


def success_probability(
    psi: WaveState, pair: ham.HamiltonianPair, ground_index: int | None = None
) -> float:
    """|<0(lam=0)|psi>|^2: the population of the problem ground basis state."""
    if psi.lam is None or abs(psi.lam) > 1e-12:
        raise InvalidStateError(
            f"success probability is defined at lambda = 0, state is at {psi.lam}"
        )
    if ground_index is None:
        ground_index = ham.problem_ground_index(pair)
    return float(abs(psi.amplitudes[ground_index]) ** 2)


def min_gap(pair: ham.HamiltonianPair, resolution: int = 512):
    """Minimum of E_1 - E_0 over lam in [0, 1] and its location.

    Dense scan at `resolution` points, then golden-section refinement in the
    bracketing cells (boundary minima included -- the single-qubit model has
    its minimum exactly at lam = 0).
    """
    if resolution < 16:
        raise ValueError(f"resolution must be >= 16, got {resolution}")
    lams = np.linspace(0.0, 1.0, resolution)
    diag = pair.problem_diag

    def gap(lam: float) -> float:
        w = np.linalg.eigvalsh(np.diag(diag) + lam * pair.bias)
        return float(w[1] - w[0])

    gaps = np.array([gap(lam) for lam in lams])
    i = int(np.argmin(gaps))
    lo = lams[max(i - 1, 0)]
    hi = lams[min(i + 1, resolution - 1)]
    res = minimize_scalar(gap, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    best_lam, best_gap = float(res.x), float(res.fun)
    # The bounded minimizer cannot land exactly on a boundary; check them too.
    for lam_edge in (lo, hi):
        g = gap(lam_edge)
        if g < best_gap:
            best_lam, best_gap = float(lam_edge), g
    return best_gap, best_lam


def adiabatic_time(pair: ham.HamiltonianPair, resolution: int = 512) -> float:
    """max over excited levels and lam of |<j|H_b|0>|, over the squared minimum gap.

    The timescale beyond which a sweep is effectively adiabatic; linear runs
    at T >> this value reach P ~ 1.
    """
    if resolution < 16:
        raise ValueError(f"resolution must be >= 16, got {resolution}")
    lams = np.linspace(0.0, 1.0, resolution)

    def coupling(lam: float) -> float:
        es = ham.spectrum_at(pair, lam)
        m = es.states[:, 0] @ pair.bias @ es.states[:, 1:]
        return float(np.max(np.abs(m)))

    values = np.array([coupling(lam) for lam in lams])
    i = int(np.argmax(values))
    lo = lams[max(i - 1, 0)]
    hi = lams[min(i + 1, resolution - 1)]
    res = minimize_scalar(
        lambda lam: -coupling(lam), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-10},
    )
    peak = max(values[i], -float(res.fun))
    gap_min, _ = min_gap(pair, resolution)
    return peak / gap_min**2


def backaction_window_ok(w: BackactionWindow) -> bool:
    """True when the minimum gap sits outside the tank's linewidth window."""
    return (
        w.delta_min > w.omega_lc + w.gamma_lc or w.delta_min < w.omega_lc - w.gamma_lc
    )

"""Lindblad master-equation integration and steady states.

The generator (hbar = 1) is

    drho/dt = -i[H, rho] + sum_k (rate_k/2) L(x_k)
              + sum active cascade terms  w ([s rho, T^dag] + [T, rho s^dag])
              + sum active pulsed dissipators,

with L(x) = 2 x rho x^dag - x^dag x rho - rho x^dag x.  Windowed terms are
rectangular in time; the integrator lands exactly on window boundaries so the
discontinuities never sit inside a step.

Internally the right-hand side is compiled to a sparse superoperator per
window segment (the generator is piecewise constant), which is algebraically
identical to the dense commutator form in `lindblad_rhs`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import IntegrationError, SteadyStateError
from .hilbert import DensityMatrix, HilbertSpace, Operator

STEADY_DENSE_MAX_DIM = 32      # dense lstsq + SVD nullspace check below this
STEADY_EVOLVE_MIN_DIM = 151    # spec fallback: time evolution above dim 150


@dataclass(frozen=True)
class CascadeTerm:
    """Unidirectional source->target coupling, active on a time window."""

    source_op: Operator
    target_op: Operator
    weight: float
    window: tuple[float, float]


@dataclass(frozen=True)
class PulsedDissipator:
    operator: Operator
    rate: float
    window: tuple[float, float]


@dataclass(frozen=True)
class LindbladModel:
    space: HilbertSpace
    hamiltonian: Operator | None = None
    dissipators: tuple = ()            # (Operator, rate >= 0) pairs
    cascade_terms: tuple = ()          # CascadeTerm
    pulsed_dissipators: tuple = ()     # PulsedDissipator

    def __post_init__(self):
        if self.hamiltonian is not None and self.hamiltonian.space != self.space:
            raise ValueError("hamiltonian lives on a different space")
        for op, rate in self.dissipators:
            if op.space != self.space:
                raise ValueError("dissipator operator lives on a different space")
            if rate < 0:
                raise ValueError("dissipator rate must be >= 0")
        for term in self.cascade_terms:
            if term.source_op.space != self.space or term.target_op.space != self.space:
                raise ValueError("cascade operator lives on a different space")
            _check_window(term.window)
        for pd in self.pulsed_dissipators:
            if pd.operator.space != self.space:
                raise ValueError("pulsed dissipator lives on a different space")
            if pd.rate < 0:
                raise ValueError("pulsed dissipator rate must be >= 0")
            _check_window(pd.window)


def _check_window(window):
    t1, t2 = window
    if not t1 < t2:
        raise ValueError(f"window must have t1 < t2, got {window}")


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    initial_step: float = 1e-3
    max_step: float = np.inf

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class EvolutionResult:
    times: np.ndarray
    observable_traces: np.ndarray     # [n_times, n_observables], real
    final_state: DensityMatrix


def _lind(rho, x, xdag, xdx):
    return 2 * (x @ rho @ xdag) - xdx @ rho - rho @ xdx


def lindblad_rhs(model: LindbladModel, rho: DensityMatrix, t: float) -> np.ndarray:
    """drho/dt at time t, dense matrix form (reference implementation)."""
    if rho.space != model.space:
        raise ValueError("state lives on a different space")
    r = rho.matrix
    d = model.space.dim
    out = np.zeros((d, d), dtype=complex)
    if model.hamiltonian is not None:
        h = model.hamiltonian.matrix
        out += -1j * (h @ r - r @ h)
    for op, rate in model.dissipators:
        x = op.matrix
        xdag = x.conj().T
        out += (rate / 2) * _lind(r, x, xdag, xdag @ x)
    for term in model.cascade_terms:
        if term.window[0] <= t < term.window[1]:
            s = term.source_op.matrix
            tg = term.target_op.matrix
            out += term.weight * (s @ r @ tg.conj().T - tg.conj().T @ s @ r
                                  + tg @ r @ s.conj().T - r @ s.conj().T @ tg)
    for pd in model.pulsed_dissipators:
        if pd.window[0] <= t < pd.window[1]:
            x = pd.operator.matrix
            xdag = x.conj().T
            out += (pd.rate / 2) * _lind(r, x, xdag, xdag @ x)
    return out


# ---------------------------------------------------------------------------
# sparse superoperator compilation (row-major vec: vec(A rho B) = kron(A, B.T) vec(rho))

def _sp(mat: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix(mat)


def _super_hamiltonian(h: sp.csr_matrix, ident: sp.csr_matrix) -> sp.csr_matrix:
    return (-1j * (sp.kron(h, ident) - sp.kron(ident, h.T))).tocsr()


def _super_dissipator(x: sp.csr_matrix, rate: float, ident: sp.csr_matrix) -> sp.csr_matrix:
    xdx = (x.conj().T @ x).tocsr()
    return (rate / 2 * (2 * sp.kron(x, x.conj())
                        - sp.kron(xdx, ident) - sp.kron(ident, xdx.T))).tocsr()


def _super_cascade(s: sp.csr_matrix, tg: sp.csr_matrix, w: float,
                   ident: sp.csr_matrix) -> sp.csr_matrix:
    return (w * (sp.kron(s, tg.conj()) - sp.kron((tg.conj().T @ s).tocsr(), ident)
                 + sp.kron(tg, s.conj()) - sp.kron(ident, (s.conj().T @ tg).T.tocsr()))).tocsr()


def build_superoperator(model: LindbladModel, t: float | None = None) -> sp.csr_matrix:
    """Sparse generator at time t (windowed terms included iff active).

    With t=None only the always-on part is returned.
    """
    d = model.space.dim
    ident = sp.identity(d, format="csr", dtype=complex)
    total = sp.csr_matrix((d * d, d * d), dtype=complex)
    if model.hamiltonian is not None:
        total = total + _super_hamiltonian(_sp(model.hamiltonian.matrix), ident)
    for op, rate in model.dissipators:
        total = total + _super_dissipator(_sp(op.matrix), rate, ident)
    if t is not None:
        for term in model.cascade_terms:
            if term.window[0] <= t < term.window[1]:
                total = total + _super_cascade(_sp(term.source_op.matrix),
                                               _sp(term.target_op.matrix),
                                               term.weight, ident)
        for pd in model.pulsed_dissipators:
            if pd.window[0] <= t < pd.window[1]:
                total = total + _super_dissipator(_sp(pd.operator.matrix), pd.rate, ident)
    return total.tocsr()


def _window_boundaries(model: LindbladModel) -> list[float]:
    pts = set()
    for term in model.cascade_terms:
        pts.update(term.window)
    for pd in model.pulsed_dissipators:
        pts.update(pd.window)
    return sorted(pts)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) with step landing on sample times and window boundaries

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def _integrate_segment(L: sp.csr_matrix, v: np.ndarray, t0: float, t1: float,
                       cfg: IntegratorConfig, h_start: float,
                       stops: np.ndarray, on_stop) -> tuple[np.ndarray, float]:
    """Advance v from t0 to t1 with dv/dt = L v, calling on_stop(t, v) at stops.

    Returns (v at t1, last step size) for reuse in the next segment.
    """
    t = t0
    h = min(h_start, cfg.max_step, t1 - t0)
    k1 = L @ v
    stop_idx = 0
    while stops[stop_idx] < t0 + 1e-14 * max(1.0, abs(t0)):
        stop_idx += 1
    while t < t1 - 1e-14 * max(1.0, abs(t1)):
        target = min(stops[stop_idx], t1)
        h_try = min(h, target - t)
        ks = [k1]
        for i in range(1, 7):
            yi = v + h_try * sum(a * k for a, k in zip(_DP_A[i], ks))
            ks.append(L @ yi)
        y5 = v + h_try * sum(b * k for b, k in zip(_DP_B5, ks) if b != 0.0)
        err = h_try * sum((b5 - b4) * k for b5, b4, k in zip(_DP_B5, _DP_B4, ks))
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(v), np.abs(y5))
        enorm = np.sqrt(np.mean(np.abs(err / scale) ** 2))
        if enorm <= 1.0:
            t = t + h_try
            v = y5
            k1 = ks[6]  # FSAL
            if abs(t - target) <= 1e-14 * max(1.0, abs(t)):
                on_stop(target, v)
                if stops[stop_idx] <= target:
                    stop_idx += 1
        factor = 0.9 * enorm ** -0.2 if enorm > 0 else 5.0
        h = min(h_try * min(5.0, max(0.2, factor)), cfg.max_step)
        if h < 1e-13 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t:.6g}")
    return v, h


def evolve(model: LindbladModel, rho0: DensityMatrix, sample_times,
           observables, cfg: IntegratorConfig | None = None,
           check_positivity: bool = False) -> EvolutionResult:
    """Integrate the master equation, recording Tr[O rho] at the sample times."""
    cfg = cfg or IntegratorConfig()
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.size == 0:
        raise ValueError("no sample times")
    if np.any(np.diff(sample_times) <= 0) or sample_times[0] < 0:
        raise ValueError("sample_times must be sorted, nonnegative")
    if rho0.space != model.space:
        raise ValueError("initial state lives on a different space")
    obs_mats = []
    for op in observables:
        if op.space != model.space:
            raise ValueError("observable lives on a different space")
        obs_mats.append(op.matrix.T.ravel())  # Tr[O rho] = vec(O^T) . vec(rho)

    d = model.space.dim
    t_end = float(sample_times[-1])
    boundaries = [b for b in _window_boundaries(model) if 0.0 < b < t_end]
    seg_edges = [0.0] + boundaries + [t_end]

    traces = np.full((sample_times.size, len(obs_mats)), np.nan)

    def record(t, v):
        idx = np.searchsorted(sample_times, t)
        for j in (idx - 1, idx, idx + 1):
            if 0 <= j < sample_times.size and abs(sample_times[j] - t) <= 1e-12 * max(1.0, t):
                _validate_vec(v, d, t, check_positivity)
                for k, om in enumerate(obs_mats):
                    traces[j, k] = (om @ v).real

    v = rho0.matrix.ravel().astype(complex)
    if sample_times[0] == 0.0:
        record(0.0, v)
    h = cfg.initial_step
    for a, b in zip(seg_edges[:-1], seg_edges[1:]):
        if b <= a:
            continue
        L = build_superoperator(model, t=(a + b) / 2)
        stops = np.append(sample_times[(sample_times > a) & (sample_times <= b)], b)
        stops = np.unique(stops)
        v, h = _integrate_segment(L, v, a, b, cfg, h, stops, record)
    if np.isnan(traces).any():
        missing = [float(sample_times[j]) for j in range(sample_times.size)
                   if np.isnan(traces[j]).any()]
        raise IntegrationError(f"sample times not reached: {missing}")

    final = DensityMatrix(model.space, v.reshape(d, d)).validate(check_psd=check_positivity)
    return EvolutionResult(times=sample_times, observable_traces=traces, final_state=final)


def _validate_vec(v, d, t, check_positivity):
    rho = v.reshape(d, d)
    herm = np.max(np.abs(rho - rho.conj().T))
    tr = np.trace(rho).real
    if herm > 1e-9:
        raise IntegrationError(f"hermiticity violated at t={t:.6g}: {herm:.3e}")
    if abs(tr - 1.0) > 1e-7:
        raise IntegrationError(f"trace drifted at t={t:.6g}: {tr:.12g}")
    if check_positivity:
        lam = np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0]
        if lam < -1e-6:
            raise IntegrationError(f"positivity violated at t={t:.6g}: {lam:.3e}")


# ---------------------------------------------------------------------------
# steady state

def steady_state(model: LindbladModel, cfg: IntegratorConfig | None = None) -> DensityMatrix:
    """Stationary state of an autonomous model.

    Solves L vec(rho) = 0 with the trace constraint; falls back to long-time
    evolution for spaces larger than the direct-solve threshold.
    """
    if model.cascade_terms or model.pulsed_dissipators:
        raise ValueError("steady_state requires an autonomous model (no windowed terms)")
    d = model.space.dim
    if d >= STEADY_EVOLVE_MIN_DIM:
        return _steady_by_evolution(model, cfg)
    L = build_superoperator(model, t=None)
    if d <= STEADY_DENSE_MAX_DIM:
        rho = _steady_dense(L.toarray(), d)
    else:
        rho = _steady_sparse(L, d)
    resid = np.linalg.norm(L @ rho.ravel())
    if resid > 1e-8:
        raise SteadyStateError(f"steady-state residual {resid:.3e} exceeds 1e-8")
    return DensityMatrix(model.space, rho).validate()


def _trace_row(d: int) -> np.ndarray:
    row = np.zeros(d * d, dtype=complex)
    row[:: d + 1] = 1.0
    return row


def _hermitize_normalize(x: np.ndarray, d: int) -> np.ndarray:
    rho = x.reshape(d, d)
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def _steady_dense(L: np.ndarray, d: int) -> np.ndarray:
    sv = np.linalg.svd(L, compute_uv=False)
    null_dim = int(np.sum(sv < 1e-10 * max(1.0, sv[0])))
    if null_dim != 1:
        raise SteadyStateError(f"non-unique steady state (null space dimension {null_dim})")
    aug = np.vstack([L, _trace_row(d)])
    b = np.zeros(d * d + 1, dtype=complex)
    b[-1] = 1.0
    x, *_ = np.linalg.lstsq(aug, b, rcond=None)
    return _hermitize_normalize(x, d)


def _steady_sparse(L: sp.csr_matrix, d: int) -> np.ndarray:
    tr = sp.csr_matrix(_trace_row(d))
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    sol = []
    # two different replaced rows: a degenerate null space yields different
    # solutions, a unique one yields the same state twice
    for cut in (0, d * d - 1):
        parts = []
        if cut > 0:
            parts.append(L[:cut])
        parts.append(tr)
        if cut < d * d - 1:
            parts.append(L[cut + 1:])
        M = sp.vstack(parts).tocsc()
        rhs = np.zeros(d * d, dtype=complex)
        rhs[cut] = 1.0
        try:
            sol.append(splu(M).solve(rhs))
        except RuntimeError as exc:
            raise SteadyStateError(f"sparse steady-state solve failed: {exc}") from exc
    if np.max(np.abs(sol[0] - sol[1])) > 1e-6:
        raise SteadyStateError("non-unique steady state (solutions disagree)")
    return _hermitize_normalize(sol[0], d)


def _steady_by_evolution(model: LindbladModel, cfg: IntegratorConfig | None,
                         max_time: float = 10_000.0) -> DensityMatrix:
    from .hilbert import vacuum_state

    cfg = cfg or IntegratorConfig()
    L = build_superoperator(model, t=None)
    v = vacuum_state(model.space).matrix.ravel().astype(complex)
    d = model.space.dim
    t, chunk, h = 0.0, 20.0, cfg.initial_step
    while t < max_time:
        stops = np.array([t + chunk])
        v, h = _integrate_segment(L, v, t, t + chunk, cfg, h, stops, lambda *_: None)
        t += chunk
        if np.linalg.norm(L @ v) < 1e-9:
            return DensityMatrix(model.space, _hermitize_normalize(v, d)).validate()
    raise SteadyStateError(f"no steady state reached by t={max_time:g}")

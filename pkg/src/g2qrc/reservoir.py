"""Fixed random two-level reservoir: pre-pump, cascade drive, occupation readout.

A reservoir is a fully connected network of two-level nodes with random
symmetric hopping couplings (rescaled to a target spectral radius) and random
nonnegative input weights.  Each node decays at rate gamma and is incoherently
pumped at rate p.  A prepared source state is coupled in unidirectionally
through a rectangular time window; node occupations sampled at a fixed time
grid form the feature vector handed to the regression stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    CascadeTerm,
    IntegratorConfig,
    LindbladModel,
    PulsedDissipator,
    evolve,
    steady_state,
)
from .hilbert import (
    BOSON,
    DensityMatrix,
    HilbertSpace,
    Operator,
    boson,
    mode_operator,
    partial_trace,
    reduce_operator,
    tensor,
    two_level,
)
from .seeding import derive_rng
from .sources import PreparedSource

NODE_PREFIX = "node"

#: layout tags for FeatureVector.values
LAYOUT_RESERVOIR = "node-major-time"
LAYOUT_BASELINE = "monitored-occupation"

#: never trim a boson mode below this many Fock levels
_MIN_TRIM_LEVELS = 4

#: occupations may exceed [0, 1] by at most this before clipping
_OCCUPATION_SLACK = 1e-6


@dataclass(frozen=True)
class ReservoirConfig:
    """Static reservoir parameters, in units of the node decay rate gamma."""

    n_nodes: int = 2
    gamma: float = 1.0
    pump: float = 0.2
    eta: float = 0.5
    win_scale: float = 0.5
    spectral_target: float = 1.0
    window: tuple[float, float] = (0.0, 5.0)
    sample_times: tuple[float, ...] = tuple(np.linspace(0.5, 10.0, 10))
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be >= 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.pump < 0 or self.eta < 0:
            raise ValueError("pump and eta must be nonnegative")
        if self.win_scale <= 0 or self.spectral_target <= 0:
            raise ValueError("win_scale and spectral_target must be positive")
        t1, t2 = self.window
        if not t1 < t2:
            raise ValueError("window must have t1 < t2")
        ts = np.asarray(self.sample_times, dtype=float)
        if ts.size == 0 or ts[0] < 0 or np.any(np.diff(ts) <= 0):
            raise ValueError("sample_times must be sorted and nonnegative")
        object.__setattr__(self, "sample_times", tuple(float(t) for t in ts))
        object.__setattr__(self, "window", (float(t1), float(t2)))


@dataclass(frozen=True)
class ReservoirInstance:
    """One sampled reservoir: immutable couplings and input weights."""

    config: ReservoirConfig
    coupling: np.ndarray       # J, real symmetric n x n, zero diagonal
    input_weights: np.ndarray  # W_in, n_nodes x 1, entries in [0, win_scale]

    def __post_init__(self):
        n = self.config.n_nodes
        j = np.asarray(self.coupling, dtype=float)
        w = np.asarray(self.input_weights, dtype=float)
        if j.shape != (n, n):
            raise ValueError("coupling must be n_nodes x n_nodes")
        if not np.allclose(j, j.T, atol=0) or np.any(np.diag(j) != 0):
            raise ValueError("coupling must be symmetric with zero diagonal")
        if w.shape != (n, 1):
            raise ValueError("input_weights must be n_nodes x 1")
        j.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "coupling", j)
        object.__setattr__(self, "input_weights", w)

    @property
    def node_labels(self) -> tuple[str, ...]:
        return tuple(f"{NODE_PREFIX}{j}" for j in range(self.config.n_nodes))

    def node_space(self) -> HilbertSpace:
        return HilbertSpace(tuple(two_level(lbl) for lbl in self.node_labels))

    def hamiltonian(self, hs: HilbertSpace | None = None) -> Operator:
        """Hopping Hamiltonian sum_ij J_ij (b_i^dag b_j + b_j^dag b_i)."""
        hs = hs or self.node_space()
        return _hopping_hamiltonian(self.coupling, hs, self.node_labels)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout: str = LAYOUT_RESERVOIR

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError("feature values must be a finite 1-D vector")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def _hopping_hamiltonian(coupling: np.ndarray, hs: HilbertSpace,
                         labels: tuple[str, ...]) -> Operator:
    n = len(labels)
    lowers = [mode_operator(hs, lbl, "lower") for lbl in labels]
    h = np.zeros((hs.dim, hs.dim), dtype=complex)
    for i in range(n):
        for j in range(n):
            if coupling[i, j] == 0:
                continue
            hop = lowers[i].dag() @ lowers[j]
            h += coupling[i, j] * (hop.matrix + hop.matrix.conj().T)
    return Operator(hs, h)


def sample_reservoir(config: ReservoirConfig) -> ReservoirInstance:
    """Draw couplings and input weights deterministically from config.seed."""
    n = config.n_nodes
    rng_j = derive_rng(config.seed, "reservoir:couplings")
    j = np.zeros((n, n))
    for i in range(n):
        for k in range(i + 1, n):
            j[i, k] = j[k, i] = rng_j.uniform(-1.0, 1.0)
    if n > 1:
        labels = tuple(f"{NODE_PREFIX}{i}" for i in range(n))
        hs = HilbertSpace(tuple(two_level(lbl) for lbl in labels))
        h = _hopping_hamiltonian(j, hs, labels)
        radius = float(np.max(np.abs(np.linalg.eigvalsh(h.matrix))))
        if radius > 0:
            j = j * (config.spectral_target / radius)
    rng_w = derive_rng(config.seed, "reservoir:input-weights")
    w = rng_w.uniform(0.0, config.win_scale, size=(n, 1))
    return ReservoirInstance(config=config, coupling=j, input_weights=w)


def prepump(instance: ReservoirInstance) -> DensityMatrix:
    """Steady state of the decoupled reservoir (hopping + decay + pump)."""
    cfg = instance.config
    hs = instance.node_space()
    dissipators = []
    for lbl in instance.node_labels:
        b = mode_operator(hs, lbl, "lower")
        dissipators.append((b, cfg.gamma))
        if cfg.pump > 0:
            dissipators.append((b.dag(), cfg.pump))
    model = LindbladModel(space=hs, hamiltonian=instance.hamiltonian(hs),
                          dissipators=tuple(dissipators))
    return steady_state(model)


def _trim_boson_tails(rho: DensityMatrix, ops: list[Operator],
                      tail_tol: float) -> tuple[DensityMatrix, list[Operator]]:
    """Shrink boson truncations whose occupied tail mass is below tail_tol.

    Exact for annihilation-type operators; for Hamiltonians with weak drive
    terms the discarded matrix elements only touch Fock levels whose
    population is below tail_tol.
    """
    modes = rho.space.modes
    keep = []
    for m in modes:
        if m.kind != BOSON or m.dim <= _MIN_TRIM_LEVELS:
            keep.append(m.dim)
            continue
        marginal = partial_trace(rho, [m.label])
        pops = np.maximum(np.diag(marginal.matrix).real, 0.0)
        tail = np.concatenate([np.cumsum(pops[::-1])[::-1], [0.0]])
        d_new = m.dim
        for d in range(_MIN_TRIM_LEVELS, m.dim + 1):
            if tail[d] < tail_tol:
                d_new = d
                break
        keep.append(d_new)
    if keep == [m.dim for m in modes]:
        return rho, ops

    def slice_matrix(mat: np.ndarray) -> np.ndarray:
        dims = [m.dim for m in modes]
        t = mat.reshape(dims + dims)
        for axis, d_new in enumerate(keep):
            t = np.take(t, np.arange(d_new), axis=axis)
            t = np.take(t, np.arange(d_new), axis=axis + len(modes))
        d_tot = int(np.prod(keep))
        return t.reshape(d_tot, d_tot)

    new_modes = tuple(
        boson(m.label, d) if m.kind == BOSON and d != m.dim else m
        for m, d in zip(modes, keep)
    )
    new_space = HilbertSpace(new_modes)
    rho_mat = slice_matrix(rho.matrix)
    trace = rho_mat.trace().real
    if not trace > 1.0 - 10 * tail_tol:
        raise ValueError("boson tail trimming discarded too much population")
    rho_new = DensityMatrix(new_space, rho_mat / trace).validate()
    ops_new = [Operator(new_space, slice_matrix(op.matrix)) for op in ops]
    return rho_new, ops_new


def reduced_source(source: PreparedSource,
                   tail_tol: float = 1e-8) -> tuple[DensityMatrix, Operator]:
    """Static source state and monitored operator on the smallest space.

    Only valid for sources without their own dynamics: modes outside the
    monitored operator's support are traced out (exact for a held-fixed
    state) and boson truncations are shrunk to the occupied Fock range.
    """
    if source.hamiltonian is not None or source.dissipators:
        raise ValueError("reduced_source applies to static sources only")
    labels = source.monitored_labels
    if set(labels) != {m.label for m in source.rho.space.modes}:
        rho = partial_trace(source.rho, labels)
        op = reduce_operator(source.monitored_op, labels)
    else:
        rho, op = source.rho, source.monitored_op
    rho, (op,) = _trim_boson_tails(rho, [op], tail_tol)
    return rho, op


def _reduced_dynamic_source(source: PreparedSource, tail_tol: float):
    """Trim a driven-dissipative source, keeping its Hamiltonian and decay.

    No modes are traced out (their dynamics feed the monitored mode); only
    unoccupied Fock tails are dropped, with every source operator sliced to
    the same reduced space.
    """
    ops = [source.monitored_op, source.hamiltonian]
    ops.extend(op for op, _ in source.dissipators)
    rho, trimmed = _trim_boson_tails(source.rho, ops, tail_tol)
    s_op, h_op = trimmed[0], trimmed[1]
    dissipators = tuple((op, rate) for op, (_, rate)
                        in zip(trimmed[2:], source.dissipators))
    return rho, s_op, h_op, dissipators


def run_cascade(instance: ReservoirInstance, source: PreparedSource,
                prepumped: DensityMatrix | None = None,
                integrator: IntegratorConfig | None = None,
                tail_tol: float = 1e-8) -> FeatureVector:
    """Drive the reservoir with a prepared source; return node occupations.

    The joint state starts as prepump(instance) tensor the reduced source
    state.  Node decay and pump stay on throughout, as do the source's own
    Hamiltonian and decay channels when it has them (driven-dissipative
    sources remain stationary until coupled); the unidirectional
    source-to-node couplings (weights W_in) and the source decay eta act only
    inside the configured window.  Features are <b_j^dag b_j> at the sample
    times, node-major then time.
    """
    cfg = instance.config
    dynamic = source.hamiltonian is not None or bool(source.dissipators)
    if dynamic:
        rho_s, s_local, h_local, local_diss = _reduced_dynamic_source(
            source, tail_tol)
    else:
        rho_s, s_local = reduced_source(source, tail_tol=tail_tol)
        h_local, local_diss = None, ()
    rho_r = prepumped if prepumped is not None else prepump(instance)
    rho0 = tensor(rho_r, rho_s)
    joint = rho0.space

    dim_r = rho_r.space.dim
    dim_s = rho_s.space.dim
    eye_r = np.eye(dim_r, dtype=complex)
    s_op = Operator(joint, np.kron(eye_r, s_local.matrix))

    dissipators = [(Operator(joint, np.kron(eye_r, op.matrix)), rate)
                   for op, rate in local_diss]
    cascade = []
    observables = []
    for j, lbl in enumerate(instance.node_labels):
        b = mode_operator(joint, lbl, "lower")
        dissipators.append((b, cfg.gamma))
        if cfg.pump > 0:
            dissipators.append((b.dag(), cfg.pump))
        w = float(instance.input_weights[j, 0])
        if w > 0:
            cascade.append(CascadeTerm(source_op=s_op, target_op=b,
                                       weight=w, window=cfg.window))
        observables.append(b.dag() @ b)

    h_mat = np.kron(instance.hamiltonian().matrix, np.eye(dim_s, dtype=complex))
    if h_local is not None:
        h_mat = h_mat + np.kron(eye_r, h_local.matrix)
    model = LindbladModel(
        space=joint,
        hamiltonian=Operator(joint, h_mat),
        dissipators=tuple(dissipators),
        cascade_terms=tuple(cascade),
        pulsed_dissipators=(PulsedDissipator(s_op, cfg.eta, cfg.window),)
        if cfg.eta > 0 else (),
    )

    result = evolve(model, rho0, cfg.sample_times, observables, integrator)
    occ = result.observable_traces.T.ravel()  # node-major then time
    if np.any(occ < -_OCCUPATION_SLACK) or np.any(occ > 1 + _OCCUPATION_SLACK):
        raise ValueError(f"node occupation outside [0, 1]: {occ.min()}..{occ.max()}")
    return FeatureVector(np.clip(occ, 0.0, 1.0), LAYOUT_RESERVOIR)


def baseline_features(source: PreparedSource) -> FeatureVector:
    """Single-feature vector: the monitored-mode occupation (reservoir bypass)."""
    return FeatureVector(np.array([source.label_occupation]), LAYOUT_BASELINE)

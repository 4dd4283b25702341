"""The four quantum-optical source families and their g2(0) labels.

Each builder returns a PreparedSource: the source density matrix, the
monitored mode operator whose statistics are labeled, and the ground-truth
g2(0) (closed form where one exists, otherwise computed from the state).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import LindbladModel, steady_state
from .errors import G2qrcError, TruncationLeakError, VacuumStateError
from .hilbert import (
    DensityMatrix,
    Operator,
    apply_and_normalize,
    boson,
    coherent_state,
    fock_state,
    matrix_exp,
    mode_operator,
    occupation,
    second_order_coherence,
    space,
    tensor,
    thermal_state,
    two_level,
    vacuum_state,
)
from .seeding import derive_rng

CV_MIXTURE = "3B-Mix"
EMITTER_CAVITY = "Em-in-Cav"
PHOTON_ADDED = "Ph-Added"
COHERENT_TLS_MIX = "Coh-2LS-Mix"

SOURCE_IDS = (CV_MIXTURE, EMITTER_CAVITY, PHOTON_ADDED, COHERENT_TLS_MIX)


@dataclass(frozen=True)
class PreparedSource:
    """A source state, its monitored mode, and its exact g2(0) label.

    Statically prepared states (mixtures, photon-added states) carry no
    dynamics of their own: `hamiltonian` is None and `dissipators` is empty,
    and the state is held fixed while it drives the reservoir.  Driven-
    dissipative sources (emitter-cavity, coherent/two-level arms) carry the
    Hamiltonian and decay channels that sustain their steady state; these stay
    active while the source is coupled to the reservoir, so the emitted field
    keeps its spectral structure.
    """

    rho: DensityMatrix
    monitored_op: Operator
    monitored_labels: tuple[str, ...]
    label_g2: float
    label_occupation: float
    source_id: str
    params: dict
    hamiltonian: Operator | None = None
    dissipators: tuple[tuple[Operator, float], ...] = ()

    def __post_init__(self):
        if self.label_g2 < 0:
            raise ValueError("g2 label must be nonnegative")
        if self.label_occupation <= 0:
            raise ValueError("monitored occupation must be positive")
        for op, rate in self.dissipators:
            if op.space != self.rho.space or rate < 0:
                raise ValueError("dissipators must live on the source space "
                                 "with nonnegative rates")
        if self.hamiltonian is not None and self.hamiltonian.space != self.rho.space:
            raise ValueError("hamiltonian must live on the source space")


# ---------------------------------------------------------------------------
# 3B-Mix: statistical mixture of Fock, coherent and thermal states

@dataclass(frozen=True)
class CvMixtureSpec:
    theta: float
    phi: float
    fock_n: int = 1
    alpha: complex = 1.0 + 0.0j
    nbar: float = 0.5
    truncation: int = 30

    @property
    def weights(self) -> tuple[float, float, float]:
        p1 = math.cos(self.theta) ** 2
        p2 = math.sin(self.theta) ** 2 * math.cos(self.phi) ** 2
        p3 = math.sin(self.theta) ** 2 * math.sin(self.phi) ** 2
        return p1, p2, p3


def cv_mixture_g2_analytic(spec: CvMixtureSpec) -> float:
    p1, p2, p3 = spec.weights
    n, a2, nb = spec.fock_n, abs(spec.alpha) ** 2, spec.nbar
    denom = p1 * n + p2 * a2 + p3 * nb
    if denom <= 1e-12:
        raise VacuumStateError("mixture has vanishing occupation, g2 undefined")
    return (p1 * n * (n - 1) + p2 * a2 ** 2 + 2 * p3 * nb ** 2) / denom ** 2


def build_cv_mixture(spec: CvMixtureSpec) -> PreparedSource:
    p1, p2, p3 = spec.weights
    assert abs(p1 + p2 + p3 - 1.0) < 1e-12
    d, label = spec.truncation, "s"
    mix = (p1 * fock_state(spec.fock_n, d, label).matrix
           + p2 * coherent_state(spec.alpha, d, label).matrix
           + p3 * thermal_state(spec.nbar, d, label).matrix)
    rho = DensityMatrix(space(boson(label, d)), mix)
    a = mode_operator(rho.space, label, "annihilate")
    return PreparedSource(
        rho=rho,
        monitored_op=a,
        monitored_labels=(label,),
        label_g2=cv_mixture_g2_analytic(spec),
        label_occupation=occupation(rho, a),
        source_id=CV_MIXTURE,
        params={"theta": spec.theta, "phi": spec.phi},
    )


# ---------------------------------------------------------------------------
# Em-in-Cav: two coupled Kerr modes, driven and damped, at steady state

@dataclass(frozen=True)
class EmitterCavitySpec:
    """Parameters in units of gamma_a (Fig.-style operating point by default)."""

    delta_a: float = 0.0
    delta_b: float = 1.6
    coupling_j: float = 1.6
    kerr_a: float = 0.0
    kerr_b: float = 1.0
    omega_a: float = 0.1
    omega_b: float = 0.07
    gamma_a: float = 1.0
    gamma_b: float = 0.1
    trunc_a: int = 6
    trunc_b: int = 6

    def __post_init__(self):
        if self.gamma_a <= 0:
            raise ValueError("gamma_a must be positive")
        if self.trunc_a < 4 or self.trunc_b < 4:
            raise ValueError("truncations must be >= 4")


def emitter_cavity_model(spec: EmitterCavitySpec) -> tuple[LindbladModel, Operator, Operator]:
    hs = space(boson("a", spec.trunc_a), boson("b", spec.trunc_b))
    a = mode_operator(hs, "a", "annihilate")
    b = mode_operator(hs, "b", "annihilate")
    h = (spec.delta_a * (a.dag() @ a) + spec.delta_b * (b.dag() @ b)
         + spec.coupling_j * (a.dag() @ b + a @ b.dag())
         + (spec.kerr_b / 2) * (b.dag() @ b.dag() @ b @ b)
         + (spec.kerr_a / 2) * (a.dag() @ a.dag() @ a @ a)
         + spec.omega_a * (a + a.dag()) + spec.omega_b * (b + b.dag()))
    model = LindbladModel(hs, hamiltonian=h,
                          dissipators=((a, spec.gamma_a), (b, spec.gamma_b)))
    return model, a, b


def build_emitter_cavity(spec: EmitterCavitySpec, leak_tol: float = 1e-8) -> PreparedSource:
    model, a, b = emitter_cavity_model(spec)
    rho = steady_state(model)
    _check_top_level_population(rho, ("a", "b"), leak_tol)
    return PreparedSource(
        rho=rho,
        monitored_op=a,
        monitored_labels=("a",),
        label_g2=second_order_coherence(rho, a),
        label_occupation=occupation(rho, a),
        source_id=EMITTER_CAVITY,
        params={"delta_a": spec.delta_a, "delta_b": spec.delta_b},
        hamiltonian=model.hamiltonian,
        dissipators=model.dissipators,
    )


def _check_top_level_population(rho: DensityMatrix, labels, leak_tol: float):
    diag = np.real(np.diag(rho.matrix))
    dims = [m.dim for m in rho.space.modes]
    pops = diag.reshape(dims)
    for i, m in enumerate(rho.space.modes):
        if m.label in labels:
            top = np.take(pops, -1, axis=i).sum()
            if top > leak_tol:
                raise TruncationLeakError(
                    f"mode {m.label!r} top-level population {top:.3e} exceeds {leak_tol:g}"
                )


# ---------------------------------------------------------------------------
# Ph-Added: m-photon-added squeezed vacuum

@dataclass(frozen=True)
class PhotonAddedSpec:
    r: float
    m: int
    truncation: int = 60

    def __post_init__(self):
        if self.r < 0 or self.m < 0:
            raise ValueError("squeezing and photon number must be nonnegative")
        if self.truncation < 2 * self.m + 20:
            raise ValueError("truncation must be >= 2m + 20")


def legendre_P(m: int, x: float) -> float:
    """Legendre polynomial by the stable three-term recurrence."""
    if m < 0:
        raise ValueError("order must be >= 0")
    p_prev, p = 1.0, x
    if m == 0:
        return p_prev
    for k in range(1, m):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    return p


def photon_added_g2_analytic(r: float, m: int) -> float:
    """g2(0) of the m-photon-added squeezed vacuum, via Legendre polynomials."""
    if m == 0 and r == 0:
        raise VacuumStateError("squeezed vacuum with r=0 is vacuum, g2 undefined")
    xi = math.cosh(r)
    pm = legendre_P(m, xi)
    pm1 = legendre_P(m + 1, xi)
    pm2 = legendre_P(m + 2, xi)
    num = (m + 1) * xi * ((m + 2) * xi * pm2 / pm - 4 * pm1 / pm) + 2
    den = ((m + 1) * xi * pm1 / pm - 1) ** 2
    return num / den


def photon_added_g2_m1(r: float) -> float:
    """Closed form for the single-photon-added squeezed vacuum."""
    th = math.tanh(r)
    return 3 * (3 + 2 * th ** 2) / ((1 / th - th) * (3 * math.cosh(r) ** 2 - 2)) ** 2


def squeeze_operator(truncation: int, r: float, label: str = "a") -> Operator:
    hs = space(boson(label, truncation))
    a = mode_operator(hs, label, "annihilate")
    return matrix_exp((r / 2) * (a @ a) - (r / 2) * (a.dag() @ a.dag()))


def build_photon_added(spec: PhotonAddedSpec, leak_tol: float = 1e-8) -> PreparedSource:
    hs = space(boson("a", spec.truncation))
    a = mode_operator(hs, "a", "annihilate")
    op = squeeze_operator(spec.truncation, spec.r)
    for _ in range(spec.m):
        op = a.dag() @ op
    rho = apply_and_normalize(vacuum_state(hs), op)
    tail = np.real(np.diag(rho.matrix)[-2:]).sum()
    if tail > leak_tol:
        raise TruncationLeakError(
            f"photon-added state tail {tail:.3e} exceeds {leak_tol:g} "
            f"at truncation {spec.truncation}"
        )
    return PreparedSource(
        rho=rho,
        monitored_op=a,
        monitored_labels=("a",),
        label_g2=photon_added_g2_analytic(spec.r, spec.m),
        label_occupation=occupation(rho, a),
        source_id=PHOTON_ADDED,
        params={"r": spec.r, "m": float(spec.m)},
    )


# ---------------------------------------------------------------------------
# Coh-2LS-Mix: driven cavity and driven two-level emitter mixed on a BS

@dataclass(frozen=True)
class CoherentTlsMixSpec:
    delta_a: float = 0.0
    omega_a: float = 0.25
    gamma_a: float = 1.0
    delta_sigma: float = 0.0
    omega_sigma: float = 0.4
    gamma_sigma: float = 1.0
    bs_theta: float = math.pi / 4   # R = sin(theta), T = cos(theta)
    truncation: int = 16

    def __post_init__(self):
        if self.gamma_a <= 0 or self.gamma_sigma <= 0:
            raise ValueError("decay rates must be positive")

    @property
    def transmittance(self) -> float:
        return math.cos(self.bs_theta)

    @property
    def reflectance(self) -> float:
        return math.sin(self.bs_theta)


def build_coherent_tls_mix(spec: CoherentTlsMixSpec, leak_tol: float = 1e-8) -> PreparedSource:
    # coherent arm
    hs_a = space(boson("a", spec.truncation))
    a_loc = mode_operator(hs_a, "a", "annihilate")
    h_a = spec.delta_a * (a_loc.dag() @ a_loc) + spec.omega_a * (a_loc + a_loc.dag())
    rho_a = steady_state(LindbladModel(hs_a, hamiltonian=h_a,
                                       dissipators=((a_loc, spec.gamma_a),)))
    _check_top_level_population(rho_a, ("a",), leak_tol)
    # two-level arm
    hs_s = space(two_level("sigma"))
    s_loc = mode_operator(hs_s, "sigma", "lower")
    h_s = spec.delta_sigma * (s_loc.dag() @ s_loc) + spec.omega_sigma * (s_loc + s_loc.dag())
    rho_s = steady_state(LindbladModel(hs_s, hamiltonian=h_s,
                                       dissipators=((s_loc, spec.gamma_sigma),)))
    rho = tensor(rho_a, rho_s)
    a = mode_operator(rho.space, "a", "annihilate")
    sig = mode_operator(rho.space, "sigma", "lower")
    o2 = spec.transmittance * sig + 1j * spec.reflectance * a
    h_joint = (spec.delta_a * (a.dag() @ a) + spec.omega_a * (a + a.dag())
               + spec.delta_sigma * (sig.dag() @ sig)
               + spec.omega_sigma * (sig + sig.dag()))
    return PreparedSource(
        rho=rho,
        monitored_op=o2,
        monitored_labels=("a", "sigma"),
        label_g2=second_order_coherence(rho, o2),
        label_occupation=occupation(rho, o2),
        source_id=COHERENT_TLS_MIX,
        params={"delta_a": spec.delta_a, "bs_theta": spec.bs_theta},
        hamiltonian=h_joint,
        dissipators=((a, spec.gamma_a), (sig, spec.gamma_sigma)),
    )


def output_modes(spec: CoherentTlsMixSpec, rho: DensityMatrix) -> tuple[Operator, Operator]:
    """Beam-splitter outputs (o1, o2) on the given product-state space."""
    a = mode_operator(rho.space, "a", "annihilate")
    sig = mode_operator(rho.space, "sigma", "lower")
    o1 = 1j * spec.reflectance * sig + spec.transmittance * a
    o2 = spec.transmittance * sig + 1j * spec.reflectance * a
    return o1, o2


# ---------------------------------------------------------------------------
# sweeps

_BUILDERS = {
    CV_MIXTURE: (CvMixtureSpec, build_cv_mixture),
    EMITTER_CAVITY: (EmitterCavitySpec, build_emitter_cavity),
    PHOTON_ADDED: (PhotonAddedSpec, build_photon_added),
    COHERENT_TLS_MIX: (CoherentTlsMixSpec, build_coherent_tls_mix),
}


@dataclass(frozen=True)
class SweepSpec:
    """Parameter sweep: uniform random draws or a linear grid.

    params maps a spec field either to a (lo, hi) range, or to a list of
    explicit values (grid mode only, cycled jointly with the grid axis when
    lengths match n_samples).
    """

    mode: str                    # "random" | "grid"
    params: dict
    n_samples: int

    def __post_init__(self):
        if self.mode not in ("random", "grid"):
            raise ValueError(f"unknown sweep mode {self.mode!r}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.params:
            raise ValueError("sweep needs at least one parameter")


@dataclass(frozen=True)
class SweepResult:
    sources: tuple[PreparedSource, ...]
    skipped: tuple[tuple[int, str], ...]


def _sweep_values(sweep: SweepSpec, family: str, seed: int) -> list[dict]:
    if sweep.mode == "random":
        rows = []
        for i in range(sweep.n_samples):
            rng = derive_rng(seed, f"sweep:{family}", i)
            rows.append({name: float(rng.uniform(lo, hi))
                         for name, (lo, hi) in sorted(sweep.params.items())})
        return rows
    axes = {}
    for name, val in sweep.params.items():
        if isinstance(val, (tuple, list)) and len(val) == 2 and not isinstance(val[0], (list, tuple)):
            axes[name] = np.linspace(val[0], val[1], sweep.n_samples)
        else:
            vals = np.asarray(val, dtype=float)
            if vals.size != sweep.n_samples:
                raise ValueError(f"grid values for {name!r} must have length n_samples")
            axes[name] = vals
    return [{name: float(axes[name][i]) for name in sorted(axes)}
            for i in range(sweep.n_samples)]


def sweep_source(family: str, base_spec, sweep: SweepSpec, seed: int) -> SweepResult:
    """Deterministic list of PreparedSource over the sweep; failures skipped."""
    if family not in _BUILDERS:
        raise ValueError(f"unknown source family {family!r}")
    spec_cls, builder = _BUILDERS[family]
    if base_spec is None:
        base_spec = spec_cls()
    sources, skipped = [], []
    for i, values in enumerate(_sweep_values(sweep, family, seed)):
        spec = dataclasses.replace(base_spec, **values)
        try:
            sources.append(builder(spec))
        except G2qrcError as exc:
            skipped.append((i, str(exc)))
    return SweepResult(tuple(sources), tuple(skipped))

"""End-to-end acceptance suite: label oracles, physics limits, and the full
estimation experiments (dataset generation + training) for all four source
families.

Each test covers one acceptance criterion and appears as one PASSED/FAILED
line under ``pytest -v``.  The experiment tests share session-scoped datasets
built from one default reservoir; on a single CPU core the whole module takes
roughly 30-40 minutes.
"""

import json
import math
import time

import numpy as np
import pytest

from g2qrc.dynamics import IntegratorConfig, LindbladModel, evolve
from g2qrc.experiments import (
    BASELINE,
    WITH_RESERVOIR,
    SplitSpec,
    cross_evaluate,
    default_sweep,
    generalization_sweep,
    generate_dataset_multi,
    report_to_dict,
    train_and_eval,
)
from g2qrc.forest import ForestConfig, fit, mse_metric, predict
from g2qrc.hilbert import (
    DensityMatrix,
    Operator,
    mode_operator,
    occupation,
    second_order_coherence,
    space,
    two_level,
)
from g2qrc.reservoir import ReservoirConfig, prepump, run_cascade, sample_reservoir
from g2qrc.seeding import derive_rng
from g2qrc.sources import (
    COHERENT_TLS_MIX,
    CV_MIXTURE,
    EMITTER_CAVITY,
    PHOTON_ADDED,
    CoherentTlsMixSpec,
    CvMixtureSpec,
    PhotonAddedSpec,
    build_coherent_tls_mix,
    build_cv_mixture,
    build_photon_added,
    cv_mixture_g2_analytic,
    output_modes,
    photon_added_g2_analytic,
    photon_added_g2_m1,
)

RESERVOIR_SEED = 202
DATASET_SEED = 909
SPLIT_SEED = 77

FOREST = ForestConfig()
SPLIT_75_25 = SplitSpec(test_fraction=0.25, seed=SPLIT_SEED)
SPLIT_80_20 = SplitSpec(test_fraction=0.20, seed=SPLIT_SEED)


def _dataset(family):
    base, sweep, _ = default_sweep(family)
    return generate_dataset_multi(family, [(base, sweep)],
                                  ReservoirConfig(seed=RESERVOIR_SEED),
                                  seed=DATASET_SEED)


@pytest.fixture(scope="session")
def mix_dataset():
    return _dataset(CV_MIXTURE)


@pytest.fixture(scope="session")
def emitter_dataset():
    return _dataset(EMITTER_CAVITY)


@pytest.fixture(scope="session")
def ph1_dataset():
    return _dataset(PHOTON_ADDED)


@pytest.fixture(scope="session")
def phmix_dataset():
    from g2qrc.experiments import photon_added_mixed_parts

    return generate_dataset_multi(PHOTON_ADDED, photon_added_mixed_parts(),
                                  ReservoirConfig(seed=RESERVOIR_SEED),
                                  seed=DATASET_SEED)


@pytest.fixture(scope="session")
def coh_dataset():
    return _dataset(COHERENT_TLS_MIX)


# ---------------------------------------------------------------------------
# 1. mixture g2 closed form vs numeric moments

def test_01_mixture_g2_closed_form_matches_numeric_on_grid():
    t0 = time.monotonic()
    worst = 0.0
    for theta in np.linspace(0.05, 0.5 * math.pi - 0.05, 20):
        for phi in np.linspace(0.05, 0.5 * math.pi - 0.05, 20):
            spec = CvMixtureSpec(theta=float(theta), phi=float(phi),
                                 nbar=0.5, alpha=1.0, fock_n=1, truncation=30)
            src = build_cv_mixture(spec)
            numeric = second_order_coherence(src.rho, src.monitored_op)
            worst = max(worst, abs(cv_mixture_g2_analytic(spec) - numeric))
    elapsed = time.monotonic() - t0
    assert worst < 1e-8, f"worst closed-form/numeric gap {worst:.3e}"
    assert elapsed < 10.0, f"grid took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 2. photon-added g2 Legendre formula vs constructed states

_R_OK = (0.2, 0.5, 0.8)
_R_DEEP = 1.2
_MS = (0, 1, 2, 3)


def test_02_photon_added_g2_formula_matches_states():
    t0 = time.monotonic()
    for r in _R_OK:
        for m in _MS:
            # r=0.8, m=3 holds ~2e-8 of tail mass at 60 levels — harmless at
            # the 1e-6 comparison tolerance but above the builder's strict
            # default tail bound, so allow tails up to the comparison scale
            src = build_photon_added(PhotonAddedSpec(r=r, m=m, truncation=60),
                                     leak_tol=1e-6)
            numeric = second_order_coherence(src.rho, src.monitored_op)
            gap = abs(photon_added_g2_analytic(r, m) - numeric)
            assert gap < 1e-6, f"r={r} m={m}: formula/state gap {gap:.3e}"
    for r in (*_R_OK, _R_DEEP):
        closed = 3.0 + 1.0 / math.sinh(r) ** 2
        assert abs(photon_added_g2_analytic(r, 0) - closed) < 1e-10
        assert abs(photon_added_g2_m1(r) - photon_added_g2_analytic(r, 1)) < 1e-10
    elapsed = time.monotonic() - t0
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


@pytest.mark.xfail(strict=True, reason="60 Fock levels cannot hold r=1.2 "
                   "squeezing: the occupied tail beyond the truncation is "
                   "~1e-4, so the constructed state's g2 deviates from the "
                   "closed form by far more than 1e-6 (see the convergence "
                   "test below, which passes at 200 levels)")
def test_02_photon_added_g2_formula_at_deep_squeezing_truncation_60():
    for m in _MS:
        # the builder's own tail check also trips at this truncation; relax it
        # to obtain the numeric value under comparison
        src = build_photon_added(PhotonAddedSpec(r=_R_DEEP, m=m, truncation=60),
                                 leak_tol=1.0)
        numeric = second_order_coherence(src.rho, src.monitored_op)
        gap = abs(photon_added_g2_analytic(_R_DEEP, m) - numeric)
        print(f"r={_R_DEEP} m={m} truncation=60: gap {gap:.3e} "
              f"({'PASS' if gap < 1e-6 else 'FAIL'})")
        assert gap < 1e-6


def test_02_photon_added_deep_squeezing_converges_at_truncation_200():
    for m in _MS:
        src = build_photon_added(PhotonAddedSpec(r=_R_DEEP, m=m, truncation=200))
        numeric = second_order_coherence(src.rho, src.monitored_op)
        assert abs(photon_added_g2_analytic(_R_DEEP, m) - numeric) < 1e-6


# ---------------------------------------------------------------------------
# 3. integrator conservation laws

def test_03_cascade_conserves_trace_and_matches_decay_curve():
    instance = sample_reservoir(ReservoirConfig(seed=RESERVOIR_SEED))
    pumped = prepump(instance)
    # evolve() validates |Tr rho - 1| < 1e-7 and max|rho - rho^dag| < 1e-9 at
    # every sample time and raises on violation, so completing these cascades
    # certifies conservation for a static and a driven source alike
    for src in (build_cv_mixture(CvMixtureSpec(theta=0.7, phi=0.9)),
                build_coherent_tls_mix(CoherentTlsMixSpec(delta_a=-0.5))):
        fv = run_cascade(instance, src, prepumped=pumped)
        assert np.all(np.isfinite(fv.values))
    hs = space(two_level("s"))
    s = mode_operator(hs, "s", "lower")
    gamma = 0.8
    model = LindbladModel(space=hs, dissipators=((s, gamma),))
    excited = np.zeros((2, 2), dtype=complex)
    excited[1, 1] = 1.0
    rho0 = DensityMatrix(hs, excited)
    times = np.linspace(0.0, 6.0, 25)
    eye = Operator(hs, np.eye(2, dtype=complex))
    res = evolve(model, rho0, times, [s.dag() @ s, eye])
    decay_err = np.max(np.abs(res.observable_traces[:, 0] - np.exp(-gamma * times)))
    trace_err = np.max(np.abs(res.observable_traces[:, 1] - 1.0))
    herm_err = np.max(np.abs(res.final_state.matrix
                             - res.final_state.matrix.conj().T))
    assert decay_err < 1e-7, f"decay curve error {decay_err:.3e}"
    assert trace_err < 1e-7, f"trace drift {trace_err:.3e}"
    assert herm_err < 1e-9, f"hermiticity defect {herm_err:.3e}"


# ---------------------------------------------------------------------------
# 4. beam-splitter limits

def test_04_beam_splitter_limits_and_energy_conservation():
    # R=0: output 2 is the two-level arm
    src = build_coherent_tls_mix(CoherentTlsMixSpec(bs_theta=0.0))
    sig = mode_operator(src.rho.space, "sigma", "lower")
    assert abs(src.label_g2 - second_order_coherence(src.rho, sig)) < 1e-6
    # T=0: output 2 is the coherent arm, g2 = 1
    src = build_coherent_tls_mix(CoherentTlsMixSpec(bs_theta=0.5 * math.pi))
    assert abs(src.label_g2 - 1.0) < 1e-6
    # generic angle: photon number is conserved across the splitter
    spec = CoherentTlsMixSpec(bs_theta=0.3 * math.pi, delta_a=0.4)
    src = build_coherent_tls_mix(spec)
    o1, o2 = output_modes(spec, src.rho)
    a = mode_operator(src.rho.space, "a", "annihilate")
    sig = mode_operator(src.rho.space, "sigma", "lower")
    n_out = occupation(src.rho, o1) + occupation(src.rho, o2)
    n_in = occupation(src.rho, a) + occupation(src.rho, sig)
    assert abs(n_out - n_in) < 1e-10


# ---------------------------------------------------------------------------
# 5-8. estimation experiments, family by family

def _both_modes(dataset, split):
    res = train_and_eval(dataset, WITH_RESERVOIR, FOREST, split)
    base = train_and_eval(dataset, BASELINE, FOREST, split)
    return res, base


def test_05_mixture_estimation_beats_baseline(mix_dataset):
    res, base = _both_modes(mix_dataset, SPLIT_75_25)
    assert len(mix_dataset) == 1024
    assert res.mse <= 0.02, f"reservoir metric {res.mse:.4g}"
    assert base.mse >= 5.0 * res.mse, (
        f"baseline {base.mse:.4g} not 5x reservoir {res.mse:.4g}")


def test_06_emitter_detuning_estimation(emitter_dataset):
    assert len(emitter_dataset) == 2000
    res, base = _both_modes(emitter_dataset, SPLIT_80_20)
    assert res.mse <= 0.1, f"reservoir metric {res.mse:.4g}"
    assert base.mse >= 3.0 * res.mse, (
        f"baseline {base.mse:.4g} not 3x reservoir {res.mse:.4g}")
    # the g2(detuning) curve crosses 1 and shows super-bunching (> 2) at
    # negative detuning
    labels = {s.params["delta_a"]: s.label for s in emitter_dataset.samples}
    deltas = np.array(sorted(labels))
    curve = np.array([labels[d] for d in deltas])
    assert curve.min() < 1.0 < curve.max()
    assert curve[deltas < 0].max() > 2.0


def test_07_photon_added_baseline_and_mixed_orders(ph1_dataset, phmix_dataset):
    _, base = _both_modes(ph1_dataset, SPLIT_80_20)
    assert base.mse <= 1e-4, f"single-addition baseline metric {base.mse:.4g}"
    res_mix, base_mix = _both_modes(phmix_dataset, SPLIT_80_20)
    assert res_mix.mse <= 0.1 * base_mix.mse, (
        f"mixed-order reservoir {res_mix.mse:.4g} not 10x better than "
        f"baseline {base_mix.mse:.4g}")


def test_08_interferometer_mix_estimation(coh_dataset):
    res, base = _both_modes(coh_dataset, SPLIT_80_20)
    assert res.mse <= 1e-3, f"reservoir metric {res.mse:.4g}"
    assert base.mse >= 10.0 * res.mse, (
        f"baseline {base.mse:.4g} not 10x reservoir {res.mse:.4g}")


# ---------------------------------------------------------------------------
# 9. cross-family evaluation structure

def test_09_cross_family_matrix_diagonal_dominance(
        mix_dataset, emitter_dataset, ph1_dataset, coh_dataset):
    mat = cross_evaluate({CV_MIXTURE: mix_dataset,
                          EMITTER_CAVITY: emitter_dataset,
                          PHOTON_ADDED: ph1_dataset,
                          COHERENT_TLS_MIX: coh_dataset},
                         FOREST, SPLIT_80_20)
    n = len(mat.source_ids)
    for i, row_id in enumerate(mat.source_ids):
        diag = mat.entries[i][i]
        for j in range(n):
            if j != i:
                assert diag < mat.entries[i][j], (
                    f"row {row_id}: diagonal {diag:.4g} not below "
                    f"column {mat.source_ids[j]} ({mat.entries[i][j]:.4g})")
    i_em = mat.source_ids.index(EMITTER_CAVITY)
    foreign = [mat.entries[i_em][j] for j in range(n) if j != i_em]
    assert min(foreign) > 0.5, (
        f"emitter-family rows under foreign models: {foreign}")


# ---------------------------------------------------------------------------
# 10. generalization across cavity detuning

def test_10_generalization_across_cavity_detuning():
    report = generalization_sweep(train_values=(1.0, 1.6, 1.8), test_value=1.4,
                                  reservoir_config=ReservoirConfig(seed=RESERVOIR_SEED),
                                  forest_config=FOREST, seed=DATASET_SEED)
    assert report.mse <= 0.1, f"held-out detuning metric {report.mse:.4g}"


# ---------------------------------------------------------------------------
# 11. ensemble sanity

def test_11_forest_sanity_metric_and_determinism(mix_dataset):
    # sin regression, hold-out R^2
    rng = derive_rng(11, "acceptance:sin")
    x = np.sort(rng.uniform(0.0, 2.0 * math.pi, 600)).reshape(-1, 1)
    y = np.sin(x[:, 0])
    perm = rng.permutation(600)
    tr, te = perm[150:], perm[:150]
    model = fit(x[tr], y[tr], ForestConfig(n_trees=200, seed=3))
    pred = predict(model, x[te])
    r2 = 1.0 - np.sum((pred - y[te]) ** 2) / np.sum((y[te] - y[te].mean()) ** 2)
    assert r2 >= 0.95, f"sin hold-out R^2 {r2:.4f}"
    # normalized-error metric hand check
    val = mse_metric(np.array([1.1, 1.9]), np.array([1.0, 2.0]))
    assert abs(val - 0.02 / 19.62) < 1e-12
    # bitwise-identical reports across two runs
    rep1 = train_and_eval(mix_dataset, WITH_RESERVOIR,
                          ForestConfig(n_trees=25, seed=9), SPLIT_75_25)
    rep2 = train_and_eval(mix_dataset, WITH_RESERVOIR,
                          ForestConfig(n_trees=25, seed=9), SPLIT_75_25)
    assert json.dumps(report_to_dict(rep1)) == json.dumps(report_to_dict(rep2))

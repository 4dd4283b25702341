"""Master-equation integration, superoperator compilation, steady states."""

import numpy as np
import pytest

from g2qrc.dynamics import (
    CascadeTerm,
    IntegratorConfig,
    LindbladModel,
    PulsedDissipator,
    build_superoperator,
    evolve,
    lindblad_rhs,
    steady_state,
)
from g2qrc.errors import SteadyStateError
from g2qrc.hilbert import (
    DensityMatrix,
    boson,
    coherent_state,
    mode_operator,
    occupation,
    second_order_coherence,
    space,
    tensor,
    thermal_state,
    two_level,
    vacuum_state,
)


def _excited_tls():
    hs = space(two_level("s"))
    mat = np.zeros((2, 2), dtype=complex)
    mat[1, 1] = 1.0
    return DensityMatrix(hs, mat)


def _random_state(hs, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(hs.dim, hs.dim)) + 1j * rng.normal(size=(hs.dim, hs.dim))
    m = m @ m.conj().T
    return DensityMatrix(hs, m / m.trace())


def _cascade_model():
    hs = space(two_level("s"), two_level("b"))
    s = mode_operator(hs, "s", "lower")
    b = mode_operator(hs, "b", "lower")
    h = (b.dag() @ b) * 0.7
    return LindbladModel(
        space=hs,
        hamiltonian=h,
        dissipators=((b, 1.0),),
        cascade_terms=(CascadeTerm(source_op=s, target_op=b, weight=0.4,
                                   window=(0.0, 2.0)),),
        pulsed_dissipators=(PulsedDissipator(s, 0.5, (0.0, 2.0)),),
    )


def test_exponential_decay_curve():
    gamma = 1.0
    hs = space(two_level("s"))
    s = mode_operator(hs, "s", "lower")
    model = LindbladModel(space=hs, dissipators=((s, gamma),))
    times = np.linspace(0.2, 6.0, 15)
    res = evolve(model, _excited_tls(), times, [s.dag() @ s])
    assert np.max(np.abs(res.observable_traces[:, 0] - np.exp(-gamma * times))) < 1e-7


def test_boson_decay_preserves_thermal_shape():
    """A decaying thermal state stays thermal with nbar(t) = nbar e^{-gamma t}."""
    gamma, nbar = 0.8, 0.6
    rho0 = thermal_state(nbar, 40)
    a = mode_operator(rho0.space, "a", "annihilate")
    model = LindbladModel(space=rho0.space, dissipators=((a, gamma),))
    times = np.array([0.5, 1.0, 2.0])
    res = evolve(model, rho0, times, [a.dag() @ a])
    assert np.allclose(res.observable_traces[:, 0],
                       nbar * np.exp(-gamma * times), atol=1e-7)


def test_superoperator_matches_dense_rhs():
    model = _cascade_model()
    rho = _random_state(model.space, 3)
    for t in (0.5, 1.9, 2.5):
        dense = lindblad_rhs(model, rho, t)
        via_super = (build_superoperator(model, t) @ rho.matrix.ravel()).reshape(
            model.space.dim, model.space.dim)
        assert np.allclose(dense, via_super, atol=1e-12)


def test_windowed_terms_vanish_outside_window():
    model = _cascade_model()
    plain = LindbladModel(space=model.space, hamiltonian=model.hamiltonian,
                          dissipators=model.dissipators)
    inside = build_superoperator(model, 1.0)
    outside = build_superoperator(model, 2.5)
    bare = build_superoperator(plain, 2.5)
    assert np.abs((outside - bare).toarray()).max() == 0.0
    assert np.abs((inside - bare).toarray()).max() > 0.0


def test_cascade_generator_is_trace_free():
    model = _cascade_model()
    L = build_superoperator(model, t=1.0).toarray()
    d = model.space.dim
    trace_row = np.zeros(d * d)
    trace_row[:: d + 1] = 1.0
    assert np.abs(trace_row @ L).max() < 1e-12


def test_evolution_through_cascade_conserves_trace_and_hermiticity():
    model = _cascade_model()
    rho0 = tensor(_excited_tls(), vacuum_state(space(two_level("b"))))
    times = np.linspace(0.3, 4.0, 8)
    b = mode_operator(model.space, "b", "lower")
    res = evolve(model, rho0, times, [b.dag() @ b])
    final = res.final_state
    assert abs(final.matrix.trace().real - 1.0) < 1e-7
    assert np.abs(final.matrix - final.matrix.conj().T).max() < 1e-9
    assert np.all(np.isfinite(res.observable_traces))


def test_cascade_excites_target_inside_window_only():
    model = _cascade_model()
    rho0 = tensor(_excited_tls(), vacuum_state(space(two_level("b"))))
    b = mode_operator(model.space, "b", "lower")
    res = evolve(model, rho0, np.linspace(0.2, 6.0, 30), [b.dag() @ b])
    occ = res.observable_traces[:, 0]
    assert occ.max() > 1e-3          # photons transferred during the window
    assert occ[-1] < occ.max() / 10  # and decay away afterwards


def test_fixed_step_convergence_order():
    """With tolerance slack, halving the step cap shrinks error by >= 8x."""
    gamma = 1.0
    hs = space(two_level("s"))
    s = mode_operator(hs, "s", "lower")
    h_op = (s + s.dag()) * 0.9
    model = LindbladModel(space=hs, hamiltonian=h_op, dissipators=((s, gamma),))
    L = build_superoperator(model, 0.0).toarray()
    import scipy.linalg
    t_end = 2.0
    exact = (scipy.linalg.expm(L * t_end)
             @ _excited_tls().matrix.ravel()).reshape(2, 2)

    def err(h):
        cfg = IntegratorConfig(rel_tol=1.0, abs_tol=1.0, initial_step=h,
                               max_step=h)
        res = evolve(model, _excited_tls(), [t_end],
                     [s.dag() @ s], cfg)
        return abs(res.observable_traces[0, 0] - exact[1, 1].real)

    e1, e2 = err(0.2), err(0.1)
    assert e1 / e2 >= 8.0


def test_steady_state_driven_two_level():
    gamma, omega, delta = 1.0, 0.25, 0.3
    hs = space(two_level("s"))
    s = mode_operator(hs, "s", "lower")
    h = s.dag() @ s * delta + (s + s.dag()) * omega
    rho = steady_state(LindbladModel(space=hs, hamiltonian=h,
                                     dissipators=((s, gamma),)))
    analytic = omega**2 / (gamma**2 / 4 + delta**2 + 2 * omega**2)
    assert rho.matrix[1, 1].real == pytest.approx(analytic, abs=1e-10)


def test_steady_state_driven_cavity_sparse_path():
    """Driven damped cavity (dim > 32, sparse solver) relaxes to a coherent state."""
    gamma, omega, delta, d = 1.0, 0.3, 0.4, 36
    hs = space(boson("a", d))
    a = mode_operator(hs, "a", "annihilate")
    h = a.dag() @ a * delta + (a + a.dag()) * omega
    rho = steady_state(LindbladModel(space=hs, hamiltonian=h,
                                     dissipators=((a, gamma),)))
    expected_n = omega**2 / (delta**2 + gamma**2 / 4)
    assert occupation(rho, a) == pytest.approx(expected_n, abs=1e-8)
    assert second_order_coherence(rho, a) == pytest.approx(1.0, abs=1e-7)


def test_steady_state_degenerate_rejected():
    """No dissipation: every diagonal state is stationary, solver must refuse."""
    hs = space(two_level("s"))
    s = mode_operator(hs, "s", "lower")
    model = LindbladModel(space=hs, hamiltonian=s.dag() @ s * 1.0)
    with pytest.raises(SteadyStateError):
        steady_state(model)


def test_steady_state_residual_is_small():
    gamma = 1.0
    hs = space(two_level("s"), two_level("b"))
    s = mode_operator(hs, "s", "lower")
    b = mode_operator(hs, "b", "lower")
    h = (s.dag() @ b + b.dag() @ s) * 0.5
    model = LindbladModel(space=hs, hamiltonian=h,
                          dissipators=((s, gamma), (b.dag(), 0.2), (b, 1.0)))
    rho = steady_state(model)
    resid = lindblad_rhs(model, rho, 0.0)
    assert np.abs(resid).max() < 1e-8


def test_evolve_rejects_unsorted_sample_times():
    hs = space(two_level("s"))
    s = mode_operator(hs, "s", "lower")
    model = LindbladModel(space=hs, dissipators=((s, 1.0),))
    with pytest.raises(ValueError):
        evolve(model, _excited_tls(), [2.0, 1.0], [s.dag() @ s])


def test_model_validation_rejects_negative_rate():
    hs = space(two_level("s"))
    s = mode_operator(hs, "s", "lower")
    with pytest.raises(ValueError):
        LindbladModel(space=hs, dissipators=((s, -0.1),))
    with pytest.raises(ValueError):
        LindbladModel(space=hs, pulsed_dissipators=(PulsedDissipator(s, 0.1, (2.0, 1.0)),))


def test_coherent_state_is_decay_eigenstate_up_to_amplitude():
    """Pure decay keeps a coherent state coherent: g2 stays 1."""
    rho0 = coherent_state(0.8, 30)
    a = mode_operator(rho0.space, "a", "annihilate")
    model = LindbladModel(space=rho0.space, dissipators=((a, 1.0),))
    res = evolve(model, rho0, [1.0], [a.dag() @ a])
    assert second_order_coherence(res.final_state, a) == pytest.approx(1.0, abs=1e-7)
    assert res.observable_traces[0, 0] == pytest.approx(0.64 * np.exp(-1.0), abs=1e-7)

import math

import numpy as np
import pytest

from mechesc.controller import (
    ClosedLoop, ClosedLoopState, ControllerGains, ControllerState, GainError, OpenLoop, closed_loop_rhs,
    control_input, controller_rhs, dither_period, from_tilde, to_tilde,
)
from mechesc.geometry import SE3Group
from mechesc.plant import KIRCHHOFF_J, KIRCHHOFF_M, constant_objective, flat_plant, kirchhoff_plant
from mechesc.signals import default_shaping, make_harmonic_bank

SH = default_shaping()
FIG1 = ControllerGains(1.0, 1.0, 1.0, 0.5, 1.0, 30.0)


def test_input_example_at_phase_zero():
    bank = make_harmonic_bank(2, "fig1")
    u = control_input(FIG1, SH, bank, np.zeros(2), 0.0, 0.3, ControllerState(np.zeros(2), 0.3))
    assert u[0] == pytest.approx(0.5 * math.sqrt(math.log(2.0)) * math.sqrt(2.0), abs=1e-12)
    assert u[0] == pytest.approx(0.588705, abs=1e-6)


def test_input_vanishes_when_compensator_tracks_dither():
    t = (math.pi / 2) / FIG1.omega  # cos vanishes, so u(omega t) = 0
    bank1 = make_harmonic_bank(1, "canonical")
    y, eta = 0.8, 0.1
    w = FIG1.kappa * SH.alpha(y - eta) * bank1.U(FIG1.omega * t)
    u = control_input(FIG1, SH, bank1, np.zeros(1), t, y, ControllerState(w, eta))
    assert np.allclose(u, 0.0, atol=1e-12)


def test_input_mu_term_alone():
    bank = make_harmonic_bank(1, "canonical")
    mu = np.array([0.7])
    st = ControllerState(np.zeros(1), 0.0)
    y = 0.4
    full = control_input(FIG1, SH, bank, mu, 0.0, y, st)
    no_mu = control_input(FIG1, SH, bank, np.zeros(1), 0.0, y, st)
    assert np.allclose(full - no_mu, FIG1.lam ** 2 * SH.alpha_sq(y) * mu, atol=1e-14)


def test_filter_examples():
    bank = make_harmonic_bank(1, "canonical")
    t = (math.pi / 2) / FIG1.omega
    w = FIG1.kappa * SH.alpha(0.0) * bank.U(FIG1.omega * t)
    wdot, etadot = controller_rhs(FIG1, SH, bank, t, 0.25, ControllerState(w, 0.25))
    assert np.allclose(wdot, 0.0, atol=1e-12) and etadot == pytest.approx(0.0)
    _, etadot = controller_rhs(FIG1, SH, bank, 1.3, 2.5, ControllerState(np.zeros(1), 0.0))
    assert etadot == pytest.approx(FIG1.h * 2.5)


@pytest.mark.parametrize("kw", [dict(a=1, lam=1, b=2, kappa=0.5), dict(a=0, lam=1, b=1, kappa=0.1),
                                dict(a=1, lam=1, b=1, kappa=0.5, omega=-1.0)])
def test_gain_validation(kw):
    with pytest.raises(GainError):
        ControllerGains(**kw)


def test_gain_margin_message():
    with pytest.raises(GainError, match=r"a\*lambda - b\*kappa > 0"):
        ControllerGains(1.0, 1.0, 1.0, 1.0)


def test_tilde_round_trip_and_identity_at_zero_dither():
    plant = flat_plant(3)
    bank = make_harmonic_bank(3, "canonical")
    rng = np.random.default_rng(0)
    g = rng.standard_normal(3)
    z = rng.standard_normal(7)
    assert np.allclose(to_tilde(plant, FIG1, SH, bank, 0.0, g, z), z, atol=1e-15)
    t = 0.37
    zt = to_tilde(plant, FIG1, SH, bank, t, g, z)
    assert not np.allclose(zt, z)
    assert np.allclose(from_tilde(plant, FIG1, SH, bank, t, g, zt), z, atol=1e-14)
    assert zt[-1] == z[-1]


def test_tilde_formula():
    plant = flat_plant(2)
    bank = make_harmonic_bank(2, "fig1")
    g = np.array([0.3, -0.4])
    z = np.array([0.1, 0.2, -0.3, 0.4, 0.05])
    t = 0.11
    al = SH.alpha(plant.output(g) - z[-1])
    U = bank.U(FIG1.omega * t)
    zt = to_tilde(plant, FIG1, SH, bank, t, g, z)
    assert np.allclose(zt[:2], z[:2] - FIG1.lam * al * U)
    assert np.allclose(zt[2:4], z[2:4] - FIG1.kappa * al * U)


def test_constant_objective_forcing_is_the_input():
    plant = flat_plant(2, objective=constant_objective(1.5, 2))
    bank = make_harmonic_bank(2, "canonical")
    loop = ClosedLoop(plant, FIG1, SH, bank)
    g, z = loop.initial_state(np.array([0.2, 0.1]), eta0=1.5)
    for t in (0.0, 0.05, 0.2):
        xi, dz = loop(t, g, z)
        u = control_input(FIG1, SH, bank, plant.mu, t, 1.5, ControllerState(z[2:4], z[4]))
        assert np.allclose(xi, 0.0)
        assert np.allclose(dz[:2], u, atol=1e-14)
        assert dz[-1] == 0.0


def test_closed_loop_rhs_wrapper_and_state_packing():
    plant = kirchhoff_plant(KIRCHHOFF_J, KIRCHHOFF_M)
    bank = make_harmonic_bank(6, "fig2")
    gains = ControllerGains(0.1, 0.2, 0.1, 0.1, 1.0, 5.0)
    rng = np.random.default_rng(1)
    g = SE3Group().exp(rng.standard_normal(6))
    st = ClosedLoopState(g, rng.standard_normal(6), rng.standard_normal(6), 0.4)
    g2, z2 = st.pack()
    back = ClosedLoopState.unpack(g2, z2, 6)
    assert np.array_equal(back.v, st.v) and np.array_equal(back.w, st.w) and back.eta == 0.4
    d = closed_loop_rhs(plant, gains, SH, bank, 0.3, st)
    xi, dz = ClosedLoop(plant, gains, SH, bank)(0.3, g2, z2)
    assert np.allclose(d.g, plant.model.tangent_lift(g, xi))
    assert np.allclose(np.concatenate([d.v, d.w, [d.eta]]), dz)


def test_bank_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        ClosedLoop(flat_plant(3), FIG1, SH, make_harmonic_bank(2, "fig1"))


def test_open_loop_keeps_controller_frozen():
    plant = kirchhoff_plant(KIRCHHOFF_J, KIRCHHOFF_M)
    z = np.concatenate([np.ones(6), 2 * np.ones(6), [3.0]])
    xi, dz = OpenLoop(plant)(0.0, SE3Group().identity, z)
    assert np.allclose(dz[6:], 0.0)
    assert np.allclose(dz[:6], -plant.drift(np.ones(6)))
    assert np.allclose(xi, plant.frame.E(np.ones(6)))


def test_dither_period():
    assert dither_period(FIG1, make_harmonic_bank(2, "fig1")) == pytest.approx(2 * math.pi / 30)

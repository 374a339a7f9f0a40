from dataclasses import replace

import numpy as np
import pytest

from mechesc.averaging import (
    AveragedFlow, AveragedState, approximation_error, averaged_rhs, compare_runs, symmetric_product_check,
    transformed_distance,
)
from mechesc.controller import ControllerGains
from mechesc.geometry import AlgebraFrame, ConnectionTable, EuclideanGroup, SE3Group
from mechesc.plant import KIRCHHOFF_J, KIRCHHOFF_M, PlantModel, constant_objective, double_integrator_plant, \
    flat_plant, kirchhoff_plant, plane_objective
from mechesc.signals import default_shaping, make_harmonic_bank
from mechesc.sim import integrate

SH = default_shaping()
FIG1 = ControllerGains(1.0, 1.0, 1.0, 0.5, 1.0, 30.0)


def test_equilibrium_is_fixed():
    plant = double_integrator_plant()
    d = averaged_rhs(plant, FIG1, SH, AveragedState(np.zeros(2), np.zeros(2), np.zeros(2), -1.0))
    assert np.allclose(d.g, 0) and np.allclose(d.v, 0) and np.allclose(d.w, 0) and d.eta == 0.0
    kp = kirchhoff_plant(KIRCHHOFF_J, KIRCHHOFF_M)
    d = averaged_rhs(kp, FIG1, SH, AveragedState(SE3Group().identity, np.zeros(6), np.zeros(6), 0.0))
    assert np.max(np.abs(np.concatenate([d.g, d.v, d.w, [d.eta]]))) < 1e-12


def test_gradient_force_example():
    plant = double_integrator_plant()
    g = np.array([1.0, 1.0])
    for lam in (1.0, 0.7):
        gains = ControllerGains(1.0, lam, 1.0, 0.5 * lam)
        d = averaged_rhs(plant, gains, SH, AveragedState(g, np.zeros(2), np.zeros(2), float(plant.output(g))))
        assert np.allclose(d.v, -lam ** 2 * np.array([1.0, 0.5]), atol=1e-14)
        assert np.allclose(d.w, -gains.kappa * lam * np.array([1.0, 0.5]), atol=1e-14)
        assert d.eta == 0.0


def test_compensator_decays_without_gradient():
    plant = flat_plant(2, objective=constant_objective(0.0, 2))
    w = np.array([0.4, -1.0])
    d = averaged_rhs(plant, FIG1, SH, AveragedState(np.zeros(2), np.zeros(2), w, 0.0))
    assert np.allclose(d.w, -FIG1.a * w)
    assert np.allclose(d.v, -FIG1.b * w)


def test_kirchhoff_averaged_includes_connection_drift():
    kp = kirchhoff_plant(KIRCHHOFF_J, KIRCHHOFF_M)
    v = np.random.default_rng(0).standard_normal(6)
    g = SE3Group().identity
    d = averaged_rhs(kp, FIG1, SH, AveragedState(g, v, np.zeros(6), 0.0))
    assert np.allclose(d.v, -kp.drift(v), atol=1e-14)


def test_symmetric_product_examples():
    di = double_integrator_plant()
    assert symmetric_product_check(di, SH, np.array([1.0, 1.0]), 0.0) <= 1e-5
    const = flat_plant(2, objective=constant_objective(0.3, 2))
    assert symmetric_product_check(const, SH, np.array([0.5, -0.5]), 1.0) <= 1e-12
    kp = kirchhoff_plant(KIRCHHOFF_J, KIRCHHOFF_M)
    assert symmetric_product_check(kp, SH, SE3Group().identity, 0.5) <= 1e-4


def test_symmetric_product_with_nonzero_mu():
    # the connection contribution must be balanced by the alpha^2 mu term
    c = np.zeros((2, 2, 2))
    c[0, 1, 1] = 0.8
    plant = PlantModel(EuclideanGroup(2), AlgebraFrame.standard(2), ConnectionTable(c), np.zeros((2, 2)),
                       plane_objective())
    assert np.allclose(plant.mu, [0.8, 0.0])
    assert symmetric_product_check(plant, SH, np.array([0.3, 0.7]), 0.1) <= 1e-6


def test_approximation_error_of_trajectory_with_itself_is_zero():
    plant = double_integrator_plant()
    bank = make_harmonic_bank(2, "fig1")
    z0 = np.array([0.0, 0.0, 0.0, 0.0, 0.5])
    avg = integrate(AveragedFlow(plant, FIG1, SH), plant.model, np.array([1.0, 1.0]), z0, 0.0, 1.0, 0.01)
    assert transformed_distance(plant, avg.g, avg.z, avg.g, avg.z).max() == 0.0
    other = integrate(AveragedFlow(plant, FIG1, SH), plant.model, np.array([1.0, 1.0]), z0, 0.0, 1.0, 0.02)
    with pytest.raises(ValueError):
        approximation_error(avg, other, plant, FIG1, SH, bank)


def test_error_shrinks_from_30_to_60():
    plant = double_integrator_plant()
    bank = make_harmonic_bank(2, "fig1")
    g0 = np.array([1.0, 1.0])
    z0 = np.array([0.0, 0.0, 0.0, 0.0, 0.5])
    errs = [compare_runs(plant, FIG1.with_omega(om), SH, bank, g0, z0, 0.0, 3.0)[2] for om in (30.0, 60.0)]
    assert 0 < errs[1] < errs[0]


def test_faulted_run_gives_infinite_error():
    plant = double_integrator_plant()
    bank = make_harmonic_bank(2, "fig1")
    z0 = np.array([0.0, 0.0, 0.0, 0.0, 0.5])
    good = integrate(AveragedFlow(plant, FIG1, SH), plant.model, np.array([1.0, 1.0]), z0, 0.0, 0.1, 0.01)
    bad = replace(good, faulted=np.array(True), fault_time=np.array(0.05))
    assert approximation_error(bad, good, plant, FIG1, SH, bank) == float("inf")

"""Tomography kernels: unbiasedness, bounds, lattice cache, determinism."""
import math

import numpy as np
import pytest

from timebin_cvqkd import channel as chan
from timebin_cvqkd import specfun, tomography as tomo
from timebin_cvqkd.errors import DomainError


def test_kernel_spec_validation():
    with pytest.raises(tomo.UnboundedKernelError):
        tomo.KernelSpec(n=0, d=0, eta_det=0.5)
    with pytest.raises(tomo.UnboundedKernelError):
        tomo.KernelSpec(n=0, d=0, eta_det=0.3)
    with pytest.raises(DomainError):
        tomo.KernelSpec(n=-1, d=0)


def test_kernel_d0_real_and_phase_independent():
    spec = tomo.KernelSpec(n=1, d=0, eta_det=0.9)
    qs = np.array([-3.0, -0.4, 0.0, 1.7, 5.5])
    a = tomo.kernel_value(spec, qs, 0.13)
    b = tomo.kernel_value(spec, qs, 2.9)
    assert np.max(np.abs(a.imag)) < 1e-10
    assert np.max(np.abs(a - b)) < 1e-10


def test_kernel_known_value_at_origin():
    # eta = 1, n = d = 0: R(0) = int |k| e^{-k^2/2} dk = 2
    spec = tomo.KernelSpec(n=0, d=0, eta_det=1.0)
    assert complex(tomo.kernel_value(spec, 0.0, 0.0)).real == pytest.approx(2.0, rel=1e-10)


def test_vacuum_unbiasedness():
    rng = tomo.rng_stream(101)
    spec = tomo.KernelSpec(n=0, d=0, eta_det=1.0)
    q = rng.normal(0.0, 1.0, 400000)
    vals = tomo.kernel_value_bulk(spec, q, 0.0).real
    se = vals.std() / math.sqrt(q.size)
    assert abs(vals.mean() - 1.0) < 3.0 * se


def test_coherent_single_photon_unbiasedness():
    # |alpha|^2 = 0.5, eta = 1: <|1><1|> = Poisson(0.5, 1) ~ 0.3033
    rng = tomo.rng_stream(7)
    state = tomo.GaussianModeState(alpha=math.sqrt(0.5))
    phi = rng.uniform(0.0, math.pi, 400000)
    q = tomo.sample_quadrature(state, phi, rng)
    vals = tomo.kernel_value_bulk(tomo.KernelSpec(n=1, d=0), q, phi).real
    se = vals.std() / math.sqrt(q.size)
    target = specfun.poisson(0.5, 1)
    assert abs(vals.mean() - target) < 3.0 * se
    assert target == pytest.approx(0.3033, abs=2e-4)


def test_inefficient_detector_unbiasedness():
    # detector efficiency 0.8: records carry added noise (1-eta)/eta, the
    # eta-matched kernel removes it
    eta_det = 0.8
    rng = tomo.rng_stream(32)
    alpha = 0.9
    smeared = tomo.detector_smeared_state(tomo.GaussianModeState(alpha=alpha), eta_det)
    assert smeared.added_noise == pytest.approx((1 - eta_det) / eta_det)
    phi = rng.uniform(0.0, math.pi, 300000)
    q = tomo.sample_quadrature(smeared, phi, rng)
    vals = tomo.kernel_value_bulk(tomo.KernelSpec(n=1, d=0, eta_det=eta_det), q, phi).real
    se = vals.std() / math.sqrt(q.size)
    assert abs(vals.mean() - specfun.poisson(alpha**2, 1)) < 3.5 * se


def test_sampler_moments_and_determinism():
    rng = tomo.rng_stream(5)
    vac = tomo.GaussianModeState()
    q = tomo.sample_quadrature(vac, np.zeros(400000), rng)
    assert abs(q.mean()) < 3.0 / math.sqrt(q.size)
    assert q.var() == pytest.approx(1.0, abs=0.01)
    # mean 2 for a real unit-amplitude state at phi = 0
    one = tomo.GaussianModeState(alpha=1.0)
    q2 = tomo.sample_quadrature(one, np.zeros(200000), tomo.rng_stream(6))
    assert q2.mean() == pytest.approx(2.0, abs=0.02)
    # fixed seed gives a bit-identical stream
    a = tomo.sample_quadrature(one, np.zeros(64), tomo.rng_stream(99, worker=3))
    b = tomo.sample_quadrature(one, np.zeros(64), tomo.rng_stream(99, worker=3))
    assert np.array_equal(a, b)
    c = tomo.sample_quadrature(one, np.zeros(64), tomo.rng_stream(99, worker=4))
    assert not np.array_equal(a, c)


def test_two_mode_vacuum():
    rng = tomo.rng_stream(12)
    vac = tomo.GaussianModeState()
    records = tomo.sample_records(vac, vac, 200000, rng)
    est, se = tomo.estimate_two_mode(records, tomo.KernelSpec(0, 0), tomo.KernelSpec(0, 0))
    assert abs(est.real - 1.0) < 3.0 * se


def test_two_mode_off_diagonal_matches_closed_form():
    # product coherent state, observable |0><1| x |1><0|
    alpha, beta = 0.6, 0.8
    rng = tomo.rng_stream(21)
    records = tomo.sample_records(tomo.GaussianModeState(alpha=alpha),
                                  tomo.GaussianModeState(alpha=beta), 400000, rng)
    est, se = tomo.estimate_two_mode(records, tomo.KernelSpec(0, 1), tomo.KernelSpec(0, 1))
    # <(|0><1|) x (|0><1|)> = <1|rho_a|0> <1|rho_b|0>
    target = (chan.coherent_output_fock_element(alpha, 0.0, 1, 0)
              * chan.coherent_output_fock_element(beta, 0.0, 1, 0))
    assert abs(est - target) < 4.0 * se


def test_cat_projector_decomposition_recovers_poisson():
    # records of the relative-phase-pi estimation state: psi1m yield = Pr(1|mu)
    mu = 0.7
    rng = tomo.rng_stream(40)
    count = 500000
    theta = rng.uniform(0.0, 2.0 * math.pi, count)
    phi1 = rng.uniform(0.0, math.pi, count)
    phi2 = rng.uniform(0.0, math.pi, count)
    amp = math.sqrt(mu / 2.0)
    q1 = rng.normal(2.0 * amp * np.cos(theta - phi1), 1.0)
    q2 = rng.normal(2.0 * amp * np.cos(theta + math.pi - phi2), 1.0)
    records = tomo.QuadratureRecords(phi1=phi1, q1=q1, phi2=phi2, q2=q2)
    est, se = tomo.estimate_projector(records, "psi1m")
    assert abs(est - specfun.poisson(mu, 1)) < 3.0 * se
    est_p, se_p = tomo.estimate_projector(records, "psi1p")
    assert abs(est_p) < 3.0 * se_p


def test_standard_error_scaling():
    rng = tomo.rng_stream(77)
    state = tomo.GaussianModeState(alpha=0.5)
    ses = []
    for n in (10**4, 10**5, 10**6):
        records = tomo.sample_records(state, state, n, rng)
        _, se = tomo.estimate_projector(records, "n01")
        ses.append(se)
    assert ses[0] / ses[1] == pytest.approx(math.sqrt(10.0), rel=0.2)
    assert ses[1] / ses[2] == pytest.approx(math.sqrt(10.0), rel=0.2)


def test_lattice_accuracy_budget():
    for spec in (tomo.KernelSpec(0, 0), tomo.KernelSpec(1, 0, 0.9),
                 tomo.KernelSpec(0, 2), tomo.KernelSpec(2, 0), tomo.KernelSpec(0, 1)):
        lattice = tomo.KernelLattice(spec)
        qs = np.linspace(-12.0, 12.0, 101) + 0.0037  # off-node probes
        exact = tomo.kernel_radial(spec, qs)
        approx = lattice.radial(qs)
        assert np.max(np.abs(exact - approx)) < 1e-6


def test_lattice_cache_file_roundtrip(tmp_path):
    spec = tomo.KernelSpec(1, 1, 0.85)
    lattice = tomo.KernelLattice(spec, points=2001)
    blob = lattice.save()
    assert blob[:8] == b"TBKLAT1\x00"
    path = tmp_path / "kernel.lat"
    path.write_bytes(blob)
    loaded = tomo.KernelLattice.load(path.read_bytes())
    assert loaded.spec == spec
    qs = np.linspace(-5, 5, 17)
    assert np.allclose(loaded.radial(qs), lattice.radial(qs))
    with pytest.raises(DomainError):
        tomo.KernelLattice.load(b"garbagexxxxxxxxxxxxxxxxxxxxxxxxxxxxx")


def test_records_csv_roundtrip():
    rng = tomo.rng_stream(3)
    records = tomo.sample_records(tomo.GaussianModeState(), tomo.GaussianModeState(),
                                  32, rng)
    text = records.to_csv()
    assert text.splitlines()[0] == "phi1,q1,phi2,q2"
    back = tomo.QuadratureRecords.from_csv(text)
    assert np.array_equal(back.q1, records.q1)
    assert np.array_equal(back.phi2, records.phi2)


def test_empty_records_rejected():
    with pytest.raises(DomainError):
        tomo.estimate_two_mode([], tomo.KernelSpec(0, 0), tomo.KernelSpec(0, 0))


def test_kernel_bound_definition():
    spec = tomo.KernelSpec(n=1, d=0, eta_det=0.9)
    bound = tomo.kernel_bound(spec)
    rng = tomo.rng_stream(8)
    q = rng.uniform(-25.0, 25.0, 2000)
    phi = rng.uniform(0.0, math.pi, 2000)
    vals = np.abs(tomo.kernel_value(spec, q, phi))
    assert np.all(vals <= bound * (1.0 + 1e-9) + 1e-12)


def test_kernel_bound_finite_and_diverging_towards_half():
    for n in range(3):
        for d in range(3):
            assert math.isfinite(tomo.kernel_bound(tomo.KernelSpec(n, d, 0.9)))
    bounds = [tomo.kernel_bound(tomo.KernelSpec(0, 0, e)) for e in (0.6, 0.55, 0.51)]
    assert bounds[0] < bounds[1] < bounds[2]
    # the eta -> 1/2 blowup follows 1/damping = 2 eta / (2 eta - 1)
    assert bounds[2] == pytest.approx(1.0 / tomo.KernelSpec(0, 0, 0.51).damping, rel=1e-6)

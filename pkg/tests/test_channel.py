"""Channel statistics against brute-force Fock-space and published anchors."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from timebin_cvqkd import channel as chan
from timebin_cvqkd import specfun
from timebin_cvqkd.errors import ConfigurationError, DomainError, UndefinedRateError
from timebin_cvqkd.observables import TAGGED_SECTORS, projector


# ---------------------------------------------------------------------------
# brute-force oracle: beamsplitter coupling to a thermal environment
# ---------------------------------------------------------------------------

def _brute_output(rho_signal, eta, xi, dim):
    kbar = xi / (2.0 * (1.0 - eta))
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    eye = np.eye(dim)
    n = np.arange(dim)
    p_env = kbar**n / (kbar + 1.0) ** (n + 1)
    rho_env = np.diag(p_env)
    theta = math.acos(math.sqrt(eta))
    big_a, big_b = np.kron(a, eye), np.kron(eye, a)
    u = expm(theta * (big_a @ big_b.conj().T - big_a.conj().T @ big_b))
    rho = u @ np.kron(rho_signal, rho_env) @ u.conj().T
    return np.einsum("aebe->ab", rho.reshape(dim, dim, dim, dim))


def _coherent_vector(alpha, dim):
    n = np.arange(dim)
    facts = np.array([math.gamma(k + 1) for k in n])
    return np.exp(-abs(alpha) ** 2 / 2.0) * alpha**n / np.sqrt(facts)


def test_fock_elements_match_beamsplitter_oracle():
    eta, xi = 0.631, 2e-3
    alpha = 0.9 + 0.3j
    vec = _coherent_vector(alpha, 28)
    rho = _brute_output(np.outer(vec, vec.conj()), eta, xi, 28)
    out_amp = math.sqrt(eta) * alpha
    for (m, n) in [(0, 0), (1, 1), (2, 2), (0, 1), (1, 0), (0, 2), (2, 0)]:
        got = chan.coherent_output_fock_element(out_amp, xi, m, n)
        assert got == pytest.approx(rho[m, n], abs=1e-12)


def test_fock_element_trivial_cases():
    # xi = 0 vacuum overlap of a coherent state
    alpha = 0.7 - 0.2j
    assert chan.coherent_output_fock_element(alpha, 0.0, 0, 0) == pytest.approx(
        math.exp(-abs(alpha) ** 2), rel=1e-14)
    # vanishing amplitude kills the off-diagonal
    assert chan.coherent_output_fock_element(0.0, 0.05, 0, 1) == 0.0
    with pytest.raises(DomainError):
        chan.coherent_output_fock_element(0.1, 0.0, 1, 2)


def test_fock_element_two_photon_derived():
    # oracle: displaced-thermal moments E|g|^4 with g ~ CN(kappa*a, 1-kappa)
    alpha, xi = 0.5, 0.01
    kappa = 2.0 / (2.0 + xi)
    a2 = alpha**2
    expected = kappa * math.exp(-kappa * a2) * (
        0.5 * (kappa**2 * a2) ** 2 + 2.0 * (kappa**2 * a2) * (1 - kappa) + (1 - kappa) ** 2)
    assert chan.coherent_output_fock_element(alpha, xi, 2, 2) == pytest.approx(
        expected, rel=1e-13)


def test_transfer_tensor_matches_beamsplitter_oracle():
    eta, xi = 0.631, 2e-3
    tensor = chan.fock_transfer_tensor(eta, xi)
    for m in range(3):
        for n in range(3):
            rho_in = np.zeros((30, 30), dtype=complex)
            rho_in[m, n] = 1.0
            rho_out = _brute_output(rho_in, eta, xi, 30)
            for a_idx in range(3):
                for b_idx in range(3):
                    assert tensor[a_idx, b_idx, m, n] == pytest.approx(
                        rho_out[a_idx, b_idx].real, abs=1e-13)


def test_transfer_tensor_trace_preserving():
    # full output trace requires a large out_max; check sum over diagonal
    tensor = chan.fock_transfer_tensor(0.8, 5e-3, in_max=2, out_max=40)
    for m in range(3):
        assert float(np.trace(tensor[:, :, m, m])) == pytest.approx(1.0, abs=1e-12)


def test_transfer_tensor_unit_eta_displaced_thermal():
    # at eta = 1 the channel is classical Gaussian noise; diagonal elements of
    # the vacuum output must form the thermal distribution of mean xi/2
    xi = 4e-3
    tensor = chan.fock_transfer_tensor(1.0, xi, in_max=0, out_max=3)
    kappa = 2.0 / (2.0 + xi)
    for k in range(4):
        assert tensor[k, k, 0, 0] == pytest.approx(kappa * (1 - kappa) ** k, rel=1e-12)


def test_compose_channels():
    assert chan.compose_channels((1.0, 0.0), (0.5, 0.002)) == (0.5, 0.002)
    assert chan.compose_channels((0.5, 0.002), (1.0, 0.0)) == (0.5, 0.002)
    eta, xi = chan.compose_channels((0.8, 0.01), (0.5, 0.002))
    assert eta == pytest.approx(0.4)
    assert xi == pytest.approx(0.007)


@given(st.tuples(st.floats(0.05, 1.0), st.floats(0.0, 0.05)),
       st.tuples(st.floats(0.05, 1.0), st.floats(0.0, 0.05)),
       st.tuples(st.floats(0.05, 1.0), st.floats(0.0, 0.05)))
@settings(max_examples=50, deadline=None)
def test_compose_channels_associative(c1, c2, c3):
    left = chan.compose_channels(chan.compose_channels(c1, c2), c3)
    right = chan.compose_channels(c1, chan.compose_channels(c2, c3))
    assert left[0] == pytest.approx(right[0], rel=1e-12)
    assert left[1] == pytest.approx(right[1], rel=1e-12, abs=1e-15)


# ---------------------------------------------------------------------------
# key-map statistics
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("mu,tau,e_ref", [
    (1.487, 1.641, 0.1052),
    (0.356, 1.437, 0.3095),
])
def test_z_error_reference_points(mu, tau, e_ref):
    _, e_z = chan.z_gain_and_error(mu, 1.0, 0.0, tau)
    assert abs(e_z - e_ref) < 1e-3


def test_z_error_vacuum_source_is_half():
    for tau in (0.9, 1.641, 3.0):
        _, e_z = chan.z_gain_and_error(0.0, 0.7, 0.0, tau)
        assert e_z == 0.5


def test_z_gain_matches_fock_route():
    # total acceptance computed from the Gaussian law must equal the Poisson
    # mixture of per-photon-number acceptances on the lossless channel
    mu, tau = 1.487, 1.641
    q_z, _ = chan.z_gain_and_error(mu, 1.0, 0.0, tau)
    fock = sum(specfun.poisson(mu, m) * specfun.ideal_acceptance(m, tau)
               for m in range(specfun.MAX_POLY_ORDER + 1))
    assert q_z == pytest.approx(fock, abs=1e-12)


def test_vacuum_receive_prob():
    assert chan.vacuum_receive_prob(0.0, 0.4, 0.0) == 1.0
    mu, eta = 1.1, 0.77
    assert chan.vacuum_receive_prob(mu, eta, 0.0) == pytest.approx(
        math.exp(-eta * mu), rel=1e-14)
    eta20 = 10.0 ** (-0.4)
    kappa = 2.0 / 2.001
    assert chan.vacuum_receive_prob(1.487, eta20, 0.001) == pytest.approx(
        kappa**2 * math.exp(-kappa * eta20 * 1.487), rel=1e-14)


# ---------------------------------------------------------------------------
# tagged closed forms
# ---------------------------------------------------------------------------

def test_tagged_noiseless_reductions():
    mu, tau, eta = 1.487, 1.641, 0.631
    coeff = specfun.region_coefficients(tau)
    q11 = chan.tagged_gain_Q11(mu, eta, 0.0, tau)
    assert q11 == pytest.approx(coeff.c1 * specfun.poisson(mu, 1) * eta, rel=1e-12)
    q22 = chan.tagged_gain_Q22(mu, eta, 0.0, tau)
    assert q22 == pytest.approx(coeff.c2_02 * specfun.poisson(mu, 2) * eta**2, rel=1e-12)
    assert chan.tagged_error_e11(mu, eta, 0.0, 0.0, tau) == pytest.approx(0.0, abs=1e-15)
    assert chan.tagged_error_e22(mu, eta, 0.0, 0.0, tau) == pytest.approx(0.0, abs=1e-15)


def test_tagged_unit_eta_noiseless():
    mu, tau = 1.487, 1.641
    coeff = specfun.region_coefficients(tau)
    assert chan.tagged_gain_Q11(mu, 1.0, 0.0, tau) == pytest.approx(
        coeff.c1 * specfun.poisson(mu, 1), rel=1e-12)
    assert chan.tagged_gain_Q22(mu, 1.0, 0.0, tau) == pytest.approx(
        coeff.c2_02 * specfun.poisson(mu, 2), rel=1e-12)


def test_misalignment_only_error():
    delta = math.radians(5.0)
    e11 = chan.tagged_error_e11(1.0, 1.0, 0.0, delta, 1.641)
    assert e11 == pytest.approx(math.sin(delta / 2.0) ** 2, rel=1e-12)
    # at eta < 1 the printed mixture scales the penalty by 1/eta
    eta = 0.631
    e11_lossy = chan.tagged_error_e11(1.0, eta, 0.0, delta, 1.641)
    assert e11_lossy == pytest.approx(math.sin(delta / 2.0) ** 2 / eta, rel=1e-12)


def test_tagged_cutoff_insensitive():
    mu, tau, xi = 0.924, 2.457, 1e-3
    eta = 10.0 ** (-0.2)
    q3 = chan.tagged_gain_Q11(mu, eta, xi, tau, nc=3)
    q6 = chan.tagged_gain_Q11(mu, eta, xi, tau, nc=6)
    assert abs(q6 - q3) / q3 < 1e-6


def test_tagged_error_double_loop_oracle():
    # independent straight double-loop evaluation of the printed mixture
    mu, tau, xi, eta = 0.924, 2.457, 1e-3, 10.0 ** (-0.2)
    nc = 6
    kbar = xi / (2.0 * (1.0 - eta))
    coeff = specfun.region_coefficients(tau)
    p1 = specfun.poisson(mu, 1)
    num = 0.0
    q11 = 0.0
    for k in range(nc + 1):
        for l in range(nc + 1):
            w = (kbar**k / (kbar + 1) ** (k + 1)) * (kbar**l / (kbar + 1) ** (l + 1))
            q11 += w * coeff.c1 * p1 * eta ** (k + l - 1) * (
                ((k + 1) * eta - k) ** 2 + l * (k + 1) * (1 - eta) ** 2)
            num += w * coeff.c1 * (0.25 * eta ** (k + l - 1) * (1 - eta) ** 2
                                   * (k * k + l * l + k + l))
    expected = p1 * num / q11
    assert chan.tagged_error_e11(mu, eta, xi, 0.0, tau, nc=6) == pytest.approx(
        expected, rel=1e-12)


def test_tagged_requires_sub_unity_eta_with_noise():
    with pytest.raises(ConfigurationError):
        chan.tagged_gain_Q11(1.0, 1.0, 1e-3, 1.641)
    with pytest.raises(ConfigurationError):
        chan.thermal_mean(1.0 - 1e-13, 1e-3)


def test_tagged_error_undefined_at_zero_gain():
    with pytest.raises(UndefinedRateError):
        chan.tagged_error_e11(0.0, 0.5, 0.0, 0.0, 1.641)


def test_k_l_symmetry_of_q22_terms():
    # the per-(k,l) contribution is symmetric by construction
    from timebin_cvqkd.channel import _q22_terms
    for (k, l) in [(0, 1), (1, 2), (2, 3), (0, 3)]:
        a = _q22_terms(k, l, 0.7, 0.4, 0.3, 0.2)
        b = _q22_terms(l, k, 0.7, 0.4, 0.3, 0.2)
        assert a == pytest.approx(b, rel=1e-14)


# ---------------------------------------------------------------------------
# observed yields
# ---------------------------------------------------------------------------

def test_observed_yield_vacuum_identity():
    assert chan.observed_yield(("Z", 0.0), "n00", 0.9, 0.0) == pytest.approx(1.0, rel=1e-14)


def test_observed_yield_cat_pairing_follows_relative_phase():
    # the symmetric cat is the single-photon component of relative phase 0,
    # the antisymmetric cat of relative phase pi (identity channel)
    mu = 0.8
    p1 = specfun.poisson(mu, 1)
    assert chan.observed_yield(("phi0", mu), "psi1p", 1.0, 0.0) == pytest.approx(p1, rel=1e-12)
    assert chan.observed_yield(("phi180", mu), "psi1m", 1.0, 0.0) == pytest.approx(p1, rel=1e-12)
    assert chan.observed_yield(("phi180", mu), "psi1p", 1.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert chan.observed_yield(("phi0", mu), "psi1m", 1.0, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_observed_yield_poissonian_statistics():
    # |01> + |10> projector expectation on the key mixture at eta=1, xi=0
    mu = 1.3
    total = (chan.observed_yield(("Z", mu), "n01", 1.0, 0.0)
             + chan.observed_yield(("Z", mu), "n10", 1.0, 0.0))
    assert total == pytest.approx(specfun.poisson(mu, 1), rel=1e-12)


def test_observed_yield_two_photon_cat_identities():
    # two-photon sector of the four-phase combination reproduces the cats
    mu, eta, xi = 0.9, 1.0, 0.0
    p2 = specfun.poisson(mu, 2)
    for target, sign in (("psi2p", +1), ("psi2m", -1)):
        combo = (chan.observed_yield(("Z", mu), target, eta, xi)
                 + sign * 0.5 * (chan.observed_yield(("phi0", mu), target, eta, xi)
                                 + chan.observed_yield(("phi180", mu), target, eta, xi))
                 - sign * 0.5 * (chan.observed_yield(("phi90", mu), target, eta, xi)
                                 + chan.observed_yield(("phi270", mu), target, eta, xi)))
        assert combo == pytest.approx(p2, rel=1e-12)


def test_observed_yield_matches_transfer_tensor():
    # independent route: Poisson-weighted transfer of each photon-number sector
    mu, eta, xi = 0.7, 0.631, 1e-3
    tensor = chan.fock_transfer_tensor(eta, xi, in_max=12, out_max=2, amp_terms=40)
    for obs in ("n00", "n01", "n11", "n02", "psi1p"):
        op = projector(obs)
        # relative phase 0 estimation state, photon sectors k = 0..12
        total = 0.0
        amp = math.sqrt(mu / 2.0)
        for k in range(13):
            # k-photon component of the two-mode coherent state at phase 0
            comp = {}
            for j1 in range(k + 1):
                for j2 in range(k + 1):
                    w = (amp**k / math.sqrt(math.factorial(j1) * math.factorial(k - j1))
                         * amp**k / math.sqrt(math.factorial(j2) * math.factorial(k - j2)))
                    comp[((j1, k - j1), (j2, k - j2))] = w
            sector = 0.0
            for ((m1, m2), (n1, n2)), w_in in comp.items():
                for ((a1, a2), (b1, b2)), w_out in op.items():
                    sector += w_in * w_out * tensor[b1, a1, m1, n1] * tensor[b2, a2, m2, n2]
            total += math.exp(-mu) * sector
        direct = chan.observed_yield(("phi0", mu), obs, eta, xi)
        assert direct == pytest.approx(total, abs=1e-12)


# ---------------------------------------------------------------------------
# exact tagged stats vs closed forms
# ---------------------------------------------------------------------------

def test_exact_matches_closed_form_gains():
    mu, tau, xi = 0.924, 2.457, 1e-3
    eta = 10.0 ** (-0.2)
    params = chan.ChannelParams(distance_km=10.0, excess_noise_xi=xi, cutoff_nc=6)
    closed = chan.closed_form_tag_stats(mu, tau, params)
    exact = chan.exact_tagged_stats(mu, tau, eta, xi)
    assert exact.q_mm[1] == pytest.approx(closed.q_mm[1], rel=1e-9)
    assert exact.q_mm[2] == pytest.approx(closed.q_mm[2], rel=1e-9)
    assert exact.e_x_mm[1] == pytest.approx(closed.e_x_mm[1], rel=1e-9)
    assert exact.q_star_0 == pytest.approx(closed.q_star_0, rel=1e-12)
    assert exact.q_z == pytest.approx(closed.q_z, rel=1e-12)


def test_exact_available_at_unit_eta_with_noise():
    stats = chan.exact_tagged_stats(1.487, 1.641, 1.0, 1e-3)
    assert 0.0 < stats.q_mm[1] < 1.0
    assert 0.0 < stats.q_mm[2] < 1.0
    assert stats.e_x_mm[1] > 0.0


def test_sector_yield_rotation_is_pure_phase_error():
    # a relative-phase rotation moves weight between the cat projectors
    tensor = chan.fock_transfer_tensor(1.0, 0.0)
    delta = math.radians(7.0)
    flip = chan.sector_yield(tensor, projector("psi1p"), projector("psi1m"), delta=delta)
    assert flip == pytest.approx(math.sin(delta / 2.0) ** 2, rel=1e-12)

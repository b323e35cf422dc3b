import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spike_limits.errors import BelowPhaseTransition, DomainError
from spike_limits.model import BulkSpectrum, SpikeSet
from spike_limits.rmt import check_separation, phi_suite, phi_value, s_under_real, solve_stieltjes

DELTA1 = BulkSpectrum.point_mass(1.0)
TWO_ATOMS = BulkSpectrum([1.0, 3.0], [0.5, 0.5])


def test_point_mass_values():
    pt = phi_suite(4.0, DELTA1, 0.5)
    assert pt.phi == pytest.approx(4.666667, abs=5e-7)
    assert pt.phi1 == pytest.approx(0.944444, abs=5e-7)
    assert pt.psi == pytest.approx(1.166667, abs=5e-7)
    assert pt.l0 == pytest.approx(0.809524, abs=5e-7)
    assert pt.l0p == pytest.approx(0.070295, abs=5e-7)
    assert pt.l1 == pytest.approx(0.033614, abs=1e-6)
    assert pt.l2 == pytest.approx(0.0079379, abs=5e-8)
    assert pt.s_under == -0.25
    assert pt.phi == pt.alpha * pt.psi


def test_l2_matches_finite_difference_of_l0p():
    # L2 is the three-term combination; check it against a numerical route through L0'
    a, h = 4.0, 1e-4
    pt = phi_suite(a, DELTA1, 0.5)
    # for the point mass, L0(a) = (1 - y/(a-1)^2)(a-1)/(a-1+y); derivative by central difference
    l0 = lambda x: phi_suite(x, DELTA1, 0.5).l0  # noqa: E731
    assert (l0(a + h) - l0(a - h)) / (2 * h) == pytest.approx(pt.l0p, rel=1e-7)


def test_phase_transition_threshold():
    with pytest.raises(BelowPhaseTransition):
        phi_suite(1 + np.sqrt(0.5), DELTA1, 0.5)
    with pytest.raises(DomainError):
        phi_suite(0.9, DELTA1, 0.5)


@pytest.mark.parametrize("y", [0.1, 0.5, 2.0])
def test_large_spike_l0_tends_to_one(y):
    assert abs(phi_suite(1e6, DELTA1, y).l0 - 1) < 1e-4


def test_mp_quadratic_oracle():
    sol = solve_stieltjes(1j, DELTA1, 1.0)
    roots = np.roots([1j, 1j, 1])
    target = roots[np.argmax(roots.imag)]
    assert abs(sol.s - target) < 1e-10
    assert sol.s_under.imag > 0 and sol.residual <= 1e-10


def test_small_y_limit():
    z = 2 + 1j
    assert abs(solve_stieltjes(z, DELTA1, 1e-8).s - 1 / (1 - z)) < 1e-6


def test_two_atom_cubic_oracle():
    z, y = 10j, 0.5
    sol = solve_stieltjes(z, TWO_ATOMS, y)
    assert sol.residual <= 1e-10 and sol.s_under.imag > 0
    # clear denominators: s (t1 u - z)(t2 u - z) = .5 (t2 u - z) + .5 (t1 u - z), u = 1 - y - y z s
    P = np.polynomial.Polynomial
    u = P([1 - y, -y * z])
    s = P([0, 1])
    poly = s * (1 * u - z) * (3 * u - z) - 0.5 * (3 * u - z) - 0.5 * (1 * u - z)
    roots = poly.roots()
    assert np.min(np.abs(roots - sol.s)) < 1e-9


def test_check_separation_examples():
    assert check_separation(SpikeSet(((4.0, 1),)), DELTA1, 0.5).ok
    rep = check_separation(SpikeSet(((1.6, 1),)), DELTA1, 0.5)
    assert not rep.ok and not rep.per_spike[0]["above_transition"]
    rep = check_separation(SpikeSet(((4.1, 1), (4.0, 1))), DELTA1, 0.5, d=0.05)
    assert not rep.gap_ok and rep.min_gap == pytest.approx(0.1 / 4.1, rel=1e-12) and rep.min_gap < 0.025 + 1e-12


spectra = st.lists(st.floats(0.1, 3.0), min_size=1, max_size=4).map(lambda v: BulkSpectrum.from_eigenvalues(v))


@settings(max_examples=40, deadline=None)
@given(H=spectra, y=st.floats(0.05, 2.0), scale=st.floats(1.3, 6.0))
def test_derivatives_match_finite_differences(H, y, scale):
    alpha = H.max_atom * (1 + np.sqrt(y)) * scale + 0.5
    pt = phi_suite(alpha, H, y)
    h = 1e-4 * alpha
    f = lambda a, name: getattr(phi_suite(a, H, y), name)  # noqa: E731
    for lower, upper in (("phi", "phi1"), ("phi1", "phi2"), ("phi2", "phi3")):
        fd = (f(alpha + h, lower) - f(alpha - h, lower)) / (2 * h)
        assert fd == pytest.approx(getattr(pt, upper), rel=1e-6)
    fd_psi = (f(alpha + h, "psi") - f(alpha - h, "psi")) / (2 * h)
    assert fd_psi == pytest.approx(pt.psi1, rel=1e-6, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(H=spectra, y=st.floats(0.05, 2.0), scale=st.floats(1.3, 6.0))
def test_inverse_map_identities(H, y, scale):
    alpha = H.max_atom * (1 + np.sqrt(y)) * scale + 0.5
    pt = phi_suite(alpha, H, y)
    val, der = s_under_real(pt.phi, H, y)
    assert abs(1 + alpha * val) <= 1e-10
    assert abs(alpha**2 * pt.phi1 * der - 1) <= 1e-8


def test_point_mass_closed_form_and_monotonicity():
    for y in (0.2, 0.5, 1.5):
        for a in (3.0, 7.5, 40.0):
            assert phi_suite(a, DELTA1, y).phi == pytest.approx(a * (1 + y / (a - 1)), rel=1e-15)
    H, y = TWO_ATOMS, 0.5
    phi1 = lambda a: phi_suite(a, H, y).phi1 if a > 3.0 else -1.0  # noqa: E731
    from scipy.optimize import brentq

    edge = brentq(lambda a: 1 - y * np.sum(H.weights * H.atoms**2 / (a - H.atoms) ** 2), 3.0 + 1e-9, 100.0)
    grid = np.linspace(edge * 1.001, 50, 400)
    assert all(phi1(a) > 0 for a in grid)
    vals = [phi_value(a, H, y) for a in grid]
    assert np.all(np.diff(vals) > 0)

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partial_dbar.bie import psi_offdiagonal, solve_trace_set
from partial_dbar.dbar import (
    DivisionSingularityError,
    IncompleteDataError,
    InterpolationError,
    ScatteringGrid,
    ZGrid,
    dbar_solve_m1,
    dbar_solve_m2,
    interpolate_to_zero,
    k_grid,
    reconstruct_m1,
    recover_gamma,
    scattering_S,
    scattering_t,
    solid_cauchy,
    wirtinger,
)
from partial_dbar.experiments import cgo_traces
from partial_dbar.fem import delta_dn
from partial_dbar.geometry import phantom_c2, phantom_discontinuous
from partial_dbar.lippmann import lippmann_schwinger, schrodinger_potential

FULL, QUARTER = Fraction(1), Fraction(1, 4)


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b)


def filled(kind, kg, values):
    return ScatteringGrid(kind, kg, np.asarray(values, dtype=complex))


# ---------------------------------------------------------------------------
# k-grids


@pytest.mark.parametrize("R, dk, n", [(3, 0.25, 441), (4, 0.2, 1257)])
def test_k_grid_node_counts(R, dk, n):
    kg = k_grid(R, dk)
    assert kg.n == n
    assert kg.ks[kg.zero_index] == 0
    assert np.all(np.abs(kg.ks) <= R + 1e-9)
    assert not kg.punctured[kg.zero_index]


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 4.0), st.sampled_from([0.1, 0.125, 0.2, 0.25]))
def test_conj_index_is_involution(R, dk):
    kg = k_grid(R, dk)
    ci = kg.conj_index
    np.testing.assert_array_equal(ci[ci], np.arange(kg.n))
    np.testing.assert_allclose(kg.ks[ci], np.conj(kg.ks), atol=1e-12)


def test_cauchy_matrix_antisymmetric():
    C = k_grid(2, 0.25).cauchy_matrix()
    np.testing.assert_allclose(C, -C.T, atol=1e-15)
    assert np.all(np.diag(C) == 0)


def test_cauchy_matrix_of_gaussian():
    # (1/pi) int exp(-|k'|^2) / (k - k') dk' = (1 - exp(-|k|^2)) / k
    kg = k_grid(4.5, 0.15)
    k = kg.ks
    val = kg.cauchy_matrix() @ np.exp(-np.abs(k) ** 2)
    probe = (np.abs(k) > 0.5) & (np.abs(k) < 3)
    exact = (1 - np.exp(-np.abs(k[probe]) ** 2)) / k[probe]
    assert rel(val[probe], exact) < 1e-2


# ---------------------------------------------------------------------------
# interpolation through k = 0


def test_interpolate_constant():
    kg = k_grid(1, 0.1)
    s = filled("S12", kg, np.where(kg.punctured, 2.5 - 1j, np.nan))
    out = interpolate_to_zero(s)
    np.testing.assert_allclose(out.values, 2.5 - 1j, atol=1e-12)


def test_interpolate_linear_vanishes_at_zero():
    kg = k_grid(1, 0.1)
    s = filled("S12", kg, np.where(kg.punctured, kg.ks, np.nan))
    out = interpolate_to_zero(s)
    assert abs(out.values[kg.zero_index]) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_interpolate_exact_for_quadratics(c):
    kg = k_grid(1, 0.1)
    a, b = kg.ks.real, kg.ks.imag
    q = c[0] + c[1] * a + c[2] * b + c[3] * a * a + c[4] * a * b + c[5] * b * b
    s = filled("t", kg, np.where(kg.punctured, q, np.nan))
    out = interpolate_to_zero(s)
    assert abs(out.values[kg.zero_index] - c[0]) < 1e-10


def test_interpolate_too_few_points():
    kg = k_grid(1, 0.25)
    s = filled("t", kg, np.where(kg.punctured, 1.0, np.nan))
    with pytest.raises(InterpolationError):
        interpolate_to_zero(s, fit_radius=0.26)


# ---------------------------------------------------------------------------
# scattering data: trivial cases and errors


def test_homogeneous_t_and_S_vanish(dn_homog, grid):
    kg = k_grid(1.5, 0.25)
    ks = kg.ks[kg.punctured]
    dns = {f: dn_homog[f] for f in (FULL, QUARTER)}
    tr = cgo_traces(["psi", "u1", "u2"], dns, ks, grid)
    for f, dn in dns.items():
        t = interpolate_to_zero(scattering_t(dn, tr[("psi", f)], kg))
        S12, S21 = scattering_S(psi_offdiagonal("12", dn, tr[("u2", f)]), psi_offdiagonal("21", dn, tr[("u1", f)]), kg)
        assert np.all(t.values == 0)
        assert np.all(interpolate_to_zero(S12).values == 0)
        assert np.all(interpolate_to_zero(S21).values == 0)


def test_missing_frequency_is_incomplete(dn_c2):
    kg = k_grid(1, 0.25)
    ks = kg.ks[kg.punctured][:-1]
    ps = solve_trace_set("psi", dn_c2[FULL], ks)
    with pytest.raises(IncompleteDataError):
        scattering_t(dn_c2[FULL], ps, kg)


def test_unfilled_grid_rejected_by_solvers():
    kg = k_grid(1, 0.25)
    s = filled("t", kg, np.where(kg.punctured, 0, np.nan))
    with pytest.raises(IncompleteDataError):
        dbar_solve_m1(s, [0.1])
    with pytest.raises(IncompleteDataError):
        dbar_solve_m2(s, s, [0.1])


# ---------------------------------------------------------------------------
# D-bar solvers: trivial data


def test_m1_zero_data_gives_one():
    kg = k_grid(2, 0.25)
    mu0, stats = dbar_solve_m1(filled("t", kg, np.zeros(kg.n)), [0, 0.5j, -0.7])
    np.testing.assert_allclose(mu0, 1, atol=1e-14)


def test_m2_zero_data_gives_identity():
    kg = k_grid(2, 0.25)
    zero = filled("S12", kg, np.zeros(kg.n))
    M, _ = dbar_solve_m2(zero, zero, [0, 0.5j, -0.7])
    np.testing.assert_allclose(M["M11"], 1, atol=1e-14)
    np.testing.assert_allclose(M["M22"], 1, atol=1e-14)
    np.testing.assert_allclose(M["M12"], 0, atol=1e-14)
    np.testing.assert_allclose(M["M21"], 0, atol=1e-14)


def test_m1_real_linear_against_dense():
    # split real and imaginary parts and solve densely
    rng = np.random.default_rng(5)
    kg = k_grid(1.5, 0.25)
    t = filled("t", kg, 0.5 * (rng.standard_normal(kg.n) + 1j * rng.standard_normal(kg.n)))
    z = 0.2 - 0.4j
    mu0, _ = dbar_solve_m1(t, [z])
    k = kg.ks
    T = np.where(k == 0, 0, t.values / (4 * np.pi * np.conj(np.where(k == 0, 1, k)))) * np.exp(-2j * np.real(k * z))
    C = kg.cauchy_matrix()
    A = C * T[None, :]  # mu - A conj(mu) = 1
    Ar, Ai = A.real, A.imag
    big = np.block([[np.eye(kg.n) - Ar, -Ai], [-Ai, np.eye(kg.n) + Ar]])
    x = np.linalg.solve(big, np.concatenate([np.ones(kg.n), np.zeros(kg.n)]))
    ref = x[kg.zero_index] + 1j * x[kg.n + kg.zero_index]
    assert abs(mu0[0] - ref) < 1e-8


# ---------------------------------------------------------------------------
# recovery


def test_identity_M_gives_unit_gamma():
    zg = ZGrid(32)
    na = int(zg.active.sum())
    M = {"M11": np.ones(na), "M22": np.ones(na), "M12": np.zeros(na), "M21": np.zeros(na)}
    rec = recover_gamma(M, zg)
    np.testing.assert_array_equal(rec.gamma, 1)


def test_division_singularity_reports_location():
    zg = ZGrid(32)
    na = int(zg.active.sum())
    M = {"M11": np.ones(na), "M22": np.ones(na), "M12": np.zeros(na), "M21": np.zeros(na)}
    zs = zg.z[zg.active]
    i = int(np.argmin(np.abs(zs - 0.3)))
    M["M12"][i] = -1  # M+ = 0 at one interior node
    with pytest.raises(DivisionSingularityError, match="M\\+"):
        recover_gamma(M, zg)


def test_wirtinger_on_polynomial():
    zg = ZGrid(64)
    z = zg.z
    d, dbar = wirtinger(z**2 * np.conj(z), zg.h)
    ins = np.abs(z) < 0.8
    np.testing.assert_allclose(d[ins], 2 * z[ins] * np.conj(z[ins]), atol=1e-10)
    np.testing.assert_allclose(dbar[ins], z[ins] ** 2, atol=1e-10)


def test_solid_cauchy_of_disc_indicator():
    # (1/pi) int_{|w|<r} dA(w) / (z - w) = conj(z) inside, r^2 / z outside
    zg = ZGrid(128)
    z = zg.z
    r = 0.6
    f = (np.abs(z) < r).astype(float)
    val = solid_cauchy(f, zg.h) / np.pi
    inner, outer = np.abs(z) < 0.4, (np.abs(z) > 0.8) & (np.abs(z) < 1)
    assert rel(val[inner], np.conj(z[inner])) < 0.05
    assert rel(val[outer], r**2 / z[outer]) < 0.02
    conj_val = solid_cauchy(f, zg.h, conjugate=True) / np.pi
    np.testing.assert_allclose(conj_val, np.conj(val), atol=1e-12)


def test_method1_sigma_is_mu_squared():
    zg = ZGrid(16)
    mu0 = 1 + 0.1 * np.arange(int(zg.active.sum()))
    rec = reconstruct_m1(mu0, zg)
    np.testing.assert_allclose(rec.gamma[zg.active], mu0**2)
    assert np.all(rec.gamma[~zg.active] == 1)


# ---------------------------------------------------------------------------
# Method 1 on the smooth bump


@pytest.fixture(scope="module")
def c2_t_R4(dn_c2, grid):
    kg = k_grid(4, 0.2)
    ks = kg.ks[kg.punctured]
    ps = cgo_traces(["psi"], {FULL: dn_c2[FULL]}, ks, grid)[("psi", FULL)]
    return scattering_t(dn_c2[FULL], ps, kg)


@pytest.fixture(scope="module")
def c2_m1_R4(c2_t_R4):
    t = interpolate_to_zero(c2_t_R4)
    zg = ZGrid(64)
    mu0, stats = dbar_solve_m1(t, zg.z[zg.active])
    rec = reconstruct_m1(mu0, zg, "1", 4)
    rec.compute_metrics(phantom_c2())
    mub, _ = dbar_solve_m1(t, np.exp(2j * np.pi * np.arange(64) / 64))
    return rec, stats, mub**2


@pytest.mark.slow
def test_method1_peak_window(c2_m1_R4):
    rec, stats, _ = c2_m1_R4
    assert stats["residual"] < 1e-8
    assert 2.0 <= rec.metrics["max"] <= 3.5


@pytest.mark.slow
def test_method1_boundary_value(c2_m1_R4):
    _, _, sig_b = c2_m1_R4
    assert np.max(np.abs(sig_b - 1)) <= 0.05


@pytest.mark.slow
def test_method1_regression(c2_m1_R4):
    rec, _, _ = c2_m1_R4
    m = rec.metrics
    assert abs(m["max"] - 1.901) < 0.02
    assert m["centroid_error"] < 0.1
    assert m["reality"] < 1e-6


@pytest.mark.slow
def test_t_conjugate_symmetry_reflected(c2_t_R4):
    # t(-conj k) = conj t(k)
    kg = c2_t_R4.grid
    v = c2_t_R4.values
    p = kg.punctured
    pos = {kg._key(k): i for i, k in enumerate(kg.ks)}
    idx = np.array([pos[kg._key(-np.conj(k))] for k in kg.ks])
    assert rel(v[idx][p], np.conj(v[p])) < 1e-6


@pytest.mark.slow
def test_t_conjugate_symmetry_point(c2_t_R4):
    # t(-k) = conj t(k) for every real conductivity
    kg = c2_t_R4.grid
    v = c2_t_R4.values
    p = kg.punctured
    neg = {kg._key(k): i for i, k in enumerate(kg.ks)}
    idx = np.array([neg[kg._key(-k)] for k in kg.ks])
    assert rel(v[idx][p], np.conj(v[p])) < 1e-8


@pytest.mark.slow
def test_t_matches_lippmann_schwinger(c2_t_R4):
    kg = c2_t_R4.grid
    P = schrodinger_potential(phantom_c2(), 256)
    for k in (1.0, 2j, -3.0, 2.8 + 2.8j):
        i = int(np.argmin(np.abs(kg.ks - k)))
        sol = lippmann_schwinger(P, kg.ks[i])
        ref = P.h**2 * np.sum(P.q * sol.mu * np.exp(2j * np.real(kg.ks[i] * P.z)))
        assert abs(c2_t_R4.values[i] - ref) < 0.02 * abs(ref)


@pytest.mark.slow
def test_t_blows_up_without_truncation(dn_c2):
    ang = np.exp(2j * np.pi * np.arange(8) / 8)
    ks = np.concatenate([3 * ang, 6 * ang])
    ps = solve_trace_set("psi", dn_c2[FULL], ks)
    z = ps.grid.z[:, None]
    t = ps.grid.h * np.sum(np.exp(1j * np.conj(ks)[None] * np.conj(z)) * dn_c2[FULL].apply(ps.values), axis=0)
    assert np.abs(t[8:]).min() >= 10 * np.abs(t[:8]).max()


# ---------------------------------------------------------------------------
# small-amplitude regime


@pytest.fixture(scope="module")
def born_data(bases, mesh):
    field = phantom_c2(amplitude=0.1)
    dn = delta_dn(field, bases[FULL], mesh)
    kg = k_grid(1.0, 0.1)
    ks = kg.ks[kg.punctured]
    ps = solve_trace_set("psi", dn, ks)
    t = scattering_t(dn, ps, kg).values[kg.punctured]
    P = schrodinger_potential(field, 256)
    E = np.exp(2j * np.real(ks[:, None, None] * P.z[None]))
    ft_q = P.h**2 * np.sum(P.q[None] * E, axis=(1, 2))
    dsig = np.where(np.abs(P.z) < 1, field(P.z) - 1, 0)
    linear = -2 * np.abs(ks) ** 2 * P.h**2 * np.sum(dsig[None] * E, axis=(1, 2))
    return ks, t, ft_q, linear, P


@pytest.mark.slow
def test_born_fourier_transform_of_q(born_data):
    _, t, ft_q, _, _ = born_data
    assert rel(t, ft_q) <= 0.2


@pytest.mark.slow
def test_born_linearized_transform(born_data):
    # Fourier transform of the first-order potential Lap(dsigma) / 2
    _, t, _, linear, _ = born_data
    assert rel(t, linear) <= 0.05


@pytest.mark.slow
def test_small_amplitude_matches_lippmann_schwinger(born_data):
    ks, t, _, _, P = born_data
    sel = np.arange(0, ks.size, 25)
    ref = []
    for k in ks[sel]:
        sol = lippmann_schwinger(P, k)
        ref.append(P.h**2 * np.sum(P.q * sol.mu * np.exp(2j * np.real(k * P.z))))
    assert rel(t[sel], ref) < 0.01


# ---------------------------------------------------------------------------
# Method 2 on the discontinuous inclusion


@pytest.fixture(scope="module")
def disc_S(grid, bases, mesh):
    """S data: R=4 (dk 0.2) for full and quarter arcs, R=3 (dk 0.125) full."""
    field = phantom_discontinuous()
    dns = {f: delta_dn(field, bases[f], mesh) for f in (FULL, QUARTER)}
    out = {}
    for R, dk, fr in ((4, 0.2, (FULL, QUARTER)), (3, 0.125, (FULL,))):
        kg = k_grid(R, dk)
        sub = {f: dns[f] for f in fr}
        tr = cgo_traces(["u1", "u2"], sub, kg.ks[kg.punctured], grid)
        for f, dn in sub.items():
            out[(R, f)] = scattering_S(psi_offdiagonal("12", dn, tr[("u2", f)]), psi_offdiagonal("21", dn, tr[("u1", f)]), kg)
    return out


def _coarsen(s: ScatteringGrid, dk: float) -> ScatteringGrid:
    kg = k_grid(s.grid.R, dk, s.grid.exclude)
    lut = {s.grid._key(k): i for i, k in enumerate(s.grid.ks)}
    return ScatteringGrid(s.kind, kg, s.values[[lut[s.grid._key(k)] for k in kg.ks]], s.fraction, s.tag)


@pytest.mark.slow
def test_partial_S21_deviates_from_full(disc_S):
    full, part = disc_S[(4, FULL)][1], disc_S[(4, QUARTER)][1]
    p = full.grid.punctured
    assert rel(part.values[p], full.values[p]) >= 0.1


@pytest.mark.slow
@pytest.mark.parametrize("key", [(4, FULL), (4, QUARTER), (3, FULL)])
def test_S_mutual_conjugation(disc_S, key):
    # S21(k) = conj(S12(conj k)) for real conductivities
    S12, S21 = disc_S[key]
    kg = S12.grid
    p = kg.punctured
    assert rel(np.conj(S12.values[kg.conj_index])[p], S21.values[p]) < 1e-10


@pytest.mark.slow
def test_M_k_refinement(disc_S):
    probes = np.array([0, -0.3 + 0.2j, 0.5, -0.5j, 0.3 + 0.6j])
    fine = [interpolate_to_zero(s) for s in disc_S[(3, FULL)]]
    coarse = [interpolate_to_zero(_coarsen(s, 0.25)) for s in disc_S[(3, FULL)]]
    Mf, _ = dbar_solve_m2(*fine, probes)
    Mc, _ = dbar_solve_m2(*coarse, probes)
    for i in range(probes.size):
        A = np.array([[Mf["M11"][i], Mf["M12"][i]], [Mf["M21"][i], Mf["M22"][i]]])
        B = np.array([[Mc["M11"][i], Mc["M12"][i]], [Mc["M21"][i], Mc["M22"][i]]])
        assert np.linalg.norm(A - B) <= 0.02 * np.linalg.norm(A)


@pytest.mark.slow
def test_M_at_zero_symmetric_structure(disc_S):
    S12, S21 = (interpolate_to_zero(s) for s in disc_S[(4, FULL)])
    M, stats = dbar_solve_m2(S12, S21, [0.1 - 0.2j, -0.3 + 0.2j])
    assert stats["residual"] < 1e-8
    np.testing.assert_allclose(M["M22"], np.conj(M["M11"]), atol=1e-8)
    np.testing.assert_allclose(M["M21"], np.conj(M["M12"]), atol=1e-8)

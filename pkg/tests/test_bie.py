from fractions import Fraction

import numpy as np
import pytest

from partial_dbar.bie import (
    CGOTraceSet,
    InconsistencyError,
    bie_system,
    incident,
    psi_offdiagonal,
    psi_offdiagonal_direct,
    relative_l2,
    solve_trace,
    solve_trace_set,
    solve_traces_batched,
    standard_kernels,
)
from partial_dbar.fem import cell_indices, delta_dn
from partial_dbar.geometry import phantom_c2
from partial_dbar.green import ExcludedFrequencyError, kernel_matrix
from partial_dbar.io import parse_config, read_matrix

ONE, THREE_Q, HALF, QUARTER = Fraction(1), Fraction(3, 4), Fraction(1, 2), Fraction(1, 4)
# frequencies with |k| <= 4 covering both test frequencies and the trace-figure direction
K_SAMPLE = [0.5, -4j, 2 + 2j, 4.0, -2.8 - 2.8j, 0.1]


def test_incident_fields(grid):
    z = grid.z
    np.testing.assert_allclose(incident("psi", z, 2j)[:, 0], np.exp(-2 * z))
    np.testing.assert_allclose(incident("u1", z, 1.0)[:, 0], np.exp(1j * z) / 1j)
    np.testing.assert_allclose(incident("u2", z, 1.0)[:, 0], np.exp(-1j * np.conj(z)) / -1j)
    with pytest.raises(ExcludedFrequencyError):
        incident("psi", z, 0)
    with pytest.raises(ValueError):
        incident("Psi12", z, 1)


@pytest.mark.parametrize("kind", ["psi", "u1", "u2"])
@pytest.mark.parametrize("k", [0.5, -4j, 3 + 3j])
def test_homogeneous_trace_is_incident(dn_homog, grid, kind, k):
    dn = dn_homog[ONE]
    trace = solve_trace(kind, dn, k)
    np.testing.assert_allclose(trace, incident(kind, grid.z, k)[:, 0], atol=1e-12, rtol=0)
    assert np.all(bie_system(kind, dn, k).A == 0)


def test_homogeneous_partial_trace_is_projection(dn_homog):
    dn = dn_homog[QUARTER]
    z = dn.basis.grid.z
    f = np.exp(0.5j * z)
    np.testing.assert_allclose(solve_trace("omega", dn, 0.5), dn.basis.Phi @ dn.basis.Phi.T @ f, atol=1e-13)


def test_excluded_frequency(dn_c2):
    with pytest.raises(ExcludedFrequencyError):
        solve_trace("psi", dn_c2[ONE], 0)


def test_system_scale(dn_c2, grid):
    assert bie_system("psi", dn_c2[ONE], 0.5).scale == pytest.approx(2 * np.pi / grid.L)
    part = bie_system("omega", dn_c2[HALF], 0.5)
    assert part.scale == pytest.approx(dn_c2[HALF].basis.arc.length / dn_c2[HALF].basis.L)


def test_solver_residual_and_stats(dn_c2):
    s = bie_system("psi", dn_c2[ONE], -4j)
    b = s.solve()
    assert np.linalg.norm(b + s.A @ b - s.rhs) <= 1e-9 * np.linalg.norm(s.rhs)
    assert s.stats["iterations"] > 0 and s.stats["residual"] <= 1e-10


def test_quarter_partial_vs_full(dn_c2):
    full = solve_trace("psi", dn_c2[ONE], 0.5)
    part = solve_trace("omega", dn_c2[QUARTER], 0.5)
    idx = cell_indices(dn_c2[QUARTER].basis, 256)
    assert relative_l2(part, full[idx]) <= 0.10


def test_batched_matches_single(dn_c2, grid):
    ks = np.array([0.5, -4j, 1 + 1j])
    K = standard_kernels(grid, ks)
    vals, res, _ = solve_traces_batched("psi", dn_c2[ONE], ks, K)
    for i, k in enumerate(ks):
        np.testing.assert_allclose(vals[:, i], solve_trace("psi", dn_c2[ONE], k), rtol=1e-8)
    assert res.max() <= 1e-10


def test_u2_shares_conjugate_kernels(dn_c2):
    dn = dn_c2[THREE_Q]
    k = 1.5 - 2j
    ts = solve_trace_set("u2", dn, [k])
    direct = solve_trace("u2", dn, k, kernel=kernel_matrix(dn.basis.grid, k, "conjugated"))
    np.testing.assert_allclose(ts.values[:, 0], direct, rtol=1e-9)


def test_offdiagonal_vanish_for_homogeneous(dn_homog):
    dn = dn_homog[ONE]
    for which, kind in (("12", "u2"), ("21", "u1")):
        u = solve_trace_set(kind, dn, [1 + 1j, -2.0])
        assert np.all(psi_offdiagonal(which, dn, u).values == 0)


def test_offdiagonal_factored_equals_direct(dn_disc):
    dn = dn_disc[HALF]
    ks = [3 + 3j, -0.5j]
    for which, kind in (("12", "u2"), ("21", "u1")):
        u = solve_trace_set(kind, dn, ks)
        np.testing.assert_allclose(psi_offdiagonal(which, dn, u).values, psi_offdiagonal_direct(which, dn, u).values, rtol=1e-10, atol=1e-14)


def test_offdiagonal_kind_mismatch(dn_disc):
    u = solve_trace_set("u1", dn_disc[ONE], [1.0])
    with pytest.raises(InconsistencyError):
        psi_offdiagonal("12", dn_disc[ONE], u)
    with pytest.raises(InconsistencyError):
        psi_offdiagonal("21", dn_disc[HALF], u)


def test_psi12_full_vs_three_quarter(dn_disc):
    k = 3 + 3j
    full = psi_offdiagonal("12", dn_disc[ONE], solve_trace_set("u2", dn_disc[ONE], [k]))
    part = psi_offdiagonal("12", dn_disc[THREE_Q], solve_trace_set("u2", dn_disc[THREE_Q], [k]))
    idx = cell_indices(dn_disc[THREE_Q].basis, 256)
    assert relative_l2(part.values[:, 0], full.values[idx, 0]) <= 0.15


def test_psi12_partial_vs_full_on_same_domain(dn_disc):
    # the same comparison with the full-data quadrature also restricted to the arc
    k = 3 + 3j
    full_dn, part_dn = dn_disc[ONE], dn_disc[THREE_Q]
    idx = cell_indices(part_dn.basis, 256)
    g = full_dn.basis.grid
    K = kernel_matrix(g, k, "cauchy")[np.ix_(idx, idx)] * g.h
    full_flux = full_dn.apply(solve_trace_set("u2", full_dn, [k]).values)[idx, 0]
    part = psi_offdiagonal("12", part_dn, solve_trace_set("u2", part_dn, [k]))
    assert relative_l2(part.values[:, 0], K @ full_flux) <= 0.15


@pytest.mark.parametrize("which", ["dn_c2", "dn_disc"])
def test_operator_norm_below_one(which, request):
    dns = request.getfixturevalue(which)
    worst = max(
        np.linalg.norm(bie_system(kind, dn, k).A, 2) for dn in dns.values() for k in K_SAMPLE for kind in ("psi", "u2")
    )
    assert worst < 1


@pytest.mark.parametrize("which", ["dn_c2", "dn_disc"])
def test_systems_well_conditioned(which, request):
    dns = request.getfixturevalue(which)
    for dn in dns.values():
        for k in K_SAMPLE:
            for kind in ("psi", "u2"):
                A = bie_system(kind, dn, k).A
                smin = np.linalg.svd(np.eye(dn.J) + A, compute_uv=False).min()
                assert smin > 0.05, (dn.basis.arc.fraction, k, kind)


def test_born_linearity(bases, mesh, grid):
    k = 0.5
    dev = []
    for a in (0.05, 0.1):
        dn = delta_dn(phantom_c2(amplitude=a), bases[ONE], mesh)
        dev.append(np.linalg.norm(solve_trace("psi", dn, k) - np.exp(1j * k * grid.z)))
    assert 1.6 <= dev[1] / dev[0] <= 2.4


@pytest.mark.parametrize("k", [0.5, -4j, 2 + 1j])
def test_k_continuity(dn_c2, k):
    a = solve_trace("psi", dn_c2[ONE], k)
    b = solve_trace("psi", dn_c2[ONE], k + 0.01)
    assert relative_l2(b, a) <= 0.02


def test_export(tmp_path, dn_c2):
    ts = solve_trace_set("psi", dn_c2[QUARTER], [0.5, -4j])
    files = ts.export(tmp_path)
    assert len(files) == 3
    v, head = read_matrix(files[1])
    np.testing.assert_array_equal(v[0], ts.values[:, 1])
    assert complex(head["k"].replace("i", "j")) == -4j
    man = parse_config(files[-1].read_text())
    assert man["kind"] == "psi" and man["fraction"] == "1/4" and man["nk"] == "2" and len(man["residuals"].split(";")) == 2


def test_trace_set_lookup(grid):
    ts = CGOTraceSet("psi", np.array([0.5, 1j]), np.ones((grid.L, 2)), grid)
    assert ts.at(1j).shape == (grid.L,)
    with pytest.raises(InconsistencyError):
        ts.at(2.0)

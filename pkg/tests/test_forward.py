"""Tests for the explicit diffusion-logistic solver.

The manufactured-solution oracle builds the forcing term symbolically with
sympy, so the expected field is known in closed form and the observed
convergence orders can be measured against it.
"""

import math

import numpy as np
import pytest
import sympy as sp

from dlsource.forward import (
    DivergenceError,
    Field,
    GridAlignmentError,
    StabilityError,
    build_grid,
    observe,
    solve,
    solve_phi,
    stability_check,
)
from dlsource.model import (
    Constant,
    ExpDecay,
    Grid,
    ModelParams,
    SourceParam,
    build_knots,
)


def manufactured(D, K, rate, l1=1.0, l2=6.0):
    """Forcing g and exact field for u* = 2 + cos(pi (x-l1)/(l2-l1)) e^{-t}.

    u* satisfies the zero-flux boundary conditions; g is whatever remains
    when u* is substituted into the equation.
    """
    x, t = sp.symbols("x t")
    ust = 2 + sp.cos(sp.pi * (x - l1) / (l2 - l1)) * sp.exp(-t)
    g = sp.diff(ust, t) - D * sp.diff(ust, x, 2) - (1 - ust / K) * rate * ust
    return sp.lambdify((x, t), g, "numpy"), sp.lambdify((x, t), ust, "numpy")


def manual_grid(l1, l2, h, tau, t0, t1):
    nx = round((l2 - l1) / h) + 1
    steps = round((t1 - t0) / tau)
    return Grid(
        h=h,
        tau=tau,
        x_nodes=np.linspace(l1, l2, nx),
        t_nodes=t0 + tau * np.arange(steps + 1),
    )


class TestStabilityCheck:
    def test_formula_instantiations(self):
        p = ModelParams(D=1.0, growth=Constant(0.0))
        assert stability_check(p, 0.1) == pytest.approx(0.0025, rel=1e-12)
        p = ModelParams(D=0.01, growth=Constant(0.0))
        assert stability_check(p, 0.1) == pytest.approx(0.25, rel=1e-12)
        p = ModelParams(D=1.0, growth=Constant(1.0))
        assert stability_check(p, 0.1) == pytest.approx(0.5 * 0.01 / 2.01, rel=1e-12)

    def test_decaying_rate_uses_initial_supremum(self):
        p = ModelParams(D=1.0, growth=ExpDecay(r=1.0, b=0.5))
        # sup over [1, t_end] is r(1) = 1
        assert stability_check(p, 0.1) == pytest.approx(0.5 * 0.01 / 2.01, rel=1e-12)

    def test_rejects_nonpositive_h(self):
        with pytest.raises(ValueError):
            stability_check(ModelParams(), 0.0)


class TestBuildGrid:
    def test_default_steps(self):
        grid = build_grid(ModelParams(), h=0.05)
        # tau_max = 0.5*0.0025/(0.02 + 0.0025*1.5) = 1/19, already aligned
        assert grid.tau == pytest.approx(1.0 / 19.0, rel=1e-12)
        assert grid.nx == 101
        assert grid.nt == 23 * 19 + 1

    def test_integer_times_are_exact_nodes(self):
        grid = build_grid(ModelParams(), h=0.05)
        nsub = round(1.0 / grid.tau)
        for t in range(1, 25):
            assert grid.t_nodes[(t - 1) * nsub] == float(t)

    def test_tau_respects_stability(self):
        for h in (0.05, 0.25, 1.0):
            p = ModelParams()
            grid = build_grid(p, h=h)
            assert grid.tau <= stability_check(p, h) * (1 + 1e-12)

    def test_h_must_divide_span(self):
        with pytest.raises(GridAlignmentError):
            build_grid(ModelParams(), h=0.3)

    def test_explicit_tau_checked_for_stability(self):
        p = ModelParams(D=1.0, growth=Constant(0.0))
        with pytest.raises(StabilityError):
            build_grid(p, h=0.1, tau=0.5)

    def test_explicit_tau_must_divide_unit_time(self):
        p = ModelParams(D=0.01, growth=Constant(0.0), l1=0.0, l2=5.0)
        with pytest.raises(GridAlignmentError):
            build_grid(p, h=1.0, tau=0.4)

    def test_time_span_must_be_step_multiple(self):
        p = ModelParams(D=0.01, growth=Constant(0.0), t_end=1.5)
        with pytest.raises(GridAlignmentError):
            build_grid(p, h=1.0, tau=1.0)


class TestSolve:
    def test_carrying_capacity_equilibrium(self):
        p = ModelParams()
        grid = build_grid(p, h=0.25)
        fld = solve_phi(p, np.full(grid.nx, p.K), grid)
        assert np.max(np.abs(fld.values - p.K)) <= 1e-12

    def test_zero_equilibrium(self):
        p = ModelParams()
        grid = build_grid(p, h=0.25)
        fld = solve_phi(p, np.zeros(grid.nx), grid)
        assert np.max(np.abs(fld.values)) <= 1e-12

    def test_equilibrium_through_spline_source(self):
        p = ModelParams()
        grid = build_grid(p, h=0.25)
        src = SourceParam(build_knots(6), np.full(6, p.K))
        fld = solve(p, src, grid)
        assert np.max(np.abs(fld.values - p.K)) <= 1e-12

    def test_initial_level_is_the_sampled_source(self):
        from dlsource.model import spline_phi

        p = ModelParams()
        grid = build_grid(p, h=0.25)
        src = SourceParam(build_knots(6), np.array([5.8, 1.7, 1.9, 1.0, 0.95, 0.7]))
        fld = solve(p, src, grid)
        assert np.array_equal(fld.values[0], spline_phi(src, grid.x_nodes))

    def test_positivity_and_ceiling(self):
        p = ModelParams()
        grid = build_grid(p, h=0.05)
        rng = np.random.default_rng(11)
        phi = rng.uniform(0.0, p.K, grid.nx)
        fld = solve_phi(p, phi, grid)
        assert fld.values.min() >= -1e-14
        assert fld.values.max() <= p.K + 1e-12

    def test_pure_diffusion_conserves_trapezoidal_mass(self):
        # mirror ghosts conserve the trapezoidal sum (half-weight ends),
        # the discrete counterpart of the integral of u
        p = ModelParams(growth=Constant(0.0))
        grid = build_grid(p, h=0.05)
        rng = np.random.default_rng(3)
        fld = solve_phi(p, rng.uniform(0.0, 6.0, grid.nx), grid)
        w = np.ones(grid.nx)
        w[0] = w[-1] = 0.5
        mass = fld.values @ w
        assert np.max(np.abs(mass - mass[0])) <= 1e-10 * abs(mass[0])

    def test_comparison_monotonicity(self):
        p = ModelParams()
        grid = build_grid(p, h=0.25)
        rng = np.random.default_rng(5)
        lo = rng.uniform(0.0, 4.0, grid.nx)
        hi = lo + rng.uniform(0.0, 2.0, grid.nx)
        u_lo = solve_phi(p, lo, grid).values
        u_hi = solve_phi(p, hi, grid).values
        assert np.min(u_hi - u_lo) >= -1e-12

    def test_manufactured_spatial_order(self):
        D, K = 0.02, 25.0
        g_fn, u_fn = manufactured(D, K, 1.0)
        p = ModelParams(D=D, K=K, growth=Constant(1.0), t_end=1.5)
        errs = []
        hs = [0.5, 0.25, 0.125]
        for h in hs:
            grid = manual_grid(1.0, 6.0, h, h * h, 1.0, 1.5)
            fld = solve_phi(p, u_fn(grid.x_nodes, 1.0), grid, forcing=g_fn)
            exact = u_fn(grid.x_nodes, grid.t_nodes[-1])
            errs.append(np.max(np.abs(fld.values[-1] - exact)))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= 1.9

    def test_manufactured_temporal_order(self):
        D, K = 0.001, 25.0
        g_fn, u_fn = manufactured(D, K, 1.0)
        p = ModelParams(D=D, K=K, growth=Constant(1.0), t_end=1.5)
        errs = []
        taus = [0.05, 0.025, 0.0125]
        for tau in taus:
            grid = manual_grid(1.0, 6.0, 0.05, tau, 1.0, 1.5)
            fld = solve_phi(p, u_fn(grid.x_nodes, 1.0), grid, forcing=g_fn)
            exact = u_fn(grid.x_nodes, grid.t_nodes[-1])
            errs.append(np.max(np.abs(fld.values[-1] - exact)))
        slope = np.polyfit(np.log(taus), np.log(errs), 1)[0]
        assert slope >= 0.95

    def test_forcing_array_matches_callable(self):
        D, K = 0.02, 25.0
        g_fn, u_fn = manufactured(D, K, 1.0)
        p = ModelParams(D=D, K=K, growth=Constant(1.0), t_end=1.5)
        grid = manual_grid(1.0, 6.0, 0.25, 0.0625, 1.0, 1.5)
        tq, xq = np.meshgrid(grid.t_nodes[:-1], grid.x_nodes, indexing="ij")
        a = solve_phi(p, u_fn(grid.x_nodes, 1.0), grid, forcing=g_fn)
        b = solve_phi(p, u_fn(grid.x_nodes, 1.0), grid, forcing=g_fn(xq, tq))
        assert np.array_equal(a.values, b.values)

    def test_divergence_reports_time_level(self):
        # a strongly negative state under logistic growth blows up in
        # finite time; the solver must abort, not clamp
        p = ModelParams(D=0.01, K=25.0, growth=Constant(2.0), t_end=10.0)
        grid = build_grid(p, h=0.25)
        with pytest.raises(DivergenceError) as exc:
            solve_phi(p, np.full(grid.nx, -50.0), grid)
        assert exc.value.level > 0
        assert "diverged" in str(exc.value)
        assert exc.value.t == pytest.approx(grid.t_nodes[exc.value.level])

    def test_unstable_grid_rejected(self):
        p = ModelParams(D=1.0, growth=Constant(0.0), t_end=2.0)
        grid = manual_grid(1.0, 6.0, 0.1, 0.5, 1.0, 2.0)
        with pytest.raises(StabilityError):
            solve_phi(p, np.ones(grid.nx), grid)

    def test_phi_shape_mismatch(self):
        p = ModelParams()
        grid = build_grid(p, h=0.25)
        with pytest.raises(ValueError):
            solve_phi(p, np.ones(grid.nx + 1), grid)

    def test_backends_bit_identical(self):
        p = ModelParams(t_end=3.0)
        grid = build_grid(p, h=0.25)
        rng = np.random.default_rng(17)
        phi = rng.uniform(0.0, 6.0, grid.nx)
        a = solve_phi(p, phi, grid, backend="numba")
        b = solve_phi(p, phi, grid, backend="python")
        assert np.array_equal(a.values, b.values)

    def test_unknown_backend(self):
        p = ModelParams(t_end=2.0)
        grid = build_grid(p, h=0.25)
        with pytest.raises(ValueError):
            solve_phi(p, np.ones(grid.nx), grid, backend="fortran")

    def test_field_values_read_only(self):
        p = ModelParams(t_end=2.0)
        grid = build_grid(p, h=0.25)
        fld = solve_phi(p, np.ones(grid.nx), grid)
        with pytest.raises(ValueError):
            fld.values[0, 0] = 99.0


class TestObserve:
    def setup_method(self):
        self.params = ModelParams()
        self.grid = build_grid(self.params, h=0.05)

    def test_equilibrium_observation(self):
        fld = solve_phi(self.params, np.full(self.grid.nx, self.params.K), self.grid)
        m = observe(fld, [1.0, 3.0, 5.0], [3.0, 12.0, 24.0])
        np.testing.assert_allclose(m, self.params.K, atol=1e-12)

    def test_reference_layout_shape(self):
        fld = solve_phi(self.params, np.full(self.grid.nx, 2.0), self.grid)
        m = observe(fld, np.arange(1.0, 6.0), np.arange(3.0, 25.0))
        assert m.shape == (5, 22)

    def test_single_node_at_initial_time(self):
        from dlsource.model import spline_phi

        src = SourceParam(build_knots(6), np.array([5.8, 1.7, 1.9, 1.0, 0.95, 0.7]))
        fld = solve(self.params, src, self.grid)
        got = observe(fld, [2.0], [1.0])[0, 0]
        assert got == pytest.approx(spline_phi(src, 2.0), abs=1e-12)

    def test_values_match_field_entries(self):
        rng = np.random.default_rng(23)
        fld = solve_phi(self.params, rng.uniform(0, 6, self.grid.nx), self.grid)
        m = observe(fld, [2.0, 4.0], [5.0, 7.0])
        nsub = round(1.0 / self.grid.tau)
        xi = [round((2.0 - 1.0) / 0.05), round((4.0 - 1.0) / 0.05)]
        ti = [4 * nsub, 6 * nsub]
        for a, x in enumerate(xi):
            for b, t in enumerate(ti):
                assert m[a, b] == fld.values[t, x]

    def test_off_node_requests_rejected(self):
        fld = solve_phi(self.params, np.full(self.grid.nx, 2.0), self.grid)
        with pytest.raises(GridAlignmentError):
            observe(fld, [1.33], [3.0])
        with pytest.raises(GridAlignmentError):
            observe(fld, [2.0], [3.0001])
        with pytest.raises(GridAlignmentError):
            observe(fld, [2.0], [25.0])
        with pytest.raises(GridAlignmentError):
            observe(fld, [0.5], [3.0])


class TestFieldCsv:
    def test_round_trip(self, tmp_path):
        p = ModelParams(t_end=4.0)
        grid = build_grid(p, h=0.25)
        rng = np.random.default_rng(29)
        fld = solve_phi(p, rng.uniform(0, 6, grid.nx), grid)
        path = tmp_path / "field.csv"
        fld.to_csv(path, t_points=[1.0, 3.0])
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        assert header == ["x", "t=1", "t=3"]
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        np.testing.assert_allclose(data[:, 0], grid.x_nodes, atol=0)
        nsub = round(1.0 / grid.tau)
        np.testing.assert_allclose(data[:, 1], fld.values[0], rtol=1e-15)
        np.testing.assert_allclose(data[:, 2], fld.values[2 * nsub], rtol=1e-15)

    def test_shape_mismatch_rejected(self):
        p = ModelParams(t_end=2.0)
        grid = build_grid(p, h=0.25)
        with pytest.raises(ValueError):
            Field(grid=grid, values=np.zeros((2, 2)))

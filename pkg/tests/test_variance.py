"""Variance process: generators, eigensystems, exact evolution, sup errors."""

import numpy as np
import pytest
from scipy.linalg import expm

from opvol.operators import ProjectionSpec, norm, project_operator
from opvol.processes import CoupledJumpStream, JumpLaw, PoissonClock, sample_clock, sample_jump_stream, stream
from opvol.variance import (
    GeneratorSpec,
    NotNormal,
    apply_generator,
    build_grid,
    check_positivity_conditions,
    eigen_tail_sup_sq,
    evolve_variance,
    generator_eigensystem,
    generator_matrix,
    generator_op_norm,
    karhunen_loeve_spectrum,
    truncate_generator,
    variance_sup_error,
)


def empty_stream(d=4, levels=(2,)):
    clock = PoissonClock.empty(rate=0.0, horizon=1.0)
    return CoupledJumpStream(clock=clock, ys=np.empty((0, d)), levels=levels)


def one_jump_stream(y, t=0.4, levels=(2,)):
    y = np.asarray(y, dtype=float)
    clock = PoissonClock(rate=1.0, horizon=1.0, times=np.array([t]))
    return CoupledJumpStream(clock=clock, ys=y[None], levels=levels)


def direct_path_values(v0, spec, jump_stream, grid, level=None):
    """Independent route: V(t) = e^{Kt} vec(V0) + sum e^{K(t-T_i)} vec(X_i)
    with the explicit vec-space generator matrix."""
    K = generator_matrix(spec)
    d = v0.shape[0]
    jumps = jump_stream.jumps if level is None else jump_stream.approx_jumps(level)
    jt = jump_stream.clock.times
    out = np.empty((grid.size, d, d))
    for g in range(grid.size):
        t = grid.times[g]
        v = expm(K * t) @ v0.reshape(-1)
        for i, ti in enumerate(jt):
            include = ti < t if grid.is_left[g] else ti <= t
            if include:
                v = v + expm(K * (t - ti)) @ jumps[i].reshape(-1)
        out[g] = v.reshape(d, d)
    return out


class TestGeneratorSpec:
    def test_kind_validation(self):
        with pytest.raises(ValueError):
            GeneratorSpec(kind="rotation", C=np.eye(2))
        with pytest.raises(ValueError):
            GeneratorSpec(kind="sandwich")
        with pytest.raises(ValueError):
            GeneratorSpec(kind="general")

    def test_sandwich_action(self):
        rng = np.random.default_rng(0)
        C, T = rng.standard_normal((2, 5, 5))
        spec = GeneratorSpec(kind="sandwich", C=C)
        np.testing.assert_allclose(apply_generator(spec, T), C @ T @ C.T, rtol=1e-12)

    def test_sylvester_action(self):
        rng = np.random.default_rng(1)
        C, T = rng.standard_normal((2, 5, 5))
        spec = GeneratorSpec(kind="sylvester", C=C)
        np.testing.assert_allclose(apply_generator(spec, T), C @ T + T @ C.T, rtol=1e-12)

    def test_general_action(self):
        rng = np.random.default_rng(2)
        K = rng.standard_normal((9, 9))
        T = rng.standard_normal((3, 3))
        spec = GeneratorSpec(kind="general", action=K)
        np.testing.assert_allclose(
            apply_generator(spec, T), (K @ T.reshape(-1)).reshape(3, 3), rtol=1e-12
        )

    def test_matrix_matches_action(self):
        rng = np.random.default_rng(3)
        C = rng.standard_normal((4, 4))
        T = rng.standard_normal((4, 4))
        for kind in ("sandwich", "sylvester"):
            spec = GeneratorSpec(kind=kind, C=C)
            K = generator_matrix(spec)
            np.testing.assert_allclose(
                (K @ T.reshape(-1)).reshape(4, 4), apply_generator(spec, T), rtol=1e-11
            )

    def test_matrix_matches_action_compressed(self):
        rng = np.random.default_rng(4)
        C = rng.standard_normal((4, 4))
        T = rng.standard_normal((4, 4))
        P = ProjectionSpec.level(4, 4)
        spec = truncate_generator(GeneratorSpec(kind="sylvester", C=C), P)
        K = generator_matrix(spec)
        np.testing.assert_allclose(
            (K @ T.reshape(-1)).reshape(4, 4), apply_generator(spec, T), rtol=1e-11
        )


class TestEigensystem:
    def test_sandwich_formula(self):
        spec = GeneratorSpec.diagonal("sandwich", [0.5, 0.25])
        np.testing.assert_allclose(
            generator_eigensystem(spec), [[0.25, 0.125], [0.125, 0.0625]], atol=1e-14
        )

    def test_sylvester_formula(self):
        spec = GeneratorSpec.diagonal("sylvester", [0.5, 0.25])
        np.testing.assert_allclose(
            generator_eigensystem(spec), [[1.0, 0.75], [0.75, 0.5]], atol=1e-14
        )

    def test_karhunen_loeve_head(self):
        lam = karhunen_loeve_spectrum(8)
        assert lam[0] == pytest.approx(4.0 / np.pi**2, abs=1e-12)
        assert lam[1] == pytest.approx((2.0 / (3 * np.pi)) ** 2, abs=1e-12)

    def test_eigen_action_identity(self):
        # c(e_j (x) e_k) = Lambda[j,k] e_j (x) e_k for diagonal C
        lam = karhunen_loeve_spectrum(4)
        for kind in ("sandwich", "sylvester"):
            spec = GeneratorSpec.diagonal(kind, lam)
            Lam = generator_eigensystem(spec)
            for j in range(4):
                for k in range(4):
                    E = np.zeros((4, 4))
                    E[j, k] = 1.0
                    np.testing.assert_allclose(
                        apply_generator(spec, E), Lam[j, k] * E, atol=1e-10
                    )

    def test_not_normal(self):
        C = np.array([[1.0, 1.0], [0.0, 1.0]])
        with pytest.raises(NotNormal):
            generator_eigensystem(GeneratorSpec(kind="sylvester", C=C))

    def test_complex_spectrum_rejected(self):
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])  # normal, eigenvalues +-i
        with pytest.raises(NotNormal):
            generator_eigensystem(GeneratorSpec(kind="sylvester", C=rot))

    def test_symmetric_nondiagonal(self):
        C = np.array([[1.0, 0.3], [0.3, 0.5]])
        lam = np.linalg.eigvalsh(C)
        spec = GeneratorSpec(kind="sandwich", C=C)
        np.testing.assert_allclose(generator_eigensystem(spec), np.outer(lam, lam), atol=1e-12)


class TestTruncation:
    def test_full_projection_is_identity(self):
        spec = GeneratorSpec.diagonal("sylvester", -karhunen_loeve_spectrum(6))
        full = truncate_generator(spec, ProjectionSpec.full(6))
        assert generator_op_norm(full) == pytest.approx(generator_op_norm(spec), rel=1e-12)
        rng = np.random.default_rng(5)
        T = rng.standard_normal((6, 6))
        np.testing.assert_allclose(apply_generator(full, T), apply_generator(spec, T), atol=1e-12)

    def test_contraction_of_op_norm(self):
        spec = GeneratorSpec.diagonal("sylvester", -karhunen_loeve_spectrum(8))
        for n in (2, 4, 6):
            trunc = truncate_generator(spec, ProjectionSpec.level(n, 8))
            assert generator_op_norm(trunc) <= generator_op_norm(spec) + 1e-14

    def test_double_truncation_rejected(self):
        spec = GeneratorSpec.diagonal("sylvester", [1.0, 2.0])
        trunc = truncate_generator(spec, ProjectionSpec.level(2, 2))
        with pytest.raises(ValueError):
            truncate_generator(trunc, ProjectionSpec.level(2, 2))

    def test_top_m_truncation_op_norm(self):
        # keeping the m largest |Lambda| leaves the (m+1)-th as the difference norm
        lam = np.array([0.9, 0.5, 0.2])
        spec = GeneratorSpec.diagonal("sandwich", lam)
        Lam = generator_eigensystem(spec)
        order = np.argsort(Lam.reshape(-1))[::-1]
        m = 3
        pairs = frozenset(
            (int(p // 3) + 1, int(p % 3) + 1) for p in order[:m]
        )
        P = ProjectionSpec(dim=3, pairs=pairs)
        trunc = truncate_generator(spec, P)
        Kdiff = generator_matrix(spec) - generator_matrix(trunc)
        diff_norm = np.linalg.svd(Kdiff, compute_uv=False)[0]
        expected = np.sort(Lam.reshape(-1))[::-1][m]
        assert diff_norm == pytest.approx(expected, rel=1e-12)

    def test_tail_action_identity(self):
        # ||(c - c^n) T||^2 = sum over the complement of Lambda^2 <T, E>^2
        lam = -karhunen_loeve_spectrum(6)
        spec = GeneratorSpec.diagonal("sylvester", lam)
        P = ProjectionSpec.level(5, 6)
        trunc = truncate_generator(spec, P)
        rng = np.random.default_rng(6)
        Lam = generator_eigensystem(spec)
        for _ in range(20):
            T = rng.standard_normal((6, 6))
            diff = apply_generator(spec, T) - apply_generator(trunc, T)
            lhs = norm(diff, "hs") ** 2
            rhs = float(np.sum((Lam**2 * T**2)[~P.mask]))
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)

    def test_tail_sup_bound(self):
        # ||c - c^n||_op^2 <= 2 sup tail Lambda^2, and for tensor-diagonal c the
        # difference norm equals the tail sup exactly
        spec = GeneratorSpec.diagonal("sylvester", -karhunen_loeve_spectrum(8))
        Lam = generator_eigensystem(spec)
        for n in (2, 4, 6):
            P = ProjectionSpec.level(n, 8)
            trunc = truncate_generator(spec, P)
            Kdiff = generator_matrix(spec) - generator_matrix(trunc)
            diff_norm = np.linalg.svd(Kdiff, compute_uv=False)[0]
            tail_sup_sq = eigen_tail_sup_sq(spec, P)
            assert diff_norm**2 <= 2.0 * tail_sup_sq + 1e-14
            assert diff_norm == pytest.approx(np.sqrt(tail_sup_sq), rel=1e-11)
            assert tail_sup_sq == pytest.approx(float(np.max(Lam[~P.mask] ** 2)), abs=1e-15)


class TestGrid:
    def test_structure(self):
        grid = build_grid(1.0, 4, np.array([0.3, 0.75]))
        # jump times appear twice: left slot then right slot
        for t in (0.3, 0.75):
            idx = np.flatnonzero(grid.times == t)
            assert idx.size == 2
            assert grid.is_left[idx[0]] and not grid.is_left[idx[1]]
            assert grid.jump_index[idx[1]] >= 0
        assert grid.times[0] == 0.0 and grid.times[-1] == 1.0
        assert np.all(np.diff(grid.times) >= 0)

    def test_right_slots_cover_distinct_times(self):
        grid = build_grid(2.0, 5, np.array([0.4, 1.6]))
        np.testing.assert_array_equal(np.unique(grid.times), grid.distinct_times)

    def test_jump_on_uniform_point(self):
        grid = build_grid(1.0, 4, np.array([0.5]))
        idx = np.flatnonzero(grid.times == 0.5)
        assert idx.size == 2

    def test_validation(self):
        with pytest.raises(ValueError):
            build_grid(0.0, 4, np.empty(0))
        with pytest.raises(ValueError):
            build_grid(1.0, 0, np.empty(0))


class TestEvolution:
    def test_zero_generator_no_jumps(self):
        spec = GeneratorSpec.diagonal("sylvester", np.zeros(4))
        v0 = np.diag([1.0, 2.0, 3.0, 4.0])
        grid = build_grid(1.0, 8, np.empty(0))
        path = evolve_variance(v0, spec, empty_stream(4), grid)
        for g in range(grid.size):
            np.testing.assert_array_equal(path.values[g], v0)

    def test_zero_initial_no_jumps(self):
        spec = GeneratorSpec.diagonal("sandwich", [0.5, 0.25])
        grid = build_grid(1.0, 8, np.empty(0))
        path = evolve_variance(np.zeros((2, 2)), spec, empty_stream(2, levels=(1,)), grid)
        np.testing.assert_array_equal(path.values, 0.0)

    def test_scalar_generator_closed_form(self):
        # sylvester with C = (a/2) I acts as multiplication by a
        a = -0.7
        d = 3
        spec = GeneratorSpec.diagonal("sylvester", np.full(d, a / 2))
        y = np.array([1.0, 0.5, 0.25])
        js = one_jump_stream(y, t=0.4, levels=(2,))
        v0 = np.diag([1.0, 0.5, 0.2])
        grid = build_grid(1.0, 10, js.clock.times)
        path = evolve_variance(v0, spec, js, grid)
        X1 = np.outer(y, y)
        for g in range(grid.size):
            t = grid.times[g]
            expected = np.exp(a * t) * v0
            has_jump = 0.4 < t or (t == 0.4 and not grid.is_left[g])
            if has_jump:
                expected = expected + np.exp(a * (t - 0.4)) * X1
            np.testing.assert_allclose(path.values[g], expected, atol=1e-12)

    def test_left_limit_excludes_jump(self):
        spec = GeneratorSpec.diagonal("sylvester", np.zeros(2))
        y = np.array([1.0, 1.0])
        js = one_jump_stream(y, t=0.5, levels=(1,))
        grid = build_grid(1.0, 2, js.clock.times)
        path = evolve_variance(np.zeros((2, 2)), spec, js, grid)
        idx = np.flatnonzero(grid.times == 0.5)
        np.testing.assert_array_equal(path.values[idx[0]], 0.0)
        np.testing.assert_array_equal(path.values[idx[1]], np.outer(y, y))

    def test_missing_jump_times_rejected(self):
        spec = GeneratorSpec.diagonal("sylvester", np.zeros(2))
        js = one_jump_stream(np.ones(2), t=0.5, levels=(1,))
        grid = build_grid(1.0, 4, np.empty(0))
        with pytest.raises(ValueError):
            evolve_variance(np.eye(2), spec, js, grid)

    @pytest.mark.parametrize(
        "make_spec",
        [
            lambda: GeneratorSpec.diagonal("sylvester", -karhunen_loeve_spectrum(4)),
            lambda: GeneratorSpec.diagonal("sandwich", [0.8, 0.4, 0.2, 0.1]),
            lambda: GeneratorSpec(
                kind="sylvester", C=np.linalg.qr(np.random.default_rng(7).standard_normal((4, 4)))[0] * 0.5
            ),
            lambda: GeneratorSpec(
                kind="sandwich", C=np.random.default_rng(8).standard_normal((4, 4)) * 0.4
            ),
            lambda: truncate_generator(
                GeneratorSpec.diagonal("sylvester", -karhunen_loeve_spectrum(4)),
                ProjectionSpec.level(4, 4),
            ),
            lambda: truncate_generator(
                GeneratorSpec(kind="sylvester", C=np.random.default_rng(9).standard_normal((4, 4)) * 0.3),
                ProjectionSpec.level(5, 4),
            ),
        ],
        ids=["diag-sylv", "diag-sand", "dense-sylv", "dense-sand", "trunc-diag", "trunc-dense"],
    )
    def test_dual_route_against_direct_formula(self, make_spec):
        spec = make_spec()
        rng = stream(17, 2, 0)
        clock = sample_clock(3.0, 1.0, stream(17, 1, 0))
        js = sample_jump_stream(clock, JumpLaw.geometric(4), (2,), rng)
        A = np.random.default_rng(10).standard_normal((4, 4))
        v0 = A @ A.T / 4
        grid = build_grid(1.0, 6, clock.times)
        path = evolve_variance(v0, spec, js, grid)
        expected = direct_path_values(v0, spec, js, grid)
        np.testing.assert_allclose(path.values, expected, rtol=1e-9, atol=1e-12)

    def test_approx_path_uses_truncated_jumps(self):
        spec = GeneratorSpec.diagonal("sylvester", np.zeros(4))
        clock = sample_clock(2.0, 1.0, stream(18, 1, 0))
        js = sample_jump_stream(clock, JumpLaw.geometric(4), (2,), stream(18, 2, 0))
        grid = build_grid(1.0, 4, clock.times)
        path_n = evolve_variance(np.zeros((4, 4)), spec, js, grid, level=2)
        expected = direct_path_values(np.zeros((4, 4)), spec, js, grid, level=2)
        np.testing.assert_allclose(path_n.values, expected, rtol=1e-9, atol=1e-14)


class TestSupError:
    def test_identical_paths(self):
        spec = GeneratorSpec.diagonal("sylvester", -karhunen_loeve_spectrum(4))
        clock = sample_clock(2.0, 1.0, stream(19, 1, 0))
        js = sample_jump_stream(clock, JumpLaw.geometric(4), (4,), stream(19, 2, 0))
        grid = build_grid(1.0, 5, clock.times)
        v0 = np.diag([1.0, 0.5, 0.25, 0.125])
        a = evolve_variance(v0, spec, js, grid)
        b = evolve_variance(v0, spec, js, grid, level=4)
        assert variance_sup_error(a, b, "hs") == 0.0

    def test_single_jump_difference(self):
        # c = 0, V0^n = V0: the error path is 0 then X1 - X1^n, so the sup is its norm
        spec = GeneratorSpec.diagonal("sylvester", np.zeros(4))
        y = np.array([1.0, 0.7, 0.4, 0.2])
        js = one_jump_stream(y, t=0.3, levels=(2,))
        grid = build_grid(1.0, 4, js.clock.times)
        v0 = np.eye(4)
        full = evolve_variance(v0, spec, js, grid)
        approx = evolve_variance(v0, spec, js, grid, level=2)
        D = js.jumps[0] - js.approx_jumps(2)[0]
        for mode in ("hs", "op", "trace"):
            assert variance_sup_error(full, approx, mode) == pytest.approx(norm(D, mode), rel=1e-12)

    def test_grid_mismatch_rejected(self):
        spec = GeneratorSpec.diagonal("sylvester", np.zeros(2))
        g1 = build_grid(1.0, 4, np.empty(0))
        g2 = build_grid(1.0, 5, np.empty(0))
        a = evolve_variance(np.eye(2), spec, empty_stream(2, (1,)), g1)
        b = evolve_variance(np.eye(2), spec, empty_stream(2, (1,)), g2)
        with pytest.raises(ValueError):
            variance_sup_error(a, b)

    def test_pathwise_exponential_bound(self):
        # per-path: sup ||dV|| <= e^{||c|| T} (||dV0|| + sum ||dX_i||), every norm
        spec = GeneratorSpec.diagonal("sylvester", -karhunen_loeve_spectrum(8))
        cn = generator_op_norm(spec)
        v0 = np.diag(0.5 ** np.arange(1, 9))
        P = ProjectionSpec.corner(4, 8)
        v0n = project_operator(v0, P)
        for rep in range(50):
            clock = sample_clock(1.0, 1.0, stream(23, 1, rep))
            js = sample_jump_stream(clock, JumpLaw.geometric(8), (4,), stream(23, 2, rep))
            grid = build_grid(1.0, 20, clock.times)
            full = evolve_variance(v0, spec, js, grid)
            approx_vals = evolve_variance(v0n, spec, js, grid, level=4)
            diffs = js.jumps - js.approx_jumps(4)
            for mode in ("hs", "op", "trace"):
                lhs = variance_sup_error(full, approx_vals, mode)
                rhs = np.exp(cn * 1.0) * (
                    norm(v0 - v0n, mode) + sum(norm(D, mode) for D in diffs)
                )
                assert lhs <= rhs * (1 + 1e-12)


class TestPositivity:
    def make_stream(self, rep=0):
        clock = sample_clock(2.0, 1.0, stream(29, 1, rep))
        return sample_jump_stream(clock, JumpLaw.geometric(4), (2,), stream(29, 2, rep))

    def test_sylvester_all_pass(self):
        spec = GeneratorSpec(kind="sylvester", C=np.random.default_rng(11).standard_normal((4, 4)))
        report = check_positivity_conditions(spec, self.make_stream(), np.eye(4))
        assert report.all_pass

    def test_sandwich_all_pass(self):
        spec = GeneratorSpec(kind="sandwich", C=np.random.default_rng(12).standard_normal((4, 4)))
        report = check_positivity_conditions(spec, self.make_stream(), np.eye(4))
        assert report.all_pass

    def test_indefinite_initial_fails(self):
        spec = GeneratorSpec.diagonal("sylvester", np.zeros(4))
        report = check_positivity_conditions(
            spec, self.make_stream(), np.diag([1.0, -1.0, 0.0, 0.0])
        )
        assert not report.initial_psd
        assert report.jumps_psd

    def test_simulated_paths_stay_psd(self):
        # under the structural conditions, min eigenvalue >= -tol at every grid point
        spec = GeneratorSpec.diagonal("sylvester", -karhunen_loeve_spectrum(6))
        v0 = np.diag(0.5 ** np.arange(1, 7))
        for rep in range(20):
            clock = sample_clock(2.0, 1.0, stream(31, 1, rep))
            js = sample_jump_stream(clock, JumpLaw.geometric(6), (3,), stream(31, 2, rep))
            grid = build_grid(1.0, 10, clock.times)
            for level in (None, 3):
                v00 = v0 if level is None else project_operator(v0, ProjectionSpec.corner(3, 6))
                path = evolve_variance(v00, spec, js, grid, level=level)
                w = np.linalg.eigvalsh(path.values)
                opn = np.max(np.abs(w))
                assert w.min() >= -1e-9 * (1 + opn)


class TestDiagonalTailIdentity:
    def test_eigenvalue_tail(self):
        # ||T - T^n||^2 = sum_{k > n/2} lambda_k^2 for diagonal T under level(n)
        lam = 0.5 ** np.arange(1, 9)
        T = np.diag(lam)
        for n in (2, 3, 4, 5, 6, 7):
            P = ProjectionSpec.level(n, 8)
            err2 = norm(T - project_operator(T, P), "hs") ** 2
            tail = float(np.sum(lam[int(np.floor(n / 2)):] ** 2))
            assert err2 == pytest.approx(tail, abs=1e-12)

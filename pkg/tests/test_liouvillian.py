import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defosc.algebra import DeformationSpec, ModeParams, energy_levels, ladder_elements, omega_shifts
from defosc.errors import UnsupportedModelError
from defosc.liouvillian import (
    BathModel,
    DensityMatrix,
    apply_generator,
    assemble_generator,
    bath_tables,
    max_stable_step,
    positivity_check,
    squeezed_preset,
    thermal_coefficients,
    thermal_diffusion,
)

IDENT = DeformationSpec.identity()


def random_state(rng, dim):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


def random_hermitian_unit_trace(rng, dim):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (x + x.conj().T)
    return h - (np.trace(h).real - 1.0) / dim * np.eye(dim)


def master_rhs(spec, bath, mode, rho):
    """Operator-form oracle built from truncated ladder matrices.

    -i[H, rho] + X(rho) + X(rho^dag)^dag with
    X(r) = [[D a, r], a^dag] - [[a^dag G, r], a^dag] - (lam/2)[a^dag, a r + r a],
    where D = diag D_plus(Omega(n)) and G = diag(D_minus + i D_pq).
    """
    dim = mode.dim
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)
    ad = a.conj().T
    d_plus, g = bath_tables(spec, bath, mode)
    dmat = np.diag(d_plus).astype(complex)
    gmat = np.diag(g)
    h = np.diag(energy_levels(spec, mode))
    lam = bath.lam

    def c(x, y):
        return x @ y - y @ x

    def half(r):
        return c(c(dmat @ a, r), ad) - c(c(ad @ gmat, r), ad) - 0.5 * lam * c(ad, a @ r + r @ a)

    return -1j * c(h, rho) + half(rho) + half(rho.conj().T).conj().T


class TestCoefficients:
    def test_zero_temperature(self):
        d = thermal_coefficients(IDENT, BathModel.thermal(1.0, math.inf), ModeParams(1.0, 8), 3)
        assert d == (0.5, 0.0, 0.0)

    def test_finite_temperature(self):
        d, _, _ = thermal_coefficients(IDENT, BathModel.thermal(1.0, 2.0), ModeParams(1.0, 8), 2)
        assert d == pytest.approx(0.5 / math.tanh(1.0), rel=1e-14)
        assert d == pytest.approx(0.6565177, abs=1e-7)

    def test_deformed_uses_omega_shift(self):
        spec = DeformationSpec.q_deformed(0.1)
        d, _, _ = thermal_coefficients(spec, BathModel.thermal(1.0, 2.0), ModeParams(1.0, 8), 0)
        assert abs(d - 0.5 / math.tanh(math.cosh(0.1))) <= 1e-12

    def test_non_thermal_rejected(self):
        with pytest.raises(UnsupportedModelError):
            thermal_coefficients(IDENT, BathModel.squeezed(1, 0), ModeParams(1.0, 4), 0)

    @pytest.mark.parametrize("beta", [0.0, -1.0, math.nan])
    def test_bad_beta(self, beta):
        with pytest.raises(ValueError):
            BathModel.thermal(1.0, beta)

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            BathModel.thermal(-0.1, 1.0)


class TestSqueezedPreset:
    def test_vacuum(self):
        b = squeezed_preset(1.0, 0.0, 0.0)
        assert (b.lam, b.d_plus, b.d_minus, b.d_pq) == (1.0, 0.5, 0.0, 0.0)

    def test_thermal_like(self):
        b = squeezed_preset(2.0, 1.0, 0.0)
        assert b.d_plus == 3.0 and b.lam == 2.0

    def test_combined_coefficient(self):
        b = squeezed_preset(1.0, 1.0, 0.5)
        assert b.d_minus + 1j * b.d_pq == -0.5

    def test_complex_split(self):
        b = squeezed_preset(2.0, 1.0, 0.25 + 0.5j)
        assert b.d_minus == -0.5 and b.d_pq == -1.0

    def test_tables_from_squeezed_model(self):
        mode = ModeParams(1.0, 5)
        d, g = bath_tables(IDENT, BathModel.squeezed(1.0, 1.0, 0.3j), mode)
        np.testing.assert_array_equal(d, np.full(5, 1.5))
        np.testing.assert_array_equal(g, np.full(5, -0.3j))

    def test_errors(self):
        with pytest.raises(ValueError):
            squeezed_preset(-1.0, 0.0, 0.0)


class TestPositivity:
    @pytest.mark.parametrize("beta", [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, math.inf])
    def test_thermal_passes(self, beta):
        for shift in (1.0, 1.3, 7.0):
            assert positivity_check(*thermal_diffusion(0.7, beta, shift), 0.7)

    def test_violating_triple(self):
        lam = 0.8
        assert not positivity_check(lam / 4, lam / 4, 0.0, lam)

    def test_no_damping(self):
        assert positivity_check(1.0, 1.0, 0.0, 0.0)

    def test_needs_positive_diagonals(self):
        assert not positivity_check(0.0, 1.0, 0.0, 0.0)
        assert not positivity_check(-1.0, -1.0, 0.0, 0.0)


def _models():
    return [
        (IDENT, BathModel.thermal(0.5, math.inf)),
        (IDENT, BathModel.thermal(0.3, 1.0)),
        (DeformationSpec.q_deformed(0.3), BathModel.thermal(0.7, 0.5)),
        (DeformationSpec.q_deformed(0.2), BathModel.squeezed(0.4, 1.2, 0.3 - 0.5j)),
        (IDENT, BathModel.squeezed(1.0, 0.0, 0.0)),
        (
            DeformationSpec.custom(np.linspace(1.0, 1.2, 30)),
            BathModel.custom(0.3, np.linspace(0.2, 0.9, 20),
                             np.linspace(-0.1, 0.2, 20) + 0.05j, np.linspace(0.0, 0.3, 20)),
        ),
    ]


class TestGenerator:
    def test_two_level_zero_temperature(self):
        lam = 0.7
        gen = assemble_generator(IDENT, BathModel.thermal(lam, math.inf), ModeParams(1.0, 2))
        out = apply_generator(gen, DensityMatrix.fock(2, 1))
        assert out[0, 0] == pytest.approx(2 * lam, rel=1e-15)
        assert out[1, 1] == pytest.approx(-2 * lam, rel=1e-15)

    def test_vectorized_index(self):
        gen = assemble_generator(IDENT, BathModel.thermal(1.0, 1.0), ModeParams(1.0, 4))
        assert gen.matrix.shape == (16, 16)
        assert gen.matrix.getnnz(axis=1).max() <= 9

    def test_boltzmann_fixed_point(self):
        from defosc.steady import thermal_distribution
        for spec in (IDENT, DeformationSpec.q_deformed(0.25)):
            mode = ModeParams(1.0, 16)
            pops, _ = thermal_distribution(spec, mode, 1.5)
            gen = assemble_generator(spec, BathModel.thermal(0.8, 1.5), mode)
            out = apply_generator(gen, np.diag(pops.p).astype(complex))
            assert np.max(np.abs(out)) <= 1e-10

    def test_no_damping_is_commutator(self):
        spec = DeformationSpec.q_deformed(0.4)
        mode = ModeParams(1.3, 6)
        rho = random_state(np.random.default_rng(3), 6)
        gen = assemble_generator(spec, BathModel.thermal(0.0, 1.0), mode)
        out = apply_generator(gen, rho)
        e = energy_levels(spec, mode)
        np.testing.assert_allclose(out, -1j * (e[:, None] - e[None, :]) * rho, atol=1e-14)
        assert np.all(np.diag(out) == 0)

    def test_diagonal_decoupling_exact(self):
        for spec, bath in _models()[:3]:
            mode = ModeParams(1.0, 8)
            gen = assemble_generator(spec, bath, mode)
            out = apply_generator(gen, np.diag(np.linspace(0.05, 0.2, 8)).astype(complex))
            assert np.all(out[~np.eye(8, dtype=bool)] == 0)

    @pytest.mark.parametrize("idx", range(6))
    def test_matches_operator_form(self, idx):
        spec, bath = _models()[idx]
        mode = ModeParams(1.1, 10)
        rng = np.random.default_rng(idx)
        gen = assemble_generator(spec, bath, mode)
        for _ in range(3):
            rho = random_state(rng, 10)
            np.testing.assert_allclose(
                apply_generator(gen, rho), master_rhs(spec, bath, mode, rho), atol=2e-14, rtol=0
            )

    @pytest.mark.parametrize("idx", range(6))
    def test_interior_matches_index_formula(self, idx):
        spec, bath = _models()[idx]
        mode = ModeParams(1.0, 9)
        rho = random_state(np.random.default_rng(40 + idx), 9)
        out = apply_generator(assemble_generator(spec, bath, mode), rho)
        ref = index_formula(spec, bath, mode, rho)
        # rows/columns touching the top level carry the truncation closure
        inner = slice(0, mode.dim - 1)
        np.testing.assert_allclose(out[inner, inner], ref[inner, inner], atol=1e-13, rtol=0)

    @pytest.mark.parametrize("dim", [2, 4, 8, 16])
    def test_trace_and_hermiticity(self, dim):
        rng = np.random.default_rng(dim)
        models = _models()
        worst_trace = worst_herm = 0.0
        for i in range(50):
            spec, bath = models[i % len(models)]
            gen = assemble_generator(spec, bath, ModeParams(1.0, dim))
            out = apply_generator(gen, random_hermitian_unit_trace(rng, dim))
            worst_trace = max(worst_trace, abs(np.trace(out)))
            worst_herm = max(worst_herm, np.max(np.abs(out - out.conj().T)))
        assert worst_trace <= 1e-12
        assert worst_herm <= 1e-12

    @pytest.mark.parametrize("dim", [2, 5, 16])
    def test_matrix_free_agrees(self, dim):
        rng = np.random.default_rng(100 + dim)
        for spec, bath in _models():
            mode = ModeParams(1.0, dim)
            full = assemble_generator(spec, bath, mode)
            lazy = assemble_generator(spec, bath, mode, materialize=False)
            assert not lazy._sparse
            rho = random_state(rng, dim)
            np.testing.assert_allclose(apply_generator(lazy, rho), apply_generator(full, rho),
                                       atol=1e-14, rtol=0)

    def test_dimension_mismatch(self):
        gen = assemble_generator(IDENT, BathModel.thermal(1.0, 1.0), ModeParams(1.0, 4))
        with pytest.raises(ValueError):
            apply_generator(gen, np.eye(3) / 3)

    def test_short_custom_table(self):
        bath = BathModel.custom(0.1, [0.5, 0.5, 0.5])
        with pytest.raises(IndexError):
            assemble_generator(IDENT, bath, ModeParams(1.0, 4))
        with pytest.raises(IndexError):
            assemble_generator(DeformationSpec.custom([1.0] * 4), BathModel.thermal(1, 1),
                               ModeParams(1.0, 4))

    def test_step_bound_formula(self):
        spec = DeformationSpec.q_deformed(0.3)
        mode = ModeParams(2.0, 12)
        gen = assemble_generator(spec, BathModel.thermal(0.5, 1.0), mode)
        expected = 0.1 / (2.0 * omega_shifts(spec, 11) + 4 * 12 * np.max(gen.d_plus))
        assert max_stable_step(gen) == pytest.approx(expected, rel=1e-15)


def index_formula(spec, bath, mode, rho):
    """Literal number-basis right-hand side, evaluated with untruncated indices."""
    dim = mode.dim
    e = energy_levels(spec, mode)
    d_plus, g = bath_tables(spec, bath, mode)
    lam = bath.lam

    def dfun(k):
        return d_plus[k] if 0 <= k < dim else 0.0

    def gfun(k):
        return g[k] if 0 <= k < dim else 0.0

    def r(m, n):
        return rho[m, n] if 0 <= m < dim and 0 <= n < dim else 0.0

    out = np.zeros((dim, dim), dtype=complex)
    for m in range(dim):
        for n in range(dim):
            v = -1j * (e[m] - e[n]) * r(m, n)
            v -= ((m + 1) * dfun(m) + m * dfun(m - 1) + (n + 1) * dfun(n) + n * dfun(n - 1)) * r(m, n)
            v += lam * r(m, n)
            v += math.sqrt((m + 1) * (n + 1)) * (dfun(m) + dfun(n) + lam) * r(m + 1, n + 1)
            v += math.sqrt(m * n) * (dfun(m - 1) + dfun(n - 1) - lam) * r(m - 1, n - 1)
            v -= math.sqrt((m + 1) * n) * (np.conj(gfun(m)) + np.conj(gfun(n - 1))) * r(m + 1, n - 1)
            v -= math.sqrt(m * (n + 1)) * (gfun(m - 1) + gfun(n)) * r(m - 1, n + 1)
            v += math.sqrt((m + 1) * (m + 2)) * np.conj(gfun(m + 1)) * r(m + 2, n)
            v += math.sqrt((n + 1) * (n + 2)) * gfun(n + 1) * r(m, n + 2)
            v += math.sqrt(max(m * (m - 1), 0)) * gfun(m - 2) * r(m - 2, n)
            v += math.sqrt(max(n * (n - 1), 0)) * np.conj(gfun(n - 2)) * r(m, n - 2)
            out[m, n] = v
    return out


@settings(max_examples=40, deadline=None)
@given(
    tau=st.floats(0, 0.8),
    lam=st.floats(0, 2),
    beta=st.one_of(st.just(math.inf), st.floats(0.1, 10)),
    dim=st.integers(2, 12),
    seed=st.integers(0, 2**32 - 1),
)
def test_generator_conservation_property(tau, lam, beta, dim, seed):
    spec = DeformationSpec.q_deformed(tau)
    gen = assemble_generator(spec, BathModel.thermal(lam, beta), ModeParams(1.0, dim))
    rho = random_hermitian_unit_trace(np.random.default_rng(seed), dim)
    out = apply_generator(gen, rho)
    scale = max(1.0, float(np.max(np.abs(gen.coeffs))))
    assert abs(np.trace(out)) <= 1e-12 * scale
    assert np.max(np.abs(out - out.conj().T)) <= 1e-12 * scale


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([0.6, 0.6]))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.5, -0.5]))
    rho = DensityMatrix.pure([1, 1j])
    assert rho.data[0, 1] == pytest.approx(-0.5j)
    np.testing.assert_allclose(rho.populations, [0.5, 0.5])


def test_ladder_oracle_consistency():
    # the oracle's plain ladder matrices are those of the identity deformation
    a, _ = ladder_elements(IDENT, ModeParams(1.0, 5))
    np.testing.assert_allclose(a, np.diag(np.sqrt(np.arange(1, 5.0)), 1))

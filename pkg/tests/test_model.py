"""
コアモデルのテスト
物理パラメータ、スカラー不変量、二磁極の磁場
"""

import math
import os
import sys

import numpy as np
import pytest
from pydantic import ValidationError

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from errors import DomainError, ParameterValidationError, PoleProximityError
from model import (
    MU0,
    NDFEB_REFERENCE_SPECS,
    OrbitronParams,
    field_at,
    field_jacobian,
    from_magnet_specs,
    params_from_specs,
    scalar_invariants,
    vec3,
)
from shared_state import create_state


def _random_point(rng: np.random.Generator, h: float) -> np.ndarray:
    """磁極と z 軸から離れた点"""
    while True:
        x = rng.uniform(-3.0 * h, 3.0 * h, size=3)
        d_plus = np.linalg.norm(x - [0.0, 0.0, h])
        d_minus = np.linalg.norm(x + [0.0, 0.0, h])
        if min(d_plus, d_minus) > 0.2 * h and np.hypot(x[0], x[1]) > 0.1 * h:
            return x


class TestOrbitronParams:
    """物理パラメータのテスト"""

    @pytest.fixture
    def params(self):
        return params_from_specs(NDFEB_REFERENCE_SPECS)

    def test_reference_magnet_values(self, params):
        """Nd-Fe-B 円板から導出した定数"""
        assert params.M == pytest.approx(6.835e-3, rel=1e-3)
        assert params.mu == pytest.approx(0.18375, rel=1e-3)
        assert params.I_perp == pytest.approx(1.0423e-7, rel=1e-3)
        assert params.I_axial == pytest.approx(1.6746e-7, rel=1e-3)
        assert params.alpha == pytest.approx(9.594e6, rel=1e-3)
        assert params.h == 0.05
        assert params.mu0 == MU0

    def test_lambda0(self, params):
        assert params.lambda0 == pytest.approx(params.mu0 * params.kappa * params.mu, rel=1e-15)

    def test_guard_radius(self, params):
        assert params.guard_radius == pytest.approx(5e-5, rel=1e-12)

    def test_from_magnet_specs_matches_specs(self, params):
        """関数版とモデル版は同じ値になる"""
        built = from_magnet_specs(7.4e3, 0.25, 0.014, 0.006, 17.6, 0.05)
        assert built == params

    def test_from_magnet_specs_rejects_zero_density(self):
        with pytest.raises(ParameterValidationError):
            from_magnet_specs(0.0, 0.25, 0.014, 0.006, 17.6, 0.05)

    def test_rejects_non_positive_and_unknown_fields(self, params):
        values = params.model_dump()
        with pytest.raises(ValidationError):
            OrbitronParams(**{**values, "h": -0.05})
        with pytest.raises(ValidationError):
            OrbitronParams(**{**values, "kappa": float("nan")})
        with pytest.raises(ValidationError):
            OrbitronParams(**values, extra_field=1.0)

    def test_scaled_copy(self, params):
        doubled = params.scaled(kappa=2.0)
        assert doubled.lambda0 == pytest.approx(2.0 * params.lambda0, rel=1e-15)
        assert doubled.h == params.h
        assert params.kappa == 17.6


class TestVectorsAndInvariants:
    """ベクトル検証とスカラー不変量のテスト"""

    def test_vec3_rejects_bad_input(self):
        with pytest.raises(DomainError):
            vec3([1.0, 2.0])
        with pytest.raises(DomainError):
            vec3([1.0, float("inf"), 0.0])

    def test_invariants_match_dot_products(self):
        """不変量は内積から直接計算した値と一致する"""
        rng = np.random.default_rng(7)
        for _ in range(50):
            x = rng.normal(size=3)
            nu = rng.normal(size=3)
            state = create_state(x, np.zeros(3), nu, np.zeros(3), normalize=True)
            inv = scalar_invariants(state)
            r = np.linalg.norm(x)
            assert inv.r == pytest.approx(r, rel=1e-14)
            assert inv.c1 == pytest.approx(x[2] / r, rel=1e-13, abs=1e-14)
            assert inv.c2 == pytest.approx(np.dot(state.nu, x) / r, rel=1e-13, abs=1e-14)
            assert inv.c3 == state.nu[2]
            assert abs(inv.c1) <= 1.0 + 1e-12
            assert abs(inv.c2) <= 1.0 + 1e-12

    def test_invariants_are_rotation_invariant(self):
        """z 軸まわりの回転で不変"""
        x = np.array([0.04, -0.02, 0.01])
        nu = np.array([0.3, 0.5, -0.8])
        base = scalar_invariants(create_state(x, np.zeros(3), nu, np.zeros(3), normalize=True))
        angle = 1.234
        rot = np.array([
            [math.cos(angle), -math.sin(angle), 0.0],
            [math.sin(angle), math.cos(angle), 0.0],
            [0.0, 0.0, 1.0],
        ])
        rotated = scalar_invariants(
            create_state(rot @ x, np.zeros(3), rot @ nu, np.zeros(3), normalize=True)
        )
        assert rotated.r == pytest.approx(base.r, rel=1e-12)
        assert rotated.c1 == pytest.approx(base.c1, rel=1e-12)
        assert rotated.c2 == pytest.approx(base.c2, rel=1e-12)
        assert rotated.c3 == pytest.approx(base.c3, rel=1e-12)

    def test_origin_is_rejected(self):
        state = create_state(np.zeros(3), np.zeros(3), [0.0, 0.0, 1.0], np.zeros(3))
        with pytest.raises(DomainError):
            scalar_invariants(state)


class TestCoulombField:
    """二磁極の磁場のテスト"""

    @pytest.fixture
    def params(self):
        return params_from_specs(NDFEB_REFERENCE_SPECS)

    def test_field_at_origin(self, params):
        """原点では −μ₀κ/(2πh²) e_z"""
        expected = -params.mu0 * params.kappa / (2.0 * math.pi * params.h**2)
        np.testing.assert_allclose(field_at(params, [0.0, 0.0, 0.0]), [0.0, 0.0, expected], rtol=1e-14)

    def test_field_in_midplane_is_vertical(self, params):
        b = field_at(params, [0.075, 0.0, 0.0])
        assert b[0] == pytest.approx(0.0, abs=1e-15 * abs(b[2]))
        assert b[1] == 0.0
        assert b[2] < 0.0

    def test_divergence_and_curl_vanish(self, params):
        """ヤコビ行列のトレース (∇·B) と反対称部分 (∇×B) は 0"""
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = _random_point(rng, params.h)
            jac = field_jacobian(params, x)
            scale = np.max(np.abs(jac))
            assert abs(np.trace(jac)) < 1e-12 * scale
            np.testing.assert_allclose(jac, jac.T, rtol=0.0, atol=1e-12 * scale)

    def test_jacobian_matches_central_difference(self, params):
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = _random_point(rng, params.h)
            step = 1e-6 * params.h
            numeric = np.empty((3, 3))
            for j in range(3):
                e = np.zeros(3)
                e[j] = step
                numeric[:, j] = (field_at(params, x + e) - field_at(params, x - e)) / (2.0 * step)
            jac = field_jacobian(params, x)
            np.testing.assert_allclose(numeric, jac, rtol=0.0, atol=1e-6 * np.max(np.abs(jac)))

    def test_central_difference_divergence(self, params):
        """中心差分による ∇·B < 1e-6·|B|/δ"""
        rng = np.random.default_rng(5)
        delta = 1e-5 * params.h
        for _ in range(10):
            x = _random_point(rng, params.h)
            div = 0.0
            for j in range(3):
                e = np.zeros(3)
                e[j] = delta
                div += (field_at(params, x + e)[j] - field_at(params, x - e)[j]) / (2.0 * delta)
            assert abs(div) < 1e-6 * np.linalg.norm(field_at(params, x)) / delta

    @staticmethod
    def _flux(params, center, radius, n_theta=48, n_phi=48):
        """球面上の ∮B·dA (cosθ はガウス・ルジャンドル、φ は等間隔)"""
        cos_t, weights = np.polynomial.legendre.leggauss(n_theta)
        phis = 2.0 * math.pi * np.arange(n_phi) / n_phi
        total = 0.0
        for c, w in zip(cos_t, weights):
            s = math.sqrt(1.0 - c * c)
            for phi in phis:
                normal = np.array([s * math.cos(phi), s * math.sin(phi), c])
                b = field_at(params, np.asarray(center) + radius * normal)
                total += w * float(np.dot(b, normal))
        return total * radius**2 * (2.0 * math.pi / n_phi)

    def test_flux_through_large_sphere_vanishes(self, params):
        """両極を囲む球を貫く磁束は 0、一方の極だけを囲めば ±μ₀κ"""
        single = params.mu0 * params.kappa
        assert abs(self._flux(params, [0.0, 0.0, 0.0], 10.0 * params.h)) < 1e-6 * single
        assert self._flux(params, [0.0, 0.0, params.h], 0.5 * params.h) == pytest.approx(single, rel=1e-6)
        assert self._flux(params, [0.0, 0.0, -params.h], 0.5 * params.h) == pytest.approx(-single, rel=1e-6)

    def test_pole_guard(self, params):
        with pytest.raises(PoleProximityError) as exc_info:
            field_at(params, [0.0, 0.0, params.h + 1e-6])
        assert exc_info.value.exit_code == 2
        assert exc_info.value.distance < params.guard_radius
        # ガード半径の外側は評価できる
        field_at(params, [0.0, 0.0, params.h + 2.0 * params.guard_radius])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])

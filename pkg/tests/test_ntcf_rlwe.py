"""
Tests for the RLWE NTCF family: parameters, keys, inversion and claws.

Tests cover:
- build_params golden values and infeasible inputs
- Constraint checks on hand-built parameter sets
- Key generation and the claw relation x0 = x1 + s
- Chk_F agreement with the trapdoor inversion
- Densities, Hellinger bound and estimate
- Key file encodings
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from src.ntcf_rlwe import (
    HELLINGER_LIMIT,
    NtcfKey,
    NtcfTrapdoor,
    ParameterInfeasibleError,
    Params,
    build_params,
    chk_f,
    claw_pair,
    density_fprime,
    estimate_hellinger,
    gen_f,
    hellinger_bound,
    image_of,
    inv_f,
    load_public_key,
    load_secret_key,
    log_density_fprime,
    sample_image,
    save_public_key,
    save_secret_key,
)
from src.ring_core import ParseError, RingElement, RingVector, centered_sq_norm, scalar_mul_vec


# ============================================================================
# GOLDEN TESTS - Parameter derivation
# ============================================================================

class TestBuildParams:
    """Least fixed point of the k_g iteration."""

    @pytest.mark.golden
    def test_reference_parameters(self, golden_params):
        p = golden_params
        assert (p.n, p.k_g, p.m_bar, p.B_V, p.C_T, p.lam) == (64, 35, 3, 1, 8, 120)
        assert p.m == 38
        assert p.B_P == 320 * 64 * 38 == 778240
        assert p.q == 2 ** 35
        assert p.w == 64 * 35
        assert hellinger_bound(p) == pytest.approx(1 - math.exp(-2 * math.pi / 320), rel=1e-12)
        assert hellinger_bound(p) == pytest.approx(0.01944, abs=1e-5)

    @pytest.mark.golden
    def test_small_ring_parameters(self, small_params):
        assert (small_params.k_g, small_params.m, small_params.B_P) == (29, 32, 81920)

    @pytest.mark.golden
    def test_fixed_point_is_least(self, golden_params):
        """k_g = 34 with its own B_P violates the inversion constraint."""
        p = golden_params
        below = Params(n=64, k_g=34, m_bar=3, B_V=1, B_P=320 * 64 * 37, C_T=8, lam=120)
        assert not p.constraint_report()
        assert any("q = 2^34" in line for line in below.constraint_report())

    @pytest.mark.golden
    def test_huge_inversion_constant_is_infeasible(self):
        with pytest.raises(ParameterInfeasibleError, match="No modulus") as info:
            build_params(2, C_T=10 ** 12)
        assert info.value.report

    @pytest.mark.unit
    def test_non_power_of_two_dimension(self):
        with pytest.raises(ParameterInfeasibleError, match="power of two"):
            build_params(12)

    @pytest.mark.invariant
    @pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64, 128])
    def test_built_params_satisfy_every_constraint(self, n):
        p = build_params(n)
        assert p.constraint_report() == []
        assert p.B_P >= 320 * p.n * p.m * p.B_V
        assert hellinger_bound(p) <= HELLINGER_LIMIT


class TestParamsValidation:

    @pytest.mark.unit
    def test_small_B_P_reported(self, small_params):
        bad = replace(small_params, B_P=1000)
        report = bad.constraint_report()
        assert any(line.startswith("B_P = 1000") for line in report)
        assert any("Hellinger" in line for line in report)
        with pytest.raises(ParameterInfeasibleError):
            bad.validate()

    @pytest.mark.unit
    def test_structural_errors(self):
        with pytest.raises(ValueError, match="power of two"):
            Params(n=6, k_g=20, m_bar=3, B_V=1, B_P=10, C_T=8, lam=4)
        with pytest.raises(ValueError, match="k_g must lie"):
            Params(n=8, k_g=63, m_bar=3, B_V=1, B_P=10, C_T=8, lam=4)
        with pytest.raises(ValueError, match="must be an integer"):
            Params(n=8, k_g=20, m_bar=3, B_V=1.5, B_P=10, C_T=8, lam=4)

    @pytest.mark.unit
    def test_params_block_roundtrip(self, small_params):
        assert Params.from_bytes(small_params.to_bytes()) == small_params

    @pytest.mark.unit
    def test_summary_uses_lambda_key(self, small_params):
        summary = small_params.summary()
        assert summary["lambda"] == 64
        assert "lam" not in summary
        assert summary["q"] == 2 ** 29


# ============================================================================
# INVARIANT TESTS - Claw relation and inversion
# ============================================================================

class TestClaws:
    """Inv_F, Chk_F and the claw relation on the small ring."""

    @pytest.mark.invariant
    @pytest.mark.deterministic
    def test_inversion_recovers_both_branches(self, small_keys, rng):
        key, trapdoor = small_keys
        s = trapdoor.s
        for _ in range(25):
            b = int(rng.integers(0, 2))
            x = RingElement.uniform(key.params.n, key.params.q, rng)
            y = sample_image(key, b, x, rng)
            x0, x1 = claw_pair(trapdoor, y)
            assert x0 - x1 == s
            assert (x0 if b == 0 else x1) == x
            assert inv_f(trapdoor, b, y) == x
            assert chk_f(key, b, x, y)

    @pytest.mark.invariant
    @pytest.mark.deterministic
    def test_claw_preimages_pass_check_on_both_branches(self, small_keys, rng):
        key, trapdoor = small_keys
        for _ in range(10):
            x = RingElement.uniform(key.params.n, key.params.q, rng)
            y = sample_image(key, 0, x, rng)
            x0, x1 = claw_pair(trapdoor, y)
            assert chk_f(key, 0, x0, y)
            assert chk_f(key, 1, x1, y)
            assert log_density_fprime(key, 0, x0, y) > -math.inf
            assert log_density_fprime(key, 1, x1, y) > -math.inf

    @pytest.mark.invariant
    def test_key_noise_is_short(self, small_keys):
        key, trapdoor = small_keys
        e = trapdoor.key_noise()
        assert key.v == scalar_mul_vec(key.a, trapdoor.s) + e
        assert centered_sq_norm(e) <= key.params.B_V ** 2 * key.params.dim

    @pytest.mark.deterministic
    def test_uniform_image_fails_inversion(self, small_keys, rng):
        key, trapdoor = small_keys
        y = RingVector.uniform(key.params.m, key.params.n, key.params.q, rng)
        assert claw_pair(trapdoor, y) is None
        assert inv_f(trapdoor, 1, y) is None

    @pytest.mark.deterministic
    def test_wrong_preimage_fails_check(self, small_keys, rng):
        key, _ = small_keys
        x = RingElement.uniform(key.params.n, key.params.q, rng)
        y = sample_image(key, 0, x, rng)
        shifted = x + RingElement.one(key.params.n, key.params.q)
        assert chk_f(key, 0, x, y)
        assert not chk_f(key, 0, shifted, y)
        assert not chk_f(key, 0, RingElement.uniform(key.params.n, key.params.q, rng), y)

    @pytest.mark.golden
    def test_zero_noise_key_is_exact(self, small_params, rng):
        key, trapdoor = gen_f(small_params, rng, zero_noise=True)
        assert key.v == scalar_mul_vec(key.a, trapdoor.s)
        x = RingElement.uniform(small_params.n, small_params.q, rng)
        noise = np.zeros(small_params.dim, dtype=np.int64)
        y = image_of(key, 1, x, noise)
        assert y == scalar_mul_vec(key.a, x + trapdoor.s)
        assert claw_pair(trapdoor, y) == (x + trapdoor.s, x)


# ============================================================================
# DENSITIES AND HELLINGER DISTANCE
# ============================================================================

class TestDensities:

    @pytest.mark.golden
    def test_density_at_exact_image_is_one(self, small_keys, rng):
        key, _ = small_keys
        x = RingElement.uniform(key.params.n, key.params.q, rng)
        y = image_of(key, 0, x, np.zeros(key.params.dim, dtype=np.int64))
        assert density_fprime(key, 0, x, y) == 1.0
        assert log_density_fprime(key, 0, x, y) == 0.0

    @pytest.mark.invariant
    def test_density_outside_support_is_zero(self, small_keys, rng):
        key, _ = small_keys
        x = RingElement.uniform(key.params.n, key.params.q, rng)
        noise = np.zeros(key.params.dim, dtype=np.int64)
        noise[0] = key.params.B_P * math.isqrt(key.params.dim) + key.params.B_P
        y = image_of(key, 0, x, noise)
        assert not chk_f(key, 0, x, y)
        assert density_fprime(key, 0, x, y) == 0.0

    @pytest.mark.deterministic
    def test_hellinger_estimate_below_bound(self, small_keys, rng):
        _, trapdoor = small_keys
        estimate = estimate_hellinger(trapdoor, 200, rng)
        assert abs(estimate) < hellinger_bound(trapdoor.params)


# ============================================================================
# KEY ENCODINGS
# ============================================================================

class TestKeyFiles:

    @pytest.mark.deterministic
    def test_public_and_secret_roundtrip(self, small_keys, tmp_path):
        key, trapdoor = small_keys
        save_public_key(key, tmp_path / "key.pub")
        save_secret_key(trapdoor, tmp_path / "key.sec")
        assert load_public_key(tmp_path / "key.pub") == key
        restored = load_secret_key(tmp_path / "key.sec")
        assert restored.key == key
        assert restored.s == trapdoor.s
        assert np.array_equal(restored.t.r, trapdoor.t.r)

    @pytest.mark.golden
    def test_key_layout(self, small_keys):
        key, _ = small_keys
        data = key.to_bytes()
        assert data[:4] == b"PQNT"
        assert data[4] == 0x01
        p = key.params
        assert len(data) == 5 + 7 * 8 + 2 * p.m * p.n * 8

    @pytest.mark.unit
    def test_bad_magic(self, small_keys):
        key, _ = small_keys
        with pytest.raises(ParseError, match="magic"):
            NtcfKey.from_bytes(b"XXXX" + key.to_bytes()[4:])

    @pytest.mark.unit
    def test_bad_version(self, small_keys):
        key, _ = small_keys
        data = bytearray(key.to_bytes())
        data[4] = 0x02
        with pytest.raises(ParseError, match="version"):
            NtcfKey.from_bytes(bytes(data))

    @pytest.mark.unit
    def test_trailing_bytes(self, small_keys):
        key, _ = small_keys
        with pytest.raises(ParseError, match="Trailing"):
            NtcfKey.from_bytes(key.to_bytes() + b"\x00")

    @pytest.mark.unit
    def test_truncated_secret(self, small_keys):
        _, trapdoor = small_keys
        with pytest.raises(ParseError):
            NtcfTrapdoor.from_bytes(trapdoor.to_bytes()[:-3])

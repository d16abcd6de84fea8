"""
Tests for gadget trapdoor generation, decoding and inversion.

Tests cover:
- Structure of the generated public vector (gadget identity a*R = g)
- Exact recovery of s from a*s + e while the noise stays small
- Decode failure once a residual reaches q/4
- Residual-norm admissibility in trap_invert
- Packed trapdoor serialization
- Exhaustive small-modulus decoding and inversion at the reference parameters
"""

import math
import warnings

import numpy as np
import pytest

from src.dgauss import GaussParams, dgauss_sample
from src.gadget_trapdoor import (
    GadgetTrapdoor,
    build_trapdoor,
    decode_gadget_levels,
    gadget_combine,
    gadget_decode,
    gen_trap,
    trap_invert,
)
from src.ring_core import (
    ParameterMismatchError,
    ParseError,
    RingElement,
    RingVector,
    centered_norm,
    scalar_mul_vec,
)


class _Shape:
    """Minimal parameter holder for gen_trap."""

    def __init__(self, n, k_g, m_bar):
        self.n, self.k_g, self.m_bar = n, k_g, m_bar
        self.q = 1 << k_g


@pytest.fixture
def trap():
    a, t = gen_trap(_Shape(8, 20, 3), np.random.default_rng(3))
    return a, t


# ============================================================================
# INVARIANT TESTS - Properties that must always hold
# ============================================================================

@pytest.mark.invariant
def test_gadget_combine_of_a_is_gadget(trap):
    """Combining a itself (s = 1, e = 0) yields exactly g_j = 2^(j-1)."""
    a, t = trap
    u = gadget_combine(a, t)
    assert u.m == t.k_g
    for j in range(t.k_g):
        expected = np.zeros(8, dtype=np.uint64)
        expected[0] = 1 << j
        assert np.array_equal(u.elems[j], expected)


@pytest.mark.invariant
def test_trapdoor_is_ternary(trap):
    _, t = trap
    assert t.r.shape == (3, 20, 8)
    values = set(np.unique(t.r).tolist())
    assert values <= {0, 1, (1 << 20) - 1}


@pytest.mark.invariant
@pytest.mark.deterministic
def test_invert_recovers_secret_with_small_noise(trap, rng):
    a, t = trap
    q = a.q
    for _ in range(20):
        s = RingElement.uniform(8, q, rng)
        e = RingVector(rng.integers(-50, 51, size=(a.m, 8)), q)
        c = scalar_mul_vec(a, s) + e
        assert trap_invert(a, t, c, bound=centered_norm(e) + 1) == s


@pytest.mark.invariant
@pytest.mark.deterministic
def test_vectorised_decode_matches_single_decode(trap, rng):
    a, t = trap
    q = a.q
    s = RingElement.uniform(8, q, rng)
    c = scalar_mul_vec(a, s) + RingVector(rng.integers(-5, 6, size=(a.m, 8)), q)
    u = gadget_combine(c, t)
    batched, ok = decode_gadget_levels(u.elems, q)
    assert ok.all()
    assert RingElement(batched, q) == gadget_decode(u, q) == s


# ============================================================================
# GOLDEN TESTS - Decode tolerance at q/4
# ============================================================================

class TestDecodeTolerance:
    """Residuals strictly below q/4 decode; reaching q/4 is reported as failure."""

    @pytest.mark.golden
    def test_single_coefficient_levels(self):
        q = 1 << 6
        s = 0b101101
        levels = np.array([((s << j) + 3) % q for j in range(6)], dtype=np.uint64)
        decoded, ok = decode_gadget_levels(levels, q)
        assert int(decoded) == s
        assert bool(ok)

    @pytest.mark.golden
    def test_residual_just_below_quarter_decodes(self):
        q = 1 << 8
        s = 77
        noise = q // 4 - 1
        levels = np.array([((s << j) + noise) % q for j in range(8)], dtype=np.uint64)
        decoded, ok = decode_gadget_levels(levels, q)
        assert int(decoded) == s
        assert bool(ok)

    @pytest.mark.golden
    def test_residual_at_quarter_fails(self):
        q = 1 << 8
        s = 77
        levels = np.array([((s << j) + q // 4) % q for j in range(8)], dtype=np.uint64)
        _, ok = decode_gadget_levels(levels, q)
        assert not bool(ok)
        u = RingVector(levels.reshape(8, 1).repeat(2, axis=1), q)
        assert gadget_decode(u, q) is None

    @pytest.mark.unit
    def test_wrong_level_count(self):
        with pytest.raises(ParameterMismatchError, match="Expected 8 gadget levels"):
            decode_gadget_levels(np.zeros((7, 4), dtype=np.uint64), 1 << 8)

    @pytest.mark.unit
    def test_modulus_too_small(self):
        with pytest.raises(ParameterMismatchError, match="q >= 4"):
            decode_gadget_levels(np.zeros((1, 4), dtype=np.uint64), 2)


class TestInversionBound:
    """trap_invert admits s only when the residual norm is within the bound."""

    @pytest.mark.deterministic
    def test_residual_above_bound_rejected(self, trap, rng):
        a, t = trap
        s = RingElement.uniform(8, a.q, rng)
        e = RingVector(rng.integers(-50, 51, size=(a.m, 8)), a.q)
        c = scalar_mul_vec(a, s) + e
        assert trap_invert(a, t, c, bound=centered_norm(e) - 1) is None

    @pytest.mark.deterministic
    def test_uniform_image_not_inverted(self, trap, rng):
        """A uniform vector decodes to garbage that fails the residual check."""
        a, t = trap
        c = RingVector.uniform(a.m, 8, a.q, rng)
        assert trap_invert(a, t, c, bound=1000.0) is None

    @pytest.mark.unit
    def test_foreign_vector_rejected(self, trap, rng):
        a, t = trap
        other, _ = gen_trap(_Shape(8, 20, 3), rng)
        with pytest.raises(ParameterMismatchError, match="does not belong"):
            trap_invert(other, t, a, bound=1.0)

    @pytest.mark.unit
    def test_image_shape_mismatch(self, trap):
        a, t = trap
        short = RingVector.zeros(a.m - 1, 8, a.q)
        with pytest.raises(ParameterMismatchError, match="does not match trapdoor"):
            gadget_combine(short, t)


# ============================================================================
# SERIALIZATION
# ============================================================================

class TestTrapdoorEncoding:

    @pytest.mark.deterministic
    def test_packed_roundtrip(self, trap):
        a, t = trap
        data = t.to_bytes()
        assert len(data) == 4 + (3 * 20 * 8 + 3) // 4
        restored = GadgetTrapdoor.from_bytes(data, a)
        assert np.array_equal(restored.r, t.r)

    @pytest.mark.unit
    def test_invalid_code_rejected(self, trap):
        a, t = trap
        data = bytearray(t.to_bytes())
        data[4] |= 0b11
        with pytest.raises(ParseError, match="0b11"):
            GadgetTrapdoor.from_bytes(bytes(data), a)

    @pytest.mark.unit
    def test_truncated_rejected(self, trap):
        a, t = trap
        with pytest.raises(ParseError, match="Trapdoor body"):
            GadgetTrapdoor.from_bytes(t.to_bytes()[:-1], a)

    @pytest.mark.unit
    def test_build_trapdoor_shape_check(self, rng):
        a_bar = RingVector.uniform(2, 4, 1 << 6, rng)
        with pytest.raises(ParameterMismatchError, match="Trapdoor r needs shape"):
            build_trapdoor(a_bar, np.zeros((2, 5, 4), dtype=np.int64))


# ============================================================================
# EXHAUSTIVE DECODE AND MONTE CARLO INVERSION
# ============================================================================

class TestDecodeExhaustive:
    """Every s and every per-level noise vector with |e_j| < q/4 decodes to s."""

    @pytest.mark.invariant
    @pytest.mark.parametrize("k_g", [3, 4, 5])
    def test_all_secrets_all_small_noise(self, k_g):
        q = 1 << k_g
        noise = np.arange(-(q // 4 - 1), q // 4, dtype=np.int64)
        grid = np.stack(np.meshgrid(*[noise] * k_g, indexing="ij")).reshape(k_g, -1)
        assert grid.shape[1] == noise.size ** k_g
        shifts = np.arange(k_g, dtype=np.int64)[:, None]
        for s in range(q):
            levels = (((s << shifts) + grid) % q).astype(np.uint64)
            decoded, ok = decode_gadget_levels(levels, q)
            assert ok.all(), f"s={s}"
            assert (decoded == s).all(), f"s={s}"

    @pytest.mark.unit
    def test_scalar_decode_raises_no_overflow_warning(self):
        """Wraparound in the scalar path is modular arithmetic, not an error."""
        q = 1 << 8
        s = 0b11010011
        levels = np.array([((s << j) + 5) % q for j in range(8)], dtype=np.uint64)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            decoded, ok = decode_gadget_levels(levels, q)
        assert int(decoded) == s
        assert bool(ok)


def _golden_inversions(params, pairs, seed):
    """Count inversions of a*s + e with e ~ D(2*B_P) over n*m coefficients."""
    rng = np.random.default_rng(seed)
    a, t = gen_trap(params, rng)
    g = GaussParams(B=2 * params.B_P, dim=params.n * params.m)
    bound = 2 * params.B_P * math.sqrt(params.n * params.m)
    recovered = 0
    for _ in range(pairs):
        s = RingElement.uniform(params.n, params.q, rng)
        e = dgauss_sample(g, rng).reshape(params.m, params.n)
        assert centered_norm(RingVector(e, params.q)) <= bound
        c = scalar_mul_vec(a, s) + RingVector(e, params.q)
        recovered += trap_invert(a, t, c, bound=bound) == s
    return recovered


class TestGoldenInversion:
    """At the reference parameters inversion never fails inside the noise ball."""

    @pytest.mark.golden
    @pytest.mark.deterministic
    def test_inversion_at_reference_parameters(self, golden_params):
        assert _golden_inversions(golden_params, 200, seed=2024) == 200

    @pytest.mark.slow
    @pytest.mark.golden
    def test_inversion_ten_thousand_pairs(self, golden_params):
        assert _golden_inversions(golden_params, 10_000, seed=2025) == 10_000

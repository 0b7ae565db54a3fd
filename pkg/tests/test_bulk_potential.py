import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nematiclab.bulk_potential import (
    MaterialParams,
    bulk_density,
    coercivity_radius,
    eigen_interval,
    molecular_field,
    packed_bulk_density,
    packed_molecular_field,
    uniaxial_equilibrium,
    validate,
)
from nematiclab.inequality_verifier import parameter_grid
from nematiclab.tensor_core import (
    DomainError,
    QTensor,
    packed_inner,
    packed_norm,
    packed_to_matrix,
    random_packed,
    random_rotations,
    rotate_packed,
    uniaxial,
)

positive = st.floats(0.05, 5.0)


def test_validate_ok():
    assert validate(MaterialParams(), require_thm_regime=True) == []


def test_validate_thm_regime_violation():
    msgs = validate(MaterialParams(a=1.0), require_thm_regime=True)
    assert len(msgs) == 1 and "a <= b^2/24c" in msgs[0]
    assert validate(MaterialParams(a=1.0)) == []


def test_validate_lists_every_problem():
    msgs = validate(MaterialParams(c=-1.0, L=0.0, nu=-2.0))
    assert any(m.startswith("c > 0 violated") for m in msgs)
    assert any(m.startswith("L > 0") for m in msgs)
    assert any(m.startswith("nu > 0") for m in msgs)
    assert len(msgs) == 3


def test_validate_negative_a_only_in_regime():
    assert validate(MaterialParams(a=-0.5)) == []
    assert any("a >= 0" in m for m in validate(MaterialParams(a=-0.5), True))


@pytest.mark.parametrize("a, lo, hi", [(0.0, -1 / 6, 1 / 3), (1 / 24, -1 / 12, 1 / 6)])
def test_eigen_interval_examples(a, lo, hi):
    iv = eigen_interval(MaterialParams(a=a))
    assert iv.lo == pytest.approx(lo, rel=1e-14)
    assert iv.hi == pytest.approx(hi, rel=1e-14)


def test_eigen_interval_negative_discriminant():
    with pytest.raises(DomainError):
        eigen_interval(MaterialParams(a=1.0))


@pytest.mark.parametrize("params", parameter_grid())
def test_interval_endpoints_are_quadratic_roots(params):
    a, b, c = params.a, params.b, params.c
    iv = eigen_interval(params)
    assert iv.hi == -2.0 * iv.lo
    assert iv.lo < 0 < iv.hi
    assert abs(iv.hi ** 2 - b / (3 * c) * iv.hi + 2 * a / (3 * c)) <= 1e-12
    assert abs(iv.lo ** 2 + b / (6 * c) * iv.lo + a / (6 * c)) <= 1e-12
    # larger / smaller root respectively
    disc_hi = (b / (3 * c)) ** 2 - 8 * a / (3 * c)
    assert iv.hi >= b / (6 * c) - 1e-12
    assert disc_hi >= -1e-14


def test_bulk_density_examples():
    assert bulk_density(QTensor(), MaterialParams()) == 0.0
    Q = uniaxial(1.0, [0, 0, 1])
    assert bulk_density(Q, MaterialParams(a=0, b=1, c=1)) == pytest.approx(1 / 27, rel=1e-14)
    assert bulk_density(QTensor.diag(2 / 3, -1 / 3), MaterialParams(a=1, b=0, c=0)) == pytest.approx(1 / 3, rel=1e-14)


def test_bulk_density_uniaxial_reduction():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b, c = rng.uniform(-1, 1), rng.uniform(0.1, 2), rng.uniform(0.1, 2)
        s = rng.uniform(-1, 1)
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        p = MaterialParams(a=a, b=b, c=c)
        expected = a * s ** 2 / 3 - 2 * b * s ** 3 / 27 + c * s ** 4 / 9
        assert bulk_density(uniaxial(s, n), p) == pytest.approx(expected, abs=1e-14)


def test_molecular_field_zero():
    assert np.all(molecular_field(QTensor(), MaterialParams()).packed == 0.0)


@pytest.mark.parametrize("params", parameter_grid())
def test_uniaxial_equilibrium_is_stationary(params):
    Q = uniaxial(uniaxial_equilibrium(params), [0.0, 0.6, 0.8])
    assert molecular_field(Q, params).norm() < 1e-14


def test_molecular_field_uniaxial_example():
    n = np.array([1.0, 0.0, 0.0])
    H = molecular_field(uniaxial(1.0, n), MaterialParams(a=0, b=3, c=3))
    np.testing.assert_allclose(H.matrix(), -(np.outer(n, n) - np.eye(3) / 3), atol=1e-14)


def test_molecular_field_matches_matrix_formula():
    rng = np.random.default_rng(4)
    q = random_packed(200, rng)
    p = MaterialParams(a=0.3, b=1.2, c=0.7)
    M = np.moveaxis(packed_to_matrix(q), -1, 0)
    tr2 = np.einsum("nij,nji->n", M, M)[:, None, None]
    ref = -p.a * M + p.b * (M @ M - tr2 / 3 * np.eye(3)) - p.c * tr2 * M
    out = np.moveaxis(packed_to_matrix(packed_molecular_field(q, p)), -1, 0)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_molecular_field_is_negative_gradient():
    rng = np.random.default_rng(12)
    q = random_packed(1000, rng, (-1.0, 0.3))
    d = random_packed(1000, rng, (0.0, 0.0))
    p = MaterialParams(a=0.02, b=1.0, c=1.0)
    h = 1e-5
    fd = (packed_bulk_density(q + h * d, p) - packed_bulk_density(q - h * d, p)) / (2 * h)
    exact = -packed_inner(packed_molecular_field(q, p), d)
    assert np.max(np.abs(fd - exact)) < 1e-8


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), positive, positive, st.floats(-1.5, 1.5))
def test_molecular_field_of_uniaxial_is_uniaxial(a, b, c, s):
    n = np.array([0.0, 0.8, 0.6])
    p = MaterialParams(a=a, b=b, c=c)
    H = molecular_field(uniaxial(s, n), p)
    scalar = -a * s + b / 3 * s ** 2 - 2 * c / 3 * s ** 3
    np.testing.assert_allclose(H.matrix(), scalar * (np.outer(n, n) - np.eye(3) / 3),
                               atol=1e-12 * max(1.0, abs(scalar)))


def test_bulk_density_rotation_invariant():
    rng = np.random.default_rng(8)
    q = random_packed(2000, rng, (-2.0, 0.5))
    R = random_rotations(2000, rng)
    p = MaterialParams(a=-0.4, b=1.3, c=0.9)
    diff = packed_bulk_density(rotate_packed(q, R), p) - packed_bulk_density(q, p)
    assert np.max(np.abs(diff)) < 1e-12


def test_coercivity_radius_examples():
    assert coercivity_radius(MaterialParams()) == pytest.approx(1 / math.sqrt(6), rel=1e-15)
    assert coercivity_radius(MaterialParams(a=10.0)) == 0.0
    with pytest.raises(DomainError):
        coercivity_radius(MaterialParams(c=0.0))


def test_trace_cube_bound_on_unit_sphere():
    rng = np.random.default_rng(2)
    q = random_packed(10 ** 5, rng, (0.0, 0.0))
    M = np.moveaxis(packed_to_matrix(q), -1, 0)
    tr3 = np.trace(M @ M @ M, axis1=1, axis2=2)
    assert np.allclose(packed_norm(q), 1.0)
    assert tr3.max() <= 1 / math.sqrt(6) + 1e-14


@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 3), positive, positive)
def test_coercivity_radius_sufficient(a, b, c):
    p = MaterialParams(a=a, b=b, c=c)
    eta0 = coercivity_radius(p)
    for f in (1.0, 1.5, 10.0):
        eta = eta0 * f
        val = -a * eta ** 2 + b / math.sqrt(6) * eta ** 3 - c * eta ** 4
        assert val <= 1e-12 * max(1.0, c * eta ** 4)


def test_material_params_replace():
    p = MaterialParams().replace(a=0.01, gamma=3.0)
    assert p.a == 0.01 and p.gamma == 3.0 and p.b == 1.0
    assert p.discriminant == pytest.approx(1 - 0.24)

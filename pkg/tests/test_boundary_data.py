import numpy as np
import pytest

import linftylab as L
from linftylab.errors import GradientDomainError

ALL_NAMES = ["aronsson", "cone", "vec_eikonal", "mixed", "diffeo", "harmonic_saddle"]


def lookup(name):
    kwargs = {"lam": 0.5} if name == "mixed" else {}
    return L.catalog_lookup(name, **kwargs)


def sample_differentiable_points(datum, rng, count=100):
    """Random points in the datum's differentiability set, away from kinks."""
    pts = []
    while len(pts) < count:
        cand = rng.uniform(-1.0, 1.0, size=(4 * count, 2))
        if datum.name == "diffeo":
            cand = cand[np.hypot(cand[:, 0], cand[:, 1]) > 0.25]
        # stay clear of the non-smooth loci so the FD oracle is trustworthy
        cand = cand[np.abs(cand[:, 0]) > 0.05]
        cand = cand[np.abs(cand[:, 1]) > 0.05]
        cand = cand[datum.differentiable_at(cand)]
        pts.extend(map(tuple, cand))
    return np.array(pts[:count])


def fd_gradient(datum, pts, step=1e-5):
    out = np.empty((pts.shape[0], datum.target_dim, 2))
    for k, e in enumerate(np.eye(2)):
        out[:, :, k] = (datum.evaluate(pts + step * e)
                        - datum.evaluate(pts - step * e)) / (2.0 * step)
    return out


def test_aronsson_point_values():
    d = lookup("aronsson")
    assert d.evaluate([(1.0, 1.0)])[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert d.evaluate([(1.0, 0.0)])[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_vec_eikonal_at_origin():
    d = lookup("vec_eikonal")
    assert np.allclose(d.evaluate([(0.0, 0.0)]), [[0.0, 0.0]])


def matrix_exp_series(theta, terms=30):
    """exp(theta * S) for the quarter-turn generator S, by the power series."""
    S = np.array([[0.0, -1.0], [1.0, 0.0]])
    acc = np.eye(2)
    term = np.eye(2)
    for k in range(1, terms):
        term = term @ (theta * S) / k
        acc = acc + term
    return acc


def test_diffeo_value_matches_series_oracle():
    d = lookup("diffeo")
    x = np.array([0.5, 0.0])
    expected = matrix_exp_series(np.log(0.5)) @ x
    assert np.allclose(d.evaluate([x])[0], expected, atol=1e-14)
    assert np.allclose(expected,
                       0.5 * np.array([np.cos(np.log(0.5)), np.sin(np.log(0.5))]))


@pytest.mark.parametrize("name", ALL_NAMES)
def test_exact_gradient_matches_finite_differences(name):
    d = lookup(name)
    rng = np.random.default_rng(7)
    pts = sample_differentiable_points(d, rng)
    exact = d.exact_gradient(pts)
    fd = fd_gradient(d, pts)
    scale = np.maximum(np.abs(exact), 1.0)
    assert np.max(np.abs(exact - fd) / scale) < 1e-6


@pytest.mark.parametrize("name,value", [("cone", 1.0), ("vec_eikonal", np.sqrt(2.0)),
                                        ("diffeo", np.sqrt(3.0))])
def test_eikonal_constancy(name, value):
    d = lookup(name)
    assert d.eikonal
    rng = np.random.default_rng(11)
    pts = sample_differentiable_points(d, rng, count=200)
    norms = np.linalg.norm(d.exact_gradient(pts).reshape(len(pts), -1), axis=1)
    assert np.ptp(norms) < 1e-10
    assert norms[0] == pytest.approx(value, abs=1e-12)


def test_exact_gradient_norm_values():
    assert L.exact_gradient_norm(lookup("cone"), (0.3, -0.7)) == pytest.approx(1.0)
    assert L.exact_gradient_norm(lookup("vec_eikonal"), (0.2, 0.9)) == \
        pytest.approx(np.sqrt(2.0))
    # (4/3) * (x^{2/3} + y^{2/3})^{1/2} at (1, 1)
    assert L.exact_gradient_norm(lookup("aronsson"), (1.0, 1.0)) == \
        pytest.approx((4.0 / 3.0) * np.sqrt(2.0))


def test_gradient_norm_rejects_singular_points():
    with pytest.raises(GradientDomainError):
        L.exact_gradient_norm(lookup("cone"), (0.0, 0.0))
    with pytest.raises(GradientDomainError):
        L.exact_gradient_norm(lookup("aronsson"), (0.0, 0.5))


def test_mixed_continuity_across_interface():
    for lam in (0.5, -0.5):
        d = L.catalog_lookup("mixed", lam=lam)
        ys = np.linspace(-1.0, 1.0, 17)
        left = d.evaluate(np.column_stack([np.full_like(ys, -1e-14), ys]))
        right = d.evaluate(np.column_stack([np.full_like(ys, +1e-14), ys]))
        assert np.allclose(left, right, atol=1e-13)


def test_mixed_lambda_one_is_identity():
    d = L.catalog_lookup("mixed", lam=1.0)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.0, 1.0, size=(50, 2))
    assert np.allclose(d.evaluate(pts), pts)


def test_catalog_errors():
    with pytest.raises(ValueError):
        L.catalog_lookup("not_a_datum")
    with pytest.raises(ValueError):
        L.catalog_lookup("mixed")
    with pytest.raises(ValueError):
        L.catalog_lookup("affine")


def test_affine_validation():
    with pytest.raises(ValueError):
        L.affine([[1.0, 2.0, 3.0]])
    with pytest.raises(ValueError):
        L.affine([[1.0, 2.0]], offset=[1.0, 2.0])
    d = L.affine([[2.0, 0.0]], offset=[1.0])
    assert d.target_dim == 1
    assert d.evaluate([(0.5, 0.3)])[0, 0] == pytest.approx(2.0)

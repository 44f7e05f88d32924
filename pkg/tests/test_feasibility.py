import numpy as np
import pytest

from tiltlink.feasibility import (
    TorqueBasis,
    analyze,
    detect_singular_class,
    tau_min,
    torque_basis,
    zonotope_vertices,
)
from tiltlink.model import Configuration

from oracles import hull_facet_distances, lp_tau_min, lp_tau_min_dense


def _random_basis(rng, lambda_max=20.0):
    return TorqueBasis(vectors=rng.normal(0.0, 0.15, (4, 3)), lambda_max=lambda_max)


def test_singular_families_have_zero_margin_without_tilt(model):
    flat = model.with_overrides(tilt_beta=0.0)
    rng = np.random.default_rng(31)
    for _ in range(10):
        u = rng.uniform(-np.pi / 2, np.pi / 2)
        psi = rng.uniform(-np.pi, np.pi, 4)
        for q in ([u, 0.0, -u], [u, -u, u]):
            report = tau_min(torque_basis(flat, Configuration(q, psi)))
            assert report.tau_min <= 1e-9


def test_margin_is_linear_in_thrust_limit(model):
    basis = torque_basis(model, Configuration([0.4, -0.2, 0.6], [0.5, 1.0, -1.5, 2.0]))
    doubled = TorqueBasis(vectors=basis.vectors, lambda_max=2.0 * basis.lambda_max)
    assert tau_min(doubled).tau_min == pytest.approx(
        2.0 * tau_min(basis).tau_min, rel=1e-12
    )


def test_margin_matches_hull_facets_exactly():
    rng = np.random.default_rng(37)
    for _ in range(10):
        basis = _random_basis(rng)
        report = tau_min(basis)
        reference = hull_facet_distances(basis.vectors, basis.lambda_max).min()
        assert report.tau_min == pytest.approx(reference, rel=1e-9, abs=1e-12)


def test_margin_matches_lp_direction_sampling():
    rng = np.random.default_rng(41)
    basis = _random_basis(rng)
    while lp_tau_min(basis.vectors, basis.lambda_max) < 0.5:
        basis = _random_basis(rng)
    dense = lp_tau_min_dense(basis.vectors, basis.lambda_max, n_directions=10000)
    assert tau_min(basis).tau_min == pytest.approx(dense, rel=5e-3)


def test_rotational_invariance():
    rng = np.random.default_rng(43)
    basis = _random_basis(rng)
    value = tau_min(basis).tau_min
    for _ in range(5):
        axis_angle = rng.normal(0.0, 1.0, 3)
        from scipy.spatial.transform import Rotation

        rot = Rotation.from_rotvec(axis_angle).as_matrix()
        rotated = TorqueBasis(
            vectors=basis.vectors @ rot.T, lambda_max=basis.lambda_max
        )
        assert tau_min(rotated).tau_min == pytest.approx(value, abs=1e-9)


def test_margin_monotone_in_added_rotor():
    rng = np.random.default_rng(47)
    for _ in range(10):
        basis = _random_basis(rng)
        value = tau_min(basis).tau_min
        extra = np.vstack([basis.vectors, rng.normal(0.0, 0.15, 3)])
        grown = tau_min(TorqueBasis(vectors=extra, lambda_max=basis.lambda_max))
        assert grown.tau_min >= value - 1e-12


def test_singular_class_examples():
    assert detect_singular_class(np.array([-np.pi / 2, 0.0, np.pi / 2])) == "S1"
    assert detect_singular_class(np.array([0.0, 0.0, 0.0])) == "both"
    assert detect_singular_class(np.array([np.pi / 2, np.pi / 2, np.pi / 2])) == "none"
    assert detect_singular_class(np.array([0.4, -0.4, 0.4])) == "S2"
    assert detect_singular_class(np.array([0.3, 0.0, -0.3])) == "S1"
    with pytest.raises(ValueError):
        detect_singular_class(np.array([0.1, 0.2]))


def test_analyze_attaches_singular_class(model):
    report = analyze(model, Configuration([0.0] * 3, [0.0] * 4))
    assert report.singular_class == "both"
    assert report.tau_min > 0.0  # tilted rotors keep the line form alive


def test_degenerate_pairs_recorded(model):
    flat = model.with_overrides(tilt_beta=0.0)
    report = tau_min(torque_basis(flat, Configuration([0.0] * 3, [0.0] * 4)))
    assert (0, 3) in report.degenerate_pairs and (1, 2) in report.degenerate_pairs
    assert not report.all_degenerate
    assert report.tau_min == 0.0


def test_all_parallel_basis_is_flat():
    vectors = np.outer([1.0, 2.0, -1.5, 0.7], [0.3, -0.2, 0.9])
    report = tau_min(TorqueBasis(vectors=vectors, lambda_max=10.0))
    assert report.all_degenerate
    assert report.tau_min == 0.0
    assert len(report.degenerate_pairs) == 6


def test_too_few_rotors_rejected():
    with pytest.raises(ValueError):
        tau_min(TorqueBasis(vectors=np.eye(3)[:2], lambda_max=1.0))


def test_vertex_enumeration_size(model):
    basis = torque_basis(model, Configuration([0.5, 0.5, 0.5], [0.0] * 4))
    assert zonotope_vertices(basis).shape == (16, 3)

import hashlib
import json
import os

import numpy as np
import pytest

import linftylab as L
from linftylab import experiments, fem


@pytest.fixture(scope="module")
def fig1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig1") / "run"
    config = experiments.preset_config("aronsson_fig1", n=16, out_dir=str(out))
    return experiments.run_experiment(config)


def test_preset_names():
    assert len(experiments.PRESET_NAMES) == 9
    assert len(experiments.CONFIG_NAMES) == 10
    assert "custom" in experiments.CONFIG_NAMES
    with pytest.raises(ValueError):
        experiments.preset_config("fig99")


def test_preset_geometry_areas():
    mesh = L.build_square_mesh(32)
    fig1 = experiments.preset_config("aronsson_fig1", n=32)
    region = L.resolve_subdomain(mesh, fig1.regions[0][1])
    assert abs(region.area - 0.5625) <= 4 * 0.75 * mesh.meshsize
    vec = experiments.preset_config("vec_eikonal", n=32)
    region = L.resolve_subdomain(mesh, vec.regions[0][1])
    assert abs(region.area - np.pi ** 2 / 4.0) <= 4 * (np.pi / 2.0) * mesh.meshsize


def test_preset_configuration_details():
    assert experiments.preset_config("mixed_pos").lam == 0.5
    assert experiments.preset_config("mixed_neg").lam == -0.5
    assert experiments.preset_config("mixed_pos").regions[0][1].kind == "whole_domain"
    assert experiments.preset_config("diffeo").mesh.kind == "annulus"
    assert experiments.preset_config("scalar_eikonal").pinned_points == ((0.0, 0.0),)
    fig2 = experiments.preset_config("aronsson_fig2")
    assert len(fig2.corner_hints) == 4


def test_run_experiment_artifacts(fig1_run):
    out = fig1_run.out_dir
    for name in ("vertices.csv", "triangles.csv", "summary.json",
                 "solution_p100.csv", "field_p100.vtk",
                 "sigma_aronsson_fig1_p100_O.csv"):
        assert os.path.exists(os.path.join(out, name)), name
    assert fig1_run.solve_report.converged
    data = experiments.validate_summary(os.path.join(out, "summary.json"))
    assert data["schema"] == experiments.SCHEMA_TAG
    assert len(data["measures"]) == 5  # one per reporting exponent
    for entry in data["measures"]:
        assert entry["divergence_violation"] <= entry["divergence_contract"]
    assert data["probes"][0]["p"] == 100.0


def test_sigma_csv_columns(fig1_run):
    path = os.path.join(fig1_run.out_dir, "sigma_aronsson_fig1_p4_O.csv")
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    assert header == ["element_id", "barycenter_x", "barycenter_y",
                      "grad_norm", "log_density", "weight"]
    body = np.genfromtxt(path, delimiter=",", skip_header=1)
    assert body[:, 5].sum() == pytest.approx(1.0, abs=1e-9)


def test_determinism_byte_identical(tmp_path):
    digests = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        config = experiments.preset_config(
            "aronsson_fig1", n=8, out_dir=str(out), sequential=True,
            ladder=(2.0, 3.0, 4.0), reporting=(2.0, 4.0))
        experiments.run_experiment(config)
        digest = hashlib.sha256()
        for name in sorted(os.listdir(out)):
            if name.endswith(".csv"):
                digest.update(open(out / name, "rb").read())
        digests.append(digest.hexdigest())
    assert digests[0] == digests[1]


def test_vtk_export_counts_and_roundtrip(tmp_path):
    mesh = L.build_square_mesh(2)
    datum = L.catalog_lookup("harmonic_saddle")
    field = L.interpolate_boundary(mesh, datum)
    weights = np.zeros(mesh.num_triangles)
    weights[:4] = 0.25
    path = experiments.export_vtk(mesh, field, weights, tmp_path / "out.vtk")
    lines = open(path).read().splitlines()
    assert f"POINTS {mesh.num_vertices} double" in lines
    assert f"CELLS {mesh.num_triangles} {4 * mesh.num_triangles}" in lines
    start = lines.index(f"POINTS {mesh.num_vertices} double") + 1
    pts = np.array([[float(tok) for tok in line.split()]
                    for line in lines[start:start + mesh.num_vertices]])
    assert np.array_equal(pts[:, :2], mesh.vertices)  # 17 digits round-trip
    # cell data zeros outside the measured region
    idx = lines.index("SCALARS sigma_weight double 1") + 2
    cell_weights = np.array([float(v) for v in lines[idx:idx + mesh.num_triangles]])
    assert np.array_equal(cell_weights[4:], np.zeros(mesh.num_triangles - 4))


def test_vtk_vector_field(tmp_path):
    mesh = L.build_square_mesh(2)
    field = L.interpolate_boundary(mesh, L.catalog_lookup("vec_eikonal"))
    path = experiments.export_vtk(mesh, field, np.zeros(mesh.num_triangles),
                                  tmp_path / "vec.vtk")
    text = open(path).read()
    assert "VECTORS solution double" in text


def test_vtk_rejects_bad_weights(tmp_path):
    mesh = L.build_square_mesh(2)
    field = L.interpolate_boundary(mesh, L.catalog_lookup("harmonic_saddle"))
    with pytest.raises(ValueError):
        experiments.export_vtk(mesh, field, np.zeros(3), tmp_path / "bad.vtk")


def test_output_root_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("LINFTY_OUT", str(tmp_path / "root"))
    config = experiments.preset_config("aronsson_fig1", n=8,
                                       ladder=(2.0,), reporting=(2.0,))
    summary = experiments.run_experiment(config)
    assert str(tmp_path / "root") in summary.out_dir


def test_annulus_spec_mapping():
    spec = experiments.annulus_spec_for(64)
    assert (spec.n_r, spec.n_theta) == (32, 192)
    mesh = spec.build()
    assert mesh.quasi_uniformity <= 4.0
    assert mesh.shape_regularity > 0.1

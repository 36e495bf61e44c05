import json
import os
import subprocess
import sys

import numpy as np
import pytest

PRESETS = ("aronsson_fig1", "aronsson_fig2", "aronsson_fig3", "aronsson_fig4",
           "scalar_eikonal", "vec_eikonal", "mixed_pos", "mixed_neg", "diffeo")


def run_linfty(*args):
    """Invoke the solver package strictly through its CLI."""
    proc = subprocess.run([sys.executable, "-m", "linftylab.cli", *args],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"linfty {' '.join(args)} failed:\n{proc.stderr}")
    return proc


@pytest.fixture(scope="session")
def preset_outputs(tmp_path_factory):
    """Artifacts for every preset at test resolution, produced by `linfty run`."""
    root = tmp_path_factory.mktemp("experiments")
    outputs = {}
    for preset in PRESETS:
        out = root / preset
        run_linfty("run", preset, "--n", "16", "--out", str(out))
        outputs[preset] = str(out)
    return outputs


def write_toy_experiment(root, name="toy", reporting=(2.0, 4.0),
                         weights_by_p=None):
    """Handmade artifact set for a 4-element criss-cross cell on [-1, 1]^2."""
    root = str(root)
    os.makedirs(root, exist_ok=True)
    vertices = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0],
                         [0.0, 0.0]])
    triangles = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    with open(os.path.join(root, "vertices.csv"), "w") as fh:
        fh.write("id,x,y,is_boundary\n")
        for i, (x, y) in enumerate(vertices):
            fh.write(f"{i},{x},{y},{int(i < 4)}\n")
    with open(os.path.join(root, "triangles.csv"), "w") as fh:
        fh.write("id,v0,v1,v2\n")
        for i, t in enumerate(triangles):
            fh.write(f"{i},{t[0]},{t[1]},{t[2]}\n")
    if weights_by_p is None:
        weights_by_p = {2.0: [0.25, 0.25, 0.25, 0.25],
                        4.0: [0.4, 0.3, 0.2, 0.1]}
    bary = vertices[triangles].mean(axis=1)
    for p, weights in weights_by_p.items():
        tag = str(int(p))
        with open(os.path.join(root, f"sigma_{name}_p{tag}_O.csv"), "w") as fh:
            fh.write("element_id,barycenter_x,barycenter_y,"
                     "grad_norm,log_density,weight\n")
            for k, w in enumerate(weights):
                fh.write(f"{k},{bary[k, 0]},{bary[k, 1]},1.0,0.0,{w}\n")
    summary = {
        "schema": "linftylab/summary/v1",
        "config": {"name": name, "regions": [{"name": "O"}],
                   "reporting": list(reporting)},
    }
    with open(os.path.join(root, "summary.json"), "w") as fh:
        json.dump(summary, fh)
    return root


@pytest.fixture()
def toy_experiment(tmp_path):
    return write_toy_experiment(tmp_path / "toy")

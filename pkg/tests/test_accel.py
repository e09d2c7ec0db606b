import json
import os
import subprocess
import sys

import numpy as np
import pytest

from floorplan_fpv import _accel


def edges(rng, n, m):
    return rng.integers(0, n, m), rng.integers(0, n, m)


class TestKernelParity:
    """The numpy fallback and the loop kernels (compiled or not) agree."""

    def test_scatter_add(self, rng):
        idx = rng.integers(0, 7, 40)
        v2, v1 = rng.normal(size=(40, 5)), rng.normal(size=40)
        np.testing.assert_allclose(_accel._scatter_add_rows_numpy(v2, idx, 7), _accel._scatter_add_rows_loop(v2, idx, 7), atol=1e-12)
        np.testing.assert_allclose(_accel._scatter_add_vec_numpy(v1, idx, 7), _accel._scatter_add_vec_loop(v1, idx, 7), atol=1e-12)
        np.testing.assert_allclose(_accel.scatter_add(v2, idx, 7), _accel._scatter_add_rows_loop(v2, idx, 7), atol=1e-12)

    def test_weighted_aggregate(self, rng):
        src, dst = edges(rng, 9, 30)
        h, norm, g = rng.normal(size=(9, 4)), rng.uniform(size=30), rng.normal(size=(9, 4))
        np.testing.assert_allclose(
            _accel._weighted_aggregate_numpy(h, norm, src, dst, 9), _accel._weighted_aggregate_loop(h, norm, src, dst, 9), atol=1e-12
        )
        for a, b in zip(
            _accel._weighted_aggregate_back_numpy(g, h, norm, src, dst),
            _accel._weighted_aggregate_back_loop(g, h, norm, src, dst),
        ):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_gated_aggregate(self, rng):
        src, dst = edges(rng, 8, 25)
        proj, g = rng.normal(size=(8, 12)) * 3, rng.normal(size=(8, 4))
        out_np, gate_np = _accel._gated_aggregate_numpy(proj, src, dst, 8)
        out_lp, gate_lp = _accel._gated_aggregate_loop(proj, src, dst, 8)
        np.testing.assert_allclose(out_np, out_lp, atol=1e-12)
        np.testing.assert_allclose(gate_np, gate_lp, atol=1e-12)
        np.testing.assert_allclose(
            _accel._gated_aggregate_back_numpy(g, proj, gate_np, src, dst),
            _accel._gated_aggregate_back_loop(g, proj, gate_lp, src, dst),
            atol=1e-12,
        )

    def test_bfs(self, plan):
        indptr, indices = plan.csr()
        np.testing.assert_array_equal(
            _accel._bfs_all_pairs_numpy(indptr, indices, plan.n_nodes),
            _accel._bfs_all_pairs_loop(indptr, indices, plan.n_nodes),
        )

    def test_bfs_disconnected(self):
        indptr, indices = np.array([0, 1, 2, 2]), np.array([1, 0])
        expected = [[0, 1, -1], [1, 0, -1], [-1, -1, 0]]
        np.testing.assert_array_equal(_accel._bfs_all_pairs_numpy(indptr, indices, 3), expected)
        np.testing.assert_array_equal(_accel.bfs_all_pairs(indptr, indices, 3), expected)


SCRIPT = """
import json
import numpy as np
from floorplan_fpv import _accel
from floorplan_fpv.gcn import GcnModel, fpv_scores
from floorplan_fpv.synth import random_plan
rng = np.random.default_rng(0)
gs = [random_plan(rng, f"p{i}") for i in range(20)]
print(json.dumps({"backend": _accel.backend(), "scores": fpv_scores(GcnModel(hidden_dim=16, num_layers=2), gs).tolist()}))
"""


def run_with(flag):
    env = dict(os.environ, FPV_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


class TestBackendSwitch:
    def test_env_flag_selects_numpy(self):
        assert run_with("1")["backend"] == "numpy"

    def test_paths_agree_end_to_end(self):
        a, b = run_with("1"), run_with("0")
        if b["backend"] != "numba":
            pytest.skip("numba is not installed")
        np.testing.assert_allclose(a["scores"], b["scores"], atol=1e-10)

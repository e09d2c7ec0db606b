"""Numba kernels vs the pure-numpy fallback.

Kernel timings compare both paths in one process. The end-to-end timing
runs a short training job in two subprocesses, one with
``FPV_DISABLE_NUMBA=1``, and checks that the scores agree.

    python benchmarks/bench_kernels.py [--repeat 5] [--records 600]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from floorplan_fpv import _accel
from floorplan_fpv.gcn import GraphBatch
from floorplan_fpv.synth import SynthConfig, generate_corpus

E2E = """
import json, time
import numpy as np
from floorplan_fpv import _accel
from floorplan_fpv.gcn import TrainConfig, fpv_scores, train
from floorplan_fpv.synth import SynthConfig, generate_corpus
ds, _ = generate_corpus(SynthConfig(n_records={records}, seed=0))
cfg = TrainConfig(epochs=5, checkpoint_interval=5)
train(ds.subset(range(50)), TrainConfig(epochs=1, checkpoint_interval=1))  # compile outside the clock
t0 = time.perf_counter()
model = train(ds, cfg)[-1].model
dt = time.perf_counter() - t0
print(json.dumps({{"backend": _accel.backend(), "seconds": dt, "scores": fpv_scores(model, ds.graphs[:50]).tolist()}}))
"""


def best_of(fn, repeat):
    fn()  # warm up (and compile)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(batch, d, rng):
    src, dst, n = batch.src, batch.dst, batch.n_nodes
    h = rng.normal(size=(n, d))
    norm = rng.uniform(size=len(src))
    proj = rng.normal(size=(n, 3 * d))
    g = rng.normal(size=(n, d))
    _, gate = _accel._gated_aggregate_numpy(proj, src, dst, n)
    msgs = rng.normal(size=(len(src), d))
    return {
        "scatter_add": ("_scatter_add_rows", (msgs, dst, n)),
        "weighted_aggregate": ("_weighted_aggregate", (h, norm, src, dst, n)),
        "weighted_aggregate_back": ("_weighted_aggregate_back", (g, h, norm, src, dst)),
        "gated_aggregate": ("_gated_aggregate", (proj, src, dst, n)),
        "gated_aggregate_back": ("_gated_aggregate_back", (g, proj, gate, src, dst)),
    }


def run_e2e(records, disable):
    env = dict(os.environ, FPV_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", E2E.format(records=records)], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--records", type=int, default=600)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args()

    if not _accel.USE_NUMBA:
        sys.exit("numba is disabled or missing; nothing to compare")
    ds, _ = generate_corpus(SynthConfig(n_records=args.records, seed=0))
    batch = GraphBatch.from_graphs(ds.graphs)
    rng = np.random.default_rng(0)
    print(f"batch: {batch.n_nodes} nodes, {len(batch.src)} directed edges, d={args.hidden}")
    print(f"{'kernel':<26}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (stem, fargs) in kernel_cases(batch, args.hidden, rng).items():
        fallback, jit = getattr(_accel, stem + "_numpy"), getattr(_accel, stem + "_jit")
        a, b = fallback(*fargs), jit(*fargs)
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_allclose(x, y, atol=1e-10)
        t_np = best_of(lambda: fallback(*fargs), args.repeat)
        t_jit = best_of(lambda: jit(*fargs), args.repeat)
        print(f"{name:<26}{1e3 * t_np:>10.2f}{1e3 * t_jit:>10.2f}{t_np / t_jit:>8.1f}x")

    if args.skip_e2e:
        return
    slow, fast = run_e2e(args.records, True), run_e2e(args.records, False)
    diff = float(np.abs(np.array(slow["scores"]) - np.array(fast["scores"])).max())
    print(f"\n5 training epochs on {args.records} records (d=64, 3 layers)")
    print(f"  numpy path  {slow['seconds']:.2f} s")
    print(f"  numba path  {fast['seconds']:.2f} s  ({slow['seconds'] / fast['seconds']:.1f}x)")
    print(f"  max score difference {diff:.1e}")


if __name__ == "__main__":
    main()

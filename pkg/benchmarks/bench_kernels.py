"""Compare the numba and pure-numpy kernel paths.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Kernel timings call both implementations directly.  The end-to-end timing
re-runs a 300 s cosine session in a subprocess with and without
OTSVAD_DISABLE_NUMBA so the dispatcher itself is exercised.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from online_tsvad import _kernels as K

SESSION_SNIPPET = """
import time
from online_tsvad import _kernels
from online_tsvad.detector import CosineDetector
from online_tsvad.pipeline import PipelineConfig, run_session
from online_tsvad.simulator import SimConfig, simulate_session
s = simulate_session(SimConfig(num_speakers=4, noise_sigma=0.05, seed=1))
run_session(s.embeddings[:400], [(0.0, 32.0)], CosineDetector(), PipelineConfig())  # warm-up / jit
t0 = time.perf_counter()
for _ in range(5):
    run_session(s.embeddings, s.vad, CosineDetector(), PipelineConfig())
print(_kernels.USE_NUMBA, (time.perf_counter() - t0) / 5)
"""


def best_of(fn, repeat):
    timer = timeit.Timer(fn)
    n, _ = timer.autorange()
    return min(timer.repeat(repeat, n)) / n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not K.HAS_NUMBA:
        print("numba not installed; nothing to compare")
        return 1

    rng = np.random.default_rng(0)
    print(f"numpy {np.__version__}, python {sys.version.split()[0]}")
    print(f"{'kernel':<20}{'shape':>16}{'numpy us':>12}{'numba us':>12}{'ratio':>8}")
    for T in (25, 200, 3750):
        emb = rng.standard_normal((T, 128))
        labels = (rng.random((T, 4)) < 0.4).astype(np.int8)
        targets = rng.standard_normal((4, 128))
        K.label_sums_numba(emb, labels)
        K.cosine_posteriors_numba(emb, targets, 10.0, -4.0)
        for name, f_np, f_nb in (
            ("label_sums", lambda: K.label_sums_numpy(emb, labels), lambda: K.label_sums_numba(emb, labels)),
            ("cosine_posteriors", lambda: K.cosine_posteriors_numpy(emb, targets, 10.0, -4.0),
             lambda: K.cosine_posteriors_numba(emb, targets, 10.0, -4.0)),
        ):
            a, b = best_of(f_np, args.repeat) * 1e6, best_of(f_nb, args.repeat) * 1e6
            print(f"{name:<20}{f'{T}x128x4':>16}{a:>12.1f}{b:>12.1f}{a / b:>8.2f}")

    print("\nend-to-end 300 s session (4 speakers, cosine detector)")
    for flag in ("1", "0"):
        env = dict(os.environ, OTSVAD_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", SESSION_SNIPPET], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        print(f"  numba={out[0]:<6} {float(out[1]) * 1e3:8.1f} ms/session")
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the numpy fallback.

Times the hot kernels on layer shapes from the cnn(sigma) family plus one
whole-frame forward pass per backend (in a subprocess, since the backend is
fixed at import time), and prints the speedups. Usage:

    python benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from binfer._kernels import available_backends, get_backend
from binfer._kernels.bitops import pack_bits

_FRAME_SNIPPET = """
import time
import numpy as np
from binfer._kernels import active_backend
from binfer.model import build_topology, generate_random_model
from binfer.pipeline import validate_model, run_network

topo = build_topology("1/4")
model = validate_model(topo, generate_random_model(topo, 0))
img = np.random.default_rng(1).integers(0, 256, (32, 32, 3), dtype=np.uint8)
run_network(model, img)  # warm up
best = min(
    (lambda t0: (run_network(model, img), time.perf_counter() - t0)[1])(time.perf_counter())
    for _ in range({repeats})
)
print(f"{{active_backend()}} {{best}}")
"""


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng):
    cases = []

    def bin_case(name, x, y, n):
        w = pack_bits(rng.integers(0, 2, (x, y), dtype=np.uint8))
        inp = pack_bits(rng.integers(0, 2, (n, y), dtype=np.uint8))
        tau = rng.integers(0, y + 2, x).astype(np.int64)
        mode = np.zeros(x, np.uint8)
        cases.append((name, lambda k: k.mvtu_bin_stream(w, inp, y, tau, mode)))

    # conv2 and conv6 of the full-scale network, fc1 of the quarter-scale one
    bin_case("mvtu conv 128x1152, 1024 windows", 128, 1152, 1024)
    bin_case("mvtu conv 512x4608, 64 windows", 512, 4608, 64)
    bin_case("mvtu fc 256x2048", 256, 2048, 1)

    y = 27
    wfx = pack_bits(rng.integers(0, 2, (128, y), dtype=np.uint8))
    px = rng.integers(0, 256, (1024, y)).astype(np.int64)
    taufx = rng.integers(-255 * y, 255 * y, 128).astype(np.int64)
    modefx = np.zeros(128, np.uint8)
    cases.append(
        ("mvtu fixedpoint 128x27, 1024 windows",
         lambda k: k.mvtu_fx_stream(wfx, px, y, taufx, modefx))
    )

    c, padded = 128, 34
    buf = pack_bits(rng.integers(0, 2, padded * padded * c, dtype=np.uint8))
    base = np.arange(32)[:, None] * padded + np.arange(32)[None, :]
    taps = (np.arange(3)[:, None] * padded + np.arange(3)[None, :]).reshape(-1)
    addrs = (base.reshape(-1, 1) + taps[None, :]).astype(np.int64)
    cases.append(
        ("window gather 34x34x128px", lambda k: k.gather_windows(buf, addrs, c, padded * padded))
    )

    pool_words = pack_bits(rng.integers(0, 2, 32 * 32 * 128, dtype=np.uint8))
    cases.append(("or-pool 32x32x128", lambda k: k.or_pool(pool_words, 32, 32, 128)))
    return cases


def frame_time(backend_name: str, repeats: int) -> float:
    env = dict(os.environ, BINFER_KERNELS=backend_name)
    out = subprocess.run(
        [sys.executable, "-c", _FRAME_SNIPPET.format(repeats=repeats)],
        env=env, capture_output=True, text=True, check=True,
    ).stdout.split()
    assert out[0] == backend_name, f"subprocess ran {out[0]}, wanted {backend_name}"
    return float(out[1])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    backends = available_backends()
    if len(backends) < 2:
        print("compiled core not built; timing the numpy fallback only\n")
    rng = np.random.default_rng(0)

    rows = []
    for name, fn in kernel_cases(rng):
        times = {}
        for b in backends:
            k = get_backend(b)
            fn(k)  # warm up
            times[b] = _time(lambda: fn(k), args.repeats)
        rows.append((name, times))

    width = max(len(n) for n, _ in rows) + 2
    header = f"{'kernel':<{width}}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, times in rows:
        line = f"{name:<{width}}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)

    print()
    for b in backends:
        t = frame_time(b, args.repeats)
        print(f"cnn(1/4) full frame [{b:>6}]: {t * 1e3:7.2f} ms  ({1 / t:7.1f} fps)")


if __name__ == "__main__":
    main()

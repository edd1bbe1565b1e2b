"""Times the compiled stepping kernel against the numpy fallback.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from chaostep import _backend, _kernels_py


def bench(paths: int, dim: int, steps: int, repeats: int = 5) -> None:
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=(paths, dim))
    ys = rng.normal(size=(steps, paths, dim))
    a, b, c, d = rng.normal(size=(4, dim))
    dt = 1.0 / steps
    s = np.sqrt(dt)

    def run(mod):
        best = np.inf
        for _ in range(repeats):
            x = x0.copy()
            t0 = time.perf_counter()
            mod.advance_paths_affine(x, ys, a, b, c, d, s, dt)
            best = min(best, time.perf_counter() - t0)
        return best, x

    t_py, x_py = run(_kernels_py)
    t_ext, x_ext = run(_backend)
    same = np.array_equal(x_py, x_ext)
    label = _backend.backend_name()
    print(
        f"paths={paths:6d} dim={dim:3d} steps={steps:3d}  "
        f"numpy {t_py * 1e3:8.2f} ms  {label} {t_ext * 1e3:8.2f} ms  "
        f"speedup {t_py / t_ext:5.2f}x  bit-identical={same}"
    )


if __name__ == "__main__":
    print(f"selected backend: {_backend.backend_name()}")
    bench(16384, 1, 64)
    bench(16384, 2, 64)
    bench(16384, 100, 16)
    bench(65536, 10, 32)

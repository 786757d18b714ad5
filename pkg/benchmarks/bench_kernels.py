"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--threads N]

Prints the median wall time per call for each kernel and backend, and the
speed-up of the compiled one.
"""
import argparse
import statistics
import time

import numpy as np
from threadpoolctl import threadpool_limits

from gunsr import _backend
from gunsr.network import GunTopology, build_gun, gun_backward, gun_forward
from gunsr.resample import bicubic_adjoint, bicubic_resize
from gunsr.tensor import _im2col
from gunsr.training import OptimState, mse_loss, sgd_momentum_step


def timed(fn, repeat):
    fn()  # warm caches and resample plans
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(rng):
    x = rng.standard_normal((16, 16, 40, 40)).astype(np.float32)
    cols = _im2col(x, 3)
    img = rng.random((16, 16, 24, 24)).astype(np.float32)
    grad = rng.standard_normal((16, 16, 40, 40)).astype(np.float32)
    big = rng.random((256, 256)).astype(np.float32)
    big_grad = rng.standard_normal((512, 512)).astype(np.float32)

    def col2im():
        out = np.zeros_like(x)
        _backend.col2im(cols, 3, out)

    model = build_gun(GunTopology(scale=2, steps=2, depth=2, channels=16), 0)
    lr = rng.random((16, 1, 20, 20)).astype(np.float32)
    hr = rng.random((16, 1, 40, 40)).astype(np.float32)

    def train_step():
        m = model.copy()
        opt = OptimState.for_model(m, lr=1e-6)
        out, cache = gun_forward(m, lr, train=True)
        _, g = mse_loss(out, hr)
        sgd_momentum_step(m.params, gun_backward(m, cache, g), opt)

    return {
        "im2col 16x16x40x40 k3": lambda: _im2col(x, 3),
        "col2im 16x16x40x40 k3": col2im,
        "bicubic 24->40 (256 planes)": lambda: bicubic_resize(img, 40, 40),
        "adjoint 40->24 (256 planes)": lambda: bicubic_adjoint(grad, 24, 24),
        "bicubic 256->512 (1 plane)": lambda: bicubic_resize(big, 512, 512),
        "adjoint 512->256 (1 plane)": lambda: bicubic_adjoint(big_grad, 256, 256),
        "train step (batch 16, 20->40)": train_step,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=21)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    backends = _backend.available()
    results = {}
    with threadpool_limits(args.threads):
        for name in backends:
            _backend.use(name)
            for label, fn in cases(np.random.default_rng(0)).items():
                results.setdefault(label, {})[name] = timed(fn, args.repeat)
    head = f"{'kernel':32s}" + "".join(f"{b:>12s}" for b in backends)
    if len(backends) == 2:
        head += f"{'speed-up':>10s}"
    print(head)
    for label, row in results.items():
        line = f"{label:32s}" + "".join(f"{row[b] * 1e3:10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{row['python'] / row['compiled']:9.1f}x"
        print(line)


if __name__ == "__main__":
    main()

"""Compiled kernels against the numpy fallbacks.

Times back-projection (forward and adjoint) of a default 64 x 64 frequency
history onto the 160 x 160 grid, and im2col convolution forward/backward
for the strided layers of the network at training batch size.

    python benchmarks/bench_kernels.py [--batch 32] [--repeat 5]
"""
import argparse
import time

import numpy as np

from sar_atr import _kernels, imaging
from sar_atr.model import feature_shapes
from sar_atr.rfsim import CollectionGeometry, RadarConfig, collect
from sar_atr.shapes import sample_target


def best_of(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bp_cases():
    rng = np.random.default_rng(0)
    hist = collect(sample_target(rng), RadarConfig(), CollectionGeometry(1000.0, 3000.0, 0.4, 1.0),
                   20.0, rng)
    grad = rng.standard_normal((160, 160)) + 1j * rng.standard_normal((160, 160))
    yield "backproject", lambda k: (lambda: imaging.backproject(hist, backend=k))
    yield "backproject_adjoint", lambda k: (
        lambda: imaging.backproject_adjoint(grad, hist, backend=k))


def conv_cases(batch):
    rng = np.random.default_rng(1)
    shapes = feature_shapes()
    for (c, h, _), (o, ho, _) in zip(shapes[:-1], shapes[1:]):
        x = rng.standard_normal((batch, c, h, h)).astype(np.float32)
        w = (rng.standard_normal((o, c, 3, 3)) * 0.1).astype(np.float32)
        b = np.zeros(o, np.float32)
        g = rng.standard_normal((batch, o, ho, ho)).astype(np.float32)
        name = f"conv {c}->{o} @{h}"
        yield name + " fwd", lambda k, x=x, w=w, b=b: (lambda: k.conv_forward(x, w, b, 2, 1))
        yield name + " bwd", lambda k, x=x, w=w, g=g: (
            lambda: k.conv_backward(x, w, g, 2, 1, True, True))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels.compiled_bp is None or _kernels.compiled_conv is None:
        raise SystemExit("compiled kernels are not built; nothing to compare")

    rows = []
    for name, make in bp_cases():
        rows.append((name, best_of(make(_kernels.python_bp), args.repeat),
                     best_of(make(_kernels.compiled_bp), args.repeat)))
    for name, make in conv_cases(args.batch):
        rows.append((name, best_of(make(_kernels.python_conv), args.repeat),
                     best_of(make(_kernels.compiled_conv), args.repeat)))

    print(f"{'kernel':<28} {'python ms':>10} {'compiled ms':>12} {'speed-up':>9}")
    for name, py, cc in rows:
        print(f"{name:<28} {py * 1e3:10.1f} {cc * 1e3:12.1f} {py / cc:8.1f}x")


if __name__ == "__main__":
    main()

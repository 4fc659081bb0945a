"""Compare the compiled and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints median wall time per backend, the speedup and the largest deviation
between the two results.
"""
import argparse
import math
import timeit

import numpy as np

from kerrcat import kernels
from kerrcat.hilbert import HilbertLayout, superposition


def _wigner_case(dim, n):
    rho = superposition([1.42, -1.42], [1.0, 1.0], HilbertLayout(dim)).density()
    xs = np.linspace(-4.42, 4.42, n)
    return (np.ascontiguousarray(rho), xs, xs.copy())


def _snail_case(n):
    phis = np.linspace(-1.5, 1.5, n)
    # reduced parameters of the reference device near the Kerr-free flux
    return (phis, 0.4026 * 2 * math.pi, 0.095, 1.028, 0.0, 0.0)


CASES = {
    "wigner_laguerre D=40 101x101": ("wigner_laguerre", lambda: _wigner_case(40, 101)),
    "wigner_laguerre D=20 41x41": ("wigner_laguerre", lambda: _wigner_case(20, 41)),
    "snail_effective_delta 2001 pts": ("snail_effective_delta", lambda: _snail_case(2001)),
}


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    print(f"{'case':34s} {'backend':8s} {'median s':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for label, (fname, make) in CASES.items():
        case = make()
        times, outs = {}, {}
        for b in backends:
            fn = getattr(kernels.get_backend(b), fname)
            outs[b] = np.asarray(_first(fn(*case)))
            t = timeit.repeat(lambda: fn(*case), number=1, repeat=args.repeat)
            times[b] = float(np.median(t))
        ref = times["python"]
        diff = ""
        if len(backends) == 2:
            a, c = outs["cython"], outs["python"]
            ok = np.isfinite(a) & np.isfinite(c)
            diff = f"{np.max(np.abs(a[ok] - c[ok])):.2e}"
        for b in backends:
            print(f"{label:34s} {b:8s} {times[b]:10.4f} {ref / times[b]:8.1f} {diff if b == 'cython' else '':>11s}")


if __name__ == "__main__":
    main()

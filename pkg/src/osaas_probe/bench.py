"""Timing comparison of the compiled and numpy kernel backends.

Run ``python -m osaas_probe.bench`` to print a table of median call times on
the tensor shapes one CNN training batch produces.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from . import kernels
from .models import CnnConfig

Case = tuple[str, str, tuple]


def cnn_cases(config: CnnConfig = CnnConfig(), batch: int = 32) -> list[Case]:
    """(label, kernel, shapes) for every conv layer in both branches."""
    cases = []
    for branch, seqs, length in (("freq", batch * config.n, config.m), ("comp", batch * config.m, config.n)):
        c_in = 2
        for i, c_out in enumerate(config.branch_filter_widths):
            shape = ((seqs, c_in, length), (c_out, c_in, config.kernel_size))
            cases.append((f"{branch}.conv{i}", "conv1d_forward", shape))
            cases.append((f"{branch}.conv{i}", "conv1d_backward", shape))
            c_in = c_out
    cases.append(("fc1.w", "adam_update", ((config.fc_neurons * config.fc_in,),)))
    cases.append(("selu", "selu_forward", ((batch * config.m * config.n * 16,),)))
    return cases


def _args(kernel: str, shapes: tuple, rng: np.random.Generator):
    if kernel == "conv1d_forward":
        xs, ws = shapes
        return rng.normal(size=xs), rng.normal(size=ws), rng.normal(size=ws[0])
    if kernel == "conv1d_backward":
        xs, ws = shapes
        return rng.normal(size=(xs[0], ws[0], xs[2])), rng.normal(size=xs), rng.normal(size=ws)
    if kernel == "adam_update":
        (n,) = shapes[0]
        return (rng.normal(size=n), rng.normal(size=n), np.zeros(n), np.zeros(n), 1e-3, 0.9, 0.999, 1e-8, 1)
    return (rng.normal(size=shapes[0]),)


def run(repeat: int = 7, number: int = 20, seed: int = 0) -> list[dict]:
    """Median seconds per call for each case and available backend."""
    rng = np.random.default_rng(seed)
    mods = kernels.backends()
    rows = []
    for label, kernel, shapes in cnn_cases():
        args = _args(kernel, shapes, rng)
        row = {"layer": label, "kernel": kernel, "shape": shapes}
        for name, mod in mods.items():
            fn = getattr(mod, kernel)
            # adam mutates its buffers; copies keep every repeat comparable
            call = (lambda: fn(*[a.copy() if isinstance(a, np.ndarray) else a for a in args])) \
                if kernel == "adam_update" else (lambda: fn(*args))
            times = timeit.repeat(call, repeat=repeat, number=number)
            row[name] = float(np.median(times)) / number
        rows.append(row)
    return rows


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description="benchmark kernel backends")
    p.add_argument("--repeat", type=int, default=7)
    p.add_argument("--number", type=int, default=20)
    a = p.parse_args(argv)
    rows = run(a.repeat, a.number)
    names = [n for n in kernels.backends()]
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'layer':<12} {'kernel':<16} " + " ".join(f"{n + ' ms':>11}" for n in names) + "  speedup")
    for r in rows:
        cells = " ".join(f"{r[n] * 1e3:>11.4f}" for n in names)
        speed = f"{r['python'] / r['cython']:7.2f}x" if "cython" in r else "      -"
        print(f"{r['layer']:<12} {r['kernel']:<16} {cells}  {speed}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Central-difference gradient probes shared by unit and acceptance tests."""
import numpy as np

from osaas_probe.tensor import numerical_gradient, relative_error

STEP = 1e-6
TOLERANCE = 1e-4


def probe(f, arrays: dict, grads: dict, n_probes: int, rng, step: float = STEP) -> float:
    """Worst relative error over ``n_probes`` random entries drawn across ``arrays``.

    ``f()`` must read the arrays in place; each probed entry is perturbed and
    restored.
    """
    names = list(arrays)
    sizes = np.array([arrays[k].size for k in names])
    worst = 0.0
    for flat in rng.choice(sizes.sum(), size=n_probes, replace=n_probes > sizes.sum()):
        i = int(np.searchsorted(np.cumsum(sizes), flat, side="right"))
        k = names[i]
        idx = np.unravel_index(int(flat - (sizes[:i].sum() if i else 0)), arrays[k].shape)
        num = numerical_gradient(f, arrays[k], idx, step)
        worst = max(worst, relative_error(float(grads[k][idx]), num))
    return worst

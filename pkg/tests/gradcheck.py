"""Central finite-difference gradient oracle shared across test modules."""
import numpy as np

from serenade import tensorcore as tc

STEP = 1e-4


def fd_max_rel_error(build, leaves, step=STEP, coords=None, rng=None):
    """Worst relative error between analytic and numeric gradients.

    ``build`` maps {name: leaf Node} to a scalar Node; ``leaves`` maps names
    to arrays (mutated in place during probing, restored afterwards). With
    ``coords`` set, at most that many coordinates per leaf are probed
    (seeded choice); otherwise every coordinate is checked.
    """
    nodes = {name: tc.parameter(arr) for name, arr in leaves.items()}
    root = build(nodes)
    tc.backward(root)
    grads = {name: (node.grad if node.grad is not None
                    else np.zeros_like(node.value))
             for name, node in nodes.items()}

    def value():
        return float(build(nodes).value[0, 0])

    worst = 0.0
    for name, arr in leaves.items():
        flat = nodes[name].value.reshape(-1)
        grad = grads[name].reshape(-1)
        indices = np.arange(flat.size)
        if coords is not None and flat.size > coords:
            indices = (rng or np.random.default_rng(0)).choice(
                flat.size, size=coords, replace=False)
        for i in indices:
            orig = flat[i]
            flat[i] = orig + step
            up = value()
            flat[i] = orig - step
            down = value()
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            analytic = grad[i]
            rel = abs(analytic - numeric) / max(1e-3, abs(analytic),
                                                abs(numeric))
            worst = max(worst, rel)
    return worst

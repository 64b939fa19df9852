"""Central finite-difference oracle shared by the gradient tests."""


def relative_error(num: float, ana: float, floor: float = 1e-10) -> float:
    return abs(num - ana) / max(abs(num), abs(ana), floor)


def check_gradients(loss_fn, params, rng, n_entries=20, step=1e-6):
    """Max relative error of ``param.grad`` against central differences.

    ``loss_fn()`` must rebuild the graph from the current parameter values
    and return a scalar Tensor; gradients are taken from one backward pass.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ana in zip(params, analytic):
        flat = p.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(n_entries, flat.size), replace=False)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn().item()
            flat[i] = orig - step
            down = loss_fn().item()
            flat[i] = orig
            worst = max(worst, relative_error((up - down) / (2 * step), ana.reshape(-1)[i]))
    return worst

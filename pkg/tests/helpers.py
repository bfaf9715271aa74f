"""Independent finite-difference oracles shared by the gradient tests."""

import torch


def central_diff(fn, x: torch.Tensor, idx, h=1e-4) -> float:
    """d fn / d x[idx] by central differences; ``x`` is modified in place and restored."""
    with torch.no_grad():
        orig = x[idx].item()
        x[idx] = orig + h
        up = float(fn())
        x[idx] = orig - h
        down = float(fn())
        x[idx] = orig
    return (up - down) / (2 * h)


def rel_err(a, b) -> float:
    a = torch.as_tensor(a, dtype=torch.float64).flatten()
    b = torch.as_tensor(b, dtype=torch.float64).flatten()
    denom = max(float(b.norm()), float(a.norm()), 1e-12)
    return float((a - b).norm()) / denom


def check_tensor_grads(fn, tensors, h=1e-4, max_entries=None, gen=None, tol=1e-4):
    """Compare autograd against central differences for every tensor in ``tensors``.

    ``fn`` returns a scalar tensor. When ``max_entries`` is given, only that many
    randomly chosen entries of each tensor are probed. An entry whose step-``h``
    quotient straddles a ReLU kink is probed again at ``h / 100``; the number of
    such entries is stored in ``check_tensor_grads.kinks``. Returns the worst
    relative error over all tensors.
    """
    for t in tensors:
        t.grad = None
    loss = fn()
    loss.backward()
    analytic = [t.grad.detach().clone() for t in tensors]
    worst = 0.0
    kinks = 0
    for t, g in zip(tensors, analytic):
        n = t.numel()
        if max_entries is None or n <= max_entries:
            flat_idx = range(n)
        else:
            flat_idx = torch.randperm(n, generator=gen)[:max_entries].tolist()
        num, ana = [], []
        for k in flat_idx:
            idx = tuple(int(i) for i in torch.unravel_index(torch.tensor(k), t.shape))
            a = g[idx].item()
            d = central_diff(fn, t, idx, h)
            if abs(d - a) > tol * max(abs(a), abs(d), 1.0):
                fine = central_diff(fn, t, idx, h / 100)
                coarse_half = central_diff(fn, t, idx, h / 2)
                # a kink makes the quotient depend on the step; smooth functions do not
                if abs(coarse_half - d) > tol * max(abs(d), 1.0):
                    kinks += 1
                    d = fine
            num.append(d)
            ana.append(a)
        worst = max(worst, rel_err(ana, num))
    check_tensor_grads.kinks = kinks
    return worst

"""Shared test utilities: finite-difference checks and fixture caching."""

import hashlib
import json
import os

import numpy as np
import torch


def central_fd_param_check(module, compute_loss, rel_tol=1e-4, h=1e-5, samples_per_param=1,
                           seed=0, min_checked=5):
    """Compare autograd gradients with central finite differences.

    `compute_loss` must be a zero-argument callable evaluating the loss with
    the module's current parameters (double precision expected). One random
    element per parameter tensor is probed.
    """
    for p in module.parameters():
        p.grad = None
    loss = compute_loss()
    loss.backward()
    rng = np.random.default_rng(seed)
    checked = 0
    worst = 0.0
    for name, p in module.named_parameters():
        if p.grad is None or p.grad.abs().max() == 0:
            continue
        flat = p.detach().reshape(-1)
        gflat = p.grad.reshape(-1)
        for _ in range(samples_per_param):
            idx = int(rng.integers(flat.numel()))
            with torch.no_grad():
                orig = float(flat[idx])
                flat[idx] = orig + h
                f1 = float(compute_loss().detach())
                flat[idx] = orig - h
                f0 = float(compute_loss().detach())
                flat[idx] = orig
            fd = (f1 - f0) / (2 * h)
            if abs(fd) < 1e-9:
                continue
            rel = abs(float(gflat[idx]) - fd) / abs(fd)
            worst = max(worst, rel)
            assert rel < rel_tol, (name, rel)
            checked += 1
    assert checked >= min_checked, f"only {checked} parameters checked"
    return worst, checked


def config_key(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:16]


def cache_root() -> str:
    root = os.environ.get("TRIRECON_TEST_CACHE", os.path.join(os.path.dirname(__file__), "_cache"))
    os.makedirs(root, exist_ok=True)
    return root


def cached_build(name, key, builder):
    """Build-once directory cache: builder(path) populates it on first use."""
    path = os.path.join(cache_root(), f"{name}-{key}")
    marker = os.path.join(path, ".complete")
    if not os.path.exists(marker):
        os.makedirs(path, exist_ok=True)
        builder(path)
        with open(marker, "w") as f:
            f.write("ok\n")
    return path

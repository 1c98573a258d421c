import itertools
import math

import pytest

from hybridcp import portfolio, tsptw


def brute_force_tsptw(instance):
    """Best objective (negated tour length) over all window-feasible
    permutations, or None when there is none."""
    best = None
    for perm in itertools.permutations(range(2, instance.n + 1)):
        t, v, ok = 0, 1, True
        for a in perm:
            t += instance.dist[v - 1][a - 1]
            lo, hi = instance.windows[a - 1]
            if t > hi:
                ok = False
                break
            t = max(t, lo)
            v = a
        if ok:
            length = sum(instance.dist[a - 1][b - 1] for a, b in zip((1,) + perm, perm + (1,)))
            if best is None or -length > best:
                best = -length
    return best


def direct_port_value(instance, selection):
    """Portfolio objective written out from scratch (no package helpers)."""
    cost = sum(b for b, x in zip(instance.b, selection) if x)
    if cost > instance.B:
        return None
    s1 = sum(m for m, x in zip(instance.mu, selection) if x)
    s2 = sum(s ** 2 for s, x in zip(instance.sigma, selection) if x)
    s3 = sum(g ** 3 for g, x in zip(instance.gamma, selection) if x)
    s4 = sum(k ** 4 for k, x in zip(instance.kappa, selection) if x)
    l1, l2, l3, l4 = instance.lambdas
    if instance.mode == "discrete":
        def fl(x, k):
            r = int(round(x ** (1 / k))) if x > 0 else 0
            while r ** k > x:
                r -= 1
            while (r + 1) ** k <= x:
                r += 1
            return r
        return l1 * s1 - l2 * fl(s2, 2) + l3 * fl(s3, 3) - l4 * fl(s4, 4)
    return l1 * s1 - l2 * math.sqrt(s2) + l3 * s3 ** (1 / 3) - l4 * s4 ** 0.25


def brute_force_port(instance):
    best = None
    for sel in itertools.product((0, 1), repeat=instance.n):
        val = direct_port_value(instance, sel)
        if val is not None and (best is None or val > best):
            best = val
    return best


@pytest.fixture
def tsp4():
    """Four customers; two optimal tours of length 24: 1-2-3-4-1 and 1-4-3-2-1."""
    coords = ((0, 0), (3, 4), (6, 8), (0, 8))
    return tsptw.TsptwInstance(
        n=4,
        coords=coords,
        dist=tsptw.distance_matrix(coords),
        windows=((0, 100), (5, 20), (10, 15), (0, 50)),
    )


@pytest.fixture
def port2():
    return portfolio.PortInstance(
        n=2, b=(30, 40), mu=(50.0, 60.0), sigma=(10.0, 30.0), gamma=(20.0, 10.0),
        kappa=(5.0, 25.0), B=35,
    )


def finite_difference_check(loss_fn, w, h=1e-4):
    """Relative errors between the recorded gradient of ``loss_fn(w)`` and
    central differences, one entry per parameter coordinate."""
    import numpy as np
    from hybridcp.nn import backward

    analytic = np.concatenate([g.ravel() for g in backward(loss_fn(w), w).values()])
    base = w.flat().copy()
    numeric = np.zeros_like(base)
    for k in range(base.size):
        for sign in (1, -1):
            vec = base.copy()
            vec[k] += sign * h
            w.set_flat(vec)
            numeric[k] += sign * float(loss_fn(w).data)
        numeric[k] /= 2 * h
    w.set_flat(base)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return np.abs(analytic - numeric) / denom


ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def report(request):
    """Records one pass/fail line per acceptance criterion for the run summary."""
    lines = ACCEPTANCE_LINES

    def add(number: int, title: str, ok: bool, detail: str):
        lines[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(lines[number])
        assert ok, detail

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])

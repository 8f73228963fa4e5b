import numpy as np
import pytest

from blurinterp.weights import WeightStore

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_store(rng, shapes, scale=0.3, bias_scale=0.1):
    """Store with uniform random kernels and biases for the given path->shape map."""
    store = WeightStore()
    for path, shape in shapes.items():
        s = scale if path.endswith("/kernel") else bias_scale
        store[path] = rng.uniform(-s, s, size=shape)
    return store


def tiny_boost_shapes(agg=6, flow=5, width=4, hidden=4):
    """Reduced-width Mixer + GRU booster layout for brute-force comparisons."""
    shapes = {}

    def conv(path, ci, co, kh, kw=None):
        kw = kh if kw is None else kw
        shapes[f"{path}/kernel"] = (co, ci, kh, kw)
        shapes[f"{path}/bias"] = (co,)

    conv("boost/mixer/agg0", agg, hidden, 7)
    conv("boost/mixer/agg1", hidden, hidden, 3)
    conv("boost/mixer/flow0", flow, hidden, 7)
    conv("boost/mixer/flow1", hidden, hidden, 3)
    conv("boost/mixer/fuse0", 2 * hidden, width, 3)
    conv("boost/mixer/fuse1", width, width, 3)
    for g in "zrq":
        conv(f"boost/gb/{g}h", 2 * width, width, 1, 5)
        conv(f"boost/gb/{g}v", 2 * width, width, 5, 1)
    conv("boost/gb/delta0", width, hidden, 3)
    conv("boost/gb/delta1", hidden, 5, 3)
    return shapes

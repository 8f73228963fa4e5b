import numpy as np
import pytest

from blurinterp.arch import baseline_shapes
from blurinterp.fac import FacWeights, bolster, fac_backward, fac_correlate, fac_fb_forward
from blurinterp.gradcheck import check_fac, random_fac_weights
from blurinterp.tensor import ConvSpec, ShapeError, resb_stack
from blurinterp.weights import WeightStore

from conftest import random_store
from oracles import bolster_ref, fac_loops, rel_err


def _identity_weights(c=1):
    eye = np.eye(c).reshape(c, c, 1, 1)
    z = np.zeros(c)
    ident = ConvSpec(eye, z)
    gate0 = ConvSpec.same(np.zeros((c, 2 * c, 3, 3)), z)
    gate1 = ConvSpec.same(np.zeros((1, c, 3, 3)), np.zeros(1))
    return FacWeights(ident, ident, ident, ident, gate0, gate1)


def test_scalar_correlation():
    w = _identity_weights()
    F0 = np.full((1, 1, 1, 1), 2.0, np.float32)
    F1 = np.full((1, 1, 1, 1), 3.0, np.float32)
    fac = fac_correlate(F0, F1, np.zeros((1, 2, 1, 1)), w)
    assert fac[0, 0, 0, 0] == 18.0
    assert bolster(F0, fac, w)[0, 0, 0, 0] == 10.0


def test_zero_counterpart_annihilates(rng):
    w = random_fac_weights(rng, 4)
    F0 = rng.standard_normal((1, 4, 5, 5))
    flow = rng.uniform(-2, 2, (1, 2, 5, 5))
    assert not fac_correlate(F0, np.zeros_like(F0), flow, w).any()


def test_correlation_matches_loops_zero_flow(rng):
    shapes = {k: v for k, v in baseline_shapes().items() if k.startswith("backbone/facfb/fac/")}
    store = random_store(rng, shapes, scale=0.2)
    w = FacWeights.from_store(store, "backbone/facfb/fac")
    F0 = rng.standard_normal((1, 64, 6, 6)).astype(np.float32)
    F1 = rng.standard_normal((1, 64, 6, 6)).astype(np.float32)
    flow = np.zeros((1, 2, 6, 6))
    ref = fac_loops(F0, F1, flow, w.query.kernel, w.key.kernel, w.value.kernel)
    assert rel_err(fac_correlate(F0, F1, flow, w), ref) < 1e-5


def test_correlation_matches_loops_random_flow(rng):
    w = random_fac_weights(rng, 5)
    F0 = rng.standard_normal((2, 5, 6, 7))
    F1 = rng.standard_normal((2, 5, 6, 7))
    flow = rng.uniform(-3, 3, (2, 2, 6, 7))
    ref = fac_loops(F0, F1, flow, w.query.kernel, w.key.kernel, w.value.kernel)
    assert rel_err(fac_correlate(F0, F1, flow, w), ref) < 1e-12


def test_homogeneity(rng):
    w = random_fac_weights(rng, 4)
    F0 = rng.standard_normal((1, 4, 5, 5))
    F1 = rng.standard_normal((1, 4, 5, 5))
    flow = rng.uniform(-1, 1, (1, 2, 5, 5))
    base = fac_correlate(F0, F1, flow, w)
    assert rel_err(fac_correlate(F0, 2.5 * F1, flow, w), 2.5 ** 2 * base) < 1e-12
    assert rel_err(fac_correlate(-1.5 * F0, F1, flow, w), -1.5 * base) < 1e-12


def test_biased_projections_break_homogeneity(rng):
    w = random_fac_weights(rng, 4, use_bias=True)
    F0 = rng.standard_normal((1, 4, 5, 5))
    F1 = rng.standard_normal((1, 4, 5, 5))
    flow = np.zeros((1, 2, 5, 5))
    base = fac_correlate(F0, F1, flow, w)
    assert rel_err(fac_correlate(F0, 2.0 * F1, flow, w), 4.0 * base) > 1e-3


def test_bolster_zero_gate_is_average(rng):
    w = _identity_weights(3)
    F0 = rng.standard_normal((1, 3, 4, 4))
    fac = rng.standard_normal((1, 3, 4, 4))
    assert rel_err(bolster(F0, fac, w), (F0 + fac) / 2) < 1e-12


def test_bolster_equal_terms(rng):
    w = random_fac_weights(rng, 3)
    w = FacWeights(w.query, w.key, w.value, _identity_weights(3).embed, w.gate0, w.gate1)
    F0 = rng.standard_normal((1, 3, 4, 4))
    assert rel_err(bolster(F0, F0, w), F0) < 1e-12


def test_bolster_matches_composition_and_is_convex(rng):
    w = random_fac_weights(rng, 4, scale=1.0)
    F0 = rng.standard_normal((1, 4, 6, 6))
    fac = rng.standard_normal((1, 4, 6, 6))
    out = bolster(F0, fac, w)
    ref = bolster_ref(F0, fac, w.embed.kernel, w.embed.bias, w.gate0.kernel, w.gate0.bias,
                      w.gate1.kernel, w.gate1.bias)
    assert rel_err(out, ref) < 1e-12
    E = w.embed.kernel[:, :, 0, 0] @ fac.reshape(4, -1) + w.embed.bias[:, None]
    E = E.reshape(F0.shape)
    assert np.all(out >= np.minimum(F0, E) - 1e-12) and np.all(out <= np.maximum(F0, E) + 1e-12)


def test_bolster_shape_mismatch():
    with pytest.raises(ShapeError):
        bolster(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 5)), _identity_weights(3))


def _facfb_store(rng, zero_encoder=False):
    shapes = {k: v for k, v in baseline_shapes().items() if k.startswith("backbone/facfb/")}
    store = random_store(rng, shapes, scale=0.05)
    if zero_encoder:
        for k in list(store):
            if "/encoder/" in k:
                store[k] = np.zeros_like(store[k])
    return store


def test_facfb_symmetry_and_composition(rng):
    store = _facfb_store(rng)
    w = FacWeights.from_store(store, "backbone/facfb/fac")
    F0p = np.tanh(rng.standard_normal((1, 64, 6, 6))).astype(np.float32)
    F1p = np.tanh(rng.standard_normal((1, 64, 6, 6))).astype(np.float32)
    f01 = rng.uniform(-1, 1, (1, 2, 6, 6)).astype(np.float32)
    f10 = rng.uniform(-1, 1, (1, 2, 6, 6)).astype(np.float32)
    a0, a1 = fac_fb_forward(F0p, F1p, f01, f10, w, store, "backbone/facfb/encoder")
    b0, b1 = fac_fb_forward(F1p, F0p, f10, f01, w, store, "backbone/facfb/encoder")
    assert np.array_equal(a0, b1) and np.array_equal(a1, b0)
    F0 = resb_stack(F0p, store, "backbone/facfb/encoder", 5)
    F1 = resb_stack(F1p, store, "backbone/facfb/encoder", 5)
    assert np.array_equal(a0, bolster(F0, fac_correlate(F0, F1, f01, w), w))
    assert np.array_equal(a1, bolster(F1, fac_correlate(F1, F0, f10, w), w))


def test_facfb_zero_encoder(rng):
    store = _facfb_store(rng, zero_encoder=True)
    w = FacWeights.from_store(store, "backbone/facfb/fac")
    F0p = rng.standard_normal((1, 64, 4, 4)).astype(np.float32)
    F1p = rng.standard_normal((1, 64, 4, 4)).astype(np.float32)
    f = np.zeros((1, 2, 4, 4), np.float32)
    a0, _ = fac_fb_forward(F0p, F1p, f, f, w, store, "backbone/facfb/encoder")
    assert np.array_equal(a0, bolster(F0p, fac_correlate(F0p, F1p, f, w), w))


def test_encoder_weights_are_shared():
    paths = [k for k in baseline_shapes() if "/facfb/encoder/" in k]
    assert len(paths) == 5 * 2 * 2
    assert not any("encoder0" in p or "encoder1" in p for p in paths)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("use_bias", [False, True])
def test_fac_backward_finite_differences(seed, use_bias):
    errs = check_fac(seed, use_bias=use_bias)
    assert errs.pop("flow") == 0.0
    assert max(errs.values()) < 1e-4, errs


def test_fac_backward_zero_upstream(rng):
    w = random_fac_weights(rng, 3)
    F0 = rng.standard_normal((1, 3, 4, 4))
    F1 = rng.standard_normal((1, 3, 4, 4))
    grads = fac_backward(F0, F1, rng.uniform(-1, 1, (1, 2, 4, 4)), w, np.zeros((1, 3, 4, 4)))
    assert all(not g.any() for g in grads.values())

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blurinterp.gradcheck import check_warp, generic_flow, numerical_grad, relative_error
from blurinterp.warp import (
    TriFlow,
    approx_intermediate_flows,
    backward_warp,
    cfr_reverse,
    fwb,
    pwb,
    warp_backward_grad,
)

from oracles import rel_err, splat_loops, warp_loops


def _tri(flow0, flow1, logit):
    return TriFlow(flow0, flow1, logit)


def test_approx_intermediate_flows_endpoints(rng):
    f01 = rng.standard_normal((1, 2, 3, 3)).astype(np.float32)
    f10 = rng.standard_normal((1, 2, 3, 3)).astype(np.float32)
    f0t, f1t = approx_intermediate_flows(f01, f10, 0.0)
    assert not f0t.any() and np.array_equal(f1t, f10)
    f0t, f1t = approx_intermediate_flows(f01, f10, 1.0)
    assert np.array_equal(f0t, f01) and not f1t.any()


def test_approx_intermediate_flows_midpoint():
    f01 = np.zeros((1, 2, 1, 1), np.float32)
    f01[0, :, 0, 0] = (2, -4)
    f0t, _ = approx_intermediate_flows(f01, np.zeros_like(f01), 0.5)
    assert f0t[0, :, 0, 0].tolist() == [1.0, -2.0]


def test_approx_intermediate_flows_rejects_t():
    z = np.zeros((1, 2, 2, 2))
    with pytest.raises(ValueError):
        approx_intermediate_flows(z, z, 1.5)


def test_zero_flow_warp_is_identity(rng):
    src = rng.standard_normal((2, 3, 5, 4)).astype(np.float32)
    assert np.array_equal(backward_warp(src, np.zeros((2, 2, 5, 4), np.float32)), src)


def test_half_pixel_warp_with_clamp():
    src = np.array([[[[0.0, 1.0]]]], np.float32)
    flow = np.zeros((1, 2, 1, 2), np.float32)
    flow[:, 0] = 0.5
    out = backward_warp(src, flow)
    assert out[0, 0, 0].tolist() == [0.5, 1.0]


def test_integer_flow_is_gather(rng):
    src = rng.standard_normal((1, 2, 6, 6)).astype(np.float32)
    flow = np.zeros((1, 2, 6, 6), np.float32)
    flow[:, 0, :, :4] = 2
    flow[:, 1, 1:, :] = -1
    out = backward_warp(src, flow)
    ys, xs = np.meshgrid(np.arange(6), np.arange(6), indexing="ij")
    tx = xs + flow[0, 0].astype(int)
    ty = ys + flow[0, 1].astype(int)
    assert np.array_equal(out[0], src[0][:, ty, tx])


def test_warp_matches_loop_oracle(rng):
    for _ in range(10):
        src = rng.standard_normal((2, 3, 5, 7))
        flow = rng.uniform(-3, 3, (2, 2, 5, 7))
        assert rel_err(backward_warp(src, flow), warp_loops(src, flow)) < 1e-12


def test_warp_grad_zero_flow_ones(rng):
    src = rng.standard_normal((1, 2, 5, 5))
    gs, _ = warp_backward_grad(src, np.zeros((1, 2, 5, 5)), np.ones((1, 2, 5, 5)))
    assert np.array_equal(gs, np.ones_like(gs))


def test_warp_grad_block_flag(rng):
    src = rng.standard_normal((1, 2, 5, 5))
    flow = rng.uniform(-1, 1, (1, 2, 5, 5))
    _, gf = warp_backward_grad(src, flow, rng.standard_normal(src.shape), block_flow_grad=True)
    assert not gf.any()


@pytest.mark.parametrize("seed", range(5))
def test_warp_grad_finite_differences(seed):
    assert check_warp(seed) < 1e-4


def test_warp_grad_with_out_of_frame_samples(rng):
    # clamped samples: flow gradient vanishes, src gradient still exact
    src = rng.standard_normal((1, 1, 4, 4))
    flow = generic_flow(rng, 1, 4, 4)
    flow[0, 0, 0, 0] = -5.3
    up = rng.standard_normal(src.shape)
    gs, gf = warp_backward_grad(src, flow, up)
    loss = lambda: float((backward_warp(src, flow) * up).sum())
    assert relative_error(gs, numerical_grad(loss, src)) < 1e-8
    assert gf[0, 0, 0, 0] == 0.0


# -- CFR -----------------------------------------------------------------------

def test_cfr_zero_flows():
    z = np.zeros((1, 2, 4, 4), np.float32)
    a, b = cfr_reverse(z, z, 0.5)
    assert not a.any() and not b.any()


@pytest.mark.parametrize("t", [0.125, 0.5, 0.75])
@pytest.mark.parametrize("c", [1.0, 2.6, -3.2])
def test_cfr_uniform_translation(t, c):
    f01 = np.zeros((1, 2, 9, 10), np.float32)
    f01[:, 0] = c
    f0t, f1t = approx_intermediate_flows(f01, -f01, t)
    ft0, ft1 = cfr_reverse(f0t, f1t, t)
    inner = (slice(None), slice(None), slice(1, -1), slice(1, -1))
    assert np.abs(ft0[inner][:, 0] + t * c).max() < 1e-5
    assert np.abs(ft1[inner][:, 0] - (1 - t) * c).max() < 1e-5
    assert np.abs(ft0[:, 1]).max() < 1e-5 and np.abs(ft1[:, 1]).max() < 1e-5


def test_cfr_single_moving_pixel_matches_splat_loop():
    f0t = np.zeros((1, 2, 6, 6))
    f0t[0, :, 2, 2] = (1.3, 0.6)
    f1t = np.zeros_like(f0t)
    ft0, _ = cfr_reverse(f0t, f1t, 0.5)
    acc, wsum = splat_loops(-f0t, f0t)
    ref = np.where(wsum >= 1e-6, acc / np.maximum(wsum, 1e-6), 0.0)
    assert rel_err(ft0, ref) < 1e-12
    # the landing site (3.3, 2.6) spreads over (2..3, 3..4); the source site itself is a hole
    assert ft0[0, 0, 3, 3] < 0 and ft0[0, 0, 2, 4] < 0


def test_cfr_random_matches_splat_loop(rng):
    for _ in range(5):
        f0t = rng.uniform(-2, 2, (1, 2, 5, 6))
        f1t = rng.uniform(-2, 2, (1, 2, 5, 6))
        t = 0.375
        ft0, ft1 = cfr_reverse(f0t, f1t, t)
        a0, w0 = splat_loops(-f0t, f0t)
        a1, w1 = splat_loops(-f1t, f1t)
        r0 = np.where(w0 >= 1e-6, a0 / np.maximum(w0, 1e-6), 0.0)
        r1 = np.where(w1 >= 1e-6, a1 / np.maximum(w1, 1e-6), 0.0)
        h0, h1 = w0 < 1e-6, w1 < 1e-6
        r0, r1 = np.where(h0 & ~h1, -t / (1 - t) * r1, r0), np.where(h1 & ~h0, -(1 - t) / t * r0, r1)
        assert np.abs(ft0 - r0).max() < 1e-12 and np.abs(ft1 - r1).max() < 1e-12
        assert np.isfinite(ft0).all() and np.isfinite(ft1).all()


# -- blends --------------------------------------------------------------------

@pytest.mark.parametrize("blend", [fwb, pwb])
def test_blend_endpoints_exact(rng, blend):
    F0 = rng.standard_normal((1, 4, 5, 5)).astype(np.float32)
    F1 = rng.standard_normal((1, 4, 5, 5)).astype(np.float32)
    logit = rng.standard_normal((1, 1, 5, 5)).astype(np.float32) * 3
    z = np.zeros((1, 2, 5, 5), np.float32)
    other = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
    assert np.array_equal(blend(F0, F1, _tri(z, other, logit), 0.0), F0)
    assert np.array_equal(blend(F0, F1, _tri(other, z, logit), 1.0), F1)


@pytest.mark.parametrize("blend", [fwb, pwb])
def test_blend_zero_logit_midpoint_is_mean(rng, blend):
    F0 = rng.standard_normal((1, 3, 4, 4)).astype(np.float32)
    F1 = rng.standard_normal((1, 3, 4, 4)).astype(np.float32)
    z = np.zeros((1, 2, 4, 4), np.float32)
    out = blend(F0, F1, _tri(z, z, np.zeros((1, 1, 4, 4))), 0.5)
    assert np.allclose(out, (F0.astype(np.float64) + F1) / 2, atol=1e-6)


@pytest.mark.parametrize("blend", [fwb, pwb])
def test_blend_saturated_logit(rng, blend):
    F0 = rng.uniform(0, 1, (1, 3, 4, 4)).astype(np.float32)
    F1 = rng.uniform(0, 1, (1, 3, 4, 4)).astype(np.float32)
    f0 = rng.uniform(-1, 1, (1, 2, 4, 4)).astype(np.float32)
    f1 = rng.uniform(-1, 1, (1, 2, 4, 4)).astype(np.float32)
    out = blend(F0, F1, _tri(f0, f1, np.full((1, 1, 4, 4), 20.0)), 0.5)
    assert np.abs(out - backward_warp(F0, f0)).max() < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.integers(0, 2**31 - 1))
def test_blend_is_convex(t, seed):
    r = np.random.default_rng(seed)
    F0 = r.standard_normal((1, 3, 5, 5)).astype(np.float32)
    F1 = r.standard_normal((1, 3, 5, 5)).astype(np.float32)
    f32 = lambda a: a.astype(np.float32)
    tri = _tri(f32(r.uniform(-2, 2, (1, 2, 5, 5))), f32(r.uniform(-2, 2, (1, 2, 5, 5))),
               f32(r.standard_normal((1, 1, 5, 5)) * 5))
    out = fwb(F0, F1, tri, t)
    w0 = backward_warp(F0, tri.flow_t0)
    w1 = backward_warp(F1, tri.flow_t1)
    assert np.all(out >= np.minimum(w0, w1)) and np.all(out <= np.maximum(w0, w1))


@given(st.floats(-1e3, 1e3))
def test_occlusion_weights_sum_to_one(logit):
    o0, o1 = _tri(np.zeros((1, 2, 1, 1)), np.zeros((1, 2, 1, 1)), np.full((1, 1, 1, 1), logit)).occlusion_weights()
    assert (o0 + o1)[0, 0, 0, 0] == 1.0


def test_triflow_layout_checks():
    with pytest.raises(ValueError):
        TriFlow(np.zeros((1, 3, 2, 2)), np.zeros((1, 2, 2, 2)), np.zeros((1, 1, 2, 2)))
    stack = np.arange(5 * 4, dtype=np.float32).reshape(1, 5, 2, 2)
    assert np.array_equal(TriFlow.from_stack(stack).stack(), stack)


@pytest.mark.parametrize("logit", [-60.0, -25.0, 25.0, 60.0])
def test_blend_endpoints_with_saturated_logits(rng, logit):
    F0 = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
    F1 = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
    z = np.zeros((1, 2, 4, 4), np.float32)
    tri = _tri(z, z, np.full((1, 1, 4, 4), logit, np.float32))
    assert np.array_equal(fwb(F0, F1, tri, 0.0), F0)
    assert np.array_equal(fwb(F0, F1, tri, 1.0), F1)
    mid = fwb(F0, F1, tri, 0.5)
    assert np.isfinite(mid).all()
    assert np.array_equal(mid, F0 if logit > 0 else F1)

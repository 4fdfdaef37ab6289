import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dplet.enhancement import (
    LocalEnhancement,
    PlainEmbedding,
    TokenEmbedding,
    enhance,
    enhancement_shapes,
    project,
    tcn_block,
)
from dplet.errors import ShapeError
from dplet.numerics import Tensor, backward, mse_loss, mul
from dplet.numerics import sum as tsum
from fdcheck import max_rel_err


def make(patch_len=4, d_model=3, seed=0, kernel_size=3, dilations=(1, 2)):
    return LocalEnhancement.create(patch_len, d_model, np.random.default_rng(seed), kernel_size, dilations)


def test_identity_projection():
    x = np.random.default_rng(0).standard_normal((2, 5, 4))
    out = project(Tensor(x), Tensor(np.eye(4)), Tensor(np.zeros(4)))
    assert np.array_equal(out.data, x)


def test_projection_shape():
    rng = np.random.default_rng(1)
    out = project(Tensor(rng.standard_normal((2, 5, 16))), Tensor(rng.standard_normal((16, 8))))
    assert out.shape == (2, 5, 8)
    with pytest.raises(ShapeError):
        project(Tensor(np.ones((2, 5, 15))), Tensor(np.ones((16, 8))))


def test_projection_gradient():
    rng = np.random.default_rng(2)
    arrays = {"x": rng.standard_normal((2, 5, 4)), "w": rng.standard_normal((4, 3)), "b": rng.standard_normal(3)}
    assert max_rel_err(lambda d: tsum(project(d["x"], d["w"], d["b"])), arrays, ["w", "b"]) <= 1e-5


def test_tcn_zero_weights_give_zero():
    d = 3
    convs = [(Tensor(np.zeros((d, d, 3))), Tensor(np.zeros(d))) for _ in range(2)]
    out = tcn_block(Tensor(np.random.default_rng(3).standard_normal((2, 6, d))), convs, (1, 2))
    assert np.array_equal(out.data, np.zeros((2, 6, d)))


def test_tcn_hand_convolution_before_activation():
    # d_model = 1, k = 2, w = [1, 1], dilation 1: pre-activation [1, 3, 5]
    from scipy.special import erf

    tokens = Tensor(np.array([[[1.0], [2.0], [3.0]]]))
    out = tcn_block(tokens, [(Tensor(np.ones((1, 1, 2))), None)], (1,))
    pre = np.array([1.0, 3.0, 5.0])
    np.testing.assert_allclose(out.data[0, :, 0], pre * 0.5 * (1 + erf(pre / np.sqrt(2))), rtol=1e-15)


def test_tcn_is_causal_on_token_axis():
    rng = np.random.default_rng(4)
    emb = make(d_model=3)
    convs = [(emb.params[f"tcn1.conv{i}.weight"], emb.params[f"tcn1.conv{i}.bias"]) for i in range(2)]
    x = rng.standard_normal((2, 7, 3))
    base = tcn_block(Tensor(x), convs, (1, 2)).data
    for n in range(7):
        y = x.copy()
        y[:, n] += 5.0
        out = tcn_block(Tensor(y), convs, (1, 2)).data
        assert np.array_equal(out[:, :n], base[:, :n])


def test_zero_weights_leave_projection():
    emb = make()
    for name, p in emb.params.items():
        if not name.startswith("proj."):
            p.data = np.zeros_like(p.data)
    x = Tensor(np.random.default_rng(5).standard_normal((3, 6, 4)))
    projected = project(x, emb.params["proj.weight"], emb.params["proj.bias"])
    assert np.array_equal(emb(x).data, projected.data)


@settings(max_examples=20, deadline=None)
@given(m=st.integers(1, 3), n=st.integers(1, 6), ell=st.integers(1, 5), d=st.integers(1, 4), seed=st.integers(0, 999))
def test_enhance_shape(m, n, ell, d, seed):
    emb = make(ell, d, seed)
    x = Tensor(np.random.default_rng(seed).standard_normal((m, n, ell)))
    assert emb(x).shape == (m, n, d)


def test_block_causality_and_channel_locality():
    emb = make(d_model=4, seed=6)
    x = np.random.default_rng(6).standard_normal((3, 8, 4))
    base = emb(Tensor(x)).data
    for n in range(8):
        y = x.copy()
        y[1, n] += 3.0
        out = emb(Tensor(y)).data
        assert np.array_equal(out[1, :n], base[1, :n])
        assert np.array_equal(out[[0, 2]], base[[0, 2]])
        assert not np.array_equal(out[1, n], base[1, n])


def test_block_gradient_sparsity_is_causal():
    emb = make(d_model=3, seed=7)
    x = np.random.default_rng(7).standard_normal((1, 6, 4))
    for n in range(6):
        xt = Tensor(x, requires_grad=True)
        mask = np.zeros((1, 6, 3))
        mask[0, n] = 1.0
        backward(_masked(emb(xt), mask))
        assert np.all(xt.grad[0, n + 1:] == 0.0)
        for p in emb.params.values():
            p.grad = None


def _masked(y, mask):
    return tsum(mul(y, Tensor(mask)))


def test_projection_gradient_nonzero_and_no_dead_parameters():
    emb = make(d_model=4, seed=8)
    rng = np.random.default_rng(8)
    x, y = rng.standard_normal((2, 6, 4)), rng.standard_normal((2, 6, 4))
    backward(mse_loss(emb(Tensor(x)), Tensor(y)))
    assert np.linalg.norm(emb.params["proj.weight"].grad) > 0
    for name, p in emb.params.items():
        assert p.grad is not None, name
        assert np.abs(p.grad).max() > 1e-12, name


def test_enhance_gradient_matches_fd():
    rng = np.random.default_rng(9)
    shapes = enhancement_shapes(3, 2, 2, (1, 2))
    arrays = {k: rng.standard_normal(s) * 0.5 for k, s in shapes.items()}
    arrays["x"] = rng.standard_normal((2, 5, 3))
    arrays["y"] = rng.standard_normal((2, 5, 2))

    def build(t):
        return mse_loss(enhance(t["x"], t, (1, 2)), t["y"])

    assert max_rel_err(build, arrays, list(shapes)) <= 1e-5


def test_embeddings_share_interface():
    rng = np.random.default_rng(10)
    x = Tensor(rng.standard_normal((2, 5, 4)))
    for emb in (PlainEmbedding.create(4, 3, rng), make()):
        assert isinstance(emb, TokenEmbedding)
        assert emb(x).shape == (2, 5, 3)


def test_initialization_is_seeded_and_bounded():
    a, b = make(d_model=8, seed=11), make(d_model=8, seed=11)
    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data)
    w = a.params["tcn1.conv0.weight"].data
    assert np.abs(w).max() <= 1 / np.sqrt(8 * 3)
    assert np.all(a.params["mid.bias"].data == 0)

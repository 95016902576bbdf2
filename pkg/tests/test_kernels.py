import numpy as np
import pytest

from ssl_batchlab import _kernels
from ssl_batchlab._kernels import _pykernels
from ssl_batchlab.nnet import param_count

DIMS = [(3, 7, 5, 4), (2, 64, 64, 2), (2, 5, 3), (4, 1, 6)]


def _random_problem(dims, n, rng):
    flat = rng.normal(size=param_count(dims))
    X = rng.normal(size=(n, dims[0]))
    return flat, X


@pytest.mark.parametrize("dims", DIMS)
@pytest.mark.parametrize("n", [0, 1, 9, 64])
def test_backend_matches_reference(backend, dims, n, rng):
    flat, X = _random_problem(dims, n, rng)
    ref = _pykernels.mlp_forward(flat, dims, X)
    got = backend.mlp_forward(flat, dims, X)
    for a, b in zip(ref, got):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)
    dz = rng.normal(size=(n, dims[-1]))
    g_ref = _pykernels.mlp_backward(flat, dims, ref, dz, np.zeros_like(flat))
    g_got = backend.mlp_backward(flat, dims, got, dz, np.zeros_like(flat))
    np.testing.assert_allclose(g_ref, g_got, rtol=1e-12, atol=1e-12)


def test_backward_accumulates(backend, rng):
    dims = (3, 4, 2)
    flat, X = _random_problem(dims, 5, rng)
    acts = backend.mlp_forward(flat, dims, X)
    dz = rng.normal(size=(5, 2))
    once = backend.mlp_backward(flat, dims, acts, dz, np.zeros_like(flat))
    twice = backend.mlp_backward(flat, dims, acts, dz, once.copy())
    np.testing.assert_allclose(twice, 2 * once, rtol=1e-14)


def test_softmax_xent_matches_reference(backend, rng):
    logits = rng.normal(size=(11, 3)) * 5
    targets = rng.integers(0, 3, 11)
    w = rng.random(11)
    l1, d1, c1 = _pykernels.softmax_xent(logits, targets, w)
    l2, d2, c2 = backend.softmax_xent(logits, targets, w)
    assert l1 == pytest.approx(l2, rel=1e-14)
    np.testing.assert_allclose(d1, d2, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(c1, c2, rtol=1e-13)


def test_softmax_xent_is_stable_for_huge_logits(backend):
    logits = np.array([[1000.0, 0.0], [-1000.0, 1000.0]])
    loss, d, ce = backend.softmax_xent(logits, np.array([0, 0]), np.ones(2))
    assert np.isfinite(loss) and np.all(np.isfinite(d))
    assert ce[0] == 0.0
    assert ce[1] == pytest.approx(2000.0)


def test_confidence_tie_break_lowest_index(backend):
    arg, conf = backend.softmax_confidence(np.array([[0.5, 0.5, 0.5], [1.0, 3.0, 3.0]]))
    assert arg.tolist() == [0, 1]
    assert conf[0] == pytest.approx(1 / 3)


def test_backend_flag():
    assert _kernels.BACKEND in ("compiled", "python")


def test_read_only_inputs(backend, rng):
    from ssl_batchlab.nnet import init
    p = init((3, 4, 2), 0)
    X = rng.normal(size=(5, 3))
    flat = p.flat.copy()
    X.flags.writeable = False
    flat.flags.writeable = False
    acts = backend.mlp_forward(flat, p.layer_dims, X)
    dl = acts[-1].copy()
    dl.flags.writeable = False
    g = backend.mlp_backward(flat, p.layer_dims, acts, dl, np.zeros_like(flat))
    assert np.all(np.isfinite(g))
    backend.softmax_confidence(dl)

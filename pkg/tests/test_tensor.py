import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from precm import tensor as T


def test_new_filled_zero_and_scalar():
    assert np.array_equal(T.new_filled((1, 1, 2, 2), 0), np.zeros((1, 1, 2, 2)))
    t = T.new_filled((1, 1, 1, 1), 3.5)
    assert t.size == 1 and T.index(t, 0, 0, 0, 0) == 3.5


def test_layout_index_of_last_cell():
    dims = (2, 3, 4, 5)
    t = T.new_filled(dims, 1)
    assert t.size == 120 and np.all(t == 1)
    assert T.layout_index(dims, 1, 2, 3, 4) == 119


@pytest.mark.parametrize("dims", [(0, 1, 1, 1), (1, 1, 1), (1, -2, 3, 3)])
def test_bad_dims_rejected(dims):
    with pytest.raises(T.TensorError):
        T.new_filled(dims, 0.0)


def test_index_and_set():
    t = T.new_filled((1, 1, 2, 2), 7)
    assert T.index(t, 0, 0, 1, 1) == 7
    t2 = T.set_value(t, 0, 0, 1, 0, -2.25)
    assert T.index(t2, 0, 0, 1, 0) == -2.25
    assert T.index(t, 0, 0, 1, 0) == 7  # original untouched
    with pytest.raises(IndexError):
        T.index(t, 0, 0, 2, 0)


def test_sequential_fill_matches_layout_formula():
    dims = (2, 3, 4, 5)
    t = np.arange(120, dtype=np.float64).reshape(dims)
    for b in range(2):
        for c in range(3):
            for y in range(4):
                for x in range(5):
                    flat = T.layout_index(dims, b, c, y, x)
                    assert T.index(t, b, c, y, x) == flat
                    assert T.unravel(dims, flat) == (b, c, y, x)


def test_reductions_and_elementwise():
    assert T.tsum(T.new_filled((1, 1, 2, 2), 1)) == 4
    t = np.random.default_rng(0).standard_normal((2, 2, 3, 3))
    assert np.all(T.zip_(np.add, t, T.map_(np.negative, t)) == 0)
    with pytest.raises(T.TensorError):
        T.zip_(np.add, t, t[:, :1])


def test_argmax_of_one_hot():
    hot = np.random.default_rng(3).integers(0, 3, (2, 5, 6))
    onehot = (hot[:, None] == np.arange(3)[None, :, None, None]).astype(np.float32)
    assert np.array_equal(T.argmax_channels(onehot), hot)


def test_as_tensor_rejects_non_finite():
    with pytest.raises(T.TensorError):
        T.as_tensor(np.full((1, 1, 1, 1), np.nan))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40), st.randoms())
def test_canonical_sum_is_permutation_invariant(values, rnd):
    a = np.array(values)
    b = a.copy()
    rnd.shuffle(b)
    assert T.canonical_sum(a) == T.canonical_sum(b)


def test_sequential_sum_is_left_to_right():
    # 1e16 + 1 + 1 is 1e16 left to right in f64, but 1e16 + 2 pairwise
    a = np.array([1e16, 1.0, 1.0])
    assert T.sequential_sum(a) == (1e16 + 1.0) + 1.0


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_prt1_round_trip(tmp_path, dtype):
    t = np.random.default_rng(1).standard_normal((2, 3, 4, 5)).astype(dtype)
    T.save_prt1(tmp_path / "t.prt1", t)
    back = T.load_prt1(tmp_path / "t.prt1")
    assert back.dtype == dtype and np.array_equal(back, t)


def test_prt1_rejects_corruption(tmp_path):
    p = tmp_path / "t.prt1"
    T.save_prt1(p, np.ones((1, 1, 2, 2), np.float32))
    raw = p.read_bytes()
    (tmp_path / "magic").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short").write_bytes(raw[:-1])
    (tmp_path / "code").write_bytes(raw[:8] + (7).to_bytes(4, "little") + raw[12:])
    for name in ("magic", "short", "code"):
        with pytest.raises(T.TensorError):
            T.load_prt1(tmp_path / name)

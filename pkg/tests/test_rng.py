import numpy as np
import pytest

from tilecascade import StreamKey, normal_field


def test_same_key_same_field():
    k = StreamKey(7, level=1, patch=3)
    a = normal_field(k, 2, (4, 8, 8))
    b = normal_field(k, 2, (4, 8, 8))
    assert np.array_equal(a, b)


def test_distinct_keys_distinct_fields():
    base = StreamKey(7)
    fields = [
        normal_field(base, 0, (64,)),
        normal_field(base.with_patch(1), 0, (64,)),
        normal_field(base.with_level(1), 0, (64,)),
        normal_field(base, 1, (64,)),
        normal_field(StreamKey(8), 0, (64,)),
    ]
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            assert not np.array_equal(fields[i], fields[j])


def test_order_independence():
    # Drawing patch 5 before patch 2 changes nothing: streams are keyed, not shared.
    a5 = normal_field(StreamKey(3, patch=5), 0, (16,))
    a2 = normal_field(StreamKey(3, patch=2), 0, (16,))
    b2 = normal_field(StreamKey(3, patch=2), 0, (16,))
    b5 = normal_field(StreamKey(3, patch=5), 0, (16,))
    assert np.array_equal(a5, b5)
    assert np.array_equal(a2, b2)


def test_moments_roughly_standard_normal():
    z = normal_field(StreamKey(11), 0, (200_000,))
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02
    assert abs((z**3).mean()) < 0.05  # skewness
    assert abs((z**4).mean() - 3.0) < 0.1  # kurtosis


def test_odd_sizes():
    z = normal_field(StreamKey(1), 0, (3, 5, 7))
    assert z.shape == (3, 5, 7)
    assert np.isfinite(z).all()


def test_rejects_bad_keys():
    with pytest.raises(ValueError):
        StreamKey(-1)
    with pytest.raises(ValueError):
        StreamKey(0, level=-1)
    with pytest.raises(ValueError):
        normal_field(StreamKey(0), -1, (4,))

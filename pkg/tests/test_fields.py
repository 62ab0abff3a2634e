"""Field and spectrum containers: validation plus file round trips."""

import numpy as np
import pytest

from wfp.fields import SpaceTimeField, Spectrum


def _field(rng):
    x = np.sort(rng.uniform(-3, 3, 5))
    t = np.arange(7) * 0.125
    return SpaceTimeField(x=x, t=t, u=rng.standard_normal((7, 5)))


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        SpaceTimeField(x=np.zeros(3), t=np.zeros(4), u=np.zeros((3, 4)))


def test_same_grid():
    rng = np.random.default_rng(0)
    a = _field(rng)
    b = SpaceTimeField(x=a.x, t=a.t, u=a.u + 1.0)
    assert a.same_grid(b)
    c = SpaceTimeField(x=a.x + 1e-6, t=a.t, u=a.u)
    assert not a.same_grid(c)


def test_csv_roundtrip_is_exact(tmp_path):
    # repr-based serialization keeps every float bit
    f = _field(np.random.default_rng(1))
    path = tmp_path / "f.csv"
    f.to_csv(path)
    g = SpaceTimeField.from_csv(path)
    assert np.array_equal(f.x, g.x)
    assert np.array_equal(f.t, g.t)
    assert np.array_equal(f.u, g.u)


def test_binary_roundtrip_is_exact(tmp_path):
    f = _field(np.random.default_rng(2))
    path = tmp_path / "f.bin"
    f.to_binary(path)
    g = SpaceTimeField.from_binary(path)
    assert np.array_equal(f.u, g.u)
    assert np.allclose(f.x, g.x, atol=0) and np.allclose(f.t, g.t, atol=0)


def test_spectrum_validation_and_roundtrip(tmp_path):
    with pytest.raises(ValueError):
        Spectrum(omega=np.array([0.0, 0.0, 1.0]), magnitude=np.zeros(3))
    with pytest.raises(ValueError):
        Spectrum(omega=np.array([0.0, 1.0]), magnitude=np.array([1.0, -2.0]))
    s = Spectrum(omega=np.linspace(0, 5, 11), magnitude=np.abs(
        np.random.default_rng(3).standard_normal(11)))
    path = tmp_path / "s.csv"
    s.to_csv(path)
    r = Spectrum.from_csv(path)
    assert np.array_equal(s.omega, r.omega)
    assert np.array_equal(s.magnitude, r.magnitude)

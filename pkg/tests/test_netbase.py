"""Impedance algebra oracles and properties."""

import math

import numpy as np
import pytest

from wppsc.netbase import (
    ComplexPair,
    GridCase,
    Impedance,
    impedance_from_scr_xr,
    parallel_complex,
    parallel_magnitude,
)


def test_thevenin_from_strength_weak_case():
    # frozen: strength 1.6 at X/R 5 -> r 0.12257, x 0.61286
    # oracle: |Z| = 1/1.6 = 0.625, r = 0.625/sqrt(26), x = 5 r
    z = impedance_from_scr_xr(GridCase(scr=1.6, x_r=5.0))
    assert z.r == pytest.approx(0.625 / math.sqrt(26.0), rel=1e-12)
    assert z.r == pytest.approx(0.12257, abs=1e-5)
    assert z.x == pytest.approx(0.61287, abs=1e-5)
    assert z.magnitude == pytest.approx(1.0 / 1.6, rel=1e-12)


def test_thevenin_from_strength_normal_case():
    # frozen: strength 3.2 at X/R 14.8 -> r 0.021067, x 0.31179
    z = impedance_from_scr_xr(GridCase(scr=3.2, x_r=14.8))
    assert z.r == pytest.approx(0.3125 / math.sqrt(1.0 + 14.8**2), rel=1e-12)
    assert z.r == pytest.approx(0.021067, abs=1e-5)
    assert z.x == pytest.approx(0.31179, abs=1e-5)
    assert z.x / z.r == pytest.approx(14.8, rel=1e-12)


def test_thevenin_round_trip_properties():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        scr = float(rng.uniform(0.5, 20.0))
        xr = float(rng.uniform(0.1, 30.0))
        z = impedance_from_scr_xr(GridCase(scr=scr, x_r=xr))
        assert z.magnitude == pytest.approx(1.0 / scr, rel=1e-12)
        assert z.x / z.r == pytest.approx(xr, rel=1e-11)


def test_parallel_magnitude_oracle():
    # frozen: 0.6 || 0.3 -> 0.2
    assert parallel_magnitude(0.6, 0.3) == pytest.approx(0.2, rel=1e-12)


def test_parallel_magnitude_huge_second_branch():
    assert parallel_magnitude(0.5, 1e9) == pytest.approx(0.5, abs=1e-9)


def test_parallel_magnitude_properties():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        a = float(rng.uniform(1e-3, 10.0))
        b = float(rng.uniform(1e-3, 10.0))
        p = parallel_magnitude(a, b)
        assert p == pytest.approx(parallel_magnitude(b, a), rel=1e-12)
        assert p < min(a, b)
        assert p > 0.0


def test_parallel_complex_oracle():
    z = parallel_complex(Impedance(1.0, 0.0), Impedance(0.0, 1.0))
    assert z.r == pytest.approx(0.5, rel=1e-12)
    assert z.x == pytest.approx(0.5, rel=1e-12)


def test_parallel_complex_rejects_resonant_pair():
    with pytest.raises(ValueError):
        parallel_complex(Impedance(0.0, 1.0), Impedance(0.0, -1.0))


def test_impedance_series_add():
    a = Impedance(r=0.01, x=0.3)
    b = Impedance(r=0.02, x=0.1)
    c = a + b
    assert c.r == pytest.approx(0.03)
    assert c.x == pytest.approx(0.4)
    assert c.magnitude == pytest.approx(math.hypot(0.03, 0.4), rel=1e-12)


def test_impedance_validation():
    with pytest.raises(ValueError):
        Impedance(r=-0.01, x=0.3)
    with pytest.raises(ValueError):
        Impedance(r=0.0, x=0.0)
    with pytest.raises(ValueError):
        Impedance(r=float("nan"), x=0.3)


def test_grid_case_validation():
    with pytest.raises(ValueError):
        GridCase(scr=0.0, x_r=5.0)
    with pytest.raises(ValueError):
        GridCase(scr=3.2, x_r=-1.0)


def test_complex_pair_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(200):
        z = complex(rng.normal(), rng.normal())
        p = ComplexPair.from_complex(z)
        assert p.as_complex == pytest.approx(z, abs=1e-15)
        assert abs(p) == pytest.approx(abs(z), rel=1e-12)


def test_complex_pair_arithmetic():
    a = ComplexPair(1.0, 2.0)
    b = ComplexPair(0.5, -1.0)
    s = a + b
    d = a - b
    assert (s.a, s.b) == (1.5, 1.0)
    assert (d.a, d.b) == (0.5, 3.0)

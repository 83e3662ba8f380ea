"""Boundary-layer similarity profile checks."""

import numpy as np
import pytest

from cgks.blasius import blasius_profile, wall_curvature


def test_wall_curvature():
    assert wall_curvature() == pytest.approx(0.332057, abs=1e-5)


def test_free_stream_approach():
    f, fp, fpp = blasius_profile(np.array([5.0, 8.0, 12.0]))
    assert fp[0] == pytest.approx(0.9915, abs=2e-4)
    assert fp[1] == pytest.approx(1.0, abs=1e-4)
    assert fpp[2] == pytest.approx(0.0, abs=1e-6)


def test_wall_values():
    f, fp, fpp = blasius_profile(np.array([0.0]))
    assert f[0] == 0.0 and fp[0] == 0.0
    assert fpp[0] == pytest.approx(0.332057, abs=1e-5)


def test_ode_residual():
    eta = np.linspace(0.1, 8.0, 40)
    h = 1e-4
    f, fp, fpp = blasius_profile(eta)
    _, _, fpp_plus = blasius_profile(eta + h)
    _, _, fpp_minus = blasius_profile(eta - h)
    fppp = (fpp_plus - fpp_minus) / (2.0 * h)
    assert np.max(np.abs(fppp + 0.5 * f * fpp)) < 1e-8


def test_displacement_thickness():
    # integral of (1 - f') deta = eta - f -> 1.72078 at large eta
    f, fp, _ = blasius_profile(np.array([10.0]))
    assert 10.0 - f[0] == pytest.approx(1.72078, abs=1e-4)


def test_profile_monotone():
    eta = np.linspace(0.0, 9.0, 200)
    _, fp, fpp = blasius_profile(eta)
    assert np.all(np.diff(fp) > -1e-12)
    assert np.all(fpp > -1e-12)

import numpy as np
import pytest

from taxcal.config import RigConfig
from taxcal.geometry import FingertipGeometry
from taxcal.sensor import (DipoleSingularityError, DomeModel, MagnetModel, apply_readout, dipole_field,
                           dome_displacement, ft_reading, hall_fields, hall_reading)


def test_dome_static_clamp():
    dome = DomeModel()
    d, _ = dome_displacement(dome, [6.0, -60.0, -12.0])
    assert np.allclose(d, [1e-3 if False else 0.8e-3, -0.8e-3, -1e-3])


def test_dome_first_order_lag():
    dome = DomeModel(hysteresis_tau=0.3)
    state = np.zeros(3)
    dt = 0.01
    for _ in range(30):
        state, _ = dome_displacement(dome, [0, 0, -6.0], state, dt)
    expected = -0.5e-3 * (1 - (1 - dt / 0.3) ** 30)
    assert np.isclose(state[2], expected, rtol=1e-12)
    with pytest.raises(ValueError):
        dome_displacement(dome, [0, 0, 1.0], state, 0.0)


def test_dipole_vectorized_and_singular():
    q = np.array([[0, 0, 1e-2], [1e-2, 0, 0]])
    b = dipole_field([0, 0, 0], [0, 0, 1e-3], q)
    assert b.shape == (2, 3)
    assert np.allclose(b[0], dipole_field([0, 0, 0], [0, 0, 1e-3], q[0]))
    with pytest.raises(DipoleSingularityError):
        dipole_field([0, 0, 0], [0, 0, 1e-3], [0, 0, 1e-7])


def test_pressing_reduces_gap_and_strengthens_bz():
    geo, mag = FingertipGeometry.from_grid(), MagnetModel()
    rest = hall_fields(geo, mag, np.zeros((4, 3)))
    disp = np.zeros((4, 3))
    disp[1, 2] = -1e-3
    pressed = hall_fields(geo, mag, disp)
    assert pressed[1, 2] > rest[1, 2] > 0
    # the pressed magnet also shifts its neighbours' readings (crosstalk)
    assert not np.allclose(pressed[0], rest[0])


def test_readout_quantizes_and_clips():
    cfg = RigConfig({"hall.noise_sigma": 0.0})
    b = apply_readout([0.00012, 100.0, -100.0], cfg, None)
    assert np.allclose(b, [0.00015, 50.0, -50.0])
    assert np.allclose(b[0] / cfg.hall_lsb, np.round(b[0] / cfg.hall_lsb))


def test_hall_reading_noise_statistics():
    cfg = RigConfig({"hall.lsb": 0.0})
    rng = np.random.default_rng(0)
    clean = hall_fields(cfg.fingertip, cfg.magnet, np.zeros((4, 3)))[2]
    draws = np.array([hall_reading(cfg, 2, np.zeros(3), rng=rng)[0].b for _ in range(4000)])
    assert np.allclose(draws.mean(axis=0), clean, atol=4 * 0.01 / np.sqrt(4000))
    assert np.allclose(draws.std(axis=0), 0.01, rtol=0.05)


def test_hall_reading_shapes():
    cfg = RigConfig({"hall.noise_sigma": 0.0})
    s, state = hall_reading(cfg, 0, [0, 0, -5.0])
    assert s.taxel == 0 and state.shape == (4, 3)
    with pytest.raises(ValueError):
        hall_reading(cfg, 0, np.zeros((2, 3)))
    with pytest.raises(IndexError):
        hall_reading(cfg, 9, np.zeros(3))


def test_ft_reading():
    assert np.array_equal(ft_reading([1, 2, 3], 0.0).f, [1, 2, 3])
    rng = np.random.default_rng(1)
    f = np.array([ft_reading([0, 0, 0], 0.05, rng).f for _ in range(4000)])
    assert np.allclose(f.std(axis=0), 0.05, rtol=0.05)


def test_magnet_validation():
    with pytest.raises(ValueError):
        MagnetModel(moment_axis=np.array([0, 0, 2.0]))
    with pytest.raises(ValueError):
        MagnetModel(moment_magnitude=0.0)

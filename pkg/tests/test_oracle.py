import numpy as np
import pytest

from alphalab import models, oracle
from alphalab.errors import InvalidInputError, NotApplicableError


def test_separatrix_width():
    assert oracle.separatrix_width() == pytest.approx(4 / np.pi, abs=1e-9)


def test_free_particle_alpha_is_h():
    lams = np.array([-2.0, -0.5, 0.0, 1.0, 1.7])
    out = oracle.oracle_twist_alpha(models.integrable([0, 0, 0.5]), lams)
    assert np.allclose(out, lams**2 / 2, atol=1e-6)


def test_free_particle_beta_is_legendre_dual():
    rhos = np.array([-1.0, 0.5, 2.0])
    assert np.allclose(oracle.beta_function(models.integrable([0, 0, 0.5]), rhos), rhos**2 / 2, atol=1e-6)


def test_pendulum_flat_part_and_edge():
    orc = oracle.TwistOracle(models.pendulum())
    for lam in (0.0, 0.6, -1.1):
        assert orc.alpha(lam) == pytest.approx(1.0, abs=1e-6)
    # beyond the separatrix alpha grows with slope = rotation number > 0
    assert orc.alpha(2.0) > 1.5
    assert 0 < orc.alpha_slope(2.0) < 2.0


def test_legendre_momentum_inverts_velocity():
    H = models.pendulum()
    p = oracle.legendre_momentum(H, np.array([0.1, 0.3]), np.array([0.4, -1.2]))
    assert np.allclose(p, [0.4, -1.2], atol=1e-10)


def test_oracle_needs_convexity():
    with pytest.raises((NotApplicableError, InvalidInputError)):
        oracle.TwistOracle(models.doublewell_p(0.0))

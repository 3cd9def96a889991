import math

import numpy as np
import pytest

from circlehj.errors import NoBracket, NonPositiveA, NotConverged
from circlehj.model import (check_assumptions, conjugate_model,
                            constant_drift_model, cosine_potential_model,
                            derivative_consistency, estimate_critical_value,
                            freeze_classical, lagrangian, legendre_transform,
                            make_quadratic_model)


def test_legendre_trivial_cd(cd_model):
    L, p = legendre_transform(cd_model, 0.3, 0.0, 0.0)
    assert L == pytest.approx(0.5, abs=1e-10)
    assert p == pytest.approx(-1.0, abs=1e-9)
    L, p = legendre_transform(cd_model, 0.0, 1.0, 2.0)
    assert L == pytest.approx(1.0, abs=1e-10)
    assert p == pytest.approx(0.0, abs=1e-9)


def test_legendre_cdv_brute_force(cdv_model):
    # independent oracle: dense supremum of v p - H over the momentum window
    x, v, u = 0.25, 0.5, 0.0
    ps = np.linspace(-10.0, 10.0, 400001)
    brute = np.max(v * ps - cdv_model.eval_H(x, ps, u))
    assert brute == pytest.approx(0.125, abs=1e-8)
    L, _ = legendre_transform(cdv_model, x, v, u)
    assert L == pytest.approx(0.125, abs=1e-10)
    assert cdv_model.closed_form_L(x, v, u)[0] == pytest.approx(0.125, abs=1e-12)


def test_legendre_matches_closed_form(cd_model, cdv_model):
    rng = np.random.default_rng(3)
    models = [cd_model, cdv_model, make_quadratic_model(2.0, 0.0, 0.0, 1.0)]
    for model in models:
        for _ in range(0, 334):
            x = rng.uniform(0.0, 1.0)
            v = rng.uniform(-5.0, 5.0)
            u = rng.uniform(-2.0, 2.0)
            L, p = legendre_transform(model, x, v, u)
            Lc, pc = model.closed_form_L(x, v, u)
            assert abs(L - Lc) <= 1e-10
            assert abs(p - pc) <= 1e-8


def test_fenchel_inequality(cdv_model):
    rng = np.random.default_rng(11)
    x = rng.uniform(0.0, 1.0, 1000)
    v = rng.uniform(-5.0, 5.0, 1000)
    p = rng.uniform(-5.0, 5.0, 1000)
    u = rng.uniform(-3.0, 3.0, 1000)
    L = lagrangian(cdv_model, x, v, u)
    H = cdv_model.eval_H(x, p, u)
    assert np.all(v * p <= L + H + 1e-9)


def test_involution_recovers_hamiltonian(cdv_model):
    # tabulate L on a fine velocity grid, then take the discrete transform back
    vs = np.linspace(-10.0, 10.0, 10001)
    for x, p, u in [(0.1, 0.3, 0.0), (0.6, -0.8, 1.0), (0.35, 1.4, -2.0)]:
        Ltab = lagrangian(cdv_model, np.full_like(vs, x), vs, np.full_like(vs, u))
        H_rec = np.max(p * vs - Ltab)
        assert H_rec == pytest.approx(float(cdv_model.eval_H(x, p, u)), abs=1e-6)


def test_assumptions_cd(cd_model):
    rep = check_assumptions(cd_model)
    assert rep.all_ok()
    assert rep.h1_margin == pytest.approx(1.0)
    assert rep.h4_margin == pytest.approx(0.5)
    assert rep.c_margin == pytest.approx(-0.5, abs=1e-9)
    assert rep.sample_count >= 1000


def test_assumptions_cdv(cdv_model):
    rep = check_assumptions(cdv_model)
    assert rep.all_ok()
    # min_p H(x, p, 0) = V(x) - 1/2 peaks at x = 0
    assert rep.c_margin == pytest.approx(-0.3, abs=1e-6)


def test_assumptions_increasing_flagged():
    rep = check_assumptions(constant_drift_model(1.0, -0.5))
    assert not rep.h4_ok
    assert rep.h4_margin == pytest.approx(-0.5)


def test_make_quadratic_examples():
    m = make_quadratic_model(2.0, 0.0, 0.0, 1.0)  # H = p^2 - u
    assert float(m.eval_H(0.3, 2.0, 1.0)) == pytest.approx(3.0)
    L, p = legendre_transform(m, 0.0, 2.0, 0.0)
    assert L == pytest.approx(1.0, abs=1e-10)
    assert p == pytest.approx(1.0, abs=1e-9)


def test_make_quadratic_rejects_nonpositive_a():
    with pytest.raises(NonPositiveA):
        make_quadratic_model("0.5 + cos(2*pi*x)", 1.0, 0.0, 0.5)


def test_derivative_consistency(cd_model, cdv_model):
    assert derivative_consistency(cd_model) <= 1e-5
    assert derivative_consistency(cdv_model) <= 1e-5


def test_conjugate_model_identities(cdv_model):
    conj = conjugate_model(cdv_model)
    rng = np.random.default_rng(5)
    x, p, u = rng.uniform(0, 1, 50), rng.uniform(-3, 3, 50), rng.uniform(-2, 2, 50)
    assert np.allclose(conj.eval_H(x, p, u), cdv_model.eval_H(x, -p, -u))
    assert np.allclose(conj.d_u(x, p, u), -cdv_model.d_u(x, -p, -u))
    # increasing in u now
    assert np.all(np.asarray(conj.d_u(x, p, u)) >= cdv_model.delta - 1e-12)
    L, ps = conj.closed_form_L(0.3, 0.7, 0.4)
    L0, ps0 = cdv_model.closed_form_L(0.3, -0.7, -0.4)
    assert L == pytest.approx(L0) and ps == pytest.approx(-ps0)


def test_freeze_classical(cdv_model):
    frozen = freeze_classical(cdv_model)
    assert float(frozen.eval_H(0.2, 0.3, 7.0)) == pytest.approx(
        float(cdv_model.eval_H(0.2, 0.3, 0.0)))
    assert float(frozen.d_u(0.2, 0.3, 7.0)) == 0.0


def test_no_bracket_raised(cd_model):
    # d_p = p + 1 never reaches -9.5 inside |p| <= 10... it does at p = -10.5
    with pytest.raises(NoBracket):
        legendre_transform(cd_model, 0.0, -9.5, 0.0)


def test_critical_value_cd(cd_model):
    c = estimate_critical_value(cd_model)
    assert abs(c) <= 1e-3


def test_critical_value_free():
    free = make_quadratic_model(1.0, 0.0, 0.0, 0.0)
    c = estimate_critical_value(free)
    assert abs(c) <= 1e-6


def test_critical_value_mechanical():
    mech = make_quadratic_model(1.0, 0.0, "0.2*cos(2*pi*x)", 0.0)
    c = estimate_critical_value(mech)
    assert c == pytest.approx(0.2, abs=1e-2)


def test_critical_value_not_converged():
    # drifted potential: the minimum point travels, so short windows disagree
    drifted = make_quadratic_model(1.0, 2.0, "0.3*cos(2*pi*x)", 0.0)
    with pytest.raises(NotConverged):
        estimate_critical_value(drifted, horizon=2.0, slope_tol=1e-9)

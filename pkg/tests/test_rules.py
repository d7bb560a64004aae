import math
import threading
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefatt.rules import (
    HARMONIC_SWITCH,
    Affine,
    Constant,
    PowerLaw,
    Preference,
    Tabulated,
    classify_preference,
    fbar,
    harmonic_asymptotic,
    parse_rule,
    phi,
    phi_inverse,
    psi,
    psi_inverse_floor,
    regvar_asymptotics,
    require_valid,
    validate,
    varphi,
    varphi_infinity,
    varphi_star,
)

LINEAR = Affine(1.0)  # f(k) = k + 1


def exact_harmonic(m: int) -> Fraction:
    return sum((Fraction(1, i) for i in range(1, m + 1)), Fraction(0))


# --- evaluate ----------------------------------------------------------------

def test_evaluate_examples():
    assert Constant(1).evaluate(5) == 1.0
    assert PowerLaw(1, 0.5).evaluate(3) == 2.0
    assert Affine(0.5).evaluate(4) == 3.0


def test_tabulated_tails():
    hold = Tabulated([0.5, 1.0, 1.5], "hold")
    aff = Tabulated([0.5, 1.0, 1.5], "affine")
    assert list(hold.values(0, 6)) == [0.5, 1.0, 1.5, 1.5, 1.5, 1.5]
    assert list(aff.values(0, 6)) == [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]


def test_parse_rule_grammar(tmp_path):
    assert parse_rule("power:gamma=1.0,alpha=0.4").evaluate(0) == 1.0
    assert parse_rule("affine:eta=0.5").evaluate(2) == 2.0
    assert parse_rule("const:c=0.7").evaluate(9) == 0.7
    table = tmp_path / "rules.csv"
    table.write_text("0.5\n1\n1.25\n")
    r = parse_rule(f"table:file={table},tail=hold")
    assert list(r.values(0, 5)) == [0.5, 1.0, 1.25, 1.25, 1.25]
    for bad in ("power:gamma=1", "nope:x=1", "const:c=abc", "table:file=missing.csv,tail=hold"):
        with pytest.raises((ValueError, OSError)):
            parse_rule(bad)


# --- validate ----------------------------------------------------------------

def test_validate_examples():
    rep = validate(PowerLaw(2, 0.5), 100)
    assert not rep.valid and rep.index == 0 and rep.constraint == "f(k) <= k+1"
    assert validate(Constant(1), 100).valid
    rep = validate(Tabulated([1, 0.5], "hold"), 100)
    assert not rep.valid and rep.constraint == "monotonicity" and rep.index == 1


def test_validate_analytic_beyond_probe():
    # table rising with slope 2 only violates f(k) <= k+1 far out
    rep = validate(Tabulated([0.5, 1.0, 3.0], "affine"), 2)
    assert not rep.valid
    with pytest.raises(ValueError):
        require_valid(Constant(2))


# --- phi / phi_inverse ---------------------------------------------------------

def test_phi_examples():
    assert phi(LINEAR, 3) == pytest.approx(11 / 6, abs=1e-15)
    assert phi(PowerLaw(1, 0.3), 0) == 0
    assert phi(Constant(1), 7.5) == 7.5


def test_phi_matches_exact_fraction_oracle():
    rule = Affine(0.5)
    for u in (0.25, 3.0, 17.5, 200.75):
        j = int(u)
        exact = sum(Fraction(1) / (Fraction(1, 2) * k + 1) for k in range(j))
        exact += (Fraction(u) - j) / (Fraction(1, 2) * j + 1)
        assert phi(rule, u) == pytest.approx(float(exact), rel=1e-14)


def test_phi_inverse_examples():
    assert phi_inverse(Constant(1), 4.2) == pytest.approx(4.2, rel=1e-15)
    assert phi_inverse(LINEAR, 11 / 6) == pytest.approx(3.0, rel=1e-14)
    assert phi_inverse(LINEAR, 1.0) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0, max_value=1e6, allow_nan=False))
def test_phi_roundtrip_power(u):
    rule = PowerLaw(1, 0.4)
    t = phi(rule, u)
    assert phi(rule, phi_inverse(rule, t)) == pytest.approx(t, rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0, max_value=1.0, allow_nan=False))
def test_phi_of_phi_inverse_on_range(frac):
    # t spans [0, Phi(10^6)]
    rule = PowerLaw(1, 0.4)
    t = frac * phi(rule, 1e6)
    assert phi(rule, phi_inverse(rule, t)) == pytest.approx(t, rel=1e-12, abs=1e-12)


def test_phi_strictly_increasing():
    rule = Tabulated([0.5, 0.75, 1.0], "hold")
    u = np.linspace(0, 50, 2001)
    assert np.all(np.diff(phi(rule, u)) > 0)


# --- psi -------------------------------------------------------------------

def test_psi_examples():
    assert psi(1) == 0
    assert psi(4) == pytest.approx(11 / 6, abs=1e-15)
    assert psi_inverse_floor(1.0) == 2


def test_psi_against_exact_harmonic():
    for n in (2, 3, 10, 57, 1000):
        assert psi(n) == pytest.approx(float(exact_harmonic(n - 1)), rel=1e-15)


def test_psi_switch_branches_agree():
    m = HARMONIC_SWITCH - 1
    assert abs(psi(HARMONIC_SWITCH) - harmonic_asymptotic(m)) < 1e-12


def test_psi_increments_are_one_over_n():
    n = np.array([1, 2, 10, 999_999, 1_000_000, 1_000_001, 10**9])
    d = psi(n + 1) - psi(n)
    assert np.allclose(d, 1.0 / n, rtol=1e-6, atol=0)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0, max_value=40, allow_nan=False))
def test_psi_inverse_floor_property(t):
    n = psi_inverse_floor(t)
    assert psi(n) <= t < psi(n + 1)


# --- varphi ----------------------------------------------------------------

def test_varphi_examples():
    assert varphi(Constant(1), 5) == 5.0
    assert varphi(LINEAR, 1.5) == pytest.approx(1.25, abs=1e-15)
    assert varphi_star(Constant(1), 3.0) == 3.0


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=0, max_value=500, allow_nan=False))
def test_varphi_roundtrip(t):
    rule = PowerLaw(1, 0.3)
    assert varphi_star(rule, varphi(rule, t)) == pytest.approx(t, rel=1e-12, abs=1e-12)


def test_varphi_star_beyond_horizon():
    rule = PowerLaw(1, 0.7)
    with pytest.raises(ValueError, match="beyond clock horizon"):
        varphi_star(rule, varphi_infinity(rule) + 1e-3)


def test_strong_varphi_converges():
    rule = PowerLaw(1, 0.6)
    # p-series tail beyond degree 10^5: sum (k+1)^-1.2 ~ (10^5)^-0.2 / 0.2
    gap = varphi(rule, phi(rule, 1e6)) - varphi(rule, phi(rule, 1e5))
    p_tail = (1e5) ** (-0.2) / 0.2
    assert 0 < gap < 10 * p_tail


def test_varphi_nondecreasing():
    t = np.linspace(0, 100, 1001)
    assert np.all(np.diff(varphi(PowerLaw(1, 0.4), t)) >= 0)


# --- classification and asymptotics ------------------------------------------

def test_classify_examples():
    assert classify_preference(PowerLaw(1, 0.6)) is Preference.STRONG
    assert classify_preference(PowerLaw(1, 0.4)) is Preference.WEAK
    assert classify_preference(Affine(0.5)) is Preference.STRONG
    assert classify_preference(Constant(1)) is Preference.WEAK
    assert classify_preference(Tabulated([0.5, 1], "hold")) is Preference.WEAK
    assert classify_preference(Tabulated([0.5, 1], "affine")) is Preference.STRONG


def test_classify_switches_at_half():
    assert classify_preference(PowerLaw(1, 0.5)) is Preference.WEAK
    assert classify_preference(PowerLaw(1, 0.5 + 1e-9)) is Preference.STRONG


def test_regvar_examples():
    assert regvar_asymptotics(PowerLaw(1, 0.5)).phi_asym(100) == pytest.approx(20.0)
    d = regvar_asymptotics(Constant(2.5))
    assert d.fbar_asym(17.0) == pytest.approx(2.5)
    assert regvar_asymptotics(PowerLaw(1, 0)).a_kappa(10) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        regvar_asymptotics(Tabulated([1.0], "hold"))


def test_phi_over_asymptote_near_one():
    for rule in (PowerLaw(1, 0.4), PowerLaw(0.5, 0.2)):
        ratio = phi(rule, 1e6) / regvar_asymptotics(rule).phi_asym(1e6)
        assert 0.95 <= ratio <= 1.05


def test_fbar_examples():
    assert fbar(Constant(1), 3.7) == 1.0
    assert fbar(LINEAR, 1.5) == 3.0
    assert fbar(LINEAR, 0.5) == 1.0


def test_concurrent_cache_extension():
    rule = PowerLaw(1, 0.35)
    targets = [10.0 * 4**i for i in range(6)]
    results = {}

    def work(t):
        results[t] = phi(rule, phi_inverse(rule, t))

    threads = [threading.Thread(target=work, args=(t,)) for t in targets]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for t in targets:
        assert math.isclose(results[t], t, rel_tol=1e-12)

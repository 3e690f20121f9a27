import cmath
import math
import os
from pathlib import Path

import pytest

import affmart

SPECS = Path(os.environ.get("AFFMART_SPEC_DIR", Path(__file__).resolve().parents[2] / "specs"))


def dilog(z, terms=4000):
    return sum(z**k / k**2 for k in range(1, terms + 1))


def test_zeta_series_R_matches_dilog():
    m = affmart.load(SPECS / "zeta_series.json")
    assert (m.m, m.n) == (1, 0)
    u = -0.5
    assert abs(m.R(1, [u]) - (dilog(math.exp(u)) - math.pi**2 / 6)) < 1e-9


def test_imaginary_argument_uses_clausen_real_part():
    m = affmart.load(SPECS / "zeta_series.json")
    th = 0.8
    # Re Li2(e^{i th}) - pi^2/6 = -th (2 pi - th) / 4 on [0, 2 pi]
    assert abs(m.R(1, [1j * th]).real + th * (2 * math.pi - th) / 4) < 1e-8


def test_stable_half_is_not_conservative():
    m = affmart.load(SPECS / "stable_half.json")
    assert m.R(1, [-1.0]) == pytest.approx(-2 * math.sqrt(math.pi), rel=1e-7)
    assert m.conservativeness()["overall"]["outcome"] == "Fails"


def test_flow_returns_grid():
    m = affmart.load(SPECS / "stable_half.json")
    times, psi0, psi = m.flow([-1.0], 1.0)
    assert times[0] == 0.0 and times[-1] == 1.0
    assert len(psi) == len(times) == len(psi0)
    # sqrt(-psi) grows linearly at rate sqrt(pi)
    assert abs(psi[-1][0] + (1 + math.sqrt(math.pi)) ** 2) < 1e-7


def test_martingale_verdicts():
    light = affmart.load(SPECS / "weighted_series.json")
    heavy = affmart.load(SPECS / "weighted_series_heavy.json")
    assert light.martingale(2)["verdict"] == "true martingale"
    assert heavy.martingale(2)["verdict"] == "strict local martingale"


def test_bad_gamma_is_reported():
    rules = [v["rule"] for v in affmart.load(SPECS / "bad_gamma.json").violations()]
    assert "gamma.nonnegative" in rules


def test_malformed_spec_raises():
    with pytest.raises(affmart.SpecError):
        affmart.parse("{\"m\": 1")


def test_simulation_is_reproducible():
    m = affmart.load(SPECS / "weighted_series.json").truncate(5)
    a = m.stoch_exp_mean(2, [1.0, 0.0], T=0.2, steps=200, paths=2000, seed=7, threads=1)
    b = m.stoch_exp_mean(2, [1.0, 0.0], T=0.2, steps=200, paths=2000, seed=7, threads=4)
    assert a == b
    assert a["count"] == 2000
    assert cmath.isfinite(a["mean"])

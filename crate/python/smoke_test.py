"""Smoke test for the algebraic_watchdog extension module.

Build and install first:

    pip install --no-build-isolation ./crates/py
    python python/smoke_test.py
"""

import math

import algebraic_watchdog as aw


def check_field():
    gf = aw.GaloisField(4)
    assert gf.order == 16
    for a in range(1, 16):
        assert gf.mul(a, gf.inverse(a)) == 1
    assert gf.add(5, 5) == 0
    assert gf.lincomb([1, 1], [3, 5]) == 3 ^ 5


def check_hash():
    h = aw.HashSpec.sample("affine", 6, 2, seed=3)
    seen = sorted(x for t in range(4) for x in h.collision_list(t))
    assert seen == list(range(64))
    assert all(h.eval(x) == 1 for x in h.collision_list(1))


def check_observation():
    gf = aw.GaloisField(5)
    h = aw.HashSpec.affine(5, 2, 3, 1)
    x1, x2, a1, a2 = 9, 20, 3, 11
    y = gf.lincomb([a1, a2], [x1, x2])
    obs = aw.Observation(x1, [a1, a2], [(x2, h.eval(x2), 0.1)], (y, h.eval(y), 0.1), h)
    fast, slow = obs.p_star(gf), obs.p_star_enumerated(gf)
    assert 0.0 < fast <= 1.0
    assert math.isclose(fast, slow, rel_tol=1e-9)
    assert y in obs.matched_codewords(gf)


def check_experiment():
    cfg = aw.TwoHopConfig(iterations=200, p_adv=0.3)
    stats = aw.run_experiment(cfg, keep_samples=True)
    assert stats.trials == 200 and len(stats.samples_relay) == 200
    assert stats.mean_p_adv < stats.mean_p_relay
    again = aw.run_experiment(cfg, workers=1)
    assert again.mean_p_relay == stats.mean_p_relay
    sweep = aw.run_sweep(aw.TwoHopConfig(iterations=50), "m", [2, 3])
    assert [v for v, _ in sweep] == [2.0, 3.0]
    t = aw.quantile_threshold(aw.honest_samples(cfg), 0.05)
    assert aw.decide(0.0, t) == "malicious"
    try:
        aw.TwoHopConfig(p_s=0.9)
    except ValueError as e:
        assert "p_s" in str(e)
    else:
        raise AssertionError("bad p_s accepted")


def check_analysis():
    v1, v2, beta = aw.misdetection(8, 2, 8, 8, 1, 1)
    assert beta == aw.misdetection_no_overhearing(8, 2, 1) == 9 / 64
    assert beta <= min(v1, v2)
    expected = aw.matched_count_expected(10, 3, 2, [0.1] * 4, [0.0] * 4)
    assert abs(expected - 6.77) < 0.01
    assert aw.ball_radius(0.1, 10, 0.05) >= 1
    assert math.isclose(aw.compose_error_rates(0.2, 0.1), 0.28)
    assert aw.algebraic_pass_rate(iterations=500) >= 0.9


def check_multihop():
    r = aw.run_scenario("one-honest-path")
    assert r.detected and r.policeable == [4]
    r = aw.run_scenario("all-children-malicious", rounds=10)
    assert r.undetected_corruption and r.policeable == []


def main():
    for check in (check_field, check_hash, check_observation, check_experiment, check_analysis, check_multihop):
        check()
        print(f"ok {check.__name__}")


if __name__ == "__main__":
    main()

"""Smoke test for the siltlab extension module."""

import math
import tempfile

import siltlab


def main():
    law = siltlab.JumpLaw(1, 0.5, q=2.0, cutoff=4096)
    assert law.regime == "critical"
    zeta = 2.6123753486854883
    assert abs(law.c - 1 / (2 * zeta)) < 1e-12
    assert abs(law.mu([3]) - law.c * 3 ** -1.5) < 1e-15

    torus = siltlab.TorusLaw(1, 0.5, side=8)
    assert len(torus) == 8
    assert abs(sum(torus.weights) - 1) < 1e-12
    g = torus.green(0.5)
    assert abs(sum(g) - 2.0) < 1e-10 and g[0] <= 2.0

    r = torus.rho1(0.5, starts=4)
    assert g[0] <= r["value"] <= math.sqrt(8) * g[0]

    k = law.kappa(8)
    assert 0 < k["value"] <= 1

    rep = torus.eisenbaum(0.5, 1.0, 20_000, 1)
    assert rep["pass"], rep

    xs = torus.silt_sample(10.0, 200, 5)
    assert all(10.0 ** 2 / 8 <= x <= 10.0 ** 2 + 1e-9 for x in xs)

    est = law.tail(20.0, 5.0, 2000, 3)
    assert 0 <= est["p_hat"] <= 1

    assert siltlab.regime(2, 0.5, 2.0)["regime"] == "supercritical"

    with tempfile.TemporaryDirectory() as out:
        m = siltlab.run_config(f'command = "regimes"\noutput_dir = "{out}"\n')
        assert m["success"] and "regimes.csv" in m["files"]

    try:
        siltlab.JumpLaw(1, 3.0)
    except ValueError as e:
        assert "alpha" in str(e)
    else:
        raise AssertionError("alpha = 3 accepted")

    print("siltlab", siltlab.__version__, "smoke test ok")


if __name__ == "__main__":
    main()

"""Smoke test for the steadypop Python module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math

import steadypop


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    names = steadypop.Scenario.catalog_names()
    assert "hierarchic_reference" in names, names

    constant = steadypop.Scenario.catalog("constant_rate")
    report = steadypop.spectral_bound(constant)
    close(report["net_reproduction"], 2 * (1 - math.exp(-5)), 1e-5)
    close(report["spectral_bound"], 0.9999092, 1e-5)
    assert report["sign_consistent"]
    close(steadypop.net_reproduction(constant), report["net_reproduction"], 0.0)
    close(steadypop.dominant_eigenvalue(constant.with_cells(500)), 0.9999, 5e-2)

    gm = steadypop.Scenario.catalog("gurtin_mccamy_closed_form")
    sol = steadypop.solve_steady(gm)
    close(sol.total, 2 * (1 - math.exp(-5)) - 1, 1e-5)
    assert len(sol.density) == gm.cells
    assert min(sol.density) > 0

    run = steadypop.simulate(gm.with_cells(500), 10.0, stride=100)
    assert run["totals"][0] > 0 and not run["extinct"]
    assert len(run["snapshots"]) >= 2

    report = steadypop.verify(draws=5, seed=1)
    assert all(s["failed"] == 0 for s in report["suites"]), report

    assert steadypop.parse_expr("2 / (1 + x)") == steadypop.parse_expr("2/(1+x)")
    close(steadypop.eval_expr("2/(1+x)", 0.0, 1.0), 1.0, 0.0)

    try:
        steadypop.Scenario.from_json('{"m": 5,')
    except steadypop.InputError as e:
        assert "offset" in str(e)
    else:
        raise AssertionError("malformed JSON accepted")

    try:
        steadypop.solve_steady(constant)
    except steadypop.SolverError as e:
        assert "HypothesisViolation" in str(e)
    else:
        raise AssertionError("linear scenario solved")

    print("steadypop smoke test passed")


if __name__ == "__main__":
    main()

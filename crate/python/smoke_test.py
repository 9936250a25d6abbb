"""Smoke test for the `invsq` extension module.

Install with `pip install --no-build-isolation ./crates/python`, then run
`python python/smoke_test.py` from the repository root.
"""

import math
import pathlib

import invsq

SPECS = pathlib.Path(__file__).resolve().parent.parent / "specs"


def main() -> None:
    zero = invsq.PotentialSpec.from_file(str(SPECS / "zero.json"))
    modes = invsq.angular_spectrum(zero)
    for l, m in enumerate(modes[:9]):
        assert abs(m.eigenvalue - l * (l + 1)) < 1e-8, m
    assert all(t == 0 for t in invsq.count(zero, [1e-2, 1e-4]).totals)

    well = invsq.PotentialSpec.from_json('{"angular": {"kind": "constant", "parameters": {"value": -5}}}')
    rep = invsq.count(well, [10.0 ** (-2 * k) for k in range(1, 7)])
    target = (math.sqrt(4.75) + 3 * math.sqrt(2.75)) / (2 * math.pi)
    assert abs(rep.predicted_slope - target) < 1e-9
    assert abs(rep.slope / target - 1) < 0.03, rep.slope

    model = invsq.InteriorModel.sigma_half()
    ladder = invsq.compute_ladder(model, 20)
    assert all(abs(r - 2) < 1e-4 for r in ladder.ratios[14:]), ladder.ratios
    loc = ladder.localization(12, 0.1)
    assert loc["mass_fraction"] >= 0.9

    rows = invsq.phi_residual(model, 10, 12)
    assert [r.n for r in rows] == [10, 11, 12]
    assert rows[-1].ratio < rows[0].ratio

    x, dx = invsq.exterior_solution(5.0, 0.01, [1.0, 10.0, 100.0])
    assert len(x) == len(dx) == 3 and x[2] > 0

    assert invsq.counterexample_counts([1e-3, 1e-5, 1e-7]) == sorted(set(invsq.counterexample_counts([1e-3, 1e-5, 1e-7])))
    hemi = invsq.hemisphere(0.01, [1e-4, 1e-8], basis=16)
    assert hemi["lambda_min_even"] < -0.25 <= hemi["lambda_min_odd"]

    try:
        invsq.PotentialSpec.from_json('{"angular": {"kind": "constant", "parameters": {"valu": 1}}}')
    except ValueError as e:
        assert "angular.parameters.valu" in str(e)
    else:
        raise AssertionError("malformed spec accepted")

    print(f"invsq {invsq.__version__}: smoke test passed")


if __name__ == "__main__":
    main()

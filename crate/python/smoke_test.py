"""Smoke test for the anytime_cmdp extension module.

Run after `cargo build --release -p anytime-cmdp-python`:

    python3 python/smoke_test.py

The script imports an installed `anytime_cmdp` if one exists, and otherwise
loads the shared library from target/release (or target/debug).
"""

import importlib
import os
import shutil
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    try:
        return importlib.import_module("anytime_cmdp")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for name in ("libanytime_cmdp.so", "libanytime_cmdp.dylib", "anytime_cmdp.dll"):
            lib = ROOT / "target" / profile / name
            if lib.exists():
                dest = Path(tempfile.mkdtemp()) / ("anytime_cmdp.pyd" if name.endswith(".dll") else "anytime_cmdp.so")
                shutil.copy(lib, dest)
                sys.path.insert(0, str(dest.parent))
                return importlib.import_module("anytime_cmdp")
    sys.exit("anytime_cmdp extension not found; build it with `cargo build --release -p anytime-cmdp-python`")


def main():
    ac = load_module()

    knap = ac.Instance.knapsack([1, 2], [1, 2], 2)
    assert knap.validate() == []
    sol = ac.solve(knap)
    assert sol.feasible and sol.value == "2", sol
    assert ac.knapsack_dp([3, 4, 5], [2, 3, 4], 5) == 7

    assert not ac.solve(ac.Instance.partition([1, 2])).feasible
    assert ac.partition_feasibility([1, 2]) is None

    gap = ac.Instance.markovian_gap(3, 1, 10, 1)
    assert ac.solve(gap).value == "5"
    assert ac.brute_force_optimum(gap) == "5"

    for seed in range(20):
        inst = ac.Instance.tiny(seed)
        assert ac.solve(inst).value == ac.brute_force_optimum(inst), seed

    hard = ac.Instance.hard_family(10, 10, seed=1)
    proj = ac.Projection(hard, "additive", "0.1")
    assert proj.ell == ["1/100"]
    assert ac.Projection(hard, "feasible-relative", 0.1).budget_used == ["100/11"]
    exact = ac.solve(hard)
    approx = ac.solve(hard, mode="additive", epsilon="1/10")
    assert Fraction(approx.value) >= Fraction(exact.value)

    stats = ac.simulate(hard, approx.policy, episodes=200, seed=3, mode="additive", epsilon="1/10")
    assert stats["bound_violations"] == 0, stats
    steps = ac.rollout(hard, exact.policy, seed=3)
    assert len(steps) == hard.horizon

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "hard.json")
        hard.save(path)
        again = ac.Instance.load(path)
        assert again.to_json() == hard.to_json()
        pol = ac.Policy.from_json(exact.policy.to_json(), hard.horizon)
        assert len(pol) == len(exact.policy)

    policy, log, estimate = ac.learn(gap, episodes=300, seed=1)
    assert len(log) > 0 and not any(v for (_, _, _, v) in log)
    assert abs(estimate - 5.0) < 1.0, estimate

    passed, failures = ac.verify("tiny", 0, 20)
    assert passed, failures

    try:
        ac.solve(hard, mode="relative")
    except ValueError:
        pass
    else:
        raise AssertionError("missing epsilon accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()

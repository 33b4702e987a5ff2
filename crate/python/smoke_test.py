"""Smoke test for the neuroground extension module.

Build and install first:  pip install ./crates/py
"""

import pathlib
import sys
import tempfile

import neuroground as ng

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    ds = ng.Dataset.load(ROOT / "data" / "example")
    assert len(ds) == 24, len(ds)
    stats = ds.stats()
    assert stats["count"] == 24

    s = ds[0]
    assert s.id == ds.ids()[0]
    plan = s.solve()
    assert plan is not None
    assert len(plan.splitlines()) == len(s.gold_plan.splitlines())
    verdict = s.judge(plan)
    assert verdict["valid"] and verdict["error"] is None, verdict

    # A put before any pick fails on the first step.
    bad = s.judge(f"1. put({s.objects[0]})")
    assert not bad["valid"]
    assert bad["error"]["step_index"] == 0, bad

    try:
        s.parse_plan("1. fly(moon")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed plan accepted")

    sections = ng.extract_sections(f"noise\nInitial State:\n{s.init_state}\nPlan:\n{plan}\n")
    assert sections["Plan"] == plan
    assert s.parse_plan(sections["Plan"]) == plan

    gen = ng.Dataset.generate(10, seed=3)
    assert len(gen) == 10
    assert gen.digest == ng.Dataset.generate(10, seed=3).digest

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        gen.save(tmp / "data")
        assert ng.Dataset.load(tmp / "data").digest == gen.digest
        a = ng.run_eval(tmp / "data", "neuroground", "oracle", tmp / "a", parallelism=2)
        b = ng.run_eval(tmp / "data", "neuroground_no_engine", "noisy:1.0:1", tmp / "b")
        assert a["overall"]["validity"] == 100.0, a["overall"]
        assert b["overall"]["validity"] < 100.0, b["overall"]
        csv = ng.compare([tmp / "a", tmp / "b"])
        assert csv.startswith("run,"), csv

    print("methods:", ", ".join(ng.methods()))
    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())

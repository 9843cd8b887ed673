import json
from math import comb
from pathlib import Path

import pytest

import talift

ASSETS = Path(__file__).resolve().parents[2] / "assets"


def test_kernels_and_golden_verify():
    names = talift.kernels()
    assert {"gv1", "gm3", "gm7"} <= set(names)
    result = talift.verify(talift.golden("gv1"), "gv1", n=10)
    assert result["passed"] and result["cases"] == 10


def test_wrong_program_fails():
    result = talift.verify(talift.golden("gv2"), "gv1", n=5)
    assert not result["passed"]
    assert result["failure"] in {"ParseError", "ExecError", "WrongResult"}


def test_simulate_against_python_oracle():
    r = talift.simulate(talift.golden("gv2"), "gv2", seed=4)
    assert r["output"] == r["expected"]
    assert r["cost"]["total"] > 0


def test_pass_at_k_closed_form():
    for n, c, k in [(20, 10, 1), (20, 10, 5), (12, 3, 4), (5, 0, 2), (5, 5, 5)]:
        want = 1 - comb(n - c, k) / comb(n, k)
        assert talift.pass_at_k(n, c, k) == pytest.approx(want, abs=1e-12)


def test_prompt_ablation_fingerprints():
    base = talift.translation_prompt("gm4")
    no_isa = talift.translation_prompt("gm4", include_isa=False)
    assert base["fingerprint"] != no_isa["fingerprint"]
    def size(prompt):
        return sum(len(text) for _, text in prompt["messages"])

    assert size(no_isa) < size(base)
    assert base == talift.translation_prompt("gm4")
    with pytest.raises(ValueError):
        talift.translation_prompt("gm4", source="prose")


def test_repair_marked_template():
    marked = (ASSETS / "replay" / "inputs" / "gm3_marked.c").read_text()
    r = talift.repair_marked(marked, "gm3", n=5)
    assert r["outcome"] == "Repaired"
    assert r["assignment"] == {"h0": 4}
    assert r["candidates_tried"] <= 5


def test_optimize_rules():
    noisy = (ASSETS / "replay" / "inputs" / "gv1_redundant.c").read_text()
    r = talift.optimize(noisy, "gv1")
    assert r["changed"]
    assert r["after"]["total"] < r["before"]["total"]
    assert talift.verify(r["program"], "gv1", n=5)["passed"]


def test_schedule_tile_and_errors():
    doitgen = (ASSETS / "schedule" / "doitgen.exo").read_text()
    tiled = talift.apply_command(
        doitgen,
        {
            "optimization": "tile",
            "arguments": {
                "line": "for p in seq(0, 64): #1",
                "tile_size": 16,
                "outer_name": "p_outer",
                "inner_name": "p_inner",
            },
        },
    )
    expected = (ASSETS / "schedule" / "doitgen_tiled.exo").read_text()
    assert tiled == talift.render_loop_kernel(expected)
    assert talift.locality_cost(tiled) != talift.locality_cost(doitgen)
    with pytest.raises(talift.ScheduleError, match="single loop"):
        talift.apply_command(doitgen, json.dumps({"optimization": "reorder", "arguments": {"line": "for p in seq(0, 64): #1"}}))


MATVEC = """def mv(A: f32[8, 8] @ DRAM, x: f32[8] @ DRAM, y: f32[8] @ DRAM):
    for i in seq(0, 8):
        y[i] = 0.0
        for j in seq(0, 8):
            y[i] += A[i, j] * x[j]
"""


def test_equivalence_small_kernel():
    tiled = talift.apply_command(
        MATVEC,
        {"optimization": "tile", "arguments": {"line": "for j in seq(0, 8):", "tile_size": 4, "outer_name": "jo", "inner_name": "ji"}},
    )
    assert "for jo in seq(0, 2):" in tiled
    assert talift.check_equivalence(MATVEC, tiled, trials=5)["passed"]
    broken = MATVEC.replace("A[i, j] * x[j]", "A[j, i] * x[j]")
    verdict = talift.check_equivalence(MATVEC, broken, trials=5)
    assert not verdict["passed"] and verdict["failing_trial"] == 1


def test_cli_exit_codes(tmp_path):
    code, out, _ = talift.run_cli(["verify", "--program", str(ASSETS / "kernels" / "gv1.golden.c"), "--kernel", "gv1"])
    assert code == 0 and "PASS" in out
    code, _, err = talift.run_cli(["verify", "--kernel", "gv1", "--program", str(ASSETS / "kernels" / "gv1.golden.c"), "--nope"])
    assert code == 2 and "--nope" in err
    code, _, _ = talift.run_cli(["schedule", "--backend", "replay", "--out", str(tmp_path)])
    assert code == 0
    assert len(json.loads((tmp_path / "transcript.json").read_text())) == 3

from pathlib import Path

import workflow
from test_harness import solver, write_config  # noqa: F401


def test_pipeline_runs_all_stages(tmp_path, solver):
    out = tmp_path / "out"
    state = workflow.run_workflow(str(write_config(tmp_path, layers="1..4")), str(out), jobs=1)

    assert state["error"] == ""
    assert state["all_passed"]
    assert Path(state["report_path"]).exists()
    assert len(state["manifest"]["runs"]) == 4
    assert len(state["summary"]["records"]) == 4


def test_pipeline_stops_when_nothing_simulates(tmp_path, solver):
    solver.fail_layers = {1, 2}
    state = workflow.run_workflow(str(write_config(tmp_path, layers="1..2")), str(tmp_path / "out"), jobs=1)
    assert state["error"] == "Simulate error: no run succeeded"
    assert "summary" not in state
    assert not state["all_passed"]


def test_pipeline_reports_bad_config(tmp_path):
    state = workflow.run_workflow(str(tmp_path / "missing.json"), str(tmp_path / "out"))
    assert state["error"].startswith("Simulate error")
    assert "report_path" not in state


def test_routing():
    assert workflow.should_continue({"next_step": "analyze", "error": ""}) == "analyze"
    assert workflow.should_continue({"next_step": "report", "error": ""}) == "report"
    assert workflow.should_continue({"next_step": "analyze", "error": "Analyze error: x"}) == "end"
    assert workflow.should_continue({}) == "end"

"""
LangGraph pipeline that chains the campaign stages.
Flow: Simulate → Analyze → Report

Analysis output goes to <out>/analysis and the report to <out>/report.
"""
import logging
import os
import sys
from pathlib import Path
from typing import Literal, Optional, TypedDict

from langgraph.graph import END, StateGraph

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from Stages.HarnessStage.Harness import cmd_analyze, cmd_report, cmd_simulate

logger = logging.getLogger(__name__)


class PipelineState(TypedDict, total=False):
    """State for the pipeline."""
    # Inputs
    config_path: str
    out_dir: str
    jobs: Optional[int]
    resolution: Optional[float]
    orientation: Optional[str]
    threshold_db: Optional[float]
    zero_tol: Optional[float]

    # Stage results
    manifest: dict
    summary: dict
    report_path: str
    all_passed: bool

    # Flow control
    next_step: str
    error: str


def simulate_node(state: PipelineState) -> PipelineState:
    """
    Simulate node - runs every crystal and reference of the campaign.
    Failed runs are recorded in the manifest; analysis still proceeds for the rest.
    """
    try:
        manifest = cmd_simulate(
            Path(state["config_path"]),
            Path(state["out_dir"]),
            jobs=state.get("jobs"),
            resolution=state.get("resolution"),
            orientation=state.get("orientation"),
        )
        if not any(r.status == "ok" for r in manifest.runs):
            return {
                **state,
                "manifest": manifest.model_dump(mode="json"),
                "all_passed": False,
                "next_step": "end",
                "error": "Simulate error: no run succeeded",
            }
        return {
            **state,
            "manifest": manifest.model_dump(mode="json"),
            "all_passed": manifest.all_ok,
            "next_step": "analyze",
        }
    except Exception as e:
        logger.error("simulate stage failed: %s", e)
        return {
            **state,
            "next_step": "end",
            "error": f"Simulate error: {str(e)}",
        }


def analyze_node(state: PipelineState) -> PipelineState:
    """Analyze node - dispersion, gaps, regimes and checks for the simulated runs."""
    try:
        summary = cmd_analyze(
            Path(state["out_dir"]),
            Path(state["out_dir"]) / "analysis",
            threshold_db=state.get("threshold_db"),
            zero_tol=state.get("zero_tol"),
        )
        return {
            **state,
            "summary": summary.model_dump(mode="json"),
            "all_passed": state.get("all_passed", True) and summary.all_passed,
            "next_step": "report",
        }
    except Exception as e:
        logger.error("analyze stage failed: %s", e)
        return {
            **state,
            "next_step": "end",
            "error": f"Analyze error: {str(e)}",
        }


def report_node(state: PipelineState) -> PipelineState:
    """Report node - plot-ready tables and the text summary."""
    try:
        out_dir = Path(state["out_dir"])
        path = cmd_report(out_dir / "analysis", out_dir / "report")
        return {
            **state,
            "report_path": str(path),
            "next_step": "end",
        }
    except Exception as e:
        logger.error("report stage failed: %s", e)
        return {
            **state,
            "next_step": "end",
            "error": f"Report error: {str(e)}",
        }


def should_continue(state: PipelineState) -> Literal["analyze", "report", "end"]:
    """Conditional edge function to determine next step."""
    next_step = state.get("next_step", "end")

    if state.get("error"):
        return "end"
    if next_step == "analyze":
        return "analyze"
    elif next_step == "report":
        return "report"
    else:
        return "end"


def create_workflow():
    """Create and return the compiled pipeline."""
    workflow = StateGraph(PipelineState)

    workflow.add_node("simulate", simulate_node)
    workflow.add_node("analyze", analyze_node)
    workflow.add_node("report", report_node)

    workflow.set_entry_point("simulate")

    workflow.add_conditional_edges(
        "simulate",
        should_continue,
        {
            "analyze": "analyze",
            "end": END
        }
    )
    workflow.add_conditional_edges(
        "analyze",
        should_continue,
        {
            "report": "report",
            "end": END
        }
    )
    workflow.add_edge("report", END)

    return workflow.compile()


app = create_workflow()


def run_workflow(
    config_path: str,
    out_dir: str,
    jobs: Optional[int] = None,
    resolution: Optional[float] = None,
    orientation: Optional[str] = None,
    threshold_db: Optional[float] = None,
    zero_tol: Optional[float] = None,
) -> dict:
    """
    Run simulate, analyze and report for one configuration.

    Returns:
        Final pipeline state; `error` is set when a stage aborted and
        `all_passed` is True only if every run succeeded and every check passed.
    """
    initial_state: PipelineState = {
        "config_path": str(config_path),
        "out_dir": str(out_dir),
        "jobs": jobs,
        "resolution": resolution,
        "orientation": orientation,
        "threshold_db": threshold_db,
        "zero_tol": zero_tol,
        "all_passed": False,
        "next_step": "simulate",
        "error": "",
    }
    return app.invoke(initial_state)

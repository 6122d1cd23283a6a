"""
LangGraph pipeline for one identification experiment.

prepare -> search -> select -> (prune) -> validate -> END

All node implementations are in the narx package.
"""

import argparse
import sys

from langgraph.graph import StateGraph, END

from narx import (
    IdentificationState,
    NarxError,
    load_experiment_config,
    prepare_node,
    search_node,
    select_node,
    prune_node,
    validate_node,
    should_prune,
)
from narx.config import env_log_level
from narx.utils import configure_logging


def create_graph():
    """
    Creates and compiles the identification graph.

    Returns:
        Compiled LangGraph ready for execution
    """
    workflow = StateGraph(IdentificationState)

    workflow.add_node("prepare", prepare_node)
    workflow.add_node("search", search_node)
    workflow.add_node("select", select_node)
    workflow.add_node("prune", prune_node)
    workflow.add_node("validate", validate_node)

    workflow.set_entry_point("prepare")

    workflow.add_edge("prepare", "search")
    workflow.add_edge("search", "select")

    # Pruning is optional; either way validation closes the run
    workflow.add_conditional_edges(
        "select",
        should_prune,
        {
            "prune": "prune",
            "validate": "validate",
        }
    )
    workflow.add_edge("prune", "validate")
    workflow.add_edge("validate", END)

    return workflow.compile()


def run_identification(config) -> IdentificationState:
    """Execute the graph for an ExperimentConfig and return the final state."""
    app = create_graph()
    initial_state: IdentificationState = {"config": config}
    return app.invoke(initial_state)


def main(argv=None):
    """
    Run one experiment from a JSON config file and print the summary.
    """
    parser = argparse.ArgumentParser(description="Run the NARX identification graph")
    parser.add_argument("config", help="Experiment JSON file")
    parser.add_argument("--quick", action="store_true", help="Desk-scale preset (10 runs)")
    parser.add_argument("--log-level", default=None)
    args = parser.parse_args(argv)

    configure_logging(args.log_level or env_log_level())
    try:
        config = load_experiment_config(args.config, quick=args.quick)
        final_state = run_identification(config)
    except NarxError as e:
        print(f"Identification failed: {e}", file=sys.stderr)
        return 1

    print("-" * 60)
    print(final_state["summary"].model_dump_json(indent=2))
    print("-" * 60)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Tomography protocol workflow.

The protocol runs as a small graph:
1. ``prepare`` computes the calibration factor for every readout in use
2. one ``measure`` task per setting simulates a shot, all tasks run concurrently
3. ``fit`` reconstructs the block from the records in protocol order

Shots are independent, so the fan-out only changes wall-clock time, never the
result.
"""

import logging
import operator
from typing import Annotated, Optional

from langgraph.graph import END, START, StateGraph
from langgraph.types import Send
from typing_extensions import TypedDict

from stirap_tomo.dynamics import DEFAULT_TOL
from stirap_tomo.quantum_core import DensityMatrix
from stirap_tomo.state import (
    BlockElements,
    BlockEstimate,
    Calibration,
    DecayConfig,
    MeasurementRecord,
    MeasurementReport,
    ProtocolSetting,
    PulseConfig,
    SignalMode,
)
from stirap_tomo.tomography import calibration_factor, four_step_settings, reconstruct, run_measurement

logger = logging.getLogger(__name__)

# ===== STATE DEFINITIONS =====

class ProtocolState(TypedDict, total=False):
    """Graph state for one protocol run.

    ``records`` is appended to by every measurement task.
    """

    rho_i: DensityMatrix
    pulse: PulseConfig
    decay: DecayConfig
    settings: list[ProtocolSetting]
    calibration: Calibration
    tol: float
    factors: dict[str, float]
    records: Annotated[list[MeasurementRecord], operator.add]
    estimate: BlockEstimate


class ShotState(TypedDict):
    """Inputs of a single measurement task."""

    rho_i: DensityMatrix
    pulse: PulseConfig
    decay: DecayConfig
    setting: ProtocolSetting
    factor: float
    tol: float
    step: int

# ===== NODES =====

def prepare(state: ProtocolState) -> dict:
    """Compute one calibration factor per readout used by the settings."""
    settings = state["settings"]
    if not settings:
        raise ValueError("protocol has no settings")
    modes = sorted({s.signal_mode for s in settings})
    factors = {
        mode: calibration_factor(
            state["pulse"], state["decay"], mode, state.get("calibration", "analytic"),
            state.get("tol", DEFAULT_TOL),
        )
        for mode in modes
    }
    logger.info("protocol with %d settings, calibration factors %s", len(settings), factors)
    return {"factors": factors}


def dispatch_shots(state: ProtocolState) -> list[Send]:
    """Fan out one measurement task per setting."""
    return [
        Send(
            "measure",
            {
                "rho_i": state["rho_i"],
                "pulse": state["pulse"],
                "decay": state["decay"],
                "setting": setting,
                "factor": state["factors"][setting.signal_mode],
                "tol": state.get("tol", DEFAULT_TOL),
                "step": step,
            },
        )
        for step, setting in enumerate(state["settings"])
    ]


def measure(shot: ShotState) -> dict:
    record = run_measurement(
        shot["rho_i"],
        shot["setting"],
        shot["pulse"],
        shot["decay"],
        factor=shot["factor"],
        tol=shot["tol"],
        step=shot["step"],
    )
    return {"records": [record]}


def fit(state: ProtocolState) -> dict:
    """Reconstruct the block from the records sorted into protocol order."""
    records = sorted(state["records"], key=lambda r: r.step)
    return {"estimate": reconstruct(records)}

# ===== GRAPH CONSTRUCTION =====

protocol_builder = StateGraph(ProtocolState)
protocol_builder.add_node("prepare", prepare)
protocol_builder.add_node("measure", measure)
protocol_builder.add_node("fit", fit)

protocol_builder.add_edge(START, "prepare")
protocol_builder.add_conditional_edges("prepare", dispatch_shots, ["measure"])
protocol_builder.add_edge("measure", "fit")
protocol_builder.add_edge("fit", END)

protocol_graph = protocol_builder.compile()


def block_delta(estimate: BlockElements, truth: BlockElements) -> BlockElements:
    return BlockElements(
        rho_mm=estimate.rho_mm - truth.rho_mm,
        rho_nn=estimate.rho_nn - truth.rho_nn,
        rho_mn=estimate.rho_mn - truth.rho_mn,
    )


def measure_block(
    rho_i: DensityMatrix,
    pulse: PulseConfig,
    decay: DecayConfig,
    settings: Optional[list[ProtocolSetting]] = None,
    *,
    signal_mode: SignalMode = "final_population",
    calibration: Calibration = "analytic",
    tol: float = DEFAULT_TOL,
    jobs: int = 1,
    include_truth: bool = True,
) -> MeasurementReport:
    """Run the protocol on ``rho_i`` and return the full report.

    Args:
        rho_i: State to characterise, supported on the {m, n} block.
        pulse: Pulse parameters; (alpha, beta) are set per shot.
        decay: Decay rates.
        settings: Protocol settings; the four-step protocol when omitted.
        signal_mode: Readout used for the default four-step protocol.
        calibration: ``analytic`` or ``simulated`` calibration factor.
        tol: Integrator tolerance.
        jobs: Maximum number of shots simulated at once.
        include_truth: Attach the true block and the estimate error.
    """
    if settings is None:
        settings = four_step_settings(signal_mode)
    result = protocol_graph.invoke(
        {
            "rho_i": rho_i,
            "pulse": pulse,
            "decay": decay,
            "settings": settings,
            "calibration": calibration,
            "tol": tol,
        },
        config={"max_concurrency": max(1, jobs)},
    )
    estimate: BlockEstimate = result["estimate"]
    records = sorted(result["records"], key=lambda r: r.step)

    truth = delta = None
    if include_truth:
        truth = BlockElements.from_matrix(rho_i.block)
        delta = block_delta(estimate, truth)
    return MeasurementReport(estimate=estimate, records=records, truth=truth, delta=delta)

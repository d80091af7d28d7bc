from .mapping import DecisionMatrix, Placement, SchedulingProblem, compute_latency, decode_mapping
from .scenario import Scenario, load_scenario
from .schedulers import BpsoParams, SolverResult, Strategy, bpso_solve, solve
from .sins import ImuErrorModel, NavState, dead_reckon, simulate_imu
from .task_dag import TaskDag, load_dag
from .wteg import WtegGraph, assemble_two_step, shortest_path

__version__ = "0.1.0"
__all__ = [
    "BpsoParams",
    "DecisionMatrix",
    "ImuErrorModel",
    "NavState",
    "Placement",
    "Scenario",
    "SchedulingProblem",
    "SolverResult",
    "Strategy",
    "TaskDag",
    "WtegGraph",
    "assemble_two_step",
    "bpso_solve",
    "compute_latency",
    "dead_reckon",
    "decode_mapping",
    "load_dag",
    "load_scenario",
    "shortest_path",
    "simulate_imu",
    "solve",
]

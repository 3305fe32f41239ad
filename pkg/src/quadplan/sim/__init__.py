"""Scenarios, actors, closed/open-loop execution and metrics."""
from .actors import IDMActor, IDMParams, ScriptedActor, StaticActor, idm_accel
from .loop import (ExpertPolicy, HardBrakePolicy, PolicyOutput, QuadPolicy, RunResult, SimConfig,
                   compute_metrics, run_closed_loop, run_open_loop)
from .metrics import TTC_CAP, RunMetrics, Summary, aggregate, min_ttc
from .scenario import Goal, Scenario, ScenarioError, load_dir, save_dir

__all__ = ["ExpertPolicy", "Goal", "HardBrakePolicy", "IDMActor", "IDMParams", "PolicyOutput",
           "QuadPolicy", "RunMetrics", "RunResult", "Scenario", "ScenarioError", "ScriptedActor",
           "SimConfig", "StaticActor", "Summary", "TTC_CAP", "aggregate", "compute_metrics",
           "idm_accel", "load_dir", "min_ttc", "run_closed_loop", "run_open_loop", "save_dir"]

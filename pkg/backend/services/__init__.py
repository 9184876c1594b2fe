from .harness import ExperimentPlan, ModelSpec, load_plan, run_experiment

__all__ = ["ExperimentPlan", "ModelSpec", "load_plan", "run_experiment"]

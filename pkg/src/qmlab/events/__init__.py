from .dispatcher import Experiment, ExperimentDispatcher, ExperimentHandler

__all__ = ["Experiment", "ExperimentDispatcher", "ExperimentHandler"]

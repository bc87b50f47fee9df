"""Joint optimization of classifier cascades: network hyper-parameters and exit thresholds."""

from cascadeopt.baselines import grid_search, random_search, static_design
from cascadeopt.bo import OptimizationProblem, OptResult, Observation, best_feasible, propose_next, run_bo
from cascadeopt.cascade_eval import (
    LOCAL,
    CascadeConfig,
    DeploymentModel,
    EnergyMin,
    ErrorMin,
    Evaluation,
    deployment_preset,
    evaluate_cascade,
    pareto_front,
    simulate_image,
    theta_sweep,
)
from cascadeopt.gp import GpModel, KernelParams, encode_config, fit
from cascadeopt.profile_store import (
    DesignSpace,
    Dimension,
    HyperParams,
    NetworkProfile,
    ProfileDataset,
    SlotSpace,
    SyntheticSpec,
    enumerate_space,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split_images,
)

__version__ = "0.1.0"

__all__ = [
    "LOCAL",
    "CascadeConfig",
    "DeploymentModel",
    "DesignSpace",
    "Dimension",
    "EnergyMin",
    "ErrorMin",
    "Evaluation",
    "GpModel",
    "HyperParams",
    "KernelParams",
    "NetworkProfile",
    "Observation",
    "OptResult",
    "OptimizationProblem",
    "ProfileDataset",
    "SlotSpace",
    "SyntheticSpec",
    "best_feasible",
    "deployment_preset",
    "encode_config",
    "enumerate_space",
    "evaluate_cascade",
    "fit",
    "generate_synthetic",
    "grid_search",
    "load_dataset",
    "pareto_front",
    "propose_next",
    "random_search",
    "run_bo",
    "save_dataset",
    "simulate_image",
    "split_images",
    "static_design",
    "theta_sweep",
]

"""Flexible stacked-metasurface downlink simulator and optimizer."""

from .scenario import (C_LIGHT, MODES, DegenerateScenarioError, ScenarioConfig,
                       SystemState, UserGeometry, dbm_to_watt, init_state,
                       sample_scenario, watt_to_dbm)
from .geometry import (ConstraintSystem, InfeasibleConstraintsError,
                       MorphState, build_constraints, project_feasible,
                       project_feasible_mode, project_mode)
from .channel import (ChannelStack, PhaseStack, build_channel_stack,
                      build_omega, build_user_channel, cascade,
                      quantization_set)
from .metrics import (RateReport, augmented_objective, qos_violations,
                      sinr_and_rates)
from .gradients import build_workspace, fd_oracle, grad_J, grad_aug, grad_sum_rate
from .morph_opt import MorphContext, MorphOptState, morph_step, morph_update
from .bf_opt import bf_sca_round, run_bf_opt
from .phase_opt import (LayerSurrogate, build_layer_surrogate,
                        optimize_layer_continuous, optimize_layer_discrete,
                        selection_matrix)
from .ao_driver import AoResult, AoTrace, run_ao
from .perturbation import PerturbReport, first_order_validate, perturb_gains
from .harness import (SweepSpec, derive_seed, run_convergence,
                      run_perturbation_sweep, run_sweep)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

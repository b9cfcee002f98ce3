"""Sample-efficient deep Q-learning for LTL-specified navigation tasks.

The pipeline: parse an LTL task, compile it to a deterministic Rabin
automaton, prune physically impossible transitions and rank states by
distance to acceptance, learn an action classifier that steers safely
toward workspace goals, then train a Q-network over the product of the
simulator and the automaton with a behavior policy that mixes greedy,
random and mission-biased actions.
"""

from .ltl import (Formula, LassoWord, LTLSyntaxError, UnknownAtomError,
                  eval_lasso, parse, to_text)
from .automaton import (DRA, PrunedDRA, InfeasibleTask, UnsupportedFragment,
                        accepts_lasso, compile_dra, dra_step, export_dot,
                        export_hoa, import_hoa, is_accepting_run_prefix,
                        prune)
from .world import (ACTIONS, AgentState, Environment, Obstacle, Region,
                    features, generate_environment, label,
                    load_environment, make_environment, sample_initial_state,
                    save_environment, step_dynamics)
from .product import (EpisodeTrace, ProductState, RewardConfig,
                      classify_success, product_step, reward_of, run_episode)
from .neural import MLP, Adam, SGD, DivergenceError
from .bias import (BiasDataset, BiasModel, GridGraph, biased_action,
                   build_dataset, build_grid_graph, load_dataset_csv,
                   safe_action_set, save_dataset_csv, select_goal,
                   train_bias_model)
from .learner import (ExplorationSchedule, ReplayMemory, TrainConfig,
                      TrainedPolicy, TrainingLog, encode_state,
                      greedy_action, sample_action, schedule_at, train)
from .harness import (PRESETS, EvalReport, TaskPreset,
                      compare_sample_efficiency, episodes_to_threshold,
                      evaluate, load_task, moving_average, run_experiment)

__version__ = "0.1.0"

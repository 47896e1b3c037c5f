"""Randomized weighted majority and its class-cascaded variant for streams."""

from .bounds import (
    biased_fn_rate,
    biased_fp_rate,
    bound_difference,
    crossover_satisfied,
    crossover_threshold,
    crwm_mistake_bound,
    rwm_mistake_bound,
)
from .cascade import CascadingRWM, CrwmModel, RoutingOutcome, crwm_expected_mistake, crwm_predict, crwm_update
from .expert_core import (
    RandomizedWeightedMajority,
    WeightVector,
    expected_mistake_fraction,
    rwm_predict,
    rwm_update,
    substream,
)
from .evaluation import (
    ExperimentConfig,
    PrequentialReport,
    RunResult,
    SyntheticExpertSpec,
    beta_sweep,
    compare,
    expert_rate_table,
    generate_synthetic_stream,
    paired_t_test,
    run_experiment,
    run_prequential,
    specialist_spec,
)
from .stream_io import Dataset, DatasetSchema, ParseError, load_dataset, parse_arff, parse_csv

__version__ = "0.1.0"

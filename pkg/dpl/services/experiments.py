"""
dpl/services/experiments.py

Desk-scale experiment pipeline: generate the desk dataset, split 70/30,
train with the desk preset and evaluate both inference modes. `run_sweep`
repeats the pipeline over one hyperparameter and several seeds.
"""
from __future__ import annotations

import logging
from typing import Any, Dict, Optional, Sequence

from dpl.api.schemas import SweepDocument, TrialRecord
from dpl.config import RunConfig
from dpl.core.errors import ConfigError
from dpl.data.synthetic import desk_generator_spec, generate_synthetic, split
from dpl.services.evaluation import compare_modes
from dpl.services.trainer import train

logger = logging.getLogger(__name__)

SWEEP_PARAMS = ("N", "R", "alpha")
TRAIN_FRAC = 0.7


def _param_value(param: str, value: float) -> Any:
    if param == "N":
        if value != int(value) or value < 1:
            raise ConfigError(f"N must be a positive integer, got {value}")
        return int(value)
    return float(value)


def run_trial(seed: int, overrides: Optional[Dict[str, Any]] = None,
              steps: Optional[int] = None) -> TrialRecord:
    """
    One desk pipeline run. The data, split and training all derive from `seed`.

    Args:
        seed: Seed for generator, split and training
        overrides: RunConfig fields replacing the desk preset values
        steps: Training steps, defaults to the desk preset

    Returns:
        TrialRecord with both metrics documents; `value` is the single
        overridden value when exactly one override is given, else 0
    """
    overrides = dict(overrides or {})
    if steps is not None:
        overrides["steps"] = steps
    config = RunConfig.preset("desk", seed=seed, **overrides)

    dataset = generate_synthetic(desk_generator_spec(seed=seed, d_in=config.d_in))
    train_set, test_set = split(dataset, TRAIN_FRAC, seed)
    model, _ = train(config, train_set)
    biased, unbiased, _ = compare_modes(model, test_set, config.eval_topk)

    swept = [v for k, v in overrides.items() if k in SWEEP_PARAMS]
    value = float(swept[0]) if len(swept) == 1 else 0.0
    logger.info("trial seed=%d %s: biased mR=%.4f unbiased mR=%.4f", seed, overrides,
                biased.mean_recall, unbiased.mean_recall)
    return TrialRecord(value=value, seed=seed, biased=biased.to_document(),
                       unbiased=unbiased.to_document())


def run_sweep(param: str, values: Sequence[float], seeds: Sequence[int],
              steps: Optional[int] = None) -> SweepDocument:
    """Trials for every (value, seed) pair, value-major."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"Unknown sweep parameter: {param}. Choose from {SWEEP_PARAMS}")
    if not values or not seeds:
        raise ConfigError("A sweep needs at least one value and one seed")
    trials = [run_trial(int(seed), {param: _param_value(param, v)}, steps)
              for v in values for seed in seeds]
    return SweepDocument(
        param=param,
        values=[float(v) for v in values],
        seeds=[int(s) for s in seeds],
        steps=steps if steps is not None else RunConfig.preset("desk").steps,
        trials=trials,
    )

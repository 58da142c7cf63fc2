"""patternlens: signal-aware explanations for small feedforward networks.

The package separates three concerns that are usually conflated when a
network's decision is visualized:

* the *function* (how the output reacts to input perturbations: gradients),
* the *signal* (the component of the input that drives the output), and
* the *attribution* (how much each input dimension contributes to the
  output value).

Patterns, the per-neuron signal directions, are learned from data with
closed-form covariance estimators and then injected into a modified
backward pass, which also hosts the classic gradient-family explainers
for comparison.  Two quantitative protocols (a residual-correlation
quality measure and a patch degradation experiment) evaluate the result.
"""

from .errors import (
    BindingError,
    ConfigError,
    DataError,
    DimensionError,
    DivergenceError,
    NumericalError,
    PatternLensError,
    SingularMatrixError,
    TraceError,
)
from .estimators import (
    ESTIMATOR_KINDS,
    PatternSet,
    estimate_signal,
    filter_pattern_set,
    fit_all,
    fit_linear,
    fit_two_component,
)
from .explainers import EXPLANATION_METHODS, Explanation, dtd_redistribute, explain
from .evaluation import (
    DegradationCurve,
    QualityProbe,
    degradation_auc,
    degradation_run,
    measure_rho,
    random_baselines,
)
from .modelio import load_model, model_crc, save_model
from .network import (
    ActivationTrace,
    Layer,
    NetworkModel,
    backward,
    conv2d_layer,
    dense_layer,
    forward,
)
from .patternio import load_patterns, save_patterns
from .rendering import render_heatmap, save_explanation
from .rng import RngStream
from .stats import LayerStats, NeuronStats
from .tensorops import elementwise, matmul, ridge_solve
from .toydata import ToyConfig, generate_toy
from .training import TrainConfig, one_hot, train

__all__ = [name for name in dir() if not name.startswith("_")]

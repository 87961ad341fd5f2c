from .batch import PolicyBatch, PolicyStep, build_policy_batch
from .diagnostics import (
    BanditGenerator,
    GradientVarianceReport,
    SlopeReport,
    VarianceReport,
    advantage_variance_report,
    convergence_slope_check,
    gradient_variance_report,
    variance_decomposition,
)
from .policy import PolicyParams, context_of, load_checkpoint, log_prob_and_grad, save_checkpoint
from .reinforce import GradEstimate, TrainingResult, estimate_policy_gradient, objective, train_offline
from .tabular import BiasReport, TabularMDPSpec, bias_scaling, evaluate_policy, make_bisimilar_family, measure_gradient_bias

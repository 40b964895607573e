"""Backward SDE filtering of jump-diffusion processes on adaptive meshfree point clouds."""

from .apf import ParticleSet, apf_run, apf_step, systematic_resample
from .errors import APFDegeneracyError, FilterDivergenceError, FilterError
from .filter import (
    FilterConfig,
    FilterOutput,
    PointCloud,
    ShepardInterpolant,
    backward_euler_samples,
    bayes_update,
    estimate_state,
    filter_run,
    init_cloud,
    mh_resample,
    prediction_step,
    propagate_cloud,
    shepard_eval,
)
from .stochastic import (
    AlphaStableSpec,
    CompoundPoissonSpec,
    RngStream,
    TimeGrid,
    alpha_stable_increment,
    compound_poisson_increment,
    gaussian_increment,
)

__version__ = "0.1.0"

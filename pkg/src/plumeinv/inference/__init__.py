"""Positivity-constrained M-MALA-within-Gibbs inversion."""

import jax

jax.config.update("jax_enable_x64", True)

from plumeinv.inference.chain import ChainConfig, ChainState, Sampler, Trace, run_chain  # noqa: E402
from plumeinv.inference.gibbs import draw_beta, draw_sigma2, gibbs_beta, gibbs_sigma2  # noqa: E402
from plumeinv.inference.init import InitConfig, grid_search, initialize, latin_hypercube  # noqa: E402
from plumeinv.inference.mmala import (  # noqa: E402
    LocalGeometry,
    StepSizeAdapter,
    adapt_step_size,
    grad_and_metric,
    mmala_step,
)
from plumeinv.inference.model import InversionModel, ParameterLayout, Priors  # noqa: E402

__all__ = [
    "ChainConfig", "ChainState", "InitConfig", "InversionModel", "LocalGeometry", "ParameterLayout",
    "Priors", "Sampler", "StepSizeAdapter", "Trace", "adapt_step_size", "draw_beta", "draw_sigma2",
    "gibbs_beta", "gibbs_sigma2", "grad_and_metric", "grid_search", "initialize", "latin_hypercube",
    "mmala_step", "run_chain",
]

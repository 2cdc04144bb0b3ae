"""Gaussian belief propagation for hidden reciprocal models on a single loop."""

from .bp import BpConfig, run, run_on_cut_loop
from .cone import hilbert_dist_orthant, hilbert_dist_psd, psd_leq
from .loopmap import extract_maps, iterate_to_fixed_point
from .model import CyclicModel, Evidence, random_model, sample, validate
from .oracle import exact_smooth, exact_smooth_cut

__all__ = [
    "BpConfig", "CyclicModel", "Evidence", "exact_smooth", "exact_smooth_cut",
    "extract_maps", "hilbert_dist_orthant", "hilbert_dist_psd", "iterate_to_fixed_point",
    "psd_leq", "random_model", "run", "run_on_cut_loop", "sample", "validate",
]

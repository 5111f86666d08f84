"""Li and Stephens haplotype-copying HMM engine.

Typical use::

    from lsengine import *
    cache_from_matrix(haps)                 # L x N, variants in rows
    pars = make_parameters(rho=calc_rho(cm_gaps))
    fwd, bck = make_forward_table(pars), make_backward_table(pars)
    forward(fwd, pars, 250)
    backward(bck, pars, 250)
    d = dist_mat(fwd, bck).d
"""

from .decode import (
    EPS,
    DistanceMatrix,
    PosteriorSlab,
    combine_slabs,
    dist_mat,
    gather_transpose_block,
    post_probs,
)
from .errors import LSEngineError
from .hap_cache import (
    HaplotypeCache,
    VariantLaneBuffer,
    cache_from_matrix,
    cache_summary,
    clear_cache,
    current_cache,
    query_cache,
    unpack_variant,
)
from .kernels import KernelConfig, backward, forward, select_kernel
from .params import ModelParameters, calc_rho, make_parameters
from .tables import (
    BackwardTable,
    ForwardTable,
    copy_table,
    make_backward_table,
    make_forward_table,
    reset_table,
)

__all__ = [
    "EPS", "DistanceMatrix", "PosteriorSlab", "combine_slabs", "dist_mat",
    "gather_transpose_block", "post_probs", "LSEngineError", "HaplotypeCache",
    "VariantLaneBuffer", "cache_from_matrix", "cache_summary", "clear_cache",
    "current_cache", "query_cache", "unpack_variant", "KernelConfig", "backward",
    "forward", "select_kernel", "ModelParameters", "calc_rho", "make_parameters",
    "BackwardTable", "ForwardTable", "copy_table", "make_backward_table",
    "make_forward_table", "reset_table",
]

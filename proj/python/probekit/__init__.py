"""Loss-landscape probing toolkit.

Exact affine embeddings, Hessian spectral probes, tangent-kernel sampling,
norm-bias regularization, conv-operator rank manipulation, and PGD harnesses
on a small float64 network core.
"""

from ._core import (  # noqa: F401
    AffineMap,
    AttackConfig,
    Batch,
    BnState,
    Dataset,
    NetworkSpec,
    NTKSlice,
    ParamVector,
    SpectrumEstimate,
    TensorShape,
    bias_shift_init,
    bias_uniform_init,
    clip_high,
    clip_low,
    conv_clip_high,
    conv_clip_low,
    conv_singular_values,
    correlation,
    dense_singular_values,
    effective_rank,
    embed_affine,
    family_spec,
    forward,
    hessian_extremes,
    init_params,
    load_cifar10,
    loss_grad,
    loss_value,
    lr_schedule,
    mlp_spec,
    mu_heuristic,
    norm_bias_value_grad,
    per_output_param_jacobian,
    pgd_attack,
    relative_change,
    sample_ntk,
    spec_from_json,
    synth_dataset,
    synth_xor,
    train_linear,
)

__version__ = "0.1.0"

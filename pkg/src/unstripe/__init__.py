"""Self-supervised stripe artifact removal for light-sheet microscopy stacks."""

from .config import RunConfig, load_config, save_config
from .graph import SpectralGraph, build_spectral_graph, graph_stats
from .hessian import (
    classic_data_update,
    classic_split_bregman,
    hessian_directions,
    hessian_objective,
    second_derivative,
    second_derivative_adjoint,
    shrink,
)
from .loss import LossBreakdown, Self2SelfLoss, self2self_loss
from .metrics import psnr, ssim
from .network import (
    ComplexLinear,
    DestripeNetwork,
    FAttLayer,
    FGNNLayer,
    GraphTensors,
    load_checkpoint,
    network_forward,
    network_gradients,
    save_checkpoint,
    stripe_subtract,
)
from .pipeline import destripe_volume, detect_corruption
from .simulate import StripeComponent, StripeModel, degrade, generate_stripe_field, make_phantom
from .spectral import (
    AnnulusIndex,
    CorruptionField,
    SpectralVolume,
    build_annuli,
    corruption_mask,
    corruption_matrix,
    detect_stripe_direction,
    forward_spectrum,
    inverse_spectrum,
    whiten_magnitudes,
)
from .training import loss_gradient_check, train
from .unroll import (
    DestripeModel,
    NumericalAbort,
    bregman_update,
    data_update,
    prior_update,
    unfolded_forward,
)
from .volume import Volume, load_volume, save_volume

__version__ = "0.1.0"

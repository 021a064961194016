"""Entropy-initialized sensor placement and field reconstruction on 2-D grids."""

from .baselines import Climatology, PODBasis, fit_climatology, fit_pod, pod_reconstruct, qr_pivot_sensors
from .entropy import (
    EntropyConfig,
    EntropyField,
    PatchModel,
    PixelStats,
    entropy_closed_form,
    entropy_field,
    entropy_held_in,
    entropy_monte_carlo,
    fit_patch_model,
    fit_pixel_gaussian,
    patch_nll,
    pixel_entropy,
)
from .fields import (
    Field,
    FieldSeries,
    GridShape,
    Ordering,
    PatchSet,
    boxcar_smooth,
    extract_patches,
    raster_ordering,
    s_curve_ordering,
    spiral_ordering,
)
from .metrics import EvalReport, bias_field, bias_series, rmse_field, rmse_series, summarize
from .prior import MaskParams, PriorField, SensorSet, init_mask_params, sample_sensors, sensor_prior
from .selector import (
    Decoder,
    TrainConfig,
    TrainReport,
    concrete_select,
    loss,
    reconstruct,
    step_mask,
    straight_through_grad,
    train,
)
from .synth import SynthConfig, generate

__version__ = "0.1.0"

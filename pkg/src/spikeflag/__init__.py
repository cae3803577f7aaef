"""Spiking neural network RFI flagging with polarisation features and a neuromorphic energy model."""

from .data import (
    DatasetSplit,
    FlagMask,
    Patch,
    SyntheticConfig,
    VisibilityTensor,
    generate_synthetic,
    load_hdf5,
    patch,
    save_hdf5,
    split,
    unpatch,
)
from .encoding import SpikeTrain, decode_soft, decode_spike_count, encode_target, latency_encode
from .energy import (
    EnergyConstants,
    EnergyReport,
    flops_snn,
    lower_bound_patch_energy,
    spectrogram_patch_count,
    spectrogram_report,
    upper_bound_power,
)
from .metrics import MetricsReport, accuracy, aggregate, auprc, auroc, f1
from .preprocess import (
    DnConfig,
    PreprocessConfig,
    StokesPixel,
    degree_of_polarisation,
    divisive_normalise,
    magnitude,
    scale_to_unit,
    stokes,
)
from .snn import (
    EncodingConfig,
    LifNetwork,
    LifParams,
    SurrogateConfig,
    TrainConfig,
    backward_bptt,
    build_from_config,
    forward,
    lif_step,
    loss_h,
    measure_spike_rates,
    train,
    xylo_check,
)

__version__ = "0.1.0"

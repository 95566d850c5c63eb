"""Dense denoising autoencoder with hand-written backprop and Adam."""

from ._backend import BACKEND
from .network import (
    ACTIVATIONS,
    AdamHyper,
    AdamState,
    DimChainMismatch,
    DimensionMismatch,
    ForwardCache,
    Gradients,
    Layer,
    LayerSpec,
    ModelParams,
    NetworkError,
    adam_step,
    add_gaussian_noise,
    backward,
    chain,
    forward,
    glorot_limit,
    init_network,
    mse_loss,
    rmse,
)
from .training import (
    ARTIFACT_VERSION,
    ArtifactError,
    CorruptArtifact,
    EmptyDataset,
    TrainConfig,
    TrainedModel,
    TrainingDiverged,
    TrainingError,
    VersionMismatch,
    default_player_spec,
    default_team_spec,
    dumps_model,
    load_model,
    loads_model,
    predict,
    save_model,
    train,
)

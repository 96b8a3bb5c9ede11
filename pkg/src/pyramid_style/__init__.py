"""Feed-forward style transfer on a Laplacian pyramid.

A drafting network stylizes a low-resolution copy of the content image, and
revision networks add stylized residual detail at each doubled resolution.

Main entry points
-----------------
decompose, aggregate : Laplacian pyramid of an image and its inverse.
Extractor, load_extractor : frozen VGG-19 feature taps.
DraftingNet, RevisionNet, PatchDiscriminator : the networks.
stylize_pyramid : full inference through a StylizationStack.
train_drafting, train_revision : the two training stages.
ModelBundle, save_bundle, load_bundle : versioned parameter archives.
"""

from .bundle import FORMAT_VERSION, ModelBundle, checksum, load_bundle, save_bundle
from .config import TrainingConfig, load_config
from .data import iterate_content
from .discriminator import PatchDiscriminator, disc_forward, receptive_field
from .drafting import DraftingNet, StyleContext, adain, build_style_context, draft_forward
from .errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    IncompatibleBundleError,
    IntegrityError,
    LoadError,
    ParameterError,
    StyleTransferError,
    TrainingError,
)
from .features import (
    ChannelStats,
    Extractor,
    channel_stats,
    extract,
    load_extractor,
    random_weights,
    save_extractor_weights,
)
from .imagery import Pyramid, aggregate, decompose, downsample, load_image, save_image, upsample
from .losses import (
    LayerSchedule,
    LossWeights,
    adversarial_losses,
    cosine_cost,
    draft_loss,
    mean_variance_loss,
    perceptual_loss,
    remd_loss,
    self_similarity_loss,
)
from .revision import RevisionNet, StylizationStack, revise_forward, stylize_pyramid
from .training import LossLog, read_loss_log, train_drafting, train_revision

__version__ = "0.1.0"

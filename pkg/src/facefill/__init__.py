"""Face completion toolkit: generative filling of masked face regions.

An encoder-decoder generator paints plausible content into missing pixels,
judged during training by local and global adversarial classifiers and
regularized by a frozen semantic parser. Inference composites the
generated pixels into the original frame and can Poisson-blend the seam.
"""

from .completion import CompletionRequest, complete, composite, poisson_blend
from .data import FaceDataset, dataset_from_arrays, load_image_folder, save_image_folder
from .evaluation import (
    EvalRow,
    RandomConvEmbedder,
    RecognitionSplit,
    evaluate_masks,
    identity_distance,
    mask_size_sweep,
    psnr,
    recognition_experiment,
    ssim,
)
from .imaging import AugmentConfig, augment, encode_png, load_image, save_image
from .losses import LossReport, LossWeights, adversarial_d_loss, adversarial_g_loss, parsing_loss, reconstruction_loss, total_loss
from .masking import MaskSpec, fill_noise, load_user_mask, sample_training_mask, save_mask, standard_eval_masks, sweep_mask_sizes
from .networks import (
    CompletionModel,
    Discriminator,
    DiscriminatorSpec,
    Generator,
    GeneratorSpec,
    Parser,
    ParserSpec,
    build_model,
    crop_local,
    desk_specs,
    discriminator_forward,
    generator_forward,
    parse_labels,
    parser_forward,
)
from .synthetic import make_face_dataset, make_identity_dataset, make_parsing_dataset
from .training import (
    CheckpointError,
    ConfigurationError,
    CurriculumSchedule,
    TrainConfig,
    cache_parsing_targets,
    desk_train_config,
    load_checkpoint,
    save_checkpoint,
    should_update_discriminator,
    train,
    train_parser,
)

__version__ = "0.1.0"

"""stylediff: a desk-scale conditions-guided diffusion video stylizer.

Train a small conditional denoiser on synthetic content/style video pairs,
then stylize videos with multi-condition classifier-free guidance, attention
saliency masks, structure-loss gradient steering, and a temporal deflicker
pass. Everything runs on numpy with a fixed PCG32 stream, so results are
bit-reproducible from the seed.
"""

from .attention import AttentionRecord, SaliencyMask, compute_attention, saliency_mask
from .autoencoder import (AutoencoderWeights, decode, encode,
                          make_identity_autoencoder, train_autoencoder)
from .dataset import (STYLE_TOKENS, SceneSpec, apply_style, build_dataset,
                      generate_video, random_scene, style_id)
from .denoiser import (ConditionSet, DenoiserConfig, DenoiserWeights, forward,
                       init_denoiser, train_denoiser, train_step)
from .guidance import GuidanceScales, cfg, composed_guidance
from .metrics import (Embedder, fit_embedder, frame_accuracy,
                      prompt_consistency, temporal_consistency)
from .numerics import (ConfigError, Gradients, NumericalError, Rng, SgdMomentum,
                       Tape, Var, gaussian, grad_check)
from .sampler import (FrameSequence, Models, SamplerConfig, ddpm_step,
                      stylize_frame, stylize_video)
from .schedule import (NoiseSchedule, forward_sample, make_linear_schedule,
                       posterior_mean, posterior_variance, predict_x0_from_eps)
from .structure import (FeatureExtractor, StructureLossConfig, latent_gradient,
                        make_feature_extractor, self_similarity, structure_loss)
from .temporal import (DeflickerConfig, DeflickerWeights, flicker_score,
                       refine_frame, refine_sequence, train_deflicker)

__version__ = "0.1.0"

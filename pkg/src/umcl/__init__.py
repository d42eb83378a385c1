"""Deepfake detection from one visual source, at desk scale.

Three modality branches (physiological intensity trace, landmark dynamics,
text-prompt embedding) are projected into one space, aligned by an
affinity-driven contrastive loss and hardened across quality levels by
cross-quality similarity learning on the physiological features.
"""

from .alignment import (AffinityMatrix, BlockIndex, affinity, asa_loss,
                        asa_loss_grad, average_quality, build_joint_rows, project)
from .classifier import (Prediction, bce_loss, classify, fuse, total_loss)
from .degrade import downsample_video, perturb_landmarks, sample_frames
from .encoders import l_encode, p_encode, t_encode
from .evaluation import (ABLATION_MODELS, CLEAN, EvalCondition, MetricsReport,
                         ablation_suite, acc, auc, evaluate, ladder_suite,
                         robustness_suite)
from .prompts import FAKE_PROMPTS, REAL_PROMPTS, make_prompt
from .signals import (EPSILON, HeartRateEstimate, SpectralConfig,
                      cqsl_pull_loss, cqsl_push_loss, estimate_heart_rate,
                      hr_consistency_loss, mpc_loss, npc_loss, phy_loss,
                      power_spectral_density)
from .synth import SynthSpec, synth_dataset
from .training import (TrainConfig, TrainState, balanced_batches, fit,
                       grad_check, lr_at, train_step)
from .types import (Label, LandmarkSequence, LossBreakdown, Modality,
                    ModalityFeature, PromptKind, PromptText, Quality, Sample,
                    VideoClip)

__version__ = "0.1.0"

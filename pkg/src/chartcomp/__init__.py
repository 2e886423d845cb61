"""Task-oriented CSI compression via channel charting.

Channels are embedded into low-dimensional chart locations by a learnable
attention encoder over a calibration set, decoded into unit-norm precoding
vectors by a random-Fourier-feature network, trained end to end on a
precoder-alignment loss, and evaluated with single-user alignment and
multi-user sum-rate metrics.
"""

from .charting import (Chart, affine_alignment_error, classical_mds, geodesic_distances,
                       isomap_init, knn_graph, pairwise_distances,
                       phase_insensitive_distance)
from .datagen import (ArrayGeometry, ChannelSample, Dataset, Rect, Scene, SceneConfig,
                      SplitCounts, build_scene, generate_dataset, synth_channel)
from .evaluate import (RhoStats, SumRateCurve, compression_ratio, mmse_precoder,
                       mrt_precoder, param_count, reconstruct_channel, rho, rho_stats,
                       sum_rate, sum_rate_sweep)
from .model import (DecoderParams, EncoderParams, ModelConfig, decode, encode, init_model,
                    mlp_forward, relu_c, rff_features)
from .storage import load_checkpoint, load_dataset, save_checkpoint, save_dataset
from .training import (AdamState, GradientSet, SubsampleConfig, TrainConfig, adam_step,
                       backward, chart_cosine_similarity, loss_batch, subsample,
                       subsample_encoder, train)

__version__ = "0.1.0"

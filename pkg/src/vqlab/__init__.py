"""vqlab: virtual-queue estimation of small packet-loss probabilities.

The package pairs an online estimator built from three counter-based
virtual queues with two offline referees: a discrete-event finite-buffer
FIFO simulation (ground truth) and a variance-curve overflow oracle.
"""

from .analysis import (binomial_var, delta_var_mapped, eta_min, eta_of_alpha,
                       eta_of_probs, optimal_u, phi)
from .errors import (ConfigurationError, DegenerateInputError,
                     InsufficientDataError, NoDtsError, VqLabError)
from .mva import (DtsResult, VarianceCurve, assemble_loss, dts_search,
                  g_value, measure_variance_curve, mva_tail)
from .queue_core import (DirectLossStats, FiniteFifo, QueueParams,
                         VqBankState, WindowStats, advance_vq_bank,
                         observe_tail, on_arrival_vq_bank,
                         simulate_finite_fifo, set_vq3_rate)
from .traffic import (Mmpp3Spec, OnOffSpec, PacketEvent, PacketStream,
                      StationaryStats, generate, generate_mmpp3,
                      generate_onoff, merge_streams, read_trace,
                      stationary_stats, write_trace)
from .vq_estimator import (LossEstimate, RateEstimator, VqConfig, map_tail,
                           recommend_alpha, run_growing, run_online,
                           sample_rate, vq3_params)

__version__ = "0.1.0"

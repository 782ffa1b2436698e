"""Target-specific object proposals, affinity ranking, and a
proposal-driven tracker, with a desk-scale evaluation harness."""

from .density import (ForegroundModel, ResponseMap, TriLabel, TriMap,
                      build_trimap, estimate_model, response_map,
                      update_model)
from .edges import (AffinityTable, EdgeGroups, EdgeMap, EdgeParams,
                    detect_edges, group_affinities, group_edges)
from .evaluation import (AppendixAInstance, RecallCurve, SynthSpec,
                         appendix_a_gap, distance_precision, iou,
                         load_sequence, recall_curve, sequence_proposals,
                         sre_perturbations, success_metrics, synth_sequence)
from .imaging import (BoundingBox, ImageBuffer, IntegralImage, box_sum,
                      integral_image, load_image, quantize_pixel, save_image)
from .kernels import BACKEND_NAME as KERNEL_BACKEND
from .proposals import (GenParams, Proposal, TargetSpec, generate_candidates,
                        generate_topg, nms, score_box)
from .ranking import (AffinityConfig, color_affinity, combined_affinity,
                      rank_proposals, shape_affinity, size_affinity)
from .tracking import (LogisticScorer, TrackerConfig, TrackerState,
                       augment_positives, extract_features, init_tracker,
                       label_samples, step, track_sequence)

__version__ = "0.1.0"

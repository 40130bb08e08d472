"""Endogenous/exogenous influence inference for activation cascades.

Given one activation cascade and the friendship network of its users,
this package fits a global peer-influence model together with a
nonparametric per-window external influence series by alternating
maximum likelihood, attributes every activation to one influence or the
other, and scores the individual influence of users. It also simulates
cascades under the same models to generate labeled benchmark data.
"""

from .attribution import (InfluenceScores, ResponsibilityScores, RocCurve,
                          baseline_scores, collective_influence,
                          expected_counts, individual_influence,
                          peer_prob_at_activation, responsibility, roc_auc)
from .cascade import (Cascade, SessionTable, activity_masks, attach_sessions,
                      discretize, load_sessions, referral_labels)
from .graph import (SocialGraph, active_peer_counts, configuration_model,
                    graph_from_edges, load_edge_list, powerlaw_cluster_graph)
from .infer import (InferenceResult, OptimizerSpec, alternate,
                    fit_endogenous_given_ext, fit_ext_given_endogenous,
                    init_per_window)
from .likelihood import (CorrectionConfig, WindowLikelihood,
                         correction_factor, total_loglik, window_loglik)
from .models import (EndogenousModel, ExogenousProfile, peer_prob_exp,
                     peer_prob_log, peer_prob_si, peer_probability,
                     render_profile)
from .simulate import (SimConfig, SimOutcome, ground_truth_series,
                       outcome_sessions, simulate)

__version__ = "0.1.0"

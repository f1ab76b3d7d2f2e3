#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "odp/autodiff.hpp"
#include "odp/preprocess.hpp"
#include "odp/temporal_recurrent.hpp"

namespace odp {

/// Baseline prediction for one target slot: per-grid demand and OD counts.
struct BaselineRef {
    Eigen::VectorXd d;
    Eigen::MatrixXd G;
};

enum class HaMode { plus, tendency, periodicity };
enum class TuneScheme { none, sum, wsum, mult };

/// Historical average of ground truth over the chosen slice set: tendency
/// (the P most recent slots), periodicity (same slot on the P previous days),
/// or plus (all four slices pooled with multiplicity, 4P terms).
/// graphs[t-1] holds slot t; the target is slot T+1.
BaselineRef ha_baseline(const std::vector<ODGraph>& graphs, int T, int l, int P, HaMode mode);

/// Auto-regressive parameters: one weight per history position over the HA+
/// slot list (tendency, periodicity, prior, posterior; each oldest-first)
/// plus a bias, independently for the demand and OD tasks.
///   ar.d.w (1 x 4P), ar.d.b, ar.od.w (1 x 4P), ar.od.b
/// Initialized to the uniform average (weights 1/(4P), bias 0), which makes
/// an untrained AR coincide with HA+.
void register_ar(ad::ParamStore& ps, int P);

/// AR prediction with fixed parameters (no gradients).
BaselineRef ar_baseline(const std::vector<ODGraph>& graphs, int T, int l, int P,
                        const ad::ParamStore& ps);

/// AR prediction on a tape, for training the AR model itself.
/// Returns (demand n x 1, OD n x n).
std::pair<ad::Var, ad::Var> ar_forward(ad::Tape& tape, const std::vector<ODGraph>& graphs,
                                       int T, int l, int P, ad::ParamStore& ps);

/// Tuning step combining the network output with the baseline reference.
Eigen::MatrixXd aggr_value(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref,
                           TuneScheme scheme, double w);
ad::Var aggr(ad::Var a, const Eigen::MatrixXd& ref, TuneScheme scheme, double w);

/// Transfer-head parameters:
///   tr.d.fcw (1 x D), tr.d.fcb       demand FC, linear activation
///   tr.od.wa (d_e x D), tr.od.fcw (1 x 2 d_e), tr.od.fcb   pairwise scorer
/// Both heads start near the identity tuning factor (output about 1) so that
/// multiplicative tuning begins close to the baseline itself.
void register_transfer(ad::ParamStore& ps, int D, int d_e, Rng& rng);

/// Per-grid demand from the fused embedding, tuned against ref (n-vector).
ad::Var demand_head(ad::Tape& tape, ad::Var fused, ad::ParamStore& ps,
                    const Eigen::VectorXd& ref, TuneScheme scheme, double w);

/// Dense OD matrix: pairwise score over embedding rows for every ordered
/// (i, j), tuned against ref (n x n).
ad::Var od_head(ad::Tape& tape, ad::Var fused, ad::ParamStore& ps,
                const Eigen::MatrixXd& ref, TuneScheme scheme, double w,
                double leaky_slope = 0.01);

}  // namespace odp

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "odp/autodiff.hpp"
#include "odp/neighborhoods.hpp"

namespace odp {

enum class HeadAgg { average, concat };

struct SpatialConfig {
    int d_f = 0;
    int d_e = 16;
    int K = 3;
    HeadAgg agg = HeadAgg::average;
    bool residual = true;
    double leaky_slope = 0.01;

    /// Width of one embedding row m_i.
    int embed_dim() const { return agg == HeadAgg::average ? 4 * d_e : (3 * K + 1) * d_e; }
};

/// Parameter names used by the spatial layer, in registration order:
///   spa.ws
///   per neighborhood nu in {fwd, bwd, geo}:
///     per head k: spa.<nu>.h<k>.wa, spa.<nu>.h<k>.fcw, spa.<nu>.h<k>.fcb
///     spa.<nu>.gate.wg, spa.<nu>.gate.fcw, spa.<nu>.gate.fcb
void register_spatial(ad::ParamStore& ps, const SpatialConfig& cfg, Rng& rng);

/// Pairwise score: FC with LeakyReLU over the concatenated projections of the
/// two feature vectors. Asymmetric in (v_i, v_j) by construction.
double attention_net(const Eigen::VectorXd& v_i, const Eigen::VectorXd& v_j,
                     const Eigen::MatrixXd& W_a, const Eigen::RowVectorXd& fc_w,
                     double fc_b, double slope = 0.01);

/// Softmax attention weights for every edge of a view, in edge order.
/// The pre-weight scales the neighbor's feature vector before scoring.
std::vector<double> attention_weights(const Eigen::MatrixXd& V, const NeighborhoodView& view,
                                      const Eigen::MatrixXd& W_a, const Eigen::RowVectorXd& fc_w,
                                      double fc_b, double slope = 0.01);

/// Head gates per grid: sigmoid FC over [v_i | max-pool of projected
/// pre-weighted neighbors | mean of raw pre-weighted neighbors].
Eigen::MatrixXd compute_gates(const Eigen::MatrixXd& V, const NeighborhoodView& view,
                              const Eigen::MatrixXd& W_g, const Eigen::MatrixXd& gate_fc_w,
                              const Eigen::RowVectorXd& gate_fc_b);

/// Full spatial embedding for one slot on a tape: per neighborhood, K gated
/// attention heads over the shared projection W_s, aggregated and
/// concatenated after the projected own-features block.
ad::Var spatial_embed(ad::Tape& tape, ad::Var V, const NeighborhoodSet& nbh,
                      ad::ParamStore& ps, const SpatialConfig& cfg);

/// spatial_embed without a surrounding model; convenience for tests.
Eigen::MatrixXd spatial_embed_value(const Eigen::MatrixXd& V, const NeighborhoodSet& nbh,
                                    ad::ParamStore& ps, const SpatialConfig& cfg);

}  // namespace odp

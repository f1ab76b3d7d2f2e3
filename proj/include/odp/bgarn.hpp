#pragma once

#include <cstdint>
#include <string>

#include "odp/autodiff.hpp"
#include "odp/spatial_attention.hpp"
#include "odp/temporal_recurrent.hpp"
#include "odp/transfer_baselines.hpp"
#include "odp/workspace.hpp"

namespace odp {

enum class BaselineSource { ha_plus, ha_t, ha_p, ar };

struct BgarnConfig {
    // Data shape, fixed by the workspace.
    int n = 0;
    int d_f = 0;
    int l = 0;

    // Architecture.
    int d_e = 16;
    int K = 3;
    int P = 7;
    HeadAgg agg = HeadAgg::average;
    bool residual = true;
    CellType cell = CellType::lstm;
    bool share_cell = true;

    // Transfer layer.
    TuneScheme scheme = TuneScheme::mult;
    double wsum_w = 0.5;
    BaselineSource baseline = BaselineSource::ha_plus;

    // Loss.
    double eta_d = 0.8;
    double eta_o = 0.2;
    double beta = 1.0;

    SpatialConfig spatial() const { return {d_f, d_e, K, agg, residual, 0.01}; }
    TemporalConfig temporal() const {
        return {spatial().embed_dim(), P, cell, share_cell, agg};
    }
    int fused_dim() const { return temporal().fused_dim(); }
};

/// The full model: spatial attention, temporal recurrence, transfer heads.
/// When the tuning baseline is AR, the AR parameters live in `ar_ps` and are
/// constants from the main model's perspective (trained separately).
struct BgarnModel {
    BgarnConfig cfg;
    ad::ParamStore ps;
    ad::ParamStore ar_ps;
    ad::BatchNormState bn;

    explicit BgarnModel(const BgarnConfig& c) : cfg(c), bn(c.fused_dim()) {}
};

/// Seeded parameter registration + initialization for a fresh model.
void init_bgarn(BgarnModel& model, std::uint64_t seed);

/// Baseline reference for predicting slot tau (history ends at tau-1).
BaselineRef baseline_for(const BgarnModel& model, const Dataset& ds, int tau);

struct BgarnOutput {
    ad::Var d_hat;  // n x 1
    ad::Var g_hat;  // n x n
};

/// One sample's forward pass predicting slot tau. Training mode uses batch
/// statistics in the fused BatchNorm (and updates running stats when
/// update_running is set); eval mode consumes the running statistics.
BgarnOutput bgarn_forward(ad::Tape& tape, BgarnModel& model, const Dataset& ds, int tau,
                          bool train_mode, bool update_running);

/// eta_d * SmoothL1(d_hat, d) + eta_o * SmoothL1(g_hat, G).
ad::Var bgarn_loss(const BgarnOutput& out, const Eigen::VectorXd& d_truth,
                   const Eigen::MatrixXd& g_truth, const BgarnConfig& cfg);

}  // namespace odp

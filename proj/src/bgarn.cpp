#include "odp/bgarn.hpp"

#include <map>

namespace odp {

void init_bgarn(BgarnModel& model, std::uint64_t seed) {
    Rng rng(seed);
    register_spatial(model.ps, model.cfg.spatial(), rng);
    register_temporal(model.ps, model.cfg.temporal(), rng);
    register_transfer(model.ps, model.cfg.fused_dim(), model.cfg.d_e, rng);
    if (model.cfg.baseline == BaselineSource::ar) register_ar(model.ar_ps, model.cfg.P);
}

BaselineRef baseline_for(const BgarnModel& model, const Dataset& ds, int tau) {
    int T_ctx = tau - 1;
    switch (model.cfg.baseline) {
        case BaselineSource::ha_plus:
            return ha_baseline(ds.graphs(), T_ctx, model.cfg.l, model.cfg.P, HaMode::plus);
        case BaselineSource::ha_t:
            return ha_baseline(ds.graphs(), T_ctx, model.cfg.l, model.cfg.P, HaMode::tendency);
        case BaselineSource::ha_p:
            return ha_baseline(ds.graphs(), T_ctx, model.cfg.l, model.cfg.P, HaMode::periodicity);
        case BaselineSource::ar:
            return ar_baseline(ds.graphs(), T_ctx, model.cfg.l, model.cfg.P, model.ar_ps);
    }
    throw std::logic_error("unreachable baseline source");
}

BgarnOutput bgarn_forward(ad::Tape& tape, BgarnModel& model, const Dataset& ds, int tau,
                          bool train_mode, bool update_running) {
    const BgarnConfig& cfg = model.cfg;
    SliceIndices slices = slice_indices(tau - 1, cfg.l, cfg.P);

    // Each distinct history slot is embedded once and shared across slices.
    std::map<int, ad::Var> embedded;
    SpatialConfig spat = cfg.spatial();
    for (const auto* slice : slices.all()) {
        for (int t : *slice) {
            if (embedded.count(t)) continue;
            ad::Var V = tape.input(ds.features(t));
            embedded.emplace(t, spatial_embed(tape, V, ds.views(t), model.ps, spat));
        }
    }

    TemporalConfig temp = cfg.temporal();
    std::array<ad::Var, 4> encoded;
    auto parts = slices.all();
    for (int s = 0; s < 4; ++s) {
        std::vector<ad::Var> steps;
        for (int t : *parts[s]) steps.push_back(embedded.at(t));
        encoded[s] = encode_sequence(tape, steps, model.ps, temp, s);
    }
    ad::Var fused =
        fuse_temporal(tape, encoded, model.ps, temp, model.bn, train_mode, update_running);

    BaselineRef ref = baseline_for(model, ds, tau);
    return {demand_head(tape, fused, model.ps, ref.d, cfg.scheme, cfg.wsum_w),
            od_head(tape, fused, model.ps, ref.G, cfg.scheme, cfg.wsum_w)};
}

ad::Var bgarn_loss(const BgarnOutput& out, const Eigen::VectorXd& d_truth,
                   const Eigen::MatrixXd& g_truth, const BgarnConfig& cfg) {
    ad::Var l_d = ad::smooth_l1_loss(out.d_hat, d_truth, cfg.beta);
    ad::Var l_o = ad::smooth_l1_loss(out.g_hat, g_truth, cfg.beta);
    return ad::add_scaled(l_d, l_o, cfg.eta_d, cfg.eta_o);
}

}  // namespace odp

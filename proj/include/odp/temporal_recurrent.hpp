#pragma once

#include <array>
#include <string>
#include <vector>

#include "odp/autodiff.hpp"
#include "odp/spatial_attention.hpp"

namespace odp {

/// The four history windows feeding the recurrent encoder, as 1-based slot
/// indices ordered oldest-first.
struct SliceIndices {
    std::vector<int> tendency;     // T+1-p: the P slots right before the target
    std::vector<int> periodicity;  // T+1-lp: same time of day on previous days
    std::vector<int> prior;        // T-lp: one slot before each periodic slot
    std::vector<int> posterior;    // T+2-lp: one slot after each periodic slot

    std::array<const std::vector<int>*, 4> all() const {
        return {&tendency, &periodicity, &prior, &posterior};
    }
};

/// Evaluate the slice index formulas for history depth P at last observed
/// slot T with l slots per day. Throws InvalidTarget if any index falls
/// outside [1, T].
SliceIndices slice_indices(int T, int l, int P);

enum class CellType { lstm, gru };

struct TemporalConfig {
    int D = 0;  // input width and hidden size
    int P = 7;
    CellType cell = CellType::lstm;
    bool share_cell = true;
    HeadAgg fuse = HeadAgg::average;

    int fused_dim() const { return fuse == HeadAgg::average ? D : 4 * D; }
};

/// Parameter names, in registration order:
///   per cell c (one shared "cell", or "st"/"sp"/"stpm"/"stpp"):
///     tmp.<c>.wih, tmp.<c>.whh, tmp.<c>.bih, tmp.<c>.bhh
///   tmp.bn.gamma (ones), tmp.bn.beta (zeros)
void register_temporal(ad::ParamStore& ps, const TemporalConfig& cfg, Rng& rng);

/// Run one slice's sequence (oldest first) through the recurrent cell and
/// average the hidden states over all steps. slice_idx picks the per-slice
/// cell when sharing is off (0=tendency, 1=periodicity, 2=prior, 3=posterior).
ad::Var encode_sequence(ad::Tape& tape, const std::vector<ad::Var>& steps,
                        ad::ParamStore& ps, const TemporalConfig& cfg, int slice_idx);

/// Aggregate the four encoded slices (mean or concat) and batch-normalize
/// per feature over the grid dimension.
ad::Var fuse_temporal(ad::Tape& tape, const std::array<ad::Var, 4>& encoded,
                      ad::ParamStore& ps, const TemporalConfig& cfg,
                      ad::BatchNormState& bn, bool train, bool update_running);

}  // namespace odp

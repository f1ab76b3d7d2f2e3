#include "odp/temporal_recurrent.hpp"

namespace odp {

SliceIndices slice_indices(int T, int l, int P) {
    if (P < 1) throw InvalidTarget("history depth P must be at least 1");
    SliceIndices s;
    auto push_checked = [&](std::vector<int>& v, int t, const char* which) {
        if (t < 1 || t > T)
            throw InvalidTarget(std::string(which) + " slice needs slot " + std::to_string(t) +
                                ", outside [1, " + std::to_string(T) + "]");
        v.push_back(t);
    };
    // p runs from P down to 1 so each list comes out oldest-first.
    for (int p = P; p >= 1; --p) push_checked(s.tendency, T + 1 - p, "tendency");
    for (int p = P; p >= 1; --p) push_checked(s.periodicity, T + 1 - l * p, "periodicity");
    for (int p = P; p >= 1; --p) push_checked(s.prior, T - l * p, "prior");
    for (int p = P; p >= 1; --p) push_checked(s.posterior, T + 2 - l * p, "posterior");
    return s;
}

namespace {

const char* kSliceCells[4] = {"st", "sp", "stpm", "stpp"};

std::string cell_param(const TemporalConfig& cfg, int slice_idx, const char* part) {
    const char* cell = cfg.share_cell ? "cell" : kSliceCells[slice_idx];
    return std::string("tmp.") + cell + "." + part;
}

}  // namespace

void register_temporal(ad::ParamStore& ps, const TemporalConfig& cfg, Rng& rng) {
    int gate_rows = (cfg.cell == CellType::lstm ? 4 : 3) * cfg.D;
    int n_cells = cfg.share_cell ? 1 : 4;
    for (int c = 0; c < n_cells; ++c) {
        ad::init_uniform(ps.add(cell_param(cfg, c, "wih"), gate_rows, cfg.D), rng, cfg.D);
        ad::init_uniform(ps.add(cell_param(cfg, c, "whh"), gate_rows, cfg.D), rng, cfg.D);
        ad::init_uniform(ps.add(cell_param(cfg, c, "bih"), 1, gate_rows), rng, cfg.D);
        ad::init_uniform(ps.add(cell_param(cfg, c, "bhh"), 1, gate_rows), rng, cfg.D);
    }
    ps.add("tmp.bn.gamma", 1, cfg.fused_dim()).value.setOnes();
    ps.add("tmp.bn.beta", 1, cfg.fused_dim());
}

ad::Var encode_sequence(ad::Tape& tape, const std::vector<ad::Var>& steps,
                        ad::ParamStore& ps, const TemporalConfig& cfg, int slice_idx) {
    int D = cfg.D;
    int n = steps.at(0).rows();

    ad::Var wih = tape.param(ps.at(cell_param(cfg, slice_idx, "wih")));
    ad::Var whh = tape.param(ps.at(cell_param(cfg, slice_idx, "whh")));
    ad::Var bih = tape.param(ps.at(cell_param(cfg, slice_idx, "bih")));
    ad::Var bhh = tape.param(ps.at(cell_param(cfg, slice_idx, "bhh")));

    ad::Var h = tape.input(Eigen::MatrixXd::Zero(n, D));
    ad::Var c = tape.input(Eigen::MatrixXd::Zero(n, D));

    std::vector<ad::Var> outputs;
    for (const ad::Var& x : steps) {
        if (cfg.cell == CellType::lstm) {
            // Gate order i, f, g, o across the 4D-wide pre-activation.
            ad::Var pre = ad::add(ad::add_rowvec(ad::matmul_nt(x, wih), bih),
                                  ad::add_rowvec(ad::matmul_nt(h, whh), bhh));
            ad::Var gi = ad::sigmoid(ad::slice_cols(pre, 0, D));
            ad::Var gf = ad::sigmoid(ad::slice_cols(pre, D, D));
            ad::Var gg = ad::tanh_(ad::slice_cols(pre, 2 * D, D));
            ad::Var go = ad::sigmoid(ad::slice_cols(pre, 3 * D, D));
            c = ad::add(ad::mul(gf, c), ad::mul(gi, gg));
            h = ad::mul(go, ad::tanh_(c));
        } else {
            // Gate order r, z, n; the reset gate scales only the hidden
            // contribution of the candidate.
            ad::Var gi = ad::add_rowvec(ad::matmul_nt(x, wih), bih);
            ad::Var gh = ad::add_rowvec(ad::matmul_nt(h, whh), bhh);
            ad::Var r = ad::sigmoid(ad::add(ad::slice_cols(gi, 0, D), ad::slice_cols(gh, 0, D)));
            ad::Var z = ad::sigmoid(ad::add(ad::slice_cols(gi, D, D), ad::slice_cols(gh, D, D)));
            ad::Var cand = ad::tanh_(ad::add(ad::slice_cols(gi, 2 * D, D),
                                             ad::mul(r, ad::slice_cols(gh, 2 * D, D))));
            h = ad::add(ad::mul(ad::one_minus(z), cand), ad::mul(z, h));
        }
        outputs.push_back(h);
    }
    return ad::mean_of(outputs);
}

ad::Var fuse_temporal(ad::Tape& tape, const std::array<ad::Var, 4>& encoded,
                      ad::ParamStore& ps, const TemporalConfig& cfg,
                      ad::BatchNormState& bn, bool train, bool update_running) {
    std::vector<ad::Var> parts(encoded.begin(), encoded.end());
    ad::Var fused = cfg.fuse == HeadAgg::average ? ad::mean_of(parts) : ad::concat_cols(parts);
    return ad::batchnorm(fused, tape.param(ps.at("tmp.bn.gamma")),
                         tape.param(ps.at("tmp.bn.beta")), bn, train, update_running);
}

}  // namespace odp

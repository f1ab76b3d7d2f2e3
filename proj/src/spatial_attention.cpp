#include "odp/spatial_attention.hpp"

#include <cmath>

namespace odp {

namespace {

const char* kNbhNames[3] = {"fwd", "bwd", "geo"};

std::string head_name(int nu, int k, const char* part) {
    return std::string("spa.") + kNbhNames[nu] + ".h" + std::to_string(k) + "." + part;
}

std::string gate_name(int nu, const char* part) {
    return std::string("spa.") + kNbhNames[nu] + ".gate." + part;
}

}  // namespace

void register_spatial(ad::ParamStore& ps, const SpatialConfig& cfg, Rng& rng) {
    auto add = [&](const std::string& name, int rows, int cols, int fan_in) {
        ad::init_uniform(ps.add(name, rows, cols), rng, fan_in);
    };
    add("spa.ws", cfg.d_e, cfg.d_f, cfg.d_f);
    for (int nu = 0; nu < 3; ++nu) {
        for (int k = 0; k < cfg.K; ++k) {
            add(head_name(nu, k, "wa"), cfg.d_e, cfg.d_f, cfg.d_f);
            add(head_name(nu, k, "fcw"), 1, 2 * cfg.d_e, 2 * cfg.d_e);
            add(head_name(nu, k, "fcb"), 1, 1, 2 * cfg.d_e);
        }
        add(gate_name(nu, "wg"), cfg.d_e, cfg.d_f, cfg.d_f);
        add(gate_name(nu, "fcw"), cfg.K, 2 * cfg.d_f + cfg.d_e, 2 * cfg.d_f + cfg.d_e);
        add(gate_name(nu, "fcb"), 1, cfg.K, 2 * cfg.d_f + cfg.d_e);
    }
}

double attention_net(const Eigen::VectorXd& v_i, const Eigen::VectorXd& v_j,
                     const Eigen::MatrixXd& W_a, const Eigen::RowVectorXd& fc_w,
                     double fc_b, double slope) {
    if (v_i.size() != W_a.cols() || v_j.size() != W_a.cols())
        throw std::invalid_argument("attention_net: feature dimension mismatch");
    if (fc_w.size() != 2 * W_a.rows())
        throw std::invalid_argument("attention_net: fc width must be twice the embedding dim");
    Eigen::VectorXd cat(2 * W_a.rows());
    cat << W_a * v_i, W_a * v_j;
    double z = fc_w.dot(cat) + fc_b;
    return z > 0 ? z : slope * z;
}

std::vector<double> attention_weights(const Eigen::MatrixXd& V, const NeighborhoodView& view,
                                      const Eigen::MatrixXd& W_a, const Eigen::RowVectorXd& fc_w,
                                      double fc_b, double slope) {
    std::vector<double> out(view.dst.size());
    for (int i = 0; i < view.n(); ++i) {
        int b = view.offsets[i], e = view.offsets[i + 1];
        if (b == e) continue;
        double mx = -std::numeric_limits<double>::infinity();
        std::vector<double> scores(e - b);
        for (int s = b; s < e; ++s) {
            Eigen::VectorXd vj = view.w[s] * V.row(view.dst[s]).transpose();
            scores[s - b] = attention_net(V.row(i).transpose(), vj, W_a, fc_w, fc_b, slope);
            mx = std::max(mx, scores[s - b]);
        }
        double sum = 0.0;
        for (int s = b; s < e; ++s) sum += (out[s] = std::exp(scores[s - b] - mx));
        for (int s = b; s < e; ++s) out[s] /= sum;
    }
    return out;
}

Eigen::MatrixXd compute_gates(const Eigen::MatrixXd& V, const NeighborhoodView& view,
                              const Eigen::MatrixXd& W_g, const Eigen::MatrixXd& gate_fc_w,
                              const Eigen::RowVectorXd& gate_fc_b) {
    int n = static_cast<int>(V.rows());
    int d_f = static_cast<int>(V.cols());
    int d_e = static_cast<int>(W_g.rows());
    int K = static_cast<int>(gate_fc_w.rows());
    Eigen::MatrixXd gates(n, K);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd maxpool = Eigen::VectorXd::Zero(d_e);
        Eigen::VectorXd meanpool = Eigen::VectorXd::Zero(d_f);
        int b = view.offsets[i], e = view.offsets[i + 1];
        if (b != e) {
            maxpool.setConstant(-std::numeric_limits<double>::infinity());
            for (int s = b; s < e; ++s) {
                Eigen::VectorXd vj = view.w[s] * V.row(view.dst[s]).transpose();
                maxpool = maxpool.cwiseMax(W_g * vj);
                meanpool += vj;
            }
            meanpool /= (e - b);
        }
        Eigen::VectorXd cat(d_f + d_e + d_f);
        cat << V.row(i).transpose(), maxpool, meanpool;
        Eigen::VectorXd z = gate_fc_w * cat + gate_fc_b.transpose();
        gates.row(i) = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }).transpose();
    }
    return gates;
}

ad::Var spatial_embed(ad::Tape& tape, ad::Var V, const NeighborhoodSet& nbh,
                      ad::ParamStore& ps, const SpatialConfig& cfg) {
    const NeighborhoodView* views[3] = {&nbh.fwd, &nbh.bwd, &nbh.geo};

    ad::Var WsV = ad::matmul_nt(V, tape.param(ps.at("spa.ws")));

    std::vector<ad::Var> blocks;
    blocks.push_back(WsV);

    for (int nu = 0; nu < 3; ++nu) {
        const NeighborhoodView& view = *views[nu];
        std::vector<int> src(view.dst.size());
        for (int i = 0; i < view.n(); ++i)
            for (int s = view.offsets[i]; s < view.offsets[i + 1]; ++s) src[s] = i;
        Eigen::VectorXd pre_w =
            Eigen::Map<const Eigen::VectorXd>(view.w.data(), static_cast<long>(view.w.size()));

        // Pre-weighted neighbor features, one row per edge.
        ad::Var Vw = ad::rowscale_const(ad::gather_rows(V, view.dst), pre_w);

        // Gates for all K heads of this neighborhood.
        ad::Var pooled_max = ad::segment_max(
            ad::matmul_nt(Vw, tape.param(ps.at(gate_name(nu, "wg")))), view.offsets);
        ad::Var pooled_mean = ad::segment_mean(Vw, view.offsets);
        ad::Var gate_in = ad::concat_cols({V, pooled_max, pooled_mean});
        ad::Var gates = ad::sigmoid(
            ad::add_rowvec(ad::matmul_nt(gate_in, tape.param(ps.at(gate_name(nu, "fcw")))),
                           tape.param(ps.at(gate_name(nu, "fcb")))));

        std::vector<ad::Var> heads;
        for (int k = 0; k < cfg.K; ++k) {
            ad::Var Wa = tape.param(ps.at(head_name(nu, k, "wa")));
            ad::Var proj_src = ad::gather_rows(ad::matmul_nt(V, Wa), src);
            ad::Var proj_dst = ad::matmul_nt(Vw, Wa);
            ad::Var scores = ad::leaky_relu(
                ad::add_rowvec(ad::matmul_nt(ad::concat_cols({proj_src, proj_dst}),
                                             tape.param(ps.at(head_name(nu, k, "fcw")))),
                               tape.param(ps.at(head_name(nu, k, "fcb")))),
                cfg.leaky_slope);
            ad::Var alpha = ad::segment_softmax(scores, view.offsets);
            ad::Var att_sum =
                ad::segment_sum(ad::rowscale(ad::gather_rows(WsV, view.dst), alpha), view.offsets);
            ad::Var gated = ad::rowscale(att_sum, ad::slice_cols(gates, k, 1));
            heads.push_back(cfg.residual ? ad::add(WsV, gated) : gated);
        }
        blocks.push_back(cfg.agg == HeadAgg::average ? ad::mean_of(heads)
                                                     : ad::concat_cols(heads));
    }
    return ad::concat_cols(blocks);
}

Eigen::MatrixXd spatial_embed_value(const Eigen::MatrixXd& V, const NeighborhoodSet& nbh,
                                    ad::ParamStore& ps, const SpatialConfig& cfg) {
    ad::Tape tape;
    return spatial_embed(tape, tape.input(V), nbh, ps, cfg).value();
}

}  // namespace odp

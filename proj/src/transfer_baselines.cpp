#include "odp/transfer_baselines.hpp"

namespace odp {

namespace {

/// HA+ slot list: the four slices in fixed order, each oldest-first.
std::vector<int> plus_slots(const SliceIndices& s) {
    std::vector<int> slots;
    slots.reserve(4 * s.tendency.size());
    for (const auto* part : s.all()) slots.insert(slots.end(), part->begin(), part->end());
    return slots;
}

}  // namespace

BaselineRef ha_baseline(const std::vector<ODGraph>& graphs, int T, int l, int P, HaMode mode) {
    SliceIndices s = slice_indices(T, l, P);
    std::vector<int> slots;
    switch (mode) {
        case HaMode::tendency: slots = s.tendency; break;
        case HaMode::periodicity: slots = s.periodicity; break;
        case HaMode::plus: slots = plus_slots(s); break;
    }
    int n = graphs.at(0).n();
    BaselineRef ref{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
    for (int t : slots) {
        const ODGraph& g = graphs.at(t - 1);
        ref.d += g.demand();
        for (int i = 0; i < n; ++i)
            for (const auto& [j, c] : g.row(i)) ref.G(i, j) += c;
    }
    ref.d /= static_cast<double>(slots.size());
    ref.G /= static_cast<double>(slots.size());
    return ref;
}

void register_ar(ad::ParamStore& ps, int P) {
    double u = 1.0 / (4.0 * P);
    ps.add("ar.d.w", 1, 4 * P).value.setConstant(u);
    ps.add("ar.d.b", 1, 1);
    ps.add("ar.od.w", 1, 4 * P).value.setConstant(u);
    ps.add("ar.od.b", 1, 1);
}

namespace {

/// Column q holds the demand vector of the qth HA+ history slot.
Eigen::MatrixXd demand_history(const std::vector<ODGraph>& graphs, const std::vector<int>& slots) {
    int n = graphs.at(0).n();
    Eigen::MatrixXd H(n, static_cast<int>(slots.size()));
    for (std::size_t q = 0; q < slots.size(); ++q) H.col(static_cast<int>(q)) = graphs.at(slots[q] - 1).demand();
    return H;
}

/// Column q holds vec(G) of the qth history slot, (i, j) in row-major order.
Eigen::MatrixXd od_history(const std::vector<ODGraph>& graphs, const std::vector<int>& slots) {
    int n = graphs.at(0).n();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n * n, static_cast<int>(slots.size()));
    for (std::size_t q = 0; q < slots.size(); ++q) {
        const ODGraph& g = graphs.at(slots[q] - 1);
        for (int i = 0; i < n; ++i)
            for (const auto& [j, c] : g.row(i)) H(i * n + j, static_cast<int>(q)) = c;
    }
    return H;
}

}  // namespace

BaselineRef ar_baseline(const std::vector<ODGraph>& graphs, int T, int l, int P,
                        const ad::ParamStore& ps) {
    std::vector<int> slots = plus_slots(slice_indices(T, l, P));
    int n = graphs.at(0).n();
    Eigen::MatrixXd Hd = demand_history(graphs, slots);
    Eigen::MatrixXd Hg = od_history(graphs, slots);
    BaselineRef ref;
    ref.d = Hd * ps.at("ar.d.w").value.row(0).transpose();
    ref.d.array() += ps.at("ar.d.b").value(0, 0);
    Eigen::VectorXd gv = Hg * ps.at("ar.od.w").value.row(0).transpose();
    gv.array() += ps.at("ar.od.b").value(0, 0);
    ref.G = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                gv.data(), n, n);
    return ref;
}

std::pair<ad::Var, ad::Var> ar_forward(ad::Tape& tape, const std::vector<ODGraph>& graphs,
                                       int T, int l, int P, ad::ParamStore& ps) {
    std::vector<int> slots = plus_slots(slice_indices(T, l, P));
    int n = graphs.at(0).n();
    ad::Var Hd = tape.input(demand_history(graphs, slots));
    ad::Var Hg = tape.input(od_history(graphs, slots));
    ad::Var d_hat = ad::add_rowvec(ad::matmul_nt(Hd, tape.param(ps.at("ar.d.w"))),
                                   tape.param(ps.at("ar.d.b")));
    ad::Var g_vec = ad::add_rowvec(ad::matmul_nt(Hg, tape.param(ps.at("ar.od.w"))),
                                   tape.param(ps.at("ar.od.b")));
    return {d_hat, ad::to_square(g_vec, n)};
}

Eigen::MatrixXd aggr_value(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref,
                           TuneScheme scheme, double w) {
    switch (scheme) {
        case TuneScheme::none: return a;
        case TuneScheme::sum: return a + ref;
        case TuneScheme::wsum: return w * a + (1.0 - w) * ref;
        case TuneScheme::mult: return a.cwiseProduct(ref);
    }
    return a;
}

ad::Var aggr(ad::Var a, const Eigen::MatrixXd& ref, TuneScheme scheme, double w) {
    switch (scheme) {
        case TuneScheme::none: return a;
        case TuneScheme::sum: return ad::add(a, a.tape->input(ref));
        case TuneScheme::wsum: return ad::add_scaled(a, a.tape->input(ref), w, 1.0 - w);
        case TuneScheme::mult: return ad::mul(a, a.tape->input(ref));
    }
    return a;
}

void register_transfer(ad::ParamStore& ps, int D, int d_e, Rng& rng) {
    auto small = [&](ad::Tensor& t) {
        for (int i = 0; i < t.value.rows(); ++i)
            for (int j = 0; j < t.value.cols(); ++j) t.value(i, j) = rng.uniform(-0.01, 0.01);
    };
    small(ps.add("tr.d.fcw", 1, D));
    ps.add("tr.d.fcb", 1, 1).value(0, 0) = 1.0;
    ad::init_uniform(ps.add("tr.od.wa", d_e, D), rng, D);
    small(ps.add("tr.od.fcw", 1, 2 * d_e));
    ps.add("tr.od.fcb", 1, 1).value(0, 0) = 1.0;
}

ad::Var demand_head(ad::Tape& tape, ad::Var fused, ad::ParamStore& ps,
                    const Eigen::VectorXd& ref, TuneScheme scheme, double w) {
    ad::Var out = ad::add_rowvec(ad::matmul_nt(fused, tape.param(ps.at("tr.d.fcw"))),
                                 tape.param(ps.at("tr.d.fcb")));
    return aggr(out, ref, scheme, w);
}

ad::Var od_head(ad::Tape& tape, ad::Var fused, ad::ParamStore& ps,
                const Eigen::MatrixXd& ref, TuneScheme scheme, double w, double leaky_slope) {
    int n = fused.rows();
    std::vector<int> src(n * n), dst(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            src[i * n + j] = i;
            dst[i * n + j] = j;
        }
    ad::Var proj = ad::matmul_nt(fused, tape.param(ps.at("tr.od.wa")));
    ad::Var pairs = ad::concat_cols({ad::gather_rows(proj, src), ad::gather_rows(proj, dst)});
    ad::Var scores = ad::leaky_relu(
        ad::add_rowvec(ad::matmul_nt(pairs, tape.param(ps.at("tr.od.fcw"))),
                       tape.param(ps.at("tr.od.fcb"))),
        leaky_slope);
    return aggr(ad::to_square(scores, n), ref, scheme, w);
}

}  // namespace odp

#pragma once

// Reference implementations used as test oracles. Everything here is coded
// independently of the library, from first principles (scalar loops, direct
// formula transcription), so that agreement with the library is meaningful.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "odp/autodiff.hpp"
#include "odp/common.hpp"
#include "odp/neighborhoods.hpp"
#include "odp/preprocess.hpp"
#include "odp/spatial_attention.hpp"
#include "odp/workspace.hpp"

namespace oracle {

/// Spherical law of cosines: a second great-circle formula, agreeing with the
/// haversine form to well under a metre at city scales.
inline double slc_km(double lat1, double lng1, double lat2, double lng2) {
    const double rad = M_PI / 180.0, R = 6371.0;
    double c = std::sin(lat1 * rad) * std::sin(lat2 * rad) +
               std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::cos((lng2 - lng1) * rad);
    return R * std::acos(std::clamp(c, -1.0, 1.0));
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& s) {
    Eigen::VectorXd e = (s.array() - s.maxCoeff()).exp();
    return e / e.sum();
}

inline double smooth_l1(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double beta) {
    double total = 0.0;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) {
            double e = std::abs(a(i, j) - b(i, j));
            total += e < beta ? 0.5 * e * e / beta : e - 0.5 * beta;
        }
    return total / (static_cast<double>(a.rows()) * a.cols());
}

struct Metrics3 {
    double rmse = 0, mape = 0, mae = 0;
    long long count = 0;
    bool defined = false;
};

inline Metrics3 metrics(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y, double tau) {
    Metrics3 m;
    double se = 0, ape = 0, ae = 0;
    for (int i = 0; i < y.rows(); ++i)
        for (int j = 0; j < y.cols(); ++j) {
            if (y(i, j) < tau) continue;
            double e = y_hat(i, j) - y(i, j);
            se += e * e;
            ape += std::abs(e / (y(i, j) + 1.0));
            ae += std::abs(e);
            ++m.count;
        }
    if (m.count == 0) return m;
    m.defined = true;
    m.rmse = std::sqrt(se / m.count);
    m.mape = ape / m.count;
    m.mae = ae / m.count;
    return m;
}

// ---- recurrent cells, one row at a time -------------------------------------

inline double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// One LSTM step for a single row; gate order i, f, g, o.
inline void lstm_step(const Eigen::VectorXd& x, Eigen::VectorXd& h, Eigen::VectorXd& c,
                      const Eigen::MatrixXd& wih, const Eigen::MatrixXd& whh,
                      const Eigen::RowVectorXd& bih, const Eigen::RowVectorXd& bhh) {
    int D = static_cast<int>(h.size());
    Eigen::VectorXd z = wih * x + whh * h + bih.transpose() + bhh.transpose();
    Eigen::VectorXd c_new(D), h_new(D);
    for (int k = 0; k < D; ++k) {
        double i_g = sig(z(k));
        double f_g = sig(z(D + k));
        double g_g = std::tanh(z(2 * D + k));
        double o_g = sig(z(3 * D + k));
        c_new(k) = f_g * c(k) + i_g * g_g;
        h_new(k) = o_g * std::tanh(c_new(k));
    }
    c = c_new;
    h = h_new;
}

/// One GRU step for a single row; gate order r, z, n.
inline void gru_step(const Eigen::VectorXd& x, Eigen::VectorXd& h, const Eigen::MatrixXd& wih,
                     const Eigen::MatrixXd& whh, const Eigen::RowVectorXd& bih,
                     const Eigen::RowVectorXd& bhh) {
    int D = static_cast<int>(h.size());
    Eigen::VectorXd gi = wih * x + bih.transpose();
    Eigen::VectorXd gh = whh * h + bhh.transpose();
    Eigen::VectorXd h_new(D);
    for (int k = 0; k < D; ++k) {
        double r = sig(gi(k) + gh(k));
        double z = sig(gi(D + k) + gh(D + k));
        double cand = std::tanh(gi(2 * D + k) + r * gh(2 * D + k));
        h_new(k) = (1.0 - z) * cand + z * h(k);
    }
    h = h_new;
}

// ---- gated spatial embedding -------------------------------------------------

/// Full spatial layer mirrored with dense per-cell loops: shared projection,
/// per-head pre-weighted attention, gate FC over pooled neighbors, residual
/// and head aggregation. Reads the same named parameters the library
/// registers.
inline Eigen::MatrixXd gated_embed(const Eigen::MatrixXd& V, const odp::NeighborhoodSet& nbh,
                                   odp::ad::ParamStore& ps, const odp::SpatialConfig& cfg) {
    const char* names[3] = {"fwd", "bwd", "geo"};
    const odp::NeighborhoodView* views[3] = {&nbh.fwd, &nbh.bwd, &nbh.geo};
    int n = static_cast<int>(V.rows());
    const Eigen::MatrixXd& Ws = ps.at("spa.ws").value;

    auto lrelu = [&](double z) { return z > 0 ? z : cfg.leaky_slope * z; };

    Eigen::MatrixXd out(n, cfg.embed_dim());
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd own = Ws * V.row(i).transpose();
        std::vector<double> row(own.data(), own.data() + own.size());

        for (int nu = 0; nu < 3; ++nu) {
            const odp::NeighborhoodView& view = *views[nu];
            std::string base = std::string("spa.") + names[nu] + ".";
            int b = view.offsets[i], e = view.offsets[i + 1];

            // Gate over [v_i | max_j Wg(psi v_j) | mean_j(psi v_j)].
            const Eigen::MatrixXd& Wg = ps.at(base + "gate.wg").value;
            const Eigen::MatrixXd& gw = ps.at(base + "gate.fcw").value;
            const Eigen::MatrixXd& gb = ps.at(base + "gate.fcb").value;
            Eigen::VectorXd maxpool = Eigen::VectorXd::Zero(Wg.rows());
            Eigen::VectorXd meanpool = Eigen::VectorXd::Zero(V.cols());
            if (b != e) {
                maxpool.setConstant(-std::numeric_limits<double>::infinity());
                for (int s = b; s < e; ++s) {
                    Eigen::VectorXd vj = view.w[s] * V.row(view.dst[s]).transpose();
                    maxpool = maxpool.cwiseMax(Wg * vj);
                    meanpool += vj;
                }
                meanpool /= (e - b);
            }
            Eigen::VectorXd cat(V.cols() + Wg.rows() + V.cols());
            cat << V.row(i).transpose(), maxpool, meanpool;
            Eigen::VectorXd gates = (gw * cat + gb.transpose()).unaryExpr([](double z) {
                return 1.0 / (1.0 + std::exp(-z));
            });

            std::vector<Eigen::VectorXd> heads;
            for (int k = 0; k < cfg.K; ++k) {
                std::string h = base + "h" + std::to_string(k) + ".";
                const Eigen::MatrixXd& Wa = ps.at(h + "wa").value;
                const Eigen::MatrixXd& fw = ps.at(h + "fcw").value;
                double fb = ps.at(h + "fcb").value(0, 0);

                Eigen::VectorXd attn = Eigen::VectorXd::Zero(cfg.d_e);
                if (b != e) {
                    Eigen::VectorXd scores(e - b);
                    for (int s = b; s < e; ++s) {
                        Eigen::VectorXd vj = view.w[s] * V.row(view.dst[s]).transpose();
                        Eigen::VectorXd pair(2 * cfg.d_e);
                        pair << Wa * V.row(i).transpose(), Wa * vj;
                        scores(s - b) = lrelu(fw.row(0).dot(pair) + fb);
                    }
                    Eigen::VectorXd alpha = softmax(scores);
                    for (int s = b; s < e; ++s)
                        attn += alpha(s - b) * (Ws * V.row(view.dst[s]).transpose());
                }
                Eigen::VectorXd head = gates(k) * attn;
                if (cfg.residual) head += own;
                heads.push_back(head);
            }

            if (cfg.agg == odp::HeadAgg::average) {
                Eigen::VectorXd avg = Eigen::VectorXd::Zero(cfg.d_e);
                for (const auto& h : heads) avg += h;
                avg /= static_cast<double>(heads.size());
                row.insert(row.end(), avg.data(), avg.data() + avg.size());
            } else {
                for (const auto& h : heads) row.insert(row.end(), h.data(), h.data() + h.size());
            }
        }
        for (int c = 0; c < cfg.embed_dim(); ++c) out(i, c) = row[static_cast<std::size_t>(c)];
    }
    return out;
}

// ---- gradient checking -------------------------------------------------------

/// Worst relative error between analytic gradients and central finite
/// differences, sampling up to `per_tensor` entries of each parameter.
/// `build` must rebuild the same scalar loss on a fresh tape each call.
inline double max_grad_rel_err(odp::ad::ParamStore& ps,
                               const std::function<odp::ad::Var(odp::ad::Tape&)>& build,
                               double h, int per_tensor, odp::Rng& rng) {
    std::vector<Eigen::MatrixXd> analytic;
    {
        odp::ad::Tape tape;
        tape.backward(build(tape));
        for (std::size_t t = 0; t < ps.size(); ++t) analytic.push_back(ps[t].grad);
    }
    auto value = [&]() {
        odp::ad::Tape tape;
        return build(tape).value()(0, 0);
    };
    double worst = 0.0;
    for (std::size_t t = 0; t < ps.size(); ++t) {
        Eigen::MatrixXd& val = ps[t].value;
        long total = val.size();
        for (int pick = 0; pick < std::min<long>(per_tensor, total); ++pick) {
            long flat = total <= per_tensor ? pick
                                            : static_cast<long>(rng.uniform_int(
                                                  static_cast<std::uint64_t>(total)));
            long r = flat % val.rows(), c = flat / val.rows();
            double keep = val(r, c);
            val(r, c) = keep + h;
            double lp = value();
            val(r, c) = keep - h;
            double lm = value();
            val(r, c) = keep;
            double num = (lp - lm) / (2.0 * h);
            double ana = analytic[t](r, c);
            double rel = std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// ---- random test data ----------------------------------------------------------

inline Eigen::MatrixXd randm(odp::Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
    return m;
}

inline odp::ODGraph random_graph(odp::Rng& rng, int n, double density, int max_count) {
    odp::ODGraph g(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (rng.uniform01() < density)
                g.add(i, j, 1 + static_cast<int>(rng.uniform_int(max_count)));
    return g;
}

/// In-memory dataset over a small grid; `count(t, i, j)` gives the request
/// count of each OD pair per slot (zero or negative entries are omitted).
inline odp::Dataset make_dataset(int rows, int cols, double slot_hours, int T,
                                 const std::function<int(int, int, int)>& count,
                                 double geo_radius_km = 15.0) {
    odp::GridSpec spec = odp::make_grid_spec(40.0, 40.0 + 0.05 * rows, -74.0, -74.0 + 0.05 * cols,
                                             rows, cols, slot_hours);
    int n = spec.n();
    std::vector<odp::ODGraph> graphs;
    graphs.reserve(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) {
        odp::ODGraph g(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                int c = count(t, i, j);
                if (c > 0) g.add(i, j, c);
            }
        graphs.push_back(std::move(g));
    }
    std::int64_t start = odp::parse_timestamp("2016-01-04 00:00:00").value();
    return odp::Dataset(spec, start, std::move(graphs), geo_radius_km, 1e-8);
}

}  // namespace oracle

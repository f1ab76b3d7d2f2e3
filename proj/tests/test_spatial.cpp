#include "doctest.h"
#include "helpers.hpp"
#include "odp/spatial_attention.hpp"

#include <stdexcept>

using namespace odp;

namespace {

NeighborhoodSet random_neighborhoods(Rng& rng, int n, double density, double radius_km) {
    ODGraph g = oracle::random_graph(rng, n, density, 8);
    Eigen::MatrixXd r = oracle::randm(rng, n, n, 0.5, 5.0);
    r = ((r + r.transpose()) / 2).eval();
    r.diagonal().setZero();
    return build_neighborhoods(g, r, radius_km, 1e-8);
}

}  // namespace

TEST_SUITE("spatial_attention") {

TEST_CASE("attention_net evaluates the leaky fc over paired projections") {
    Eigen::MatrixXd wa(1, 1);
    wa << 0.5;
    Eigen::RowVectorXd fcw(2);
    fcw << 1.0, 2.0;
    Eigen::VectorXd vi(1), vj(1);
    vi << 2.0;
    vj << 3.0;
    // cat = [0.5*2, 0.5*3]; z = 1*1 + 2*1.5 + 0.25
    CHECK(attention_net(vi, vj, wa, fcw, 0.25) == doctest::Approx(4.25).epsilon(1e-15));
    // Negative pre-activation passes through the leaky slope.
    CHECK(attention_net(vi, vj, wa, fcw, -10.0, 0.01) ==
          doctest::Approx(0.01 * -6.0).epsilon(1e-12));
    CHECK(attention_net(vi, vj, wa, fcw, -10.0, 0.2) ==
          doctest::Approx(0.2 * -6.0).epsilon(1e-12));

    Eigen::RowVectorXd zw = Eigen::RowVectorXd::Zero(2);
    CHECK(attention_net(vi, vj, Eigen::MatrixXd::Zero(1, 1), zw, 0.0) == 0.0);
}

TEST_CASE("attention_net is asymmetric in its arguments") {
    Rng rng(41);
    Eigen::MatrixXd wa = oracle::randm(rng, 3, 4);
    Eigen::RowVectorXd fcw = oracle::randm(rng, 1, 6).row(0);
    Eigen::VectorXd vi = oracle::randm(rng, 4, 1).col(0);
    Eigen::VectorXd vj = oracle::randm(rng, 4, 1).col(0);
    CHECK(attention_net(vi, vj, wa, fcw, 0.3) != attention_net(vj, vi, wa, fcw, 0.3));
}

TEST_CASE("attention_net rejects mismatched dimensions") {
    Eigen::MatrixXd wa(2, 3);
    wa.setOnes();
    Eigen::RowVectorXd fcw(4);
    fcw.setOnes();
    Eigen::VectorXd v3 = Eigen::VectorXd::Ones(3), v2 = Eigen::VectorXd::Ones(2);
    CHECK_THROWS_AS(attention_net(v2, v3, wa, fcw, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(attention_net(v3, v2, wa, fcw, 0.0), std::invalid_argument);
    Eigen::RowVectorXd bad(3);
    bad.setOnes();
    CHECK_THROWS_AS(attention_net(v3, v3, wa, bad, 0.0), std::invalid_argument);
}

TEST_CASE("attention weights are a per-source softmax over pre-weighted scores") {
    Rng rng(42);
    int n = 6, d_f = 5, d_e = 3;
    Eigen::MatrixXd V = oracle::randm(rng, n, d_f);
    NeighborhoodSet nbh = random_neighborhoods(rng, n, 0.5, 3.0);
    Eigen::MatrixXd wa = oracle::randm(rng, d_e, d_f);
    Eigen::RowVectorXd fcw = oracle::randm(rng, 1, 2 * d_e).row(0);
    double fcb = 0.17;

    const NeighborhoodView& view = nbh.fwd;
    std::vector<double> alpha = attention_weights(V, view, wa, fcw, fcb);
    REQUIRE(alpha.size() == view.dst.size());

    for (int i = 0; i < n; ++i) {
        int b = view.offsets[i], e = view.offsets[i + 1];
        if (b == e) continue;
        double sum = 0;
        for (int s = b; s < e; ++s) sum += alpha[s];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        if (e - b == 1) CHECK(alpha[b] == 1.0);

        // Scalar oracle: score each neighbor with the pre-weight applied to
        // the neighbor's features only, then softmax.
        Eigen::VectorXd scores(e - b);
        for (int s = b; s < e; ++s) {
            Eigen::VectorXd vj = view.w[s] * V.row(view.dst[s]).transpose();
            Eigen::VectorXd cat(2 * d_e);
            cat << wa * V.row(i).transpose(), wa * vj;
            double z = fcw.dot(cat) + fcb;
            scores(s - b) = z > 0 ? z : 0.01 * z;
        }
        Eigen::VectorXd expect = oracle::softmax(scores);
        for (int s = b; s < e; ++s)
            CHECK(alpha[s] == doctest::Approx(expect(s - b)).epsilon(1e-12));
    }

    // All-zero parameters give uniform weights.
    std::vector<double> uni = attention_weights(V, view, Eigen::MatrixXd::Zero(d_e, d_f),
                                                Eigen::RowVectorXd::Zero(2 * d_e), 0.0);
    for (int i = 0; i < n; ++i) {
        int b = view.offsets[i], e = view.offsets[i + 1];
        for (int s = b; s < e; ++s)
            CHECK(uni[s] == doctest::Approx(1.0 / (e - b)).epsilon(1e-15));
    }
}

TEST_CASE("gates are sigmoids over pooled pre-weighted neighborhoods") {
    Rng rng(43);
    int n = 5, d_f = 4, d_e = 3, K = 2;
    Eigen::MatrixXd V = oracle::randm(rng, n, d_f);
    NeighborhoodSet nbh = random_neighborhoods(rng, n, 0.4, 3.0);
    Eigen::MatrixXd wg = oracle::randm(rng, d_e, d_f);
    Eigen::MatrixXd gfw = oracle::randm(rng, K, 2 * d_f + d_e);
    Eigen::RowVectorXd gfb = oracle::randm(rng, 1, K).row(0);

    const NeighborhoodView& view = nbh.bwd;
    Eigen::MatrixXd gates = compute_gates(V, view, wg, gfw, gfb);
    REQUIRE(gates.rows() == n);
    REQUIRE(gates.cols() == K);
    CHECK((gates.array() > 0.0).all());
    CHECK((gates.array() < 1.0).all());

    for (int i = 0; i < n; ++i) {
        int b = view.offsets[i], e = view.offsets[i + 1];
        Eigen::VectorXd maxpool = Eigen::VectorXd::Zero(d_e);
        Eigen::VectorXd meanpool = Eigen::VectorXd::Zero(d_f);
        if (b != e) {
            maxpool.setConstant(-1e300);
            for (int s = b; s < e; ++s) {
                Eigen::VectorXd vj = view.w[s] * V.row(view.dst[s]).transpose();
                maxpool = maxpool.cwiseMax(wg * vj);
                meanpool += vj;
            }
            meanpool /= (e - b);
        }
        Eigen::VectorXd cat(d_f + d_e + d_f);
        cat << V.row(i).transpose(), maxpool, meanpool;
        for (int k = 0; k < K; ++k) {
            double z = gfw.row(k).dot(cat) + gfb(k);
            CHECK(gates(i, k) == doctest::Approx(oracle::sig(z)).epsilon(1e-12));
        }
        // With one neighbor, max pooling over projections collapses to the
        // projection of the lone pre-weighted neighbor.
        if (e - b == 1) {
            Eigen::VectorXd vj = view.w[b] * V.row(view.dst[b]).transpose();
            CHECK(maxpool.isApprox(wg * vj, 1e-12));
            CHECK(meanpool.isApprox(vj, 1e-12));
        }
    }

    // Zero parameters make every gate exactly one half.
    Eigen::MatrixXd half = compute_gates(V, view, Eigen::MatrixXd::Zero(d_e, d_f),
                                         Eigen::MatrixXd::Zero(K, 2 * d_f + d_e),
                                         Eigen::RowVectorXd::Zero(K));
    CHECK((half.array() == 0.5).all());
}

TEST_CASE("registration covers one shared projection plus per-neighborhood stacks") {
    SpatialConfig cfg;
    cfg.d_f = 7;
    cfg.d_e = 4;
    cfg.K = 3;
    Rng rng(44);
    ad::ParamStore ps;
    register_spatial(ps, cfg, rng);
    CHECK(ps.size() == 1 + 3 * (3 * cfg.K + 3));

    CHECK(ps[0].name == "spa.ws");
    CHECK(ps.at("spa.ws").value.rows() == 4);
    CHECK(ps.at("spa.ws").value.cols() == 7);
    for (const char* nu : {"fwd", "bwd", "geo"}) {
        std::string base = std::string("spa.") + nu + ".";
        for (int k = 0; k < cfg.K; ++k) {
            std::string h = base + "h" + std::to_string(k) + ".";
            CHECK(ps.at(h + "wa").value.rows() == 4);
            CHECK(ps.at(h + "wa").value.cols() == 7);
            CHECK(ps.at(h + "fcw").value.rows() == 1);
            CHECK(ps.at(h + "fcw").value.cols() == 8);
            CHECK(ps.at(h + "fcb").value.size() == 1);
        }
        CHECK(ps.at(base + "gate.wg").value.rows() == 4);
        CHECK(ps.at(base + "gate.wg").value.cols() == 7);
        CHECK(ps.at(base + "gate.fcw").value.rows() == 3);
        CHECK(ps.at(base + "gate.fcw").value.cols() == 2 * 7 + 4);
        CHECK(ps.at(base + "gate.fcb").value.rows() == 1);
        CHECK(ps.at(base + "gate.fcb").value.cols() == 3);
    }
    // Head order inside each neighborhood: wa, fcw, fcb per head, then gate.
    CHECK(ps[1].name == "spa.fwd.h0.wa");
    CHECK(ps[2].name == "spa.fwd.h0.fcw");
    CHECK(ps[3].name == "spa.fwd.h0.fcb");
    CHECK(ps[3 * cfg.K + 1].name == "spa.fwd.gate.wg");
}

TEST_CASE("embedding width follows the head aggregation mode") {
    Rng rng(45);
    int n = 4;
    SpatialConfig cfg;
    cfg.d_f = 6;
    cfg.d_e = 3;
    cfg.K = 2;
    Eigen::MatrixXd V = oracle::randm(rng, n, cfg.d_f);
    NeighborhoodSet nbh = random_neighborhoods(rng, n, 0.5, 3.0);

    cfg.agg = HeadAgg::average;
    CHECK(cfg.embed_dim() == 4 * cfg.d_e);
    {
        ad::ParamStore ps;
        register_spatial(ps, cfg, rng);
        Eigen::MatrixXd m = spatial_embed_value(V, nbh, ps, cfg);
        CHECK(m.rows() == n);
        CHECK(m.cols() == 4 * cfg.d_e);
    }

    cfg.agg = HeadAgg::concat;
    CHECK(cfg.embed_dim() == (3 * cfg.K + 1) * cfg.d_e);
    {
        ad::ParamStore ps;
        register_spatial(ps, cfg, rng);
        Eigen::MatrixXd m = spatial_embed_value(V, nbh, ps, cfg);
        CHECK(m.cols() == (3 * cfg.K + 1) * cfg.d_e);
    }
}

TEST_CASE("empty neighborhoods leave only the projected own features") {
    Rng rng(46);
    int n = 3;
    SpatialConfig cfg;
    cfg.d_f = 5;
    cfg.d_e = 2;
    cfg.K = 2;
    cfg.residual = true;
    cfg.agg = HeadAgg::average;
    ad::ParamStore ps;
    register_spatial(ps, cfg, rng);
    Eigen::MatrixXd V = oracle::randm(rng, n, cfg.d_f);

    Eigen::MatrixXd far = Eigen::MatrixXd::Constant(n, n, 100.0);
    far.diagonal().setZero();
    NeighborhoodSet empty = build_neighborhoods(ODGraph(n), far, 3.6, 1e-8);
    CHECK(empty.fwd.edge_count() == 0);
    CHECK(empty.geo.edge_count() == 0);

    Eigen::MatrixXd m = spatial_embed_value(V, empty, ps, cfg);
    Eigen::MatrixXd own = V * ps.at("spa.ws").value.transpose();
    for (int blk = 0; blk < 4; ++blk)
        CHECK(m.middleCols(blk * cfg.d_e, cfg.d_e).isApprox(own, 1e-12));

    // Without the residual connection the attention blocks collapse to zero.
    cfg.residual = false;
    Eigen::MatrixXd m0 = spatial_embed_value(V, empty, ps, cfg);
    CHECK(m0.leftCols(cfg.d_e).isApprox(own, 1e-12));
    CHECK(m0.rightCols(3 * cfg.d_e).norm() == 0.0);
}

TEST_CASE("residual toggling shifts every head block by the projected features") {
    Rng rng(47);
    int n = 5;
    SpatialConfig cfg;
    cfg.d_f = 6;
    cfg.d_e = 3;
    cfg.K = 2;
    cfg.agg = HeadAgg::concat;
    ad::ParamStore ps;
    register_spatial(ps, cfg, rng);
    Eigen::MatrixXd V = oracle::randm(rng, n, cfg.d_f);
    NeighborhoodSet nbh = random_neighborhoods(rng, n, 0.6, 3.5);

    cfg.residual = true;
    Eigen::MatrixXd with = spatial_embed_value(V, nbh, ps, cfg);
    cfg.residual = false;
    Eigen::MatrixXd without = spatial_embed_value(V, nbh, ps, cfg);

    Eigen::MatrixXd own = V * ps.at("spa.ws").value.transpose();
    CHECK(with.leftCols(cfg.d_e) == without.leftCols(cfg.d_e));
    for (int blk = 1; blk < 3 * cfg.K + 1; ++blk) {
        Eigen::MatrixXd diff = with.middleCols(blk * cfg.d_e, cfg.d_e) -
                               without.middleCols(blk * cfg.d_e, cfg.d_e);
        CHECK(diff.isApprox(own, 1e-12));
    }
}

TEST_CASE("tape embedding agrees with the dense per-cell oracle") {
    Rng rng(48);
    struct Case {
        int n, d_f, d_e, K;
        HeadAgg agg;
        bool residual;
    };
    for (const Case& c : {Case{3, 4, 2, 2, HeadAgg::average, true},
                          Case{5, 6, 3, 1, HeadAgg::average, false},
                          Case{4, 5, 2, 3, HeadAgg::concat, true},
                          Case{6, 4, 3, 2, HeadAgg::concat, false}}) {
        SpatialConfig cfg;
        cfg.d_f = c.d_f;
        cfg.d_e = c.d_e;
        cfg.K = c.K;
        cfg.agg = c.agg;
        cfg.residual = c.residual;
        ad::ParamStore ps;
        register_spatial(ps, cfg, rng);
        Eigen::MatrixXd V = oracle::randm(rng, c.n, c.d_f);
        NeighborhoodSet nbh = random_neighborhoods(rng, c.n, 0.5, 3.0);

        Eigen::MatrixXd lib = spatial_embed_value(V, nbh, ps, cfg);
        Eigen::MatrixXd ref = oracle::gated_embed(V, nbh, ps, cfg);
        REQUIRE(lib.rows() == ref.rows());
        REQUIRE(lib.cols() == ref.cols());
        CHECK((lib - ref).cwiseAbs().maxCoeff() <= 1e-9);

        ad::Tape tape;
        Eigen::MatrixXd on_tape = spatial_embed(tape, tape.input(V), nbh, ps, cfg).value();
        CHECK(on_tape == lib);
    }
}

TEST_CASE("spatial embedding gradients match finite differences") {
    Rng rng(49);
    SpatialConfig cfg;
    cfg.d_f = 4;
    cfg.d_e = 2;
    cfg.K = 2;
    ad::ParamStore ps;
    register_spatial(ps, cfg, rng);
    Eigen::MatrixXd V = oracle::randm(rng, 4, cfg.d_f);
    NeighborhoodSet nbh = random_neighborhoods(rng, 4, 0.5, 3.0);
    Eigen::MatrixXd target = oracle::randm(rng, 4, cfg.embed_dim(), -0.2, 0.2);
    auto build = [&](ad::Tape& tape) {
        ad::Var m = spatial_embed(tape, tape.input(V), nbh, ps, cfg);
        return ad::smooth_l1_loss(m, target, 1.0);
    };
    CHECK(oracle::max_grad_rel_err(ps, build, 1e-5, 4, rng) <= 1e-5);
}

}  // TEST_SUITE

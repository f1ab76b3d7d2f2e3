#include "odp/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace odp::ad {

Tensor& ParamStore::add(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter: " + name);
    index_[name] = params_.size();
    params_.push_back(std::make_unique<Tensor>(name, rows, cols));
    return *params_.back();
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown parameter: " + name);
    return *params_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown parameter: " + name);
    return *params_[it->second];
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

void ParamStore::zero_grads() {
    for (auto& p : params_) p->grad.setZero();
}

double ParamStore::grad_norm() const {
    double sq = 0.0;
    for (const auto& p : params_) sq += p->grad.squaredNorm();
    return std::sqrt(sq);
}

void ParamStore::clip_grads(double max_norm) {
    double norm = grad_norm();
    if (norm > max_norm && norm > 0.0) {
        double s = max_norm / norm;
        for (auto& p : params_) p->grad *= s;
    }
}

const Eigen::MatrixXd& Var::value() const { return tape->node(idx).value; }

int Tape::add_node(Eigen::MatrixXd value, std::function<void(Tape&, int)> back) {
    nodes_.push_back({std::move(value), {}, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::input(Eigen::MatrixXd v) { return {this, add_node(std::move(v))}; }

Var Tape::param(Tensor& t) {
    int idx = add_node(t.value);
    param_nodes_.push_back({idx, &t});
    return {this, idx};
}

void Tape::backward(Var loss) {
    assert(loss.tape == this);
    assert(nodes_[loss.idx].value.size() == 1);
    for (auto& n : nodes_) n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    nodes_[loss.idx].grad(0, 0) = 1.0;
    for (int i = loss.idx; i >= 0; --i) {
        if (nodes_[i].back) nodes_[i].back(*this, i);
    }
    for (auto& [idx, tensor] : param_nodes_) tensor->grad += nodes_[idx].grad;
}

namespace {

Var make(Tape* t, Eigen::MatrixXd v, std::function<void(Tape&, int)> back) {
    return {t, t->add_node(std::move(v), std::move(back))};
}

}  // namespace

Var matmul(Var a, Var b) {
    assert(a.tape == b.tape && a.cols() == b.rows());
    Tape* t = a.tape;
    int ia = a.idx, ib = b.idx;
    return make(t, a.value() * b.value(), [ia, ib](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        tp.node(ia).grad += g * tp.node(ib).value.transpose();
        tp.node(ib).grad += tp.node(ia).value.transpose() * g;
    });
}

Var matmul_nt(Var a, Var b) {
    assert(a.tape == b.tape && a.cols() == b.cols());
    Tape* t = a.tape;
    int ia = a.idx, ib = b.idx;
    return make(t, a.value() * b.value().transpose(), [ia, ib](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        tp.node(ia).grad += g * tp.node(ib).value;
        tp.node(ib).grad += g.transpose() * tp.node(ia).value;
    });
}

Var add(Var a, Var b) {
    assert(a.tape == b.tape && a.rows() == b.rows() && a.cols() == b.cols());
    Tape* t = a.tape;
    int ia = a.idx, ib = b.idx;
    return make(t, a.value() + b.value(), [ia, ib](Tape& tp, int self) {
        tp.node(ia).grad += tp.node(self).grad;
        tp.node(ib).grad += tp.node(self).grad;
    });
}

Var sub(Var a, Var b) {
    assert(a.tape == b.tape && a.rows() == b.rows() && a.cols() == b.cols());
    Tape* t = a.tape;
    int ia = a.idx, ib = b.idx;
    return make(t, a.value() - b.value(), [ia, ib](Tape& tp, int self) {
        tp.node(ia).grad += tp.node(self).grad;
        tp.node(ib).grad -= tp.node(self).grad;
    });
}

Var mul(Var a, Var b) {
    assert(a.tape == b.tape && a.rows() == b.rows() && a.cols() == b.cols());
    Tape* t = a.tape;
    int ia = a.idx, ib = b.idx;
    return make(t, a.value().cwiseProduct(b.value()), [ia, ib](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        tp.node(ia).grad += g.cwiseProduct(tp.node(ib).value);
        tp.node(ib).grad += g.cwiseProduct(tp.node(ia).value);
    });
}

Var scale(Var a, double s) {
    Tape* t = a.tape;
    int ia = a.idx;
    return make(t, a.value() * s, [ia, s](Tape& tp, int self) {
        tp.node(ia).grad += tp.node(self).grad * s;
    });
}

Var add_scaled(Var a, Var b, double wa, double wb) {
    assert(a.tape == b.tape && a.rows() == b.rows() && a.cols() == b.cols());
    Tape* t = a.tape;
    int ia = a.idx, ib = b.idx;
    return make(t, wa * a.value() + wb * b.value(), [ia, ib, wa, wb](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        tp.node(ia).grad += g * wa;
        tp.node(ib).grad += g * wb;
    });
}

Var one_minus(Var x) {
    Tape* t = x.tape;
    int ix = x.idx;
    Eigen::MatrixXd v = Eigen::MatrixXd::Ones(x.rows(), x.cols()) - x.value();
    return make(t, std::move(v), [ix](Tape& tp, int self) {
        tp.node(ix).grad -= tp.node(self).grad;
    });
}

Var add_rowvec(Var m, Var r) {
    assert(m.tape == r.tape && r.rows() == 1 && r.cols() == m.cols());
    Tape* t = m.tape;
    int im = m.idx, ir = r.idx;
    Eigen::MatrixXd v = m.value();
    v.rowwise() += Eigen::RowVectorXd(r.value().row(0));
    return make(t, std::move(v), [im, ir](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        tp.node(im).grad += g;
        tp.node(ir).grad += g.colwise().sum();
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    assert(!parts.empty());
    Tape* t = parts[0].tape;
    int rows = parts[0].rows();
    int total = 0;
    std::vector<int> idxs, widths;
    for (const auto& p : parts) {
        assert(p.tape == t && p.rows() == rows);
        idxs.push_back(p.idx);
        widths.push_back(p.cols());
        total += p.cols();
    }
    Eigen::MatrixXd v(rows, total);
    int off = 0;
    for (const auto& p : parts) {
        v.middleCols(off, p.cols()) = p.value();
        off += p.cols();
    }
    return make(t, std::move(v), [idxs, widths](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        int off = 0;
        for (std::size_t k = 0; k < idxs.size(); ++k) {
            tp.node(idxs[k]).grad += g.middleCols(off, widths[k]);
            off += widths[k];
        }
    });
}

Var gather_rows(Var m, std::vector<int> idx) {
    Tape* t = m.tape;
    int im = m.idx;
    Eigen::MatrixXd v(static_cast<int>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) v.row(static_cast<int>(k)) = m.value().row(idx[k]);
    return make(t, std::move(v), [im, idx = std::move(idx)](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        auto& gm = tp.node(im).grad;
        for (std::size_t k = 0; k < idx.size(); ++k) gm.row(idx[k]) += g.row(static_cast<int>(k));
    });
}

Var rowscale(Var m, Var s) {
    assert(m.tape == s.tape && s.cols() == 1 && s.rows() == m.rows());
    Tape* t = m.tape;
    int im = m.idx, is = s.idx;
    Eigen::MatrixXd v = s.value().col(0).asDiagonal() * m.value();
    return make(t, std::move(v), [im, is](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        const auto& mv = tp.node(im).value;
        const auto& sv = tp.node(is).value;
        tp.node(im).grad += sv.col(0).asDiagonal() * g;
        tp.node(is).grad.col(0) += g.cwiseProduct(mv).rowwise().sum();
    });
}

Var rowscale_const(Var m, Eigen::VectorXd s) {
    assert(s.rows() == m.rows());
    Tape* t = m.tape;
    int im = m.idx;
    Eigen::MatrixXd v = s.asDiagonal() * m.value();
    return make(t, std::move(v), [im, s = std::move(s)](Tape& tp, int self) {
        tp.node(im).grad += s.asDiagonal() * tp.node(self).grad;
    });
}

Var leaky_relu(Var x, double slope) {
    Tape* t = x.tape;
    int ix = x.idx;
    Eigen::MatrixXd v = x.value().unaryExpr([slope](double e) { return e > 0 ? e : slope * e; });
    return make(t, std::move(v), [ix, slope](Tape& tp, int self) {
        const auto& xv = tp.node(ix).value;
        const auto& g = tp.node(self).grad;
        tp.node(ix).grad.array() +=
            g.array() * xv.unaryExpr([slope](double e) { return e > 0 ? 1.0 : slope; }).array();
    });
}

Var sigmoid(Var x) {
    Tape* t = x.tape;
    int ix = x.idx;
    Eigen::MatrixXd v = x.value().unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    return make(t, std::move(v), [ix](Tape& tp, int self) {
        const auto& y = tp.node(self).value;
        tp.node(ix).grad.array() +=
            tp.node(self).grad.array() * y.array() * (1.0 - y.array());
    });
}

Var tanh_(Var x) {
    Tape* t = x.tape;
    int ix = x.idx;
    Eigen::MatrixXd v = x.value().array().tanh().matrix();
    return make(t, std::move(v), [ix](Tape& tp, int self) {
        const auto& y = tp.node(self).value;
        tp.node(ix).grad.array() +=
            tp.node(self).grad.array() * (1.0 - y.array().square());
    });
}

Var segment_softmax(Var scores, std::vector<int> offsets) {
    assert(scores.cols() == 1);
    Tape* t = scores.tape;
    int is = scores.idx;
    const auto& x = scores.value();
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(x.rows(), 1);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        int b = offsets[s], e = offsets[s + 1];
        if (b == e) continue;
        double mx = x.block(b, 0, e - b, 1).maxCoeff();
        double sum = 0.0;
        for (int i = b; i < e; ++i) {
            y(i, 0) = std::exp(x(i, 0) - mx);
            sum += y(i, 0);
        }
        for (int i = b; i < e; ++i) y(i, 0) /= sum;
    }
    return make(t, std::move(y), [is, offsets = std::move(offsets)](Tape& tp, int self) {
        const auto& y = tp.node(self).value;
        const auto& g = tp.node(self).grad;
        auto& gx = tp.node(is).grad;
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
            int b = offsets[s], e = offsets[s + 1];
            if (b == e) continue;
            double dot = 0.0;
            for (int i = b; i < e; ++i) dot += y(i, 0) * g(i, 0);
            for (int i = b; i < e; ++i) gx(i, 0) += y(i, 0) * (g(i, 0) - dot);
        }
    });
}

Var segment_sum(Var m, std::vector<int> offsets) {
    Tape* t = m.tape;
    int im = m.idx;
    int S = static_cast<int>(offsets.size()) - 1;
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(S, m.cols());
    for (int s = 0; s < S; ++s)
        for (int i = offsets[s]; i < offsets[s + 1]; ++i) v.row(s) += m.value().row(i);
    return make(t, std::move(v), [im, offsets = std::move(offsets)](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        auto& gm = tp.node(im).grad;
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
            for (int i = offsets[s]; i < offsets[s + 1]; ++i)
                gm.row(i) += g.row(static_cast<int>(s));
    });
}

Var segment_mean(Var m, std::vector<int> offsets) {
    Tape* t = m.tape;
    int im = m.idx;
    int S = static_cast<int>(offsets.size()) - 1;
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(S, m.cols());
    for (int s = 0; s < S; ++s) {
        int cnt = offsets[s + 1] - offsets[s];
        if (cnt == 0) continue;
        for (int i = offsets[s]; i < offsets[s + 1]; ++i) v.row(s) += m.value().row(i);
        v.row(s) /= cnt;
    }
    return make(t, std::move(v), [im, offsets = std::move(offsets)](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        auto& gm = tp.node(im).grad;
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
            int cnt = offsets[s + 1] - offsets[s];
            if (cnt == 0) continue;
            for (int i = offsets[s]; i < offsets[s + 1]; ++i)
                gm.row(i) += g.row(static_cast<int>(s)) / cnt;
        }
    });
}

Var segment_max(Var m, std::vector<int> offsets) {
    Tape* t = m.tape;
    int im = m.idx;
    int S = static_cast<int>(offsets.size()) - 1;
    int d = m.cols();
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(S, d);
    // argmax row per (segment, column); -1 marks empty segments.
    Eigen::MatrixXi arg = Eigen::MatrixXi::Constant(S, d, -1);
    for (int s = 0; s < S; ++s) {
        if (offsets[s] == offsets[s + 1]) continue;
        for (int c = 0; c < d; ++c) {
            int best = offsets[s];
            for (int i = offsets[s] + 1; i < offsets[s + 1]; ++i)
                if (m.value()(i, c) > m.value()(best, c)) best = i;
            v(s, c) = m.value()(best, c);
            arg(s, c) = best;
        }
    }
    return make(t, std::move(v), [im, arg = std::move(arg)](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        auto& gm = tp.node(im).grad;
        for (int s = 0; s < arg.rows(); ++s)
            for (int c = 0; c < arg.cols(); ++c)
                if (arg(s, c) >= 0) gm(arg(s, c), c) += g(s, c);
    });
}

Var mean_of(const std::vector<Var>& xs) {
    assert(!xs.empty());
    Tape* t = xs[0].tape;
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(xs[0].rows(), xs[0].cols());
    std::vector<int> idxs;
    for (const auto& x : xs) {
        assert(x.tape == t && x.rows() == xs[0].rows() && x.cols() == xs[0].cols());
        v += x.value();
        idxs.push_back(x.idx);
    }
    v /= static_cast<double>(xs.size());
    return make(t, std::move(v), [idxs](Tape& tp, int self) {
        Eigen::MatrixXd share = tp.node(self).grad / static_cast<double>(idxs.size());
        for (int i : idxs) tp.node(i).grad += share;
    });
}

Var slice_cols(Var m, int start, int len) {
    assert(start >= 0 && start + len <= m.cols());
    Tape* t = m.tape;
    int im = m.idx;
    return make(t, m.value().middleCols(start, len), [im, start, len](Tape& tp, int self) {
        tp.node(im).grad.middleCols(start, len) += tp.node(self).grad;
    });
}

Var to_square(Var v, int n) {
    assert(v.cols() == 1 && v.rows() == n * n);
    Tape* t = v.tape;
    int iv = v.idx;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = v.value()(i * n + j, 0);
    return make(t, std::move(m), [iv, n](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        auto& gv = tp.node(iv).grad;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) gv(i * n + j, 0) += g(i, j);
    });
}

Var sum_all(Var x) {
    Tape* t = x.tape;
    int ix = x.idx;
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = x.value().sum();
    return make(t, std::move(v), [ix](Tape& tp, int self) {
        tp.node(ix).grad.array() += tp.node(self).grad(0, 0);
    });
}

Var smooth_l1_loss(Var pred, const Eigen::MatrixXd& target, double beta) {
    assert(pred.rows() == target.rows() && pred.cols() == target.cols());
    assert(beta > 0);
    Tape* t = pred.tape;
    int ip = pred.idx;
    Eigen::MatrixXd err = pred.value() - target;
    double total = 0.0;
    for (int i = 0; i < err.rows(); ++i)
        for (int j = 0; j < err.cols(); ++j) {
            double e = std::abs(err(i, j));
            total += e < beta ? 0.5 * e * e / beta : e - 0.5 * beta;
        }
    double n = static_cast<double>(err.size());
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = total / n;
    return make(t, std::move(v), [ip, err = std::move(err), beta, n](Tape& tp, int self) {
        double g = tp.node(self).grad(0, 0) / n;
        auto& gp = tp.node(ip).grad;
        for (int i = 0; i < err.rows(); ++i)
            for (int j = 0; j < err.cols(); ++j) {
                double e = err(i, j);
                gp(i, j) += g * (std::abs(e) < beta ? e / beta : (e > 0 ? 1.0 : -1.0));
            }
    });
}

void init_uniform(Tensor& t, Rng& rng, int fan_in) {
    double bound = std::sqrt(1.0 / std::max(1, fan_in));
    for (int i = 0; i < t.value.rows(); ++i)
        for (int j = 0; j < t.value.cols(); ++j) t.value(i, j) = rng.uniform(-bound, bound);
}

Var batchnorm(Var x, Var gamma, Var beta, BatchNormState& state, bool train,
              bool update_running, double momentum, double eps) {
    assert(x.tape == gamma.tape && x.tape == beta.tape);
    assert(gamma.rows() == 1 && gamma.cols() == x.cols());
    assert(beta.rows() == 1 && beta.cols() == x.cols());
    Tape* t = x.tape;
    int ix = x.idx, ig = gamma.idx, ib = beta.idx;
    const auto& X = x.value();
    int n = static_cast<int>(X.rows());

    Eigen::RowVectorXd mean, var;
    if (train) {
        mean = X.colwise().mean();
        var = (X.rowwise() - mean).array().square().colwise().mean().matrix();
        if (update_running) {
            // Running variance uses the unbiased estimate, normalization the
            // biased one (the convention checkpoint consumers expect).
            Eigen::RowVectorXd var_unbiased =
                n > 1 ? Eigen::RowVectorXd(var * (static_cast<double>(n) / (n - 1))) : var;
            state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mean;
            state.running_var = (1.0 - momentum) * state.running_var + momentum * var_unbiased;
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }

    Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt().matrix();
    Eigen::MatrixXd xhat = (X.rowwise() - mean) * inv_std.asDiagonal();
    Eigen::MatrixXd y = xhat * gamma.value().row(0).asDiagonal();
    y.rowwise() += Eigen::RowVectorXd(beta.value().row(0));

    return make(t, std::move(y),
                [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std),
                 train](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        const auto& gamma_v = tp.node(ig).value;
        tp.node(ib).grad += g.colwise().sum();
        tp.node(ig).grad += g.cwiseProduct(xhat).colwise().sum();
        Eigen::RowVectorXd col_scale =
            (gamma_v.row(0).array() * inv_std.array()).matrix();
        if (train) {
            // Batch statistics depend on x, so the gradient removes the
            // per-column mean components.
            Eigen::RowVectorXd mg = g.colwise().mean();
            Eigen::RowVectorXd mgx = g.cwiseProduct(xhat).colwise().mean();
            Eigen::MatrixXd dx = g;
            dx.rowwise() -= mg;
            dx -= xhat * mgx.asDiagonal();
            tp.node(ix).grad += dx * col_scale.asDiagonal();
        } else {
            tp.node(ix).grad += g * col_scale.asDiagonal();
        }
    });
}

}  // namespace odp::ad

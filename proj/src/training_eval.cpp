#include "odp/training_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

namespace odp {

double smooth_l1(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y, double beta) {
    if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols())
        throw std::invalid_argument("smooth_l1: shape mismatch");
    double total = 0.0;
    for (int i = 0; i < y.rows(); ++i)
        for (int j = 0; j < y.cols(); ++j) {
            double e = std::abs(y_hat(i, j) - y(i, j));
            total += e < beta ? 0.5 * e * e / beta : e - 0.5 * beta;
        }
    return total / static_cast<double>(y.size());
}

double combined_loss(const Eigen::VectorXd& d_hat, const Eigen::VectorXd& d,
                     const Eigen::MatrixXd& g_hat, const Eigen::MatrixXd& g,
                     double eta_d, double eta_o, double beta) {
    return eta_d * smooth_l1(d_hat, d, beta) + eta_o * smooth_l1(g_hat, g, beta);
}

void MetricAccum::add(double y_hat, double y) {
    if (y < threshold_) return;
    double e = y_hat - y;
    se_ += e * e;
    ape_ += std::abs(e / (y + 1.0));
    ae_ += std::abs(e);
    ++z_;
}

void MetricAccum::add_all(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y) {
    for (int i = 0; i < y.rows(); ++i)
        for (int j = 0; j < y.cols(); ++j) add(y_hat(i, j), y(i, j));
}

Metrics MetricAccum::finalize() const {
    Metrics m;
    m.count = z_;
    if (z_ == 0) return m;
    m.defined = true;
    m.rmse = std::sqrt(se_ / z_);
    m.mape = ape_ / z_;
    m.mae = ae_ / z_;
    return m;
}

Metrics compute_metrics(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y, double threshold) {
    MetricAccum acc(threshold);
    acc.add_all(y_hat, y);
    return acc.finalize();
}

std::vector<int> make_samples(int T, int l, int P) {
    std::vector<int> targets;
    for (int tau = l * P + 2; tau <= T + 1; ++tau) {
        try {
            slice_indices(tau - 1, l, P);
        } catch (const InvalidTarget&) {
            continue;
        }
        targets.push_back(tau);
    }
    return targets;
}

Split chronological_split(const std::vector<int>& targets, double train_frac, double val_frac) {
    std::size_t n = targets.size();
    std::size_t n_train = static_cast<std::size_t>(std::floor(train_frac * n));
    std::size_t n_val = static_cast<std::size_t>(std::floor(val_frac * n));
    Split s;
    s.train.assign(targets.begin(), targets.begin() + n_train);
    s.val.assign(targets.begin() + n_train, targets.begin() + n_train + n_val);
    s.test.assign(targets.begin() + n_train + n_val, targets.end());
    return s;
}

Adam::Adam(ad::ParamStore& ps, double lr, double beta1, double beta2, double eps)
    : ps_(&ps), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
        m_.push_back(Eigen::MatrixXd::Zero(ps[i].value.rows(), ps[i].value.cols()));
        v_.push_back(Eigen::MatrixXd::Zero(ps[i].value.rows(), ps[i].value.cols()));
    }
}

void Adam::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < ps_->size(); ++i) {
        ad::Tensor& p = (*ps_)[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
        Eigen::MatrixXd mhat = m_[i] / bc1;
        Eigen::MatrixXd vhat = v_[i] / bc2;
        p.value.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
    }
}

TrainResult train_loop(ad::ParamStore& ps,
                       const std::function<ad::Var(ad::Tape&, int tau, bool train)>& forward,
                       std::vector<int> train_targets, const std::vector<int>& val_targets,
                       const TrainSettings& ts,
                       const std::function<std::vector<Eigen::MatrixXd>()>& snapshot_extra,
                       const std::function<void(const std::vector<Eigen::MatrixXd>&)>&
                           restore_extra) {
    if (train_targets.empty()) throw std::runtime_error("training split is empty");

    TrainResult res;
    Adam opt(ps, ts.lr);
    Rng shuffle_rng(ts.seed ^ 0xD1B54A32D192ED03ull);

    auto val_loss = [&]() {
        if (val_targets.empty()) return std::numeric_limits<double>::quiet_NaN();
        double total = 0.0;
        for (int tau : val_targets) {
            ad::Tape tape;
            total += forward(tape, tau, false).value()(0, 0);
        }
        return total / static_cast<double>(val_targets.size());
    };

    // Best-validation snapshot (starts as the initialization).
    std::vector<Eigen::MatrixXd> best_params;
    auto snapshot = [&]() {
        best_params.clear();
        for (std::size_t i = 0; i < ps.size(); ++i) best_params.push_back(ps[i].value);
    };
    std::vector<Eigen::MatrixXd> best_extra;
    snapshot();
    if (snapshot_extra) best_extra = snapshot_extra();
    res.best_val = std::numeric_limits<double>::infinity();

    double train_wall = 0.0;
    long long trained_samples = 0;

    for (int epoch = 1; epoch <= ts.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(train_targets);

        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < train_targets.size(); b += ts.batch_size) {
            std::size_t e = std::min(b + ts.batch_size, train_targets.size());
            double inv = 1.0 / static_cast<double>(e - b);
            ps.zero_grads();
            double batch_loss = 0.0;
            for (std::size_t k = b; k < e; ++k) {
                ad::Tape tape;
                ad::Var loss = forward(tape, train_targets[k], true);
                // The batch loss is the mean of per-sample losses; scaling
                // each sample's contribution keeps gradients identical to a
                // joint batch graph while bounding tape memory.
                batch_loss += loss.value()(0, 0);
                tape.backward(ad::scale(loss, inv));
            }
            batch_loss *= inv;
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch));
            ps.clip_grads(ts.clip_norm);
            res.postclip_norms.push_back(ps.grad_norm());
            opt.step();
            epoch_loss += batch_loss * static_cast<double>(e - b);
            trained_samples += static_cast<long long>(e - b);
        }
        epoch_loss /= static_cast<double>(train_targets.size());
        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        train_wall += wall;

        double vl = val_loss();
        res.log.push_back({epoch, epoch_loss, vl, wall});

        double selector = std::isnan(vl) ? epoch_loss : vl;
        if (selector < res.best_val) {
            res.best_val = selector;
            res.best_epoch = epoch;
            snapshot();
            if (snapshot_extra) best_extra = snapshot_extra();
        }
    }

    // Leave the parameters at the best validation epoch.
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].value = best_params[i];
    if (restore_extra) restore_extra(best_extra);

    res.ttps = trained_samples > 0 ? train_wall / static_cast<double>(trained_samples) : 0.0;
    return res;
}

const Eigen::MatrixXd* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return &m;
    return nullptr;
}

namespace {

constexpr char kMagic[8] = {'O', 'D', 'P', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u64(out, ck.config_echo.size());
    out.write(ck.config_echo.data(), static_cast<std::streamsize>(ck.config_echo.size()));
    write_u64(out, ck.seed);
    write_u64(out, ck.tensors.size());
    for (const auto& [name, m] : ck.tensors) {
        write_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(out, static_cast<std::uint64_t>(m.rows()));
        write_u64(out, static_cast<std::uint64_t>(m.cols()));
        // Column-major storage is contiguous, so the whole buffer goes out in
        // one write.
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    if (!out) throw IoError("failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CompatError("not a recognized checkpoint file: " + path);
    Checkpoint ck;
    std::uint64_t cfg_len = read_u64(in);
    ck.config_echo.resize(cfg_len);
    in.read(ck.config_echo.data(), static_cast<std::streamsize>(cfg_len));
    ck.seed = read_u64(in);
    std::uint64_t n_tensors = read_u64(in);
    for (std::uint64_t k = 0; k < n_tensors; ++k) {
        std::uint64_t name_len = read_u64(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        std::uint64_t rows = read_u64(in), cols = read_u64(in);
        Eigen::MatrixXd m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
        if (!in) throw CompatError("checkpoint truncated: " + path);
        ck.tensors.emplace_back(std::move(name), std::move(m));
    }
    return ck;
}

std::vector<ReportRow> evaluate_targets(
    const std::function<std::pair<Eigen::VectorXd, Eigen::MatrixXd>(int tau)>& predict,
    const Dataset& ds, const std::vector<int>& targets, const std::vector<double>& thresholds) {
    std::vector<MetricAccum> acc_d, acc_od;
    for (double t : thresholds) {
        acc_d.emplace_back(t);
        acc_od.emplace_back(t);
    }
    for (int tau : targets) {
        if (tau > ds.T()) continue;  // no ground truth yet
        auto [d_hat, g_hat] = predict(tau);
        Eigen::VectorXd d_clamped = d_hat.cwiseMax(0.0);
        Eigen::MatrixXd g_clamped = g_hat.cwiseMax(0.0);
        Eigen::VectorXd d_truth = ds.demand(tau);
        Eigen::MatrixXd g_truth = ds.dense(tau);
        for (std::size_t k = 0; k < thresholds.size(); ++k) {
            acc_d[k].add_all(d_clamped, d_truth);
            acc_od[k].add_all(g_clamped, g_truth);
        }
    }
    std::vector<ReportRow> rows;
    for (std::size_t k = 0; k < thresholds.size(); ++k)
        rows.push_back({"demand", thresholds[k], acc_d[k].finalize()});
    for (std::size_t k = 0; k < thresholds.size(); ++k)
        rows.push_back({"od", thresholds[k], acc_od[k].finalize()});
    return rows;
}

void write_report(const std::string& path, const std::vector<ReportRow>& rows, double ttps) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report: " + path);
    out << "task, threshold, rmse, mape, mae, count\n";
    for (const auto& r : rows) {
        out << r.task << ", " << format_double(r.threshold) << ", ";
        if (r.m.defined) {
            out << format_double(r.m.rmse) << ", " << format_double(r.m.mape) << ", "
                << format_double(r.m.mae) << ", " << r.m.count << "\n";
        } else {
            out << "undefined, undefined, undefined, 0\n";
        }
    }
    if (ttps >= 0) out << "# ttps_seconds=" << format_double(ttps) << "\n";
}

}  // namespace odp

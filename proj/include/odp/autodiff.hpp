#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "odp/common.hpp"

// Reverse-mode automatic differentiation over Eigen matrices.
//
// A Tape records every intermediate value of one forward pass together with a
// closure that propagates gradients to its inputs; backward() replays the
// closures in reverse. Tapes are cheap to build and are meant to be
// constructed per training sample, so peak memory stays proportional to one
// forward pass rather than a whole batch.

namespace odp::ad {

/// Named parameter matrix with an accumulated gradient.
struct Tensor {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;

    Tensor(std::string n, int rows, int cols)
        : name(std::move(n)),
          value(Eigen::MatrixXd::Zero(rows, cols)),
          grad(Eigen::MatrixXd::Zero(rows, cols)) {}
};

/// Ordered collection of parameters. Registration order is the canonical
/// order for optimizers and checkpoints.
class ParamStore {
public:
    Tensor& add(const std::string& name, int rows, int cols);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    Tensor& operator[](std::size_t i) { return *params_[i]; }
    const Tensor& operator[](std::size_t i) const { return *params_[i]; }

    void zero_grads();

    /// L2 norm over all gradients taken together.
    double grad_norm() const;

    /// Scale all gradients down so the global norm is at most max_norm.
    void clip_grads(double max_norm);

private:
    std::vector<std::unique_ptr<Tensor>> params_;
    std::map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to one tape node. Plain value type; copying is free.
struct Var {
    Tape* tape = nullptr;
    int idx = -1;

    const Eigen::MatrixXd& value() const;
    int rows() const { return static_cast<int>(value().rows()); }
    int cols() const { return static_cast<int>(value().cols()); }
};

class Tape {
public:
    struct Node {
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad;
        // Propagates this node's grad into its inputs; receives the tape and
        // the node's own index so closures never hold dangling references
        // into the (growable) node vector.
        std::function<void(Tape&, int)> back;
    };

    /// Leaf holding a constant; no gradient flows out of it.
    Var input(Eigen::MatrixXd v);

    /// Leaf bound to a parameter; backward() adds its gradient to t.grad.
    Var param(Tensor& t);

    /// Run reverse-mode accumulation from a scalar (1x1) loss node.
    void backward(Var loss);

    /// Gradient of the last backward() pass with respect to a node.
    const Eigen::MatrixXd& grad(Var v) const { return nodes_[v.idx].grad; }

    Node& node(int i) { return nodes_[i]; }
    int add_node(Eigen::MatrixXd value, std::function<void(Tape&, int)> back = {});
    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
    std::vector<std::pair<int, Tensor*>> param_nodes_;
};

// ---- operations ------------------------------------------------------------
// All inputs must live on the same tape. Shapes are validated with asserts.

Var matmul(Var a, Var b);

/// a * b.transpose(); the natural shape for row-major feature matrices
/// against parameter matrices stored as (out x in).
Var matmul_nt(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);

/// Elementwise product.
Var mul(Var a, Var b);

Var scale(Var a, double s);

/// wa * a + wb * b, elementwise.
Var add_scaled(Var a, Var b, double wa, double wb);

/// 1 - x, elementwise.
Var one_minus(Var x);

/// m plus a row vector broadcast over every row.
Var add_rowvec(Var m, Var r);

Var concat_cols(const std::vector<Var>& parts);

/// out.row(k) = m.row(idx[k]); rows may repeat.
Var gather_rows(Var m, std::vector<int> idx);

/// out.row(i) = s(i) * m.row(i), s an (n x 1) node.
Var rowscale(Var m, Var s);

/// Same with a constant scale vector.
Var rowscale_const(Var m, Eigen::VectorXd s);

Var leaky_relu(Var x, double slope);
Var sigmoid(Var x);
Var tanh_(Var x);

/// Softmax of a column vector within each contiguous segment
/// [offsets[s], offsets[s+1]). Stable (max-shifted). Empty segments are fine.
Var segment_softmax(Var scores, std::vector<int> offsets);

/// Row-sum within each segment: (S x d) output. Empty segment -> zero row.
Var segment_sum(Var m, std::vector<int> offsets);

/// Row-mean within each segment; empty segment -> zero row.
Var segment_mean(Var m, std::vector<int> offsets);

/// Columnwise max within each segment; empty segment -> zero row.
Var segment_max(Var m, std::vector<int> offsets);

/// Elementwise mean of same-shaped nodes.
Var mean_of(const std::vector<Var>& xs);

Var slice_cols(Var m, int start, int len);

/// Reshape an (n*n x 1) column, ordered by (row, col) pairs, into n x n.
Var to_square(Var v, int n);

Var sum_all(Var x);

/// Smooth L1 against a constant target, averaged over all elements.
Var smooth_l1_loss(Var pred, const Eigen::MatrixXd& target, double beta);

/// Running statistics for batch normalization.
struct BatchNormState {
    Eigen::RowVectorXd running_mean;
    Eigen::RowVectorXd running_var;

    explicit BatchNormState(int dim)
        : running_mean(Eigen::RowVectorXd::Zero(dim)),
          running_var(Eigen::RowVectorXd::Ones(dim)) {}
};

/// Batch normalization over rows (each column normalized independently).
/// Training mode normalizes with biased batch variance and, when
/// update_running is set, folds unbiased batch statistics into the running
/// averages; eval mode normalizes with the running statistics.
Var batchnorm(Var x, Var gamma, Var beta, BatchNormState& state, bool train,
              bool update_running, double momentum = 0.1, double eps = 1e-5);

/// Fill a tensor with uniform values in [-sqrt(1/fan_in), sqrt(1/fan_in)].
void init_uniform(Tensor& t, Rng& rng, int fan_in);

}  // namespace odp::ad

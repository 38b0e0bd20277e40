#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace snapnav::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Handle to a node on a Tape.
struct Var {
    std::uint32_t index = 0;
};

/// Reverse-mode tape over small dense matrices.
///
/// Every op appends a node holding its forward value and, when gradient
/// tracking is on and some input needs a gradient, a closure that
/// propagates the node's gradient to its inputs. backward() replays the
/// closures in reverse order and finally adds parameter gradients into the
/// sinks registered with parameter().
///
/// With tracking off the tape only stores values, which is what greedy
/// evaluation uses.
class Tape {
   public:
    explicit Tape(bool track_gradients = true);

    bool tracking() const { return tracking_; }
    std::size_t size() const { return nodes_.size(); }

    Var constant(Mat value);
    /// Leaf whose gradient is added into *sink by backward(). sink may be null.
    Var parameter(const Mat& value, Mat* sink);

    const Mat& value(Var v) const { return nodes_[v.index].value; }
    double scalar(Var v) const { return nodes_[v.index].value(0, 0); }
    /// Valid after backward(); empty for nodes that need no gradient.
    const Mat& grad(Var v) const { return nodes_[v.index].grad; }

    /// Seeds d(root)/d(root) = 1 for a 1x1 root.
    void backward(Var root);

    // Linear algebra.
    Var matmul(Var a, Var b);     // a * b
    Var matmul_nt(Var a, Var b);  // a * b^T
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var add_row(Var a, Var row);  // a + 1 * row, row is 1 x cols(a)
    Var scale(Var a, double s);
    Var mul(Var a, Var b);  // elementwise

    // Nonlinearities.
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

    // Shape.
    Var gather_rows(Var table, std::span<const int> rows);
    Var concat_rows(std::span<const Var> parts);
    Var concat_cols(Var a, Var b);
    Var slice_rows(Var a, int begin, int count);
    Var slice_cols(Var a, int begin, int count);

    // Scalar reductions (results are 1x1).
    Var log_softmax_at(Var logits_row, int index);
    Var mean_squared_error(Var a, const Mat& target);
    Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

   private:
    struct Node {
        Mat value;
        Mat grad;
        std::function<void(Tape&, std::uint32_t)> backprop;
        Mat* sink = nullptr;
        bool needs_grad = false;
    };

    Var push(Mat value, bool needs_grad, std::function<void(Tape&, std::uint32_t)> backprop);
    bool needs(Var v) const { return nodes_[v.index].needs_grad; }
    Mat& g(Var v) { return nodes_[v.index].grad; }
    const Mat& g_out(std::uint32_t self) const { return nodes_[self].grad; }

    bool tracking_;
    std::vector<Node> nodes_;
};

}  // namespace snapnav::ad

#include "snapnav/autodiff.hpp"

#include <cassert>
#include <cmath>

#include "snapnav/common.hpp"

namespace snapnav::ad {

Tape::Tape(bool track_gradients) : tracking_(track_gradients) { nodes_.reserve(1024); }

Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, std::uint32_t)> backprop) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = tracking_ && needs_grad;
    if (n.needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(const Mat& value, Mat* sink) {
    Var v = push(value, true, nullptr);
    nodes_[v.index].sink = tracking_ ? sink : nullptr;
    return v;
}

void Tape::backward(Var root) {
    if (!tracking_) throw Error("backward() on a tape without gradient tracking");
    if (value(root).size() != 1) throw Error("backward() root must be a scalar");
    for (auto& n : nodes_) {
        if (n.needs_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    }
    if (!needs(root)) return;
    g(root)(0, 0) = 1.0;
    for (std::uint32_t i = root.index + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (n.needs_grad && n.backprop) n.backprop(*this, i);
    }
    for (auto& n : nodes_) {
        if (n.sink) *n.sink += n.grad;
    }
}

// ---------------------------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
    assert(value(a).cols() == value(b).rows());
    return push(value(a) * value(b), needs(a) || needs(b), [a, b](Tape& t, std::uint32_t self) {
        if (t.needs(a)) t.g(a).noalias() += t.g_out(self) * t.value(b).transpose();
        if (t.needs(b)) t.g(b).noalias() += t.value(a).transpose() * t.g_out(self);
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    assert(value(a).cols() == value(b).cols());
    return push(value(a) * value(b).transpose(), needs(a) || needs(b), [a, b](Tape& t, std::uint32_t self) {
        if (t.needs(a)) t.g(a).noalias() += t.g_out(self) * t.value(b);
        if (t.needs(b)) t.g(b).noalias() += t.g_out(self).transpose() * t.value(a);
    });
}

Var Tape::add(Var a, Var b) {
    return push(value(a) + value(b), needs(a) || needs(b), [a, b](Tape& t, std::uint32_t self) {
        if (t.needs(a)) t.g(a) += t.g_out(self);
        if (t.needs(b)) t.g(b) += t.g_out(self);
    });
}

Var Tape::sub(Var a, Var b) {
    return push(value(a) - value(b), needs(a) || needs(b), [a, b](Tape& t, std::uint32_t self) {
        if (t.needs(a)) t.g(a) += t.g_out(self);
        if (t.needs(b)) t.g(b) -= t.g_out(self);
    });
}

Var Tape::add_row(Var a, Var row) {
    assert(value(row).rows() == 1 && value(row).cols() == value(a).cols());
    Mat out = value(a);
    out.rowwise() += value(row).row(0);
    return push(std::move(out), needs(a) || needs(row), [a, row](Tape& t, std::uint32_t self) {
        if (t.needs(a)) t.g(a) += t.g_out(self);
        if (t.needs(row)) t.g(row) += t.g_out(self).colwise().sum();
    });
}

Var Tape::scale(Var a, double s) {
    return push(value(a) * s, needs(a), [a, s](Tape& t, std::uint32_t self) { t.g(a) += s * t.g_out(self); });
}

Var Tape::mul(Var a, Var b) {
    return push(value(a).cwiseProduct(value(b)), needs(a) || needs(b), [a, b](Tape& t, std::uint32_t self) {
        if (t.needs(a)) t.g(a) += t.g_out(self).cwiseProduct(t.value(b));
        if (t.needs(b)) t.g(b) += t.g_out(self).cwiseProduct(t.value(a));
    });
}

Var Tape::tanh(Var a) {
    Mat out = value(a).array().tanh().matrix();
    return push(std::move(out), needs(a), [a](Tape& t, std::uint32_t self) {
        const Mat& y = t.value(Var{self});
        t.g(a).array() += t.g_out(self).array() * (1.0 - y.array().square());
    });
}

Var Tape::sigmoid(Var a) {
    Mat out = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
    return push(std::move(out), needs(a), [a](Tape& t, std::uint32_t self) {
        const Mat& y = t.value(Var{self});
        t.g(a).array() += t.g_out(self).array() * y.array() * (1.0 - y.array());
    });
}

Var Tape::softmax_rows(Var a) {
    const Mat& x = value(a);
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double m = x.row(r).maxCoeff();
        out.row(r) = (x.row(r).array() - m).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return push(std::move(out), needs(a), [a](Tape& t, std::uint32_t self) {
        const Mat& y = t.value(Var{self});
        const Mat& dy = t.g_out(self);
        const Eigen::VectorXd dots = dy.cwiseProduct(y).rowwise().sum();
        Mat dx = dy;
        dx.colwise() -= dots;
        t.g(a) += dx.cwiseProduct(y);
    });
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
    const Mat& in = value(x);
    const auto n = static_cast<double>(in.cols());
    Mat xhat(in.rows(), in.cols());
    Eigen::VectorXd inv_std(in.rows());
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
        const double mu = in.row(r).mean();
        const double var = (in.row(r).array() - mu).square().sum() / n;
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (in.row(r).array() - mu) * inv_std(r);
    }
    Mat out = xhat;
    out.array().rowwise() *= value(gain).row(0).array();
    out.rowwise() += value(bias).row(0);
    return push(std::move(out), needs(x) || needs(gain) || needs(bias),
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), n](Tape& t, std::uint32_t self) {
                    const Mat& dy = t.g_out(self);
                    if (t.needs(gain)) t.g(gain) += dy.cwiseProduct(xhat).colwise().sum();
                    if (t.needs(bias)) t.g(bias) += dy.colwise().sum();
                    if (!t.needs(x)) return;
                    Mat dxhat = dy;
                    dxhat.array().rowwise() *= t.value(gain).row(0).array();
                    const Eigen::VectorXd mean_d = dxhat.rowwise().sum() / n;
                    const Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().sum() / n;
                    Mat dx = dxhat;
                    dx.colwise() -= mean_d;
                    dx -= (xhat.array().colwise() * mean_dx.array()).matrix();
                    dx.array().colwise() *= inv_std.array();
                    t.g(x) += dx;
                });
}

Var Tape::gather_rows(Var table, std::span<const int> rows) {
    const Mat& src = value(table);
    Mat out(static_cast<Eigen::Index>(rows.size()), src.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= src.rows()) throw Error("gather_rows: row index out of range");
        out.row(static_cast<Eigen::Index>(i)) = src.row(rows[i]);
    }
    std::vector<int> idx(rows.begin(), rows.end());
    return push(std::move(out), needs(table), [table, idx = std::move(idx)](Tape& t, std::uint32_t self) {
        const Mat& dy = t.g_out(self);
        for (std::size_t i = 0; i < idx.size(); ++i) t.g(table).row(idx[i]) += dy.row(static_cast<Eigen::Index>(i));
    });
}

Var Tape::concat_rows(std::span<const Var> parts) {
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts.front()).cols();
    bool any = false;
    for (Var p : parts) {
        if (value(p).cols() != cols) throw Error("concat_rows: column mismatch");
        rows += value(p).rows();
        any = any || needs(p);
    }
    Mat out(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
        out.middleRows(r, value(p).rows()) = value(p);
        r += value(p).rows();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return push(std::move(out), any, [inputs = std::move(inputs)](Tape& t, std::uint32_t self) {
        Eigen::Index r = 0;
        for (Var p : inputs) {
            const auto n = t.value(p).rows();
            if (t.needs(p)) t.g(p) += t.g_out(self).middleRows(r, n);
            r += n;
        }
    });
}

Var Tape::concat_cols(Var a, Var b) {
    if (value(a).rows() != value(b).rows()) throw Error("concat_cols: row mismatch");
    Mat out(value(a).rows(), value(a).cols() + value(b).cols());
    out << value(a), value(b);
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::uint32_t self) {
        const auto ca = t.value(a).cols();
        if (t.needs(a)) t.g(a) += t.g_out(self).leftCols(ca);
        if (t.needs(b)) t.g(b) += t.g_out(self).rightCols(t.value(b).cols());
    });
}

Var Tape::slice_rows(Var a, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > value(a).rows()) throw Error("slice_rows: out of range");
    return push(value(a).middleRows(begin, count), needs(a), [a, begin, count](Tape& t, std::uint32_t self) {
        t.g(a).middleRows(begin, count) += t.g_out(self);
    });
}

Var Tape::slice_cols(Var a, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > value(a).cols()) throw Error("slice_cols: out of range");
    return push(value(a).middleCols(begin, count), needs(a), [a, begin, count](Tape& t, std::uint32_t self) {
        t.g(a).middleCols(begin, count) += t.g_out(self);
    });
}

Var Tape::log_softmax_at(Var logits_row, int index) {
    const Mat& z = value(logits_row);
    if (z.rows() != 1 || index < 0 || index >= z.cols()) throw Error("log_softmax_at: bad shape or index");
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    Mat out(1, 1);
    out(0, 0) = z(0, index) - lse;
    return push(std::move(out), needs(logits_row), [logits_row, index, lse](Tape& t, std::uint32_t self) {
        const double go = t.g_out(self)(0, 0);
        Mat p = (t.value(logits_row).array() - lse).exp().matrix();
        p(0, index) -= 1.0;
        t.g(logits_row) -= go * p;
    });
}

Var Tape::mean_squared_error(Var a, const Mat& target) {
    const Mat& x = value(a);
    if (x.rows() != target.rows() || x.cols() != target.cols()) throw Error("mean_squared_error: shape mismatch");
    Mat diff = x - target;
    const auto n = static_cast<double>(diff.size());
    Mat out(1, 1);
    out(0, 0) = diff.squaredNorm() / n;
    return push(std::move(out), needs(a), [a, diff = std::move(diff), n](Tape& t, std::uint32_t self) {
        t.g(a) += (2.0 * t.g_out(self)(0, 0) / n) * diff;
    });
}

Var Tape::weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
    if (scalars.size() != weights.size()) throw Error("weighted_sum: size mismatch");
    double total = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        total += weights[i] * scalar(scalars[i]);
        any = any || needs(scalars[i]);
    }
    Mat out(1, 1);
    out(0, 0) = total;
    std::vector<Var> in(scalars.begin(), scalars.end());
    std::vector<double> w(weights.begin(), weights.end());
    return push(std::move(out), any, [in = std::move(in), w = std::move(w)](Tape& t, std::uint32_t self) {
        const double go = t.g_out(self)(0, 0);
        for (std::size_t i = 0; i < in.size(); ++i) {
            if (t.needs(in[i])) t.g(in[i])(0, 0) += w[i] * go;
        }
    });
}

}  // namespace snapnav::ad

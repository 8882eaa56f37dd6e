#include "ckd/tape.hpp"

#include <algorithm>
#include <cmath>

namespace ckd {

const char *op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Constant: return "constant";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::AddRow: return "add_row";
        case Op::MulRow: return "mul_row";
        case Op::Scale: return "scale";
        case Op::AddScalar: return "add_scalar";
        case Op::PowScalar: return "pow_scalar";
        case Op::Relu: return "relu";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::SumAll: return "sum_all";
        case Op::SumAxis0: return "sum_axis0";
        case Op::SumAxis1: return "sum_axis1";
        case Op::MeanAxis0: return "mean_axis0";
        case Op::ConcatRows: return "concat_rows";
        case Op::SliceRows: return "slice_rows";
        case Op::SoftmaxT: return "softmax_t";
        case Op::LogSoftmaxT: return "log_softmax_t";
        case Op::LogSumExpRows: return "logsumexp_rows";
        case Op::StopGrad: return "stop_gradient";
    }
    return "?";
}

namespace {

[[noreturn]] void shape_fail(Op op, const Tensor &x, const Tensor *y = nullptr) {
    std::string msg = std::string(op_name(op)) + ": bad operand shapes " + x.shape_str();
    if (y) msg += " and " + y->shape_str();
    throw ShapeError(msg);
}

void check_finite(Op op, const Tensor &t) {
    if (!t.all_finite())
        throw DomainError(std::string(op_name(op)) + ": non-finite value produced");
}

}  // namespace

int Tape::push(Node n) {
    check_finite(n.op, n.value);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::input(Tensor t) {
    Node n;
    n.op = Op::Input;
    n.requires_grad = true;
    n.value = std::move(t);
    return push(std::move(n));
}

int Tape::constant(Tensor t) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(t);
    return push(std::move(n));
}

int Tape::matmul(int a, int b) {
    const Tensor &x = value(a), &y = value(b);
    if (x.cols != y.rows) shape_fail(Op::MatMul, x, &y);
    Node n;
    n.op = Op::MatMul;
    n.in = {a, b};
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = Tensor(x.rows, y.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t k = 0; k < x.cols; ++k) {
            double xv = x.at(i, k);
            if (xv == 0.0) continue;
            for (std::size_t j = 0; j < y.cols; ++j)
                n.value.at(i, j) += xv * y.at(k, j);
        }
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    const Tensor &x = value(a), &y = value(b);
    if (!x.same_shape(y)) shape_fail(Op::Add, x, &y);
    Node n;
    n.op = Op::Add;
    n.in = {a, b};
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = x;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value.values[i] += y.values[i];
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    const Tensor &x = value(a), &y = value(b);
    if (!x.same_shape(y)) shape_fail(Op::Sub, x, &y);
    Node n;
    n.op = Op::Sub;
    n.in = {a, b};
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = x;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value.values[i] -= y.values[i];
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    const Tensor &x = value(a), &y = value(b);
    if (!x.same_shape(y)) shape_fail(Op::Mul, x, &y);
    Node n;
    n.op = Op::Mul;
    n.in = {a, b};
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = x;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value.values[i] *= y.values[i];
    return push(std::move(n));
}

int Tape::add_row(int x, int v) {
    const Tensor &a = value(x), &b = value(v);
    if (b.rows != 1 || a.cols != b.cols) shape_fail(Op::AddRow, a, &b);
    Node n;
    n.op = Op::AddRow;
    n.in = {x, v};
    n.requires_grad = node(x).requires_grad || node(v).requires_grad;
    n.value = a;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) n.value.at(i, j) += b.values[j];
    return push(std::move(n));
}

int Tape::mul_row(int x, int v) {
    const Tensor &a = value(x), &b = value(v);
    if (b.rows != 1 || a.cols != b.cols) shape_fail(Op::MulRow, a, &b);
    Node n;
    n.op = Op::MulRow;
    n.in = {x, v};
    n.requires_grad = node(x).requires_grad || node(v).requires_grad;
    n.value = a;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) n.value.at(i, j) *= b.values[j];
    return push(std::move(n));
}

int Tape::scale(int x, double s) {
    Node n;
    n.op = Op::Scale;
    n.in = {x, -1};
    n.a = s;
    n.requires_grad = node(x).requires_grad;
    n.value = value(x);
    for (double &v : n.value.values) v *= s;
    return push(std::move(n));
}

int Tape::add_scalar(int x, double s) {
    Node n;
    n.op = Op::AddScalar;
    n.in = {x, -1};
    n.a = s;
    n.requires_grad = node(x).requires_grad;
    n.value = value(x);
    for (double &v : n.value.values) v += s;
    return push(std::move(n));
}

int Tape::pow_scalar(int x, double e) {
    Node n;
    n.op = Op::PowScalar;
    n.in = {x, -1};
    n.a = e;
    n.requires_grad = node(x).requires_grad;
    n.value = value(x);
    for (double &v : n.value.values) {
        if (v <= 0.0 && std::floor(e) != e)
            throw DomainError("pow_scalar: non-positive base with fractional exponent");
        v = std::pow(v, e);
    }
    return push(std::move(n));
}

int Tape::relu(int x) {
    Node n;
    n.op = Op::Relu;
    n.in = {x, -1};
    n.requires_grad = node(x).requires_grad;
    n.value = value(x);
    for (double &v : n.value.values) v = std::max(v, 0.0);
    return push(std::move(n));
}

int Tape::exp_(int x) {
    Node n;
    n.op = Op::Exp;
    n.in = {x, -1};
    n.requires_grad = node(x).requires_grad;
    n.value = value(x);
    for (double &v : n.value.values) v = std::exp(v);
    return push(std::move(n));
}

int Tape::log_(int x) {
    Node n;
    n.op = Op::Log;
    n.in = {x, -1};
    n.requires_grad = node(x).requires_grad;
    n.value = value(x);
    for (double &v : n.value.values) {
        if (v <= 0.0) throw DomainError("log: non-positive argument");
        v = std::log(v);
    }
    return push(std::move(n));
}

int Tape::sum_all(int x) {
    Node n;
    n.op = Op::SumAll;
    n.in = {x, -1};
    n.requires_grad = node(x).requires_grad;
    double s = 0.0;
    for (double v : value(x).values) s += v;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

int Tape::sum_axis0(int x) {
    const Tensor &a = value(x);
    Node n;
    n.op = Op::SumAxis0;
    n.in = {x, -1};
    n.requires_grad = node(x).requires_grad;
    n.value = Tensor(1, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) n.value.values[j] += a.at(i, j);
    return push(std::move(n));
}

int Tape::sum_axis1(int x) {
    const Tensor &a = value(x);
    Node n;
    n.op = Op::SumAxis1;
    n.in = {x, -1};
    n.requires_grad = node(x).requires_grad;
    n.value = Tensor(a.rows, 1);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) n.value.values[i] += a.at(i, j);
    return push(std::move(n));
}

int Tape::mean_axis0(int x) {
    const Tensor &a = value(x);
    if (a.rows == 0) shape_fail(Op::MeanAxis0, a);
    Node n;
    n.op = Op::MeanAxis0;
    n.in = {x, -1};
    n.requires_grad = node(x).requires_grad;
    n.value = Tensor(1, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) n.value.values[j] += a.at(i, j);
    for (double &v : n.value.values) v /= static_cast<double>(a.rows);
    return push(std::move(n));
}

int Tape::concat_rows(int a, int b) {
    const Tensor &x = value(a), &y = value(b);
    if (x.cols != y.cols) shape_fail(Op::ConcatRows, x, &y);
    Node n;
    n.op = Op::ConcatRows;
    n.in = {a, b};
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = Tensor(x.rows + y.rows, x.cols);
    std::copy(x.values.begin(), x.values.end(), n.value.values.begin());
    std::copy(y.values.begin(), y.values.end(), n.value.values.begin() + x.size());
    return push(std::move(n));
}

int Tape::slice_rows(int x, int r0, int r1) {
    const Tensor &a = value(x);
    if (r0 < 0 || r1 < r0 || static_cast<std::size_t>(r1) > a.rows)
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," +
                         std::to_string(r1) + ") out of bounds for " + a.shape_str());
    Node n;
    n.op = Op::SliceRows;
    n.in = {x, -1};
    n.i0 = r0;
    n.i1 = r1;
    n.requires_grad = node(x).requires_grad;
    n.value = Tensor(static_cast<std::size_t>(r1 - r0), a.cols);
    std::copy(a.values.begin() + r0 * a.cols, a.values.begin() + r1 * a.cols,
              n.value.values.begin());
    return push(std::move(n));
}

namespace {

// Rowwise log-softmax of z / tau with max subtraction.
void row_log_softmax(const double *z, std::size_t k, double tau, double *out) {
    double m = z[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, z[j]);
    m /= tau;
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] / tau - m);
    double lse = m + std::log(s);
    for (std::size_t j = 0; j < k; ++j) out[j] = z[j] / tau - lse;
}

}  // namespace

int Tape::softmax_t(int x, double tau) {
    if (tau <= 0.0) throw DomainError("softmax_t: tau must be positive");
    const Tensor &a = value(x);
    Node n;
    n.op = Op::SoftmaxT;
    n.in = {x, -1};
    n.a = tau;
    n.requires_grad = node(x).requires_grad;
    n.value = Tensor(a.rows, a.cols);
    std::vector<double> lsm(a.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        row_log_softmax(a.values.data() + i * a.cols, a.cols, tau, lsm.data());
        for (std::size_t j = 0; j < a.cols; ++j) n.value.at(i, j) = std::exp(lsm[j]);
    }
    return push(std::move(n));
}

int Tape::log_softmax_t(int x, double tau) {
    if (tau <= 0.0) throw DomainError("log_softmax_t: tau must be positive");
    const Tensor &a = value(x);
    Node n;
    n.op = Op::LogSoftmaxT;
    n.in = {x, -1};
    n.a = tau;
    n.requires_grad = node(x).requires_grad;
    n.value = Tensor(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        row_log_softmax(a.values.data() + i * a.cols, a.cols, tau,
                        n.value.values.data() + i * a.cols);
    return push(std::move(n));
}

int Tape::logsumexp_rows(int x) {
    const Tensor &a = value(x);
    Node n;
    n.op = Op::LogSumExpRows;
    n.in = {x, -1};
    n.requires_grad = node(x).requires_grad;
    n.value = Tensor(a.rows, 1);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double *z = a.values.data() + i * a.cols;
        double m = z[0];
        for (std::size_t j = 1; j < a.cols; ++j) m = std::max(m, z[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) s += std::exp(z[j] - m);
        n.value.values[i] = m + std::log(s);
    }
    return push(std::move(n));
}

int Tape::stop_gradient(int x) {
    Node n;
    n.op = Op::StopGrad;
    n.in = {x, -1};
    n.requires_grad = false;
    n.value = value(x);
    return push(std::move(n));
}

void Tape::backward(int loss) {
    const Tensor &lv = value(loss);
    if (lv.size() != 1)
        throw ShapeError("backward: loss must be scalar, got " + lv.shape_str());
    grads_.assign(nodes_.size(), Tensor());
    auto acc = [&](int id, std::size_t r, std::size_t c, auto fill) {
        if (!nodes_[id].requires_grad) return;
        if (grads_[id].size() == 0) grads_[id] = Tensor(r, c);
        fill(grads_[id]);
    };
    acc(loss, 1, 1, [](Tensor &g) { g.values[0] = 1.0; });

    for (int id = loss; id >= 0; --id) {
        const Node &n = nodes_[id];
        if (!n.requires_grad || grads_[id].size() == 0) continue;
        const Tensor &g = grads_[id];
        switch (n.op) {
            case Op::Input:
            case Op::Constant:
            case Op::StopGrad:
                break;
            case Op::MatMul: {
                const Tensor &x = value(n.in[0]), &y = value(n.in[1]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < x.rows; ++i)
                        for (std::size_t j = 0; j < y.cols; ++j) {
                            double gv = g.at(i, j);
                            if (gv == 0.0) continue;
                            for (std::size_t k = 0; k < x.cols; ++k)
                                gx.at(i, k) += gv * y.at(k, j);
                        }
                });
                acc(n.in[1], y.rows, y.cols, [&](Tensor &gy) {
                    for (std::size_t i = 0; i < x.rows; ++i)
                        for (std::size_t k = 0; k < x.cols; ++k) {
                            double xv = x.at(i, k);
                            if (xv == 0.0) continue;
                            for (std::size_t j = 0; j < y.cols; ++j)
                                gy.at(k, j) += xv * g.at(i, j);
                        }
                });
                break;
            }
            case Op::Add:
                for (int s = 0; s < 2; ++s)
                    acc(n.in[s], g.rows, g.cols, [&](Tensor &gx) {
                        for (std::size_t i = 0; i < g.size(); ++i)
                            gx.values[i] += g.values[i];
                    });
                break;
            case Op::Sub:
                acc(n.in[0], g.rows, g.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < g.size(); ++i) gx.values[i] += g.values[i];
                });
                acc(n.in[1], g.rows, g.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < g.size(); ++i) gx.values[i] -= g.values[i];
                });
                break;
            case Op::Mul: {
                const Tensor &x = value(n.in[0]), &y = value(n.in[1]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                        gx.values[i] += g.values[i] * y.values[i];
                });
                acc(n.in[1], y.rows, y.cols, [&](Tensor &gy) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                        gy.values[i] += g.values[i] * x.values[i];
                });
                break;
            }
            case Op::AddRow: {
                const Tensor &x = value(n.in[0]), &v = value(n.in[1]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < g.size(); ++i) gx.values[i] += g.values[i];
                });
                acc(n.in[1], 1, v.cols, [&](Tensor &gv) {
                    for (std::size_t i = 0; i < x.rows; ++i)
                        for (std::size_t j = 0; j < x.cols; ++j) gv.values[j] += g.at(i, j);
                });
                break;
            }
            case Op::MulRow: {
                const Tensor &x = value(n.in[0]), &v = value(n.in[1]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < x.rows; ++i)
                        for (std::size_t j = 0; j < x.cols; ++j)
                            gx.at(i, j) += g.at(i, j) * v.values[j];
                });
                acc(n.in[1], 1, v.cols, [&](Tensor &gv) {
                    for (std::size_t i = 0; i < x.rows; ++i)
                        for (std::size_t j = 0; j < x.cols; ++j)
                            gv.values[j] += g.at(i, j) * x.at(i, j);
                });
                break;
            }
            case Op::Scale:
                acc(n.in[0], g.rows, g.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                        gx.values[i] += n.a * g.values[i];
                });
                break;
            case Op::AddScalar:
                acc(n.in[0], g.rows, g.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < g.size(); ++i) gx.values[i] += g.values[i];
                });
                break;
            case Op::PowScalar: {
                const Tensor &x = value(n.in[0]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                        gx.values[i] +=
                            g.values[i] * n.a * std::pow(x.values[i], n.a - 1.0);
                });
                break;
            }
            case Op::Relu: {
                const Tensor &x = value(n.in[0]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                        if (x.values[i] > 0.0) gx.values[i] += g.values[i];
                });
                break;
            }
            case Op::Exp:
                acc(n.in[0], g.rows, g.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                        gx.values[i] += g.values[i] * n.value.values[i];
                });
                break;
            case Op::Log: {
                const Tensor &x = value(n.in[0]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                        gx.values[i] += g.values[i] / x.values[i];
                });
                break;
            }
            case Op::SumAll: {
                const Tensor &x = value(n.in[0]);
                double gv = g.values[0];
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (double &v : gx.values) v += gv;
                });
                break;
            }
            case Op::SumAxis0: {
                const Tensor &x = value(n.in[0]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < x.rows; ++i)
                        for (std::size_t j = 0; j < x.cols; ++j)
                            gx.at(i, j) += g.values[j];
                });
                break;
            }
            case Op::SumAxis1: {
                const Tensor &x = value(n.in[0]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < x.rows; ++i)
                        for (std::size_t j = 0; j < x.cols; ++j)
                            gx.at(i, j) += g.values[i];
                });
                break;
            }
            case Op::MeanAxis0: {
                const Tensor &x = value(n.in[0]);
                double inv = 1.0 / static_cast<double>(x.rows);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < x.rows; ++i)
                        for (std::size_t j = 0; j < x.cols; ++j)
                            gx.at(i, j) += g.values[j] * inv;
                });
                break;
            }
            case Op::ConcatRows: {
                const Tensor &x = value(n.in[0]), &y = value(n.in[1]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < x.size(); ++i)
                        gx.values[i] += g.values[i];
                });
                acc(n.in[1], y.rows, y.cols, [&](Tensor &gy) {
                    for (std::size_t i = 0; i < y.size(); ++i)
                        gy.values[i] += g.values[x.size() + i];
                });
                break;
            }
            case Op::SliceRows: {
                const Tensor &x = value(n.in[0]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < n.value.size(); ++i)
                        gx.values[n.i0 * x.cols + i] += g.values[i];
                });
                break;
            }
            case Op::SoftmaxT: {
                // dz = (1/tau) * p * (g - sum(g*p)) per row
                const Tensor &x = value(n.in[0]);
                const Tensor &p = n.value;
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < x.rows; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < x.cols; ++j)
                            dot += g.at(i, j) * p.at(i, j);
                        for (std::size_t j = 0; j < x.cols; ++j)
                            gx.at(i, j) += p.at(i, j) * (g.at(i, j) - dot) / n.a;
                    }
                });
                break;
            }
            case Op::LogSoftmaxT: {
                // dz = (1/tau) * (g - p * sum(g)) per row
                const Tensor &x = value(n.in[0]);
                const Tensor &lsm = n.value;
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < x.rows; ++i) {
                        double gsum = 0.0;
                        for (std::size_t j = 0; j < x.cols; ++j) gsum += g.at(i, j);
                        for (std::size_t j = 0; j < x.cols; ++j)
                            gx.at(i, j) +=
                                (g.at(i, j) - std::exp(lsm.at(i, j)) * gsum) / n.a;
                    }
                });
                break;
            }
            case Op::LogSumExpRows: {
                const Tensor &x = value(n.in[0]);
                acc(n.in[0], x.rows, x.cols, [&](Tensor &gx) {
                    for (std::size_t i = 0; i < x.rows; ++i) {
                        double gv = g.values[i];
                        for (std::size_t j = 0; j < x.cols; ++j)
                            gx.at(i, j) += gv * std::exp(x.at(i, j) - n.value.values[i]);
                    }
                });
                break;
            }
        }
    }
}

const Tensor &Tape::grad(int id) const {
    static const Tensor empty;
    const Tensor &g = grads_.at(id);
    if (g.size() == 0) {
        // Unreached or zero-gradient node: report zeros of the value shape.
        const Tensor &v = nodes_.at(id).value;
        const_cast<Tape *>(this)->grads_.at(id) = Tensor(v.rows, v.cols);
        return grads_.at(id);
    }
    (void)empty;
    return g;
}

}  // namespace ckd

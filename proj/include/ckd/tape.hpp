#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ckd/tensor.hpp"

namespace ckd {

// Primitive set of the define-by-run tape. Each op records its saved
// forward value so backward needs no recomputation.
enum class Op : std::uint8_t {
    Input,
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    AddRow,       // B x C  +  1 x C (broadcast over rows)
    MulRow,       // B x C  *  1 x C
    Scale,        // x * a            (a constant)
    AddScalar,    // x + a
    PowScalar,    // x ^ a, elementwise, x > 0 unless a is a nonneg integer
    Relu,
    Exp,
    Log,
    SumAll,       // -> 1 x 1
    SumAxis0,     // B x C -> 1 x C
    SumAxis1,     // B x C -> B x 1
    MeanAxis0,    // B x C -> 1 x C
    ConcatRows,
    SliceRows,    // rows [i0, i1)
    SoftmaxT,     // rowwise softmax of z / tau   (tau in attr a)
    LogSoftmaxT,  // rowwise log-softmax of z / tau
    LogSumExpRows,  // B x K -> B x 1
    StopGrad,
};

const char *op_name(Op op);

struct Node {
    Op op;
    std::array<int, 2> in{-1, -1};
    double a = 0.0;  // scalar attribute (scale factor, exponent, temperature)
    int i0 = 0, i1 = 0;  // row range for SliceRows
    bool requires_grad = false;
    Tensor value;
};

// Append-only computation tape. Values are computed eagerly; backward
// walks the node list in reverse. Single-threaded per tape.
class Tape {
  public:
    int input(Tensor t);     // differentiable leaf
    int constant(Tensor t);  // non-differentiable leaf

    int matmul(int a, int b);
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int add_row(int x, int v);
    int mul_row(int x, int v);
    int scale(int x, double a);
    int add_scalar(int x, double a);
    int pow_scalar(int x, double a);
    int relu(int x);
    int exp_(int x);
    int log_(int x);
    int sum_all(int x);
    int sum_axis0(int x);
    int sum_axis1(int x);
    int mean_axis0(int x);
    int concat_rows(int a, int b);
    int slice_rows(int x, int r0, int r1);
    int softmax_t(int x, double tau);
    int log_softmax_t(int x, double tau);
    int logsumexp_rows(int x);
    int stop_gradient(int x);

    std::size_t size() const { return nodes_.size(); }
    const Tensor &value(int id) const { return nodes_.at(id).value; }

    // Accumulates d(loss)/d(node) for every node reachable from the
    // scalar loss; gradient through StopGrad is exactly zero.
    void backward(int loss);
    const Tensor &grad(int id) const;

  private:
    int push(Node n);
    const Node &node(int id) const { return nodes_.at(id); }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

}  // namespace ckd

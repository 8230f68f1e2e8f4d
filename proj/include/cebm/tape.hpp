#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cebm/tensor.hpp"

namespace cebm::ad {

enum class Op {
    Input,
    Add,
    Sub,
    Neg,
    Mul,
    Div,
    MatMul,
    Transpose,
    SumAll,          // -> scalar {1}
    RowSum,          // (n,m) -> (n,1)
    ColSum,          // (n,m) -> (1,m)
    BroadcastRows,   // (1,m) -> (n,m)
    BroadcastCols,   // (n,1) -> (n,m)
    BroadcastScalar, // {1} -> shape
    Exp,
    Log,
    Tanh,
    Sigmoid,
    ConcatCols,      // (n,a) ++ (n,b) -> (n,a+b)
    SliceCols,       // (n,m) -> (n,len) starting at col `start`
    Scale,           // x * c
    AddConst,        // x + c
    Reshape,
};

class Tape;

// Lightweight handle into a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
};

struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double c = 0.0;                    // Scale/AddConst constant
    std::size_t start = 0, len = 0;    // SliceCols
    std::vector<std::size_t> target;   // Broadcast*/Reshape target shape
    Tensor val;
};

// Reverse-mode tape over dense tensors. Rebuilt per forward pass.
//
// Two backward modes:
//   - backward(): numeric adjoint accumulation, used for training gradients
//     and divergence computations. Multiple seeded passes per forward are
//     allowed.
//   - grad_graph(): emits the adjoint computation as new tape nodes, so the
//     result can itself be differentiated (one nesting level is enough for
//     the gradient-of-energy denoiser parameterization).
class Tape {
 public:
    Tape() { nodes_.reserve(256); }

    std::size_t size() const { return nodes_.size(); }
    const Tensor& value(Var v) const { return nodes_[v.id].val; }

    Var input(Tensor t);
    Var scalar(double v) { return input(Tensor::scalar(v)); }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var neg(Var a);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var sum(Var a);
    Var row_sum(Var a);
    Var col_sum(Var a);
    Var broadcast_rows(Var a, std::size_t n);
    Var broadcast_cols(Var a, std::size_t m);
    Var broadcast_scalar(Var a, std::vector<std::size_t> shape);
    Var exp(Var a);
    Var log(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var concat_cols(Var a, Var b);
    Var slice_cols(Var a, std::size_t start, std::size_t len);
    Var scale(Var a, double c);
    Var add_const(Var a, double c);
    Var reshape(Var a, std::vector<std::size_t> shape);

    // swish(x) = x * sigmoid(x)
    Var swish(Var a) { return mul(a, sigmoid(a)); }
    Var square(Var a) { return mul(a, a); }

    // Numeric reverse pass from `out` (seed defaults to ones). Adjoints of all
    // nodes are recomputed from scratch on every call.
    void backward(Var out, const Tensor* seed = nullptr);

    // Adjoint of a node after the last backward() call; zeros if unreached.
    Tensor adjoint(Var v) const;

    // Emit adjoint computation of a scalar `out` w.r.t. each of `wrt` as new
    // nodes. The returned Vars are differentiable like any other node.
    std::vector<Var> grad_graph(Var out, std::span<const Var> wrt);

    // Throws if any node holds a non-finite value.
    void check_finite() const;

 private:
    Var push(Node n);
    static void shape_check(bool ok, const char* what);

    std::vector<Node> nodes_;
    std::vector<Tensor> adj_;
};

}  // namespace cebm::ad

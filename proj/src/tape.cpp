#include "cebm/tape.hpp"

#include <algorithm>
#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>

namespace {

// Training loops allocate and free hundreds of MB/s of short-lived tensors.
// Default trim/mmap thresholds make glibc hand pages back to the kernel on
// every step; keep the arena instead.
struct MallocTuning {
    MallocTuning() {
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TOP_PAD, 64 << 20);
    }
};

const MallocTuning malloc_tuning;

}  // namespace
#endif

namespace cebm::ad {

void Tape::shape_check(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("tape: shape mismatch in ") + what);
}

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, int(nodes_.size()) - 1};
}

Var Tape::input(Tensor t) {
    Node n;
    n.op = Op::Input;
    n.val = std::move(t);
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = nodes_[a.id].val;
    const Tensor& tb = nodes_[b.id].val;
    shape_check(ta.same_shape(tb), "add");
    Node n;
    n.op = Op::Add;
    n.a = a.id;
    n.b = b.id;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) n.val.data[i] = ta.data[i] + tb.data[i];
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = nodes_[a.id].val;
    const Tensor& tb = nodes_[b.id].val;
    shape_check(ta.same_shape(tb), "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a.id;
    n.b = b.id;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) n.val.data[i] = ta.data[i] - tb.data[i];
    return push(std::move(n));
}

Var Tape::neg(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Node n;
    n.op = Op::Neg;
    n.a = a.id;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) n.val.data[i] = -ta.data[i];
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = nodes_[a.id].val;
    const Tensor& tb = nodes_[b.id].val;
    shape_check(ta.same_shape(tb), "mul");
    Node n;
    n.op = Op::Mul;
    n.a = a.id;
    n.b = b.id;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) n.val.data[i] = ta.data[i] * tb.data[i];
    return push(std::move(n));
}

Var Tape::div(Var a, Var b) {
    const Tensor& ta = nodes_[a.id].val;
    const Tensor& tb = nodes_[b.id].val;
    shape_check(ta.same_shape(tb), "div");
    Node n;
    n.op = Op::Div;
    n.a = a.id;
    n.b = b.id;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) n.val.data[i] = ta.data[i] / tb.data[i];
    return push(std::move(n));
}

namespace {

// (m,k) x (k,p) kernel, also used for the rank-1 variants after reshaping
// bookkeeping. Accumulation order over k is fixed so batched evaluation is
// bit-identical to per-row evaluation.
Tensor matmul_values(const Tensor& A, const Tensor& B) {
    std::size_t m, k, k2, p;
    bool a_vec = A.rank() == 1;
    bool b_vec = B.rank() == 1;
    if (a_vec) {
        m = 1;
        k = A.shape[0];
    } else {
        m = A.shape[0];
        k = A.shape[1];
    }
    if (b_vec) {
        k2 = B.shape[0];
        p = 1;
    } else {
        k2 = B.shape[0];
        p = B.shape[1];
    }
    if (k != k2) throw std::invalid_argument("tape: shape mismatch in matmul");

    std::vector<std::size_t> out_shape;
    if (a_vec && b_vec) out_shape = {1};
    else if (a_vec) out_shape = {p};
    else if (b_vec) out_shape = {m};
    else out_shape = {m, p};

    Tensor out(out_shape);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &A.data[i * k];
        double* orow = &out.data[i * p];
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            const double* brow = &B.data[kk * p];
            for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Tensor transpose_values(const Tensor& A) {
    if (A.rank() != 2) throw std::invalid_argument("tape: transpose needs rank-2");
    Tensor out({A.shape[1], A.shape[0]});
    for (std::size_t i = 0; i < A.shape[0]; ++i)
        for (std::size_t j = 0; j < A.shape[1]; ++j) out(j, i) = A(i, j);
    return out;
}

}  // namespace

Var Tape::matmul(Var a, Var b) {
    Node n;
    n.op = Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.val = matmul_values(nodes_[a.id].val, nodes_[b.id].val);
    return push(std::move(n));
}

Var Tape::transpose(Var a) {
    Node n;
    n.op = Op::Transpose;
    n.a = a.id;
    n.val = transpose_values(nodes_[a.id].val);
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    double s = 0.0;
    for (double v : ta.data) s += v;
    Node n;
    n.op = Op::SumAll;
    n.a = a.id;
    n.target = ta.shape;
    n.val = Tensor::scalar(s);
    return push(std::move(n));
}

Var Tape::row_sum(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    shape_check(ta.rank() == 2, "row_sum");
    Node n;
    n.op = Op::RowSum;
    n.a = a.id;
    n.val = Tensor({ta.shape[0], 1});
    for (std::size_t i = 0; i < ta.shape[0]; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < ta.shape[1]; ++j) s += ta(i, j);
        n.val(i, 0) = s;
    }
    return push(std::move(n));
}

Var Tape::col_sum(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    shape_check(ta.rank() == 2, "col_sum");
    Node n;
    n.op = Op::ColSum;
    n.a = a.id;
    n.val = Tensor({1, ta.shape[1]});
    for (std::size_t i = 0; i < ta.shape[0]; ++i)
        for (std::size_t j = 0; j < ta.shape[1]; ++j) n.val(0, j) += ta(i, j);
    return push(std::move(n));
}

Var Tape::broadcast_rows(Var a, std::size_t nrows) {
    const Tensor& ta = nodes_[a.id].val;
    shape_check(ta.rank() == 2 && ta.shape[0] == 1, "broadcast_rows");
    Node n;
    n.op = Op::BroadcastRows;
    n.a = a.id;
    n.val = Tensor({nrows, ta.shape[1]});
    for (std::size_t i = 0; i < nrows; ++i)
        for (std::size_t j = 0; j < ta.shape[1]; ++j) n.val(i, j) = ta(0, j);
    return push(std::move(n));
}

Var Tape::broadcast_cols(Var a, std::size_t ncols) {
    const Tensor& ta = nodes_[a.id].val;
    shape_check(ta.rank() == 2 && ta.shape[1] == 1, "broadcast_cols");
    Node n;
    n.op = Op::BroadcastCols;
    n.a = a.id;
    n.val = Tensor({ta.shape[0], ncols});
    for (std::size_t i = 0; i < ta.shape[0]; ++i)
        for (std::size_t j = 0; j < ncols; ++j) n.val(i, j) = ta(i, 0);
    return push(std::move(n));
}

Var Tape::broadcast_scalar(Var a, std::vector<std::size_t> shape) {
    const Tensor& ta = nodes_[a.id].val;
    shape_check(ta.numel() == 1, "broadcast_scalar");
    Node n;
    n.op = Op::BroadcastScalar;
    n.a = a.id;
    n.target = shape;
    n.val = Tensor::full(std::move(shape), ta.data[0]);
    return push(std::move(n));
}

Var Tape::exp(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Node n;
    n.op = Op::Exp;
    n.a = a.id;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) n.val.data[i] = std::exp(ta.data[i]);
    return push(std::move(n));
}

Var Tape::log(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Node n;
    n.op = Op::Log;
    n.a = a.id;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) n.val.data[i] = std::log(ta.data[i]);
    return push(std::move(n));
}

Var Tape::tanh(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Node n;
    n.op = Op::Tanh;
    n.a = a.id;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) n.val.data[i] = std::tanh(ta.data[i]);
    return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Node n;
    n.op = Op::Sigmoid;
    n.a = a.id;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) {
        double x = ta.data[i];
        n.val.data[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                               : std::exp(x) / (1.0 + std::exp(x));
    }
    return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor& ta = nodes_[a.id].val;
    const Tensor& tb = nodes_[b.id].val;
    shape_check(ta.rank() == 2 && tb.rank() == 2 && ta.shape[0] == tb.shape[0], "concat_cols");
    Node n;
    n.op = Op::ConcatCols;
    n.a = a.id;
    n.b = b.id;
    n.start = ta.shape[1];
    n.val = Tensor({ta.shape[0], ta.shape[1] + tb.shape[1]});
    for (std::size_t i = 0; i < ta.shape[0]; ++i) {
        for (std::size_t j = 0; j < ta.shape[1]; ++j) n.val(i, j) = ta(i, j);
        for (std::size_t j = 0; j < tb.shape[1]; ++j) n.val(i, ta.shape[1] + j) = tb(i, j);
    }
    return push(std::move(n));
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t len) {
    const Tensor& ta = nodes_[a.id].val;
    shape_check(ta.rank() == 2 && start + len <= ta.shape[1], "slice_cols");
    Node n;
    n.op = Op::SliceCols;
    n.a = a.id;
    n.start = start;
    n.len = len;
    n.val = Tensor({ta.shape[0], len});
    for (std::size_t i = 0; i < ta.shape[0]; ++i)
        for (std::size_t j = 0; j < len; ++j) n.val(i, j) = ta(i, start + j);
    return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
    const Tensor& ta = nodes_[a.id].val;
    Node n;
    n.op = Op::Scale;
    n.a = a.id;
    n.c = c;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) n.val.data[i] = c * ta.data[i];
    return push(std::move(n));
}

Var Tape::add_const(Var a, double c) {
    const Tensor& ta = nodes_[a.id].val;
    Node n;
    n.op = Op::AddConst;
    n.a = a.id;
    n.c = c;
    n.val = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) n.val.data[i] = ta.data[i] + c;
    return push(std::move(n));
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
    const Tensor& ta = nodes_[a.id].val;
    shape_check(Tensor::numel_of(shape) == ta.numel(), "reshape");
    Node n;
    n.op = Op::Reshape;
    n.a = a.id;
    n.target = ta.shape;
    n.val = Tensor(std::move(shape), ta.data);
    return push(std::move(n));
}

void Tape::check_finite() const {
    for (const Node& n : nodes_)
        if (!n.val.all_finite())
            throw std::runtime_error("tape: non-finite intermediate value");
}

namespace {

void accumulate(Tensor& into, const Tensor& g, const std::vector<std::size_t>& shape) {
    if (into.data.empty()) into = Tensor(shape);
    for (std::size_t i = 0; i < g.numel(); ++i) into.data[i] += g.data[i];
}

}  // namespace

void Tape::backward(Var out, const Tensor* seed) {
    adj_.assign(nodes_.size(), Tensor());
    const Tensor& oval = nodes_[out.id].val;
    adj_[out.id] = seed ? *seed : Tensor::full(oval.shape, 1.0);
    if (seed && !seed->same_shape(oval))
        throw std::invalid_argument("tape: backward seed shape mismatch");

    for (int idx = out.id; idx >= 0; --idx) {
        const Tensor& g = adj_[idx];
        if (g.data.empty()) continue;
        const Node& n = nodes_[idx];
        const Tensor* av = n.a >= 0 ? &nodes_[n.a].val : nullptr;
        const Tensor* bv = n.b >= 0 ? &nodes_[n.b].val : nullptr;
        auto acc = [&](int tgt, auto&& fill) {
            Tensor& dst = adj_[tgt];
            if (dst.data.empty()) dst = Tensor(nodes_[tgt].val.shape);
            fill(dst);
        };
        switch (n.op) {
            case Op::Input:
                break;
            case Op::Add:
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i]; });
                acc(n.b, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i]; });
                break;
            case Op::Sub:
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i]; });
                acc(n.b, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] -= g.data[i]; });
                break;
            case Op::Neg:
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] -= g.data[i]; });
                break;
            case Op::Mul:
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i] * bv->data[i]; });
                acc(n.b, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i] * av->data[i]; });
                break;
            case Op::Div:
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i] / bv->data[i]; });
                acc(n.b, [&](Tensor& d) {
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        d.data[i] -= g.data[i] * av->data[i] / (bv->data[i] * bv->data[i]);
                });
                break;
            case Op::MatMul: {
                // reshape rank-1 operands to their matrix form for the vjp
                Tensor A = *av, B = *bv, G = g;
                bool a_vec = A.rank() == 1, b_vec = B.rank() == 1;
                if (a_vec) A.shape = {1, A.shape[0]};
                if (b_vec) B.shape = {B.shape[0], 1};
                if (G.rank() == 1) G.shape = a_vec ? std::vector<std::size_t>{1, G.shape[0]}
                                                   : std::vector<std::size_t>{G.shape[0], 1};
                if (a_vec && b_vec) G.shape = {1, 1};
                Tensor gA = matmul_values(G, transpose_values(B));
                Tensor gB = matmul_values(transpose_values(A), G);
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] += gA.data[i]; });
                acc(n.b, [&](Tensor& d) { for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] += gB.data[i]; });
                break;
            }
            case Op::Transpose: {
                Tensor gt = transpose_values(g);
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] += gt.data[i]; });
                break;
            }
            case Op::SumAll:
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] += g.data[0]; });
                break;
            case Op::RowSum:
                acc(n.a, [&](Tensor& d) {
                    for (std::size_t i = 0; i < d.shape[0]; ++i)
                        for (std::size_t j = 0; j < d.shape[1]; ++j) d(i, j) += g(i, 0);
                });
                break;
            case Op::ColSum:
                acc(n.a, [&](Tensor& d) {
                    for (std::size_t i = 0; i < d.shape[0]; ++i)
                        for (std::size_t j = 0; j < d.shape[1]; ++j) d(i, j) += g(0, j);
                });
                break;
            case Op::BroadcastRows:
                acc(n.a, [&](Tensor& d) {
                    for (std::size_t i = 0; i < g.shape[0]; ++i)
                        for (std::size_t j = 0; j < g.shape[1]; ++j) d(0, j) += g(i, j);
                });
                break;
            case Op::BroadcastCols:
                acc(n.a, [&](Tensor& d) {
                    for (std::size_t i = 0; i < g.shape[0]; ++i)
                        for (std::size_t j = 0; j < g.shape[1]; ++j) d(i, 0) += g(i, j);
                });
                break;
            case Op::BroadcastScalar:
                acc(n.a, [&](Tensor& d) { for (double v : g.data) d.data[0] += v; });
                break;
            case Op::Exp:
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i] * n.val.data[i]; });
                break;
            case Op::Log:
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i] / av->data[i]; });
                break;
            case Op::Tanh:
                acc(n.a, [&](Tensor& d) {
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        d.data[i] += g.data[i] * (1.0 - n.val.data[i] * n.val.data[i]);
                });
                break;
            case Op::Sigmoid:
                acc(n.a, [&](Tensor& d) {
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        d.data[i] += g.data[i] * n.val.data[i] * (1.0 - n.val.data[i]);
                });
                break;
            case Op::ConcatCols: {
                std::size_t ca = n.start;
                acc(n.a, [&](Tensor& d) {
                    for (std::size_t i = 0; i < d.shape[0]; ++i)
                        for (std::size_t j = 0; j < ca; ++j) d(i, j) += g(i, j);
                });
                acc(n.b, [&](Tensor& d) {
                    for (std::size_t i = 0; i < d.shape[0]; ++i)
                        for (std::size_t j = 0; j < d.shape[1]; ++j) d(i, j) += g(i, ca + j);
                });
                break;
            }
            case Op::SliceCols:
                acc(n.a, [&](Tensor& d) {
                    for (std::size_t i = 0; i < g.shape[0]; ++i)
                        for (std::size_t j = 0; j < g.shape[1]; ++j) d(i, n.start + j) += g(i, j);
                });
                break;
            case Op::Scale:
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += n.c * g.data[i]; });
                break;
            case Op::AddConst:
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i]; });
                break;
            case Op::Reshape: {
                acc(n.a, [&](Tensor& d) { for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i]; });
                break;
            }
        }
    }
}

Tensor Tape::adjoint(Var v) const {
    if (std::size_t(v.id) < adj_.size() && !adj_[v.id].data.empty()) return adj_[v.id];
    return Tensor(nodes_[v.id].val.shape);
}

std::vector<Var> Tape::grad_graph(Var out, std::span<const Var> wrt) {
    const Tensor& oval = nodes_[out.id].val;
    if (oval.numel() != 1)
        throw std::invalid_argument("tape: grad_graph output must be scalar");

    // adjoint Var per node; -1 means identically zero
    std::vector<int> adj(std::size_t(out.id) + 1, -1);
    Var one = input(Tensor::full(oval.shape, 1.0));
    adj[out.id] = one.id;

    for (int idx = out.id; idx >= 0; --idx) {
        if (adj[std::size_t(idx)] < 0) continue;
        // copy fields: pushing nodes may reallocate nodes_
        const Op op = nodes_[idx].op;
        const int ia = nodes_[idx].a;
        const int ib = nodes_[idx].b;
        const double c = nodes_[idx].c;
        const std::size_t start = nodes_[idx].start;
        Var g{this, adj[std::size_t(idx)]};
        Var self{this, idx};
        Var va{this, ia};
        Var vb{this, ib};

        auto add_adj = [&](int target, Var contrib) {
            if (target < 0) return;
            if (adj[std::size_t(target)] < 0)
                adj[std::size_t(target)] = contrib.id;
            else
                adj[std::size_t(target)] = add(Var{this, adj[std::size_t(target)]}, contrib).id;
        };

        switch (op) {
            case Op::Input:
                break;
            case Op::Add:
                add_adj(ia, g);
                add_adj(ib, g);
                break;
            case Op::Sub:
                add_adj(ia, g);
                add_adj(ib, neg(g));
                break;
            case Op::Neg:
                add_adj(ia, neg(g));
                break;
            case Op::Mul:
                add_adj(ia, mul(g, vb));
                add_adj(ib, mul(g, va));
                break;
            case Op::Div:
                add_adj(ia, div(g, vb));
                add_adj(ib, neg(div(mul(g, self), vb)));
                break;
            case Op::MatMul: {
                const Tensor& A = nodes_[ia].val;
                const Tensor& B = nodes_[ib].val;
                if (A.rank() != 2 || B.rank() != 2)
                    throw std::invalid_argument("tape: grad_graph matmul needs rank-2 operands");
                Var G = g;
                add_adj(ia, matmul(G, transpose(vb)));
                add_adj(ib, matmul(transpose(va), G));
                break;
            }
            case Op::Transpose:
                add_adj(ia, transpose(g));
                break;
            case Op::SumAll:
                add_adj(ia, broadcast_scalar(g, nodes_[ia].val.shape));
                break;
            case Op::RowSum:
                add_adj(ia, broadcast_cols(g, nodes_[ia].val.shape[1]));
                break;
            case Op::ColSum:
                add_adj(ia, broadcast_rows(g, nodes_[ia].val.shape[0]));
                break;
            case Op::BroadcastRows:
                add_adj(ia, col_sum(g));
                break;
            case Op::BroadcastCols:
                add_adj(ia, row_sum(g));
                break;
            case Op::BroadcastScalar:
                add_adj(ia, reshape(sum(g), nodes_[ia].val.shape));
                break;
            case Op::Exp:
                add_adj(ia, mul(g, self));
                break;
            case Op::Log:
                add_adj(ia, div(g, va));
                break;
            case Op::Tanh:
                add_adj(ia, mul(g, add_const(neg(mul(self, self)), 1.0)));
                break;
            case Op::Sigmoid:
                add_adj(ia, mul(g, mul(self, add_const(neg(self), 1.0))));
                break;
            case Op::ConcatCols: {
                std::size_t ca = start;
                std::size_t cb = nodes_[idx].val.shape[1] - ca;
                add_adj(ia, slice_cols(g, 0, ca));
                add_adj(ib, slice_cols(g, ca, cb));
                break;
            }
            case Op::SliceCols: {
                // scatter back into a zero matrix of the source shape
                const Tensor& src = nodes_[ia].val;
                Var zeros_left = input(Tensor({src.shape[0], start}));
                Var zeros_right = input(Tensor({src.shape[0], src.shape[1] - start - nodes_[idx].len}));
                Var padded = g;
                if (start > 0) padded = concat_cols(zeros_left, padded);
                if (src.shape[1] > start + nodes_[idx].len) padded = concat_cols(padded, zeros_right);
                add_adj(ia, padded);
                break;
            }
            case Op::Scale:
                add_adj(ia, scale(g, c));
                break;
            case Op::AddConst:
                add_adj(ia, g);
                break;
            case Op::Reshape:
                add_adj(ia, reshape(g, nodes_[ia].val.shape));
                break;
        }
    }

    std::vector<Var> out_grads;
    out_grads.reserve(wrt.size());
    for (Var w : wrt) {
        if (w.id <= out.id && adj[std::size_t(w.id)] >= 0)
            out_grads.push_back(Var{this, adj[std::size_t(w.id)]});
        else
            out_grads.push_back(input(Tensor(nodes_[w.id].val.shape)));
    }
    return out_grads;
}

}  // namespace cebm::ad

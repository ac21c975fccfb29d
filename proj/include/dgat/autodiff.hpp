#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dgat/rng.hpp"
#include "dgat/tensor.hpp"

namespace dgat {

// A named learnable (or tracked) tensor living outside any tape. Gradients
// accumulate across backward() calls until zeroed.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)), trainable(train) {}

    void zero_grad() { grad.fill(0.0); }
};

// Reverse-mode tape. Nodes are appended in topological order; backward()
// sweeps them once in reverse. Each forward pass builds a fresh tape.
class Tape {
public:
    using Var = int;

    Var leaf(Tensor value);
    Var param(Parameter& p);

    const Tensor& val(Var v) const { return nodes_[v].value; }
    Tensor& grad(Var v) { return nodes_[v].grad; }

    // Seeds d(loss)/d(loss)=1 and sweeps the tape once. Gradients of bound
    // parameters are accumulated (call zero_grad between steps).
    void backward(Var loss);

    std::size_t num_nodes() const { return nodes_.size(); }

    // --- primitives ---
    Var matmul(Var a, Var b);                    // [m,k]x[k,n]
    Var matvec(Var a, Var x);                    // [m,k]x[k] -> [m]
    Var add(Var a, Var b);                       // same shape
    Var add_rowvec(Var a, Var b);                // [m,n] + [n]
    Var mul(Var a, Var b);                       // elementwise
    Var scale(Var a, double c);
    Var neg(Var a) { return scale(a, -1.0); }
    Var concat(Var a, Var b, int axis);          // rank-1 (axis 0) or rank-2 (axis 0/1)
    Var slice_vec(Var v, std::size_t start, std::size_t len);
    Var slice_rows(Var m, std::size_t start, std::size_t n_rows);
    Var leaky_relu(Var a, double slope);
    Var relu(Var a);
    Var elu(Var a);
    Var tanh_act(Var a);
    Var log_n(Var a);
    Var exp_n(Var a);
    Var clamp_min(Var a, double lo);
    Var outer_sum(Var u, Var v);                 // [n],[m] -> [n,m], u_i + v_j
    Var softmax_vec(Var v);
    Var softmax_masked_rows(Var e, const Tensor& mask);  // row softmax over mask!=0
    Var conv1d_same(Var x, Var w, Var b);        // x[T,Cin], w[K,Cin,Cout], b[Cout]
    Var batch_norm_1d(Var x, Var gamma, Var beta, Tensor& run_mean, Tensor& run_var,
                      bool train, double momentum, double eps);
    Var dropout(Var x, double rate, bool train, Rng& rng);
    Var mean_all(Var a);
    Var sum_all(Var a);
    Var weighted_sum(Var w, Var rows);           // [n],[n,d] -> [d]
    Var stack_rows(const std::vector<Var>& rows);  // T vectors [d] -> [T,d]
    Var pick(Var v, std::size_t idx);            // scalar element of a vector

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> back;  // null for leaves
        Parameter* bound = nullptr;
    };

    Var push(Tensor value, std::function<void(Tape&)> back = nullptr, Parameter* bound = nullptr);

    std::vector<Node> nodes_;
};

}  // namespace dgat

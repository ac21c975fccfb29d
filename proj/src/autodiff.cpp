#include "dgat/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dgat {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

void check(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("tape: ") + msg);
}

}  // namespace

Tape::Var Tape::push(Tensor value, std::function<void(Tape&)> back, Parameter* bound) {
    Node n;
    n.value = std::move(value);
    n.grad = Tensor::zeros_like(n.value);
    n.back = std::move(back);
    n.bound = bound;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size()) - 1;
}

Tape::Var Tape::leaf(Tensor value) { return push(std::move(value)); }

Tape::Var Tape::param(Parameter& p) { return push(p.value, nullptr, &p); }

void Tape::backward(Var loss) {
    check(nodes_[loss].value.rank() == 0, "backward requires a scalar loss");
    check(std::isfinite(nodes_[loss].value[0]), "backward on non-finite loss");
    for (auto& n : nodes_) n.grad.fill(0.0);  // fresh sweep; only Parameter.grad accumulates
    nodes_[loss].grad[0] = 1.0;
    for (int i = loss; i >= 0; --i) {
        if (nodes_[i].back) nodes_[i].back(*this);
        if (nodes_[i].bound) {
            Parameter& p = *nodes_[i].bound;
            const Tensor& g = nodes_[i].grad;
            for (std::size_t j = 0; j < g.size(); ++j) p.grad[j] += g[j];
        }
    }
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    check(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(), "matmul shape mismatch");
    Tensor C({A.rows(), B.cols()});
    CMapMat ma(A.data(), A.rows(), A.cols());
    CMapMat mb(B.data(), B.rows(), B.cols());
    MapMat mc(C.data(), C.rows(), C.cols());
    mc.noalias() = ma * mb;
    Var out = push(std::move(C));
    nodes_[out].back = [a, b, out](Tape& t) {
        const Tensor& A = t.nodes_[a].value;
        const Tensor& B = t.nodes_[b].value;
        const Tensor& G = t.nodes_[out].grad;
        Tensor& gA = t.nodes_[a].grad;
        Tensor& gB = t.nodes_[b].grad;
        CMapMat ma(A.data(), A.rows(), A.cols());
        CMapMat mb(B.data(), B.rows(), B.cols());
        CMapMat mg(G.data(), G.rows(), G.cols());
        MapMat mga(gA.data(), gA.rows(), gA.cols());
        MapMat mgb(gB.data(), gB.rows(), gB.cols());
        mga.noalias() += mg * mb.transpose();
        mgb.noalias() += ma.transpose() * mg;
    };
    return out;
}

Tape::Var Tape::matvec(Var a, Var x) {
    const Tensor& A = nodes_[a].value;
    const Tensor& X = nodes_[x].value;
    check(A.rank() == 2 && X.rank() == 1 && A.cols() == X.dim(0), "matvec shape mismatch");
    Tensor y({A.rows()});
    CMapMat ma(A.data(), A.rows(), A.cols());
    Eigen::Map<const Eigen::VectorXd> mx(X.data(), X.size());
    Eigen::Map<Eigen::VectorXd> my(y.data(), y.size());
    my.noalias() = ma * mx;
    Var out = push(std::move(y));
    nodes_[out].back = [a, x, out](Tape& t) {
        const Tensor& A = t.nodes_[a].value;
        const Tensor& X = t.nodes_[x].value;
        const Tensor& gy = t.nodes_[out].grad;
        Tensor& gA = t.nodes_[a].grad;
        Tensor& gX = t.nodes_[x].grad;
        CMapMat ma(A.data(), A.rows(), A.cols());
        Eigen::Map<const Eigen::VectorXd> mx(X.data(), X.size());
        Eigen::Map<const Eigen::VectorXd> mgy(gy.data(), gy.size());
        MapMat mgA(gA.data(), gA.rows(), gA.cols());
        Eigen::Map<Eigen::VectorXd> mgX(gX.data(), gX.size());
        mgA.noalias() += mgy * mx.transpose();
        mgX.noalias() += ma.transpose() * mgy;
    };
    return out;
}

Tape::Var Tape::add(Var a, Var b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    check(A.same_shape(B), "add shape mismatch");
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
    Var out = push(std::move(C));
    nodes_[out].back = [a, b, out](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.nodes_[a].grad[i] += g[i];
            t.nodes_[b].grad[i] += g[i];
        }
    };
    return out;
}

Tape::Var Tape::add_rowvec(Var a, Var b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    check(A.rank() == 2 && B.rank() == 1 && A.cols() == B.dim(0), "add_rowvec shape mismatch");
    Tensor C = A;
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) C.at(i, j) += B[j];
    Var out = push(std::move(C));
    nodes_[out].back = [a, b, out](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        Tensor& gA = t.nodes_[a].grad;
        Tensor& gB = t.nodes_[b].grad;
        for (std::size_t i = 0; i < gA.rows(); ++i)
            for (std::size_t j = 0; j < gA.cols(); ++j) {
                gA.at(i, j) += g.at(i, j);
                gB[j] += g.at(i, j);
            }
    };
    return out;
}

Tape::Var Tape::mul(Var a, Var b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    check(A.same_shape(B), "mul shape mismatch");
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
    Var out = push(std::move(C));
    nodes_[out].back = [a, b, out](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        const Tensor& A = t.nodes_[a].value;
        const Tensor& B = t.nodes_[b].value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.nodes_[a].grad[i] += g[i] * B[i];
            t.nodes_[b].grad[i] += g[i] * A[i];
        }
    };
    return out;
}

Tape::Var Tape::scale(Var a, double c) {
    Tensor C = nodes_[a].value;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] *= c;
    Var out = push(std::move(C));
    nodes_[out].back = [a, c, out](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[a].grad[i] += c * g[i];
    };
    return out;
}

Tape::Var Tape::concat(Var a, Var b, int axis) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    check(A.rank() == B.rank(), "concat rank mismatch");
    Tensor C;
    if (A.rank() == 1) {
        check(axis == 0, "concat: rank-1 needs axis 0");
        C = Tensor({A.size() + B.size()});
        std::copy(A.data(), A.data() + A.size(), C.data());
        std::copy(B.data(), B.data() + B.size(), C.data() + A.size());
    } else if (A.rank() == 2 && axis == 0) {
        check(A.cols() == B.cols(), "concat axis0 col mismatch");
        C = Tensor({A.rows() + B.rows(), A.cols()});
        std::copy(A.data(), A.data() + A.size(), C.data());
        std::copy(B.data(), B.data() + B.size(), C.data() + A.size());
    } else if (A.rank() == 2 && axis == 1) {
        check(A.rows() == B.rows(), "concat axis1 row mismatch");
        C = Tensor({A.rows(), A.cols() + B.cols()});
        for (std::size_t i = 0; i < A.rows(); ++i) {
            for (std::size_t j = 0; j < A.cols(); ++j) C.at(i, j) = A.at(i, j);
            for (std::size_t j = 0; j < B.cols(); ++j) C.at(i, A.cols() + j) = B.at(i, j);
        }
    } else {
        check(false, "concat: unsupported rank/axis");
    }
    Var out = push(std::move(C));
    nodes_[out].back = [a, b, axis, out](Tape& t) {
        const Tensor& A = t.nodes_[a].value;
        const Tensor& B = t.nodes_[b].value;
        const Tensor& g = t.nodes_[out].grad;
        Tensor& gA = t.nodes_[a].grad;
        Tensor& gB = t.nodes_[b].grad;
        if (A.rank() == 1 || axis == 0) {
            for (std::size_t i = 0; i < A.size(); ++i) gA[i] += g[i];
            for (std::size_t i = 0; i < B.size(); ++i) gB[i] += g[A.size() + i];
        } else {
            for (std::size_t i = 0; i < A.rows(); ++i) {
                for (std::size_t j = 0; j < A.cols(); ++j) gA.at(i, j) += g.at(i, j);
                for (std::size_t j = 0; j < B.cols(); ++j) gB.at(i, j) += g.at(i, A.cols() + j);
            }
        }
    };
    return out;
}

Tape::Var Tape::slice_vec(Var v, std::size_t start, std::size_t len) {
    const Tensor& V = nodes_[v].value;
    check(V.rank() == 1 && start + len <= V.size(), "slice_vec out of range");
    Tensor C({len});
    std::copy(V.data() + start, V.data() + start + len, C.data());
    Var out = push(std::move(C));
    nodes_[out].back = [v, start, len, out](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < len; ++i) t.nodes_[v].grad[start + i] += g[i];
    };
    return out;
}

Tape::Var Tape::slice_rows(Var m, std::size_t start, std::size_t n_rows) {
    const Tensor& M = nodes_[m].value;
    check(M.rank() == 2 && start + n_rows <= M.rows(), "slice_rows out of range");
    std::size_t cols = M.cols();
    Tensor C({n_rows, cols});
    std::copy(M.data() + start * cols, M.data() + (start + n_rows) * cols, C.data());
    Var out = push(std::move(C));
    nodes_[out].back = [m, start, n_rows, cols, out](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        double* dst = t.nodes_[m].grad.data() + start * cols;
        for (std::size_t i = 0; i < n_rows * cols; ++i) dst[i] += g[i];
    };
    return out;
}

Tape::Var Tape::leaky_relu(Var a, double slope) {
    Tensor C = nodes_[a].value;
    for (std::size_t i = 0; i < C.size(); ++i)
        if (C[i] < 0.0) C[i] *= slope;
    Var out = push(std::move(C));
    nodes_[out].back = [a, slope, out](Tape& t) {
        const Tensor& x = t.nodes_[a].value;
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[a].grad[i] += g[i] * (x[i] >= 0.0 ? 1.0 : slope);
    };
    return out;
}

Tape::Var Tape::relu(Var a) { return leaky_relu(a, 0.0); }

Tape::Var Tape::elu(Var a) {
    Tensor C = nodes_[a].value;
    for (std::size_t i = 0; i < C.size(); ++i)
        if (C[i] < 0.0) C[i] = std::expm1(C[i]);
    Var out = push(std::move(C));
    nodes_[out].back = [a, out](Tape& t) {
        const Tensor& x = t.nodes_[a].value;
        const Tensor& y = t.nodes_[out].value;
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[a].grad[i] += g[i] * (x[i] >= 0.0 ? 1.0 : y[i] + 1.0);
    };
    return out;
}

Tape::Var Tape::tanh_act(Var a) {
    Tensor C = nodes_[a].value;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = std::tanh(C[i]);
    Var out = push(std::move(C));
    nodes_[out].back = [a, out](Tape& t) {
        const Tensor& y = t.nodes_[out].value;
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[a].grad[i] += g[i] * (1.0 - y[i] * y[i]);
    };
    return out;
}

Tape::Var Tape::log_n(Var a) {
    Tensor C = nodes_[a].value;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = std::log(C[i]);
    Var out = push(std::move(C));
    nodes_[out].back = [a, out](Tape& t) {
        const Tensor& x = t.nodes_[a].value;
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[a].grad[i] += g[i] / x[i];
    };
    return out;
}

Tape::Var Tape::exp_n(Var a) {
    Tensor C = nodes_[a].value;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = std::exp(C[i]);
    Var out = push(std::move(C));
    nodes_[out].back = [a, out](Tape& t) {
        const Tensor& y = t.nodes_[out].value;
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[a].grad[i] += g[i] * y[i];
    };
    return out;
}

Tape::Var Tape::clamp_min(Var a, double lo) {
    Tensor C = nodes_[a].value;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = std::max(C[i], lo);
    Var out = push(std::move(C));
    nodes_[out].back = [a, lo, out](Tape& t) {
        const Tensor& x = t.nodes_[a].value;
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > lo) t.nodes_[a].grad[i] += g[i];
    };
    return out;
}

Tape::Var Tape::outer_sum(Var u, Var v) {
    const Tensor& U = nodes_[u].value;
    const Tensor& V = nodes_[v].value;
    check(U.rank() == 1 && V.rank() == 1, "outer_sum needs vectors");
    Tensor C({U.size(), V.size()});
    for (std::size_t i = 0; i < U.size(); ++i)
        for (std::size_t j = 0; j < V.size(); ++j) C.at(i, j) = U[i] + V[j];
    Var out = push(std::move(C));
    nodes_[out].back = [u, v, out](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        Tensor& gU = t.nodes_[u].grad;
        Tensor& gV = t.nodes_[v].grad;
        for (std::size_t i = 0; i < gU.size(); ++i)
            for (std::size_t j = 0; j < gV.size(); ++j) {
                gU[i] += g.at(i, j);
                gV[j] += g.at(i, j);
            }
    };
    return out;
}

Tape::Var Tape::softmax_vec(Var v) {
    const Tensor& V = nodes_[v].value;
    check(V.rank() == 1 && V.size() > 0, "softmax_vec needs a non-empty vector");
    Tensor C = V;
    double m = *std::max_element(C.data(), C.data() + C.size());
    double z = 0.0;
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] = std::exp(C[i] - m);
        z += C[i];
    }
    for (std::size_t i = 0; i < C.size(); ++i) C[i] /= z;
    Var out = push(std::move(C));
    nodes_[out].back = [v, out](Tape& t) {
        const Tensor& y = t.nodes_[out].value;
        const Tensor& g = t.nodes_[out].grad;
        double dot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
        for (std::size_t i = 0; i < y.size(); ++i)
            t.nodes_[v].grad[i] += y[i] * (g[i] - dot);
    };
    return out;
}

Tape::Var Tape::softmax_masked_rows(Var e, const Tensor& mask) {
    const Tensor& E = nodes_[e].value;
    check(E.rank() == 2 && mask.same_shape(E), "softmax_masked_rows shape mismatch");
    std::size_t n = E.rows(), m = E.cols();
    Tensor C({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -HUGE_VAL;
        for (std::size_t j = 0; j < m; ++j)
            if (mask.at(i, j) != 0.0) mx = std::max(mx, E.at(i, j));
        if (mx == -HUGE_VAL) throw std::invalid_argument("softmax over an all-masked row");
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (mask.at(i, j) != 0.0) {
                C.at(i, j) = std::exp(E.at(i, j) - mx);
                z += C.at(i, j);
            }
        }
        for (std::size_t j = 0; j < m; ++j)
            if (mask.at(i, j) != 0.0) C.at(i, j) /= z;
    }
    Var out = push(std::move(C));
    Tensor mcopy = mask;
    nodes_[out].back = [e, out, mcopy](Tape& t) {
        const Tensor& y = t.nodes_[out].value;
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j)
                if (mcopy.at(i, j) != 0.0) dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j)
                if (mcopy.at(i, j) != 0.0)
                    t.nodes_[e].grad.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    };
    return out;
}

Tape::Var Tape::conv1d_same(Var x, Var w, Var b) {
    const Tensor& X = nodes_[x].value;
    const Tensor& W = nodes_[w].value;
    const Tensor& B = nodes_[b].value;
    check(X.rank() == 2 && W.rank() == 3 && B.rank() == 1, "conv1d_same rank mismatch");
    std::size_t T = X.rows(), cin = X.cols();
    std::size_t K = W.dim(0), cout = W.dim(2);
    check(W.dim(1) == cin && B.dim(0) == cout, "conv1d_same channel mismatch");
    std::size_t P = K / 2;
    Tensor Y({T, cout});
    for (std::size_t t0 = 0; t0 < T; ++t0)
        for (std::size_t o = 0; o < cout; ++o) {
            double acc = B[o];
            for (std::size_t k = 0; k < K; ++k) {
                std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t0 + k) - static_cast<std::ptrdiff_t>(P);
                if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T)) continue;
                for (std::size_t c = 0; c < cin; ++c)
                    acc += W.at(k, c, o) * X.at(static_cast<std::size_t>(ti), c);
            }
            Y.at(t0, o) = acc;
        }
    Var out = push(std::move(Y));
    nodes_[out].back = [x, w, b, out](Tape& t) {
        const Tensor& X = t.nodes_[x].value;
        const Tensor& W = t.nodes_[w].value;
        const Tensor& g = t.nodes_[out].grad;
        Tensor& gX = t.nodes_[x].grad;
        Tensor& gW = t.nodes_[w].grad;
        Tensor& gB = t.nodes_[b].grad;
        std::size_t T = X.rows(), cin = X.cols();
        std::size_t K = W.dim(0), cout = W.dim(2), P = K / 2;
        for (std::size_t t0 = 0; t0 < T; ++t0)
            for (std::size_t o = 0; o < cout; ++o) {
                double go = g.at(t0, o);
                gB[o] += go;
                for (std::size_t k = 0; k < K; ++k) {
                    std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t0 + k) - static_cast<std::ptrdiff_t>(P);
                    if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T)) continue;
                    for (std::size_t c = 0; c < cin; ++c) {
                        gW.at(k, c, o) += X.at(static_cast<std::size_t>(ti), c) * go;
                        gX.at(static_cast<std::size_t>(ti), c) += W.at(k, c, o) * go;
                    }
                }
            }
    };
    return out;
}

Tape::Var Tape::batch_norm_1d(Var x, Var gamma, Var beta, Tensor& run_mean, Tensor& run_var,
                              bool train, double momentum, double eps) {
    const Tensor& X = nodes_[x].value;
    const Tensor& G = nodes_[gamma].value;
    const Tensor& Bt = nodes_[beta].value;
    check(X.rank() == 2, "batch_norm_1d needs rank-2 input");
    std::size_t T = X.rows(), C = X.cols();
    check(G.size() == C && Bt.size() == C && run_mean.size() == C && run_var.size() == C,
          "batch_norm_1d channel mismatch");
    Tensor mean({C}), var({C});
    if (train) {
        for (std::size_t c = 0; c < C; ++c) {
            double mu = 0.0;
            for (std::size_t t0 = 0; t0 < T; ++t0) mu += X.at(t0, c);
            mu /= static_cast<double>(T);
            double v2 = 0.0;
            for (std::size_t t0 = 0; t0 < T; ++t0) {
                double d = X.at(t0, c) - mu;
                v2 += d * d;
            }
            mean[c] = mu;
            var[c] = v2 / static_cast<double>(T);  // biased, used for normalization
            double vu = (T > 1) ? v2 / static_cast<double>(T - 1) : var[c];
            run_mean[c] = (1.0 - momentum) * run_mean[c] + momentum * mu;
            run_var[c] = (1.0 - momentum) * run_var[c] + momentum * vu;
        }
    } else {
        mean = run_mean;
        var = run_var;
    }
    Tensor Y({T, C});
    Tensor xhat({T, C});
    for (std::size_t c = 0; c < C; ++c) {
        double ivar = 1.0 / std::sqrt(var[c] + eps);
        for (std::size_t t0 = 0; t0 < T; ++t0) {
            double xh = (X.at(t0, c) - mean[c]) * ivar;
            xhat.at(t0, c) = xh;
            Y.at(t0, c) = G[c] * xh + Bt[c];
        }
    }
    Var out = push(std::move(Y));
    nodes_[out].back = [x, gamma, beta, out, train, xhat, var, eps](Tape& t) {
        const Tensor& G = t.nodes_[gamma].value;
        const Tensor& g = t.nodes_[out].grad;
        Tensor& gX = t.nodes_[x].grad;
        Tensor& gG = t.nodes_[gamma].grad;
        Tensor& gB = t.nodes_[beta].grad;
        std::size_t T = g.rows(), C = g.cols();
        for (std::size_t c = 0; c < C; ++c) {
            double ivar = 1.0 / std::sqrt(var[c] + eps);
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t t0 = 0; t0 < T; ++t0) {
                sum_dy += g.at(t0, c);
                sum_dy_xhat += g.at(t0, c) * xhat.at(t0, c);
            }
            gB[c] += sum_dy;
            gG[c] += sum_dy_xhat;
            double n = static_cast<double>(T);
            for (std::size_t t0 = 0; t0 < T; ++t0) {
                double dxhat = g.at(t0, c) * G[c];
                if (train) {
                    // batch statistics participate in the gradient
                    double dy_xhat_term = xhat.at(t0, c) * sum_dy_xhat;
                    gX.at(t0, c) += (G[c] * ivar / n) * (n * g.at(t0, c) - sum_dy - dy_xhat_term);
                } else {
                    gX.at(t0, c) += dxhat * ivar;
                }
            }
        }
    };
    return out;
}

Tape::Var Tape::dropout(Var x, double rate, bool train, Rng& rng) {
    check(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1)");
    const Tensor& X = nodes_[x].value;
    if (!train || rate == 0.0) {
        Tensor C = X;
        Var out = push(std::move(C));
        nodes_[out].back = [x, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[x].grad[i] += g[i];
        };
        return out;
    }
    double keep = 1.0 - rate;
    Tensor maskv = Tensor::zeros_like(X);
    Tensor C = X;
    for (std::size_t i = 0; i < C.size(); ++i) {
        double m = (rng.uniform() < keep) ? 1.0 / keep : 0.0;  // inverted scaling
        maskv[i] = m;
        C[i] *= m;
    }
    Var out = push(std::move(C));
    nodes_[out].back = [x, out, maskv](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[x].grad[i] += g[i] * maskv[i];
    };
    return out;
}

Tape::Var Tape::mean_all(Var a) {
    const Tensor& A = nodes_[a].value;
    check(A.size() > 0, "mean_all of empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
    std::size_t n = A.size();
    Var out = push(Tensor::scalar(s / static_cast<double>(n)));
    nodes_[out].back = [a, n, out](Tape& t) {
        double g = t.nodes_[out].grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) t.nodes_[a].grad[i] += g;
    };
    return out;
}

Tape::Var Tape::sum_all(Var a) {
    const Tensor& A = nodes_[a].value;
    double s = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
    Var out = push(Tensor::scalar(s));
    nodes_[out].back = [a, out](Tape& t) {
        double g = t.nodes_[out].grad[0];
        for (std::size_t i = 0; i < t.nodes_[a].grad.size(); ++i) t.nodes_[a].grad[i] += g;
    };
    return out;
}

Tape::Var Tape::weighted_sum(Var w, Var rows) {
    const Tensor& W = nodes_[w].value;
    const Tensor& R = nodes_[rows].value;
    check(W.rank() == 1 && R.rank() == 2 && W.size() == R.rows(), "weighted_sum shape mismatch");
    std::size_t n = R.rows(), d = R.cols();
    Tensor y({d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) y[j] += W[i] * R.at(i, j);
    Var out = push(std::move(y));
    nodes_[out].back = [w, rows, out](Tape& t) {
        const Tensor& W = t.nodes_[w].value;
        const Tensor& R = t.nodes_[rows].value;
        const Tensor& g = t.nodes_[out].grad;
        Tensor& gW = t.nodes_[w].grad;
        Tensor& gR = t.nodes_[rows].grad;
        for (std::size_t i = 0; i < R.rows(); ++i)
            for (std::size_t j = 0; j < R.cols(); ++j) {
                gW[i] += g[j] * R.at(i, j);
                gR.at(i, j) += W[i] * g[j];
            }
    };
    return out;
}

Tape::Var Tape::stack_rows(const std::vector<Var>& rows) {
    check(!rows.empty(), "stack_rows of empty list");
    std::size_t d = nodes_[rows[0]].value.size();
    for (Var r : rows)
        check(nodes_[r].value.rank() == 1 && nodes_[r].value.size() == d, "stack_rows dim mismatch");
    Tensor C({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(nodes_[rows[i]].value.data(), nodes_[rows[i]].value.data() + d, C.data() + i * d);
    Var out = push(std::move(C));
    std::vector<Var> rcopy = rows;
    nodes_[out].back = [rcopy, d, out](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        for (std::size_t i = 0; i < rcopy.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) t.nodes_[rcopy[i]].grad[j] += g.at(i, j);
    };
    return out;
}

Tape::Var Tape::pick(Var v, std::size_t idx) {
    const Tensor& V = nodes_[v].value;
    check(V.rank() == 1 && idx < V.size(), "pick out of range");
    Var out = push(Tensor::scalar(V[idx]));
    nodes_[out].back = [v, idx, out](Tape& t) {
        t.nodes_[v].grad[idx] += t.nodes_[out].grad[0];
    };
    return out;
}

}  // namespace dgat

#include "dgat/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dgat/model.hpp"
#include "dgat/params.hpp"
#include "dgat/rng.hpp"

namespace dgat {

double gradcheck_max_rel_err(const std::vector<Parameter*>& params,
                             const std::function<Tape::Var(Tape&)>& build, double h) {
    for (auto* p : params) p->zero_grad();
    {
        Tape tape;
        Tape::Var loss = build(tape);
        tape.backward(loss);
    }
    std::vector<Tensor> analytic;
    for (auto* p : params) analytic.push_back(p->grad);

    auto eval = [&]() {
        Tape tape;
        return tape.val(build(tape))[0];
    };

    double max_err = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            double orig = p.value[i];
            p.value[i] = orig + h;
            double fp = eval();
            p.value[i] = orig - h;
            double fm = eval();
            p.value[i] = orig;
            double fd = (fp - fm) / (2.0 * h);
            double an = analytic[pi][i];
            double err = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-4});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

namespace {

// Random tensor with entries kept away from activation kinks.
Tensor rand_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -2.0, double hi = 2.0,
                   double kink_gap = 0.05) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v;
        do {
            v = rng.uniform(lo, hi);
        } while (std::fabs(v) < kink_gap);
        t[i] = v;
    }
    return t;
}

Tensor rand_positive(Rng& rng, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.1, 3.0);
    return t;
}

// Symmetric binary mask with self loops, each off-diagonal pair kept w.p. 1/2.
Tensor rand_adjacency(Rng& rng, std::size_t n) {
    Tensor A({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        A.at(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = rng.uniform() < 0.5 ? 1.0 : 0.0;
            A.at(i, j) = v;
            A.at(j, i) = v;
        }
    }
    return A;
}

// loss = sum(c .* out): fixed random weights make the check sensitive to
// direction, not just the (often constant) plain sum.
Tape::Var weighted_loss(Tape& tape, Tape::Var out, const Tensor& c) {
    return tape.sum_all(tape.mul(out, tape.leaf(c)));
}

struct Check {
    std::string name;
    std::function<double(std::uint64_t)> run;  // seed -> max rel err
};

double check_params(std::vector<Parameter> owned,
                    const std::function<Tape::Var(Tape&, std::vector<Parameter>&)>& build) {
    std::vector<Parameter*> ptrs;
    for (auto& p : owned) ptrs.push_back(&p);
    return gradcheck_max_rel_err(ptrs, [&](Tape& t) { return build(t, owned); });
}

std::vector<Check> primitive_checks() {
    std::vector<Check> checks;
    auto add = [&](std::string name, std::function<double(std::uint64_t)> run) {
        checks.push_back({std::move(name), std::move(run)});
    };

    add("matmul", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {3, 4});
        std::vector<Parameter> ps;
        ps.emplace_back("A", rand_tensor(rng, {3, 5}));
        ps.emplace_back("B", rand_tensor(rng, {5, 4}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.matmul(t.param(p[0]), t.param(p[1])), c);
        });
    });
    add("matvec", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {4});
        std::vector<Parameter> ps;
        ps.emplace_back("A", rand_tensor(rng, {4, 6}));
        ps.emplace_back("x", rand_tensor(rng, {6}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.matvec(t.param(p[0]), t.param(p[1])), c);
        });
    });
    add("add", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {3, 4});
        std::vector<Parameter> ps;
        ps.emplace_back("A", rand_tensor(rng, {3, 4}));
        ps.emplace_back("B", rand_tensor(rng, {3, 4}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.add(t.param(p[0]), t.param(p[1])), c);
        });
    });
    add("add_rowvec", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {3, 4});
        std::vector<Parameter> ps;
        ps.emplace_back("A", rand_tensor(rng, {3, 4}));
        ps.emplace_back("b", rand_tensor(rng, {4}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.add_rowvec(t.param(p[0]), t.param(p[1])), c);
        });
    });
    add("mul", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {5});
        std::vector<Parameter> ps;
        ps.emplace_back("A", rand_tensor(rng, {5}));
        ps.emplace_back("B", rand_tensor(rng, {5}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.mul(t.param(p[0]), t.param(p[1])), c);
        });
    });
    add("scale", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {5});
        std::vector<Parameter> ps;
        ps.emplace_back("A", rand_tensor(rng, {5}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.scale(t.param(p[0]), -1.7), c);
        });
    });
    add("concat_axis0", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {5, 3});
        std::vector<Parameter> ps;
        ps.emplace_back("A", rand_tensor(rng, {2, 3}));
        ps.emplace_back("B", rand_tensor(rng, {3, 3}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.concat(t.param(p[0]), t.param(p[1]), 0), c);
        });
    });
    add("concat_axis1", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {3, 5});
        std::vector<Parameter> ps;
        ps.emplace_back("A", rand_tensor(rng, {3, 2}));
        ps.emplace_back("B", rand_tensor(rng, {3, 3}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.concat(t.param(p[0]), t.param(p[1]), 1), c);
        });
    });
    add("slice_vec", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {3});
        std::vector<Parameter> ps;
        ps.emplace_back("v", rand_tensor(rng, {7}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.slice_vec(t.param(p[0]), 2, 3), c);
        });
    });
    add("slice_rows", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {2, 4});
        std::vector<Parameter> ps;
        ps.emplace_back("m", rand_tensor(rng, {5, 4}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.slice_rows(t.param(p[0]), 1, 2), c);
        });
    });
    add("leaky_relu", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {8});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {8}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.leaky_relu(t.param(p[0]), 0.2), c);
        });
    });
    add("relu", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {8});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {8}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.relu(t.param(p[0])), c);
        });
    });
    add("elu", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {8});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {8}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.elu(t.param(p[0])), c);
        });
    });
    add("tanh", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {8});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {8}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.tanh_act(t.param(p[0])), c);
        });
    });
    add("log", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {6});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_positive(rng, {6}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.log_n(t.param(p[0])), c);
        });
    });
    add("exp", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {6});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {6}, -1.5, 1.5));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.exp_n(t.param(p[0])), c);
        });
    });
    add("clamp_min", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {8});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {8}));  // kink-gap keeps x away from 0
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.clamp_min(t.param(p[0]), 0.0), c);
        });
    });
    add("outer_sum", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {4, 5});
        std::vector<Parameter> ps;
        ps.emplace_back("u", rand_tensor(rng, {4}));
        ps.emplace_back("v", rand_tensor(rng, {5}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.outer_sum(t.param(p[0]), t.param(p[1])), c);
        });
    });
    add("softmax_vec", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {6});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {6}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.softmax_vec(t.param(p[0])), c);
        });
    });
    add("softmax_masked_rows", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {5, 5});
        Tensor mask = rand_adjacency(rng, 5);
        std::vector<Parameter> ps;
        ps.emplace_back("e", rand_tensor(rng, {5, 5}));
        return check_params(std::move(ps), [c, mask](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.softmax_masked_rows(t.param(p[0]), mask), c);
        });
    });
    add("conv1d_same", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {6, 4});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {6, 3}));
        ps.emplace_back("w", rand_tensor(rng, {3, 3, 4}));
        ps.emplace_back("b", rand_tensor(rng, {4}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(
                t, t.conv1d_same(t.param(p[0]), t.param(p[1]), t.param(p[2])), c);
        });
    });
    add("batch_norm_train", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {6, 3});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {6, 3}));
        ps.emplace_back("gamma", rand_positive(rng, {3}));
        ps.emplace_back("beta", rand_tensor(rng, {3}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            Tensor rm({3}), rv({3});
            rv.fill(1.0);
            return weighted_loss(t,
                                 t.batch_norm_1d(t.param(p[0]), t.param(p[1]), t.param(p[2]), rm,
                                                 rv, true, 0.1, 1e-5),
                                 c);
        });
    });
    add("batch_norm_eval", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {6, 3});
        Tensor rm = rand_tensor(rng, {3});
        Tensor rv = rand_positive(rng, {3});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {6, 3}));
        ps.emplace_back("gamma", rand_positive(rng, {3}));
        ps.emplace_back("beta", rand_tensor(rng, {3}));
        return check_params(std::move(ps), [c, rm, rv](Tape& t, std::vector<Parameter>& p) {
            Tensor rmc = rm, rvc = rv;
            return weighted_loss(t,
                                 t.batch_norm_1d(t.param(p[0]), t.param(p[1]), t.param(p[2]), rmc,
                                                 rvc, false, 0.1, 1e-5),
                                 c);
        });
    });
    add("dropout", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {10});
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {10}));
        return check_params(std::move(ps), [c, seed](Tape& t, std::vector<Parameter>& p) {
            Rng drng(mix_seed(seed, 42));  // same mask on every rebuild
            return weighted_loss(t, t.dropout(t.param(p[0]), 0.4, true, drng), c);
        });
    });
    add("mean", [](std::uint64_t seed) {
        Rng rng(seed);
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {3, 4}));
        return check_params(std::move(ps), [](Tape& t, std::vector<Parameter>& p) {
            return t.mean_all(t.param(p[0]));
        });
    });
    add("sum", [](std::uint64_t seed) {
        Rng rng(seed);
        std::vector<Parameter> ps;
        ps.emplace_back("x", rand_tensor(rng, {3, 4}));
        return check_params(std::move(ps), [](Tape& t, std::vector<Parameter>& p) {
            return t.sum_all(t.param(p[0]));
        });
    });
    add("weighted_sum", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {6});
        std::vector<Parameter> ps;
        ps.emplace_back("w", rand_tensor(rng, {4}));
        ps.emplace_back("rows", rand_tensor(rng, {4, 6}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(t, t.weighted_sum(t.param(p[0]), t.param(p[1])), c);
        });
    });
    add("stack_rows", [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = rand_tensor(rng, {3, 4});
        std::vector<Parameter> ps;
        ps.emplace_back("r0", rand_tensor(rng, {4}));
        ps.emplace_back("r1", rand_tensor(rng, {4}));
        ps.emplace_back("r2", rand_tensor(rng, {4}));
        return check_params(std::move(ps), [c](Tape& t, std::vector<Parameter>& p) {
            return weighted_loss(
                t, t.stack_rows({t.param(p[0]), t.param(p[1]), t.param(p[2])}), c);
        });
    });
    add("pick", [](std::uint64_t seed) {
        Rng rng(seed);
        std::vector<Parameter> ps;
        ps.emplace_back("v", rand_tensor(rng, {5}));
        return check_params(std::move(ps), [](Tape& t, std::vector<Parameter>& p) {
            return t.pick(t.param(p[0]), 2);
        });
    });
    return checks;
}

// Zero-initialized biases can leave ReLU preactivations sitting exactly on
// the kink (e.g. when dropout zeroes every input of a unit), where central
// differences straddle the non-differentiable point. Nudging every trainable
// parameter off its initial value keeps the check on smooth ground.
void jitter_params(Model& model, Rng& rng) {
    for (auto* p : model.params().all()) {
        if (!p->trainable) continue;
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += rng.uniform(-0.3, 0.3);
    }
}

ModelConfig tiny_model_config(std::size_t n_rois) {
    ModelConfig cfg;
    cfg.n_rois = n_rois;
    cfg.embed_dim = 5;
    cfg.gat_dims = {4, 4, 6};
    cfg.pool_hidden = 3;
    cfg.conv_filters = 6;
    cfg.conv_kernel = 3;
    cfg.attn_hidden = 4;
    cfg.cls_hidden = {5, 4};
    return cfg;
}

std::vector<Check> composite_checks() {
    std::vector<Check> checks;
    auto add = [&](std::string name, std::function<double(std::uint64_t)> run) {
        checks.push_back({std::move(name), std::move(run)});
    };

    add("gat_layer", [](std::uint64_t seed) {
        Rng rng(seed);
        Model model(tiny_model_config(4), seed);
        jitter_params(model, rng);
        Tensor A = rand_adjacency(rng, 4);
        Tensor c = rand_tensor(rng, {4, 4});
        Parameter h("h", rand_tensor(rng, {4, 5}));
        std::vector<Parameter*> ps{&h, &model.params().get("gat0.h0.W"),
                                   &model.params().get("gat0.h0.a")};
        return gradcheck_max_rel_err(ps, [&](Tape& t) {
            auto [out, alpha] = model.gat_layer(t, t.param(h), A, 0);
            return weighted_loss(t, out, c);
        });
    });
    add("attention_pool", [](std::uint64_t seed) {
        Rng rng(seed);
        Model model(tiny_model_config(4), seed);
        jitter_params(model, rng);
        Tensor c = rand_tensor(rng, {6});
        Parameter h("h", rand_tensor(rng, {4, 6}));
        std::vector<Parameter*> ps{&h, &model.params().get("pool.W1"),
                                   &model.params().get("pool.b1"),
                                   &model.params().get("pool.w2")};
        return gradcheck_max_rel_err(ps, [&](Tape& t) {
            auto [z, w] = model.attention_pool(t, t.param(h));
            return weighted_loss(t, z, c);
        });
    });
    add("conv_bn_relu", [](std::uint64_t seed) {
        Rng rng(seed);
        Model model(tiny_model_config(4), seed);
        jitter_params(model, rng);
        Tensor c = rand_tensor(rng, {5, 6});
        Parameter Z("Z", rand_tensor(rng, {5, 6}));
        std::vector<Parameter*> ps{&Z, &model.params().get("conv.W"),
                                   &model.params().get("conv.b"),
                                   &model.params().get("bn.gamma"),
                                   &model.params().get("bn.beta")};
        return gradcheck_max_rel_err(ps, [&](Tape& t) {
            return weighted_loss(t, model.temporal_conv(t, t.param(Z), true), c);
        });
    });
    add("temporal_attention", [](std::uint64_t seed) {
        Rng rng(seed);
        Model model(tiny_model_config(4), seed);
        jitter_params(model, rng);
        Tensor c = rand_tensor(rng, {6});
        Parameter u("u", rand_tensor(rng, {5, 6}));
        std::vector<Parameter*> ps{&u, &model.params().get("tattn.W1"),
                                   &model.params().get("tattn.b1"),
                                   &model.params().get("tattn.w2")};
        return gradcheck_max_rel_err(ps, [&](Tape& t) {
            auto [v, beta] = model.temporal_attend(t, t.param(u));
            return weighted_loss(t, v, c);
        });
    });
    add("classifier", [](std::uint64_t seed) {
        Rng rng(seed);
        Model model(tiny_model_config(4), seed);
        jitter_params(model, rng);
        Tensor c = rand_tensor(rng, {2});
        Parameter v("v", rand_tensor(rng, {6}));
        std::vector<Parameter*> ps{&v,
                                   &model.params().get("cls.W1"),
                                   &model.params().get("cls.b1"),
                                   &model.params().get("cls.W2"),
                                   &model.params().get("cls.b2"),
                                   &model.params().get("cls.W3"),
                                   &model.params().get("cls.b3")};
        return gradcheck_max_rel_err(ps, [&, seed](Tape& t) {
            Rng drng(mix_seed(seed, 99));
            return weighted_loss(t, model.classify(t, t.param(v), true, &drng), c);
        });
    });
    add("batch_forward", [](std::uint64_t seed) {
        Rng rng(seed);
        ModelConfig cfg = tiny_model_config(4);
        cfg.bn_scope = "batch";
        Model model(cfg, seed);
        jitter_params(model, rng);
        std::vector<DynamicGraphSequence> seqs(2);
        for (auto& seq : seqs) {
            seq.subject_id = "gc";
            for (int w = 0; w < 3; ++w)
                seq.windows.push_back(WindowGraph{Tensor({4, 4}), rand_adjacency(rng, 4)});
        }
        std::vector<const DynamicGraphSequence*> batch{&seqs[0], &seqs[1]};
        std::vector<Parameter*> ps;
        for (auto* p : model.params().all())
            if (p->trainable) ps.push_back(p);
        Tensor c0 = rand_tensor(rng, {2}), c1 = rand_tensor(rng, {2});
        return gradcheck_max_rel_err(ps, [&, seed](Tape& t) {
            Rng drng(mix_seed(seed, 13));
            auto probs = model.forward_batch(t, batch, true, &drng);
            return t.add(weighted_loss(t, probs[0], c0), weighted_loss(t, probs[1], c1));
        });
    });
    add("full_forward", [](std::uint64_t seed) {
        Rng rng(seed);
        Model model(tiny_model_config(4), seed);
        jitter_params(model, rng);
        DynamicGraphSequence seq;
        seq.subject_id = "gc";
        for (int w = 0; w < 3; ++w) {
            Tensor F({4, 4});  // only A matters for the forward pass
            seq.windows.push_back(WindowGraph{F, rand_adjacency(rng, 4)});
        }
        std::vector<Parameter*> ps;
        for (auto* p : model.params().all())
            if (p->trainable) ps.push_back(p);
        Tensor c = rand_tensor(rng, {2});
        return gradcheck_max_rel_err(ps, [&, seed](Tape& t) {
            Rng drng(mix_seed(seed, 7));
            return weighted_loss(t, model.forward(t, seq, true, &drng), c);
        });
    });
    return checks;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t points) {
    std::vector<GradCheckResult> results;
    auto run_all = [&](std::vector<Check> checks) {
        for (auto& check : checks) {
            double worst = 0.0;
            for (std::size_t p = 0; p < points; ++p)
                worst = std::max(worst, check.run(mix_seed(seed, p * 1000003 + 17)));
            results.push_back({check.name, worst});
        }
    };
    run_all(primitive_checks());
    run_all(composite_checks());
    return results;
}

}  // namespace dgat

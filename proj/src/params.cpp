#include "dgat/params.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dgat {

Parameter& ParamStore::add(const std::string& name, Tensor init, bool trainable) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter>(name, std::move(init), trainable));
    order_.push_back(params_.back().get());
    index_[name] = params_.size() - 1;
    return *params_.back();
}

Parameter& ParamStore::add_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t({fan_in, fan_out});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.uniform(-a, a);
    return add(name, std::move(t));
}

Parameter& ParamStore::add_glorot_vec(const std::string& name, std::size_t len) {
    double a = std::sqrt(6.0 / static_cast<double>(len + 1));
    Tensor t({len});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.uniform(-a, a);
    return add(name, std::move(t));
}

Parameter& ParamStore::add_zeros(const std::string& name, std::vector<std::size_t> shape,
                                 bool trainable) {
    return add(name, Tensor(std::move(shape)), trainable);
}

Parameter& ParamStore::add_ones(const std::string& name, std::vector<std::size_t> shape,
                                bool trainable) {
    Tensor t(std::move(shape));
    t.fill(1.0);
    return add(name, std::move(t), trainable);
}

Parameter& ParamStore::add_normal_scaled(const std::string& name, std::size_t rows,
                                         std::size_t cols) {
    Tensor t({rows, cols});
    double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.normal() * s;
    return add(name, std::move(t));
}

Parameter& ParamStore::add_glorot_conv(const std::string& name, std::size_t k, std::size_t cin,
                                       std::size_t cout) {
    double a = std::sqrt(6.0 / static_cast<double>(k * cin + k * cout));
    Tensor t({k, cin, cout});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.uniform(-a, a);
    return add(name, std::move(t));
}

Parameter& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return *params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return *params_[it->second];
}

void ParamStore::zero_grads() {
    for (auto* p : order_) p->zero_grad();
}

std::map<std::string, Tensor> ParamStore::snapshot() const {
    std::map<std::string, Tensor> snap;
    for (const auto* p : order_) snap.emplace(p->name, p->value);
    return snap;
}

void ParamStore::restore(const std::map<std::string, Tensor>& snap) {
    for (auto* p : order_) {
        auto it = snap.find(p->name);
        if (it == snap.end()) throw std::invalid_argument("snapshot missing parameter: " + p->name);
        if (!it->second.same_shape(p->value))
            throw std::invalid_argument("snapshot shape mismatch for: " + p->name);
        p->value = it->second;
    }
}

void ParamStore::save_json(const std::string& path) const {
    nlohmann::json j;
    for (const auto* p : order_) {
        nlohmann::json e;
        e["shape"] = p->value.shape();
        e["values"] = p->value.raw();
        e["trainable"] = p->trainable;
        j[p->name] = std::move(e);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump();
}

void ParamStore::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    for (auto* p : order_) {
        if (!j.contains(p->name)) throw std::runtime_error("checkpoint missing parameter: " + p->name);
        auto shape = j[p->name]["shape"].get<std::vector<std::size_t>>();
        auto values = j[p->name]["values"].get<std::vector<double>>();
        Tensor t(shape, values);
        if (!t.same_shape(p->value))
            throw std::runtime_error("checkpoint shape mismatch for: " + p->name);
        p->value = std::move(t);
    }
}

void AdamW::step(ParamStore& params) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto* p : params.all()) {
        if (!p->trainable) continue;
        auto& m = m_.try_emplace(p->name, Tensor::zeros_like(p->value)).first->second;
        auto& v = v_.try_emplace(p->name, Tensor::zeros_like(p->value)).first->second;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double g = p->grad[i];
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in parameter: " + p->name);
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p->value[i] -= cfg_.lr * cfg_.weight_decay * p->value[i];
            p->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace dgat

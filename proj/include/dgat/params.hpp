#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dgat/autodiff.hpp"
#include "dgat/rng.hpp"
#include "dgat/tensor.hpp"

namespace dgat {

// Owns all named parameters of a model replica. Iteration order is creation
// order, so optimizer updates and checkpoints are deterministic.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t rng_seed) : seed_(rng_seed), rng_(rng_seed) {}

    Parameter& add(const std::string& name, Tensor init, bool trainable = true);
    Parameter& add_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out);
    Parameter& add_zeros(const std::string& name, std::vector<std::size_t> shape,
                         bool trainable = true);
    Parameter& add_ones(const std::string& name, std::vector<std::size_t> shape,
                        bool trainable = true);
    Parameter& add_glorot_vec(const std::string& name, std::size_t len);
    // standard normal scaled by 1/sqrt(dim); used for embeddings
    Parameter& add_normal_scaled(const std::string& name, std::size_t rows, std::size_t cols);
    // Glorot-uniform over a rank-3 kernel (fan computed from receptive field)
    Parameter& add_glorot_conv(const std::string& name, std::size_t k, std::size_t cin,
                               std::size_t cout);

    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<Parameter*>& all() { return order_; }
    const std::vector<Parameter*>& all() const { return order_; }

    void zero_grads();

    std::uint64_t seed() const { return seed_; }
    Rng& init_rng() { return rng_; }

    // snapshot/restore of all values (including non-trainable running stats)
    std::map<std::string, Tensor> snapshot() const;
    void restore(const std::map<std::string, Tensor>& snap);

    void save_json(const std::string& path) const;
    void load_json(const std::string& path);

private:
    std::uint64_t seed_;
    Rng rng_;
    std::vector<std::unique_ptr<Parameter>> params_;
    std::vector<Parameter*> order_;
    std::map<std::string, std::size_t> index_;
};

struct AdamWConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled weight decay: p -= lr*wd*p alongside the Adam update.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void step(ParamStore& params);
    long step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    long t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

}  // namespace dgat

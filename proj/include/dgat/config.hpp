#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dgat/data_model.hpp"
#include "dgat/dfc.hpp"
#include "dgat/evaluation.hpp"
#include "dgat/model.hpp"
#include "dgat/train.hpp"

namespace dgat {

// Flat dotted-key JSON configuration. Defaults reproduce the published
// hyperparameters; any key can be overridden from a file or --set key=value.
class RunConfig {
public:
    RunConfig();

    static RunConfig from_file(const std::string& path);
    void apply_override(const std::string& key_equals_value);
    void merge_json(const nlohmann::json& j);

    // Writes the fully resolved config (defaults + overrides).
    void write_echo(const std::string& path) const;
    const nlohmann::json& json() const { return values_; }

    WindowConfig window_config() const;
    GraphConfig graph_config() const;
    ModelConfig model_config() const;
    TrainConfig train_config() const;
    CvConfig cv_config() const;
    SyntheticSpec synthetic_spec() const;

    std::size_t heatmap_layer() const;
    std::size_t top_k() const;
    std::string averaging() const;

    double get_number(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    std::string get_string(const std::string& key) const;

private:
    void check_key(const std::string& key) const;
    nlohmann::json values_;
};

}  // namespace dgat

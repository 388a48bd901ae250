#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace usrob::model {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

enum class Architecture { SmallCnn };

std::string_view architecture_name(Architecture a);
Architecture architecture_from_name(std::string_view name);

// small_cnn: conv3x3(c1) -> relu -> maxpool2 -> conv3x3(c2) -> relu ->
// maxpool2 -> fc(hidden) -> relu -> fc(num_classes), with
//   c1 = 4*channel_mult, c2 = 8*channel_mult, hidden = 32*width_mult.
// Parameter count (see param_count):
//   9*c1 + c1 + 9*c1*c2 + c2 + (c2*H/4*W/4)*hidden + hidden
//   + hidden*num_classes + num_classes
struct ModelConfig {
    Architecture architecture = Architecture::SmallCnn;
    std::size_t input_height = 32;
    std::size_t input_width = 32;
    std::size_t num_classes = 3;
    std::size_t channel_mult = 1;
    std::size_t width_mult = 1;
    std::uint64_t seed = 0;

    // throws ConfigError; small_cnn needs dims >= 8 and divisible by 4
    void validate() const;

    std::size_t conv1_channels() const { return 4 * channel_mult; }
    std::size_t conv2_channels() const { return 8 * channel_mult; }
    std::size_t hidden_units() const { return 32 * width_mult; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Immutable once created; forward/gradient calls are pure.
struct ModelParams {
    ModelConfig config;
    NamedTensors weights;

    const Tensor& find(std::string_view name) const;
    Tensor& find(std::string_view name);
};

struct Prediction {
    std::vector<double> logits;
    std::vector<double> probabilities;
    std::size_t predicted_class = 0;  // argmax, lowest index wins ties
};

std::size_t param_count(const ModelConfig& config);

// Deterministic fan-in-scaled uniform initialization; biases start at zero.
ModelParams init_model(const ModelConfig& config);

Prediction forward_one(const ModelParams& params, const Tensor& image);
std::vector<Prediction> forward(const ModelParams& params, std::span<const Tensor> images);

// mean softmax cross-entropy over the batch
double loss(const ModelParams& params, std::span<const Tensor> images,
            std::span<const std::size_t> labels);

// gradient of the single-sample cross-entropy with respect to pixels
Tensor grad_input(const ModelParams& params, const Tensor& image, std::size_t label,
                  double* loss_out = nullptr);

// gradient of the mean batch loss with respect to every weight array
NamedTensors grad_params(const ModelParams& params, std::span<const Tensor> images,
                         std::span<const std::size_t> labels, double* loss_out = nullptr);

}  // namespace usrob::model

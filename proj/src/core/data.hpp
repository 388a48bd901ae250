#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "core/tensor.hpp"

namespace usrob::data {

enum class Label : std::size_t { Covid = 0, Pneumonia = 1, Regular = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<std::string_view, kNumClasses> kLabelNames{"covid", "pneumonia",
                                                                       "regular"};

std::string_view label_name(Label l);
Label label_from_name(std::string_view name);

struct Sample {
    Tensor image;  // {H, W} in [0,1]
    Label label = Label::Covid;
    std::string video_id;
    int frame_index = 0;
};

struct Dataset {
    enum class Source { Disk, Synthetic };

    std::vector<Sample> samples;
    Source source = Source::Disk;
    std::string generator_hash;  // set when source == Synthetic

    // distinct video ids in first-appearance order
    std::vector<std::string> video_ids() const;
};

struct SynthConfig {
    int videos_per_class = 10;
    int frames_per_video = 6;
    int image_size = 32;
    double speckle_sigma = 0.25;  // multiplicative speckle level
    double jitter = 0.5;          // per-frame geometric jitter, pixels
    std::uint64_t seed = 0;

    void validate() const;
    std::string hash() const;
};

// Directory layout <root>/<label>/<video_id>/<frame>.png. Frames are sorted by
// (label, video_id, filename), converted to grayscale and resized.
Dataset load_dataset(const std::filesystem::path& root, std::size_t height, std::size_t width);

// Grayscale conversion (channel mean), bilinear resize to (out_h, out_w) with
// half-pixel-centered sampling, then division by `scale` into [0,1].
Tensor preprocess(const Tensor& raw, std::size_t out_h, std::size_t out_w, double scale = 255.0);

struct FoldSplit {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

// Partitions videos (never frames) into k folds, stratified by label. All
// frames of a video land on the same side of every split.
std::vector<FoldSplit> group_kfold(const Dataset& dataset, int k, std::uint64_t seed);

// Ultrasound-like frames: a dark speckled background plus per-class motifs —
// regular: bright pleural band with fainter periodic echoes below it;
// covid: vertical streaks descending from the band;
// pneumonia: dark rounded pockets in a consolidated region under the band.
Dataset synth_generate(const SynthConfig& config);

// Writes the dataset in the load_dataset layout as 8-bit PNGs.
void materialize_dataset(const Dataset& dataset, const std::filesystem::path& root);

}  // namespace usrob::data

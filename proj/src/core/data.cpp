#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "core/errors.hpp"
#include "core/image_io.hpp"
#include "core/rng.hpp"

namespace usrob::data {

namespace fs = std::filesystem;

std::string_view label_name(Label l) { return kLabelNames[static_cast<std::size_t>(l)]; }

Label label_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (kLabelNames[i] == name) return static_cast<Label>(i);
    }
    throw ConfigError("unknown label '" + std::string(name) + "'");
}

std::vector<std::string> Dataset::video_ids() const {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const Sample& s : samples) {
        if (seen.insert(s.video_id).second) ids.push_back(s.video_id);
    }
    return ids;
}

void SynthConfig::validate() const {
    if (videos_per_class < 1) throw ConfigError("videos_per_class must be >= 1");
    if (frames_per_video < 1) throw ConfigError("frames_per_video must be >= 1");
    if (image_size < 8) throw ConfigError("image_size must be >= 8");
    if (speckle_sigma < 0.0) throw ConfigError("speckle_sigma must be >= 0");
    if (jitter < 0.0) throw ConfigError("jitter must be >= 0");
}

std::string SynthConfig::hash() const {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ static_cast<std::uint64_t>(videos_per_class));
    h = mix64(h ^ static_cast<std::uint64_t>(frames_per_video));
    h = mix64(h ^ static_cast<std::uint64_t>(image_size));
    h = mix64(h ^ std::bit_cast<std::uint64_t>(speckle_sigma));
    h = mix64(h ^ std::bit_cast<std::uint64_t>(jitter));
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

Tensor preprocess(const Tensor& raw, std::size_t out_h, std::size_t out_w, double scale) {
    if (raw.size() == 0) throw InputError("preprocess: empty image");

    // collapse color to gray
    Tensor gray;
    if (raw.ndim() == 2) {
        gray = raw;
    } else if (raw.ndim() == 3 && raw.dim(0) == 3) {
        const std::size_t h = raw.dim(1), w = raw.dim(2);
        gray = Tensor({h, w});
        for (std::size_t i = 0; i < h * w; ++i) {
            gray[i] = (raw[i] + raw[h * w + i] + raw[2 * h * w + i]) / 3.0;
        }
    } else {
        throw InputError("preprocess expects an {H,W} or {3,H,W} image, got " + raw.shape_str());
    }

    const std::size_t in_h = gray.dim(0), in_w = gray.dim(1);
    Tensor out({out_h, out_w});
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        // half-pixel centers keep constants constant and make 2x downscale a block mean
        const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        const double cy = std::clamp(fy, 0.0, static_cast<double>(in_h - 1));
        const std::size_t y0 = static_cast<std::size_t>(cy);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = cy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            const double cx = std::clamp(fx, 0.0, static_cast<double>(in_w - 1));
            const std::size_t x0 = static_cast<std::size_t>(cx);
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = cx - static_cast<double>(x0);
            const double v = (1.0 - wy) * ((1.0 - wx) * gray.at(y0, x0) + wx * gray.at(y0, x1)) +
                             wy * ((1.0 - wx) * gray.at(y1, x0) + wx * gray.at(y1, x1));
            out.at(y, x) = std::clamp(v / scale, 0.0, 1.0);
        }
    }
    return out;
}

Dataset load_dataset(const fs::path& root, std::size_t height, std::size_t width) {
    if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());

    std::vector<std::string> label_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        label_dirs.push_back(entry.path().filename().string());
    }
    if (label_dirs.empty()) throw IoError("dataset root is empty: " + root.string());
    std::sort(label_dirs.begin(), label_dirs.end());

    Dataset ds;
    ds.source = Dataset::Source::Disk;
    std::map<std::string, Label> video_label;

    for (const std::string& label_dir : label_dirs) {
        const Label label = label_from_name(label_dir);  // unknown directory -> error

        std::vector<std::string> videos;
        for (const auto& entry : fs::directory_iterator(root / label_dir)) {
            if (entry.is_directory()) videos.push_back(entry.path().filename().string());
        }
        std::sort(videos.begin(), videos.end());

        for (const std::string& video : videos) {
            auto [it, inserted] = video_label.emplace(video, label);
            if (!inserted) {
                throw ConfigError("video '" + video + "' appears under two labels: " +
                                  std::string(label_name(it->second)) + " and " + label_dir);
            }
            std::vector<fs::path> frames;
            for (const auto& entry : fs::directory_iterator(root / label_dir / video)) {
                if (entry.is_regular_file()) frames.push_back(entry.path());
            }
            std::sort(frames.begin(), frames.end());
            int frame_index = 0;
            for (const fs::path& frame : frames) {
                Tensor raw;
                try {
                    raw = io::read_png(frame);
                } catch (const IoError&) {
                    throw IoError("unreadable image: " + frame.string());
                }
                Sample s;
                s.image = preprocess(raw, height, width);
                s.label = label;
                s.video_id = video;
                s.frame_index = frame_index++;
                ds.samples.push_back(std::move(s));
            }
        }
    }
    if (ds.samples.empty()) throw IoError("dataset root has no frames: " + root.string());
    return ds;
}

std::vector<FoldSplit> group_kfold(const Dataset& dataset, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("group_kfold needs k >= 2");

    // one label per video, in sorted video order so the draw is reproducible
    std::map<std::string, Label> video_label;
    for (const Sample& s : dataset.samples) {
        auto [it, inserted] = video_label.emplace(s.video_id, s.label);
        if (!inserted && it->second != s.label) {
            throw ConfigError("video '" + s.video_id + "' carries two labels");
        }
    }
    if (static_cast<int>(video_label.size()) < k) {
        throw ConfigError("more folds than videos: k=" + std::to_string(k) + ", videos=" +
                          std::to_string(video_label.size()));
    }

    std::array<std::vector<std::string>, kNumClasses> by_class;
    for (const auto& [video, label] : video_label) {
        by_class[static_cast<std::size_t>(label)].push_back(video);
    }

    // shuffle each class and deal round-robin; rotating the starting fold per
    // class keeps overall fold sizes balanced as well
    std::map<std::string, int> fold_of_video;
    std::size_t offset = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        Rng rng(seed_stream(seed, "kfold", c));
        rng.shuffle(by_class[c]);
        for (std::size_t j = 0; j < by_class[c].size(); ++j) {
            fold_of_video[by_class[c][j]] = static_cast<int>((j + offset) % k);
        }
        offset += by_class[c].size();
    }

    std::vector<FoldSplit> folds(k);
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const int f = fold_of_video.at(dataset.samples[i].video_id);
        for (int fold = 0; fold < k; ++fold) {
            if (fold == f) {
                folds[fold].test_indices.push_back(i);
            } else {
                folds[fold].train_indices.push_back(i);
            }
        }
    }
    return folds;
}

namespace {

struct VideoScene {
    double background;
    double band_row, band_thickness, band_intensity;
    std::vector<double> echo_rows;                    // regular
    std::vector<std::pair<double, double>> streaks;   // covid: (column, intensity)
    std::vector<std::array<double, 3>> pockets;       // pneumonia: (cx, cy, radius)
    double consolidation;                             // pneumonia fill level
};

VideoScene make_scene(Label label, int n, Rng& rng) {
    VideoScene sc{};
    sc.background = rng.uniform(0.06, 0.12);
    sc.band_row = rng.uniform(0.20, 0.30) * n;
    sc.band_thickness = rng.uniform(1.2, 1.9);
    sc.band_intensity = rng.uniform(0.70, 0.90);
    if (label == Label::Regular) {
        for (int kline = 1; kline <= 3; ++kline) {
            sc.echo_rows.push_back(sc.band_row * static_cast<double>(kline + 1));
        }
    } else if (label == Label::Covid) {
        const int count = 2 + static_cast<int>(rng.below(2));
        for (int i = 0; i < count; ++i) {
            sc.streaks.emplace_back(rng.uniform(0.15, 0.85) * n, rng.uniform(0.35, 0.55));
        }
    } else {
        sc.consolidation = rng.uniform(0.30, 0.42);
        const int count = 2 + static_cast<int>(rng.below(2));
        for (int i = 0; i < count; ++i) {
            sc.pockets.push_back({rng.uniform(0.2, 0.8) * n,
                                  rng.uniform(sc.band_row + 5.0, 0.85 * n),
                                  rng.uniform(2.5, 4.5)});
        }
    }
    return sc;
}

Tensor render_frame(Label label, const VideoScene& sc, int n, double sigma, double jitter,
                    Rng& rng) {
    // geometric jitter per frame, scaled draws so jitter=0 renders identically
    const double band_row = sc.band_row + jitter * rng.normal();

    Tensor img({static_cast<std::size_t>(n), static_cast<std::size_t>(n)}, sc.background);

    auto add_hline = [&](double row, double intensity, double thickness) {
        for (int y = 0; y < n; ++y) {
            const double d = (static_cast<double>(y) - row) / thickness;
            const double g = intensity * std::exp(-0.5 * d * d);
            if (g < 1e-4) continue;
            for (int x = 0; x < n; ++x) img.at(y, x) += g;
        }
    };

    add_hline(band_row, sc.band_intensity, sc.band_thickness);
    for (double row : sc.echo_rows) {
        const double r = row + jitter * rng.normal();
        add_hline(r, sc.band_intensity * 0.30, sc.band_thickness);
    }

    for (const auto& [col, intensity] : sc.streaks) {
        const double c = col + jitter * rng.normal();
        for (int y = 0; y < n; ++y) {
            if (static_cast<double>(y) < band_row) continue;
            const double widen = 0.9 + 0.02 * (static_cast<double>(y) - band_row);
            for (int x = 0; x < n; ++x) {
                const double d = (static_cast<double>(x) - c) / widen;
                const double g = intensity * std::exp(-0.5 * d * d);
                if (g > 1e-4) img.at(y, x) += g;
            }
        }
    }

    if (label == Label::Pneumonia) {
        // consolidated region under the band, then dark pockets with bright rims
        for (int y = 0; y < n; ++y) {
            const double depth = static_cast<double>(y) - band_row;
            if (depth <= 1.0) continue;
            const double fade = std::exp(-depth / (0.6 * n));
            for (int x = 0; x < n; ++x) img.at(y, x) += sc.consolidation * fade;
        }
        for (const auto& p : sc.pockets) {
            const double cx = p[0] + jitter * rng.normal();
            const double cy = p[1] + jitter * rng.normal();
            const double radius = p[2];
            for (int y = 0; y < n; ++y) {
                for (int x = 0; x < n; ++x) {
                    const double dx = static_cast<double>(x) - cx;
                    const double dy = static_cast<double>(y) - cy;
                    const double r = std::sqrt(dx * dx + dy * dy);
                    if (r < radius) {
                        const double t = r / radius;
                        img.at(y, x) = img.at(y, x) * (0.15 + 0.2 * t);  // hypoechoic core
                    } else if (r < radius + 1.5) {
                        img.at(y, x) += 0.35 * (1.0 - (r - radius) / 1.5);  // bright rim
                    }
                }
            }
        }
    }

    // multiplicative speckle, then clip into pixel range
    for (std::size_t i = 0; i < img.size(); ++i) {
        img[i] = std::clamp(img[i] * (1.0 + sigma * rng.normal()), 0.0, 1.0);
    }
    return img;
}

}  // namespace

Dataset synth_generate(const SynthConfig& config) {
    config.validate();

    Dataset ds;
    ds.source = Dataset::Source::Synthetic;
    ds.generator_hash = config.hash();

    const int n = config.image_size;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const Label label = static_cast<Label>(c);
        for (int v = 0; v < config.videos_per_class; ++v) {
            Rng video_rng(seed_stream(config.seed, "synth-video", c, v));
            const VideoScene scene = make_scene(label, n, video_rng);

            std::ostringstream id;
            id << label_name(label) << "_v";
            id.width(3);
            id.fill('0');
            id << v;

            for (int f = 0; f < config.frames_per_video; ++f) {
                Rng frame_rng(seed_stream(config.seed, "synth-frame", c, v, f));
                Sample s;
                s.image = render_frame(label, scene, n, config.speckle_sigma, config.jitter,
                                       frame_rng);
                s.label = label;
                s.video_id = id.str();
                s.frame_index = f;
                ds.samples.push_back(std::move(s));
            }
        }
    }
    return ds;
}

void materialize_dataset(const Dataset& dataset, const fs::path& root) {
    fs::create_directories(root);
    std::set<fs::path> made;
    for (const Sample& s : dataset.samples) {
        const fs::path dir = root / std::string(label_name(s.label)) / s.video_id;
        if (made.insert(dir).second) fs::create_directories(dir);
        std::ostringstream name;
        name << "frame_";
        name.width(4);
        name.fill('0');
        name << s.frame_index << ".png";
        io::write_png_gray8(dir / name.str(), s.image);
    }
}

}  // namespace usrob::data

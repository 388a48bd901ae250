#include "core/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace usrob::model {

namespace {

struct Dims {
    std::size_t h, w, c1, c2, h2, w2, h4, w4, flat, hidden, classes;
};

Dims dims_of(const ModelConfig& cfg) {
    Dims d;
    d.h = cfg.input_height;
    d.w = cfg.input_width;
    d.c1 = cfg.conv1_channels();
    d.c2 = cfg.conv2_channels();
    d.h2 = d.h / 2;
    d.w2 = d.w / 2;
    d.h4 = d.h / 4;
    d.w4 = d.w / 4;
    d.flat = d.c2 * d.h4 * d.w4;
    d.hidden = cfg.hidden_units();
    d.classes = cfg.num_classes;
    return d;
}

// conv 3x3, stride 1, zero padding 1 (same-size output)
void conv3x3_forward(const Tensor& in, const Tensor& weight, const Tensor& bias, Tensor& out) {
    const std::size_t cin = in.dim(0), h = in.dim(1), w = in.dim(2);
    const std::size_t cout = weight.dim(0);
    for (std::size_t oc = 0; oc < cout; ++oc) {
        double* o = out.data() + oc * h * w;
        const double b = bias[oc];
        for (std::size_t i = 0; i < h * w; ++i) o[i] = b;
        for (std::size_t ic = 0; ic < cin; ++ic) {
            const double* x = in.data() + ic * h * w;
            const double* k = weight.data() + (oc * cin + ic) * 9;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    const std::size_t yy = y + ky;
                    if (yy < 1 || yy > h) continue;  // padded row
                    const double* xr = x + (yy - 1) * w;
                    double* orow = o + y * w;
                    const double k0 = k[ky * 3 + 0], k1 = k[ky * 3 + 1], k2 = k[ky * 3 + 2];
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        double s = k1 * xr[xx];
                        if (xx > 0) s += k0 * xr[xx - 1];
                        if (xx + 1 < w) s += k2 * xr[xx + 1];
                        orow[xx] += s;
                    }
                }
            }
        }
    }
}

// accumulates weight/bias gradients; optionally produces the input gradient
void conv3x3_backward(const Tensor& dout, const Tensor& in, const Tensor& weight,
                      Tensor& dweight, Tensor& dbias, Tensor* din) {
    const std::size_t cin = in.dim(0), h = in.dim(1), w = in.dim(2);
    const std::size_t cout = weight.dim(0);
    for (std::size_t oc = 0; oc < cout; ++oc) {
        const double* go = dout.data() + oc * h * w;
        double db = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) db += go[i];
        dbias[oc] += db;
        for (std::size_t ic = 0; ic < cin; ++ic) {
            const double* x = in.data() + ic * h * w;
            double* dk = dweight.data() + (oc * cin + ic) * 9;
            const double* k = weight.data() + (oc * cin + ic) * 9;
            double* gx = din ? din->data() + ic * h * w : nullptr;
            for (std::size_t y = 0; y < h; ++y) {
                const double* gorow = go + y * w;
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    const std::size_t yy = y + ky;
                    if (yy < 1 || yy > h) continue;
                    const double* xr = x + (yy - 1) * w;
                    double* gxr = gx ? gx + (yy - 1) * w : nullptr;
                    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
                    const double k0 = k[ky * 3 + 0], k1 = k[ky * 3 + 1], k2 = k[ky * 3 + 2];
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        const double g = gorow[xx];
                        s1 += g * xr[xx];
                        if (xx > 0) s0 += g * xr[xx - 1];
                        if (xx + 1 < w) s2 += g * xr[xx + 1];
                        if (gxr) {
                            gxr[xx] += k1 * g;
                            if (xx > 0) gxr[xx - 1] += k0 * g;
                            if (xx + 1 < w) gxr[xx + 1] += k2 * g;
                        }
                    }
                    dk[ky * 3 + 0] += s0;
                    dk[ky * 3 + 1] += s1;
                    dk[ky * 3 + 2] += s2;
                }
            }
        }
    }
}

void relu_inplace(Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < 0.0) t[i] = 0.0;
    }
}

// 2x2 max pool, stride 2; ties broken by scan order so gradients are deterministic
void maxpool2_forward(const Tensor& in, Tensor& out, std::vector<std::uint32_t>& argmax) {
    const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    const std::size_t oh = h / 2, ow = w / 2;
    argmax.resize(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* x = in.data() + ch * h * w;
        double* o = out.data() + ch * oh * ow;
        std::uint32_t* am = argmax.data() + ch * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const std::size_t base = (2 * y) * w + 2 * xx;
                std::size_t best = base;
                double bv = x[base];
                const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
                for (std::size_t idx : cand) {
                    if (x[idx] > bv) {
                        bv = x[idx];
                        best = idx;
                    }
                }
                o[y * ow + xx] = bv;
                am[y * ow + xx] = static_cast<std::uint32_t>(best);
            }
        }
    }
}

void maxpool2_backward(const Tensor& dout, const std::vector<std::uint32_t>& argmax,
                       Tensor& din) {
    const std::size_t c = din.dim(0), h = din.dim(1), w = din.dim(2);
    const std::size_t oh = h / 2, ow = w / 2;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* g = dout.data() + ch * oh * ow;
        const std::uint32_t* am = argmax.data() + ch * oh * ow;
        double* gx = din.data() + ch * h * w;
        for (std::size_t i = 0; i < oh * ow; ++i) gx[am[i]] += g[i];
    }
}

void fc_forward(const Tensor& in, const Tensor& weight, const Tensor& bias, Tensor& out) {
    const std::size_t nout = weight.dim(0), nin = weight.dim(1);
    for (std::size_t o = 0; o < nout; ++o) {
        const double* wr = weight.data() + o * nin;
        double s = bias[o];
        for (std::size_t i = 0; i < nin; ++i) s += wr[i] * in[i];
        out[o] = s;
    }
}

void fc_backward(const Tensor& dout, const Tensor& in, const Tensor& weight,
                 Tensor& dweight, Tensor& dbias, Tensor& din) {
    const std::size_t nout = weight.dim(0), nin = weight.dim(1);
    for (std::size_t o = 0; o < nout; ++o) {
        const double g = dout[o];
        dbias[o] += g;
        const double* wr = weight.data() + o * nin;
        double* dwr = dweight.data() + o * nin;
        for (std::size_t i = 0; i < nin; ++i) {
            dwr[i] += g * in[i];
            din[i] += g * wr[i];
        }
    }
}

struct ForwardTrace {
    Tensor x;  // {1,H,W}
    Tensor a1, p1, a2, p2;
    std::vector<std::uint32_t> idx1, idx2;
    Tensor flat, h;
    std::vector<double> logits;
    std::vector<double> logprobs;
    std::vector<double> probs;
};

void check_image_shape(const ModelConfig& cfg, const Tensor& image) {
    if (image.ndim() != 2 || image.dim(0) != cfg.input_height || image.dim(1) != cfg.input_width) {
        throw InputError("image shape " + image.shape_str() + " does not match model input " +
                         std::to_string(cfg.input_height) + "x" + std::to_string(cfg.input_width));
    }
}

// softmax with a clamp on the shifted logits so probabilities stay strictly positive
void softmax_trace(ForwardTrace& t, std::size_t classes) {
    double m = t.logits[0];
    for (std::size_t k = 1; k < classes; ++k) m = std::max(m, t.logits[k]);
    double sum = 0.0;
    std::vector<double> shifted(classes);
    for (std::size_t k = 0; k < classes; ++k) {
        shifted[k] = std::max(t.logits[k] - m, -700.0);
        sum += std::exp(shifted[k]);
    }
    const double logsum = std::log(sum);
    t.logprobs.resize(classes);
    t.probs.resize(classes);
    for (std::size_t k = 0; k < classes; ++k) {
        t.logprobs[k] = shifted[k] - logsum;
        t.probs[k] = std::exp(shifted[k]) / sum;
    }
}

ForwardTrace run_forward(const ModelParams& params, const Tensor& image) {
    const ModelConfig& cfg = params.config;
    check_image_shape(cfg, image);
    const Dims d = dims_of(cfg);

    ForwardTrace t;
    t.x = Tensor({1, d.h, d.w});
    std::copy(image.data(), image.data() + d.h * d.w, t.x.data());

    t.a1 = Tensor({d.c1, d.h, d.w});
    conv3x3_forward(t.x, params.find("conv1.weight"), params.find("conv1.bias"), t.a1);
    relu_inplace(t.a1);
    t.p1 = Tensor({d.c1, d.h2, d.w2});
    maxpool2_forward(t.a1, t.p1, t.idx1);

    t.a2 = Tensor({d.c2, d.h2, d.w2});
    conv3x3_forward(t.p1, params.find("conv2.weight"), params.find("conv2.bias"), t.a2);
    relu_inplace(t.a2);
    t.p2 = Tensor({d.c2, d.h4, d.w4});
    maxpool2_forward(t.a2, t.p2, t.idx2);

    t.flat = Tensor({d.flat});
    std::copy(t.p2.data(), t.p2.data() + d.flat, t.flat.data());

    t.h = Tensor({d.hidden});
    fc_forward(t.flat, params.find("fc1.weight"), params.find("fc1.bias"), t.h);
    relu_inplace(t.h);

    Tensor logits({d.classes});
    fc_forward(t.h, params.find("fc2.weight"), params.find("fc2.bias"), logits);
    t.logits.assign(logits.data(), logits.data() + d.classes);
    softmax_trace(t, d.classes);
    return t;
}

void relu_mask(const Tensor& post, Tensor& grad) {
    for (std::size_t i = 0; i < post.size(); ++i) {
        if (post[i] <= 0.0) grad[i] = 0.0;
    }
}

// Backprop from d(logits) through the trace. Accumulates into `grads` (same
// order as params.weights) when given; writes the pixel gradient when given.
void run_backward(const ModelParams& params, const ForwardTrace& t,
                  std::span<const double> dlogits, NamedTensors* grads, Tensor* dimage) {
    const Dims d = dims_of(params.config);

    Tensor scratch_w2({d.classes, d.hidden}), scratch_b2({d.classes});
    Tensor scratch_w1({d.hidden, d.flat}), scratch_b1({d.hidden});

    // resolve gradient accumulator slots by name; scratch when params-grads unwanted
    auto slot = [&](std::string_view name, Tensor& fallback) -> Tensor* {
        if (!grads) return &fallback;
        for (auto& [n, g] : *grads) {
            if (n == name) return &g;
        }
        return &fallback;
    };

    Tensor dlog({d.classes});
    std::copy(dlogits.begin(), dlogits.end(), dlog.data());

    Tensor dh({d.hidden});
    fc_backward(dlog, t.h, params.find("fc2.weight"), *slot("fc2.weight", scratch_w2),
                *slot("fc2.bias", scratch_b2), dh);
    relu_mask(t.h, dh);

    Tensor dflat({d.flat});
    fc_backward(dh, t.flat, params.find("fc1.weight"), *slot("fc1.weight", scratch_w1),
                *slot("fc1.bias", scratch_b1), dflat);

    Tensor dp2({d.c2, d.h4, d.w4});
    std::copy(dflat.data(), dflat.data() + d.flat, dp2.data());

    Tensor da2({d.c2, d.h2, d.w2});
    maxpool2_backward(dp2, t.idx2, da2);
    relu_mask(t.a2, da2);

    Tensor scratch_cw2({d.c2, d.c1, 3, 3}), scratch_cb2({d.c2});
    Tensor dp1({d.c1, d.h2, d.w2});
    conv3x3_backward(da2, t.p1, params.find("conv2.weight"), *slot("conv2.weight", scratch_cw2),
                     *slot("conv2.bias", scratch_cb2), &dp1);

    Tensor da1({d.c1, d.h, d.w});
    maxpool2_backward(dp1, t.idx1, da1);
    relu_mask(t.a1, da1);

    Tensor scratch_cw1({d.c1, 1, 3, 3}), scratch_cb1({d.c1});
    Tensor dx({1, d.h, d.w});
    conv3x3_backward(da1, t.x, params.find("conv1.weight"), *slot("conv1.weight", scratch_cw1),
                     *slot("conv1.bias", scratch_cb1), dimage ? &dx : nullptr);

    if (dimage) {
        *dimage = Tensor({d.h, d.w});
        std::copy(dx.data(), dx.data() + d.h * d.w, dimage->data());
    }
}

Prediction prediction_from(const ForwardTrace& t) {
    Prediction p;
    p.logits = t.logits;
    p.probabilities = t.probs;
    p.predicted_class = 0;
    for (std::size_t k = 1; k < t.logits.size(); ++k) {
        if (t.logits[k] > t.logits[p.predicted_class]) p.predicted_class = k;
    }
    return p;
}

void check_label(const ModelConfig& cfg, std::size_t label) {
    if (label >= cfg.num_classes) {
        throw InputError("label " + std::to_string(label) + " out of range [0, " +
                         std::to_string(cfg.num_classes) + ")");
    }
}

}  // namespace

std::string_view architecture_name(Architecture a) {
    switch (a) {
        case Architecture::SmallCnn: return "small_cnn";
    }
    throw ConfigError("unknown architecture enum value");
}

Architecture architecture_from_name(std::string_view name) {
    if (name == "small_cnn") return Architecture::SmallCnn;
    throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (input_height < 8 || input_width < 8) throw ConfigError("input dimensions must be >= 8");
    if (input_height % 4 != 0 || input_width % 4 != 0) {
        throw ConfigError("small_cnn needs input dimensions divisible by 4");
    }
    if (channel_mult < 1 || width_mult < 1) throw ConfigError("multipliers must be >= 1");
}

const Tensor& ModelParams::find(std::string_view name) const {
    for (const auto& [n, t] : weights) {
        if (n == name) return t;
    }
    throw InputError("no weight array named '" + std::string(name) + "'");
}

Tensor& ModelParams::find(std::string_view name) {
    for (auto& [n, t] : weights) {
        if (n == name) return t;
    }
    throw InputError("no weight array named '" + std::string(name) + "'");
}

std::size_t param_count(const ModelConfig& cfg) {
    const Dims d = dims_of(cfg);
    return 9 * d.c1 + d.c1 + 9 * d.c1 * d.c2 + d.c2 + d.flat * d.hidden + d.hidden +
           d.hidden * d.classes + d.classes;
}

ModelParams init_model(const ModelConfig& cfg) {
    cfg.validate();
    const Dims d = dims_of(cfg);

    ModelParams params;
    params.config = cfg;
    params.weights = {
        {"conv1.weight", Tensor({d.c1, 1, 3, 3})},
        {"conv1.bias", Tensor({d.c1})},
        {"conv2.weight", Tensor({d.c2, d.c1, 3, 3})},
        {"conv2.bias", Tensor({d.c2})},
        {"fc1.weight", Tensor({d.hidden, d.flat})},
        {"fc1.bias", Tensor({d.hidden})},
        {"fc2.weight", Tensor({d.classes, d.hidden})},
        {"fc2.bias", Tensor({d.classes})},
    };

    Rng rng(seed_stream(cfg.seed, "init"));
    auto fill_uniform = [&rng](Tensor& t, std::size_t fan_in) {
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    };
    fill_uniform(params.find("conv1.weight"), 9);
    fill_uniform(params.find("conv2.weight"), 9 * d.c1);
    fill_uniform(params.find("fc1.weight"), d.flat);
    fill_uniform(params.find("fc2.weight"), d.hidden);
    return params;
}

Prediction forward_one(const ModelParams& params, const Tensor& image) {
    return prediction_from(run_forward(params, image));
}

std::vector<Prediction> forward(const ModelParams& params, std::span<const Tensor> images) {
    std::vector<Prediction> out;
    out.reserve(images.size());
    for (const Tensor& img : images) out.push_back(forward_one(params, img));
    return out;
}

double loss(const ModelParams& params, std::span<const Tensor> images,
            std::span<const std::size_t> labels) {
    if (images.empty() || images.size() != labels.size()) {
        throw InputError("loss needs a nonempty batch with one label per image");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        check_label(params.config, labels[i]);
        ForwardTrace t = run_forward(params, images[i]);
        total += -t.logprobs[labels[i]];
    }
    return total / static_cast<double>(images.size());
}

Tensor grad_input(const ModelParams& params, const Tensor& image, std::size_t label,
                  double* loss_out) {
    check_label(params.config, label);
    ForwardTrace t = run_forward(params, image);
    if (loss_out) *loss_out = -t.logprobs[label];

    std::vector<double> dlogits(t.probs);
    dlogits[label] -= 1.0;
    Tensor dx;
    run_backward(params, t, dlogits, nullptr, &dx);
    return dx;
}

NamedTensors grad_params(const ModelParams& params, std::span<const Tensor> images,
                         std::span<const std::size_t> labels, double* loss_out) {
    if (images.empty() || images.size() != labels.size()) {
        throw InputError("grad_params needs a nonempty batch with one label per image");
    }
    NamedTensors grads;
    grads.reserve(params.weights.size());
    for (const auto& [name, t] : params.weights) grads.emplace_back(name, Tensor::zeros_like(t));

    const double inv_n = 1.0 / static_cast<double>(images.size());
    double total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        check_label(params.config, labels[i]);
        ForwardTrace t = run_forward(params, images[i]);
        total += -t.logprobs[labels[i]];
        std::vector<double> dlogits(t.probs);
        dlogits[labels[i]] -= 1.0;
        for (double& v : dlogits) v *= inv_n;
        run_backward(params, t, dlogits, &grads, nullptr);
    }
    if (loss_out) *loss_out = total * inv_n;
    return grads;
}

}  // namespace usrob::model

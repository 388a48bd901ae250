#include "core/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "core/data.hpp"
#include "core/errors.hpp"
#include "core/rng.hpp"

namespace usrob::attacks {

namespace {

// Accept a hair of slack over epsilon so that re-projecting an already
// projected vector returns it unchanged (exact idempotence).
constexpr double kInsideSlack = 1.0 + 1e-13;

Tensor clip_to_pixel_range(const Tensor& x, const Tensor& delta) {
    Tensor out = delta;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = std::clamp(x[i] + delta[i], 0.0, 1.0);
        out[i] = v - x[i];
    }
    return out;
}

// direction of steepest ascent scaled for the ball geometry
bool normalized_step(Norm norm, const Tensor& grad, Tensor& out) {
    if (norm == Norm::Linf) {
        bool any = false;
        for (std::size_t i = 0; i < grad.size(); ++i) {
            out[i] = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
            any = any || out[i] != 0.0;
        }
        return any;
    }
    const double m = linf_norm(grad);
    if (m == 0.0) return false;
    double s = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        out[i] = grad[i] / m;
        s += out[i] * out[i];
    }
    const double inv = 1.0 / std::sqrt(s);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
    return true;
}

Tensor random_start_delta(Norm norm, double epsilon, std::size_t n, Rng& rng) {
    Tensor d({n});
    if (norm == Norm::Linf) {
        for (std::size_t i = 0; i < n; ++i) d[i] = rng.uniform(-epsilon, epsilon);
        return d;
    }
    // uniform in the L2 ball: direction on the sphere, radius ~ eps * U^(1/n)
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = rng.normal();
        s += d[i] * d[i];
    }
    if (s == 0.0) return Tensor({n});
    const double radius = epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
    const double scale = radius / std::sqrt(s);
    for (std::size_t i = 0; i < n; ++i) d[i] *= scale;
    return d;
}

}  // namespace

std::string_view norm_name(Norm n) { return n == Norm::L2 ? "l2" : "linf"; }

Norm norm_from_name(std::string_view name) {
    if (name == "l2" || name == "L2") return Norm::L2;
    if (name == "linf" || name == "Linf") return Norm::Linf;
    throw ConfigError("unknown norm '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
    if (epsilon < 0.0) throw ConfigError("attack epsilon must be >= 0");
    if (num_steps < 1) throw ConfigError("attack num_steps must be >= 1");
    if (step_size && *step_size <= 0.0) throw ConfigError("attack step_size must be > 0");
    if (num_restarts < 1) throw ConfigError("attack num_restarts must be >= 1");
}

double AttackConfig::effective_step_size() const {
    if (step_size) return *step_size;
    return 2.5 * epsilon / static_cast<double>(num_steps);
}

Tensor project(const Tensor& delta, Norm norm, double epsilon) {
    if (epsilon < 0.0) throw ConfigError("projection epsilon must be >= 0");
    if (norm == Norm::Linf) {
        Tensor out = delta;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = std::clamp(out[i], -epsilon, epsilon);
        }
        return out;
    }
    const double nrm = l2_norm(delta);
    if (nrm <= epsilon * kInsideSlack) return delta;
    Tensor out = delta;
    const double scale = epsilon / nrm;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scale;
    return out;
}

SearchResult pgd_search(const ObjectiveFn& objective, const Tensor& x, const AttackConfig& config) {
    config.validate();
    const std::size_t n = x.size();
    const bool maximize = config.objective == Objective::Maximize;
    auto better = [maximize](double a, double b) { return maximize ? a > b : a < b; };

    // the zero perturbation is always a candidate
    SearchResult best;
    best.delta = Tensor::zeros_like(x);
    best.value = objective(x).value;
    if (config.epsilon == 0.0) return best;

    const double alpha = config.effective_step_size();
    Tensor step(x.shape());

    for (int restart = 0; restart < config.num_restarts; ++restart) {
        Rng rng(seed_stream(config.seed, "pgd", restart));
        Tensor delta = Tensor::zeros_like(x);
        if (config.random_start) {
            Tensor d0 = random_start_delta(config.norm, config.epsilon, n, rng);
            delta = Tensor(x.shape());
            std::copy(d0.data(), d0.data() + n, delta.data());
            delta = clip_to_pixel_range(x, project(delta, config.norm, config.epsilon));
        }

        for (int it = 0; it <= config.num_steps; ++it) {
            ObjectivePoint p = objective(x + delta);
            if (better(p.value, best.value)) {
                best.value = p.value;
                best.delta = delta;
            }
            if (it == config.num_steps) break;
            if (!std::isfinite(p.value) || !all_finite(p.grad)) {
                throw AttackError("non-finite gradient at pgd step " + std::to_string(it) +
                                  " (restart " + std::to_string(restart) + ")");
            }
            if (!normalized_step(config.norm, p.grad, step)) {
                break;  // flat point: the iterate cannot move again
            }
            axpy(maximize ? alpha : -alpha, step, delta);
            delta = clip_to_pixel_range(x, project(delta, config.norm, config.epsilon));
        }
    }
    return best;
}

Perturbation pgd(const model::ModelParams& params, const Tensor& x, std::size_t label,
                 const AttackConfig& config) {
    ObjectiveFn objective = [&](const Tensor& x_adv) {
        ObjectivePoint p;
        p.grad = model::grad_input(params, x_adv, label, &p.value);
        return p;
    };
    SearchResult r = pgd_search(objective, x, config);

    Perturbation out;
    out.delta = std::move(r.delta);
    out.achieved_loss = r.value;
    out.prediction_before = model::forward_one(params, x);
    out.prediction_after = model::forward_one(params, x + out.delta);
    out.config_used = config;
    return out;
}

std::vector<Perturbation> attack_batch(const model::ModelParams& params,
                                       std::span<const data::Sample> samples,
                                       const AttackConfig& config) {
    std::vector<Perturbation> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const data::Sample& s = samples[i];
        AttackConfig per_sample = config;
        per_sample.seed = seed_stream(config.seed, s.video_id,
                                      static_cast<std::uint64_t>(s.frame_index));
        try {
            out.push_back(pgd(params, s.image, static_cast<std::size_t>(s.label), per_sample));
        } catch (const AttackError& e) {
            throw AttackError("sample " + std::to_string(i) + " (" + s.video_id + "): " +
                              e.what());
        }
    }
    return out;
}

}  // namespace usrob::attacks

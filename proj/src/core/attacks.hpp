#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "core/model.hpp"
#include "core/tensor.hpp"

namespace usrob::data {
struct Sample;
}

namespace usrob::attacks {

enum class Norm { L2, Linf };
enum class Objective { Maximize, Minimize };

std::string_view norm_name(Norm n);
Norm norm_from_name(std::string_view name);

struct AttackConfig {
    Norm norm = Norm::L2;
    double epsilon = 0.0;
    int num_steps = 40;
    std::optional<double> step_size;  // absent -> 2.5 * epsilon / num_steps
    int num_restarts = 1;
    bool random_start = false;
    Objective objective = Objective::Maximize;
    std::uint64_t seed = 0;

    void validate() const;
    double effective_step_size() const;
};

struct Perturbation {
    Tensor delta;
    double achieved_loss = 0.0;
    model::Prediction prediction_before;
    model::Prediction prediction_after;
    AttackConfig config_used;
};

// Euclidean projection onto the ball B_norm(epsilon). L2 rescales radially,
// Linf clamps componentwise. Total on finite inputs and exactly idempotent.
Tensor project(const Tensor& delta, Norm norm, double epsilon);

// A differentiable objective evaluated at the perturbed point x + delta.
struct ObjectivePoint {
    double value = 0.0;
    Tensor grad;
};
using ObjectiveFn = std::function<ObjectivePoint(const Tensor& x_adv)>;

struct SearchResult {
    Tensor delta;  // effective perturbation; x + delta stays in [0,1]
    double value = 0.0;
};

// Projected gradient search over delta. Keeps the best objective value seen
// across the zero candidate, every iterate, and every restart. Iterates move
// by the norm-appropriate normalized gradient and are re-projected, then the
// perturbed point is clipped back into pixel range.
SearchResult pgd_search(const ObjectiveFn& objective, const Tensor& x, const AttackConfig& config);

// PGD on the model's true-label cross-entropy, Maximize or Minimize.
Perturbation pgd(const model::ModelParams& params, const Tensor& x, std::size_t label,
                 const AttackConfig& config);

// Per-sample pgd with stream seeds derived from (config.seed, sample identity),
// so results do not depend on list order.
std::vector<Perturbation> attack_batch(const model::ModelParams& params,
                                       std::span<const data::Sample> samples,
                                       const AttackConfig& config);

}  // namespace usrob::attacks

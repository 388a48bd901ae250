#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/attacks.hpp"
#include "core/data.hpp"
#include "core/model.hpp"

namespace usrob::eval {

double clean_accuracy(const model::ModelParams& params, std::span<const data::Sample> samples);

// Adversarial evaluation with candidate inclusion: a sample counts as flipped
// if the fresh PGD result or any supplied prior candidate misclassifies it.
// Flipping perturbations are returned so larger-radius evaluations can reuse
// them (balls nest, so reuse makes accuracy monotone in epsilon).
struct AdvEval {
    double accuracy = 0.0;
    std::vector<std::optional<Tensor>> flips;  // per sample, the delta that flipped it
};

AdvEval adversarial_eval(const model::ModelParams& params, std::span<const data::Sample> samples,
                         const attacks::AttackConfig& attack,
                         const std::vector<std::optional<Tensor>>* prior_flips = nullptr);

double adversarial_accuracy(const model::ModelParams& params,
                            std::span<const data::Sample> samples,
                            const attacks::AttackConfig& attack,
                            const std::vector<std::optional<Tensor>>* prior_flips = nullptr);

struct RobustnessCurve {
    std::string model_id;
    std::vector<double> epsilons;                    // ascending, starts at 0
    std::vector<std::vector<double>> fold_accuracy;  // [fold][epsilon]
    std::vector<double> mean;                        // per epsilon, across folds
    std::vector<double> stddev;                      // population std across folds
};

RobustnessCurve robustness_curve(const std::string& model_id,
                                 std::span<const model::ModelParams> fold_models,
                                 const std::vector<std::vector<data::Sample>>& fold_test_sets,
                                 const std::vector<double>& epsilons,
                                 const attacks::AttackConfig& attack_template, int jobs = 1);

// One-vs-rest AUROC per class by the exact Mann-Whitney statistic with midrank
// tie handling. Classes without both positives and negatives come back empty.
std::vector<std::optional<double>> auroc_ovr(const std::vector<std::vector<double>>& scores,
                                             std::span<const std::size_t> labels,
                                             std::size_t num_classes);

struct OutcomeReport {
    struct Row {
        std::string model_id;
        data::Label outcome;
        double mean_accuracy = 0.0;  // per-class recall, mean over folds
        double mean_auroc = 0.0;
        int folds_in_accuracy = 0;
        int folds_in_auroc = 0;
    };
    std::vector<Row> rows;
    std::vector<std::string> warnings;
};

// Clean per-outcome metrics per fold (recall + one-vs-rest AUROC), averaged
// across folds. Folds missing a class are excluded from that class's mean.
OutcomeReport per_outcome_report(const std::string& model_id,
                                 std::span<const model::ModelParams> fold_models,
                                 const std::vector<std::vector<data::Sample>>& fold_test_sets);

// (arithmetic mean, population standard deviation)
std::pair<double, double> aggregate_folds(std::span<const double> values);

}  // namespace usrob::eval

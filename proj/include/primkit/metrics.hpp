#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "primkit/pipeline.hpp"

namespace primkit::eval {

using data::kNumPrimitives;

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// Mean of per-primitive accuracies c_i/n_i over primitives present in the
// labels; absent primitives are excluded from the mean.
double balanced_accuracy(const std::vector<int>& preds,
                         const std::vector<int>& labels);

struct ConfusionMatrix {
    // rows = true primitive, columns = predicted
    Eigen::Matrix<long, kNumPrimitives, kNumPrimitives> counts =
        Eigen::Matrix<long, kNumPrimitives, kNumPrimitives>::Zero();

    // rows with no windows normalize to all-zero
    Eigen::Matrix<double, kNumPrimitives, kNumPrimitives> row_normalized() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& labels);

// Arithmetic mean of member probability matrices, entrywise.
Eigen::MatrixXd ensemble_proba(const std::vector<Eigen::MatrixXd>& members);

// Linear interpolation between order statistics.
double quantile(std::vector<double> values, double level);

inline constexpr std::array<double, 7> kLetterLevels = {
    0.0625, 0.125, 0.25, 0.5, 0.75, 0.875, 0.9375};

struct LetterValueRow {
    int true_label = 0;
    int scored_label = 0;
    long n = 0;
    std::array<double, 7> quantiles{};
};

struct LetterValues {
    std::vector<LetterValueRow> rows;  // true x scored, absent true labels skipped
    // median probability assigned to the ground-truth primitive, per true
    // label; the flag uses a strict > 0.6 comparison
    std::array<double, kNumPrimitives> median_ground_truth{};
    std::array<bool, kNumPrimitives> median_gt_above_0p6{};
    std::array<bool, kNumPrimitives> present{};
};

LetterValues probability_letter_values(const Eigen::MatrixXd& probas,
                                       const std::vector<int>& labels);

struct CompositionReport {
    // 10% bins of the ground-truth-primitive fraction per window
    std::array<long, 10> correct_gt_hist{};
    std::array<long, 10> incorrect_gt_hist{};
    // predicted-primitive fraction for incorrectly classified windows
    std::array<long, 10> incorrect_pred_hist{};
    long n_correct = 0;
    long n_incorrect = 0;
    double frac_correct_containing_other = 0;
    double frac_incorrect_zero_predicted = 0;
};

CompositionReport window_composition(const std::vector<data::Window>& windows,
                                     const std::vector<int>& preds);

struct MetricsReport {
    long n = 0;
    double accuracy = 0;
    double balanced_accuracy = 0;
    std::array<long, kNumPrimitives> class_counts{};
    std::array<double, kNumPrimitives> per_class_accuracy{};
    ConfusionMatrix confusion;

    nlohmann::ordered_json to_json() const;
    std::string to_text() const;
};

MetricsReport compute_metrics(const std::vector<int>& preds,
                              const std::vector<int>& labels);

void write_confusion_csv(const ConfusionMatrix& cm, const std::string& path);
void write_letter_values_csv(const LetterValues& lv, const std::string& path);
void write_composition_csv(const CompositionReport& cr, const std::string& path);

}  // namespace primkit::eval

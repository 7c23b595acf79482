#include "primkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "primkit/csv.hpp"

namespace primkit::eval {

namespace {

void check_lengths(const std::vector<int>& preds,
                   const std::vector<int>& labels) {
    if (preds.size() != labels.size()) {
        throw ContractError("metrics: " + std::to_string(preds.size()) +
                            " predictions for " + std::to_string(labels.size()) +
                            " labels");
    }
}

}  // namespace

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    check_lengths(preds, labels);
    if (labels.empty()) throw Error("accuracy: degenerate empty input");
    long correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (preds[i] == labels[i]) ++correct;
    }
    return double(correct) / double(labels.size());
}

double balanced_accuracy(const std::vector<int>& preds,
                         const std::vector<int>& labels) {
    check_lengths(preds, labels);
    if (labels.empty()) throw Error("balanced_accuracy: degenerate empty input");
    std::array<long, kNumPrimitives> n{};
    std::array<long, kNumPrimitives> c{};
    for (size_t i = 0; i < labels.size(); ++i) {
        n[size_t(labels[i])]++;
        if (preds[i] == labels[i]) c[size_t(labels[i])]++;
    }
    double sum = 0;
    int present = 0;
    for (int k = 0; k < kNumPrimitives; ++k) {
        if (n[size_t(k)] == 0) continue;
        sum += double(c[size_t(k)]) / double(n[size_t(k)]);
        ++present;
    }
    return sum / double(present);
}

Eigen::Matrix<double, kNumPrimitives, kNumPrimitives>
ConfusionMatrix::row_normalized() const {
    Eigen::Matrix<double, kNumPrimitives, kNumPrimitives> out =
        Eigen::Matrix<double, kNumPrimitives, kNumPrimitives>::Zero();
    for (int r = 0; r < kNumPrimitives; ++r) {
        const long total = counts.row(r).sum();
        if (total == 0) continue;
        for (int col = 0; col < kNumPrimitives; ++col) {
            out(r, col) = double(counts(r, col)) / double(total);
        }
    }
    return out;
}

ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& labels) {
    check_lengths(preds, labels);
    ConfusionMatrix cm;
    for (size_t i = 0; i < labels.size(); ++i) {
        cm.counts(labels[i], preds[i])++;
    }
    return cm;
}

Eigen::MatrixXd ensemble_proba(const std::vector<Eigen::MatrixXd>& members) {
    if (members.empty()) {
        throw ContractError("ensemble_proba: need at least one member");
    }
    Eigen::MatrixXd out = members[0];
    for (size_t i = 1; i < members.size(); ++i) {
        if (members[i].rows() != out.rows() || members[i].cols() != out.cols()) {
            throw ContractError("ensemble_proba: member shape mismatch");
        }
        out += members[i];
    }
    out /= double(members.size());
    return out;
}

double quantile(std::vector<double> values, double level) {
    if (values.empty()) throw Error("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double h = double(values.size() - 1) * level;
    const size_t lo = size_t(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    const double frac = h - double(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

LetterValues probability_letter_values(const Eigen::MatrixXd& probas,
                                       const std::vector<int>& labels) {
    if (probas.rows() != Eigen::Index(labels.size()) ||
        probas.cols() != kNumPrimitives) {
        throw ContractError("letter values: probabilities must be Nx5");
    }
    LetterValues out;
    for (int true_label = 0; true_label < kNumPrimitives; ++true_label) {
        std::vector<Eigen::Index> rows;
        for (size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == true_label) rows.push_back(Eigen::Index(i));
        }
        if (rows.empty()) continue;
        out.present[size_t(true_label)] = true;
        for (int scored = 0; scored < kNumPrimitives; ++scored) {
            LetterValueRow row;
            row.true_label = true_label;
            row.scored_label = scored;
            row.n = long(rows.size());
            std::vector<double> sample;
            sample.reserve(rows.size());
            for (Eigen::Index r : rows) sample.push_back(probas(r, scored));
            for (size_t q = 0; q < kLetterLevels.size(); ++q) {
                row.quantiles[q] = quantile(sample, kLetterLevels[q]);
            }
            if (scored == true_label) {
                const double median = row.quantiles[3];
                out.median_ground_truth[size_t(true_label)] = median;
                out.median_gt_above_0p6[size_t(true_label)] = median > 0.6;
            }
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

CompositionReport window_composition(const std::vector<data::Window>& windows,
                                     const std::vector<int>& preds) {
    if (windows.size() != preds.size()) {
        throw ContractError("window_composition: prediction count mismatch");
    }
    CompositionReport report;
    long correct_with_other = 0;
    long incorrect_zero_pred = 0;
    for (size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        if (w.step_labels.size() != size_t(w.block.cols()) ||
            w.step_labels.empty()) {
            throw ContractError(
                "window_composition: window lacks per-timestep labels");
        }
        const double len = double(w.step_labels.size());
        long gt = 0, pred = 0;
        for (int8_t l : w.step_labels) {
            if (l == w.label) ++gt;
            if (l == preds[i]) ++pred;
        }
        const double gt_frac = double(gt) / len;
        const auto bin = [](double f) {
            return size_t(std::min(9, int(f * 10)));
        };
        if (preds[i] == w.label) {
            report.n_correct++;
            report.correct_gt_hist[bin(gt_frac)]++;
            if (gt < long(w.step_labels.size())) ++correct_with_other;
        } else {
            report.n_incorrect++;
            report.incorrect_gt_hist[bin(gt_frac)]++;
            report.incorrect_pred_hist[bin(double(pred) / len)]++;
            if (pred == 0) ++incorrect_zero_pred;
        }
    }
    report.frac_correct_containing_other =
        report.n_correct ? double(correct_with_other) / double(report.n_correct)
                         : 0;
    report.frac_incorrect_zero_predicted =
        report.n_incorrect
            ? double(incorrect_zero_pred) / double(report.n_incorrect)
            : 0;
    return report;
}

MetricsReport compute_metrics(const std::vector<int>& preds,
                              const std::vector<int>& labels) {
    MetricsReport report;
    report.n = long(labels.size());
    report.accuracy = accuracy(preds, labels);
    report.balanced_accuracy = balanced_accuracy(preds, labels);
    report.confusion = confusion(preds, labels);
    for (int k = 0; k < kNumPrimitives; ++k) {
        report.class_counts[size_t(k)] = report.confusion.counts.row(k).sum();
        report.per_class_accuracy[size_t(k)] =
            report.class_counts[size_t(k)] > 0
                ? double(report.confusion.counts(k, k)) /
                      double(report.class_counts[size_t(k)])
                : 0;
    }
    return report;
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["n"] = n;
    j["accuracy"] = accuracy;
    j["balanced_accuracy"] = balanced_accuracy;
    for (int k = 0; k < kNumPrimitives; ++k) {
        const char* name = data::primitive_name(k);
        j["per_class"][name] = {{"n", class_counts[size_t(k)]},
                                {"accuracy", per_class_accuracy[size_t(k)]}};
    }
    auto rows = nlohmann::ordered_json::array();
    for (int r = 0; r < kNumPrimitives; ++r) {
        auto row = nlohmann::ordered_json::array();
        for (int c = 0; c < kNumPrimitives; ++c) {
            row.push_back(confusion.counts(r, c));
        }
        rows.push_back(row);
    }
    j["confusion_counts"] = rows;
    return j;
}

std::string MetricsReport::to_text() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "windows:            " << n << "\n";
    out << "accuracy:           " << 100 * accuracy << "%\n";
    out << "balanced accuracy:  " << 100 * balanced_accuracy << "%\n\n";
    out << std::left << std::setw(12) << "true\\pred";
    for (int c = 0; c < kNumPrimitives; ++c) {
        out << std::right << std::setw(12) << data::primitive_name(c);
    }
    out << std::right << std::setw(12) << "acc%" << "\n";
    const auto frac = confusion.row_normalized();
    for (int r = 0; r < kNumPrimitives; ++r) {
        out << std::left << std::setw(12) << data::primitive_name(r);
        for (int c = 0; c < kNumPrimitives; ++c) {
            out << std::right << std::setw(12) << confusion.counts(r, c);
        }
        out << std::right << std::setw(12) << 100 * frac(r, r) << "\n";
    }
    return out.str();
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::string& path) {
    csv::Writer w(path);
    w.field(std::string("true_label"));
    for (int c = 0; c < kNumPrimitives; ++c) {
        w.field(std::string(data::primitive_name(c)) + "_count");
    }
    for (int c = 0; c < kNumPrimitives; ++c) {
        w.field(std::string(data::primitive_name(c)) + "_fraction");
    }
    w.endrow();
    const auto frac = cm.row_normalized();
    for (int r = 0; r < kNumPrimitives; ++r) {
        w.field(std::string(data::primitive_name(r)));
        for (int c = 0; c < kNumPrimitives; ++c) w.field(cm.counts(r, c));
        for (int c = 0; c < kNumPrimitives; ++c) w.field(frac(r, c));
        w.endrow();
    }
    w.close();
}

void write_letter_values_csv(const LetterValues& lv, const std::string& path) {
    csv::Writer w(path);
    w.field(std::string("true_label")).field(std::string("scored_label"));
    w.field(std::string("n"));
    for (double level : kLetterLevels) w.field("q" + std::to_string(level));
    w.field(std::string("is_ground_truth"));
    w.field(std::string("median_gt_above_0.6"));
    w.endrow();
    for (const auto& row : lv.rows) {
        w.field(std::string(data::primitive_name(row.true_label)));
        w.field(std::string(data::primitive_name(row.scored_label)));
        w.field(row.n);
        for (double q : row.quantiles) w.field(q);
        const bool diag = row.true_label == row.scored_label;
        w.field(long(diag ? 1 : 0));
        w.field(long(diag && lv.median_gt_above_0p6[size_t(row.true_label)] ? 1
                                                                            : 0));
        w.endrow();
    }
    w.close();
}

void write_composition_csv(const CompositionReport& cr, const std::string& path) {
    csv::Writer w(path);
    w.field(std::string("bin_low_pct")).field(std::string("bin_high_pct"));
    w.field(std::string("correct_gt")).field(std::string("incorrect_gt"));
    w.field(std::string("incorrect_pred"));
    w.endrow();
    for (int b = 0; b < 10; ++b) {
        w.field(long(b * 10)).field(long(b * 10 + 10));
        w.field(cr.correct_gt_hist[size_t(b)]);
        w.field(cr.incorrect_gt_hist[size_t(b)]);
        w.field(cr.incorrect_pred_hist[size_t(b)]);
        w.endrow();
    }
    w.close();
}

}  // namespace primkit::eval

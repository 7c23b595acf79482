#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "primkit/graph.hpp"
#include "primkit/loss.hpp"

namespace primkit::nn {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0;
};

struct GradCheckReport {
    double max_rel_error = 0;
    double tolerance = 0;
    bool passed = false;
    std::vector<GradCheckEntry> entries;

    std::string worst() const {
        const GradCheckEntry* w = nullptr;
        for (const auto& e : entries) {
            if (!w || e.max_rel_error > w->max_rel_error) w = &e;
        }
        return w ? w->name : "";
    }
};

namespace detail {

inline double rel_error(double analytic, double numeric) {
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

}  // namespace detail

// Compares every analytic parameter gradient (and the input gradient)
// against central finite differences of the cross-entropy loss. Runs on the
// 64-bit path; the graph is put in train mode with dropout disabled so
// repeated forwards evaluate the same function.
inline GradCheckReport gradient_check(LayerGraph<double>& graph,
                                      Tensor<double> input,
                                      const std::vector<int>& labels,
                                      double tolerance, double h = 1e-5,
                                      bool check_input = true) {
    graph.set_mode(Mode::Train);
    graph.disable_stochastic();

    auto loss_at = [&](const Tensor<double>& x) {
        return softmax_cross_entropy(graph.forward(x), labels).loss;
    };

    graph.zero_grads();
    const Tensor<double> logits = graph.forward(input);
    const auto head = softmax_cross_entropy(logits, labels);
    const Tensor<double> input_grad = graph.backward(head.dlogits);

    GradCheckReport report;
    report.tolerance = tolerance;

    auto check_array = [&](const std::string& name, Tensor<double>* value,
                           const Tensor<double>& analytic) {
        GradCheckEntry entry{name, 0};
        for (Index i = 0; i < value->numel(); ++i) {
            const double saved = (*value)[i];
            (*value)[i] = saved + h;
            const double up = loss_at(input);
            (*value)[i] = saved - h;
            const double down = loss_at(input);
            (*value)[i] = saved;
            const double numeric = (up - down) / (2 * h);
            entry.max_rel_error = std::max(
                entry.max_rel_error, detail::rel_error(analytic[i], numeric));
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    };

    for (auto& p : graph.params()) {
        check_array(p.name, p.value, *p.grad);
    }
    if (check_input) {
        check_array("input", &input, input_grad);
    }
    report.passed = report.max_rel_error < tolerance;
    return report;
}

}  // namespace primkit::nn

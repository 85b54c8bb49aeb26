#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/nn/optim.hpp"
#include "p3d/nn/tensor.hpp"

namespace p3d::nn {

struct GradCheckBlock {
    std::string name;
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;

    double worst() const {
        double w = 0.0;
        for (const auto& b : blocks) w = std::max(w, b.max_rel_err);
        return w;
    }
    bool within(double tol) const { return worst() < tol; }
};

// Disagreements below atol are scored as zero: central differences at h = 1e-5
// carry cancellation noise of roughly eps*|loss|/(2h), so below that level the
// numeric side is uninformative no matter how exact the analytic gradient is.
inline double rel_err(double analytic, double numeric, double atol) {
    double d = std::abs(analytic - numeric);
    if (d <= atol) return 0.0;
    return d / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Central finite differences against analytic gradients, 64-bit only.
// loss_fn rebuilds the graph from current parameter values and returns the
// loss; when want_grad is true it must also run backward with grads zeroed
// beforehand. Internal randomness (dropout masks) must be reseeded
// identically on every call. coords_per_block == 0 checks every coordinate.
// A failing check is a report, not an exception.
inline GradCheckReport grad_check(const std::function<double(bool want_grad)>& loss_fn,
                                  std::vector<Parameter<double>*> params,
                                  double h = 1e-5, int coords_per_block = 0,
                                  uint64_t coord_seed = 0) {
    const double base_loss = loss_fn(true);
    const double atol = 1e-8 * std::max(1.0, std::abs(base_loss));
    std::vector<std::vector<double>> analytic;
    for (auto* p : params) {
        auto g = p->tensor.grad();
        analytic.emplace_back(g.begin(), g.end());
    }

    GradCheckReport report;
    Rng coord_rng = make_rng(coord_seed, 0x67726164);
    for (size_t bi = 0; bi < params.size(); ++bi) {
        auto* p = params[bi];
        GradCheckBlock block;
        block.name = p->name;
        const size_t n = p->tensor.size();
        std::vector<size_t> coords;
        if (coords_per_block <= 0 || static_cast<size_t>(coords_per_block) >= n) {
            coords.resize(n);
            for (size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            std::uniform_int_distribution<size_t> pick(0, n - 1);
            for (int i = 0; i < coords_per_block; ++i) coords.push_back(pick(coord_rng));
        }
        auto w = p->tensor.values();
        for (size_t ci : coords) {
            const double orig = w[ci];
            w[ci] = orig + h;
            const double fp = loss_fn(false);
            w[ci] = orig - h;
            const double fm = loss_fn(false);
            w[ci] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            block.max_rel_err = std::max(block.max_rel_err,
                                         rel_err(analytic[bi][ci], numeric, atol));
            ++block.coords_checked;
        }
        report.blocks.push_back(std::move(block));
    }
    return report;
}

}  // namespace p3d::nn

#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "p3d/model/network.hpp"
#include "p3d/train/trainer.hpp"

namespace p3d::train {

// One (variant, seed) training run. Failed runs keep their error text so the
// report can mark the cell and move on.
struct AblationCell {
    uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double mpjpe = 0.0;
    std::array<double, data::kNumActions> action_mpjpe{};
};

struct AblationRow {
    model::Variant variant = model::Variant::baseline;
    std::vector<AblationCell> cells;  // one per seed, in seed order

    int ok_count() const {
        int n = 0;
        for (const auto& c : cells) n += c.ok ? 1 : 0;
        return n;
    }
    double mean() const {
        double sum = 0.0;
        for (const auto& c : cells)
            if (c.ok) sum += c.mpjpe;
        return sum / ok_count();
    }
    double min() const {
        double m = 1e300;
        for (const auto& c : cells)
            if (c.ok) m = std::min(m, c.mpjpe);
        return m;
    }
    double max() const {
        double m = -1e300;
        for (const auto& c : cells)
            if (c.ok) m = std::max(m, c.mpjpe);
        return m;
    }
    double action_mean(int a) const {
        double sum = 0.0;
        for (const auto& c : cells)
            if (c.ok) sum += c.action_mpjpe[a];
        return sum / ok_count();
    }
};

struct AblationReport {
    std::vector<uint64_t> seeds;
    std::array<AblationRow, 4> rows;  // baseline, multi-reg, 2d-cls, full
};

// Table-style row labels, in report order.
inline const char* ablation_row_label(model::Variant v) {
    switch (v) {
        case model::Variant::baseline: return "Baseline";
        case model::Variant::multi_reg: return "Multi-reg";
        case model::Variant::cls_2d: return "2D-cls";
        case model::Variant::full: return "Multi-reg+2D-cls";
    }
    throw ConfigError("ablation: unknown variant");
}

// Hook applied to each freshly built network before its run; tests use it to
// poison selected cells.
using CellTweak = std::function<void(model::Variant, uint64_t, model::Network<double>&)>;

// Trains and evaluates all four variants for every seed on the same corpus.
// Cell (v, s) uses seed s for both weight init and data order, so rows are
// comparable column by column.
inline AblationReport run_ablation(const std::vector<data::Sample>& train_set,
                                   const std::vector<data::Sample>& test_set,
                                   const model::NetworkConfig& net_cfg,
                                   const TrainConfig& base_cfg,
                                   const std::vector<uint64_t>& seeds,
                                   const CellTweak& tweak = {}) {
    if (seeds.empty()) throw ConfigError("ablation: need at least one seed");
    if (test_set.empty()) throw ConfigError("ablation: need a test set to score");
    AblationReport report;
    report.seeds = seeds;
    constexpr std::array<model::Variant, 4> order = {
        model::Variant::baseline, model::Variant::multi_reg, model::Variant::cls_2d,
        model::Variant::full};
    for (size_t vi = 0; vi < order.size(); ++vi) {
        auto& row = report.rows[vi];
        row.variant = order[vi];
        for (uint64_t seed : seeds) {
            AblationCell cell;
            cell.seed = seed;
            try {
                model::Network<double> net(net_cfg, order[vi], seed);
                if (tweak) tweak(order[vi], seed, net);
                TrainConfig cfg = base_cfg;
                cfg.seed = seed;
                const auto result = train(net, train_set, test_set, cfg);
                const auto& final_eval = result.evals.back();
                cell.ok = true;
                cell.mpjpe = final_eval.overall;
                cell.action_mpjpe = final_eval.action_mpjpe;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
            row.cells.push_back(cell);
        }
    }
    return report;
}

namespace detail {

inline std::string csv_safe(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ' ';
    return s;
}

}  // namespace detail

// Summary table, one row per variant in Table-2 order. Aggregates cover the
// succeeded cells; a row with no successes prints "failed" in place of values.
inline std::string ablation_csv(const AblationReport& report) {
    std::string out = "variant,walking_mm,standing_mm,sitting_mm,mean_mpjpe_mm,"
                      "min_mpjpe_mm,max_mpjpe_mm,seeds_ok\n";
    for (const auto& row : report.rows) {
        out += ablation_row_label(row.variant);
        if (row.ok_count() == 0) {
            out += ",failed,failed,failed,failed,failed,failed";
        } else {
            for (int a = 0; a < data::kNumActions; ++a)
                out += strf(",%.10g", row.action_mean(a));
            out += strf(",%.10g,%.10g,%.10g", row.mean(), row.min(), row.max());
        }
        out += strf(",%d/%zu\n", row.ok_count(), row.cells.size());
    }
    return out;
}

// Per-cell detail, one row per (variant, seed).
inline std::string ablation_cells_csv(const AblationReport& report) {
    std::string out = "variant,seed,status,mpjpe_mm,walking_mm,standing_mm,sitting_mm\n";
    for (const auto& row : report.rows)
        for (const auto& c : row.cells) {
            out += strf("%s,%llu,", ablation_row_label(row.variant),
                        static_cast<unsigned long long>(c.seed));
            if (c.ok) {
                out += strf("ok,%.10g", c.mpjpe);
                for (int a = 0; a < data::kNumActions; ++a)
                    out += strf(",%.10g", c.action_mpjpe[a]);
            } else {
                out += strf("failed: %s,,,,", detail::csv_safe(c.error).c_str());
            }
            out += "\n";
        }
    return out;
}

}  // namespace p3d::train

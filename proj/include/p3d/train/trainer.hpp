#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/data/augment.hpp"
#include "p3d/data/dataset.hpp"
#include "p3d/data/generate.hpp"
#include "p3d/model/network.hpp"
#include "p3d/pose/grid.hpp"
#include "p3d/train/schedule.hpp"

namespace p3d::train {

// ---------------------------------------------------------------------------
// logging
// ---------------------------------------------------------------------------

struct LogRow {
    int epoch = 0;
    int iter = 0;  // global iteration count, 1-based
    double lr = 0.0;
    double lambda2d = 0.0;
    double lambda3d = 0.0;
    double loss2d = 0.0;
    double loss3d = 0.0;
    bool has_mpjpe = false;
    double mpjpe = 0.0;
};

struct TrainLog {
    std::vector<LogRow> rows;
};

inline std::string train_log_csv(const TrainLog& log) {
    std::string out = "epoch,iter,lr,lambda2d,lambda3d,loss2d,loss3d,test_mpjpe\n";
    for (const auto& r : log.rows) {
        out += strf("%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,", r.epoch, r.iter, r.lr,
                    r.lambda2d, r.lambda3d, r.loss2d, r.loss3d);
        if (r.has_mpjpe) out += strf("%.10g", r.mpjpe);
        out += "\n";
    }
    return out;
}

inline void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError(strf("train log: cannot write '%s'", path.string().c_str()));
    f << train_log_csv(log);
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
    std::array<double, data::kNumActions> action_mpjpe{};
    std::array<int, data::kNumActions> action_count{};
    double overall = 0.0;
    int count = 0;
};

inline std::string eval_report_csv(const EvalReport& r) {
    std::string out = "action,count,mpjpe_mm\n";
    for (int a = 0; a < data::kNumActions; ++a)
        out += strf("%s,%d,%.10g\n", data::action_name(a), r.action_count[a],
                    r.action_mpjpe[a]);
    out += strf("overall,%d,%.10g\n", r.count, r.overall);
    return out;
}

// Predicted and ground-truth poses are compared root-aligned at the pelvis.
using Predictor =
    std::function<std::vector<pose::Pose3D>(const std::vector<const data::Sample*>&)>;

inline EvalReport evaluate_with(const std::vector<data::Sample>& test, int batch,
                                const Predictor& predict) {
    if (test.empty()) throw ConfigError("evaluate: empty test set");
    if (batch < 1) throw ConfigError("evaluate: batch must be positive");
    EvalReport report;
    std::array<double, data::kNumActions> sums{};
    for (size_t begin = 0; begin < test.size(); begin += batch) {
        const size_t n = std::min<size_t>(batch, test.size() - begin);
        std::vector<const data::Sample*> chunk;
        for (size_t i = 0; i < n; ++i) chunk.push_back(&test[begin + i]);
        const auto poses = predict(chunk);
        if (poses.size() != n) throw ConfigError("evaluate: predictor returned wrong count");
        for (size_t i = 0; i < n; ++i) {
            const auto& s = *chunk[i];
            if (s.action_id >= data::kNumActions)
                throw DomainError(strf("evaluate: sample has action id %u", s.action_id));
            const double err = pose::mpjpe(pose::root_align(poses[i]),
                                           pose::root_align(s.pose3d));
            sums[s.action_id] += err;
            ++report.action_count[s.action_id];
        }
    }
    double total = 0.0;
    for (int a = 0; a < data::kNumActions; ++a) {
        total += sums[a];
        report.count += report.action_count[a];
        report.action_mpjpe[a] = report.action_count[a] > 0
                                     ? sums[a] / report.action_count[a]
                                     : 0.0;
    }
    report.overall = total / report.count;
    return report;
}

// ---------------------------------------------------------------------------
// batch assembly
// ---------------------------------------------------------------------------

inline std::array<double, pose::kTorsoEdges.size()> torso_average(
    const std::vector<data::Sample>& samples) {
    if (samples.empty()) throw ConfigError("torso_average: empty sample set");
    std::array<double, pose::kTorsoEdges.size()> avg{};
    for (const auto& s : samples)
        for (size_t e = 0; e < pose::kTorsoEdges.size(); ++e) {
            const auto [a, b] = pose::kTorsoEdges[e];
            avg[e] += (s.pose3d[a] - s.pose3d[b]).norm();
        }
    for (double& v : avg) v /= static_cast<double>(samples.size());
    return avg;
}

// Byte images map to [-1, 1]; tensors are [B,3,S,S] with channels planar.
template <typename T>
nn::Tensor<T> images_to_tensor(const std::vector<data::Image>& images) {
    if (images.empty()) throw ConfigError("images_to_tensor: empty batch");
    const int h = images[0].h, w = images[0].w;
    std::vector<T> v;
    v.reserve(images.size() * 3 * h * w);
    for (const auto& img : images) {
        if (img.h != h || img.w != w)
            throw ConfigError("images_to_tensor: mixed image sizes");
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    v.push_back(static_cast<T>((img.px(y, x)[c] - 127.5) / 127.5));
    }
    return nn::Tensor<T>::from_values({static_cast<int>(images.size()), 3, h, w},
                                      std::move(v));
}

template <typename T>
struct Batch {
    nn::Tensor<T> images;                   // [B,3,S,S]
    nn::Tensor<T> labels2d;                 // [B, 17 * N_g^2]
    std::vector<nn::Tensor<T>> targets3d;   // per effective root, [B, 48]
};

// Per-root relative coordinates of the normalized ground truth, root-major.
inline std::vector<double> relative_targets(const pose::Pose3D& gt_mm,
                                            const std::vector<int>& roots) {
    const auto gt = pose::normalize_pose(gt_mm);
    std::vector<double> out;
    out.reserve(roots.size() * 3 * (pose::kNumJoints - 1));
    for (int r : roots)
        for (int j = 0; j < pose::kNumJoints; ++j) {
            if (j == r) continue;
            const auto d = gt[j] - gt[r];
            out.insert(out.end(), {d.x, d.y, d.z});
        }
    return out;
}

// Assembles one training batch: per-sample random crop and color jitter from
// a stream derived from (seed, epoch, position), soft grid labels from the
// cropped 2D joints, cached 3D targets.
template <typename T>
Batch<T> assemble_train_batch(const std::vector<data::Sample>& set,
                              const std::vector<int>& order, size_t begin, size_t count,
                              const model::NetworkConfig& cfg,
                              const std::vector<int>& roots,
                              const std::vector<std::vector<double>>& target_cache,
                              const data::RgbEigenpairs& pca, uint64_t seed, int epoch) {
    const pose::GridGeometry geom(cfg.n_g, cfg.input_size);
    const int grid = geom.cells();
    const int label_w = pose::kNumJoints * grid;
    const int rel_w = 3 * (pose::kNumJoints - 1);

    std::vector<data::Image> images;
    std::vector<T> labels;
    labels.reserve(count * label_w);
    std::vector<std::vector<T>> targets(roots.size());

    for (size_t k = 0; k < count; ++k) {
        const size_t position = begin + k;
        const int idx = order[position];
        const auto& s = set[idx];
        Rng rng = make_rng(seed, (static_cast<uint64_t>(epoch) << 20) + position + 1);
        auto crop = data::random_crop(s.image, s.pose2d, cfg.input_size, rng);
        images.push_back(data::pca_color_augment(crop.image, pca, rng));
        for (int j = 0; j < pose::kNumJoints; ++j) {
            const auto dist = pose::soft_label(crop.pose2d[j], geom);
            for (double p : dist) labels.push_back(static_cast<T>(p));
        }
        const auto& cached = target_cache[idx];
        for (size_t ri = 0; ri < roots.size(); ++ri)
            for (int i = 0; i < rel_w; ++i)
                targets[ri].push_back(static_cast<T>(cached[ri * rel_w + i]));
    }

    Batch<T> batch;
    batch.images = images_to_tensor<T>(images);
    batch.labels2d = nn::Tensor<T>::from_values({static_cast<int>(count), label_w},
                                                std::move(labels));
    for (auto& t : targets)
        batch.targets3d.push_back(nn::Tensor<T>::from_values(
            {static_cast<int>(count), rel_w}, std::move(t)));
    return batch;
}

// Deterministic center crops, no augmentation.
inline std::vector<data::Image> center_crops(const std::vector<const data::Sample*>& chunk,
                                             int size) {
    Rng unused(0);
    std::vector<data::Image> images;
    for (const auto* s : chunk)
        images.push_back(data::random_crop(s->image, s->pose2d, size, unused, true).image);
    return images;
}

template <typename T>
EvalReport evaluate(model::Network<T>& net, const std::vector<data::Sample>& test,
                    int batch) {
    double torso_sum = 0.0;
    for (double v : net.torso_avg()) torso_sum += v;
    if (torso_sum <= 0.0)
        throw ConfigError("evaluate: network has no torso averages for scale recovery");
    return evaluate_with(test, batch, [&](const std::vector<const data::Sample*>& chunk) {
        const auto images = center_crops(chunk, net.config().input_size);
        return net.predict_batch(images_to_tensor<T>(images), net.torso_avg());
    });
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TrainResult {
    TrainLog log;
    std::array<double, pose::kTorsoEdges.size()> torso_avg{};
    std::vector<double> iter_loss2d;  // every iteration, in order
    std::vector<double> iter_loss3d;
    std::vector<double> iter_loss_total;  // weighted sum actually stepped on
    std::vector<int> eval_epochs;
    std::vector<EvalReport> evals;
};

// Mean of non-overlapping windows over a loss history; the tail partial
// window is kept. Used for the smoothed-convergence checks.
inline std::vector<double> smoothed_windows(const std::vector<double>& values, int window) {
    if (window <= 0) throw ConfigError("smoothed_windows: window must be positive");
    std::vector<double> out;
    for (size_t begin = 0; begin < values.size(); begin += window) {
        const size_t end = std::min(values.size(), begin + window);
        double sum = 0.0;
        for (size_t i = begin; i < end; ++i) sum += values[i];
        out.push_back(sum / static_cast<double>(end - begin));
    }
    return out;
}

template <typename T>
TrainResult train(model::Network<T>& net, const std::vector<data::Sample>& train_set,
                  const std::vector<data::Sample>& test_set, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir = {}) {
    cfg.validate();
    if (train_set.size() < 2)
        throw ConfigError("train: need at least 2 training samples for batch statistics");
    if (train_set[0].image.h < net.config().input_size)
        throw ConfigError(strf("train: %dpx images cannot cover the %dpx input",
                               train_set[0].image.h, net.config().input_size));
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    TrainResult result;
    result.torso_avg = torso_average(train_set);
    net.set_torso_avg(result.torso_avg);

    const auto roots = net.effective_roots();
    std::vector<std::vector<double>> target_cache;
    target_cache.reserve(train_set.size());
    for (const auto& s : train_set) target_cache.push_back(relative_targets(s.pose3d, roots));

    data::RgbEigenpairs pca;
    {
        std::vector<data::Image> images;
        images.reserve(train_set.size());
        for (const auto& s : train_set) images.push_back(s.image);
        pca = data::compute_rgb_pca(images);
    }

    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng drop_rng = make_rng(cfg.seed, 0x64726f70ull);

    int global_iter = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        const auto weights = lambdas_at(epoch, cfg);
        {
            Rng shuffle_rng = make_rng(cfg.seed, 0x73687566ull + epoch);
            std::shuffle(order.begin(), order.end(), shuffle_rng);
        }

        for (size_t begin = 0; begin < order.size(); begin += cfg.batch) {
            const size_t count = std::min<size_t>(cfg.batch, order.size() - begin);
            if (count < 2) break;  // batchnorm needs a variance
            ++global_iter;

            auto batch = assemble_train_batch<T>(train_set, order, begin, count,
                                                 net.config(), roots, target_cache, pca,
                                                 cfg.seed, epoch);
            auto out = net.forward(batch.images, nn::Phase::train, drop_rng);
            auto terms = net.loss(out, batch.labels2d, batch.targets3d,
                                  static_cast<T>(weights.lambda_2d),
                                  static_cast<T>(weights.lambda_3d));
            const double l2d = terms.loss2d.item();
            const double l3d = terms.loss3d.item();
            if (!std::isfinite(l2d) || !std::isfinite(l3d)) {
                if (!out_dir.empty()) net.save(out_dir / "diagnostic.p3ck");
                throw NumericError(strf(
                    "train: non-finite loss at epoch %d iteration %d (2D %g, 3D %g)", epoch,
                    global_iter, l2d, l3d));
            }
            nn::zero_grads(net.params());
            terms.total.backward();
            nn::sgd_step(net.params(), static_cast<T>(lr), static_cast<T>(cfg.momentum),
                         static_cast<T>(cfg.weight_decay));

            result.iter_loss2d.push_back(l2d);
            result.iter_loss3d.push_back(l3d);
            result.iter_loss_total.push_back(weights.lambda_2d * l2d +
                                             weights.lambda_3d * l3d);
            if (global_iter % cfg.log_period == 0)
                result.log.rows.push_back({epoch, global_iter, lr, weights.lambda_2d,
                                           weights.lambda_3d, l2d, l3d, false, 0.0});
        }

        const bool eval_now = !test_set.empty() &&
                              ((epoch + 1) % cfg.eval_period == 0 || epoch == cfg.epochs - 1);
        if (eval_now) {
            const auto report = evaluate(net, test_set, cfg.batch);
            result.eval_epochs.push_back(epoch);
            result.evals.push_back(report);
            auto& rows = result.log.rows;
            if (!rows.empty() && rows.back().epoch == epoch && rows.back().iter == global_iter) {
                rows.back().has_mpjpe = true;
                rows.back().mpjpe = report.overall;
            } else {
                rows.push_back({epoch, global_iter, lr, weights.lambda_2d, weights.lambda_3d,
                                result.iter_loss2d.empty() ? 0.0 : result.iter_loss2d.back(),
                                result.iter_loss3d.empty() ? 0.0 : result.iter_loss3d.back(),
                                true, report.overall});
            }
            if (!out_dir.empty()) net.save(out_dir / strf("ckpt_epoch%d.p3ck", epoch));
        }
    }
    return result;
}

}  // namespace p3d::train

#pragma once

#include <map>
#include <string>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/model/config.hpp"
#include "p3d/nn/checkpoint.hpp"
#include "p3d/nn/ops.hpp"
#include "p3d/nn/optim.hpp"
#include "p3d/pose/pose_ops.hpp"

namespace p3d::model {

enum class Variant : int { baseline = 0, multi_reg = 1, cls_2d = 2, full = 3 };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::multi_reg: return "multi-reg";
        case Variant::cls_2d: return "2d-cls";
        case Variant::full: return "full";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::baseline, Variant::multi_reg, Variant::cls_2d, Variant::full})
        if (s == variant_name(v)) return v;
    throw ConfigError(strf("variant: unknown name '%s'", s.c_str()));
}

// Probability injection feeds the softmax outputs back into the 3D branch.
inline bool variant_injects(Variant v) {
    return v == Variant::cls_2d || v == Variant::full;
}

// Multi-root variants regress one relative pose per root joint.
inline bool variant_multi_root(Variant v) {
    return v == Variant::multi_reg || v == Variant::full;
}

// The two-branch pose network. One instance owns its parameters, momentum
// buffers and batchnorm running statistics; forward() builds a fresh graph
// on the shared weight tensors each call.
template <typename T>
class Network {
  public:
    Network(NetworkConfig cfg, Variant variant, uint64_t init_seed)
        : cfg_(std::move(cfg)), variant_(variant), init_seed_(init_seed) {
        cfg_.validate();
        build();
        init_weights();
    }

    const NetworkConfig& config() const { return cfg_; }
    Variant variant() const { return variant_; }
    uint64_t init_seed() const { return init_seed_; }

    // Roots actually wired: single-root variants use the first configured root.
    std::vector<int> effective_roots() const {
        if (variant_multi_root(variant_)) return cfg_.roots;
        return {cfg_.roots.front()};
    }

    std::vector<nn::Parameter<T>>& params() { return params_; }
    const std::vector<nn::Parameter<T>>& params() const { return params_; }

    nn::Parameter<T>& param(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return p;
        throw ConfigError(strf("network: no parameter named '%s'", name.c_str()));
    }

    nn::BatchNormState<T>& bn_state(const std::string& layer) {
        auto it = bn_.find(layer);
        if (it == bn_.end())
            throw ConfigError(strf("network: no batchnorm layer named '%s'", layer.c_str()));
        return it->second;
    }

    size_t parameter_count() const {
        size_t n = 0;
        for (const auto& p : params_) n += p.tensor.size();
        return n;
    }

    // Parameters trained exclusively by the 2D loss (behind the stop gradient).
    std::vector<std::string> names_2d_branch() const {
        std::vector<std::string> out;
        for (const char* base : {"fc1_2d", "fc2_2d"})
            for (const auto& p : params_)
                if (p.name.rfind(base, 0) == 0) out.push_back(p.name);
        return out;
    }

    void set_torso_avg(const std::array<double, pose::kTorsoEdges.size()>& avg) {
        torso_avg_ = avg;
    }
    const std::array<double, pose::kTorsoEdges.size()>& torso_avg() const {
        return torso_avg_;
    }

    struct Output {
        nn::Tensor<T> probs2d;                    // [B, 17 * N_g^2], joint-major
        std::vector<nn::Tensor<T>> probs_joint;   // 17 tensors [B, N_g^2]
        std::vector<nn::Tensor<T>> rel3d;         // per effective root, [B, 48]
    };

    Output forward(const nn::Tensor<T>& images, nn::Phase phase, Rng& rng) {
        check_input(images);
        using namespace nn;
        Tensor<T> h = images;
        for (int i = 0; i < 5; ++i) {
            const auto& cs = cfg_.conv[i];
            const std::string base = strf("conv%d", i + 1);
            h = conv2d(h, tp(base + ".weight"), tp(base + ".bias"), cs.stride, cs.pad);
            h = batchnorm(h, tp(base + ".bn.scale"), tp(base + ".bn.shift"),
                          bn_.at(base + ".bn"), phase);
            h = relu(h);
            if (i == 0) h = maxpool(h, cfg_.pool[0].size, cfg_.pool[0].stride);
            if (i == 1) h = maxpool(h, cfg_.pool[1].size, cfg_.pool[1].stride);
            if (i == 4) h = maxpool(h, cfg_.pool[2].size, cfg_.pool[2].stride);
        }
        h = flatten(h);

        Tensor<T> a = linear(h, tp("fc1_2d.weight"), tp("fc1_2d.bias"));
        a = relu(batchnorm(a, tp("fc1_2d.bn.scale"), tp("fc1_2d.bn.shift"),
                           bn_.at("fc1_2d.bn"), phase));
        a = dropout(a, cfg_.dropout, phase, rng);
        Tensor<T> logits = linear(a, tp("fc2_2d.weight"), tp("fc2_2d.bias"));

        Output out;
        const int grid = cfg_.n_g * cfg_.n_g;
        for (int j = 0; j < pose::kNumJoints; ++j)
            out.probs_joint.push_back(softmax(slice_cols(logits, j * grid, grid)));
        out.probs2d = concat(out.probs_joint);

        Tensor<T> z = linear(h, tp("fc1_3d.weight"), tp("fc1_3d.bias"));
        z = relu(batchnorm(z, tp("fc1_3d.bn.scale"), tp("fc1_3d.bn.shift"),
                           bn_.at("fc1_3d.bn"), phase));
        z = dropout(z, cfg_.dropout, phase, rng);
        if (variant_injects(variant_)) {
            Tensor<T> q = stop_gradient(out.probs2d);
            q = relu(linear(q, tp("fc_probs_2d.weight"), tp("fc_probs_2d.bias")));
            z = concat(std::vector<Tensor<T>>{z, q});
        }

        for (int r : effective_roots()) {
            const std::string base = head_name(r);
            Tensor<T> hr = linear(z, tp(base + ".hidden.weight"), tp(base + ".hidden.bias"));
            hr = relu(batchnorm(hr, tp(base + ".hidden.bn.scale"),
                                tp(base + ".hidden.bn.shift"), bn_.at(base + ".hidden.bn"),
                                phase));
            hr = dropout(hr, cfg_.dropout, phase, rng);
            out.rel3d.push_back(linear(hr, tp(base + ".out.weight"), tp(base + ".out.bias")));
        }
        return out;
    }

    // Eval-mode forward; dropout never draws, so the rng is a dummy.
    Output forward(const nn::Tensor<T>& images) {
        Rng dummy(0);
        return forward(images, nn::Phase::eval, dummy);
    }

    struct LossTerms {
        nn::Tensor<T> total;
        nn::Tensor<T> loss2d;
        nn::Tensor<T> loss3d;
    };

    // labels2d: [B, 17 * N_g^2] soft grid labels; targets3d: per effective
    // root [B, 48] normalized relative coordinates. Both batch-averaged.
    LossTerms loss(const Output& out, const nn::Tensor<T>& labels2d,
                   const std::vector<nn::Tensor<T>>& targets3d, T lambda2d, T lambda3d) {
        using namespace nn;
        const int grid = cfg_.n_g * cfg_.n_g;
        if (targets3d.size() != out.rel3d.size())
            throw ConfigError(strf("loss: %zu 3D targets for %zu heads", targets3d.size(),
                                   out.rel3d.size()));
        std::vector<Tensor<T>> ce;
        for (int j = 0; j < pose::kNumJoints; ++j)
            ce.push_back(cross_entropy_rows(out.probs_joint[j],
                                            slice_cols(labels2d, j * grid, grid)));
        std::vector<Tensor<T>> se;
        for (size_t k = 0; k < out.rel3d.size(); ++k)
            se.push_back(sum_squared_error(out.rel3d[k], targets3d[k]));

        LossTerms terms;
        terms.loss2d = add_n(ce);
        terms.loss3d = add_n(se);
        terms.total = add_n(std::vector<Tensor<T>>{scale(terms.loss2d, lambda2d),
                                                   scale(terms.loss3d, lambda3d)});
        return terms;
    }

    // Per-root full poses from one forward output row, root joint at zero.
    std::vector<pose::Pose3D> assemble_estimates(const Output& out, int row) const {
        std::vector<pose::Pose3D> est;
        const auto roots = effective_roots();
        for (size_t k = 0; k < roots.size(); ++k) {
            const auto vals = out.rel3d[k].values();
            const int cols = 3 * (pose::kNumJoints - 1);
            pose::Pose3D p{};
            int slot = 0;
            for (int j = 0; j < pose::kNumJoints; ++j) {
                if (j == roots[k]) continue;
                const size_t o = static_cast<size_t>(row) * cols + 3 * slot;
                p[j] = {static_cast<double>(vals[o]), static_cast<double>(vals[o + 1]),
                        static_cast<double>(vals[o + 2])};
                ++slot;
            }
            est.push_back(p);
        }
        return est;
    }

    // Eval-mode pose estimates in millimeters for a whole batch.
    std::vector<pose::Pose3D> predict_batch(
        const nn::Tensor<T>& images,
        const std::array<double, pose::kTorsoEdges.size()>& avg_lengths) {
        Output out = forward(images);
        const int batch = images.shape()[0];
        std::vector<pose::Pose3D> poses;
        for (int b = 0; b < batch; ++b) {
            const auto est = assemble_estimates(out, b);
            poses.push_back(pose::recover_scale(pose::average_multi_root(est), avg_lengths));
        }
        return poses;
    }

    pose::Pose3D predict_pose(const nn::Tensor<T>& image,
                              const std::array<double, pose::kTorsoEdges.size()>& avg_lengths) {
        if (image.shape().empty() || image.shape()[0] != 1)
            throw ConfigError("predict_pose: expected a single-image batch");
        return predict_batch(image, avg_lengths)[0];
    }

    void save(const std::filesystem::path& path, bool include_momentum = true) const {
        std::vector<nn::Blob> blobs;
        const uint8_t dtype = std::is_same_v<T, double> ? 1 : 0;
        {
            nn::Blob meta;
            meta.name = "__config__";
            meta.dtype = 1;
            meta.values = encode_config(cfg_);
            meta.dims = {static_cast<uint32_t>(meta.values.size())};
            blobs.push_back(std::move(meta));
            nn::Blob var{"__variant__", 1, {1}, {static_cast<double>(variant_)}};
            blobs.push_back(std::move(var));
            nn::Blob torso;
            torso.name = "__torso_avg__";
            torso.dtype = 1;
            torso.dims = {static_cast<uint32_t>(torso_avg_.size())};
            torso.values.assign(torso_avg_.begin(), torso_avg_.end());
            blobs.push_back(std::move(torso));
        }
        for (const auto& p : params_) {
            nn::Blob b;
            b.name = p.name;
            b.dtype = dtype;
            for (int d : p.tensor.shape()) b.dims.push_back(static_cast<uint32_t>(d));
            b.values.assign(p.tensor.values().begin(), p.tensor.values().end());
            blobs.push_back(std::move(b));
            if (include_momentum) {
                nn::Blob m;
                m.name = p.name + ".momentum";
                m.dtype = dtype;
                m.dims = {static_cast<uint32_t>(p.momentum.size())};
                m.values.assign(p.momentum.begin(), p.momentum.end());
                blobs.push_back(std::move(m));
            }
        }
        for (const auto& [layer, state] : bn_) {
            nn::Blob mean{layer + ".running_mean", dtype, {}, {}};
            mean.dims = {static_cast<uint32_t>(state.running_mean.size())};
            mean.values.assign(state.running_mean.begin(), state.running_mean.end());
            blobs.push_back(std::move(mean));
            nn::Blob var{layer + ".running_var", dtype, {}, {}};
            var.dims = {static_cast<uint32_t>(state.running_var.size())};
            var.values.assign(state.running_var.begin(), state.running_var.end());
            blobs.push_back(std::move(var));
        }
        nn::write_checkpoint(path, blobs);
    }

    static Network load(const std::filesystem::path& path) {
        const auto blobs = nn::read_checkpoint(path);
        auto find = [&](const std::string& name) -> const nn::Blob* {
            for (const auto& b : blobs)
                if (b.name == name) return &b;
            return nullptr;
        };
        auto require = [&](const std::string& name) -> const nn::Blob& {
            const nn::Blob* b = find(name);
            if (!b)
                throw ConfigError(strf("checkpoint: missing blob '%s' in '%s'", name.c_str(),
                                       path.string().c_str()));
            return *b;
        };
        const NetworkConfig cfg = decode_config(require("__config__").values);
        const auto& var_blob = require("__variant__");
        const int var_id = static_cast<int>(var_blob.values.at(0));
        if (var_id < 0 || var_id > 3)
            throw ConfigError(strf("checkpoint: bad variant id %d", var_id));

        Network net(cfg, static_cast<Variant>(var_id), 0);
        const auto& torso = require("__torso_avg__");
        if (torso.values.size() != net.torso_avg_.size())
            throw ConfigError("checkpoint: malformed torso average blob");
        std::copy(torso.values.begin(), torso.values.end(), net.torso_avg_.begin());

        for (auto& p : net.params_) {
            const auto& b = require(p.name);
            if (b.numel() != p.tensor.size())
                throw ConfigError(strf("checkpoint: blob '%s' has %zu values, expected %zu",
                                       p.name.c_str(), b.numel(), p.tensor.size()));
            auto dst = p.tensor.values();
            for (size_t i = 0; i < b.values.size(); ++i) dst[i] = static_cast<T>(b.values[i]);
            if (const nn::Blob* m = find(p.name + ".momentum")) {
                if (m->numel() != p.momentum.size())
                    throw ConfigError(strf("checkpoint: momentum size mismatch for '%s'",
                                           p.name.c_str()));
                for (size_t i = 0; i < m->values.size(); ++i)
                    p.momentum[i] = static_cast<T>(m->values[i]);
            }
        }
        for (auto& [layer, state] : net.bn_) {
            const auto& mean = require(layer + ".running_mean");
            const auto& var = require(layer + ".running_var");
            if (mean.numel() != state.running_mean.size() ||
                var.numel() != state.running_var.size())
                throw ConfigError(strf("checkpoint: batchnorm size mismatch for '%s'",
                                       layer.c_str()));
            for (size_t i = 0; i < mean.values.size(); ++i)
                state.running_mean[i] = static_cast<T>(mean.values[i]);
            for (size_t i = 0; i < var.values.size(); ++i)
                state.running_var[i] = static_cast<T>(var.values[i]);
        }
        return net;
    }

    std::string head_name(int root) const {
        return strf("head_%s", std::string(pose::kJointNames[root]).c_str());
    }

  private:
    void check_input(const nn::Tensor<T>& images) const {
        const auto& s = images.shape();
        if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.input_size || s[3] != cfg_.input_size)
            throw ConfigError(strf("forward: expected images [B,3,%d,%d]", cfg_.input_size,
                                   cfg_.input_size));
    }

    nn::Tensor<T>& tp(const std::string& name) { return param(name).tensor; }

    void add_param(const std::string& name, std::vector<int> shape, bool exempt) {
        params_.emplace_back(name, nn::Tensor<T>::zeros(std::move(shape), true), exempt);
    }

    void add_bn(const std::string& layer, int channels) {
        add_param(layer + ".scale", {channels}, true);
        add_param(layer + ".shift", {channels}, true);
        bn_.emplace(layer, nn::BatchNormState<T>(channels));
    }

    void build() {
        int in_ch = 3;
        for (int i = 0; i < 5; ++i) {
            const auto& cs = cfg_.conv[i];
            const std::string base = strf("conv%d", i + 1);
            add_param(base + ".weight", {cs.filters, in_ch, cs.kernel, cs.kernel}, false);
            add_param(base + ".bias", {cs.filters}, true);
            add_bn(base + ".bn", cs.filters);
            in_ch = cs.filters;
        }
        const int flat = cfg_.flatten_width();
        add_param("fc1_2d.weight", {flat, cfg_.fc1_2d}, false);
        add_param("fc1_2d.bias", {cfg_.fc1_2d}, true);
        add_bn("fc1_2d.bn", cfg_.fc1_2d);
        add_param("fc2_2d.weight", {cfg_.fc1_2d, cfg_.fc2_2d}, false);
        add_param("fc2_2d.bias", {cfg_.fc2_2d}, true);
        add_param("fc1_3d.weight", {flat, cfg_.fc1_3d}, false);
        add_param("fc1_3d.bias", {cfg_.fc1_3d}, true);
        add_bn("fc1_3d.bn", cfg_.fc1_3d);
        if (variant_injects(variant_)) {
            add_param("fc_probs_2d.weight", {cfg_.fc2_2d, cfg_.fc_probs_2d}, false);
            add_param("fc_probs_2d.bias", {cfg_.fc_probs_2d}, true);
        }
        const int head_in = variant_injects(variant_) ? cfg_.fc_2d3d : cfg_.fc1_3d;
        for (int r : effective_roots()) {
            const std::string base = head_name(r);
            add_param(base + ".hidden.weight", {head_in, cfg_.fc2_3d}, false);
            add_param(base + ".hidden.bias", {cfg_.fc2_3d}, true);
            add_bn(base + ".hidden.bn", cfg_.fc2_3d);
            add_param(base + ".out.weight", {cfg_.fc2_3d, 3 * (pose::kNumJoints - 1)}, false);
            add_param(base + ".out.bias", {3 * (pose::kNumJoints - 1)}, true);
        }
    }

    // Fan-in scaled gaussians; gain 2 into relu, 1 into softmax/regression
    // outputs. Biases start at zero, batchnorm at identity.
    void init_weights() {
        Rng rng = make_rng(init_seed_, 0x6d6f64656cull);
        std::normal_distribution<double> unit(0.0, 1.0);
        for (auto& p : params_) {
            const auto& name = p.name;
            if (name.find(".bn.scale") != std::string::npos) {
                std::fill(p.tensor.values().begin(), p.tensor.values().end(), T(1));
                continue;
            }
            if (name.find(".bias") != std::string::npos ||
                name.find(".bn.shift") != std::string::npos)
                continue;  // zeros
            const auto& s = p.tensor.shape();
            size_t fan_in = p.tensor.size();
            if (s.size() == 4)
                fan_in = static_cast<size_t>(s[1]) * s[2] * s[3];  // [F,C,k,k]
            else if (s.size() == 2)
                fan_in = static_cast<size_t>(s[0]);  // [D,E]
            const bool output_layer = name.rfind("fc2_2d", 0) == 0 ||
                                      name.find(".out.") != std::string::npos;
            const double gain = output_layer ? 1.0 : 2.0;
            const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
            for (T& v : p.tensor.values()) v = static_cast<T>(stddev * unit(rng));
        }
    }

    NetworkConfig cfg_;
    Variant variant_;
    uint64_t init_seed_;
    std::vector<nn::Parameter<T>> params_;
    std::map<std::string, nn::BatchNormState<T>> bn_;
    std::array<double, pose::kTorsoEdges.size()> torso_avg_{};
};

}  // namespace p3d::model

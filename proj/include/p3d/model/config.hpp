#pragma once

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/pose/joints.hpp"
#include "p3d/pose/types.hpp"

namespace p3d::model {

struct ConvSpec {
    int filters = 0;
    int kernel = 0;
    int stride = 1;
    int pad = 0;
};

struct PoolSpec {
    int size = 0;
    int stride = 1;
};

enum class Preset : int { desk = 0, paper = 1, custom = 2 };

inline const char* preset_name(Preset p) {
    switch (p) {
        case Preset::desk: return "desk";
        case Preset::paper: return "paper";
        default: return "custom";
    }
}

// Topology of the two-branch network. The trunk is five conv layers with
// pooling after conv1, conv2 and conv5. All widths are explicit so a config
// file can reshape the net without touching code.
struct NetworkConfig {
    Preset preset = Preset::custom;
    int input_size = 0;
    int n_g = 0;
    double dropout = 0.5;
    std::array<ConvSpec, 5> conv{};
    std::array<PoolSpec, 3> pool{};
    int fc1_2d = 0;
    int fc2_2d = 0;
    int fc1_3d = 0;
    int fc_probs_2d = 0;
    int fc_2d3d = 0;
    int fc2_3d = 0;
    std::vector<int> roots;

    int n_roots() const { return static_cast<int>(roots.size()); }

    // Spatial side length after each trunk stage, in wiring order:
    // conv1, pool1, conv2, pool2, conv3, conv4, conv5, pool3.
    std::vector<int> trunk_spatial() const {
        std::vector<int> sizes;
        int s = input_size;
        auto conv_out = [&](const ConvSpec& c) {
            if (s + 2 * c.pad < c.kernel)
                throw ConfigError(strf("config: conv kernel %d exceeds padded input %d",
                                       c.kernel, s + 2 * c.pad));
            return (s + 2 * c.pad - c.kernel) / c.stride + 1;
        };
        auto pool_out = [&](const PoolSpec& p) {
            if (s < p.size)
                throw ConfigError(strf("config: pool size %d exceeds input %d", p.size, s));
            return (s - p.size) / p.stride + 1;
        };
        s = conv_out(conv[0]); sizes.push_back(s);
        s = pool_out(pool[0]); sizes.push_back(s);
        s = conv_out(conv[1]); sizes.push_back(s);
        s = pool_out(pool[1]); sizes.push_back(s);
        s = conv_out(conv[2]); sizes.push_back(s);
        s = conv_out(conv[3]); sizes.push_back(s);
        s = conv_out(conv[4]); sizes.push_back(s);
        s = pool_out(pool[2]); sizes.push_back(s);
        return sizes;
    }

    int flatten_width() const {
        return conv[4].filters * trunk_spatial().back() * trunk_spatial().back();
    }

    void validate() const {
        if (input_size < 8)
            throw ConfigError(strf("config: input_size %d is too small", input_size));
        if (n_g < 2) throw ConfigError(strf("config: n_g %d is too small", n_g));
        for (size_t i = 0; i < conv.size(); ++i) {
            const auto& c = conv[i];
            if (c.filters <= 0 || c.kernel <= 0 || c.stride <= 0 || c.pad < 0 ||
                c.pad >= c.kernel)
                throw ConfigError(strf("config: conv%zu spec (%d,%d,%d,%d) is invalid",
                                       i + 1, c.filters, c.kernel, c.stride, c.pad));
        }
        for (size_t i = 0; i < pool.size(); ++i) {
            if (pool[i].size <= 0 || pool[i].stride <= 0)
                throw ConfigError(strf("config: pool%zu spec (%d,%d) is invalid", i + 1,
                                       pool[i].size, pool[i].stride));
        }
        for (int s : trunk_spatial())
            if (s <= 0) throw ConfigError("config: trunk spatial size collapsed to zero");
        if (fc1_2d <= 0 || fc2_2d <= 0 || fc1_3d <= 0 || fc_probs_2d <= 0 ||
            fc_2d3d <= 0 || fc2_3d <= 0)
            throw ConfigError("config: all fc widths must be positive");
        if (fc2_2d != n_g * n_g * pose::kNumJoints)
            throw ConfigError(strf("config: fc2_2d is %d but the %d joint grids need %d",
                                   fc2_2d, pose::kNumJoints,
                                   n_g * n_g * pose::kNumJoints));
        if (fc_2d3d != fc1_3d + fc_probs_2d)
            throw ConfigError(strf("config: fc_2d3d is %d, expected fc1_3d + fc_probs_2d = %d",
                                   fc_2d3d, fc1_3d + fc_probs_2d));
        if (dropout < 0.0 || dropout >= 1.0)
            throw ConfigError(strf("config: dropout %.3f outside [0, 1)", dropout));
        pose::RootSet check(roots);  // validates ids and uniqueness
    }
};

inline bool same_architecture(const NetworkConfig& a, const NetworkConfig& b) {
    auto key = [](const NetworkConfig& c) {
        std::vector<double> k{static_cast<double>(c.input_size),
                              static_cast<double>(c.n_g), c.dropout};
        for (const auto& cv : c.conv)
            for (int v : {cv.filters, cv.kernel, cv.stride, cv.pad})
                k.push_back(v);
        for (const auto& p : c.pool)
            for (int v : {p.size, p.stride}) k.push_back(v);
        for (int v : {c.fc1_2d, c.fc2_2d, c.fc1_3d, c.fc_probs_2d, c.fc_2d3d, c.fc2_3d})
            k.push_back(v);
        for (int r : c.roots) k.push_back(r);
        return k;
    };
    return key(a) == key(b);
}

inline std::vector<int> default_roots() {
    using namespace pose;
    return {kPelvis, kThorax, kLeftShoulder, kRightShoulder, kLeftHip, kRightHip};
}

// 64-px preset sized for CPU runs: 2x2x64 trunk output, modest fc widths.
inline NetworkConfig preset_desk() {
    NetworkConfig c;
    c.preset = Preset::desk;
    c.input_size = 64;
    c.n_g = 8;
    c.conv = {{{32, 7, 2, 0}, {64, 5, 1, 0}, {96, 3, 1, 1}, {96, 3, 1, 1}, {64, 3, 1, 1}}};
    c.pool = {{{3, 2}, {3, 2}, {2, 2}}};
    c.fc1_2d = 1024;
    c.fc2_2d = 8 * 8 * pose::kNumJoints;  // 1088
    c.fc1_3d = 512;
    c.fc_probs_2d = 128;
    c.fc_2d3d = 640;
    c.fc2_3d = 256;
    c.roots = default_roots();
    c.validate();
    return c;
}

// Full-size preset: 225-px crops, 16x16 grids per joint.
inline NetworkConfig preset_paper() {
    NetworkConfig c;
    c.preset = Preset::paper;
    c.input_size = 225;
    c.n_g = 16;
    c.conv = {{{48, 7, 2, 0}, {128, 5, 1, 0}, {192, 3, 1, 1}, {192, 3, 1, 1}, {128, 3, 1, 1}}};
    c.pool = {{{3, 2}, {3, 2}, {4, 4}}};
    c.fc1_2d = 2048;
    c.fc2_2d = 16 * 16 * pose::kNumJoints;  // 4352
    c.fc1_3d = 1024;
    c.fc_probs_2d = 256;
    c.fc_2d3d = 1280;
    c.fc2_3d = 512;
    c.roots = default_roots();
    c.validate();
    return c;
}

inline NetworkConfig preset_by_name(const std::string& name) {
    if (name == "desk") return preset_desk();
    if (name == "paper") return preset_paper();
    throw ConfigError(strf("config: unknown preset '%s'", name.c_str()));
}

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<int> parse_int_list(const std::string& value, const std::string& key,
                                       size_t expect = 0) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        try {
            size_t pos = 0;
            out.push_back(std::stoi(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(strf("config: key '%s' has non-integer entry '%s'",
                                   key.c_str(), item.c_str()));
        }
    }
    if (expect != 0 && out.size() != expect)
        throw ConfigError(strf("config: key '%s' expects %zu comma-separated values, got %zu",
                               key.c_str(), expect, out.size()));
    return out;
}

inline int parse_int(const std::string& value, const std::string& key) {
    return parse_int_list(value, key, 1)[0];
}

inline double parse_double(const std::string& value, const std::string& key) {
    try {
        size_t pos = 0;
        double d = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(strf("config: key '%s' has non-numeric value '%s'", key.c_str(),
                               value.c_str()));
    }
}

}  // namespace detail

// Plain key = value lines; '#' starts a comment. A 'preset' key, if present,
// must come first and seeds every field; later keys override individual
// fields and mark the config as custom.
inline NetworkConfig config_from_text(const std::string& text) {
    NetworkConfig cfg = preset_desk();
    bool saw_any = false;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(strf("config: line %d is not 'key = value'", lineno));
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(strf("config: line %d has an empty key or value", lineno));

        if (key == "preset") {
            if (saw_any)
                throw ConfigError("config: 'preset' must be the first key");
            cfg = preset_by_name(value);
            continue;
        }
        saw_any = true;
        if (key == "input_size") cfg.input_size = detail::parse_int(value, key);
        else if (key == "n_g") cfg.n_g = detail::parse_int(value, key);
        else if (key == "dropout") cfg.dropout = detail::parse_double(value, key);
        else if (key == "fc1_2d") cfg.fc1_2d = detail::parse_int(value, key);
        else if (key == "fc2_2d") cfg.fc2_2d = detail::parse_int(value, key);
        else if (key == "fc1_3d") cfg.fc1_3d = detail::parse_int(value, key);
        else if (key == "fc_probs_2d") cfg.fc_probs_2d = detail::parse_int(value, key);
        else if (key == "fc_2d3d") cfg.fc_2d3d = detail::parse_int(value, key);
        else if (key == "fc2_3d") cfg.fc2_3d = detail::parse_int(value, key);
        else if (key == "roots") cfg.roots = detail::parse_int_list(value, key);
        else if (key.rfind("conv", 0) == 0 && key.size() == 5 && key[4] >= '1' &&
                 key[4] <= '5') {
            auto v = detail::parse_int_list(value, key, 4);
            cfg.conv[key[4] - '1'] = {v[0], v[1], v[2], v[3]};
        } else if (key.rfind("pool", 0) == 0 && key.size() == 5 && key[4] >= '1' &&
                   key[4] <= '3') {
            auto v = detail::parse_int_list(value, key, 2);
            cfg.pool[key[4] - '1'] = {v[0], v[1]};
        } else {
            throw ConfigError(strf("config: unknown key '%s' on line %d", key.c_str(),
                                   lineno));
        }
    }
    if (saw_any) cfg.preset = Preset::custom;
    cfg.validate();
    return cfg;
}

inline NetworkConfig config_from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(strf("config: cannot open '%s'", path.c_str()));
    std::stringstream buf;
    buf << f.rdbuf();
    return config_from_text(buf.str());
}

inline std::string config_to_text(const NetworkConfig& c) {
    std::string out;
    out += strf("input_size = %d\n", c.input_size);
    out += strf("n_g = %d\n", c.n_g);
    out += strf("dropout = %.17g\n", c.dropout);
    for (size_t i = 0; i < c.conv.size(); ++i)
        out += strf("conv%zu = %d,%d,%d,%d\n", i + 1, c.conv[i].filters, c.conv[i].kernel,
                    c.conv[i].stride, c.conv[i].pad);
    for (size_t i = 0; i < c.pool.size(); ++i)
        out += strf("pool%zu = %d,%d\n", i + 1, c.pool[i].size, c.pool[i].stride);
    out += strf("fc1_2d = %d\n", c.fc1_2d);
    out += strf("fc2_2d = %d\n", c.fc2_2d);
    out += strf("fc1_3d = %d\n", c.fc1_3d);
    out += strf("fc_probs_2d = %d\n", c.fc_probs_2d);
    out += strf("fc_2d3d = %d\n", c.fc_2d3d);
    out += strf("fc2_3d = %d\n", c.fc2_3d);
    out += "roots =";
    for (size_t i = 0; i < c.roots.size(); ++i)
        out += strf("%s%d", i == 0 ? " " : ",", c.roots[i]);
    out += "\n";
    return out;
}

// Flat numeric encoding for the checkpoint metadata blob.
inline std::vector<double> encode_config(const NetworkConfig& c) {
    std::vector<double> v{1.0,  // encoding version
                          static_cast<double>(c.preset), static_cast<double>(c.input_size),
                          static_cast<double>(c.n_g), c.dropout};
    for (const auto& cv : c.conv)
        for (int x : {cv.filters, cv.kernel, cv.stride, cv.pad})
            v.push_back(x);
    for (const auto& p : c.pool)
        for (int x : {p.size, p.stride}) v.push_back(x);
    for (int x : {c.fc1_2d, c.fc2_2d, c.fc1_3d, c.fc_probs_2d, c.fc_2d3d, c.fc2_3d})
        v.push_back(x);
    v.push_back(c.n_roots());
    for (int r : c.roots) v.push_back(r);
    return v;
}

inline NetworkConfig decode_config(const std::vector<double>& v) {
    size_t i = 0;
    auto next = [&]() {
        if (i >= v.size()) throw ConfigError("config: truncated checkpoint metadata");
        return v[i++];
    };
    if (next() != 1.0) throw ConfigError("config: unsupported checkpoint metadata version");
    NetworkConfig c;
    c.preset = static_cast<Preset>(static_cast<int>(next()));
    c.input_size = static_cast<int>(next());
    c.n_g = static_cast<int>(next());
    c.dropout = next();
    for (auto& cv : c.conv) {
        cv.filters = static_cast<int>(next());
        cv.kernel = static_cast<int>(next());
        cv.stride = static_cast<int>(next());
        cv.pad = static_cast<int>(next());
    }
    for (auto& p : c.pool) {
        p.size = static_cast<int>(next());
        p.stride = static_cast<int>(next());
    }
    c.fc1_2d = static_cast<int>(next());
    c.fc2_2d = static_cast<int>(next());
    c.fc1_3d = static_cast<int>(next());
    c.fc_probs_2d = static_cast<int>(next());
    c.fc_2d3d = static_cast<int>(next());
    c.fc2_3d = static_cast<int>(next());
    const int nr = static_cast<int>(next());
    for (int k = 0; k < nr; ++k) c.roots.push_back(static_cast<int>(next()));
    if (i != v.size()) throw ConfigError("config: trailing checkpoint metadata");
    c.validate();
    return c;
}

}  // namespace p3d::model

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "p3d/model/config.hpp"
#include "p3d/model/network.hpp"
#include "p3d/pose/grid.hpp"
#include "p3d/nn/gradcheck.hpp"

using namespace p3d;
using namespace p3d::model;
using pose::kNumJoints;
namespace fs = std::filesystem;

namespace {

// Small custom topology so structural tests stay fast.
NetworkConfig tiny_config() {
    NetworkConfig c;
    c.input_size = 16;
    c.n_g = 4;
    c.conv = {{{6, 3, 1, 1}, {8, 3, 1, 1}, {10, 3, 1, 1}, {10, 3, 1, 1}, {8, 3, 1, 1}}};
    c.pool = {{{2, 2}, {2, 2}, {2, 2}}};
    c.fc1_2d = 32;
    c.fc2_2d = 4 * 4 * kNumJoints;  // 272
    c.fc1_3d = 24;
    c.fc_probs_2d = 8;
    c.fc_2d3d = 32;
    c.fc2_3d = 16;
    c.roots = default_roots();
    c.validate();
    return c;
}

nn::Tensor<double> random_images(int batch, int size, uint64_t seed) {
    Rng rng = make_rng(seed, 0x696d67);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(static_cast<size_t>(batch) * 3 * size * size);
    for (auto& x : v) x = u(rng);
    return nn::Tensor<double>::from_values({batch, 3, size, size}, std::move(v));
}

// Independent parameter count from the written wiring contract.
size_t count_params_oracle(const NetworkConfig& c, Variant v) {
    auto conv_block = [](int in, const ConvSpec& s) {
        return static_cast<size_t>(s.filters) * in * s.kernel * s.kernel  // weight
               + 3 * static_cast<size_t>(s.filters);                      // bias + bn
    };
    auto fc = [](int in, int out, bool bn) {
        return static_cast<size_t>(in) * out + out + (bn ? 2 * static_cast<size_t>(out) : 0);
    };
    size_t n = 0;
    int in_ch = 3;
    for (const auto& s : c.conv) {
        n += conv_block(in_ch, s);
        in_ch = s.filters;
    }
    const int flat = c.flatten_width();
    n += fc(flat, c.fc1_2d, true);
    n += fc(c.fc1_2d, c.fc2_2d, false);
    n += fc(flat, c.fc1_3d, true);
    const bool inject = variant_injects(v);
    if (inject) n += fc(c.fc2_2d, c.fc_probs_2d, false);
    const int heads = variant_multi_root(v) ? c.n_roots() : 1;
    const int head_in = inject ? c.fc_2d3d : c.fc1_3d;
    n += heads * (fc(head_in, c.fc2_3d, true) + fc(c.fc2_3d, 3 * (kNumJoints - 1), false));
    return n;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("p3d_model_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

TEST_CASE("config: desk preset spatial chain and widths") {
    const auto c = preset_desk();
    CHECK(c.trunk_spatial() == std::vector<int>{29, 14, 10, 4, 4, 4, 4, 2});
    CHECK(c.flatten_width() == 256);
    CHECK(c.fc2_2d == 1088);
    CHECK(c.n_g * c.n_g == 64);
    CHECK(c.n_roots() == 6);
}

TEST_CASE("config: paper preset spatial chain and widths") {
    const auto c = preset_paper();
    CHECK(c.trunk_spatial() == std::vector<int>{110, 54, 50, 24, 24, 24, 24, 6});
    CHECK(c.flatten_width() == 4608);
    CHECK(c.fc2_2d == 16 * 16 * 17);
}

TEST_CASE("config: invariant violations are rejected") {
    auto c = preset_desk();
    c.fc2_2d = 1000;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = preset_desk();
    c.fc_2d3d = 700;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = preset_desk();
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = preset_desk();
    c.conv[0].pad = 7;  // pad >= kernel
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = preset_desk();
    c.input_size = 10;  // collapses under the trunk
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = preset_desk();
    c.roots = {0, 0};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = preset_desk();
    c.roots.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config: text parsing") {
    SUBCASE("preset seed plus override") {
        const auto c = config_from_text("preset = desk\ndropout = 0.25\n");
        CHECK(c.preset == Preset::custom);
        CHECK(c.dropout == 0.25);
        CHECK(c.input_size == 64);
    }
    SUBCASE("pure preset keeps its tag") {
        const auto c = config_from_text("# comment\npreset = paper\n");
        CHECK(c.preset == Preset::paper);
        CHECK(same_architecture(c, preset_paper()));
    }
    SUBCASE("unknown keys are rejected") {
        CHECK_THROWS_WITH_AS(config_from_text("preset = desk\nlearning_rate = 0.1\n"),
                             "config: unknown key 'learning_rate' on line 2", ConfigError);
    }
    SUBCASE("preset must come first") {
        CHECK_THROWS_AS(config_from_text("dropout = 0.4\npreset = desk\n"), ConfigError);
    }
    SUBCASE("malformed lines and values") {
        CHECK_THROWS_AS(config_from_text("dropout\n"), ConfigError);
        CHECK_THROWS_AS(config_from_text("preset = desk\nn_g = eight\n"), ConfigError);
        CHECK_THROWS_AS(config_from_text("preset = desk\nconv1 = 32,7,2\n"), ConfigError);
        CHECK_THROWS_AS(config_from_text("preset = nope\n"), ConfigError);
    }
    SUBCASE("serialize round trip") {
        const auto desk = preset_desk();
        const auto back = config_from_text(config_to_text(desk));
        CHECK(same_architecture(desk, back));
        const auto tiny = tiny_config();
        CHECK(same_architecture(tiny, config_from_text(config_to_text(tiny))));
    }
}

TEST_CASE("config: checkpoint metadata encoding round trip") {
    for (const auto& c : {preset_desk(), preset_paper(), tiny_config()}) {
        const auto back = decode_config(encode_config(c));
        CHECK(same_architecture(c, back));
        CHECK(back.preset == c.preset);
    }
    auto v = encode_config(preset_desk());
    v.push_back(3.0);
    CHECK_THROWS_AS(decode_config(v), ConfigError);
    CHECK_THROWS_AS(decode_config({1.0, 0.0}), ConfigError);
}

// ---------------------------------------------------------------------------
// wiring
// ---------------------------------------------------------------------------

TEST_CASE("network: head and injection wiring per variant") {
    const auto cfg = tiny_config();
    const std::map<Variant, std::pair<int, bool>> expect = {
        {Variant::baseline, {1, false}},
        {Variant::multi_reg, {6, false}},
        {Variant::cls_2d, {1, true}},
        {Variant::full, {6, true}},
    };
    for (const auto& [variant, shape] : expect) {
        Network<double> net(cfg, variant, 1);
        int heads = 0;
        bool has_inject = false;
        for (const auto& p : net.params()) {
            if (p.name.find(".out.weight") != std::string::npos) ++heads;
            if (p.name.rfind("fc_probs_2d", 0) == 0) has_inject = true;
        }
        CHECK(heads == shape.first);
        CHECK(has_inject == shape.second);
        CHECK(net.effective_roots().size() == static_cast<size_t>(shape.first));
    }
}

TEST_CASE("network: forward output arities and valid distributions") {
    const auto cfg = tiny_config();
    Network<double> net(cfg, Variant::full, 2);
    const auto out = net.forward(random_images(3, cfg.input_size, 10));
    const int grid = cfg.n_g * cfg.n_g;
    REQUIRE(out.probs_joint.size() == kNumJoints);
    CHECK(out.probs2d.shape() == std::vector<int>{3, kNumJoints * grid});
    REQUIRE(out.rel3d.size() == 6);
    for (const auto& r : out.rel3d) CHECK(r.shape() == std::vector<int>{3, 48});
    for (const auto& pj : out.probs_joint) {
        REQUIRE(pj.shape() == std::vector<int>{3, grid});
        for (int b = 0; b < 3; ++b) {
            double sum = 0.0;
            for (int i = 0; i < grid; ++i) {
                const double p = pj.values()[b * grid + i];
                CHECK(p >= 0.0);
                sum += p;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("network: input shape mismatches are rejected") {
    Network<double> net(tiny_config(), Variant::baseline, 1);
    CHECK_THROWS_AS(net.forward(random_images(1, 15, 1)), ConfigError);
    CHECK_THROWS_AS(net.forward(nn::Tensor<double>::zeros({2, 16, 16})), ConfigError);
    CHECK_THROWS_AS(net.param("no_such.weight"), ConfigError);
}

TEST_CASE("network: parameter counts match the counting oracle") {
    const auto desk = preset_desk();
    const std::map<Variant, size_t> frozen = {
        {Variant::baseline, 1907696},
        {Variant::multi_reg, 2628576},
        {Variant::cls_2d, 2079856},
        {Variant::full, 2964576},
    };
    for (const auto& [variant, expected] : frozen) {
        Network<double> net(desk, variant, 1);
        CHECK(net.parameter_count() == count_params_oracle(desk, variant));
        CHECK(net.parameter_count() == expected);
    }
    const auto tiny = tiny_config();
    for (Variant v : {Variant::baseline, Variant::multi_reg, Variant::cls_2d, Variant::full}) {
        Network<double> net(tiny, v, 1);
        CHECK(net.parameter_count() == count_params_oracle(tiny, v));
    }
}

// ---------------------------------------------------------------------------
// determinism and symmetry
// ---------------------------------------------------------------------------

TEST_CASE("network: eval forward is deterministic and batch-consistent") {
    const auto cfg = tiny_config();
    Network<double> net(cfg, Variant::full, 3);
    // two identical images in one batch
    const auto one = random_images(1, cfg.input_size, 21);
    std::vector<double> dup(one.values().begin(), one.values().end());
    dup.insert(dup.end(), one.values().begin(), one.values().end());
    const auto pair = nn::Tensor<double>::from_values({2, 3, cfg.input_size, cfg.input_size},
                                                      std::move(dup));
    const auto out = net.forward(pair);
    const int cols = out.probs2d.shape()[1];
    for (int i = 0; i < cols; ++i)
        CHECK(out.probs2d.values()[i] == out.probs2d.values()[cols + i]);
    for (const auto& r : out.rel3d)
        for (int i = 0; i < 48; ++i) CHECK(r.values()[i] == r.values()[48 + i]);
    // and across calls
    const auto again = net.forward(pair);
    for (int i = 0; i < cols; ++i)
        CHECK(out.probs2d.values()[i] == again.probs2d.values()[i]);
}

TEST_CASE("network: root heads start distinct and predict distinct outputs") {
    const auto cfg = tiny_config();
    Network<double> net(cfg, Variant::full, 4);
    const auto wa = net.param(net.head_name(cfg.roots[0]) + ".out.weight").tensor.values();
    const auto wb = net.param(net.head_name(cfg.roots[1]) + ".out.weight").tensor.values();
    bool differ = false;
    for (size_t i = 0; i < wa.size() && !differ; ++i) differ = wa[i] != wb[i];
    CHECK(differ);

    auto outputs_differ = [&]() {
        const auto out = net.forward(random_images(2, cfg.input_size, 22));
        bool any = false;
        for (size_t i = 0; i < out.rel3d[0].size(); ++i)
            if (out.rel3d[0].values()[i] != out.rel3d[1].values()[i]) any = true;
        return any;
    };
    CHECK(outputs_differ());

    // one sgd step on random targets keeps them distinct
    Rng rng = make_rng(4, 23);
    const auto imgs = random_images(2, cfg.input_size, 24);
    const auto out = net.forward(imgs, nn::Phase::train, rng);
    const int width = kNumJoints * cfg.n_g * cfg.n_g;
    auto labels = nn::Tensor<double>::filled({2, width}, 1.0 / (cfg.n_g * cfg.n_g));
    std::vector<nn::Tensor<double>> targets;
    for (size_t k = 0; k < out.rel3d.size(); ++k)
        targets.push_back(nn::Tensor<double>::filled({2, 48}, 0.1 * (k + 1)));
    auto terms = net.loss(out, labels, targets, 0.1, 0.5);
    for (auto& p : net.params()) p.tensor.zero_grad();
    terms.total.backward();
    nn::sgd_step(net.params(), 0.01, 0.9, 0.001);
    CHECK(outputs_differ());
}

// ---------------------------------------------------------------------------
// stop-gradient isolation
// ---------------------------------------------------------------------------

TEST_CASE("network: 2D-branch gradients are untouched by the 3D loss") {
    const auto cfg = tiny_config();
    Network<double> net(cfg, Variant::full, 5);
    const auto imgs = random_images(2, cfg.input_size, 31);
    const int width = kNumJoints * cfg.n_g * cfg.n_g;
    Rng lrng = make_rng(5, 32);
    std::vector<double> lv(2 * width);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& x : lv) x = u(lrng);
    // normalize each joint block to a distribution
    for (int b = 0; b < 2; ++b)
        for (int j = 0; j < kNumJoints; ++j) {
            double s = 0.0;
            const int grid = cfg.n_g * cfg.n_g;
            for (int i = 0; i < grid; ++i) s += lv[b * width + j * grid + i];
            for (int i = 0; i < grid; ++i) lv[b * width + j * grid + i] /= s;
        }
    const auto labels = nn::Tensor<double>::from_values({2, width}, std::move(lv));
    std::vector<nn::Tensor<double>> targets;
    for (int k = 0; k < 6; ++k)
        targets.push_back(nn::Tensor<double>::filled({2, 48}, 0.05 * (k + 1)));

    auto grads_for = [&](double lambda3d) {
        Rng rng = make_rng(5, 33);  // same dropout masks on both runs
        const auto out = net.forward(imgs, nn::Phase::train, rng);
        auto terms = net.loss(out, labels, targets, 0.1, lambda3d);
        for (auto& p : net.params()) p.tensor.zero_grad();
        terms.total.backward();
        std::map<std::string, std::vector<double>> g;
        for (const auto& name : net.names_2d_branch()) {
            auto span = net.param(name).tensor.grad();
            g[name] = std::vector<double>(span.begin(), span.end());
        }
        return g;
    };

    const auto with_3d = grads_for(0.5);
    const auto without_3d = grads_for(0.0);
    REQUIRE(with_3d.size() >= 6);  // fc1_2d w/b/bn + fc2_2d w/b
    for (const auto& [name, g] : with_3d) {
        const auto& h = without_3d.at(name);
        REQUIRE(g.size() == h.size());
        for (size_t i = 0; i < g.size(); ++i) CHECK(g[i] == h[i]);
    }

    // with lambda3d = 0 every head gradient is exactly zero
    {
        Rng rng = make_rng(5, 33);
        const auto out = net.forward(imgs, nn::Phase::train, rng);
        auto terms = net.loss(out, labels, targets, 0.1, 0.0);
        for (auto& p : net.params()) p.tensor.zero_grad();
        terms.total.backward();
        const auto g = net.param(net.head_name(0) + ".hidden.weight").tensor.grad();
        for (double x : g) CHECK(x == 0.0);
        const auto q = net.param("fc_probs_2d.weight").tensor.grad();
        for (double x : q) CHECK(x == 0.0);
    }
}

// ---------------------------------------------------------------------------
// ablation by zeroing
// ---------------------------------------------------------------------------

TEST_CASE("network: zeroed injection reproduces the multi-reg forward") {
    const auto cfg = tiny_config();
    Network<double> full(cfg, Variant::full, 6);
    Network<double> multi(cfg, Variant::multi_reg, 7);

    // copy shared weights from full into multi
    for (auto& p : multi.params()) {
        if (p.name.find(".hidden.weight") != std::string::npos) {
            // multi head input is the first fc1_3d rows of the full head weight
            const auto src = full.param(p.name).tensor.values();
            auto dst = p.tensor.values();
            std::copy(src.begin(), src.begin() + dst.size(), dst.begin());
            continue;
        }
        const auto src = full.param(p.name).tensor.values();
        auto dst = p.tensor.values();
        REQUIRE(src.size() == dst.size());
        std::copy(src.begin(), src.end(), dst.begin());
    }
    // zero the injection layer in the full net
    for (const char* name : {"fc_probs_2d.weight", "fc_probs_2d.bias"}) {
        auto w = full.param(name).tensor.values();
        std::fill(w.begin(), w.end(), 0.0);
    }

    const auto imgs = random_images(2, cfg.input_size, 41);
    const auto a = full.forward(imgs);
    const auto b = multi.forward(imgs);
    REQUIRE(a.rel3d.size() == b.rel3d.size());
    for (size_t k = 0; k < a.rel3d.size(); ++k)
        for (size_t i = 0; i < a.rel3d[k].size(); ++i)
            CHECK(a.rel3d[k].values()[i] == b.rel3d[k].values()[i]);
    for (size_t i = 0; i < a.probs2d.size(); ++i)
        CHECK(a.probs2d.values()[i] == b.probs2d.values()[i]);
}

// ---------------------------------------------------------------------------
// checkpoint round trip
// ---------------------------------------------------------------------------

TEST_CASE("network: checkpoint save, load, forward is bit-identical") {
    TempDir tmp;
    const auto cfg = tiny_config();
    Network<double> net(cfg, Variant::full, 8);

    // dirty the state: one training step plus running stats
    Rng rng = make_rng(8, 51);
    const auto imgs = random_images(2, cfg.input_size, 52);
    const int width = kNumJoints * cfg.n_g * cfg.n_g;
    const auto out = net.forward(imgs, nn::Phase::train, rng);
    auto labels = nn::Tensor<double>::filled({2, width}, 1.0 / (cfg.n_g * cfg.n_g));
    std::vector<nn::Tensor<double>> targets;
    for (int k = 0; k < 6; ++k)
        targets.push_back(nn::Tensor<double>::filled({2, 48}, 0.02 * (k + 1)));
    auto terms = net.loss(out, labels, targets, 0.1, 0.5);
    for (auto& p : net.params()) p.tensor.zero_grad();
    terms.total.backward();
    nn::sgd_step(net.params(), 0.01, 0.9, 0.001);
    net.set_torso_avg({120.0, 110.0, 150.0, 150.0, 90.0, 90.0});

    const auto file = tmp.path / "net.p3ck";
    net.save(file);
    auto loaded = Network<double>::load(file);

    CHECK(loaded.variant() == Variant::full);
    CHECK(same_architecture(loaded.config(), cfg));
    CHECK(loaded.torso_avg() == net.torso_avg());
    for (auto& p : net.params()) {
        auto& q = loaded.param(p.name);
        REQUIRE(q.tensor.size() == p.tensor.size());
        for (size_t i = 0; i < p.tensor.size(); ++i)
            CHECK(q.tensor.values()[i] == p.tensor.values()[i]);
        REQUIRE(q.momentum.size() == p.momentum.size());
        for (size_t i = 0; i < p.momentum.size(); ++i)
            CHECK(q.momentum[i] == p.momentum[i]);
    }

    const auto test_imgs = random_images(2, cfg.input_size, 53);
    const auto base = net.forward(test_imgs);
    const auto redo = loaded.forward(test_imgs);
    for (size_t i = 0; i < base.probs2d.size(); ++i)
        CHECK(base.probs2d.values()[i] == redo.probs2d.values()[i]);
    for (size_t k = 0; k < base.rel3d.size(); ++k)
        for (size_t i = 0; i < base.rel3d[k].size(); ++i)
            CHECK(base.rel3d[k].values()[i] == redo.rel3d[k].values()[i]);
}

TEST_CASE("network: loading a checkpoint with a missing blob fails") {
    TempDir tmp;
    Network<double> net(tiny_config(), Variant::baseline, 9);
    const auto file = tmp.path / "net.p3ck";
    net.save(file);
    auto blobs = nn::read_checkpoint(file);
    std::erase_if(blobs, [](const nn::Blob& b) { return b.name == "conv3.weight"; });
    nn::write_checkpoint(file, blobs);
    CHECK_THROWS_AS(Network<double>::load(file), ConfigError);
}

// ---------------------------------------------------------------------------
// loss against the scalar reference
// ---------------------------------------------------------------------------

TEST_CASE("network: graph loss equals the scalar pose loss") {
    const auto cfg = tiny_config();
    Network<double> net(cfg, Variant::full, 10);
    const auto img = random_images(1, cfg.input_size, 61);
    const auto out = net.forward(img);

    Rng rng = make_rng(10, 62);
    std::uniform_real_distribution<double> inside(0.5, 15.5), mm(-400.0, 400.0);
    const pose::GridGeometry geom(cfg.n_g, cfg.input_size);

    // soft labels from random in-image points
    std::vector<pose::GridDistribution> target_grids;
    std::vector<double> label_values;
    for (int j = 0; j < kNumJoints; ++j) {
        target_grids.push_back(pose::soft_label({inside(rng), inside(rng)}, geom));
        label_values.insert(label_values.end(), target_grids.back().begin(),
                            target_grids.back().end());
    }
    const auto labels = nn::Tensor<double>::from_values(
        {1, kNumJoints * geom.cells()}, std::move(label_values));

    // normalized ground truth and per-root relative targets
    pose::Pose3D gt;
    for (auto& p : gt) p = {mm(rng), mm(rng), mm(rng)};
    gt = pose::normalize_pose(gt);
    std::vector<nn::Tensor<double>> targets;
    for (int r : net.effective_roots()) {
        std::vector<double> row;
        for (int j = 0; j < kNumJoints; ++j) {
            if (j == r) continue;
            const auto d = gt[j] - gt[r];
            row.insert(row.end(), {d.x, d.y, d.z});
        }
        targets.push_back(nn::Tensor<double>::from_values({1, 48}, std::move(row)));
    }

    auto terms = net.loss(out, labels, targets, 0.1, 0.5);

    // the same quantities through the scalar pose-side reference
    std::vector<pose::GridDistribution> pred_grids;
    for (int j = 0; j < kNumJoints; ++j)
        pred_grids.emplace_back(out.probs_joint[j].values().begin(),
                                out.probs_joint[j].values().end());
    std::map<int, pose::RelativePose> pred_rel;
    for (size_t k = 0; k < out.rel3d.size(); ++k) {
        const int r = net.effective_roots()[k];
        pose::RelativePose rel;
        const auto v = out.rel3d[k].values();
        for (int s = 0; s < kNumJoints - 1; ++s)
            rel.push_back({v[3 * s], v[3 * s + 1], v[3 * s + 2]});
        pred_rel[r] = rel;
    }
    const double reference =
        pose::total_loss(pred_grids, target_grids, pred_rel, gt, pose::LossWeights(0.1, 0.5),
                         pose::RootSet(net.effective_roots()));
    CHECK(std::abs(terms.total.item() - reference) <= 1e-10 * std::abs(reference));
    CHECK(std::abs(0.1 * terms.loss2d.item() + 0.5 * terms.loss3d.item() -
                   terms.total.item()) <= 1e-12);
    CHECK_THROWS_AS(net.loss(out, labels, {targets[0]}, 0.1, 0.5), ConfigError);
}

// ---------------------------------------------------------------------------
// finite differences through the whole network
// ---------------------------------------------------------------------------

// The stop gradient makes the training gradient of 2D-path parameters differ
// from the true loss derivative on purpose: finite differences see the loss
// move through the injected probabilities, backward does not. So differences
// are compared only where the two notions coincide: non-injecting variants
// end to end, the 3D side of the full variant, and the full variant with the
// 3D loss switched off.
TEST_CASE("network: end-to-end gradients match finite differences") {
    const auto cfg = tiny_config();
    const auto imgs = random_images(2, cfg.input_size, 71);
    const int width = kNumJoints * cfg.n_g * cfg.n_g;
    const auto labels = nn::Tensor<double>::filled({2, width}, 1.0 / (cfg.n_g * cfg.n_g));
    std::vector<nn::Tensor<double>> targets;
    for (int k = 0; k < 6; ++k)
        targets.push_back(nn::Tensor<double>::filled({2, 48}, 0.03 * (k + 1)));

    auto check = [&](Network<double>& net, double lambda3d,
                     const std::vector<std::string>& names) {
        auto loss_fn = [&](bool want_grad) {
            Rng rng = make_rng(11, 72);  // frozen dropout masks
            std::vector<nn::Tensor<double>> t(targets.begin(),
                                              targets.begin() + net.effective_roots().size());
            const auto out = net.forward(imgs, nn::Phase::train, rng);
            auto terms = net.loss(out, labels, t, 0.1, lambda3d);
            if (want_grad) {
                for (auto& p : net.params()) p.tensor.zero_grad();
                terms.total.backward();
            }
            return terms.total.item();
        };
        std::vector<nn::Parameter<double>*> checked;
        for (const auto& name : names) checked.push_back(&net.param(name));
        const auto report = nn::grad_check(loss_fn, checked, 1e-5, 6, 73);
        for (const auto& b : report.blocks) {
            CAPTURE(b.name);
            CHECK(b.max_rel_err < 1e-3);
        }
    };

    SUBCASE("multi-reg variant, both losses, trunk to heads") {
        Network<double> net(cfg, Variant::multi_reg, 11);
        check(net, 0.5,
              {"conv1.weight", "conv3.weight", "conv5.bn.scale", "fc1_2d.weight",
               "fc2_2d.bias", "fc1_3d.weight", net.head_name(0) + ".hidden.weight",
               net.head_name(8) + ".out.weight"});
    }
    SUBCASE("full variant, parameters behind the injection point") {
        Network<double> net(cfg, Variant::full, 12);
        check(net, 0.5,
              {"fc1_3d.weight", "fc_probs_2d.weight", "fc_probs_2d.bias",
               net.head_name(0) + ".hidden.weight", net.head_name(8) + ".out.weight"});
    }
    SUBCASE("full variant, 2D loss alone reaches the trunk") {
        Network<double> net(cfg, Variant::full, 13);
        check(net, 0.0, {"conv1.weight", "fc1_2d.weight", "fc2_2d.bias"});
    }
}

// ---------------------------------------------------------------------------
// pose prediction
// ---------------------------------------------------------------------------

TEST_CASE("network: predict_pose composes assembly, averaging and scaling") {
    const auto cfg = tiny_config();
    const std::array<double, 6> avg{120.0, 110.0, 150.0, 150.0, 90.0, 90.0};

    Network<double> full(cfg, Variant::full, 12);
    const auto img = random_images(1, cfg.input_size, 81);
    const auto predicted = full.predict_pose(img, avg);

    const auto out = full.forward(img);
    const auto est = full.assemble_estimates(out, 0);
    REQUIRE(est.size() == 6);
    const auto expected = pose::recover_scale(pose::average_multi_root(est), avg);
    for (int j = 0; j < kNumJoints; ++j) {
        CHECK(predicted[j].x == expected[j].x);
        CHECK(predicted[j].y == expected[j].y);
        CHECK(predicted[j].z == expected[j].z);
    }
    // scale recovery held
    CHECK(pose::torso_length_sum(predicted) ==
          doctest::Approx(120 + 110 + 150 + 150 + 90 + 90).epsilon(1e-9));

    // baseline: single estimate, centered then rescaled
    Network<double> base(cfg, Variant::baseline, 13);
    const auto bp = base.predict_pose(img, avg);
    const auto bout = base.forward(img);
    const auto best = base.assemble_estimates(bout, 0);
    REQUIRE(best.size() == 1);
    const auto bexp = pose::recover_scale(pose::average_multi_root(best), avg);
    for (int j = 0; j < kNumJoints; ++j) CHECK(bp[j].x == bexp[j].x);

    CHECK_THROWS_AS(full.predict_pose(random_images(2, cfg.input_size, 82), avg),
                    ConfigError);
}

TEST_CASE("network: degenerate estimates propagate a domain error") {
    const auto cfg = tiny_config();
    Network<double> net(cfg, Variant::baseline, 14);
    for (const auto& suffix : {".out.weight", ".out.bias"}) {
        auto w = net.param(net.head_name(cfg.roots[0]) + suffix).tensor.values();
        std::fill(w.begin(), w.end(), 0.0);
    }
    const std::array<double, 6> avg{120.0, 110.0, 150.0, 150.0, 90.0, 90.0};
    CHECK_THROWS_AS(net.predict_pose(random_images(1, cfg.input_size, 83), avg),
                    DomainError);
}

// pose3d: dataset generation, training, evaluation, ablation, and gradient
// checking for the grid-classification 3D pose network.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or format
// error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "p3d/data/generate.hpp"
#include "p3d/model/config.hpp"
#include "p3d/model/network.hpp"
#include "p3d/nn/gradcheck.hpp"
#include "p3d/pose/grid.hpp"
#include "p3d/train/ablation.hpp"
#include "p3d/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace p3d;

namespace {

struct GlobalOpts {
    uint64_t seed = 1;
    std::string preset = "desk";
    std::string precision = "f64";
};

model::NetworkConfig preset_config(const GlobalOpts& g) {
    return g.preset == "paper" ? model::preset_paper() : model::preset_desk();
}

model::NetworkConfig load_net_config(const GlobalOpts& g, const std::string& path) {
    if (path.empty()) return preset_config(g);
    return model::config_from_file(path);
}

// Corpus geometry for a given network input: total crop slack equals the
// margin so every crop offset keeps the joints inside, and the focal length
// keeps the projected figure within the margin box.
data::GenConfig gen_for_input(int input_size, int count, uint64_t seed) {
    data::GenConfig g;
    const int slack = std::max(2, input_size / 8);
    g.render_size = input_size + slack;
    g.margin = slack;
    g.count = count;
    g.master_seed = seed;
    const double inner = input_size - slack;
    g.camera = data::CameraModel{2.0 * inner, g.render_size / 2.0, g.render_size / 2.0,
                                 5000.0, 7000.0};
    return g;
}

data::GenConfig gen_for_preset(const GlobalOpts& g, int count) {
    if (g.preset == "paper") {
        data::GenConfig cfg;
        cfg.count = count;
        cfg.render_size = 250;
        cfg.margin = 25;
        cfg.master_seed = g.seed;
        cfg.camera = data::CameraModel{400.0, 125.0, 125.0, 4500.0, 6500.0};
        return cfg;
    }
    data::GenConfig cfg;  // desk: library defaults, 72 px render for 64 px input
    cfg.count = count;
    cfg.master_seed = g.seed;
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError(strf("cannot write '%s'", path.string().c_str()));
    f << text;
}

std::vector<data::Sample> load_corpus(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw FormatError(strf("%s dataset '%s' does not exist", what, path.c_str()), 0);
    return data::read_dataset(path);
}

void print_eval(const train::EvalReport& r) {
    std::printf("%-10s %7s %12s\n", "action", "count", "mpjpe_mm");
    for (int a = 0; a < data::kNumActions; ++a)
        std::printf("%-10s %7d %12.2f\n", data::action_name(a), r.action_count[a],
                    r.action_mpjpe[a]);
    std::printf("%-10s %7d %12.2f\n", "overall", r.count, r.overall);
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenOpts {
    int train_count = 500;
    int test_count = 100;
    std::string out_dir = ".";
};

int run_gen(const GlobalOpts& g, const GenOpts& o) {
    if (o.train_count < 0 || o.test_count < 0)
        throw ConfigError("gen: sample counts must be non-negative");
    fs::create_directories(o.out_dir);
    auto emit = [&](data::Split split, int count, const char* name) {
        auto cfg = gen_for_preset(g, std::max(count, 1));
        cfg.count = std::max(count, 1);
        const auto path = fs::path(o.out_dir) / name;
        if (count == 0) {
            data::write_dataset(path, {}, cfg.render_size, cfg.render_size);
        } else {
            cfg.count = count;
            data::write_dataset(path, data::generate_corpus(cfg, split));
        }
        std::printf("wrote %s (%d samples, %dx%d px)\n", path.string().c_str(), count,
                    cfg.render_size, cfg.render_size);
    };
    emit(data::Split::train, o.train_count, "train.p3d");
    emit(data::Split::test, o.test_count, "test.p3d");
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
    std::string variant = "full";
    std::string config_path;
    std::string train_path;
    std::string test_path;
    std::string out_dir = "run";
    train::TrainConfig cfg;
    bool drop_epoch_set = false;
};

template <typename T>
int run_train_t(const GlobalOpts& g, const TrainOpts& o) {
    const auto net_cfg = load_net_config(g, o.config_path);
    const auto variant = model::parse_variant(o.variant);
    auto cfg = o.cfg;
    cfg.seed = g.seed;
    if (!o.drop_epoch_set) cfg.lambda2d_drop_epoch = std::min(16, cfg.epochs - 1);
    cfg.validate();

    const auto train_set = load_corpus(o.train_path, "train");
    std::vector<data::Sample> test_set;
    if (!o.test_path.empty()) test_set = load_corpus(o.test_path, "test");

    model::Network<T> net(net_cfg, variant, g.seed);
    std::printf("training %s/%s: %zu parameters, %zu train / %zu test samples\n",
                model::variant_name(variant), g.preset.c_str(), net.parameter_count(),
                train_set.size(), test_set.size());
    fs::create_directories(o.out_dir);
    const auto result = train::train(net, train_set, test_set, cfg, o.out_dir);
    train::write_train_log(fs::path(o.out_dir) / "train_log.csv", result.log);
    net.save(fs::path(o.out_dir) / "ckpt_final.p3ck");
    if (!result.evals.empty()) {
        write_text(fs::path(o.out_dir) / "eval.csv", eval_report_csv(result.evals.back()));
        std::printf("final test MPJPE %.2f mm\n", result.evals.back().overall);
    }
    std::printf("artifacts in %s\n", o.out_dir.c_str());
    return 0;
}

int run_train(const GlobalOpts& g, const TrainOpts& o) {
    return g.precision == "f32" ? run_train_t<float>(g, o) : run_train_t<double>(g, o);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOpts {
    std::string checkpoint;
    std::string data_path;
    std::string out_csv;
    int batch = 32;
};

template <typename T>
int run_eval_t(const EvalOpts& o) {
    auto net = model::Network<T>::load(o.checkpoint);
    const auto test = load_corpus(o.data_path, "eval");
    const auto report = train::evaluate(net, test, o.batch);
    print_eval(report);
    if (!o.out_csv.empty()) write_text(o.out_csv, train::eval_report_csv(report));
    return 0;
}

int run_eval(const GlobalOpts& g, const EvalOpts& o) {
    return g.precision == "f32" ? run_eval_t<float>(o) : run_eval_t<double>(o);
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateOpts {
    std::string train_path;
    std::string test_path;
    std::string config_path;
    std::string out_dir = ".";
    std::vector<uint64_t> seeds = {1, 2, 3};
    int epochs = 6;
    int batch = 32;
};

int run_ablate(const GlobalOpts& g, const AblateOpts& o) {
    const auto net_cfg = load_net_config(g, o.config_path);
    const auto train_set = load_corpus(o.train_path, "train");
    const auto test_set = load_corpus(o.test_path, "test");

    train::TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch = o.batch;
    cfg.lambda2d_drop_epoch = std::min(16, o.epochs - 1);
    cfg.eval_period = std::max(1, o.epochs);  // score once, at the end
    cfg.validate();

    const auto report = train::run_ablation(train_set, test_set, net_cfg, cfg, o.seeds);
    const auto summary = train::ablation_csv(report);
    fs::create_directories(o.out_dir);
    write_text(fs::path(o.out_dir) / "ablation.csv", summary);
    write_text(fs::path(o.out_dir) / "ablation_seeds.csv",
               train::ablation_cells_csv(report));
    std::fputs(summary.c_str(), stdout);
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradOpts {
    std::string variant = "full";
    std::string config_path;
    int batch = 2;
    int coords = 2;
    double tolerance = 1e-3;
    double step = 1e-5;
};

struct GradBatch {
    nn::Tensor<double> images;
    nn::Tensor<double> labels2d;
    std::vector<nn::Tensor<double>> targets3d;
};

GradBatch gradcheck_batch(const model::NetworkConfig& cfg, const std::vector<int>& roots,
                          int batch, uint64_t seed) {
    auto gen = gen_for_input(cfg.input_size, batch, seed);
    std::vector<data::Sample> samples;
    for (int i = 0; i < batch; ++i)
        samples.push_back(data::generate_sample(gen, data::Split::train, i));

    const pose::GridGeometry geom(cfg.n_g, cfg.input_size);
    std::vector<data::Image> images;
    std::vector<double> labels;
    std::vector<std::vector<double>> targets(roots.size());
    Rng rng(seed);
    for (const auto& s : samples) {
        auto crop = data::random_crop(s.image, s.pose2d, cfg.input_size, rng, true);
        images.push_back(crop.image);
        for (int j = 0; j < pose::kNumJoints; ++j) {
            const auto dist = pose::soft_label(crop.pose2d[j], geom);
            labels.insert(labels.end(), dist.begin(), dist.end());
        }
        const auto rel = train::relative_targets(s.pose3d, roots);
        for (size_t ri = 0; ri < roots.size(); ++ri)
            targets[ri].insert(targets[ri].end(),
                               rel.begin() + ri * 3 * (pose::kNumJoints - 1),
                               rel.begin() + (ri + 1) * 3 * (pose::kNumJoints - 1));
    }
    GradBatch out;
    out.images = train::images_to_tensor<double>(images);
    out.labels2d = nn::Tensor<double>::from_values(
        {batch, pose::kNumJoints * geom.cells()}, std::move(labels));
    for (auto& t : targets)
        out.targets3d.push_back(nn::Tensor<double>::from_values(
            {batch, 3 * (pose::kNumJoints - 1)}, std::move(t)));
    return out;
}

// One finite-difference pass over `names`, with dropout frozen per call.
// Blocks that miss the tolerance are re-measured at step/10: disagreement from
// a crossed relu kink shrinks with the step, a wrong gradient does not.
nn::GradCheckReport fd_pass(model::Network<double>& net, const GradBatch& batch,
                            const std::vector<std::string>& names, double lambda3d,
                            const GradOpts& o, uint64_t seed) {
    auto loss_fn = [&](bool want_grad) {
        Rng drng = make_rng(seed, 0x6b696e6b);
        if (want_grad) nn::zero_grads(net.params());
        auto out = net.forward(batch.images, nn::Phase::train, drng);
        auto terms = net.loss(out, batch.labels2d, batch.targets3d, 0.1, lambda3d);
        if (want_grad) terms.total.backward();
        return terms.total.item();
    };
    std::vector<nn::Parameter<double>*> blocks;
    for (const auto& name : names) blocks.push_back(&net.param(name));

    auto report = nn::grad_check(loss_fn, blocks, o.step, o.coords, seed);
    for (auto& block : report.blocks) {
        if (block.max_rel_err < o.tolerance) continue;
        const auto retry = nn::grad_check(loss_fn, {&net.param(block.name)}, o.step / 10.0,
                                          o.coords, seed);
        block.max_rel_err = std::min(block.max_rel_err, retry.blocks[0].max_rel_err);
    }
    return report;
}

int run_gradcheck(const GlobalOpts& g, const GradOpts& o) {
    if (g.precision != "f64")
        throw ConfigError("gradcheck: finite differences require --precision f64");
    const auto net_cfg = load_net_config(g, o.config_path);
    const auto variant = model::parse_variant(o.variant);
    model::Network<double> net(net_cfg, variant, g.seed);
    const auto batch = gradcheck_batch(net_cfg, net.effective_roots(), o.batch, g.seed);

    // Parameters downstream of the probability injection see the whole loss;
    // everything upstream is checked with the 3D loss off, where the training
    // gradient and the true derivative coincide despite the stop-gradient.
    std::vector<std::string> upstream, downstream;
    for (const auto& p : net.params()) {
        const bool up = p.name.rfind("conv", 0) == 0 || p.name.rfind("fc1_2d", 0) == 0 ||
                        p.name.rfind("fc2_2d", 0) == 0;
        (up ? upstream : downstream).push_back(p.name);
    }

    nn::GradCheckReport report;
    if (model::variant_injects(variant)) {
        auto full = fd_pass(net, batch, downstream, 0.5, o, g.seed);
        auto iso = fd_pass(net, batch, upstream, 0.0, o, g.seed + 1);
        report.blocks = std::move(full.blocks);
        report.blocks.insert(report.blocks.end(), iso.blocks.begin(), iso.blocks.end());
    } else {
        std::vector<std::string> all = upstream;
        all.insert(all.end(), downstream.begin(), downstream.end());
        report = fd_pass(net, batch, all, 0.5, o, g.seed);
    }

    // stop-gradient isolation: 2D-branch gradients must not move with lambda3d
    bool isolated = true;
    if (model::variant_injects(variant)) {
        auto grads_2d = [&](double lambda3d) {
            Rng drng = make_rng(g.seed, 0x69736f);
            nn::zero_grads(net.params());
            auto out = net.forward(batch.images, nn::Phase::train, drng);
            auto terms = net.loss(out, batch.labels2d, batch.targets3d, 0.1, lambda3d);
            terms.total.backward();
            std::vector<double> flat;
            for (const auto& name : net.names_2d_branch()) {
                auto gr = net.param(name).tensor.grad();
                flat.insert(flat.end(), gr.begin(), gr.end());
            }
            return flat;
        };
        isolated = grads_2d(0.5) == grads_2d(0.0);
    }

    std::printf("%-22s %10s %14s\n", "parameter", "coords", "max_rel_err");
    for (const auto& b : report.blocks)
        std::printf("%-22s %10d %14.3e\n", b.name.c_str(), b.coords_checked, b.max_rel_err);
    std::printf("worst %.3e (tolerance %g); stop-gradient isolation %s\n", report.worst(),
                o.tolerance, isolated ? "exact" : "VIOLATED");
    const bool ok = report.within(o.tolerance) && isolated;
    std::printf("gradcheck %s\n", ok ? "PASSED" : "FAILED");
    return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D human pose estimation via grid classification"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand name
    GlobalOpts g;
    app.add_option("--seed", g.seed, "master seed for all randomness");
    app.add_option("--preset", g.preset, "architecture preset")
        ->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--precision", g.precision, "training float width")
        ->check(CLI::IsMember({"f32", "f64"}));

    GenOpts gen_o;
    auto* gen = app.add_subcommand("gen", "generate a synthetic train/test corpus");
    gen->add_option("--train", gen_o.train_count, "training sample count");
    gen->add_option("--test", gen_o.test_count, "test sample count");
    gen->add_option("--out", gen_o.out_dir, "output directory");

    TrainOpts train_o;
    auto* tr = app.add_subcommand("train", "train one variant");
    tr->add_option("--variant", train_o.variant, "baseline|multi-reg|2d-cls|full");
    tr->add_option("--config", train_o.config_path, "network config file");
    tr->add_option("--train-data", train_o.train_path, "training dataset")->required();
    tr->add_option("--test-data", train_o.test_path, "test dataset for periodic scoring");
    tr->add_option("--out", train_o.out_dir, "artifact directory");
    tr->add_option("--epochs", train_o.cfg.epochs, "training epochs");
    tr->add_option("--batch", train_o.cfg.batch, "batch size");
    tr->add_option("--lr0", train_o.cfg.lr0, "initial learning rate");
    tr->add_option("--eval-period", train_o.cfg.eval_period, "epochs between evals");
    tr->add_option("--log-period", train_o.cfg.log_period, "iterations between log rows");
    tr->add_option("--lambda2d-drop", train_o.cfg.lambda2d_drop_epoch,
                   "epoch at which lambda2d drops")
        ->each([&](const std::string&) { train_o.drop_epoch_set = true; });

    EvalOpts eval_o;
    auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset");
    ev->add_option("--checkpoint", eval_o.checkpoint, "checkpoint file")->required();
    ev->add_option("--data", eval_o.data_path, "dataset to score")->required();
    ev->add_option("--batch", eval_o.batch, "evaluation batch size");
    ev->add_option("--out", eval_o.out_csv, "also write the report CSV here");

    AblateOpts abl_o;
    auto* ab = app.add_subcommand("ablate", "train and score all four variants (64-bit)");
    ab->add_option("--train-data", abl_o.train_path, "training dataset")->required();
    ab->add_option("--test-data", abl_o.test_path, "test dataset")->required();
    ab->add_option("--config", abl_o.config_path, "network config file");
    ab->add_option("--seeds", abl_o.seeds, "seeds, one run per variant each");
    ab->add_option("--epochs", abl_o.epochs, "epochs per run");
    ab->add_option("--batch", abl_o.batch, "batch size");
    ab->add_option("--out", abl_o.out_dir, "report directory");

    GradOpts grad_o;
    auto* gc = app.add_subcommand("gradcheck",
                                  "finite-difference audit of the training gradient");
    gc->add_option("--variant", grad_o.variant, "baseline|multi-reg|2d-cls|full");
    gc->add_option("--config", grad_o.config_path, "network config file");
    gc->add_option("--batch", grad_o.batch, "probe batch size");
    gc->add_option("--coords", grad_o.coords, "coordinates sampled per parameter");
    gc->add_option("--tolerance", grad_o.tolerance, "max relative error accepted");
    gc->add_option("--fd-step", grad_o.step, "finite-difference step");

    int rc = 0;
    gen->callback([&] { rc = run_gen(g, gen_o); });
    tr->callback([&] { rc = run_train(g, train_o); });
    ev->callback([&] { rc = run_eval(g, eval_o); });
    ab->callback([&] { rc = run_ablate(g, abl_o); });
    gc->callback([&] { rc = run_gradcheck(g, grad_o); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DomainError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return rc;
}

// hmc: coarsening, synthetic data, training, retargeting and evaluation.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 bad flags/config/input,
// 3 infeasible coarsening target, 4 checkpoint mismatch, 5 non-finite loss.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hmc/coarsen.hpp"
#include "hmc/obj_io.hpp"
#include "hmc/retarget.hpp"
#include "hmc/runtime.hpp"
#include "hmc/synth.hpp"

namespace fs = std::filesystem;
using namespace hmc;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kInfeasible = 3, kCheckpoint = 4, kNan = 5 };

/// Options that map one-to-one onto TrainConfig keys, applied in this order.
struct ConfigFlags {
    std::vector<std::string> order;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config_path;
    std::string variant = "full";
    CLI::Option* variant_opt = nullptr;

    void add(CLI::App& app) {
        const TrainConfig d;
        std::ostringstream lr;
        lr << d.learning_rate;
        struct Spec {
            std::string key, flag, type, def, help;
        };
        const std::vector<Spec> spec{
            {"levels", "--levels", "INT", std::to_string(d.levels_k), "Coarse levels K"},
            {"ratio", "--ratio", "FLOAT", "0.6", "Coarsening ratio per level"},
            {"parts", "--parts", "INT", std::to_string(d.parts), "Predicted parts per level"},
            {"embed_dim", "--embed-dim", "INT", std::to_string(d.embed_dim), "Pose embedding width"},
            {"epochs", "--epochs", "INT", std::to_string(d.epochs), "Training epochs"},
            {"lr", "--lr", "FLOAT", lr.str(), "Adam learning rate"},
            {"batch_poses", "--batch-poses", "INT", std::to_string(d.batch_poses),
             "Training poses per Adam step; 0 uses all"},
            {"seed", "--seed", "UINT", std::to_string(d.seed), "Initialization seed"},
            {"schedule", "--schedule", "A:B,...", "0.6:0.4", "Per-level loss weights at the first:last epoch"},
            {"alpha", "--alpha", "FLOAT", "0.6", "Level-1 loss weight at the first epoch"},
            {"beta", "--beta", "FLOAT", "0.4", "Level-1 loss weight at the last epoch"},
            {"w_skinning", "--w-skinning", "FLOAT", "0.1", "Skinning similarity loss weight"},
            {"w_rigid", "--w-rigid", "FLOAT", "0.01", "Rigid loss weight"},
            {"w_cycle", "--w-cycle", "FLOAT", "1", "Cycle loss weight"},
            {"paired", "--paired", "BOOL", "1", "Paired supervision across characters; 0 trains with the cycle loss"},
            {"cover_joints", "--cover-joints", "BOOL", "1", "Every ground-truth joint claims a part when matching"},
            {"threads", "--threads", "INT", "1", "Worker threads for evaluation"},
        };
        for (const Spec& o : spec) {
            order.push_back(o.key);
            options[o.key] = app.add_option(o.flag, values[o.key], o.help)->type_name(o.type)->default_str(o.def);
        }
        app.add_option("--config", config_path, "key=value config file; flags take precedence");
        variant_opt = app.add_option("--variant", variant, "Ablation variant")
                          ->check(CLI::IsMember({"full", "no_hr", "no_ref", "no_var"}))
                          ->capture_default_str();
    }

    /// defaults < config file < flags
    TrainConfig resolve() const {
        TrainConfig c = config_path.empty() ? TrainConfig{} : load_config(config_path);
        for (const std::string& key : order) {
            if (options.at(key)->count() > 0) apply_setting(c, key, values.at(key));
            if (key == "levels" && c.levels_k == 0 && options.at("schedule")->count() == 0) c.weights.schedule.clear();
        }
        if (variant_opt->count() > 0) c = variant_config(c, parse_variant(variant));
        c.validate();
        return c;
    }
};

std::vector<Protocol> parse_protocols(const std::vector<std::string>& names) {
    std::vector<Protocol> out;
    for (const auto& n : names) {
        std::stringstream in(n);
        std::string item;
        while (std::getline(in, item, ',')) {
            if (!item.empty()) out.push_back(parse_protocol(item));
        }
    }
    if (out.empty()) throw ConfigError("no protocol given");
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

// coarsen ------------------------------------------------------------------

struct CoarsenArgs {
    std::string in, out;
    double ratio = 0.6;
    int levels = 1;
};

int cmd_coarsen(const CoarsenArgs& a) {
    const MeshPyramid p = build_pyramid(load_obj(a.in), a.ratio, a.levels);
    fs::create_directories(a.out);
    for (int k = 0; k <= p.depth(); ++k) {
        save_obj(p.levels[k], fs::path(a.out) / ("level_" + std::to_string(k) + ".obj"));
        std::cout << "level " << k << ": " << p.levels[k].vertex_count() << " vertices, " << p.levels[k].faces.size()
                  << " faces\n";
    }
    for (int k = 0; k < p.depth(); ++k) {
        std::ofstream down(fs::path(a.out) / ("down_" + std::to_string(k) + ".txt"));
        write_assignment_map(down, p.down[k]);
        std::ofstream up(fs::path(a.out) / ("up_" + std::to_string(k) + ".txt"));
        write_assignment_map(up, p.up[k]);
        if (!down || !up) throw IoError("cannot write maps under " + a.out);
    }
    return kOk;
}

int cmd_roundtrip(const CoarsenArgs& a) {
    const TriMesh mesh = load_obj(a.in);
    const MeshPyramid p = build_pyramid(mesh, a.ratio, a.levels);
    const Points back = pull_up(p, p.levels.back().vertices, p.depth());
    const Eigen::VectorXd err = (back - mesh.vertices).rowwise().norm() / bbox_diagonal(mesh);
    if (!a.out.empty()) save_obj(TriMesh{back, mesh.faces}, a.out);
    std::cout << std::setprecision(6) << "levels " << a.levels << " coarsest " << p.levels.back().vertex_count()
              << " vertices\n"
              << "mean relative error " << err.mean() << "\n"
              << "max relative error " << err.maxCoeff() << "\n";
    return kOk;
}

// synth --------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    DatasetConfig cfg;
};

int cmd_synth(const SynthArgs& a) {
    const Dataset d = make_dataset(a.cfg);
    save_dataset(d, a.out);
    std::cout << d.character_count() << " characters x " << d.pose_count() << " poses ("
              << d.train_poses.size() << " train, " << d.test_poses.size() << " test), split hash "
              << split_hash(d.train_poses, d.test_poses) << "\n";
    for (int c = 0; c < d.character_count(); ++c) {
        std::cout << "character " << c << ": " << d.characters[c].rest.vertex_count() << " vertices, "
                  << d.characters[c].gt_skeleton.joint_count() << " bones\n";
    }
    return kOk;
}

// train --------------------------------------------------------------------

struct TrainArgs {
    std::string data, out;
    ConfigFlags flags;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    const TrainConfig cfg = a.flags.resolve();
    const Dataset ds = load_dataset(a.data);
    const TrainingData data = prepare(ds, cfg);
    const int every = std::max(1, cfg.epochs / 10);
    const TrainResult r = train(cfg, data, a.out, [&](const LossRecord& rec) {
        if (!a.quiet && (rec.epoch % every == 0 || rec.epoch == cfg.epochs - 1)) {
            std::cout << "epoch " << rec.epoch << " total " << rec.total << "\n" << std::flush;
        }
    });
    std::cout << "wrote " << (fs::path(a.out) / "ckpt.txt").string() << "\n";
    return kOk;
}

// retarget -----------------------------------------------------------------

struct RetargetArgs {
    std::string run, source_rest, target_rest, out;
    std::vector<std::string> poses;
};

TrainConfig run_config(const std::string& run) {
    const fs::path path = fs::path(run) / "config.txt";
    if (!fs::exists(path)) throw ConfigError("run directory lacks config.txt: " + run);
    return load_config(path);
}

int cmd_retarget(const RetargetArgs& a) {
    const TrainConfig cfg = run_config(a.run);
    const RetargetModel model = load_model(cfg, fs::path(a.run) / "ckpt.txt");
    const TriMesh src_rest = load_obj(a.source_rest);
    const TriMesh dst_rest = load_obj(a.target_rest);
    const CharacterGeometry src = make_geometry(src_rest, cfg.ratio, cfg.levels_k);
    const CharacterGeometry dst = make_geometry(dst_rest, cfg.ratio, cfg.levels_k);
    fs::create_directories(a.out);
    for (std::size_t i = 0; i < a.poses.size(); ++i) {
        const TriMesh pose = load_obj(a.poses[i]);
        if (pose.vertex_count() != src_rest.vertex_count()) {
            throw ShapeError(a.poses[i] + " does not match the source rest mesh");
        }
        const std::vector<Points> out = retarget_full(push_down(src.pyramid, pose.vertices), src, dst, model,
                                                      cfg.refinement(), cfg.first_level());
        const int level = cfg.first_level();
        const fs::path file = fs::path(a.out) / ("retargeted_" + std::to_string(i) + ".obj");
        save_obj(TriMesh{out[level], dst.pyramid.levels[level].faces}, file);
        std::cout << a.poses[i] << " -> " << file.string() << "\n";
    }
    return kOk;
}

// eval ---------------------------------------------------------------------

struct EvalArgs {
    std::string data, run, model = "checkpoint", out;
    std::vector<std::string> protocols{"rec,ret,cyc"};
    int threads = 1;
    CLI::Option* threads_opt = nullptr;
};

int cmd_eval(const EvalArgs& a) {
    const Dataset ds = load_dataset(a.data);
    TrainConfig cfg = a.run.empty() ? TrainConfig{} : run_config(a.run);
    if (a.threads_opt->count() > 0) cfg.threads = a.threads;
    const TrainingData data = prepare(ds, cfg);
    const std::vector<Protocol> protocols = parse_protocols(a.protocols);
    EvalReport report;
    if (a.model == "checkpoint") {
        if (a.run.empty()) throw ConfigError("--run is required with --model checkpoint");
        const RetargetModel model = load_model(cfg, fs::path(a.run) / "ckpt.txt");
        report = evaluate(model, data, cfg, protocols);
    } else {
        const Retargeter r = a.model == "oracle" ? oracle_retargeter(data) : identity_retargeter();
        report = evaluate(r, data, protocols, 0, cfg.threads);
    }
    std::cout << report.to_text();
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        write_text(fs::path(a.out) / "report.csv", report.to_csv());
        write_text(fs::path(a.out) / "samples.csv", report.samples_csv());
        write_text(fs::path(a.out) / "report.txt", report.to_text());
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical mesh coarsening for skeleton-free motion retargeting", "hmc"};
    app.require_subcommand(1);

    CoarsenArgs coarsen_args;
    auto* coarsen = app.add_subcommand("coarsen", "Build a coarsening pyramid and write per-level OBJs and maps");
    coarsen->add_option("--in", coarsen_args.in, "Input OBJ")->required()->check(CLI::ExistingFile);
    coarsen->add_option("--out", coarsen_args.out, "Output directory")->required();
    coarsen->add_option("--ratio", coarsen_args.ratio, "Vertex ratio per level")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    coarsen->add_option("--levels", coarsen_args.levels, "Coarse levels K")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();

    CoarsenArgs round_args;
    auto* roundtrip = app.add_subcommand("roundtrip", "Report the error of lifting the coarsest level back up");
    roundtrip->add_option("--in", round_args.in, "Input OBJ")->required()->check(CLI::ExistingFile);
    roundtrip->add_option("--out", round_args.out, "Optional OBJ for the lifted coarsest level");
    roundtrip->add_option("--ratio", round_args.ratio, "Vertex ratio per level")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    roundtrip->add_option("--levels", round_args.levels, "Coarse levels K")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic character dataset");
    synth->add_option("--out", synth_args.out, "Output directory")->required();
    synth->add_option("--characters", synth_args.cfg.n_characters, "Characters")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--poses", synth_args.cfg.n_poses, "Poses shared by all characters")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--seed", synth_args.cfg.seed, "Dataset seed")->capture_default_str();
    synth->add_option("--vertices", synth_args.cfg.style.vertex_budget, "Approximate vertices per character")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--arm-pairs", synth_args.cfg.style.arm_pairs, "Arm pairs per character")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    synth->add_option("--test-fraction", synth_args.cfg.test_fraction, "Share of poses held out")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();

    TrainArgs train_args;
    auto* trainc = app.add_subcommand("train", "Train a model on a dataset directory");
    trainc->add_option("--data", train_args.data, "Dataset directory from 'hmc synth'")->required();
    trainc->add_option("--out", train_args.out, "Run directory (ckpt.txt, loss.csv, config.txt)")->required();
    trainc->add_flag("--quiet", train_args.quiet, "No per-epoch progress");
    train_args.flags.add(*trainc);

    RetargetArgs ret_args;
    auto* retarget = app.add_subcommand("retarget", "Transfer source poses onto a target rest mesh");
    retarget->add_option("--run", ret_args.run, "Run directory with ckpt.txt and config.txt")->required();
    retarget->add_option("--source-rest", ret_args.source_rest, "Source rest OBJ")->required()->check(CLI::ExistingFile);
    retarget->add_option("--source-pose", ret_args.poses, "Posed source OBJ (repeatable)")
        ->required()
        ->check(CLI::ExistingFile);
    retarget->add_option("--target-rest", ret_args.target_rest, "Target rest OBJ")->required()->check(CLI::ExistingFile);
    retarget->add_option("--out", ret_args.out, "Output directory")->required();

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Run rec/ret/cyc protocols on the test poses");
    eval->add_option("--data", eval_args.data, "Dataset directory")->required();
    eval->add_option("--run", eval_args.run, "Run directory with ckpt.txt and config.txt");
    eval->add_option("--model", eval_args.model, "Model to evaluate")
        ->check(CLI::IsMember({"checkpoint", "oracle", "identity"}))
        ->capture_default_str();
    eval->add_option("--protocol", eval_args.protocols, "Protocols, comma separated")->capture_default_str();
    eval->add_option("--out", eval_args.out, "Directory for report.csv, samples.csv and report.txt");
    eval_args.threads_opt =
        eval->add_option("--threads", eval_args.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*coarsen) return cmd_coarsen(coarsen_args);
        if (*roundtrip) return cmd_roundtrip(round_args);
        if (*synth) return cmd_synth(synth_args);
        if (*trainc) return cmd_train(train_args);
        if (*retarget) return cmd_retarget(ret_args);
        if (*eval) return cmd_eval(eval_args);
    } catch (const TargetTooSmallError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInfeasible;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kCheckpoint;
    } catch (const NanLossError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNan;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

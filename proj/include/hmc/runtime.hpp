#ifndef HMC_RUNTIME_HPP
#define HMC_RUNTIME_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "hmc/coarsen.hpp"
#include "hmc/deform.hpp"
#include "hmc/error.hpp"
#include "hmc/losses.hpp"
#include "hmc/mesh.hpp"
#include "hmc/nn/checkpoint.hpp"
#include "hmc/nn/optim.hpp"
#include "hmc/retarget.hpp"
#include "hmc/synth.hpp"

namespace hmc {

struct TrainConfig {
    int levels_k = 1;
    double ratio = 0.6;
    int parts = 40;
    int embed_dim = 128;
    LossWeights weights;
    int epochs = 400;
    double learning_rate = 3e-3;
    /// Training poses per Adam step; 0 takes every training pose in one step.
    int batch_poses = 0;
    std::uint64_t seed = 0;
    bool paired = true;
    bool no_hr = false;
    bool no_ref = false;
    bool no_var = false;
    /// Every ground-truth joint claims at least one part when matching.
    bool cover_joints = true;
    int threads = 1;

    int first_level() const { return no_hr ? levels_k : 0; }
    Refinement refinement() const { return no_ref ? Refinement::mix : Refinement::hierarchical; }

    ModelConfig model_config() const {
        ModelConfig m;
        m.levels = levels_k + 1;
        m.parts = parts;
        m.embed_dim = embed_dim;
        return m;
    }

    /// Loss weights with the ablation and epoch count applied.
    LossWeights effective_weights() const {
        LossWeights w = weights;
        w.x_max = epochs;
        if (no_var) {
            for (auto& ab : w.schedule) ab = {0.4, 0.4};
        }
        return w;
    }

    void validate() const {
        if (levels_k < 0) throw ConfigError("levels must be non-negative");
        if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("ratio must lie in (0, 1)");
        if (parts < 1) throw ConfigError("parts must be positive");
        if (embed_dim < 1) throw ConfigError("embedding dimension must be positive");
        if (epochs < 0) throw ConfigError("epochs must be non-negative");
        if (batch_poses < 0) throw ConfigError("batch_poses must be non-negative");
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        if (threads < 1) throw ConfigError("threads must be positive");
        if (static_cast<int>(weights.schedule.size()) != levels_k) {
            throw ConfigError("schedule has " + std::to_string(weights.schedule.size()) + " entries for " +
                              std::to_string(levels_k) + " coarse levels");
        }
        if (weights.skinning < 0.0 || weights.rigid < 0.0 || weights.cycle < 0.0) {
            throw ConfigError("loss coefficients must be non-negative");
        }
        effective_weights().validate();
    }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    if constexpr (std::is_floating_point_v<T>) {
        char* end = nullptr;
        const double d = std::strtod(v.c_str(), &end);
        if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": cannot parse '" + v + "'");
        return static_cast<T>(d);
    }
    std::istringstream in(v);
    T out{};
    in >> out;
    if (!in || !(in >> std::ws).eof()) throw ConfigError(key + ": cannot parse '" + v + "'");
    return out;
}

/// "a:b,a:b" list of per-level (alpha, beta).
inline std::vector<std::pair<double, double>> parse_schedule(const std::string& v) {
    std::vector<std::pair<double, double>> out;
    std::stringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("schedule: expected alpha:beta, got '" + item + "'");
        out.emplace_back(parse_number<double>("schedule", item.substr(0, colon)),
                         parse_number<double>("schedule", item.substr(colon + 1)));
    }
    return out;
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{"levels", "ratio",   "parts", "embed_dim", "epochs",
                                               "lr",     "batch_poses", "seed",    "alpha", "beta",      "schedule",
                                               "w_skinning", "w_rigid", "w_cycle", "paired", "no_hr",
                                               "no_ref", "no_var",  "cover_joints", "threads"};
    return keys;
}

inline void apply_setting(TrainConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_number;
    if (key == "levels") {
        c.levels_k = parse_number<int>(key, value);
    } else if (key == "ratio") {
        c.ratio = parse_number<double>(key, value);
    } else if (key == "parts") {
        c.parts = parse_number<int>(key, value);
    } else if (key == "embed_dim") {
        c.embed_dim = parse_number<int>(key, value);
    } else if (key == "epochs") {
        c.epochs = parse_number<int>(key, value);
    } else if (key == "lr") {
        c.learning_rate = parse_number<double>(key, value);
    } else if (key == "batch_poses") {
        c.batch_poses = parse_number<int>(key, value);
    } else if (key == "seed") {
        c.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "alpha") {
        if (c.weights.schedule.empty()) throw ConfigError("alpha needs at least one coarse level");
        c.weights.schedule.front().first = parse_number<double>(key, value);
    } else if (key == "beta") {
        if (c.weights.schedule.empty()) throw ConfigError("beta needs at least one coarse level");
        c.weights.schedule.front().second = parse_number<double>(key, value);
    } else if (key == "schedule") {
        c.weights.schedule = detail::parse_schedule(value);
    } else if (key == "w_skinning") {
        c.weights.skinning = parse_number<double>(key, value);
    } else if (key == "w_rigid") {
        c.weights.rigid = parse_number<double>(key, value);
    } else if (key == "w_cycle") {
        c.weights.cycle = parse_number<double>(key, value);
    } else if (key == "paired") {
        c.paired = detail::parse_bool(key, value);
    } else if (key == "no_hr") {
        c.no_hr = detail::parse_bool(key, value);
    } else if (key == "no_ref") {
        c.no_ref = detail::parse_bool(key, value);
    } else if (key == "no_var") {
        c.no_var = detail::parse_bool(key, value);
    } else if (key == "cover_joints") {
        c.cover_joints = detail::parse_bool(key, value);
    } else if (key == "threads") {
        c.threads = parse_number<int>(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

/// Flat key=value lines; '#' starts a comment line.
inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    try {
        return detail::read_key_values(in);
    } catch (const ParseError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline void write_config(std::ostream& out, const TrainConfig& c) {
    out << std::setprecision(17);
    out << "levels=" << c.levels_k << "\n";
    out << "ratio=" << c.ratio << "\n";
    out << "parts=" << c.parts << "\n";
    out << "embed_dim=" << c.embed_dim << "\n";
    out << "epochs=" << c.epochs << "\n";
    out << "lr=" << c.learning_rate << "\n";
    out << "batch_poses=" << c.batch_poses << "\n";
    out << "seed=" << c.seed << "\n";
    out << "schedule=";
    for (std::size_t k = 0; k < c.weights.schedule.size(); ++k) {
        out << (k ? "," : "") << c.weights.schedule[k].first << ":" << c.weights.schedule[k].second;
    }
    out << "\n";
    out << "w_skinning=" << c.weights.skinning << "\n";
    out << "w_rigid=" << c.weights.rigid << "\n";
    out << "w_cycle=" << c.weights.cycle << "\n";
    out << "paired=" << (c.paired ? 1 : 0) << "\n";
    out << "no_hr=" << (c.no_hr ? 1 : 0) << "\n";
    out << "no_ref=" << (c.no_ref ? 1 : 0) << "\n";
    out << "no_var=" << (c.no_var ? 1 : 0) << "\n";
    out << "cover_joints=" << (c.cover_joints ? 1 : 0) << "\n";
}

inline TrainConfig load_config(const std::filesystem::path& path) {
    TrainConfig c;
    const auto kv = read_config_file(path);
    // levels first so a later schedule key can be checked against it
    if (auto it = kv.find("levels"); it != kv.end()) apply_setting(c, it->first, it->second);
    for (const auto& [k, v] : kv) {
        if (k != "levels") apply_setting(c, k, v);
    }
    return c;
}

inline double pmd(const Points& pred, const Points& gt) {
    if (pred.rows() != gt.rows()) {
        throw ShapeError("pmd: " + std::to_string(pred.rows()) + " vs " + std::to_string(gt.rows()) + " vertices");
    }
    if (gt.rows() == 0) throw ShapeError("pmd: empty point sets");
    return (pred - gt).rowwise().norm().mean();
}

/// Dataset quantities resampled onto every pyramid level.
struct TrainingData {
    const Dataset* dataset = nullptr;
    int levels = 1;  // K + 1
    bool paired = true;
    std::vector<CharacterGeometry> geometry;
    std::vector<std::vector<Matrix>> gt_weights;               // [c][k]
    std::vector<std::vector<std::vector<Points>>> gt_pose;     // [c][p][k]
    std::vector<std::vector<FkResult>> fk;                     // [c][p]

    int character_count() const { return static_cast<int>(geometry.size()); }
};

inline TrainingData prepare(const Dataset& dataset, const TrainConfig& config) {
    config.validate();
    TrainingData d;
    d.dataset = &dataset;
    d.levels = config.levels_k + 1;
    d.paired = config.paired;
    for (int c = 0; c < dataset.character_count(); ++c) {
        const CharacterSample& ch = dataset.characters[c];
        d.geometry.push_back(make_geometry(ch.rest, config.ratio, config.levels_k));
        const CharacterGeometry& g = d.geometry.back();
        std::vector<Matrix> w{ch.gt_skinning};
        for (int k = 0; k < config.levels_k; ++k) {
            Matrix next = (g.pyramid.down[k].matrix * w.back().transpose()).transpose();
            w.push_back(std::move(next));
        }
        d.gt_weights.push_back(std::move(w));
        std::vector<std::vector<Points>> poses;
        std::vector<FkResult> fks;
        for (int p = 0; p < dataset.pose_count(); ++p) {
            poses.push_back(push_down(g.pyramid, dataset.posed[c][p]));
            fks.push_back(forward_kinematics(ch.gt_skeleton, dataset.poses[p]));
        }
        d.gt_pose.push_back(std::move(poses));
        d.fk.push_back(std::move(fks));
    }
    return d;
}

/// Ground-truth 6-D transform per predicted part: each part follows the
/// ground-truth joint it is matched to.
inline Matrix part_targets(const std::vector<int>& match, const Points& pivots, const FkResult& fk) {
    Matrix out(static_cast<Eigen::Index>(match.size()), 6);
    for (std::size_t j = 0; j < match.size(); ++j) {
        const int m = match[j];
        const Vec3 pos = fk.carry(m, pivots.row(static_cast<Eigen::Index>(j)).transpose());
        const Vec3 rot = axis_angle(fk.rotations[static_cast<std::size_t>(m)]);
        out.row(static_cast<Eigen::Index>(j)) << pos.transpose(), rot.transpose();
    }
    return out;
}

struct LossRecord {
    int epoch = 0;
    double total = 0.0;
    std::vector<double> retarget;  // per level; NaN where unused
    double skinning = 0.0;
    double rigid = 0.0;
    double cycle = 0.0;
};

struct TrainResult {
    RetargetModel model;
    std::vector<LossRecord> history;
};

inline void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& history, int levels) {
    out << "epoch,total";
    for (int k = 0; k < levels; ++k) out << ",ret" << k;
    out << ",skinning,rigid,cycle\n";
    out << std::setprecision(17);
    for (const auto& r : history) {
        out << r.epoch << "," << r.total;
        for (double v : r.retarget) out << "," << v;
        out << "," << r.skinning << "," << r.rigid << "," << r.cycle << "\n";
    }
}

namespace detail {

inline double scalar(const Var& v) { return v.valid() ? v.value()(0, 0) : 0.0; }

inline void check_finite(const Var& v, int epoch, const std::string& term) {
    if (v.valid() && !std::isfinite(v.value()(0, 0))) throw NanLossError(epoch, term);
}

inline Var mean_of(Tape& tape, const std::vector<Var>& terms) {
    if (terms.empty()) return Var();
    Var total = tape.constant(Matrix::Zero(1, 1));
    for (const Var& t : terms) total = nn::add(total, t);
    return nn::scale(total, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace detail

/// Scalar values of every loss term for one full-batch forward pass.
struct EpochLosses {
    LossTerms terms;
    Var total;
};

/// Builds the objective over `poses` (training pose indices) on `tape`.
inline EpochLosses epoch_objective(Tape& tape, const BoundModel& bound, const TrainingData& data,
                                   const TrainConfig& config, const LossWeights& weights, int epoch,
                                   const std::vector<int>& poses) {
    const Dataset& ds = *data.dataset;
    const int levels = data.levels;
    const int first = config.first_level();
    const Refinement mode = config.refinement();
    const int chars = data.character_count();

    std::vector<RestEncoding> enc;
    for (int c = 0; c < chars; ++c) enc.push_back(encode_rest(tape, data.geometry[c], bound, first));

    // Part-to-joint matching per character and level, from the current weights.
    std::vector<std::vector<std::vector<int>>> match(static_cast<std::size_t>(chars));
    for (int c = 0; c < chars; ++c) {
        match[c].resize(levels);
        for (int k = first; k < levels; ++k) {
            match[c][k] = config.cover_joints ? match_gt_joints_covering(enc[c].weights[k].value(), data.gt_weights[c][k])
                                              : match_gt_joints(enc[c].weights[k].value(), data.gt_weights[c][k]);
        }
    }

    std::vector<std::vector<std::vector<Var>>> pose_vars(static_cast<std::size_t>(chars));
    std::vector<std::vector<std::vector<Var>>> codes(static_cast<std::size_t>(chars));
    for (int c = 0; c < chars; ++c) {
        pose_vars[c].resize(static_cast<std::size_t>(ds.pose_count()));
        codes[c].resize(static_cast<std::size_t>(ds.pose_count()));
        for (int p : poses) {
            std::vector<Var> lv(static_cast<std::size_t>(levels));
            for (int k = first; k < levels; ++k) lv[k] = tape.constant(data.gt_pose[c][p][k]);
            codes[c][p] = source_codes(data.geometry[c], enc[c], lv, bound, first);
            pose_vars[c][p] = std::move(lv);
        }
    }

    std::vector<std::vector<Var>> ret_terms(static_cast<std::size_t>(levels));
    std::vector<Var> rigid_terms;
    std::vector<Var> cycle_terms;
    for (int s = 0; s < chars; ++s) {
        for (int t = 0; t < chars; ++t) {
            const bool supervised = data.paired || s == t;
            for (int p : poses) {
                if (!supervised) {
                    cycle_terms.push_back(cycle_term(data.geometry[s], enc[s], pose_vars[s][p], data.geometry[t],
                                                     enc[t], bound, mode, first));
                    continue;
                }
                const RetargetOutputs out =
                    retarget_from_codes(data.geometry[t], enc[t], codes[s][p], bound, mode, first);
                for (int k = first; k < levels; ++k) {
                    const Matrix j_gt = part_targets(match[t][k], enc[t].pivots[k].value(), data.fk[t][p]);
                    const Var j_pred = nn::concat_cols(out.parts[k].positions, out.parts[k].rotations);
                    ret_terms[k].push_back(layer_retarget_loss(data.gt_pose[t][p][k], out.poses[k], j_gt, j_pred));
                }
                rigid_terms.push_back(
                    rigid_loss(out.poses[first], data.geometry[t].rest(first), data.geometry[t].edges[first]));
            }
        }
    }

    std::vector<Var> skin_terms;
    auto skin_levels = [&](int c) {
        SkinningLevels sl;
        sl.predicted = enc[c].weights;
        sl.ground_truth = data.gt_weights[c];
        sl.pyramid = &data.geometry[c].pyramid;
        sl.matches = match[c];
        return sl;
    };
    for (int s = 0; s < chars; ++s) {
        for (int t = 0; t < chars; ++t) {
            if (s == t && chars > 1) continue;
            skin_terms.push_back(skinning_similarity_loss(skin_levels(s), skin_levels(t)));
        }
    }

    EpochLosses out;
    out.terms.retarget.resize(static_cast<std::size_t>(levels));
    for (int k = first; k < levels; ++k) out.terms.retarget[k] = detail::mean_of(tape, ret_terms[k]);
    out.terms.skinning = detail::mean_of(tape, skin_terms);
    out.terms.rigid = detail::mean_of(tape, rigid_terms);
    out.terms.cycle = detail::mean_of(tape, cycle_terms);

    for (int k = first; k < levels; ++k) detail::check_finite(out.terms.retarget[k], epoch, "retarget level " + std::to_string(k));
    detail::check_finite(out.terms.skinning, epoch, "skinning");
    detail::check_finite(out.terms.rigid, epoch, "rigid");
    detail::check_finite(out.terms.cycle, epoch, "cycle");

    if (config.no_hr) {
        // Only the coarsest level is trained; it takes the full retargeting weight.
        LossTerms single = out.terms;
        single.retarget = {out.terms.retarget[first]};
        LossWeights w = weights;
        w.schedule.clear();
        out.total = total_loss(tape, single, w, 0.0);
    } else {
        out.total = total_loss(tape, out.terms, weights, static_cast<double>(epoch));
    }
    detail::check_finite(out.total, epoch, "total");
    return out;
}

/// Adam training over shuffled pose batches; writes ckpt.txt, loss.csv and config.txt when `run_dir` is given.
inline TrainResult train(const TrainConfig& config, const TrainingData& data,
                         const std::filesystem::path& run_dir = {},
                         const std::function<void(const LossRecord&)>& progress = {}) {
    config.validate();
    if (data.dataset == nullptr || data.character_count() == 0 || data.dataset->train_poses.empty()) {
        throw DomainError("training needs at least one character and one training pose");
    }
    if (data.levels != config.levels_k + 1) throw ConfigError("training data was prepared for another depth");
    const LossWeights weights = config.effective_weights();
    TrainResult result;
    result.model = init_model(config.model_config(), config.seed);
    nn::AdamState adam;
    nn::AdamConfig adam_cfg;
    adam_cfg.lr = config.learning_rate;
    std::vector<int> order = data.dataset->train_poses;
    const int n_train = static_cast<int>(order.size());
    const int batch = config.batch_poses == 0 ? n_train : std::min(config.batch_poses, n_train);
    std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (batch < n_train) {
            for (int i = n_train - 1; i > 0; --i) {
                std::swap(order[static_cast<std::size_t>(i)],
                          order[static_cast<std::size_t>(shuffle_rng() % static_cast<std::uint64_t>(i + 1))]);
            }
        }
        LossRecord rec;
        rec.epoch = epoch;
        rec.retarget.assign(static_cast<std::size_t>(data.levels), 0.0);
        int steps = 0;
        for (int start = 0; start < n_train; start += batch) {
            const std::vector<int> poses(order.begin() + start, order.begin() + std::min(start + batch, n_train));
            Tape tape;
            const BoundModel bound = bind_model(tape, result.model, true);
            const EpochLosses losses = epoch_objective(tape, bound, data, config, weights, epoch, poses);
            rec.total += detail::scalar(losses.total);
            for (std::size_t k = 0; k < losses.terms.retarget.size(); ++k) {
                const Var& r = losses.terms.retarget[k];
                rec.retarget[k] += r.valid() ? r.value()(0, 0) : std::numeric_limits<double>::quiet_NaN();
            }
            rec.skinning += detail::scalar(losses.terms.skinning);
            rec.rigid += detail::scalar(losses.terms.rigid);
            rec.cycle += detail::scalar(losses.terms.cycle);
            tape.backward(losses.total);
            std::vector<Matrix> grads;
            for (const Var& leaf : bound.leaves) grads.push_back(tape.grad(leaf));
            nn::adam_step(result.model.parameters(), grads, adam, adam_cfg);
            ++steps;
        }
        const double inv = 1.0 / steps;
        rec.total *= inv;
        for (double& r : rec.retarget) r *= inv;
        rec.skinning *= inv;
        rec.rigid *= inv;
        rec.cycle *= inv;
        result.history.push_back(rec);
        if (progress) progress(rec);
    }
    if (!run_dir.empty()) {
        std::filesystem::create_directories(run_dir);
        nn::save_checkpoint(run_dir / "ckpt.txt", result.model.parameters());
        std::ofstream loss(run_dir / "loss.csv");
        write_loss_csv(loss, result.history, data.levels);
        std::ofstream cfg(run_dir / "config.txt");
        write_config(cfg, config);
        if (!loss || !cfg) throw IoError("cannot write run files under " + run_dir.string());
    }
    return result;
}

/// Model built from `config` with parameters read from a checkpoint.
inline RetargetModel load_model(const TrainConfig& config, const std::filesystem::path& checkpoint) {
    RetargetModel model = init_model(config.model_config(), config.seed);
    nn::load_checkpoint(checkpoint, model.parameters());
    return model;
}

enum class Protocol { rec, ret, cyc };

inline std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::rec: return "rec";
        case Protocol::ret: return "ret";
        case Protocol::cyc: return "cyc";
    }
    return "?";
}

inline Protocol parse_protocol(const std::string& s) {
    if (s == "rec") return Protocol::rec;
    if (s == "ret") return Protocol::ret;
    if (s == "cyc") return Protocol::cyc;
    throw ConfigError("unknown protocol '" + s + "'");
}

/// Maps a source pose (given per level) of character s onto character t,
/// returning the target pose per level.
using Retargeter = std::function<std::vector<Points>(int s, const std::vector<Points>& source_levels, int t)>;

inline Retargeter model_retargeter(const RetargetModel& model, const TrainingData& data,
                                   Refinement mode = Refinement::hierarchical, int first_level = 0) {
    return [&model, &data, mode, first_level](int s, const std::vector<Points>& src, int t) {
        return retarget_full(src, data.geometry[s], data.geometry[t], model, mode, first_level);
    };
}

/// Looks the source pose up in the dataset and returns the paired ground truth.
inline Retargeter oracle_retargeter(const TrainingData& data) {
    return [&data](int s, const std::vector<Points>& src, int t) {
        for (int p = 0; p < data.dataset->pose_count(); ++p) {
            const auto& cand = data.gt_pose[s][p];
            bool same = true;
            for (std::size_t k = 0; k < src.size() && same; ++k) {
                same = src[k].size() == 0 || src[k] == cand[k];
            }
            if (same) return data.gt_pose[t][p];
        }
        throw DomainError("oracle has no pose matching the source");
    };
}

/// Hands the source pose back unchanged, whatever the target.
inline Retargeter identity_retargeter() {
    return [](int, const std::vector<Points>& src, int) { return src; };
}

struct SampleResult {
    Protocol protocol = Protocol::rec;
    int source = 0;
    int target = 0;
    int pose = 0;
    int level = 0;
    double pmd = 0.0;
};

struct EvalReport {
    int first_level = 0;
    int levels = 1;
    /// Headline PMD at the finest evaluated level; NaN when not evaluated.
    double rec = std::numeric_limits<double>::quiet_NaN();
    double ret = std::numeric_limits<double>::quiet_NaN();
    double cyc = std::numeric_limits<double>::quiet_NaN();
    /// [protocol][level] mean PMD; NaN when not evaluated.
    std::map<Protocol, std::vector<double>> per_level;
    std::vector<SampleResult> samples;
    double seconds = 0.0;

    double headline(Protocol p) const {
        switch (p) {
            case Protocol::rec: return rec;
            case Protocol::ret: return ret;
            case Protocol::cyc: return cyc;
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    std::string to_csv() const {
        std::ostringstream out;
        out << std::setprecision(17) << "protocol,level,pmd\n";
        for (const auto& [p, values] : per_level) {
            for (int k = first_level; k < levels; ++k) out << to_string(p) << "," << k << "," << values[k] << "\n";
        }
        return out.str();
    }

    std::string samples_csv() const {
        std::ostringstream out;
        out << std::setprecision(17) << "protocol,source,target,pose,level,pmd\n";
        for (const auto& s : samples) {
            out << to_string(s.protocol) << "," << s.source << "," << s.target << "," << s.pose << "," << s.level
                << "," << s.pmd << "\n";
        }
        return out.str();
    }

    std::string to_text() const {
        std::ostringstream out;
        out << std::scientific << std::setprecision(4);
        for (const auto& [p, values] : per_level) {
            out << to_string(p) << " PMD " << headline(p) << "  (";
            for (int k = first_level; k < levels; ++k) out << (k > first_level ? ", " : "") << "level " << k << ": " << values[k];
            out << ")\n";
        }
        out << std::fixed << std::setprecision(2) << "evaluated " << samples.size() << " level samples in " << seconds
            << " s\n";
        return out.str();
    }
};

/// Runs the protocols on the test poses. rec retargets each character onto
/// itself, ret onto every other character, cyc goes there and back again.
inline EvalReport evaluate(const Retargeter& retarget, const TrainingData& data, const std::vector<Protocol>& protocols,
                           int first_level = 0, int threads = 1) {
    const auto start = std::chrono::steady_clock::now();
    const Dataset& ds = *data.dataset;
    const int chars = data.character_count();
    if (first_level < 0 || first_level >= data.levels) throw ShapeError("first level out of range");
    if (ds.test_poses.empty()) throw DomainError("dataset has no test poses");
    for (Protocol p : protocols) {
        if (p != Protocol::rec && chars < 2) throw DomainError(to_string(p) + " needs at least two characters");
        if (p == Protocol::ret && !data.paired) throw DomainError("ret needs paired ground truth");
    }

    struct Job {
        Protocol protocol;
        int s, t, p;
    };
    std::vector<Job> jobs;
    for (Protocol proto : protocols) {
        for (int s = 0; s < chars; ++s) {
            for (int t = 0; t < chars; ++t) {
                if ((proto == Protocol::rec) != (s == t)) continue;
                for (int p : ds.test_poses) jobs.push_back({proto, s, t, p});
            }
        }
    }

    auto levels_of = [&](const std::vector<Points>& all) {
        std::vector<Points> out(all.size());
        for (int k = first_level; k < static_cast<int>(all.size()); ++k) out[k] = all[k];
        return out;
    };
    std::vector<std::vector<double>> results(jobs.size());
    auto run = [&](std::size_t i) {
        const Job& j = jobs[i];
        const std::vector<Points> src = levels_of(data.gt_pose[j.s][j.p]);
        std::vector<Points> pred = retarget(j.s, src, j.t);
        const std::vector<Points>* ref = &data.gt_pose[j.t][j.p];
        if (j.protocol == Protocol::cyc) {
            pred = retarget(j.t, levels_of(pred), j.s);
            ref = &data.gt_pose[j.s][j.p];
        }
        std::vector<double> r;
        for (int k = first_level; k < data.levels; ++k) r.push_back(pmd(pred[k], (*ref)[k]));
        results[i] = std::move(r);
    };
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run(i);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = static_cast<std::size_t>(w); i < jobs.size(); i += workers) run(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    EvalReport report;
    report.first_level = first_level;
    report.levels = data.levels;
    std::map<Protocol, std::vector<double>> sums;
    std::map<Protocol, int> counts;
    for (Protocol proto : protocols) {
        sums[proto].assign(static_cast<std::size_t>(data.levels), 0.0);
        counts[proto] = 0;
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const Job& j = jobs[i];
        ++counts[j.protocol];
        for (int k = first_level; k < data.levels; ++k) {
            const double v = results[i][static_cast<std::size_t>(k - first_level)];
            sums[j.protocol][k] += v;
            report.samples.push_back({j.protocol, j.s, j.t, j.p, k, v});
        }
    }
    for (Protocol proto : protocols) {
        std::vector<double> mean(static_cast<std::size_t>(data.levels), std::numeric_limits<double>::quiet_NaN());
        for (int k = first_level; k < data.levels; ++k) mean[k] = sums[proto][k] / counts[proto];
        report.per_level[proto] = mean;
        const double head = mean[first_level];
        if (proto == Protocol::rec) report.rec = head;
        if (proto == Protocol::ret) report.ret = head;
        if (proto == Protocol::cyc) report.cyc = head;
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

inline EvalReport evaluate(const RetargetModel& model, const TrainingData& data, const TrainConfig& config,
                           const std::vector<Protocol>& protocols) {
    return evaluate(model_retargeter(model, data, config.refinement(), config.first_level()), data, protocols,
                    config.first_level(), config.threads);
}

enum class Variant { full, no_hr, no_ref, no_var };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_hr: return "no_hr";
        case Variant::no_ref: return "no_ref";
        case Variant::no_var: return "no_var";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "no_hr") return Variant::no_hr;
    if (s == "no_ref") return Variant::no_ref;
    if (s == "no_var") return Variant::no_var;
    throw ConfigError("unknown ablation variant '" + s + "'");
}

inline TrainConfig variant_config(TrainConfig config, Variant v) {
    config.no_hr = v == Variant::no_hr;
    config.no_ref = v == Variant::no_ref;
    config.no_var = v == Variant::no_var;
    return config;
}

struct AblationResult {
    TrainConfig config;
    TrainResult training;
    EvalReport report;
};

/// Trains the variant from scratch and evaluates every protocol the data supports.
inline AblationResult run_ablation(const TrainConfig& base, const Dataset& dataset, Variant variant,
                                   const std::filesystem::path& run_dir = {}) {
    AblationResult r;
    r.config = variant_config(base, variant);
    const TrainingData data = prepare(dataset, r.config);
    r.training = train(r.config, data, run_dir);
    std::vector<Protocol> protocols{Protocol::rec};
    if (data.character_count() > 1) {
        if (data.paired) protocols.push_back(Protocol::ret);
        protocols.push_back(Protocol::cyc);
    }
    r.report = evaluate(r.training.model, data, r.config, protocols);
    return r;
}

}  // namespace hmc

#endif  // HMC_RUNTIME_HPP

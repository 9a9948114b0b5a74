#ifndef HMC_SYNTH_HPP
#define HMC_SYNTH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hmc/deform.hpp"
#include "hmc/error.hpp"
#include "hmc/mesh.hpp"
#include "hmc/obj_io.hpp"

namespace hmc {

struct Bone {
    std::string name;
    int parent = -1;
    Vec3 head = Vec3::Zero();
    Vec3 tail = Vec3::Zero();
    double radius = 0.05;

    double length() const { return (tail - head).norm(); }
};

/// Joint tree; bone b rotates about its head and parents precede children.
struct Skeleton {
    std::vector<Bone> bones;

    int joint_count() const { return static_cast<int>(bones.size()); }
    std::vector<int> parents() const {
        std::vector<int> p;
        for (const Bone& b : bones) p.push_back(b.parent);
        return p;
    }
    int index_of(const std::string& name) const {
        for (std::size_t b = 0; b < bones.size(); ++b) {
            if (bones[b].name == name) return static_cast<int>(b);
        }
        return -1;
    }
};

inline void validate(const Skeleton& s) {
    int roots = 0;
    for (int b = 0; b < s.joint_count(); ++b) {
        const int p = s.bones[static_cast<std::size_t>(b)].parent;
        if (p < 0) {
            ++roots;
        } else if (p >= b) {
            throw DomainError("bone " + std::to_string(b) + " does not follow its parent");
        }
    }
    if (roots != 1) throw DomainError("skeleton must have exactly one root");
}

struct StyleParams {
    int arm_pairs = 1;
    int vertex_budget = 500;
    double torso_length = 0.5;
    double torso_radius = 0.13;
    double upper_arm = 0.28;
    double forearm = 0.25;
    double arm_radius = 0.045;
    double thigh = 0.42;
    double shin = 0.4;
    double leg_radius = 0.06;
    double head_size = 0.1;
    /// Relative random perturbation of lengths and radii.
    double jitter = 0.15;
};

struct CharacterSample {
    TriMesh rest;
    SkinningWeights gt_skinning;  // bones x vertices
    Skeleton gt_skeleton;
    StyleParams style_params;
    std::uint64_t seed = 0;
    /// Ellipsoid resolution used for every bone.
    int rings = 0;
    int around = 0;
};

/// Local axis-angle rotation per joint plus a global rigid transform about the origin.
struct PoseSpec {
    Points rotations;
    Vec3 root_rotation = Vec3::Zero();
    Vec3 root_translation = Vec3::Zero();

    static PoseSpec zero(int joints) { return PoseSpec{Points::Zero(joints, 3), Vec3::Zero(), Vec3::Zero()}; }
};

inline void validate(const PoseSpec& pose) {
    if (!pose.rotations.allFinite() || !pose.root_rotation.allFinite() || !pose.root_translation.allFinite()) {
        throw DomainError("pose is not finite");
    }
    const double limit = M_PI + 1e-12;
    for (Eigen::Index j = 0; j < pose.rotations.rows(); ++j) {
        if (pose.rotations.row(j).norm() > limit) throw DomainError("joint angle exceeds pi");
    }
    if (pose.root_rotation.norm() > limit) throw DomainError("root angle exceeds pi");
}

namespace detail {

inline Skeleton humanoid_skeleton(const StyleParams& s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(1.0 - s.jitter, 1.0 + s.jitter);
    Skeleton sk;
    auto add = [&](std::string name, int parent, Vec3 head, Vec3 tail, double radius) {
        sk.bones.push_back(Bone{std::move(name), parent, head, tail, radius});
        return static_cast<int>(sk.bones.size()) - 1;
    };
    const double thigh = s.thigh * u(rng);
    const double shin = s.shin * u(rng);
    const double leg_r = s.leg_radius * u(rng);
    const double hip_y = thigh + shin + 0.02;
    const double pelvis_len = 0.25 * s.torso_length;
    const double spine_len = s.torso_length * u(rng);
    const double torso_r = s.torso_radius * u(rng);
    const double head_size = s.head_size * u(rng);
    const double hip_x = 0.7 * torso_r;

    const int pelvis = add("pelvis", -1, Vec3(0, hip_y, 0), Vec3(0, hip_y + pelvis_len, 0), torso_r);
    const double spine_top = hip_y + pelvis_len + spine_len;
    const int spine = add("spine", pelvis, Vec3(0, hip_y + pelvis_len, 0), Vec3(0, spine_top, 0), torso_r);
    add("head", spine, Vec3(0, spine_top + 0.3 * head_size, 0), Vec3(0, spine_top + 2.0 * head_size, 0),
        head_size);
    for (int side = 0; side < 2; ++side) {
        const double x = side == 0 ? hip_x : -hip_x;
        const std::string tag = side == 0 ? "l" : "r";
        const int t = add("thigh_" + tag, pelvis, Vec3(x, hip_y, 0), Vec3(x, hip_y - thigh, 0), leg_r);
        add("shin_" + tag, t, Vec3(x, hip_y - thigh, 0), Vec3(x, hip_y - thigh - shin, 0), 0.85 * leg_r);
    }
    for (int pair = 0; pair < s.arm_pairs; ++pair) {
        const double upper = s.upper_arm * u(rng);
        const double fore = s.forearm * u(rng);
        const double arm_r = s.arm_radius * u(rng);
        const double y = spine_top - 0.05 - pair * 2.5 * arm_r;
        for (int side = 0; side < 2; ++side) {
            const double dir = side == 0 ? 1.0 : -1.0;
            const std::string tag = std::to_string(pair) + (side == 0 ? "_l" : "_r");
            const double x0 = dir * (torso_r + 0.01);
            const int ua = add("upper_arm" + tag, spine, Vec3(x0, y, 0), Vec3(x0 + dir * upper, y, 0), arm_r);
            add("forearm" + tag, ua, Vec3(x0 + dir * upper, y, 0), Vec3(x0 + dir * (upper + fore), y, 0),
                0.85 * arm_r);
        }
    }
    return sk;
}

/// Closed ellipsoid around a bone: rings x around grid plus two poles.
inline void append_ellipsoid(const Bone& bone, int rings, int around, TriMesh& mesh) {
    const Vec3 d = (bone.tail - bone.head).normalized();
    const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 u = d.cross(helper).normalized();
    const Vec3 w = d.cross(u);
    const Vec3 c = 0.5 * (bone.head + bone.tail);
    const double a = 0.5 * bone.length() + 0.6 * bone.radius;
    const int base = static_cast<int>(mesh.vertices.rows());
    const int count = rings * around + 2;
    mesh.vertices.conservativeResize(base + count, 3);
    mesh.vertices.row(base) = (c - a * d).transpose();
    for (int i = 0; i < rings; ++i) {
        const double theta = M_PI * (i + 1) / (rings + 1);
        for (int k = 0; k < around; ++k) {
            const double phi = 2.0 * M_PI * k / around;
            const Vec3 p = c - a * std::cos(theta) * d + bone.radius * std::sin(theta) * (std::cos(phi) * u + std::sin(phi) * w);
            mesh.vertices.row(base + 1 + i * around + k) = p.transpose();
        }
    }
    const int bottom = base;
    const int top = base + count - 1;
    mesh.vertices.row(top) = (c + a * d).transpose();
    auto at = [&](int i, int k) { return base + 1 + i * around + (k % around); };
    for (int k = 0; k < around; ++k) mesh.faces.push_back({bottom, at(0, k + 1), at(0, k)});
    for (int i = 0; i + 1 < rings; ++i) {
        for (int k = 0; k < around; ++k) {
            mesh.faces.push_back({at(i, k), at(i, k + 1), at(i + 1, k + 1)});
            mesh.faces.push_back({at(i, k), at(i + 1, k + 1), at(i + 1, k)});
        }
    }
    for (int k = 0; k < around; ++k) mesh.faces.push_back({top, at(rings - 1, k), at(rings - 1, k + 1)});
}

/// Resolution whose total vertex count is closest to the budget, preferring around ~ 2 rings.
inline std::pair<int, int> ellipsoid_resolution(int bones, int budget) {
    std::pair<int, int> best{0, 0};
    double best_score = std::numeric_limits<double>::infinity();
    for (int rings = 2; rings <= 64; ++rings) {
        for (int around = 3; around <= 128; ++around) {
            const int total = bones * (rings * around + 2);
            const double miss = std::abs(total - budget) / static_cast<double>(budget);
            const double shape = std::abs(std::log(around / (2.0 * rings)));
            const double score = miss + 0.01 * shape;
            if (miss <= 0.1 && score < best_score) {
                best_score = score;
                best = {rings, around};
            }
        }
    }
    if (best.first == 0) {
        throw DomainError("vertex budget " + std::to_string(budget) + " is infeasible for " + std::to_string(bones) +
                          " bones");
    }
    return best;
}

inline double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

}  // namespace detail

/// Mean radius of the arm and leg bones.
inline double limb_radius(const Skeleton& skeleton) {
    double sum = 0.0;
    int n = 0;
    for (const Bone& b : skeleton.bones) {
        if (b.name == "pelvis" || b.name == "spine" || b.name == "head") continue;
        sum += b.radius;
        ++n;
    }
    if (n == 0) {
        for (const Bone& b : skeleton.bones) sum += b.radius;
        n = skeleton.joint_count();
    }
    return sum / n;
}

/// Softmax over bones of negative distance to the bone segment, temperature
/// 0.1 x limb radius.
inline SkinningWeights bone_skinning(const Points& vertices, const Skeleton& skeleton) {
    const int bones = skeleton.joint_count();
    const double temperature = 0.1 * limb_radius(skeleton);
    SkinningWeights w(bones, vertices.rows());
    for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
        const Vec3 p = vertices.row(i).transpose();
        Eigen::VectorXd logits(bones);
        for (int b = 0; b < bones; ++b) {
            const Bone& bone = skeleton.bones[static_cast<std::size_t>(b)];
            logits(b) = -detail::segment_distance(p, bone.head, bone.tail) / temperature;
        }
        const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
        w.col(i) = e / e.sum();
    }
    return w;
}

inline CharacterSample make_character(const StyleParams& style, std::uint64_t seed) {
    if (style.vertex_budget < 100 || style.vertex_budget > 2000) {
        throw DomainError("vertex budget " + std::to_string(style.vertex_budget) + " outside [100, 2000]");
    }
    if (style.arm_pairs < 0) throw DomainError("arm pair count must be non-negative");
    std::mt19937_64 rng(seed);
    CharacterSample c;
    c.seed = seed;
    c.style_params = style;
    c.gt_skeleton = detail::humanoid_skeleton(style, rng);
    const auto [rings, around] = detail::ellipsoid_resolution(c.gt_skeleton.joint_count(), style.vertex_budget);
    c.rings = rings;
    c.around = around;
    c.rest.vertices.resize(0, 3);
    for (const Bone& b : c.gt_skeleton.bones) detail::append_ellipsoid(b, rings, around, c.rest);

    // Unit bbox diagonal, centered on the bbox.
    const Vec3 lo = c.rest.vertices.colwise().minCoeff().transpose();
    const Vec3 hi = c.rest.vertices.colwise().maxCoeff().transpose();
    const Vec3 center = 0.5 * (lo + hi);
    const double s = 1.0 / (hi - lo).norm();
    c.rest.vertices = ((c.rest.vertices.rowwise() - center.transpose()) * s).eval();
    for (Bone& b : c.gt_skeleton.bones) {
        b.head = (b.head - center) * s;
        b.tail = (b.tail - center) * s;
        b.radius *= s;
    }
    c.gt_skinning = bone_skinning(c.rest.vertices, c.gt_skeleton);
    validate(c.rest);
    return c;
}

/// Global rotation and posed head per bone, global transform included.
struct FkResult {
    std::vector<Eigen::Matrix3d> rotations;
    Points heads;
    Points rest_heads;

    /// Maps a point rigidly attached to bone b from rest to posed space.
    Vec3 carry(int b, const Vec3& x) const {
        return rotations[static_cast<std::size_t>(b)] * (x - rest_heads.row(b).transpose()) + heads.row(b).transpose();
    }
};

inline void check_pose(const Skeleton& skeleton, const PoseSpec& pose) {
    if (pose.rotations.rows() != skeleton.joint_count()) {
        throw ShapeError("pose has " + std::to_string(pose.rotations.rows()) + " joints, skeleton has " +
                         std::to_string(skeleton.joint_count()));
    }
    validate(pose);
}

inline FkResult forward_kinematics(const Skeleton& skeleton, const PoseSpec& pose) {
    check_pose(skeleton, pose);
    const int n = skeleton.joint_count();
    FkResult fk;
    fk.rotations.resize(static_cast<std::size_t>(n));
    fk.heads.resize(n, 3);
    fk.rest_heads.resize(n, 3);
    const Eigen::Matrix3d g = rotation_matrix(pose.root_rotation);
    std::vector<Eigen::Matrix3d> local_global(static_cast<std::size_t>(n));
    Points local_heads(n, 3);
    for (int b = 0; b < n; ++b) {
        const Bone& bone = skeleton.bones[static_cast<std::size_t>(b)];
        const Eigen::Matrix3d r = rotation_matrix(pose.rotations.row(b).transpose());
        fk.rest_heads.row(b) = bone.head.transpose();
        if (bone.parent < 0) {
            local_global[b] = r;
            local_heads.row(b) = bone.head.transpose();
        } else {
            const Bone& parent = skeleton.bones[static_cast<std::size_t>(bone.parent)];
            local_global[b] = local_global[bone.parent] * r;
            local_heads.row(b) =
                local_heads.row(bone.parent) + (local_global[bone.parent] * (bone.head - parent.head)).transpose();
        }
        fk.rotations[b] = g * local_global[b];
        fk.heads.row(b) = (g * local_heads.row(b).transpose() + pose.root_translation).transpose();
    }
    return fk;
}

/// Forward kinematics followed by skinning with the ground-truth weights.
/// Written as rest plus blended displacement so the zero pose reproduces the
/// rest vertices bit for bit.
inline Points pose_vertices(const CharacterSample& character, const PoseSpec& pose) {
    const Skeleton& sk = character.gt_skeleton;
    check_pose(sk, pose);
    const int n = sk.joint_count();
    const Points& rest = character.rest.vertices;
    std::vector<Eigen::Matrix3d> rot(static_cast<std::size_t>(n));
    Points shift(n, 3);
    for (int b = 0; b < n; ++b) {
        const Bone& bone = sk.bones[static_cast<std::size_t>(b)];
        const Eigen::Matrix3d r = rotation_matrix(pose.rotations.row(b).transpose());
        if (bone.parent < 0) {
            rot[b] = r;
            shift.row(b).setZero();
        } else {
            const Bone& parent = sk.bones[static_cast<std::size_t>(bone.parent)];
            rot[b] = rot[bone.parent] * r;
            shift.row(b) = shift.row(bone.parent) +
                           ((rot[bone.parent] - Eigen::Matrix3d::Identity()) * (bone.head - parent.head)).transpose();
        }
    }
    const SkinningWeights& w = character.gt_skinning;
    Points out = rest;
    for (int b = 0; b < n; ++b) {
        const Eigen::Matrix3d dr = rot[b] - Eigen::Matrix3d::Identity();
        if (dr.isZero(0.0) && shift.row(b).isZero(0.0)) continue;
        const Bone& bone = sk.bones[static_cast<std::size_t>(b)];
        Points disp = (rest.rowwise() - bone.head.transpose()) * dr.transpose();
        disp.rowwise() += shift.row(b);
        out += (disp.array().colwise() * w.row(b).transpose().array()).matrix();
    }
    if (!pose.root_rotation.isZero(0.0)) out = (out * rotation_matrix(pose.root_rotation).transpose()).eval();
    if (!pose.root_translation.isZero(0.0)) out.rowwise() += pose.root_translation.transpose();
    return out;
}

inline TriMesh pose_character(const CharacterSample& character, const PoseSpec& pose) {
    return TriMesh{pose_vertices(character, pose), character.rest.faces};
}

/// Random bounded pose for a humanoid skeleton; bones are addressed by name so
/// skeletons with the same topology receive the same pose.
inline PoseSpec sample_pose(const Skeleton& skeleton, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    PoseSpec pose = PoseSpec::zero(skeleton.joint_count());
    for (int b = 0; b < skeleton.joint_count(); ++b) {
        const std::string& name = skeleton.bones[static_cast<std::size_t>(b)].name;
        Vec3 r = Vec3::Zero();
        const double x = u(rng), y = u(rng), z = u(rng);
        const double side = name.size() >= 2 && name.substr(name.size() - 2) == "_r" ? -1.0 : 1.0;
        if (name == "pelvis") {
            r = Vec3(0.1 * x, 0.1 * y, 0.1 * z);
        } else if (name == "spine") {
            r = Vec3(0.3 * x, 0.3 * y, 0.2 * z);
        } else if (name == "head") {
            r = Vec3(0.3 * x, 0.4 * y, 0.2 * z);
        } else if (name.rfind("upper_arm", 0) == 0) {
            r = Vec3(0.4 * x, 0.5 * y, side * (-0.4 + 0.8 * z));
        } else if (name.rfind("forearm", 0) == 0) {
            r = Vec3(0.0, side * (0.75 + 0.75 * y), 0.2 * z);
        } else if (name.rfind("thigh", 0) == 0) {
            r = Vec3(0.6 * x, 0.2 * y, side * 0.25 * z);
        } else if (name.rfind("shin", 0) == 0) {
            r = Vec3(0.6 + 0.6 * x, 0.0, 0.0);
        }
        pose.rotations.row(b) = r.transpose();
    }
    pose.root_rotation = Vec3(0.0, 0.3 * u(rng), 0.0);
    return pose;
}

struct DatasetConfig {
    int n_characters = 4;
    int n_poses = 20;
    std::uint64_t seed = 0;
    StyleParams style;
    double test_fraction = 0.2;
};

struct Dataset {
    DatasetConfig config;
    std::vector<std::uint64_t> character_seeds;
    std::vector<CharacterSample> characters;
    std::vector<PoseSpec> poses;
    std::vector<std::vector<Points>> posed;  // [character][pose]
    std::vector<int> train_poses;
    std::vector<int> test_poses;

    int character_count() const { return static_cast<int>(characters.size()); }
    int pose_count() const { return static_cast<int>(poses.size()); }
    TriMesh posed_mesh(int c, int p) const { return TriMesh{posed[c][p], characters[c].rest.faces}; }
};

/// FNV-1a over the split indices.
inline std::uint64_t split_hash(const std::vector<int>& train, const std::vector<int>& test) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](std::int64_t v) {
        for (int byte = 0; byte < 8; ++byte) {
            h ^= static_cast<std::uint64_t>((v >> (8 * byte)) & 0xff);
            h *= 1099511628211ull;
        }
    };
    for (int v : train) mix(v);
    mix(-1);
    for (int v : test) mix(v);
    return h;
}

inline Dataset make_dataset(const DatasetConfig& config) {
    if (config.n_characters < 1 || config.n_poses < 1) throw DomainError("dataset counts must be at least 1");
    if (!(config.test_fraction >= 0.0 && config.test_fraction < 1.0)) {
        throw DomainError("test fraction must lie in [0, 1)");
    }
    Dataset d;
    d.config = config;
    std::mt19937_64 master(config.seed);
    for (int c = 0; c < config.n_characters; ++c) d.character_seeds.push_back(master());
    const std::uint64_t pose_seed = master();
    const std::uint64_t split_seed = master();
    for (std::uint64_t s : d.character_seeds) d.characters.push_back(make_character(config.style, s));

    std::mt19937_64 pose_rng(pose_seed);
    for (int p = 0; p < config.n_poses; ++p) d.poses.push_back(sample_pose(d.characters.front().gt_skeleton, pose_rng));
    for (const CharacterSample& ch : d.characters) {
        std::vector<Points> frames;
        for (const PoseSpec& pose : d.poses) frames.push_back(pose_vertices(ch, pose));
        d.posed.push_back(std::move(frames));
    }

    std::vector<int> order(static_cast<std::size_t>(config.n_poses));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 split_rng(split_seed);
    for (int i = config.n_poses - 1; i > 0; --i) {
        std::uniform_int_distribution<int> pick(0, i);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(split_rng))]);
    }
    int n_test = static_cast<int>(std::floor(config.test_fraction * config.n_poses));
    if (config.test_fraction > 0.0 && n_test == 0 && config.n_poses >= 2) n_test = 1;
    d.test_poses.assign(order.begin(), order.begin() + n_test);
    d.train_poses.assign(order.begin() + n_test, order.end());
    std::sort(d.test_poses.begin(), d.test_poses.end());
    std::sort(d.train_poses.begin(), d.train_poses.end());
    return d;
}

inline Dataset make_dataset(int n_characters, int n_poses, std::uint64_t seed) {
    DatasetConfig cfg;
    cfg.n_characters = n_characters;
    cfg.n_poses = n_poses;
    cfg.seed = seed;
    return make_dataset(cfg);
}

namespace detail {

inline std::string join(const std::vector<int>& v) {
    std::ostringstream out;
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
    return out.str();
}

inline std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

inline std::map<std::string, std::string> read_key_values(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", number);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

}  // namespace detail

inline std::string character_file(int c) { return "rest_" + std::to_string(c) + ".obj"; }
inline std::string pose_file(int c, int p) { return "pose_" + std::to_string(c) + "_" + std::to_string(p) + ".obj"; }
inline std::string skinning_file(int c) { return "skinning_" + std::to_string(c) + ".txt"; }

inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (int c = 0; c < d.character_count(); ++c) {
        save_obj(d.characters[c].rest, dir / character_file(c));
        for (int p = 0; p < d.pose_count(); ++p) save_obj(d.posed_mesh(c, p), dir / pose_file(c, p));
        std::ofstream w(dir / skinning_file(c));
        write_weights(w, d.characters[c].gt_skinning);
        if (!w) throw IoError("cannot write " + (dir / skinning_file(c)).string());
    }
    std::ofstream m(dir / "manifest.txt");
    const StyleParams& s = d.config.style;
    m << "format=hmc-dataset 1\n";
    m << "seed=" << d.config.seed << "\n";
    m << "n_characters=" << d.config.n_characters << "\n";
    m << "n_poses=" << d.config.n_poses << "\n";
    m << "test_fraction=" << d.config.test_fraction << "\n";
    m << "arm_pairs=" << s.arm_pairs << "\n";
    m << "vertex_budget=" << s.vertex_budget << "\n";
    m << "jitter=" << s.jitter << "\n";
    for (int c = 0; c < d.character_count(); ++c) m << "character_seed_" << c << "=" << d.character_seeds[c] << "\n";
    m << "train=" << detail::join(d.train_poses) << "\n";
    m << "test=" << detail::join(d.test_poses) << "\n";
    m << "split_hash=" << split_hash(d.train_poses, d.test_poses) << "\n";
    if (!m) throw IoError("cannot write " + (dir / "manifest.txt").string());
}

/// Regenerates the dataset from the recorded seeds and checks it against the
/// stored meshes and splits.
inline Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.txt");
    if (!in) throw IoError("cannot open " + (dir / "manifest.txt").string());
    const auto kv = detail::read_key_values(in);
    auto get = [&](const std::string& key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError("manifest lacks " + key);
        return it->second;
    };
    if (get("format") != "hmc-dataset 1") throw ConfigError("unsupported dataset format");
    DatasetConfig cfg;
    cfg.seed = std::stoull(get("seed"));
    cfg.n_characters = std::stoi(get("n_characters"));
    cfg.n_poses = std::stoi(get("n_poses"));
    cfg.test_fraction = std::stod(get("test_fraction"));
    cfg.style.arm_pairs = std::stoi(get("arm_pairs"));
    cfg.style.vertex_budget = std::stoi(get("vertex_budget"));
    cfg.style.jitter = std::stod(get("jitter"));
    Dataset d = make_dataset(cfg);
    if (detail::split_ints(get("train")) != d.train_poses || detail::split_ints(get("test")) != d.test_poses) {
        throw ConfigError("manifest split does not match its seed");
    }
    for (int c = 0; c < d.character_count(); ++c) {
        const TriMesh rest = load_obj(dir / character_file(c));
        if (rest.vertex_count() != d.characters[c].rest.vertex_count() ||
            !rest.vertices.isApprox(d.characters[c].rest.vertices, 1e-12)) {
            throw ConfigError("stored rest mesh " + std::to_string(c) + " does not match its seed");
        }
    }
    return d;
}

}  // namespace hmc

#endif  // HMC_SYNTH_HPP

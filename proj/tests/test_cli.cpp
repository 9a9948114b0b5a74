#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hmc/obj_io.hpp"
#include "hmc/primitives.hpp"
#include "hmc/runtime.hpp"
#include "hmc/synth.hpp"

namespace fs = std::filesystem;
using namespace hmc;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "hmc_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

RunResult run(const std::string& args) {
    static int counter = 0;
    const fs::path log = work_dir() / ("out_" + std::to_string(counter++) + ".txt");
    const std::string cmd = std::string(HMC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_mesh(const TriMesh& m, const std::string& name) {
    const fs::path p = work_dir() / name;
    save_obj(m, p);
    return p;
}

/// Two small characters, five poses.
const fs::path& dataset_dir() {
    static const fs::path dir = [] {
        const fs::path d = work_dir() / "data";
        const RunResult r = run("synth --out " + d.string() + " --characters 2 --poses 5 --vertices 150 --seed 3");
        if (r.code != 0) throw std::runtime_error(r.out);
        return d;
    }();
    return dir;
}

std::string tiny_flags() { return "--parts 6 --embed-dim 16 --epochs 3 --lr 0.01 --quiet"; }

double sample_pmd(const std::string& csv, const std::string& protocol, int s, int t, int p, int level) {
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    const std::string prefix = protocol + "," + std::to_string(s) + "," + std::to_string(t) + "," + std::to_string(p) +
                               "," + std::to_string(level) + ",";
    while (std::getline(in, line)) {
        if (line.rfind(prefix, 0) == 0) return std::stod(line.substr(prefix.size()));
    }
    throw std::runtime_error("no sample " + prefix);
}

}  // namespace

TEST(Cli, HelpMatchesGolden) {
    for (const std::string sub : {"", "coarsen", "roundtrip", "synth", "train", "retarget", "eval"}) {
        const RunResult r = run(sub + " --help");
        EXPECT_EQ(r.code, 0) << sub;
        const fs::path golden = fs::path(HMC_GOLDEN_DIR) / ("help_" + (sub.empty() ? std::string("main") : sub) + ".txt");
        if (std::getenv("HMC_UPDATE_GOLDEN") != nullptr) {
            std::ofstream(golden) << r.out;
            continue;
        }
        ASSERT_TRUE(fs::exists(golden)) << golden;
        EXPECT_EQ(r.out, read_file(golden)) << sub;
    }
}

TEST(Cli, HelpListsDefaults) {
    const RunResult r = run("train --help");
    for (const char* s : {"--lr", "--epochs", "--ratio", "--parts", "--seed", "--config", "--variant", "0.003", "400"}) {
        EXPECT_NE(r.out.find(s), std::string::npos) << s;
    }
}

TEST(Cli, UsageErrorsExitTwo) {
    const fs::path sphere = write_mesh(icosphere(2), "sphere.obj");
    EXPECT_EQ(run("coarsen --in " + sphere.string() + " --out " + (work_dir() / "x").string() + " --ratio 1.5").code, 2);
    EXPECT_EQ(run("coarsen --in " + sphere.string() + " --out x --bogus 1").code, 2);
    EXPECT_EQ(run("coarsen --in /nonexistent.obj --out x").code, 2);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("eval --data " + dataset_dir().string() + " --model identity --protocol nope").code, 2);
    EXPECT_EQ(run("train --data " + dataset_dir().string() + " --out x --lr abc").code, 2);
    EXPECT_EQ(run("train --data " + (work_dir() / "missing").string() + " --out x").code, 2);
}

TEST(Cli, InfeasibleTargetExitsThree) {
    const fs::path sphere = write_mesh(icosphere(1), "small_sphere.obj");
    EXPECT_EQ(run("coarsen --in " + sphere.string() + " --out " + (work_dir() / "deep").string() + " --levels 30").code, 3);
}

TEST(Cli, CoarsenWritesLevelsWithExpectedCounts) {
    const TriMesh mesh = icosphere(3);
    const fs::path in = write_mesh(mesh, "sphere3.obj");
    const fs::path out = work_dir() / "pyr";
    const RunResult r = run("coarsen --in " + in.string() + " --out " + out.string() + " --ratio 0.6 --levels 3");
    ASSERT_EQ(r.code, 0) << r.out;
    long expected = static_cast<long>(mesh.vertex_count());
    for (int k = 0; k <= 3; ++k) {
        const TriMesh level = load_obj(out / ("level_" + std::to_string(k) + ".obj"));
        EXPECT_EQ(level.vertex_count(), expected) << k;
        EXPECT_NE(r.out.find("level " + std::to_string(k) + ": " + std::to_string(expected) + " vertices"),
                  std::string::npos);
        expected = std::max(4L, std::lround(0.6 * static_cast<double>(expected)));
    }
    for (int k = 0; k < 3; ++k) {
        EXPECT_TRUE(fs::exists(out / ("down_" + std::to_string(k) + ".txt")));
        EXPECT_TRUE(fs::exists(out / ("up_" + std::to_string(k) + ".txt")));
    }
}

TEST(Cli, ZeroLevelsCopiesInput) {
    const TriMesh mesh = icosphere(2);
    const fs::path in = write_mesh(mesh, "copy_in.obj");
    const fs::path out = work_dir() / "copy";
    ASSERT_EQ(run("coarsen --in " + in.string() + " --out " + out.string() + " --levels 0").code, 0);
    const TriMesh back = load_obj(out / "level_0.obj");
    EXPECT_EQ(back.vertices, load_obj(in).vertices);
    EXPECT_EQ(back.faces, mesh.faces);
    EXPECT_FALSE(fs::exists(out / "level_1.obj"));
}

TEST(Cli, RoundtripErrors) {
    auto mean_error = [](const std::string& out) {
        const auto pos = out.find("mean relative error ");
        EXPECT_NE(pos, std::string::npos) << out;
        return std::stod(out.substr(pos + 20));
    };
    const fs::path sphere = write_mesh(icosphere(3), "rt_sphere.obj");
    const RunResult zero = run("roundtrip --in " + sphere.string() + " --levels 0");
    ASSERT_EQ(zero.code, 0);
    EXPECT_EQ(mean_error(zero.out), 0.0);
    const RunResult one = run("roundtrip --in " + sphere.string() + " --ratio 0.6 --levels 1");
    ASSERT_EQ(one.code, 0);
    EXPECT_LE(mean_error(one.out), 0.02);
    const fs::path plane = write_mesh(plane_grid(12, 12), "plane.obj");
    const fs::path lifted = work_dir() / "plane_lifted.obj";
    const RunResult flat = run("roundtrip --in " + plane.string() + " --ratio 0.6 --levels 2 --out " + lifted.string());
    ASSERT_EQ(flat.code, 0) << flat.out;
    EXPECT_GE(mean_error(flat.out), 0.0);
    EXPECT_LE(load_obj(lifted).vertices.col(2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Cli, TrainIsDeterministic) {
    const fs::path a = work_dir() / "run_a", b = work_dir() / "run_b";
    const std::string common = "train --data " + dataset_dir().string() + " " + tiny_flags() + " --seed 7 --out ";
    ASSERT_EQ(run(common + a.string()).code, 0);
    ASSERT_EQ(run(common + b.string()).code, 0);
    EXPECT_EQ(read_file(a / "loss.csv"), read_file(b / "loss.csv"));
    EXPECT_EQ(read_file(a / "ckpt.txt"), read_file(b / "ckpt.txt"));
    EXPECT_FALSE(read_file(a / "loss.csv").empty());
}

TEST(Cli, PrecedenceFlagsOverConfigOverDefaults) {
    const fs::path cfg = work_dir() / "prec.txt";
    std::ofstream(cfg) << "epochs=2\nlr=0.02\nparts=6\nembed_dim=16\n";
    const fs::path run_dir = work_dir() / "run_prec";
    ASSERT_EQ(run("train --data " + dataset_dir().string() + " --config " + cfg.string() +
                  " --lr 0.005 --quiet --out " + run_dir.string())
                  .code,
              0);
    const TrainConfig c = load_config(run_dir / "config.txt");
    EXPECT_EQ(c.epochs, 2);
    EXPECT_EQ(c.learning_rate, 0.005);
    EXPECT_EQ(c.parts, 6);
    EXPECT_EQ(c.ratio, TrainConfig{}.ratio);
}

TEST(Cli, NanLossExitsFive) {
    const RunResult r = run("train --data " + dataset_dir().string() + " " + tiny_flags() + " --w-rigid nan --out " +
                            (work_dir() / "run_nan").string());
    EXPECT_EQ(r.code, 5) << r.out;
}

TEST(Cli, CheckpointMismatchExitsFour) {
    const fs::path run_dir = work_dir() / "run_ckpt";
    ASSERT_EQ(run("train --data " + dataset_dir().string() + " " + tiny_flags() + " --out " + run_dir.string()).code, 0);
    TrainConfig c = load_config(run_dir / "config.txt");
    c.parts = 7;
    std::ofstream cfg(run_dir / "config.txt");
    write_config(cfg, c);
    cfg.close();
    EXPECT_EQ(run("eval --data " + dataset_dir().string() + " --run " + run_dir.string()).code, 4);
}

TEST(Cli, IdentityModelHasZeroCycle) {
    const fs::path out = work_dir() / "eval_identity";
    const RunResult r =
        run("eval --data " + dataset_dir().string() + " --model identity --protocol cyc --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.out;
    std::istringstream csv(read_file(out / "report.csv"));
    std::string line;
    std::getline(csv, line);
    int rows = 0;
    while (std::getline(csv, line)) {
        EXPECT_EQ(line.substr(0, 4), "cyc,");
        EXPECT_EQ(std::stod(line.substr(line.rfind(',') + 1)), 0.0);
        ++rows;
    }
    EXPECT_GT(rows, 0);
}

TEST(Cli, RetargetToSelfMatchesRecSample) {
    const fs::path run_dir = work_dir() / "run_self";
    ASSERT_EQ(run("train --data " + dataset_dir().string() + " " + tiny_flags() + " --out " + run_dir.string()).code, 0);
    const fs::path eval_dir = work_dir() / "eval_self";
    ASSERT_EQ(run("eval --data " + dataset_dir().string() + " --run " + run_dir.string() + " --protocol rec --out " +
                  eval_dir.string())
                  .code,
              0);
    const Dataset ds = load_dataset(dataset_dir());
    const int p = ds.test_poses.front();
    const fs::path rest = dataset_dir() / character_file(1);
    const fs::path pose = dataset_dir() / pose_file(1, p);
    const fs::path out = work_dir() / "ret_self";
    const RunResult r = run("retarget --run " + run_dir.string() + " --source-rest " + rest.string() +
                            " --source-pose " + pose.string() + " --target-rest " + rest.string() + " --out " +
                            out.string());
    ASSERT_EQ(r.code, 0) << r.out;
    const double got = pmd(load_obj(out / "retargeted_0.obj").vertices, load_obj(pose).vertices);
    const double expected = sample_pmd(read_file(eval_dir / "samples.csv"), "rec", 1, 1, p, 0);
    EXPECT_GT(expected, 0.0);
    EXPECT_NEAR(got, expected, 1e-6);
}

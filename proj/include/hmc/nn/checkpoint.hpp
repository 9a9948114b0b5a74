#ifndef HMC_NN_CHECKPOINT_HPP
#define HMC_NN_CHECKPOINT_HPP

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hmc/error.hpp"
#include "hmc/nn/optim.hpp"

namespace hmc::nn {

inline constexpr const char* kCheckpointMagic = "hmc-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// Layout:
//   hmc-checkpoint 1
//   <name> <rows> <cols>
//   <rows * cols values, row-major, 17 significant digits>
inline void write_checkpoint(std::ostream& out, const std::vector<ParamRef>& params) {
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << std::setprecision(17);
    for (const auto& p : params) {
        const Matrix& m = *p.value;
        out << p.name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            out << m.data()[i] << (i + 1 == m.size() ? '\n' : ' ');
        }
        if (m.size() == 0) out << '\n';
    }
}

/// Loads values into `params`; names, order and shapes must match exactly.
inline void read_checkpoint(std::istream& in, const std::vector<ParamRef>& params) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kCheckpointMagic) throw CheckpointError("not a checkpoint file");
    if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    for (const auto& p : params) {
        std::string name;
        long rows = 0, cols = 0;
        if (!(in >> name >> rows >> cols)) throw CheckpointError("checkpoint ends before parameter " + p.name);
        if (name != p.name) throw CheckpointError("expected parameter " + p.name + ", found " + name);
        if (rows != p.value->rows() || cols != p.value->cols()) {
            throw CheckpointError("shape mismatch for " + name + ": file " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + ", model " + std::to_string(p.value->rows()) + "x" +
                                  std::to_string(p.value->cols()));
        }
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            std::string tok;
            if (!(in >> tok)) throw CheckpointError("truncated values for " + name);
            m.data()[i] = std::strtod(tok.c_str(), nullptr);
        }
        *p.value = std::move(m);
    }
    std::string extra;
    if (in >> extra) throw CheckpointError("checkpoint has extra parameter " + extra);
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<ParamRef>& params) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    write_checkpoint(out, params);
    if (!out) throw IoError("checkpoint write failed for '" + path.string() + "'");
}

inline void load_checkpoint(const std::filesystem::path& path, const std::vector<ParamRef>& params) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
    read_checkpoint(in, params);
}

}  // namespace hmc::nn

#endif  // HMC_NN_CHECKPOINT_HPP

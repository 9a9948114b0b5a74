#ifndef HMC_NN_OPS_HPP
#define HMC_NN_OPS_HPP

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hmc/error.hpp"
#include "hmc/mesh.hpp"
#include "hmc/nn/tape.hpp"

namespace hmc::nn {

namespace detail {

inline void require(bool ok, const char* what) {
    if (!ok) throw ShapeError(what);
}

inline Tape& tape_of(const Var& v) {
    if (!v.valid()) throw MisuseError("use of an unrecorded value");
    return *v.tape();
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
    detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    Tape& t = detail::tape_of(a);
    return t.record(
        a.value() * b.value(),
        [&t, a, b](const Matrix& g) {
            if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
            if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
        },
        a, b);
}

/// Constant sparse matrix times a recorded value.
inline Var spmm(const SparseMatrix& s, const Var& x) {
    detail::require(s.cols() == x.rows(), "spmm: dimensions differ");
    Tape& t = detail::tape_of(x);
    return t.record(
        Matrix(s * x.value()), [&t, s, x](const Matrix& g) { t.accumulate(x, Matrix(s.transpose() * g)); }, x);
}

inline Var add(const Var& a, const Var& b) {
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shapes differ");
    Tape& t = detail::tape_of(a);
    return t.record(
        a.value() + b.value(),
        [&t, a, b](const Matrix& g) {
            t.accumulate(a, g);
            t.accumulate(b, g);
        },
        a, b);
}

inline Var sub(const Var& a, const Var& b) {
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shapes differ");
    Tape& t = detail::tape_of(a);
    return t.record(
        a.value() - b.value(),
        [&t, a, b](const Matrix& g) {
            t.accumulate(a, g);
            t.accumulate(b, -g);
        },
        a, b);
}

inline Var scale(const Var& a, double s) {
    Tape& t = detail::tape_of(a);
    return t.record(
        a.value() * s, [&t, a, s](const Matrix& g) { t.accumulate(a, g * s); }, a);
}

/// a + row broadcast of the 1 x n bias.
inline Var add_row(const Var& a, const Var& bias) {
    detail::require(bias.rows() == 1 && bias.cols() == a.cols(), "add_row: bias shape");
    Tape& t = detail::tape_of(a);
    Matrix out = a.value();
    out.rowwise() += bias.value().row(0);
    return t.record(
        std::move(out),
        [&t, a, bias](const Matrix& g) {
            t.accumulate(a, g);
            if (t.requires_grad(bias)) t.accumulate(bias, Matrix(g.colwise().sum()));
        },
        a, bias);
}

inline Var elu(const Var& a) {
    Tape& t = detail::tape_of(a);
    Matrix out = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
    return t.record(
        std::move(out),
        [&t, a](const Matrix& g) {
            const Matrix& x = a.value();
            t.accumulate(a, Matrix(g.array() * x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); }).array()));
        },
        a);
}

inline Var transpose(const Var& a) {
    Tape& t = detail::tape_of(a);
    return t.record(
        Matrix(a.value().transpose()), [&t, a](const Matrix& g) { t.accumulate(a, Matrix(g.transpose())); }, a);
}

/// Column-wise softmax; every column of the result is a distribution.
inline Matrix softmax_columns(const Matrix& logits) {
    Matrix out = logits;
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        const double shift = out.col(c).maxCoeff();
        out.col(c) = (out.col(c).array() - shift).exp();
        out.col(c) /= out.col(c).sum();
    }
    return out;
}

inline Var softmax_columns(const Var& logits) {
    Tape& t = detail::tape_of(logits);
    Matrix y = softmax_columns(logits.value());
    Matrix out = y;
    return t.record(
        std::move(out),
        [&t, logits, y = std::move(y)](const Matrix& g) {
            const Eigen::RowVectorXd dots = (g.array() * y.array()).colwise().sum();
            t.accumulate(logits, Matrix(y.array() * (g.rowwise() - dots).array()));
        },
        logits);
}

inline Var sum(const Var& a) {
    Tape& t = detail::tape_of(a);
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return t.record(
        std::move(out),
        [&t, a](const Matrix& g) { t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0))); }, a);
}

/// Mean absolute entry, with sign(0) = 0 as the subgradient.
inline Var mean_abs(const Var& a) {
    Tape& t = detail::tape_of(a);
    const double n = static_cast<double>(a.value().size());
    Matrix out(1, 1);
    out(0, 0) = a.value().cwiseAbs().sum() / n;
    return t.record(
        std::move(out),
        [&t, a, n](const Matrix& g) {
            Matrix s = a.value().unaryExpr([](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
            t.accumulate(a, Matrix(s * (g(0, 0) / n)));
        },
        a);
}

inline Var concat_rows(const std::vector<Var>& parts) {
    detail::require(!parts.empty(), "concat_rows: no inputs");
    Tape& t = detail::tape_of(parts.front());
    Eigen::Index rows = 0;
    const Eigen::Index cols = parts.front().cols();
    bool needs = false;
    for (const Var& p : parts) {
        detail::require(p.cols() == cols, "concat_rows: column counts differ");
        rows += p.rows();
        needs = needs || t.requires_grad(p);
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    auto backprop = [&t, parts](const Matrix& g) {
        Eigen::Index offset = 0;
        for (const Var& p : parts) {
            if (t.requires_grad(p)) t.accumulate(p, Matrix(g.middleRows(offset, p.rows())));
            offset += p.rows();
        }
    };
    if (!needs) return t.constant(std::move(out));
    // Route through a dummy requiring input so record() keeps the closure.
    for (const Var& p : parts) {
        if (t.requires_grad(p)) return t.record(std::move(out), backprop, p);
    }
    return t.constant(std::move(out));
}

inline Var concat_cols(const Var& a, const Var& b) {
    detail::require(a.rows() == b.rows(), "concat_cols: row counts differ");
    Tape& t = detail::tape_of(a);
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    return t.record(
        std::move(out),
        [&t, a, b](const Matrix& g) {
            t.accumulate(a, Matrix(g.leftCols(a.cols())));
            t.accumulate(b, Matrix(g.rightCols(b.cols())));
        },
        a, b);
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    detail::require(start >= 0 && start + count <= a.cols(), "slice_cols: range");
    Tape& t = detail::tape_of(a);
    return t.record(
        Matrix(a.value().middleCols(start, count)),
        [&t, a, start, count](const Matrix& g) {
            Matrix full = Matrix::Zero(a.rows(), a.cols());
            full.middleCols(start, count) = g;
            t.accumulate(a, full);
        },
        a);
}

/// Subtracts the column means (the centroid, for point sets).
inline Var center_rows(const Var& a) {
    Tape& t = detail::tape_of(a);
    Matrix out = a.value().rowwise() - a.value().colwise().mean();
    return t.record(
        std::move(out), [&t, a](const Matrix& g) { t.accumulate(a, Matrix(g.rowwise() - g.colwise().mean())); }, a);
}

/// Divides every column by its sum.
inline Var normalize_columns(const Var& a) {
    Tape& t = detail::tape_of(a);
    const Eigen::RowVectorXd sums = a.value().colwise().sum();
    Matrix out = a.value();
    out.array().rowwise() /= sums.array();
    Matrix y = out;
    return t.record(
        std::move(out),
        [&t, a, sums, y = std::move(y)](const Matrix& g) {
            const Eigen::RowVectorXd dots = (g.array() * y.array()).colwise().sum();
            Matrix gin = g.rowwise() - dots;
            gin.array().rowwise() /= sums.array();
            t.accumulate(a, gin);
        },
        a);
}

/// Divides every row by its sum.
inline Var normalize_rows(const Var& a) {
    Tape& t = detail::tape_of(a);
    const Eigen::VectorXd sums = a.value().rowwise().sum();
    Matrix out = a.value();
    out.array().colwise() /= sums.array();
    Matrix y = out;
    return t.record(
        std::move(out),
        [&t, a, sums, y = std::move(y)](const Matrix& g) {
            const Eigen::VectorXd dots = (g.array() * y.array()).rowwise().sum();
            Matrix gin = g.colwise() - dots;
            gin.array().colwise() /= sums.array();
            t.accumulate(a, gin);
        },
        a);
}

/// Sum over rows of KL(p_r || max(q_r, floor)), with 0 log 0 = 0.
inline Var kl_rows(const Var& p, const Var& q, double floor = 1e-12) {
    detail::require(p.rows() == q.rows() && p.cols() == q.cols(), "kl_rows: shapes differ");
    Tape& t = detail::tape_of(p);
    const Matrix& pv = p.value();
    const Matrix& qv = q.value();
    double total = 0.0;
    for (Eigen::Index r = 0; r < pv.rows(); ++r) {
        for (Eigen::Index c = 0; c < pv.cols(); ++c) {
            const double pi = pv(r, c);
            if (pi > 0.0) total += pi * std::log(pi / std::max(qv(r, c), floor));
        }
    }
    Matrix out(1, 1);
    out(0, 0) = total;
    return t.record(
        std::move(out),
        [&t, p, q, floor](const Matrix& g) {
            const Matrix& pv = p.value();
            const Matrix& qv = q.value();
            const double s = g(0, 0);
            if (t.requires_grad(p)) {
                Matrix gp = Matrix::Zero(pv.rows(), pv.cols());
                for (Eigen::Index i = 0; i < pv.size(); ++i) {
                    const double pi = pv.data()[i];
                    if (pi > 0.0) gp.data()[i] = s * (std::log(pi / std::max(qv.data()[i], floor)) + 1.0);
                }
                t.accumulate(p, gp);
            }
            if (t.requires_grad(q)) {
                Matrix gq = Matrix::Zero(qv.rows(), qv.cols());
                for (Eigen::Index i = 0; i < qv.size(); ++i) {
                    if (qv.data()[i] > floor) gq.data()[i] = -s * pv.data()[i] / qv.data()[i];
                }
                t.accumulate(q, gq);
            }
        },
        p, q);
}

/// Rotation vectors (J x 3) to row-major rotation matrices (J x 9).
inline Var rodrigues(const Var& r) {
    detail::require(r.cols() == 3, "rodrigues: expects J x 3");
    Tape& t = detail::tape_of(r);
    const Eigen::Index n = r.rows();

    struct Coeffs {
        double a, b, c, da, db;  // da, db: derivative over theta, divided by theta
    };
    auto coeffs = [](double theta) {
        const double th2 = theta * theta;
        Coeffs k{};
        if (theta < 1e-4) {
            k.a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0;
            k.b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0;
            k.c = std::cos(theta);
            k.da = -1.0 / 3.0 + th2 / 30.0;
            k.db = -1.0 / 12.0 + th2 / 180.0;
        } else {
            const double s = std::sin(theta);
            const double c = std::cos(theta);
            k.a = s / theta;
            k.b = (1.0 - c) / th2;
            k.c = c;
            k.da = (theta * c - s) / (th2 * theta);
            k.db = (theta * s - 2.0 * (1.0 - c)) / (th2 * th2);
        }
        return k;
    };
    auto skew = [](const Vec3& v) {
        Eigen::Matrix3d m;
        m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
        return m;
    };

    Matrix out(n, 9);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Vec3 v = r.value().row(j).transpose();
        const Coeffs k = coeffs(v.norm());
        const Eigen::Matrix3d rot = k.c * Eigen::Matrix3d::Identity() + k.a * skew(v) + k.b * v * v.transpose();
        for (int e = 0; e < 9; ++e) out(j, e) = rot(e / 3, e % 3);
    }
    return t.record(
        std::move(out),
        [&t, r, coeffs, skew](const Matrix& g) {
            Matrix gr(r.rows(), 3);
            for (Eigen::Index j = 0; j < r.rows(); ++j) {
                const Vec3 v = r.value().row(j).transpose();
                const Coeffs k = coeffs(v.norm());
                Eigen::Matrix3d gm;
                for (int e = 0; e < 9; ++e) gm(e / 3, e % 3) = g(j, e);
                const Eigen::Matrix3d sk = skew(v);
                const Eigen::Matrix3d vv = v * v.transpose();
                for (int d = 0; d < 3; ++d) {
                    const Vec3 ed = Vec3::Unit(d);
                    // dtheta/dv_d = v_d / theta; c' = -sin = -a * theta.
                    const Eigen::Matrix3d dr = (-k.a * v(d)) * Eigen::Matrix3d::Identity() + (k.da * v(d)) * sk +
                                               k.a * skew(ed) + (k.db * v(d)) * vv +
                                               k.b * (ed * v.transpose() + v * ed.transpose());
                    gr(j, d) = (gm.array() * dr.array()).sum();
                }
            }
            t.accumulate(r, gr);
        },
        r);
}

/// Weighted centroid of constant rest points per row of W (J x V).
inline Var joint_positions(const Var& w, const Points& rest) {
    detail::require(w.cols() == rest.rows(), "joint_positions: weights/vertices mismatch");
    Tape& t = detail::tape_of(w);
    const Eigen::VectorXd mass = w.value().rowwise().sum();
    for (Eigen::Index j = 0; j < mass.size(); ++j) {
        if (!(mass(j) > 1e-9)) throw DomainError("part " + std::to_string(j) + " has no skinning weight");
    }
    Matrix out = w.value() * rest;
    out.array().colwise() /= mass.array();
    Matrix centroids = out;
    return t.record(
        std::move(out),
        [&t, w, rest, mass, centroids = std::move(centroids)](const Matrix& g) {
            // d out_j / d W_ji = (rest_i - out_j) / m_j
            Matrix gs = g;
            gs.array().colwise() /= mass.array();
            Matrix gw = gs * rest.transpose();
            const Eigen::VectorXd bias = (gs.array() * centroids.array()).rowwise().sum();
            gw.colwise() -= bias;
            t.accumulate(w, gw);
        },
        w);
}

/// Linear blend skinning about rest pivots:
///   out_i = sum_j W_ji (R_j (rest_i - pivot_j) + position_j)
/// rotations are J x 9 row-major matrices (see rodrigues).
inline Var lbs(const Points& rest, const Var& w, const Var& pivots, const Var& positions, const Var& rotations) {
    const Eigen::Index parts = w.rows();
    detail::require(w.cols() == rest.rows(), "lbs: weights/vertices mismatch");
    detail::require(pivots.rows() == parts && pivots.cols() == 3, "lbs: pivots shape");
    detail::require(positions.rows() == parts && positions.cols() == 3, "lbs: positions shape");
    detail::require(rotations.rows() == parts && rotations.cols() == 9, "lbs: rotations shape");
    Tape& t = detail::tape_of(w);

    // out = rows of (W^T R9) contracted with rest, plus W^T (position - R pivot).
    const Matrix& r9 = rotations.value();
    const Matrix& piv = pivots.value();
    Matrix shift = positions.value();
    for (Eigen::Index j = 0; j < parts; ++j) {
        for (int a = 0; a < 3; ++a) {
            shift(j, a) -= r9(j, 3 * a) * piv(j, 0) + r9(j, 3 * a + 1) * piv(j, 1) + r9(j, 3 * a + 2) * piv(j, 2);
        }
    }
    const Matrix& wv = w.value();
    const Matrix blended = wv.transpose() * r9;
    Matrix out = wv.transpose() * shift;
    for (Eigen::Index i = 0; i < rest.rows(); ++i) {
        for (int a = 0; a < 3; ++a) {
            out(i, a) += blended(i, 3 * a) * rest(i, 0) + blended(i, 3 * a + 1) * rest(i, 1) +
                         blended(i, 3 * a + 2) * rest(i, 2);
        }
    }
    return t.record(
        std::move(out),
        [&t, rest, w, pivots, positions, rotations, shift = std::move(shift)](const Matrix& g) {
            const Matrix& wv = w.value();
            const Matrix& r9 = rotations.value();
            const Matrix& piv = pivots.value();
            Matrix outer(rest.rows(), 9);
            for (Eigen::Index i = 0; i < rest.rows(); ++i) {
                for (int a = 0; a < 3; ++a) {
                    for (int b = 0; b < 3; ++b) outer(i, 3 * a + b) = g(i, a) * rest(i, b);
                }
            }
            const Matrix gshift = wv * g;
            Matrix grot = wv * outer;
            Matrix gpiv(piv.rows(), 3);
            for (Eigen::Index j = 0; j < piv.rows(); ++j) {
                for (int a = 0; a < 3; ++a) {
                    for (int b = 0; b < 3; ++b) grot(j, 3 * a + b) -= gshift(j, a) * piv(j, b);
                }
                for (int b = 0; b < 3; ++b) {
                    gpiv(j, b) = -(r9(j, b) * gshift(j, 0) + r9(j, 3 + b) * gshift(j, 1) + r9(j, 6 + b) * gshift(j, 2));
                }
            }
            if (t.requires_grad(w)) {
                t.accumulate(w, Matrix(r9 * outer.transpose() + shift * g.transpose()));
            }
            t.accumulate(pivots, gpiv);
            t.accumulate(positions, gshift);
            t.accumulate(rotations, grot);
        },
        w, pivots, positions, rotations);
}

/// Mean over pairs of | |x_a - x_b| - |r_a - r_b| | for constant rest r.
inline Var edge_length_deviation(const Var& x, const Points& rest, const std::vector<std::pair<int, int>>& pairs) {
    detail::require(x.rows() == rest.rows() && x.cols() == 3, "edge_length_deviation: shapes");
    Tape& t = detail::tape_of(x);
    const double n = pairs.empty() ? 1.0 : static_cast<double>(pairs.size());
    double total = 0.0;
    for (auto [a, b] : pairs) {
        total += std::abs((x.value().row(a) - x.value().row(b)).norm() - (rest.row(a) - rest.row(b)).norm());
    }
    Matrix out(1, 1);
    out(0, 0) = total / n;
    return t.record(
        std::move(out),
        [&t, x, rest, pairs, n](const Matrix& g) {
            Matrix gx = Matrix::Zero(x.rows(), 3);
            const double s = g(0, 0) / n;
            for (auto [a, b] : pairs) {
                const Eigen::RowVector3d d = x.value().row(a) - x.value().row(b);
                const double len = d.norm();
                const double dev = len - (rest.row(a) - rest.row(b)).norm();
                if (dev == 0.0 || len == 0.0) continue;
                const Eigen::RowVector3d step = (dev > 0.0 ? s : -s) * d / len;
                gx.row(a) += step;
                gx.row(b) -= step;
            }
            t.accumulate(x, gx);
        },
        x);
}

}  // namespace hmc::nn

#endif  // HMC_NN_OPS_HPP

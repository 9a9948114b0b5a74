#ifndef HMC_NN_GRADCHECK_HPP
#define HMC_NN_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hmc/mesh.hpp"
#include "hmc/nn/ops.hpp"
#include "hmc/nn/tape.hpp"

namespace hmc::nn {

struct GradCheckResult {
    double max_abs_error = 0.0;
    double relative_error = 0.0;  // max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf)
    Matrix analytic;
    Matrix numeric;
};

/// Scalar function of one input, recorded on the supplied tape.
using ScalarFn = std::function<Var(Tape&, const Var&)>;

/// Compares reverse-mode gradients against central differences with step
/// `h` on every entry of `x`.
inline GradCheckResult gradient_check(const ScalarFn& f, const Matrix& x, double h) {
    GradCheckResult r;
    {
        Tape tape;
        const Var in = tape.variable(x);
        const Var out = f(tape, in);
        tape.backward(out);
        r.analytic = tape.grad(in);
    }
    auto eval = [&](const Matrix& at) {
        Tape tape;
        return f(tape, tape.constant(at)).value()(0, 0);
    };
    r.numeric.resize(x.rows(), x.cols());
    Matrix probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = probe.data()[i];
        probe.data()[i] = keep + h;
        const double up = eval(probe);
        probe.data()[i] = keep - h;
        const double down = eval(probe);
        probe.data()[i] = keep;
        r.numeric.data()[i] = (up - down) / (2.0 * h);
    }
    r.max_abs_error = (r.analytic - r.numeric).cwiseAbs().maxCoeff();
    const double scale = std::max({r.analytic.cwiseAbs().maxCoeff(), r.numeric.cwiseAbs().maxCoeff(), 1e-300});
    r.relative_error = r.max_abs_error / scale;
    return r;
}

}  // namespace hmc::nn

#endif  // HMC_NN_GRADCHECK_HPP

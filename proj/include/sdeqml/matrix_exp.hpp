#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "sdeqml/errors.hpp"

namespace sdeqml {
namespace detail {

// (p,p) Pade numerator/denominator split exp(A) ~ (V+U)(V-U)^{-1}.
inline void exp_pade3(const Eigen::MatrixXd& a, Eigen::MatrixXd& u, Eigen::MatrixXd& v) {
    const double b[] = {120.0, 60.0, 12.0, 1.0};
    const Eigen::MatrixXd a2 = a * a;
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    u = a * (b[3] * a2 + b[1] * id);
    v = b[2] * a2 + b[0] * id;
}

inline void exp_pade5(const Eigen::MatrixXd& a, Eigen::MatrixXd& u, Eigen::MatrixXd& v) {
    const double b[] = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
    const Eigen::MatrixXd a2 = a * a;
    const Eigen::MatrixXd a4 = a2 * a2;
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    u = a * (b[5] * a4 + b[3] * a2 + b[1] * id);
    v = b[4] * a4 + b[2] * a2 + b[0] * id;
}

inline void exp_pade7(const Eigen::MatrixXd& a, Eigen::MatrixXd& u, Eigen::MatrixXd& v) {
    const double b[] = {17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0};
    const Eigen::MatrixXd a2 = a * a;
    const Eigen::MatrixXd a4 = a2 * a2;
    const Eigen::MatrixXd a6 = a4 * a2;
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    u = a * (b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
    v = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
}

inline void exp_pade9(const Eigen::MatrixXd& a, Eigen::MatrixXd& u, Eigen::MatrixXd& v) {
    const double b[] = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
                        2162160.0,     110880.0,     3960.0,       90.0,        1.0};
    const Eigen::MatrixXd a2 = a * a;
    const Eigen::MatrixXd a4 = a2 * a2;
    const Eigen::MatrixXd a6 = a4 * a2;
    const Eigen::MatrixXd a8 = a6 * a2;
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    u = a * (b[9] * a8 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
    v = b[8] * a8 + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
}

inline void exp_pade13(const Eigen::MatrixXd& a, Eigen::MatrixXd& u, Eigen::MatrixXd& v) {
    const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                        1187353796428800.0,  129060195264000.0,   10559470521600.0,
                        670442572800.0,      33522128640.0,       1323241920.0,
                        40840800.0,          960960.0,            16380.0,
                        182.0,               1.0};
    const Eigen::MatrixXd a2 = a * a;
    const Eigen::MatrixXd a4 = a2 * a2;
    const Eigen::MatrixXd a6 = a4 * a2;
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    Eigen::MatrixXd w = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
    u = a * (w + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
    v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2);
    v += b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
}

}  // namespace detail

/**
 * Dense matrix exponential by scaling-and-squaring with Pade approximants of
 * order 3/5/7/9/13, switched on the 1-norm (the classical double-precision
 * thresholds). Throws NumericalError when the result overflows.
 */
inline Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw DomainError("matrix_exp: matrix must be square");
    if (!m.allFinite()) throw NumericalError("matrix_exp: input has non-finite entries");

    const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
    Eigen::MatrixXd u, v;
    int squarings = 0;

    if (norm1 < 1.495585217958292e-2) {
        detail::exp_pade3(m, u, v);
    } else if (norm1 < 2.539398330063230e-1) {
        detail::exp_pade5(m, u, v);
    } else if (norm1 < 9.504178996162932e-1) {
        detail::exp_pade7(m, u, v);
    } else if (norm1 < 2.097847961257068e0) {
        detail::exp_pade9(m, u, v);
    } else {
        const double theta13 = 5.371920351148152;
        std::frexp(norm1 / theta13, &squarings);
        if (squarings < 0) squarings = 0;
        const Eigen::MatrixXd scaled = m.unaryExpr(
            [squarings](double x) { return std::ldexp(x, -squarings); });
        detail::exp_pade13(scaled, u, v);
    }

    Eigen::MatrixXd numer = v + u;
    Eigen::MatrixXd denom = v - u;
    Eigen::MatrixXd result = denom.partialPivLu().solve(numer);
    for (int i = 0; i < squarings; ++i) result = result * result;

    if (!result.allFinite()) {
        std::ostringstream os;
        os << "matrix_exp: overflow, ||M||_inf = " << m.cwiseAbs().rowwise().sum().maxCoeff();
        throw NumericalError(os.str());
    }
    return result;
}

/**
 * Smallest power of two m with norm*tau/m <= 1, the subiteration count for
 * exp(tau L) = (exp(tau L / m))^m; a power of two so the base factor can be
 * squared log2(m) times.
 */
inline int choose_substeps(double norm, double tau) {
    if (!(norm >= 0.0) || !(tau > 0.0))
        throw DomainError("choose_substeps: need norm >= 0 and tau > 0");
    int m = 1;
    while (norm * tau / m > 1.0) {
        if (m > (1 << 30)) throw NumericalError("choose_substeps: subiteration count overflow");
        m *= 2;
    }
    return m;
}

}  // namespace sdeqml

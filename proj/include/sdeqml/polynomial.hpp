#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "sdeqml/errors.hpp"

namespace sdeqml {

/**
 * Dense univariate polynomial with double coefficients, c0 + c1 x + ... + cd x^d.
 *
 * Coefficient arithmetic is exact in the sense that no sampling or fitting is
 * involved; trailing zero coefficients are trimmed so degree bookkeeping stays
 * consistent. The zero polynomial has an empty coefficient vector and degree -1.
 */
class Polynomial {
public:
    Polynomial() = default;

    Polynomial(std::initializer_list<double> coeffs) : c_(coeffs) { trim(); }

    explicit Polynomial(std::vector<double> coeffs) : c_(std::move(coeffs)) { trim(); }

    static Polynomial zero() { return Polynomial(); }

    /// The monomial x.
    static Polynomial identity() { return Polynomial{0.0, 1.0}; }

    bool is_zero() const { return c_.empty(); }

    /// Degree of the polynomial; -1 for the zero polynomial.
    int degree() const { return static_cast<int>(c_.size()) - 1; }

    const std::vector<double>& coefficients() const { return c_; }

    double coefficient(std::size_t power) const {
        return power < c_.size() ? c_[power] : 0.0;
    }

    /// Horner evaluation.
    double operator()(double x) const {
        if (c_.empty()) return 0.0;
        double r = c_.back();
        for (std::size_t i = c_.size() - 1; i-- > 0;) r = r * x + c_[i];
        return r;
    }

    Polynomial derivative() const {
        if (c_.size() <= 1) return zero();
        std::vector<double> d(c_.size() - 1);
        for (std::size_t i = 1; i < c_.size(); ++i) d[i - 1] = c_[i] * static_cast<double>(i);
        return Polynomial(std::move(d));
    }

    Polynomial operator+(const Polynomial& o) const {
        std::vector<double> r(std::max(c_.size(), o.c_.size()), 0.0);
        for (std::size_t i = 0; i < c_.size(); ++i) r[i] = c_[i];
        for (std::size_t i = 0; i < o.c_.size(); ++i) r[i] += o.c_[i];
        return Polynomial(std::move(r));
    }

    Polynomial operator-(const Polynomial& o) const {
        std::vector<double> r(std::max(c_.size(), o.c_.size()), 0.0);
        for (std::size_t i = 0; i < c_.size(); ++i) r[i] = c_[i];
        for (std::size_t i = 0; i < o.c_.size(); ++i) r[i] -= o.c_[i];
        return Polynomial(std::move(r));
    }

    Polynomial operator*(const Polynomial& o) const {
        if (c_.empty() || o.c_.empty()) return zero();
        std::vector<double> r(c_.size() + o.c_.size() - 1, 0.0);
        for (std::size_t i = 0; i < c_.size(); ++i)
            for (std::size_t j = 0; j < o.c_.size(); ++j) r[i + j] += c_[i] * o.c_[j];
        return Polynomial(std::move(r));
    }

    Polynomial scaled(double s) const {
        std::vector<double> r(c_);
        for (double& v : r) v *= s;
        return Polynomial(std::move(r));
    }

    bool operator==(const Polynomial& o) const { return c_ == o.c_; }

private:
    void trim() {
        while (!c_.empty() && c_.back() == 0.0) c_.pop_back();
    }

    std::vector<double> c_;
};

}  // namespace sdeqml

#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bpskit/common.hpp"

namespace bpskit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Structured construction record: {family, dimension, parameters{beta|k|covariance_diagonal}}.
struct TargetConfig {
    std::string family;  // "gaussian" | "gen_gaussian" | "student_t"
    int dimension = 2;
    double beta = 1.0;                 // gen_gaussian shape
    double k = 1.0;                    // student_t degrees of freedom
    std::vector<double> cov_diagonal;  // gaussian; empty = identity

    bool operator==(const TargetConfig&) const = default;
};

// Coefficients of an affine directional rate t -> a + b t.
struct AffineRate {
    double a = 0.0;
    double b = 0.0;
};

// Potential U >= 0 with gradient and optional Hessian. All operations are pure
// and reentrant; a Target is immutable after construction.
class Target {
  public:
    virtual ~Target() = default;

    int dimension() const { return dim_; }
    bool has_hessian() const { return has_hessian_; }
    bool convex() const { return convex_; }
    bool affine_directional_rate() const { return affine_rate_; }
    // Radii where second derivatives may jump (empty for the smooth families).
    const std::vector<double>& nonsmooth_radii() const { return nonsmooth_radii_; }

    virtual double potential(const VectorXd& x) const = 0;

    // Gradient of U. At a declared singular point (e.g. the origin of |x|^beta
    // with beta < 2) returns zero and sets *degenerate; that set has zero
    // potential for the process, so the sampler's law is unaffected.
    virtual VectorXd grad(const VectorXd& x, bool* degenerate = nullptr) const = 0;

    virtual MatrixXd hessian(const VectorXd& x) const {
        (void)x;
        throw UnsupportedError("target: analytic Hessian not available");
    }

    // <grad U(x + t v), v>; |v| = 1 expected.
    double directional_rate(const VectorXd& x, const VectorXd& v, double t) const {
        check_dim(x);
        check_dim(v);
        return grad(x + t * v).dot(v);
    }

    virtual AffineRate affine_rate(const VectorXd& x, const VectorXd& v) const {
        (void)x;
        (void)v;
        throw UnsupportedError("target: directional rate is not affine");
    }

    // U(x) = u(|x|) families expose r u'(r), kept finite as r -> infinity for
    // the thick-tailed members so transformed gradients never overflow.
    virtual bool isotropic() const { return false; }

    virtual double scaled_radial_slope(double r) const {
        (void)r;
        throw UnsupportedError("target: not isotropic");
    }

    void check_dim(const VectorXd& x) const {
        if (x.size() != dim_) throw ConfigError("target: dimension mismatch");
    }

  protected:
    Target(int dim, bool has_hessian, bool convex, bool affine_rate,
           std::vector<double> nonsmooth_radii = {})
        : dim_(dim),
          has_hessian_(has_hessian),
          convex_(convex),
          affine_rate_(affine_rate),
          nonsmooth_radii_(std::move(nonsmooth_radii)) {
        if (dim < 2) throw ConfigError("target: dimension must be >= 2");
    }

  private:
    int dim_;
    bool has_hessian_;
    bool convex_;
    bool affine_rate_;
    std::vector<double> nonsmooth_radii_;
};

using TargetPtr = std::shared_ptr<const Target>;

// U(x) = (1/2) sum x_i^2 / s_i^2; identity covariance by default.
class GaussianTarget final : public Target {
  public:
    explicit GaussianTarget(int dim, std::vector<double> cov_diagonal = {})
        : Target(dim, /*hessian=*/true, /*convex=*/true, /*affine=*/true), prec_(dim) {
        if (cov_diagonal.empty()) {
            prec_.setOnes();
        } else {
            if (int(cov_diagonal.size()) != dim)
                throw ConfigError("gaussian: covariance_diagonal size != dimension");
            for (int i = 0; i < dim; ++i) {
                if (!(cov_diagonal[i] > 0.0)) throw ConfigError("gaussian: variances must be > 0");
                prec_[i] = 1.0 / cov_diagonal[i];
            }
        }
    }

    double potential(const VectorXd& x) const override {
        check_dim(x);
        return 0.5 * x.cwiseProduct(prec_).dot(x);
    }

    VectorXd grad(const VectorXd& x, bool* degenerate = nullptr) const override {
        check_dim(x);
        if (degenerate) *degenerate = false;
        return prec_.cwiseProduct(x);
    }

    MatrixXd hessian(const VectorXd& x) const override {
        check_dim(x);
        return prec_.asDiagonal();
    }

    AffineRate affine_rate(const VectorXd& x, const VectorXd& v) const override {
        check_dim(x);
        check_dim(v);
        return {prec_.cwiseProduct(x).dot(v), prec_.cwiseProduct(v).dot(v)};
    }

    bool isotropic() const override { return prec_.isConstant(prec_[0]); }

    double scaled_radial_slope(double r) const override { return prec_[0] * r * r; }

  private:
    VectorXd prec_;
};

// U(x) = |x|^beta, beta > 0. Convex iff beta >= 1; gradient degenerate at the
// origin for beta < 2; affine directional rate only for beta == 2.
class GeneralizedGaussianTarget final : public Target {
  public:
    GeneralizedGaussianTarget(int dim, double beta)
        : Target(dim, /*hessian=*/true, /*convex=*/beta >= 1.0, /*affine=*/beta == 2.0),
          beta_(beta) {
        if (!(beta > 0.0)) throw ConfigError("gen_gaussian: beta must be > 0");
    }

    double beta() const { return beta_; }

    double potential(const VectorXd& x) const override {
        check_dim(x);
        return std::pow(x.norm(), beta_);
    }

    VectorXd grad(const VectorXd& x, bool* degenerate = nullptr) const override {
        check_dim(x);
        const double r = x.norm();
        if (r == 0.0) {
            // grad |x|^beta -> 0 as x -> 0 for beta > 1; singular for beta <= 1.
            if (degenerate) *degenerate = (beta_ < 2.0);
            return VectorXd::Zero(x.size());
        }
        if (degenerate) *degenerate = false;
        return beta_ * std::pow(r, beta_ - 2.0) * x;
    }

    // beta r^{beta-2} I + beta (beta-2) r^{beta-4} x x^T, valid for x != 0.
    MatrixXd hessian(const VectorXd& x) const override {
        check_dim(x);
        const double r = x.norm();
        if (r == 0.0) throw NumericalError("gen_gaussian: Hessian singular at the origin");
        MatrixXd h = beta_ * std::pow(r, beta_ - 2.0) * MatrixXd::Identity(x.size(), x.size());
        h += beta_ * (beta_ - 2.0) * std::pow(r, beta_ - 4.0) * (x * x.transpose());
        return h;
    }

    AffineRate affine_rate(const VectorXd& x, const VectorXd& v) const override {
        if (beta_ != 2.0) return Target::affine_rate(x, v);
        check_dim(x);
        check_dim(v);
        return {2.0 * x.dot(v), 2.0 * v.squaredNorm()};
    }

    bool isotropic() const override { return true; }

    double scaled_radial_slope(double r) const override { return beta_ * std::pow(r, beta_); }

  private:
    double beta_;
};

// Multivariate t: U(x) = ((k+d)/2) log(1 + |x|^2/k).
class StudentTTarget final : public Target {
  public:
    StudentTTarget(int dim, double k)
        : Target(dim, /*hessian=*/true, /*convex=*/false, /*affine=*/false), k_(k) {
        if (!(k > 0.0)) throw ConfigError("student_t: k must be > 0");
    }

    double k() const { return k_; }

    double potential(const VectorXd& x) const override {
        check_dim(x);
        return 0.5 * (k_ + dimension()) * std::log1p(x.squaredNorm() / k_);
    }

    VectorXd grad(const VectorXd& x, bool* degenerate = nullptr) const override {
        check_dim(x);
        if (degenerate) *degenerate = false;
        return (k_ + dimension()) / (k_ + x.squaredNorm()) * x;
    }

    MatrixXd hessian(const VectorXd& x) const override {
        check_dim(x);
        const double c = (k_ + dimension()) / (k_ + x.squaredNorm());
        MatrixXd h = c * MatrixXd::Identity(x.size(), x.size());
        h -= 2.0 * c / (k_ + x.squaredNorm()) * (x * x.transpose());
        return h;
    }

    bool isotropic() const override { return true; }

    // (k+d) r^2 / (k + r^2), written to stay finite at r = +infinity
    double scaled_radial_slope(double r) const override {
        return (k_ + dimension()) / (k_ / (r * r) + 1.0);
    }

  private:
    double k_;
};

inline TargetPtr make_target(const TargetConfig& cfg) {
    if (cfg.family == "gaussian") {
        return std::make_shared<GaussianTarget>(cfg.dimension, cfg.cov_diagonal);
    }
    if (cfg.family == "gen_gaussian") {
        return std::make_shared<GeneralizedGaussianTarget>(cfg.dimension, cfg.beta);
    }
    if (cfg.family == "student_t") {
        return std::make_shared<StudentTTarget>(cfg.dimension, cfg.k);
    }
    throw ConfigError("unknown target family: '" + cfg.family + "'");
}

// Central finite differences; shared by the diagnostics fallback and the test oracles.
inline VectorXd fd_gradient(const Target& target, const VectorXd& x, double step) {
    VectorXd g(x.size());
    VectorXd e = x;
    for (int i = 0; i < x.size(); ++i) {
        e[i] = x[i] + step;
        const double up = target.potential(e);
        e[i] = x[i] - step;
        const double dn = target.potential(e);
        e[i] = x[i];
        g[i] = (up - dn) / (2.0 * step);
    }
    return g;
}

inline MatrixXd fd_hessian(const Target& target, const VectorXd& x, double step) {
    MatrixXd h(x.size(), x.size());
    VectorXd e = x;
    for (int i = 0; i < x.size(); ++i) {
        e[i] = x[i] + step;
        const VectorXd up = target.grad(e);
        e[i] = x[i] - step;
        const VectorXd dn = target.grad(e);
        e[i] = x[i];
        h.col(i) = (up - dn) / (2.0 * step);
    }
    return 0.5 * (h + h.transpose());  // symmetrise
}

// Analytic Hessian when declared, else central differences with the documented step.
inline MatrixXd hessian_or_fd(const Target& target, const VectorXd& x) {
    if (target.has_hessian()) return target.hessian(x);
    return fd_hessian(target, x, 1e-4 * (1.0 + x.norm()));
}

}  // namespace bpskit

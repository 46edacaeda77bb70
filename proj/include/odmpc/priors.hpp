#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "odmpc/dataset.hpp"
#include "odmpc/gaussian.hpp"
#include "odmpc/mlp.hpp"

namespace odmpc {

// A dynamics prior maps the recent transition context to NIW parameters
// over the stacked vector [x; u; x'].
class PriorModel {
 public:
  virtual ~PriorModel() = default;

  virtual NIWParams evaluate(const VectorXd& x_prev, const VectorXd& u_prev,
                             const VectorXd& x, const VectorXd& u) const = 0;

  // The Gaussian N(mu0, Phi/n0) the adaptive rule compares against.
  JointGaussian prior_gaussian(const VectorXd& x_prev, const VectorXd& u_prev,
                               const VectorXd& x, const VectorXd& u) const;

  virtual std::string family() const = 0;
};

// Global Gaussian fitted to the whole dataset: Phi = n0 Sigma, mu0 = mean.
class GaussianPrior : public PriorModel {
 public:
  GaussianPrior() = default;
  GaussianPrior(JointGaussian base, double n0, double m, bool regularized)
      : base_(std::move(base)), n0_(n0), m_(m), regularized_(regularized) {}

  NIWParams evaluate(const VectorXd&, const VectorXd&, const VectorXd&,
                     const VectorXd&) const override;
  std::string family() const override { return "gaussian"; }

  const JointGaussian& base() const { return base_; }
  double n0() const { return n0_; }
  double m() const { return m_; }
  bool regularized() const { return regularized_; }

 private:
  JointGaussian base_;
  double n0_ = 1.0;
  double m_ = 1.0;
  bool regularized_ = false;
};

GaussianPrior fit_gaussian_prior(const TransitionDataset& dataset,
                                 double n0 = 1.0, double m = 1.0);

struct GmmComponent {
  double weight = 0.0;
  VectorXd mean;
  MatrixXd cov;
};

struct GmmFitConfig {
  int max_iters = 200;
  double tol_per_sample = 1e-6;
  int max_reseeds = 5;
  double collapse_eig = 1e-10;
};

// Mixture of Gaussians over stacked transition vectors. Component
// selection conditions on the latest fully observed tuple
// [x_prev; u_prev; x]; hard assignment by default.
class GmmPrior : public PriorModel {
 public:
  GmmPrior() = default;
  GmmPrior(std::vector<GmmComponent> comps, double n0, double m, bool soft)
      : comps_(std::move(comps)), n0_(n0), m_(m), soft_(soft) {}

  NIWParams evaluate(const VectorXd& x_prev, const VectorXd& u_prev,
                     const VectorXd& x, const VectorXd& u) const override;
  std::string family() const override { return "gmm"; }

  // Posterior component probabilities for an observed stacked vector.
  VectorXd responsibilities(const VectorXd& p) const;

  const std::vector<GmmComponent>& components() const { return comps_; }
  double n0() const { return n0_; }
  double m() const { return m_; }
  bool soft() const { return soft_; }
  void set_soft(bool s) { soft_ = s; }

 private:
  std::vector<GmmComponent> comps_;
  double n0_ = 1.0;
  double m_ = 1.0;
  bool soft_ = false;
};

struct GmmFitReport {
  std::vector<double> loglik;  // per EM iteration, per sample
  int reseeds = 0;
};

GmmPrior fit_gmm(const TransitionDataset& dataset, int k, std::uint64_t seed,
                 double n0 = 1.0, double m = 1.0, bool soft = false,
                 const GmmFitConfig& cfg = {}, GmmFitReport* report = nullptr);

// E-step over all rows: responsibilities and total log-likelihood.
// OpenMP kernel plus the serial reference kept for testing.
struct GmmEstep {
  MatrixXd resp;  // n x k
  double loglik = 0.0;
};
GmmEstep gmm_estep(const std::vector<GmmComponent>& comps,
                   const MatrixXd& rows);
GmmEstep gmm_estep_serial(const std::vector<GmmComponent>& comps,
                          const MatrixXd& rows);

// Linearizes the network at the query and assembles the block prior
// covariance with state-action block alpha*I.
class NeuralNetPrior : public PriorModel {
 public:
  NeuralNetPrior() = default;
  NeuralNetPrior(MLPModel net, double alpha, MatrixXd residual_cov, double n0,
                 double m)
      : net_(std::move(net)),
        alpha_(alpha),
        residual_cov_(std::move(residual_cov)),
        n0_(n0),
        m_(m) {}

  NIWParams evaluate(const VectorXd& x_prev, const VectorXd& u_prev,
                     const VectorXd& x, const VectorXd& u) const override;
  std::string family() const override { return net_.context ? "nn2" : "nn1"; }

  const MLPModel& net() const { return net_; }
  double alpha() const { return alpha_; }
  const MatrixXd& residual_cov() const { return residual_cov_; }
  double n0() const { return n0_; }
  double m() const { return m_; }

 private:
  MLPModel net_;
  double alpha_ = 1.0;
  MatrixXd residual_cov_;
  double n0_ = 1.0;
  double m_ = 1.0;
};

// Covariance of next-state prediction residuals over the dataset.
MatrixXd estimate_residual_cov(const MLPModel& net,
                               const TransitionDataset& dataset);

}  // namespace odmpc

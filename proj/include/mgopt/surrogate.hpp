#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mgopt/bilevel.hpp"
#include "mgopt/grid_model.hpp"

namespace mgopt {

/// Surrogate input chi = (w_bar, x(k), zeta), of length 2N + I.
Eigen::VectorXd make_surrogate_input(const Profile& w_bar, const Eigen::VectorXd& soc, const Profile& zeta);

struct Sample {
  Eigen::VectorXd chi;
  Profile z_bar;
  int step = 0;       ///< MPC step the solve belonged to
  int iteration = 0;  ///< 1-based bidirectional iteration within the step
};

struct SampleSet {
  std::string scenario;
  int N = 0;
  int I = 0;
  std::vector<Sample> samples;

  int input_dim() const { return 2 * N + I; }
  std::size_t size() const { return samples.size(); }
};

/// Keeps samples 0, stride, 2 stride, ...
SampleSet subsample(const SampleSet& set, int stride);

void save_samples(const SampleSet& set, const std::string& path);
SampleSet load_samples(const std::string& path);

/// Passes calls through to `inner` and appends one sample per call to `sink`.
class RecordingSolver : public LowerSolver {
 public:
  RecordingSolver(LowerSolver& inner, SampleSet& sink) : inner_(inner), sink_(sink) {}
  LowerResponse solve(const Microgrid& mg, const Eigen::VectorXd& x0, const Eigen::MatrixXd& w,
                      const Profile& target) override;
  void reset() override;
  void begin_step(int k) override;
  std::string name() const override { return inner_.name(); }

 private:
  LowerSolver& inner_;
  SampleSet& sink_;
  int step_ = 0;
  int iteration_ = 0;
};

// ---------------------------------------------------------------- RBF

enum class KernelKind { kGaussian, kMultiquadric, kThinPlate };

std::string to_string(KernelKind k);
KernelKind kernel_from_string(const std::string& s);

struct KernelSpec {
  KernelKind kind = KernelKind::kGaussian;
  double shape = 0.0;  ///< <= 0 selects the median pairwise center distance
};

double kernel_value(const KernelSpec& k, double r);

/// Radial basis interpolant with an affine tail. Distances are taken between
/// standardized inputs (chi - in_mean) / in_scale; the tail acts on raw chi.
struct RbfModel {
  int N = 0;
  int I = 0;
  KernelSpec kernel;                 ///< shape resolved at fit time
  Eigen::VectorXd in_mean, in_scale;
  Eigen::MatrixXd centers;           ///< standardized, one row per center
  Eigen::MatrixXd weights;           ///< one row (alpha_m') per center
  Eigen::VectorXd tail_bias;         ///< beta_0
  Eigen::MatrixXd tail;              ///< B, N x (2N + I)

  int input_dim() const { return 2 * N + I; }
};

/// Solves the interpolation conditions with a `ridge` multiple of the
/// identity added to the kernel block. Input features that never vary are
/// left out of the tail (their column of B is zero). Throws FitError for
/// duplicate centers, a rank-deficient tail or a system that cannot be solved
/// accurately.
RbfModel fit_rbf(const SampleSet& set, const KernelSpec& kernel, double ridge = 1e-10);

Profile eval_rbf(const RbfModel& model, const Eigen::VectorXd& chi);

// ----------------------------------------------------------------- NN

/// Feed-forward network with a sigmoid after every layer, the output layer
/// included. Inputs are standardized; the output sigmoid is mapped back by
/// z = out_offset + out_scale * s.
struct NnModel {
  int N = 0;
  int I = 0;
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
  Eigen::VectorXd in_mean, in_scale;
  Eigen::VectorXd out_offset, out_scale;

  int input_dim() const { return 2 * N + I; }
};

struct NnTrainConfig {
  std::vector<int> hidden = {10};
  int epochs = 2000;
  double learning_rate = 1e-2;
  int batch_size = 32;
  double validation_split = 0.2;
  int patience = 50;
  std::uint64_t seed = 1;
};

struct NnGradient {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

/// Mean squared error of the network on standardized inputs `X` (one column
/// per sample) against sigmoid-range targets `S`, and its gradient.
NnGradient nn_loss_gradient(const NnModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& S);

/// Network with the given layer widths, Xavier-initialized from `seed` and
/// identity normalization.
NnModel make_nn(int N, int I, const std::vector<int>& hidden, std::uint64_t seed);

/// Adam on mini-batches; returns the parameters with the lowest validation
/// loss. Output targets are min-max scaled into [0.1, 0.9] so that the
/// sigmoid can reach them. Throws FitError if the loss becomes non-finite.
NnModel fit_nn(const SampleSet& set, const NnTrainConfig& cfg = {});

Profile eval_nn(const NnModel& model, const Eigen::VectorXd& chi);

// --------------------------------------------------------- persistence

void save_model(const RbfModel& model, const std::string& path);
void save_model(const NnModel& model, const std::string& path);
/// Throws ConfigError if the file is malformed, of another kind, or its
/// dimensions differ from (N, I) when these are positive.
RbfModel load_rbf(const std::string& path, int N = 0, int I = 0);
NnModel load_nn(const std::string& path, int N = 0, int I = 0);

// ------------------------------------------------------ use in the loop

/// Lower-level solver that evaluates a fitted map instead of optimizing.
/// Returns no controls and records no transmissions.
class SurrogateLowerSolver : public LowerSolver {
 public:
  using Map = std::function<Profile(const Eigen::VectorXd&)>;
  SurrogateLowerSolver(std::string name, int N, int I, Map map);
  static std::unique_ptr<SurrogateLowerSolver> from(std::shared_ptr<const RbfModel> model);
  static std::unique_ptr<SurrogateLowerSolver> from(std::shared_ptr<const NnModel> model);

  LowerResponse solve(const Microgrid& mg, const Eigen::VectorXd& x0, const Eigen::MatrixXd& w,
                      const Profile& target) override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  int N_, I_;
  Map map_;
};

/// One more bidirectional iteration from the returned iterate of `run`, with
/// `admm` solving every microgrid's lower level. The result carries
/// battery-feasible controls for all households.
BilevelIterate repair_with_admm(const BilevelInput& in, const BilevelResult& run,
                                const std::vector<LowerSolver*>& admm, const ExchangeConfig& xcfg,
                                BilevelTrace& trace);

}  // namespace mgopt

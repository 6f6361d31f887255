#include "mgopt/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/QR>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "mgopt/errors.hpp"

namespace mgopt {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

Eigen::VectorXd make_surrogate_input(const Profile& w_bar, const Eigen::VectorXd& soc, const Profile& zeta) {
  if (w_bar.size() != zeta.size()) throw DomainError("surrogate input: w_bar and zeta lengths differ");
  VectorXd chi(w_bar.size() + soc.size() + zeta.size());
  chi << w_bar, soc, zeta;
  return chi;
}

SampleSet subsample(const SampleSet& set, int stride) {
  if (stride < 1) throw DomainError("subsample: stride must be >= 1");
  SampleSet out{set.scenario, set.N, set.I, {}};
  for (std::size_t m = 0; m < set.samples.size(); m += stride) out.samples.push_back(set.samples[m]);
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw DataError(fmt::format("{}: '{}' is not a number", where, s));
  return v;
}

void check_samples(const SampleSet& set) {
  if (set.samples.empty()) throw FitError("no samples to fit");
  if (set.N < 1 || set.I < 1) throw FitError("sample set has no dimensions");
  for (std::size_t m = 0; m < set.samples.size(); ++m) {
    const auto& s = set.samples[m];
    if (s.chi.size() != set.input_dim() || s.z_bar.size() != set.N) {
      throw FitError(fmt::format("sample {} does not have dimensions (2N+I, N) = ({}, {})", m, set.input_dim(), set.N));
    }
    if (!s.chi.allFinite() || !s.z_bar.allFinite()) throw FitError(fmt::format("sample {} is not finite", m));
  }
}

MatrixXd input_matrix(const SampleSet& set) {
  MatrixXd X(set.samples.size(), set.input_dim());
  for (std::size_t m = 0; m < set.samples.size(); ++m) X.row(m) = set.samples[m].chi.transpose();
  return X;
}

MatrixXd output_matrix(const SampleSet& set) {
  MatrixXd Z(set.samples.size(), set.N);
  for (std::size_t m = 0; m < set.samples.size(); ++m) Z.row(m) = set.samples[m].z_bar.transpose();
  return Z;
}

// Column means and standard deviations; constant columns get scale 1.
void standardization(const MatrixXd& X, VectorXd& mean, VectorXd& scale, std::vector<bool>& varies) {
  mean = X.colwise().mean().transpose();
  scale.resize(X.cols());
  varies.assign(X.cols(), true);
  for (int c = 0; c < X.cols(); ++c) {
    const double sd = std::sqrt((X.col(c).array() - mean[c]).square().mean());
    if (sd <= 1e-12 * (1.0 + std::abs(mean[c]))) {
      scale[c] = 1.0;
      varies[c] = false;
    } else {
      scale[c] = sd;
    }
  }
}

void check_input_dim(int expected, const VectorXd& chi, const char* who) {
  if (chi.size() != expected) {
    throw DomainError(fmt::format("{}: input has length {}, model expects {}", who, chi.size(), expected));
  }
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

void save_samples(const SampleSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path));
  out << "# mgopt samples v1\n";
  out << "# scenario=" << set.scenario << "\n";
  out << fmt::format("# N={} I={}\n", set.N, set.I);
  out << "step,iteration";
  for (int c = 0; c < set.input_dim(); ++c) out << ",chi_" << c;
  for (int c = 0; c < set.N; ++c) out << ",z_" << c;
  out << "\n";
  for (const auto& s : set.samples) {
    out << s.step << ',' << s.iteration;
    for (double v : s.chi) out << ',' << fmt::format("{}", v);
    for (double v : s.z_bar) out << ',' << fmt::format("{}", v);
    out << '\n';
  }
}

SampleSet load_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot read '{}'", path));
  SampleSet set;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# scenario=", 0) == 0) set.scenario = line.substr(11);
      if (line.rfind("# N=", 0) == 0 && std::sscanf(line.c_str(), "# N=%d I=%d", &set.N, &set.I) != 2) {
        throw DataError(fmt::format("{}:{}: malformed dimension line", path, lineno));
      }
      continue;
    }
    if (!header) {
      header = true;
      continue;
    }
    const auto cells = split(line, ',');
    const std::size_t want = 2 + set.input_dim() + set.N;
    if (set.N < 1 || cells.size() != want) {
      throw DataError(fmt::format("{}:{}: expected {} fields, got {}", path, lineno, want, cells.size()));
    }
    const std::string where = fmt::format("{}:{}", path, lineno);
    Sample s;
    s.step = static_cast<int>(parse_double(cells[0], where));
    s.iteration = static_cast<int>(parse_double(cells[1], where));
    s.chi.resize(set.input_dim());
    s.z_bar.resize(set.N);
    for (int c = 0; c < set.input_dim(); ++c) s.chi[c] = parse_double(cells[2 + c], where);
    for (int c = 0; c < set.N; ++c) s.z_bar[c] = parse_double(cells[2 + set.input_dim() + c], where);
    set.samples.push_back(std::move(s));
  }
  return set;
}

LowerResponse RecordingSolver::solve(const Microgrid& mg, const Eigen::VectorXd& x0, const Eigen::MatrixXd& w,
                                     const Profile& target) {
  LowerResponse r = inner_.solve(mg, x0, w, target);
  if (sink_.N == 0) {
    sink_.N = static_cast<int>(target.size());
    sink_.I = mg.size();
  }
  sink_.samples.push_back({make_surrogate_input(average_demand(w), x0, target), r.z_bar, step_, ++iteration_});
  return r;
}

void RecordingSolver::reset() {
  iteration_ = 0;
  inner_.reset();
}

void RecordingSolver::begin_step(int k) {
  step_ = k;
  iteration_ = 0;
  inner_.begin_step(k);
}

// ---------------------------------------------------------------- RBF

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::kGaussian: return "gaussian";
    case KernelKind::kMultiquadric: return "multiquadric";
    case KernelKind::kThinPlate: return "thin-plate";
  }
  return "?";
}

KernelKind kernel_from_string(const std::string& s) {
  if (s == "gaussian") return KernelKind::kGaussian;
  if (s == "multiquadric") return KernelKind::kMultiquadric;
  if (s == "thin-plate") return KernelKind::kThinPlate;
  throw ConfigError(fmt::format("unknown kernel '{}' (gaussian, multiquadric, thin-plate)", s));
}

double kernel_value(const KernelSpec& k, double r) {
  const double q = r / k.shape;
  switch (k.kind) {
    case KernelKind::kGaussian: return std::exp(-q * q);
    case KernelKind::kMultiquadric: return std::sqrt(1.0 + q * q);
    case KernelKind::kThinPlate: return q > 0.0 ? q * q * std::log(q) : 0.0;
  }
  return 0.0;
}

RbfModel fit_rbf(const SampleSet& set, const KernelSpec& kernel, double ridge) {
  check_samples(set);
  if (ridge < 0.0) throw FitError("ridge must be >= 0");
  const int M = static_cast<int>(set.size());
  const int d = set.input_dim();

  RbfModel model;
  model.N = set.N;
  model.I = set.I;
  const MatrixXd X = input_matrix(set);
  std::vector<bool> varies;
  standardization(X, model.in_mean, model.in_scale, varies);
  model.centers = (X.rowwise() - model.in_mean.transpose()).array().rowwise() / model.in_scale.transpose().array();

  MatrixXd dist(M, M);
  std::vector<double> pairwise;
  pairwise.reserve(static_cast<std::size_t>(M) * (M - 1) / 2);
  for (int a = 0; a < M; ++a) {
    dist(a, a) = 0.0;
    for (int b = a + 1; b < M; ++b) {
      const double r = (model.centers.row(a) - model.centers.row(b)).norm();
      if (r < 1e-10) throw FitError(fmt::format("duplicate centers: samples {} and {} have the same input", a, b));
      dist(a, b) = dist(b, a) = r;
      pairwise.push_back(r);
    }
  }
  model.kernel = kernel;
  if (!(model.kernel.shape > 0.0)) {
    if (pairwise.empty()) {
      model.kernel.shape = 1.0;
    } else {
      auto mid = pairwise.begin() + pairwise.size() / 2;
      std::nth_element(pairwise.begin(), mid, pairwise.end());
      model.kernel.shape = *mid;
    }
  }

  std::vector<int> tail_cols;
  for (int c = 0; c < d; ++c)
    if (varies[c]) tail_cols.push_back(c);
  const int t = 1 + static_cast<int>(tail_cols.size());
  MatrixXd P(M, t);
  P.col(0).setOnes();
  for (int j = 1; j < t; ++j) P.col(j) = model.centers.col(tail_cols[j - 1]);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(P);
  qr.setThreshold(1e-10);
  if (qr.rank() < t) {
    throw FitError(fmt::format("degenerate affine tail: {} samples span only {} of {} tail directions", M, qr.rank(), t));
  }

  MatrixXd A = MatrixXd::Zero(M + t, M + t);
  for (int a = 0; a < M; ++a)
    for (int b = 0; b < M; ++b) A(a, b) = kernel_value(model.kernel, dist(a, b));
  A.topLeftCorner(M, M).diagonal().array() += ridge;
  A.topRightCorner(M, t) = P;
  A.bottomLeftCorner(t, M) = P.transpose();
  MatrixXd rhs = MatrixXd::Zero(M + t, set.N);
  rhs.topRows(M) = output_matrix(set);

  Eigen::PartialPivLU<MatrixXd> lu(A);
  const MatrixXd sol = lu.solve(rhs);
  const double resid = (A * sol - rhs).lpNorm<Eigen::Infinity>();
  if (!sol.allFinite() || resid > 1e-6 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
    throw FitError(fmt::format("interpolation system is singular or too ill-conditioned (residual {:.3g})", resid));
  }
  model.weights = sol.topRows(M);

  // Tail coefficients act on standardized inputs; express them on raw chi.
  const MatrixXd c = sol.bottomRows(t);  // t x N
  model.tail = MatrixXd::Zero(set.N, d);
  model.tail_bias = c.row(0).transpose();
  for (int j = 1; j < t; ++j) {
    const int col = tail_cols[j - 1];
    model.tail.col(col) = c.row(j).transpose() / model.in_scale[col];
    model.tail_bias -= c.row(j).transpose() * (model.in_mean[col] / model.in_scale[col]);
  }
  return model;
}

Profile eval_rbf(const RbfModel& model, const Eigen::VectorXd& chi) {
  check_input_dim(model.input_dim(), chi, "eval_rbf");
  const VectorXd s = (chi - model.in_mean).cwiseQuotient(model.in_scale);
  VectorXd out = model.tail_bias + model.tail * chi;
  for (int m = 0; m < model.centers.rows(); ++m) {
    const double r = (model.centers.row(m).transpose() - s).norm();
    out.noalias() += kernel_value(model.kernel, r) * model.weights.row(m).transpose();
  }
  return out;
}

// ----------------------------------------------------------------- NN

NnModel make_nn(int N, int I, const std::vector<int>& hidden, std::uint64_t seed) {
  if (N < 1 || I < 1) throw DomainError("make_nn: dimensions must be positive");
  NnModel m;
  m.N = N;
  m.I = I;
  std::vector<int> widths{2 * N + I};
  for (int h : hidden) {
    if (h < 1) throw DomainError("make_nn: hidden widths must be positive");
    widths.push_back(h);
  }
  widths.push_back(N);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const double lim = std::sqrt(6.0 / (widths[l - 1] + widths[l]));
    std::uniform_real_distribution<double> u(-lim, lim);
    MatrixXd W(widths[l], widths[l - 1]);
    for (int i = 0; i < W.size(); ++i) W(i) = u(rng);
    m.W.push_back(W);
    m.b.push_back(VectorXd::Zero(widths[l]));
  }
  m.in_mean = VectorXd::Zero(2 * N + I);
  m.in_scale = VectorXd::Ones(2 * N + I);
  m.out_offset = VectorXd::Zero(N);
  m.out_scale = VectorXd::Ones(N);
  return m;
}

NnGradient nn_loss_gradient(const NnModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& S) {
  const auto L = model.W.size();
  std::vector<MatrixXd> act{X};
  for (std::size_t l = 0; l < L; ++l) {
    MatrixXd pre = (model.W[l] * act.back()).colwise() + model.b[l];
    act.push_back(pre.unaryExpr([](double v) { return sigmoid(v); }));
  }
  const MatrixXd err = act.back() - S;
  const double denom = static_cast<double>(S.size());
  NnGradient g;
  g.loss = err.squaredNorm() / denom;
  g.dW.resize(L);
  g.db.resize(L);
  MatrixXd delta = (2.0 / denom) * err.cwiseProduct(act.back().cwiseProduct((1.0 - act.back().array()).matrix()));
  for (std::size_t l = L; l-- > 0;) {
    g.dW[l] = delta * act[l].transpose();
    g.db[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (model.W[l].transpose() * delta).cwiseProduct(act[l].cwiseProduct((1.0 - act[l].array()).matrix()));
    }
  }
  return g;
}

NnModel fit_nn(const SampleSet& set, const NnTrainConfig& cfg) {
  check_samples(set);
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) || cfg.validation_split < 0.0 ||
      cfg.validation_split >= 1.0 || cfg.patience < 1) {
    throw FitError("invalid training configuration");
  }
  NnModel model = make_nn(set.N, set.I, cfg.hidden, cfg.seed);
  const int M = static_cast<int>(set.size());

  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
  std::vector<int> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  int n_val = static_cast<int>(std::floor(cfg.validation_split * M));
  if (M - n_val < 1) n_val = M - 1;
  std::vector<int> train(order.begin() + n_val, order.end());
  std::vector<int> val(order.begin(), order.begin() + n_val);

  // Normalization from the training split only.
  const MatrixXd Xall = input_matrix(set);
  const MatrixXd Zall = output_matrix(set);
  MatrixXd Xt(train.size(), Xall.cols()), Zt(train.size(), Zall.cols());
  for (std::size_t r = 0; r < train.size(); ++r) {
    Xt.row(r) = Xall.row(train[r]);
    Zt.row(r) = Zall.row(train[r]);
  }
  std::vector<bool> varies;
  standardization(Xt, model.in_mean, model.in_scale, varies);
  const VectorXd lo = Zt.colwise().minCoeff().transpose();
  const VectorXd hi = Zt.colwise().maxCoeff().transpose();
  model.out_scale.resize(set.N);
  model.out_offset.resize(set.N);
  for (int c = 0; c < set.N; ++c) {
    double span = hi[c] - lo[c];
    if (span <= 1e-12 * (1.0 + std::abs(lo[c]))) span = 1.0;
    // [lo, hi] maps to [0.1, 0.9]
    model.out_scale[c] = span / 0.8;
    model.out_offset[c] = lo[c] - 0.1 * model.out_scale[c];
  }
  const MatrixXd Xn =
      ((Xall.rowwise() - model.in_mean.transpose()).array().rowwise() / model.in_scale.transpose().array())
          .matrix()
          .transpose();
  const MatrixXd Sn =
      ((Zall.rowwise() - model.out_offset.transpose()).array().rowwise() / model.out_scale.transpose().array())
          .matrix()
          .transpose();
  auto columns = [](const MatrixXd& A, const std::vector<int>& idx) {
    MatrixXd out(A.rows(), idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(j) = A.col(idx[j]);
    return out;
  };
  const MatrixXd Xv = columns(Xn, val.empty() ? train : val);
  const MatrixXd Sv = columns(Sn, val.empty() ? train : val);

  const std::size_t L = model.W.size();
  std::vector<MatrixXd> mW, vW;
  std::vector<VectorXd> mb, vb;
  for (std::size_t l = 0; l < L; ++l) {
    mW.push_back(MatrixXd::Zero(model.W[l].rows(), model.W[l].cols()));
    vW.push_back(mW.back());
    mb.push_back(VectorXd::Zero(model.b[l].size()));
    vb.push_back(mb.back());
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long step = 0;

  NnModel best = model;
  double best_val = nn_loss_gradient(model, Xv, Sv).loss;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs && since_best < cfg.patience; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train.size(), start + cfg.batch_size);
      const std::vector<int> batch(train.begin() + start, train.begin() + end);
      const auto g = nn_loss_gradient(model, columns(Xn, batch), columns(Sn, batch));
      if (!std::isfinite(g.loss)) {
        throw FitError(fmt::format("training diverged at epoch {}: loss {}", epoch, g.loss));
      }
      ++step;
      const double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
      for (std::size_t l = 0; l < L; ++l) {
        mW[l] = b1 * mW[l] + (1 - b1) * g.dW[l];
        vW[l] = b2 * vW[l] + (1 - b2) * g.dW[l].cwiseAbs2();
        model.W[l].array() -= cfg.learning_rate * (mW[l].array() / c1) / ((vW[l].array() / c2).sqrt() + eps);
        mb[l] = b1 * mb[l] + (1 - b1) * g.db[l];
        vb[l] = b2 * vb[l] + (1 - b2) * g.db[l].cwiseAbs2();
        model.b[l].array() -= cfg.learning_rate * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + eps);
      }
    }
    const double v = nn_loss_gradient(model, Xv, Sv).loss;
    if (!std::isfinite(v)) throw FitError(fmt::format("validation loss is {} at epoch {}", v, epoch));
    if (v < best_val * (1.0 - 1e-9)) {
      best_val = v;
      best = model;
      since_best = 0;
    } else {
      ++since_best;
    }
  }
  return best;
}

Profile eval_nn(const NnModel& model, const Eigen::VectorXd& chi) {
  check_input_dim(model.input_dim(), chi, "eval_nn");
  VectorXd a = (chi - model.in_mean).cwiseQuotient(model.in_scale);
  for (std::size_t l = 0; l < model.W.size(); ++l) {
    a = (model.W[l] * a + model.b[l]).unaryExpr([](double v) { return sigmoid(v); });
  }
  return model.out_offset + model.out_scale.cwiseProduct(a);
}

// --------------------------------------------------------- persistence

namespace {

constexpr const char* kFormat = "mgopt-surrogate";
constexpr int kVersion = 1;

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_json(const MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) rows.push_back(vec_json(m.row(r).transpose()));
  return rows;
}

VectorXd json_vec(const json& j, Eigen::Index n, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
    throw ConfigError(fmt::format("model field '{}' must have {} entries", what, n));
  }
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = j[i].get<double>();
  return v;
}

MatrixXd json_mat(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ConfigError(fmt::format("model field '{}' must have {} rows", what, rows));
  }
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = json_vec(j[r], cols, what).transpose();
  return m;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path));
  out << j.dump(1) << '\n';
}

json read_json(const std::string& path, const char* kind, int N, int I) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read model file '{}'", path));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("model file '{}' is not valid JSON: {}", path, e.what()));
  }
  if (j.value("format", "") != kFormat || j.value("version", 0) != kVersion) {
    throw ConfigError(fmt::format("'{}' is not a version {} {} file", path, kVersion, kFormat));
  }
  if (j.value("kind", "") != kind) {
    throw ConfigError(fmt::format("'{}' holds a '{}' model, expected '{}'", path, j.value("kind", ""), kind));
  }
  const int fN = j.value("N", 0), fI = j.value("I", 0);
  if (fN < 1 || fI < 1) throw ConfigError(fmt::format("'{}' has invalid dimensions", path));
  if ((N > 0 && fN != N) || (I > 0 && fI != I)) {
    throw ConfigError(fmt::format("'{}' was trained for N = {}, I = {} but N = {}, I = {} is required", path, fN, fI,
                                  N, I));
  }
  return j;
}

}  // namespace

void save_model(const RbfModel& m, const std::string& path) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["kind"] = "rbf";
  j["N"] = m.N;
  j["I"] = m.I;
  j["kernel"] = to_string(m.kernel.kind);
  j["shape"] = m.kernel.shape;
  j["centers_count"] = m.centers.rows();
  j["in_mean"] = vec_json(m.in_mean);
  j["in_scale"] = vec_json(m.in_scale);
  j["centers"] = mat_json(m.centers);
  j["weights"] = mat_json(m.weights);
  j["tail_bias"] = vec_json(m.tail_bias);
  j["tail"] = mat_json(m.tail);
  write_json(j, path);
}

void save_model(const NnModel& m, const std::string& path) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["kind"] = "nn";
  j["N"] = m.N;
  j["I"] = m.I;
  json layers = json::array();
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    layers.push_back({{"rows", m.W[l].rows()}, {"cols", m.W[l].cols()}, {"W", mat_json(m.W[l])}, {"b", vec_json(m.b[l])}});
  }
  j["layers"] = layers;
  j["in_mean"] = vec_json(m.in_mean);
  j["in_scale"] = vec_json(m.in_scale);
  j["out_offset"] = vec_json(m.out_offset);
  j["out_scale"] = vec_json(m.out_scale);
  write_json(j, path);
}

RbfModel load_rbf(const std::string& path, int N, int I) {
  const json j = read_json(path, "rbf", N, I);
  try {
    RbfModel m;
    m.N = j.at("N");
    m.I = j.at("I");
    const int d = m.input_dim();
    const int M = j.at("centers_count");
    m.kernel = {kernel_from_string(j.at("kernel")), j.at("shape")};
    if (!(m.kernel.shape > 0.0) || M < 1) throw ConfigError("invalid kernel shape or center count");
    m.in_mean = json_vec(j.at("in_mean"), d, "in_mean");
    m.in_scale = json_vec(j.at("in_scale"), d, "in_scale");
    m.centers = json_mat(j.at("centers"), M, d, "centers");
    m.weights = json_mat(j.at("weights"), M, m.N, "weights");
    m.tail_bias = json_vec(j.at("tail_bias"), m.N, "tail_bias");
    m.tail = json_mat(j.at("tail"), m.N, d, "tail");
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("model file '{}': {}", path, e.what()));
  }
}

NnModel load_nn(const std::string& path, int N, int I) {
  const json j = read_json(path, "nn", N, I);
  try {
    NnModel m;
    m.N = j.at("N");
    m.I = j.at("I");
    int width = m.input_dim();
    for (const auto& layer : j.at("layers")) {
      const int rows = layer.at("rows"), cols = layer.at("cols");
      if (cols != width || rows < 1) throw ConfigError(fmt::format("model file '{}': layer widths do not chain", path));
      m.W.push_back(json_mat(layer.at("W"), rows, cols, "W"));
      m.b.push_back(json_vec(layer.at("b"), rows, "b"));
      width = rows;
    }
    if (m.W.empty() || width != m.N) throw ConfigError(fmt::format("model file '{}': output width is not N", path));
    m.in_mean = json_vec(j.at("in_mean"), m.input_dim(), "in_mean");
    m.in_scale = json_vec(j.at("in_scale"), m.input_dim(), "in_scale");
    m.out_offset = json_vec(j.at("out_offset"), m.N, "out_offset");
    m.out_scale = json_vec(j.at("out_scale"), m.N, "out_scale");
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("model file '{}': {}", path, e.what()));
  }
}

// ------------------------------------------------------ use in the loop

SurrogateLowerSolver::SurrogateLowerSolver(std::string name, int N, int I, Map map)
    : name_(std::move(name)), N_(N), I_(I), map_(std::move(map)) {}

std::unique_ptr<SurrogateLowerSolver> SurrogateLowerSolver::from(std::shared_ptr<const RbfModel> model) {
  const int N = model->N, I = model->I;
  return std::make_unique<SurrogateLowerSolver>("rbf", N, I, [m = std::move(model)](const VectorXd& chi) {
    return eval_rbf(*m, chi);
  });
}

std::unique_ptr<SurrogateLowerSolver> SurrogateLowerSolver::from(std::shared_ptr<const NnModel> model) {
  const int N = model->N, I = model->I;
  return std::make_unique<SurrogateLowerSolver>("nn", N, I, [m = std::move(model)](const VectorXd& chi) {
    return eval_nn(*m, chi);
  });
}

LowerResponse SurrogateLowerSolver::solve(const Microgrid& mg, const Eigen::VectorXd& x0, const Eigen::MatrixXd& w,
                                          const Profile& target) {
  if (mg.size() != I_ || target.size() != N_) {
    throw DomainError(fmt::format("{} surrogate expects I = {}, N = {}; microgrid {} has I = {}, N = {}", name_, I_, N_,
                                  mg.index, mg.size(), target.size()));
  }
  return {map_(make_surrogate_input(average_demand(w), x0, target)), std::nullopt, 0};
}

BilevelIterate repair_with_admm(const BilevelInput& in, const BilevelResult& run,
                                const std::vector<LowerSolver*>& admm, const ExchangeConfig& xcfg,
                                BilevelTrace& trace) {
  return bidirectional_step(in, next_targets(in, run.best), admm, run.best.delta, xcfg, trace);
}

}  // namespace mgopt

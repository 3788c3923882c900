#include "semg/svm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace semg::svm {

double rbf(std::span<const double> x1, std::span<const double> x2, const RbfKernel& k) {
  if (x1.size() != x2.size()) {
    throw Error(Errc::dimension, "kernel arguments differ in length: " +
                                     std::to_string(x1.size()) + " vs " +
                                     std::to_string(x2.size()));
  }
  if (!(k.sigma > 0)) throw Error(Errc::invalid_argument, "kernel sigma must be positive");
  double d2 = 0;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const double d = x1[i] - x2[i];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * k.sigma * k.sigma));
}

namespace {

class SmoSolver {
 public:
  SmoSolver(const std::vector<Vector>& X, const std::vector<int>& y, const SmoParams& p,
            const RbfKernel& k)
      : X_(X), y_(y), p_(p), n_(X.size()), K_(n_ * n_), alpha_(n_, 0.0), F_(n_) {
    for (std::size_t i = 0; i < n_; ++i) {
      K_[i * n_ + i] = rbf(X[i], X[i], k);
      for (std::size_t j = i + 1; j < n_; ++j) {
        K_[i * n_ + j] = K_[j * n_ + i] = rbf(X[i], X[j], k);
      }
    }
    for (std::size_t i = 0; i < n_; ++i) F_[i] = -y_[i];
  }

  // Each iteration updates the maximal violating pair. Terminates once every point satisfies
  // its KKT condition within kkt_tol for the midpoint bias.
  bool run(std::size_t& passes) {
    const std::size_t budget = p_.max_passes * std::max<std::size_t>(n_, 1);
    std::size_t iter = 0;
    for (;;) {
      std::size_t up = n_, low = n_;
      for (std::size_t k = 0; k < n_; ++k) {
        if (in_up(k) && (up == n_ || F_[k] < F_[up])) up = k;
        if (in_low(k) && (low == n_ || F_[k] > F_[low])) low = k;
      }
      // Both sets are non-empty whenever each class is present.
      b_ = -0.5 * (F_[up] + F_[low]);
      if (F_[low] - F_[up] <= 2.0 * p_.kkt_tol) {
        passes = iter / std::max<std::size_t>(n_, 1) + 1;
        return true;
      }
      if (iter == budget || !step(up, low)) {
        passes = p_.max_passes;
        return false;
      }
      ++iter;
    }
  }

  const std::vector<double>& alpha() const { return alpha_; }
  double b() const { return b_; }

 private:
  double kern(std::size_t i, std::size_t j) const { return K_[i * n_ + j]; }

  // Points whose KKT condition bounds F from below (in_up) or from above (in_low).
  bool in_up(std::size_t k) const {
    return y_[k] > 0 ? alpha_[k] < p_.C : alpha_[k] > 0.0;
  }
  bool in_low(std::size_t k) const {
    return y_[k] > 0 ? alpha_[k] > 0.0 : alpha_[k] < p_.C;
  }

  double snap(double a) const {
    if (a < 1e-12 * p_.C) return 0.0;
    if (a > p_.C * (1.0 - 1e-12)) return p_.C;
    return a;
  }

  bool step(std::size_t i, std::size_t j) {
    const double ai = alpha_[i], aj = alpha_[j];
    const double yi = y_[i], yj = y_[j];
    double L, H;
    if (yi != yj) {
      L = std::max(0.0, aj - ai);
      H = std::min(p_.C, p_.C + aj - ai);
    } else {
      L = std::max(0.0, ai + aj - p_.C);
      H = std::min(p_.C, ai + aj);
    }
    if (H - L < 1e-14) return false;
    // Duplicate points give a flat direction; a tiny curvature still moves to the better end.
    const double eta = std::min(2.0 * kern(i, j) - kern(i, i) - kern(j, j), -1e-12);
    const double aj_new = snap(std::clamp(aj - yj * (F_[i] - F_[j]) / eta, L, H));
    if (std::abs(aj_new - aj) < 1e-14) return false;
    const double ai_new = snap(ai + yi * yj * (aj - aj_new));
    const double dai = ai_new - ai, daj = aj_new - aj;
    for (std::size_t k = 0; k < n_; ++k) F_[k] += yi * dai * kern(i, k) + yj * daj * kern(j, k);
    alpha_[i] = ai_new;
    alpha_[j] = aj_new;
    return true;
  }

  const std::vector<Vector>& X_;
  const std::vector<int>& y_;
  SmoParams p_;
  std::size_t n_;
  std::vector<double> K_;
  std::vector<double> alpha_;
  std::vector<double> F_;  // bias-free error: sum_j alpha_j y_j k(j, i) - y_i
  double b_ = 0;
};

}  // namespace

BinarySvm smo_train(const std::vector<Vector>& X, const std::vector<int>& y,
                    const SmoParams& params, const RbfKernel& k) {
  if (X.size() != y.size()) throw Error(Errc::dimension, "feature and label counts differ");
  if (!(params.C > 0)) throw Error(Errc::invalid_argument, "C must be positive");
  if (!(k.sigma > 0)) throw Error(Errc::invalid_argument, "kernel sigma must be positive");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == -1) neg = true;
    else throw Error(Errc::invalid_argument, "binary labels must be +1 or -1");
  }
  if (!pos || !neg) throw Error(Errc::single_class, "both classes must be present");
  for (const auto& x : X) {
    if (x.size() != X.front().size()) throw Error(Errc::dimension, "ragged feature vectors");
  }

  SmoSolver solver(X, y, params, k);
  BinarySvm m;
  m.C = params.C;
  m.kernel = k;
  m.converged = solver.run(m.passes);
  m.b = solver.b();
  m.train_alphas = solver.alpha();
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (m.train_alphas[i] > 0.0) {
      m.support_vectors.push_back(X[i]);
      m.alphas.push_back(m.train_alphas[i]);
      m.labels.push_back(y[i]);
    }
  }
  return m;
}

double svm_decision(const BinarySvm& m, std::span<const double> x, std::size_t* kernel_evals) {
  double f = m.b;
  for (std::size_t i = 0; i < m.support_vectors.size(); ++i) {
    f += m.alphas[i] * m.labels[i] * rbf(m.support_vectors[i], x, m.kernel);
  }
  if (kernel_evals) *kernel_evals += m.support_vectors.size();
  return f;
}

int svm_predict(const BinarySvm& m, std::span<const double> x) {
  return svm_decision(m, x) >= 0.0 ? 1 : -1;
}

// ------------------------------------------------------------ standardizer

Standardizer Standardizer::fit(const std::vector<Vector>& X) {
  if (X.empty()) throw Error(Errc::empty_dataset, "cannot standardize an empty set");
  const std::size_t d = X.front().size();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (const auto& x : X) {
    if (x.size() != d) throw Error(Errc::dimension, "ragged feature vectors");
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += x[k];
  }
  for (auto& m : s.mean) m /= static_cast<double>(X.size());
  for (const auto& x : X) {
    for (std::size_t k = 0; k < d; ++k) s.scale[k] += (x[k] - s.mean[k]) * (x[k] - s.mean[k]);
  }
  for (auto& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(X.size()));
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

Vector Standardizer::apply(std::span<const double> x) const {
  if (x.size() != mean.size()) {
    throw Error(Errc::dimension, "expected " + std::to_string(mean.size()) + " features, got " +
                                     std::to_string(x.size()));
  }
  Vector out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / scale[k];
  return out;
}

std::vector<Vector> Standardizer::apply(const std::vector<Vector>& X) const {
  std::vector<Vector> out;
  out.reserve(X.size());
  for (const auto& x : X) out.push_back(apply(x));
  return out;
}

double median_sigma(const std::vector<Vector>& X, std::uint64_t seed, std::size_t subsample) {
  if (X.size() < 2) throw Error(Errc::empty_dataset, "median heuristic needs two points");
  std::vector<std::size_t> idx(X.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (idx.size() > subsample) {
    Rng rng = derive_rng(seed, {0x5167aULL});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(subsample);
  }
  std::vector<double> d;
  d.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      const auto& x = X[idx[a]];
      const auto& y = X[idx[b]];
      double s = 0;
      for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      d.push_back(std::sqrt(s));
    }
  }
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  const double med = *mid;
  return med > 0 ? med : 1.0;
}

// ---------------------------------------------------------------- one-vs-one

bool MulticlassSvm::all_converged() const {
  return std::all_of(machines.begin(), machines.end(), [](const auto& m) { return m.converged; });
}

MulticlassSvm ovo_train(const std::vector<Vector>& X_raw, const std::vector<int>& labels,
                        const MulticlassParams& params) {
  if (X_raw.empty()) throw Error(Errc::empty_dataset, "no training vectors");
  if (X_raw.size() != labels.size()) throw Error(Errc::dimension, "feature and label counts differ");
  const auto K = static_cast<int>(params.num_classes);
  std::vector<std::vector<std::size_t>> by_class(params.num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= K) {
      throw Error(Errc::label_out_of_range, "label " + std::to_string(labels[i]) +
                                                " outside [0," + std::to_string(K) + ")");
    }
    by_class[labels[i]].push_back(i);
  }
  for (int c = 0; c < K; ++c) {
    if (by_class[c].empty()) {
      throw Error(Errc::missing_class, "class " + std::to_string(c) + " absent from training data");
    }
  }

  MulticlassSvm m;
  m.num_classes = params.num_classes;
  m.C = params.smo.C;
  m.kkt_tol = params.smo.kkt_tol;
  m.standardized = params.standardize;
  std::vector<Vector> X;
  if (params.standardize) {
    m.standardizer = Standardizer::fit(X_raw);
    X = m.standardizer.apply(X_raw);
  } else {
    X = X_raw;
  }
  m.kernel.sigma = params.sigma > 0 ? params.sigma : median_sigma(X, params.smo.seed);

  std::vector<std::int64_t> pool_slot(X.size(), -1);
  for (int a = 0; a < K; ++a) {
    for (int c = a + 1; c < K; ++c) {
      std::vector<Vector> sub;
      std::vector<int> y;
      std::vector<std::size_t> origin;
      for (int cls : {a, c}) {
        for (auto i : by_class[cls]) {
          sub.push_back(X[i]);
          y.push_back(cls == a ? 1 : -1);
          origin.push_back(i);
        }
      }
      SmoParams sp = params.smo;
      sp.seed = derive_rng(params.smo.seed, {static_cast<std::uint64_t>(a),
                                             static_cast<std::uint64_t>(c)})();
      const BinarySvm bin = smo_train(sub, y, sp, m.kernel);
      MulticlassSvm::Machine mach;
      mach.positive = a;
      mach.negative = c;
      mach.b = bin.b;
      mach.converged = bin.converged;
      for (std::size_t i = 0; i < sub.size(); ++i) {
        if (bin.train_alphas[i] <= 0.0) continue;
        auto& slot = pool_slot[origin[i]];
        if (slot < 0) {
          slot = static_cast<std::int64_t>(m.pool.size());
          m.pool.push_back(X[origin[i]]);
        }
        mach.sv_index.push_back(static_cast<std::uint32_t>(slot));
        mach.coef.push_back(bin.train_alphas[i] * y[i]);
      }
      m.machines.push_back(std::move(mach));
    }
  }
  return m;
}

OvoVote ovo_vote(const MulticlassSvm& m, std::span<const double> x_raw) {
  const Vector x = m.standardized ? m.standardizer.apply(x_raw) : Vector(x_raw.begin(), x_raw.end());
  std::vector<double> k(m.pool.size());
  for (std::size_t i = 0; i < m.pool.size(); ++i) k[i] = rbf(m.pool[i], x, m.kernel);

  OvoVote v;
  v.votes.assign(m.num_classes, 0);
  v.strength.assign(m.num_classes, 0.0);
  for (const auto& mach : m.machines) {
    double f = mach.b;
    for (std::size_t s = 0; s < mach.sv_index.size(); ++s) f += mach.coef[s] * k[mach.sv_index[s]];
    const int winner = f >= 0.0 ? mach.positive : mach.negative;
    ++v.votes[winner];
    v.strength[winner] += std::abs(f);
  }
  int best = 0;
  for (int c = 1; c < static_cast<int>(m.num_classes); ++c) {
    if (v.votes[c] > v.votes[best] ||
        (v.votes[c] == v.votes[best] && v.strength[c] > v.strength[best])) {
      best = c;
    }
  }
  v.label = best;
  return v;
}

int ovo_predict(const MulticlassSvm& m, std::span<const double> x) { return ovo_vote(m, x).label; }

// ------------------------------------------------------------ persistence

void write_svm(ByteWriter& w, const MulticlassSvm& m) {
  nlohmann::json h;
  h["C"] = m.C;
  h["sigma"] = m.kernel.sigma;
  h["kkt_tol"] = m.kkt_tol;
  h["num_classes"] = m.num_classes;
  h["standardized"] = m.standardized;
  h["mean"] = m.standardizer.mean;
  h["scale"] = m.standardizer.scale;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& mach : m.machines) pairs.push_back({mach.positive, mach.negative});
  h["pairs"] = pairs;
  h["dim"] = m.pool.empty() ? 0 : m.pool.front().size();
  h["pool"] = m.pool.size();
  w.str(h.dump());
  for (const auto& v : m.pool) for (double x : v) w.f64(x);
  for (const auto& mach : m.machines) {
    w.u64(mach.sv_index.size());
    for (auto i : mach.sv_index) w.u32(i);
    for (double c : mach.coef) w.f64(c);
    w.f64(mach.b);
    w.u32(mach.converged ? 1 : 0);
  }
}

MulticlassSvm read_svm(ByteReader& r) {
  MulticlassSvm m;
  std::size_t dim = 0, pool = 0;
  nlohmann::json pairs;
  try {
    const auto h = nlohmann::json::parse(r.str());
    m.C = h.at("C").get<double>();
    m.kernel.sigma = h.at("sigma").get<double>();
    m.kkt_tol = h.at("kkt_tol").get<double>();
    m.num_classes = h.at("num_classes").get<std::size_t>();
    m.standardized = h.at("standardized").get<bool>();
    m.standardizer.mean = h.at("mean").get<Vector>();
    m.standardizer.scale = h.at("scale").get<Vector>();
    pairs = h.at("pairs");
    dim = h.at("dim").get<std::size_t>();
    pool = h.at("pool").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::corruption, std::string("bad SVM header: ") + e.what());
  }
  if (pool * dim * 8 > r.remaining()) throw Error(Errc::corruption, "SVM pool truncated");
  m.pool.assign(pool, Vector(dim));
  for (auto& v : m.pool) for (auto& x : v) x = r.f64();
  for (const auto& p : pairs) {
    MulticlassSvm::Machine mach;
    mach.positive = p.at(0).get<int>();
    mach.negative = p.at(1).get<int>();
    const auto n = r.u64();
    if (n > pool) throw Error(Errc::corruption, "SVM machine references too many vectors");
    mach.sv_index.resize(n);
    for (auto& i : mach.sv_index) {
      i = r.u32();
      if (i >= pool) throw Error(Errc::corruption, "SVM support index out of range");
    }
    mach.coef.resize(n);
    for (auto& c : mach.coef) c = r.f64();
    mach.b = r.f64();
    mach.converged = r.u32() != 0;
    m.machines.push_back(std::move(mach));
  }
  return m;
}

}  // namespace semg::svm

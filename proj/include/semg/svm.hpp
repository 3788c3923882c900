#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "semg/common.hpp"

namespace semg::svm {

using Vector = std::vector<double>;

struct RbfKernel {
  double sigma = 1.0;
};

// exp(-|x1 - x2|^2 / (2 sigma^2))
double rbf(std::span<const double> x1, std::span<const double> x2, const RbfKernel& k);

struct SmoParams {
  double C = 1.0;
  double kkt_tol = 1e-3;
  std::size_t max_passes = 200;  // budget of max_passes * n pair updates
  std::uint64_t seed = 42;  // drives the sigma subsample; pair selection is deterministic
};

struct BinarySvm {
  std::vector<Vector> support_vectors;
  std::vector<double> alphas;
  std::vector<int> labels;  // +1 / -1
  double b = 0;
  double C = 1.0;
  RbfKernel kernel;
  bool converged = false;
  std::size_t passes = 0;
  // Full dual vector over the training set, kept for diagnostics.
  std::vector<double> train_alphas;
};

BinarySvm smo_train(const std::vector<Vector>& X, const std::vector<int>& y,
                    const SmoParams& params, const RbfKernel& k);

// f(x) = sum alpha_i y_i k(sv_i, x) + b. `kernel_evals` is incremented once per kernel call.
double svm_decision(const BinarySvm& m, std::span<const double> x,
                    std::size_t* kernel_evals = nullptr);
int svm_predict(const BinarySvm& m, std::span<const double> x);

// Per-dimension z-score with training statistics; zero-variance dimensions pass through centred.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const std::vector<Vector>& X);
  Vector apply(std::span<const double> x) const;
  std::vector<Vector> apply(const std::vector<Vector>& X) const;
};

// Median pairwise Euclidean distance over a seeded subsample of at most `subsample` points.
double median_sigma(const std::vector<Vector>& X, std::uint64_t seed, std::size_t subsample = 500);

struct MulticlassParams {
  SmoParams smo;
  double sigma = 0;  // <= 0 selects the median heuristic
  bool standardize = true;
  std::size_t num_classes = 10;
};

// One-vs-one ensemble. Support vectors are pooled so each distinct training
// point is evaluated once per prediction.
struct MulticlassSvm {
  struct Machine {
    int positive = 0;  // class voted for when f >= 0
    int negative = 0;
    std::vector<std::uint32_t> sv_index;  // into pool
    std::vector<double> coef;             // alpha_i * y_i
    double b = 0;
    bool converged = false;
  };

  std::size_t num_classes = 0;
  RbfKernel kernel;
  double C = 1.0;
  double kkt_tol = 1e-3;
  Standardizer standardizer;
  bool standardized = false;
  std::vector<Vector> pool;
  std::vector<Machine> machines;

  bool all_converged() const;
};

MulticlassSvm ovo_train(const std::vector<Vector>& X, const std::vector<int>& labels,
                        const MulticlassParams& params);

struct OvoVote {
  int label = 0;
  std::vector<int> votes;
  std::vector<double> strength;  // summed |f| of the machines voting for each class
};

OvoVote ovo_vote(const MulticlassSvm& m, std::span<const double> x);
int ovo_predict(const MulticlassSvm& m, std::span<const double> x);

void write_svm(ByteWriter& w, const MulticlassSvm& m);
MulticlassSvm read_svm(ByteReader& r);

}  // namespace semg::svm

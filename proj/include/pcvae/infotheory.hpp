#pragma once

// Information measures for the training loss and its monitoring.
//
// Discrete quantities (entropy, mutual information, the decomposition) are
// exact plug-in values on a JointDistribution and are reported in bits.
// The Gaussian surrogate works on sample covariances of projected
// continuous data, is differentiable, and is reported in nats.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pcvae/autodiff.hpp"
#include "pcvae/numerics.hpp"

namespace pcvae::info {

inline constexpr double kNatsPerBit = std::numbers::ln2;

enum class Variable : unsigned { x1 = 0, x2 = 1, y = 2 };
using VarSet = std::vector<Variable>;

/// Probability mass over (X1, X2, Y), stored with y fastest:
/// index = (x1 * |X2| + x2) * |Y| + y.
class JointDistribution {
 public:
  static constexpr double kSumTolerance = 1e-12;

  /// Throws DistributionError on negative mass or a total that is not 1
  /// within `tolerance`.
  JointDistribution(std::array<std::size_t, 3> cards, std::vector<double> pmf, double tolerance = kSumTolerance);

  /// Normalizes non-negative counts.
  static JointDistribution from_counts(std::array<std::size_t, 3> cards, const std::vector<double>& counts);

  const std::array<std::size_t, 3>& cards() const { return cards_; }
  const std::vector<double>& pmf() const { return pmf_; }
  double p(std::size_t x1, std::size_t x2, std::size_t y) const { return pmf_[(x1 * cards_[1] + x2) * cards_[2] + y]; }

  /// Marginal pmf over `vars` (mixed radix in x1, x2, y order).
  std::vector<double> marginal(const VarSet& vars) const;

 private:
  std::array<std::size_t, 3> cards_;
  std::vector<double> pmf_;
};

// Classic reference joints over fair bits.
JointDistribution xor_joint();          // Y = X1 xor X2
JointDistribution copy_joint();         // X1 = X2 = Y
JointDistribution independent_joint();  // X1, X2, Y mutually independent

/// Text grammar: '#' comments and blank lines ignored; first record is
/// "|X1| |X2| |Y|"; each further record is "x1 x2 y p". Unlisted triples
/// have zero mass, repeated triples are an error, and the total must be 1
/// within `tolerance`.
JointDistribution parse_joint(const std::string& text, double tolerance = 1e-9);
JointDistribution load_joint(const std::string& path, double tolerance = 1e-9);

/// -sum p log2 p with 0 log 0 = 0.
double entropy(std::span<const double> pmf);

double mutual_info(const JointDistribution& joint, const VarSet& a, const VarSet& b);
/// Expectation over C of I(A;B | C=c); zero-probability c contribute zero.
double cond_mutual_info(const JointDistribution& joint, const VarSet& a, const VarSet& b, const VarSet& c);

/// All values in bits.
struct PidResult {
  double unique1 = 0;     // I(X1;Y|X2)
  double unique2 = 0;     // I(X2;Y|X1)
  double redundancy = 0;  // I(X1;X2)
  double synergy = 0;     // total - unique1 - unique2 - redundancy
  double total = 0;       // I(X1,X2;Y)
  /// I(X1,X2;Y) - I(X1;Y) - I(X2;Y); the normative interaction information.
  double interaction = 0;
  /// synergy - redundancy; disagrees with `interaction` on some joints
  /// (e.g. XOR) and is reported alongside it, never substituted for it.
  double interaction_synergy_minus_redundancy = 0;
};

PidResult pid_decompose(const JointDistribution& joint);

struct InteractionRoutes {
  double mi_difference;  // I(X1,X2;Y) - I(X2;Y) - I(X1;Y)
  double conditional;    // I(X1;Y|X2) - I(X1;Y)
};

InteractionRoutes interaction_routes(const JointDistribution& joint);
/// Interaction information in bits; both routes are evaluated and must agree
/// within 1e-9 (NumericError otherwise).
double interaction_info(const JointDistribution& joint);

/// Rows are samples: x1 [n, d1], x2 [n, d2], y [n, dy].
struct SampleBatch {
  Tensor x1;
  Tensor x2;
  Tensor y;

  std::size_t size() const { return x1.dim(0); }
  void validate() const;
};

using Summarizer = std::function<double(Variable, std::span<const double>)>;

/// Dot product with a fixed Gaussian direction per variable, drawn from
/// Rng(Rng::derive_seed(seed, variable index)).
Summarizer projection_summarizer(std::size_t dim_x1, std::size_t dim_x2, std::size_t dim_y, std::uint64_t seed);

/// Equal-width bins over each summary's observed range; a constant summary
/// lands entirely in bin 0.
JointDistribution quantize(const SampleBatch& samples, std::size_t bins, const Summarizer& summarizer);

/// 0.5 * (ln det S_A + ln det S_B - ln det S_AB) in nats.
double gaussian_mi(const Tensor& cov, const std::vector<std::size_t>& dims_a, const std::vector<std::size_t>& dims_b);
ad::Var gaussian_mi(ad::Graph& g, ad::Var cov, const std::vector<std::size_t>& dims_a,
                    const std::vector<std::size_t>& dims_b);

/// Unbiased sample covariance of the rows of `data` plus ridge * I.
Tensor sample_covariance(const Tensor& data, double ridge);

/// Frozen projections [d, dim] applied to each variable before covariance
/// estimation.
struct GaussianProjections {
  Tensor x1;
  Tensor x2;
  Tensor y;

  std::size_t dim() const { return x1.dim(0); }
};

/// Interaction information of the Gaussian surrogate in nats:
/// MI({x1,x2}; y) - MI(x2; y) - MI(x1; y) on the ridged sample covariance of
/// the stacked projections. Gradients flow through `y` only. Needs
/// n > 3d + 2 samples.
ad::Var interaction_info_gaussian(ad::Graph& g, const Tensor& x1, const Tensor& x2, ad::Var y,
                                  const GaussianProjections& proj, double ridge);
double interaction_info_gaussian(const SampleBatch& batch, const GaussianProjections& proj, double ridge);

}  // namespace pcvae::info

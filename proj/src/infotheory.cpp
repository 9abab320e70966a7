#include "pcvae/infotheory.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pcvae/kernels.hpp"

namespace pcvae::info {

namespace {

using Mask = unsigned;

Mask to_mask(const VarSet& vars) {
  Mask m = 0;
  for (auto v : vars) m |= 1u << static_cast<unsigned>(v);
  return m;
}

void require_groups(const VarSet& a, const VarSet& b, const VarSet* c = nullptr) {
  if (a.empty() || b.empty()) throw UsageError("variable groups must be non-empty");
  const Mask ma = to_mask(a), mb = to_mask(b), mc = c ? to_mask(*c) : 0;
  if ((ma & mb) || (ma & mc) || (mb & mc)) throw UsageError("variable groups must be disjoint");
}

// Mixed-radix index of (x1, x2, y) restricted to the variables in `mask`,
// plus the cardinality of that product space.
struct Indexer {
  Mask mask;
  std::array<std::size_t, 3> cards;

  std::size_t extent() const {
    std::size_t n = 1;
    for (unsigned v = 0; v < 3; ++v)
      if (mask & (1u << v)) n *= cards[v];
    return n;
  }
  std::size_t operator()(const std::array<std::size_t, 3>& x) const {
    std::size_t idx = 0;
    for (unsigned v = 0; v < 3; ++v)
      if (mask & (1u << v)) idx = idx * cards[v] + x[v];
    return idx;
  }
};

template <typename Fn>
void for_each_cell(const JointDistribution& joint, Fn&& fn) {
  const auto& c = joint.cards();
  for (std::size_t a = 0; a < c[0]; ++a)
    for (std::size_t b = 0; b < c[1]; ++b)
      for (std::size_t y = 0; y < c[2]; ++y) fn(std::array<std::size_t, 3>{a, b, y}, joint.p(a, b, y));
}

double plogp_ratio(double pab, double pa, double pb) {
  if (pab <= 0.0) return 0.0;
  return pab * std::log2(pab / (pa * pb));
}

}  // namespace

JointDistribution::JointDistribution(std::array<std::size_t, 3> cards, std::vector<double> pmf, double tolerance)
    : cards_(cards), pmf_(std::move(pmf)) {
  for (auto c : cards_) {
    if (c == 0) throw DistributionError("cardinalities must be positive");
  }
  if (pmf_.size() != cards_[0] * cards_[1] * cards_[2]) {
    throw DistributionError("pmf has " + std::to_string(pmf_.size()) + " entries, cardinalities need " +
                            std::to_string(cards_[0] * cards_[1] * cards_[2]));
  }
  double total = 0.0;
  for (double p : pmf_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DistributionError("pmf has negative or non-finite mass");
    total += p;
  }
  if (std::abs(total - 1.0) > tolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "pmf sums to " << total << ", not 1";
    throw DistributionError(os.str());
  }
}

JointDistribution JointDistribution::from_counts(std::array<std::size_t, 3> cards, const std::vector<double>& counts) {
  double total = 0.0;
  for (double c : counts) {
    if (!(c >= 0.0)) throw DistributionError("counts must be non-negative");
    total += c;
  }
  if (!(total > 0.0)) throw DistributionError("counts sum to zero");
  std::vector<double> pmf(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) pmf[i] = counts[i] / total;
  return JointDistribution(cards, std::move(pmf), 1e-9);
}

std::vector<double> JointDistribution::marginal(const VarSet& vars) const {
  const Indexer ix{to_mask(vars), cards_};
  std::vector<double> out(ix.extent(), 0.0);
  for_each_cell(*this, [&](const auto& x, double p) { out[ix(x)] += p; });
  return out;
}

JointDistribution xor_joint() {
  std::vector<double> pmf(8, 0.0);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) pmf[(a * 2 + b) * 2 + (a ^ b)] = 0.25;
  return JointDistribution({2, 2, 2}, std::move(pmf));
}

JointDistribution copy_joint() {
  std::vector<double> pmf(8, 0.0);
  pmf[0] = 0.5;
  pmf[7] = 0.5;
  return JointDistribution({2, 2, 2}, std::move(pmf));
}

JointDistribution independent_joint() { return JointDistribution({2, 2, 2}, std::vector<double>(8, 0.125)); }

JointDistribution parse_joint(const std::string& text, double tolerance) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_cards = false;
  std::array<std::size_t, 3> cards{};
  std::vector<double> pmf;
  std::vector<bool> seen;
  auto fail = [&](const std::string& why) {
    throw FormatError("joint file line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream rec(line);
    std::string first;
    if (!(rec >> first)) continue;
    rec.clear();
    rec.seekg(0);
    if (!have_cards) {
      long long c[3];
      if (!(rec >> c[0] >> c[1] >> c[2]) || c[0] <= 0 || c[1] <= 0 || c[2] <= 0) fail("expected three positive cardinalities");
      std::string extra;
      if (rec >> extra) fail("unexpected trailing field '" + extra + "'");
      cards = {static_cast<std::size_t>(c[0]), static_cast<std::size_t>(c[1]), static_cast<std::size_t>(c[2])};
      pmf.assign(cards[0] * cards[1] * cards[2], 0.0);
      seen.assign(pmf.size(), false);
      have_cards = true;
      continue;
    }
    long long x1, x2, y;
    double p;
    if (!(rec >> x1 >> x2 >> y >> p)) fail("expected 'x1 x2 y p'");
    std::string extra;
    if (rec >> extra) fail("unexpected trailing field '" + extra + "'");
    if (x1 < 0 || x2 < 0 || y < 0 || static_cast<std::size_t>(x1) >= cards[0] ||
        static_cast<std::size_t>(x2) >= cards[1] || static_cast<std::size_t>(y) >= cards[2]) {
      fail("value index out of range");
    }
    const std::size_t idx = (static_cast<std::size_t>(x1) * cards[1] + static_cast<std::size_t>(x2)) * cards[2] +
                            static_cast<std::size_t>(y);
    if (seen[idx]) fail("duplicate triple");
    seen[idx] = true;
    pmf[idx] = p;
  }
  if (!have_cards) throw FormatError("joint file has no cardinality line");
  return JointDistribution(cards, std::move(pmf), tolerance);
}

JointDistribution load_joint(const std::string& path, double tolerance) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open joint file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_joint(ss.str(), tolerance);
}

double entropy(std::span<const double> pmf) {
  double h = 0.0;
  for (double p : pmf) {
    if (p < 0.0) throw DistributionError("entropy of a pmf with negative mass");
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

double mutual_info(const JointDistribution& joint, const VarSet& a, const VarSet& b) {
  require_groups(a, b);
  const Indexer ia{to_mask(a), joint.cards()};
  const Indexer ib{to_mask(b), joint.cards()};
  const std::size_t na = ia.extent(), nb = ib.extent();
  std::vector<double> pab(na * nb, 0.0), pa(na, 0.0), pb(nb, 0.0);
  for_each_cell(joint, [&](const auto& x, double p) {
    const std::size_t i = ia(x), j = ib(x);
    pab[i * nb + j] += p;
    pa[i] += p;
    pb[j] += p;
  });
  double mi = 0.0;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) mi += plogp_ratio(pab[i * nb + j], pa[i], pb[j]);
  return mi;
}

double cond_mutual_info(const JointDistribution& joint, const VarSet& a, const VarSet& b, const VarSet& c) {
  require_groups(a, b, &c);
  if (c.empty()) return mutual_info(joint, a, b);
  const Indexer ia{to_mask(a), joint.cards()};
  const Indexer ib{to_mask(b), joint.cards()};
  const Indexer ic{to_mask(c), joint.cards()};
  const std::size_t na = ia.extent(), nb = ib.extent(), nc = ic.extent();
  std::vector<double> pabc(nc * na * nb, 0.0), pac(nc * na, 0.0), pbc(nc * nb, 0.0), pc(nc, 0.0);
  for_each_cell(joint, [&](const auto& x, double p) {
    const std::size_t i = ia(x), j = ib(x), k = ic(x);
    pabc[(k * na + i) * nb + j] += p;
    pac[k * na + i] += p;
    pbc[k * nb + j] += p;
    pc[k] += p;
  });
  double cmi = 0.0;
  for (std::size_t k = 0; k < nc; ++k) {
    if (pc[k] <= 0.0) continue;
    // p(c) * I(A;B | C=c) written with conditional probabilities.
    double inner = 0.0;
    for (std::size_t i = 0; i < na; ++i)
      for (std::size_t j = 0; j < nb; ++j) {
        const double p_ab_c = pabc[(k * na + i) * nb + j] / pc[k];
        inner += plogp_ratio(p_ab_c, pac[k * na + i] / pc[k], pbc[k * nb + j] / pc[k]);
      }
    cmi += pc[k] * inner;
  }
  return cmi;
}

PidResult pid_decompose(const JointDistribution& joint) {
  using enum Variable;
  PidResult r;
  r.unique1 = cond_mutual_info(joint, {x1}, {y}, {x2});
  r.unique2 = cond_mutual_info(joint, {x2}, {y}, {x1});
  r.redundancy = mutual_info(joint, {x1}, {x2});
  r.total = mutual_info(joint, {x1, x2}, {y});
  r.synergy = r.total - r.unique1 - r.unique2 - r.redundancy;
  r.interaction = r.total - mutual_info(joint, {x2}, {y}) - mutual_info(joint, {x1}, {y});
  r.interaction_synergy_minus_redundancy = r.synergy - r.redundancy;
  return r;
}

InteractionRoutes interaction_routes(const JointDistribution& joint) {
  using enum Variable;
  const double i1y = mutual_info(joint, {x1}, {y});
  return {mutual_info(joint, {x1, x2}, {y}) - mutual_info(joint, {x2}, {y}) - i1y,
          cond_mutual_info(joint, {x1}, {y}, {x2}) - i1y};
}

double interaction_info(const JointDistribution& joint) {
  const auto routes = interaction_routes(joint);
  if (std::abs(routes.mi_difference - routes.conditional) > 1e-9) {
    throw NumericError("interaction information routes disagree beyond 1e-9");
  }
  return routes.mi_difference;
}

// ---------------------------------------------------------------------------
// Sampled data

void SampleBatch::validate() const {
  if (x1.rank() != 2 || x2.rank() != 2 || y.rank() != 2) throw DimensionError("sample batch parts must be [n, dim]");
  if (x1.dim(0) != x2.dim(0) || x1.dim(0) != y.dim(0)) throw DimensionError("sample batch parts differ in size");
  if (x1.dim(0) < 2) throw DimensionError("sample batch needs at least 2 samples");
}

Summarizer projection_summarizer(std::size_t dim_x1, std::size_t dim_x2, std::size_t dim_y, std::uint64_t seed) {
  std::array<Tensor, 3> dirs;
  const std::array<std::size_t, 3> dims{dim_x1, dim_x2, dim_y};
  for (unsigned v = 0; v < 3; ++v) {
    Rng rng(Rng::derive_seed(seed, v));
    dirs[v] = gaussian_vector(dims[v], rng);
  }
  return [dirs = std::move(dirs)](Variable v, std::span<const double> x) {
    const Tensor& d = dirs[static_cast<unsigned>(v)];
    if (x.size() != d.size()) throw DimensionError("summarizer input has the wrong dimension");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += d[i] * x[i];
    return s;
  };
}

JointDistribution quantize(const SampleBatch& samples, std::size_t bins, const Summarizer& summarizer) {
  samples.validate();
  if (bins < 2) throw UsageError("quantize needs at least 2 bins");
  const std::size_t n = samples.size();
  std::array<std::vector<std::size_t>, 3> codes;
  const std::array<const Tensor*, 3> parts{&samples.x1, &samples.x2, &samples.y};
  for (unsigned v = 0; v < 3; ++v) {
    const Tensor& t = *parts[v];
    const std::size_t dim = t.dim(1);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = summarizer(static_cast<Variable>(v), t.data().subspan(i * dim, dim));
    const auto [lo_it, hi_it] = std::minmax_element(s.begin(), s.end());
    const double lo = *lo_it, hi = *hi_it;
    codes[v].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t b = 0;
      if (hi > lo) {
        b = static_cast<std::size_t>((s[i] - lo) / (hi - lo) * static_cast<double>(bins));
        b = std::min(b, bins - 1);
      }
      codes[v][i] = b;
    }
  }
  std::vector<double> counts(bins * bins * bins, 0.0);
  for (std::size_t i = 0; i < n; ++i) counts[(codes[0][i] * bins + codes[1][i]) * bins + codes[2][i]] += 1.0;
  return JointDistribution::from_counts({bins, bins, bins}, counts);
}

// ---------------------------------------------------------------------------
// Gaussian surrogate

namespace {

void require_dims(std::size_t n, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.empty() || b.empty()) throw UsageError("gaussian_mi needs non-empty index groups");
  for (auto i : a) {
    if (i >= n) throw DimensionError("gaussian_mi index out of range");
    if (std::find(b.begin(), b.end(), i) != b.end()) throw UsageError("gaussian_mi index groups overlap");
  }
  for (auto i : b) {
    if (i >= n) throw DimensionError("gaussian_mi index out of range");
  }
}

Tensor submatrix(const Tensor& a, const std::vector<std::size_t>& idx) {
  Tensor out({idx.size(), idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) out.at(i, j) = a.at(idx[i], idx[j]);
  return out;
}

std::vector<std::size_t> range(std::size_t from, std::size_t to) {
  std::vector<std::size_t> r;
  for (std::size_t i = from; i < to; ++i) r.push_back(i);
  return r;
}

std::vector<std::size_t> join(std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Tensor project_rows(const Tensor& x, const Tensor& proj) {
  if (x.rank() != 2 || proj.rank() != 2 || x.dim(1) != proj.dim(1)) {
    throw DimensionError("projection " + shape_str(proj.shape()) + " does not fit samples " + shape_str(x.shape()));
  }
  Tensor out({x.dim(0), proj.dim(0)});
  kernels::GemmArgs args{x.dim(0), proj.dim(0), x.dim(1), false, true};
  kernels::gemm(args, x.data(), proj.data(), out.data());
  return out;
}

}  // namespace

double gaussian_mi(const Tensor& cov, const std::vector<std::size_t>& dims_a, const std::vector<std::size_t>& dims_b) {
  if (cov.rank() != 2 || cov.dim(0) != cov.dim(1)) throw DimensionError("gaussian_mi needs a square covariance");
  require_dims(cov.dim(0), dims_a, dims_b);
  return 0.5 * (ad::linalg::logdet_spd(submatrix(cov, dims_a)) + ad::linalg::logdet_spd(submatrix(cov, dims_b)) -
                ad::linalg::logdet_spd(submatrix(cov, join(dims_a, dims_b))));
}

ad::Var gaussian_mi(ad::Graph& g, ad::Var cov, const std::vector<std::size_t>& dims_a,
                    const std::vector<std::size_t>& dims_b) {
  const Tensor& c = g.value(cov);
  if (c.rank() != 2 || c.dim(0) != c.dim(1)) throw DimensionError("gaussian_mi needs a square covariance");
  require_dims(c.dim(0), dims_a, dims_b);
  ad::Var la = ad::logdet_spd(g, ad::principal_submatrix(g, cov, dims_a));
  ad::Var lb = ad::logdet_spd(g, ad::principal_submatrix(g, cov, dims_b));
  ad::Var lab = ad::logdet_spd(g, ad::principal_submatrix(g, cov, join(dims_a, dims_b)));
  return ad::scale(g, ad::sub(g, ad::add(g, la, lb), lab), 0.5);
}

Tensor sample_covariance(const Tensor& data, double ridge) {
  if (data.rank() != 2 || data.dim(0) < 2) throw DimensionError("sample_covariance needs [n >= 2, dim] data");
  ad::Graph g;
  ad::Var c = ad::center_cols(g, g.constant(data));
  ad::Var cov = ad::scale(g, ad::matmul(g, ad::transpose(g, c), c), 1.0 / static_cast<double>(data.dim(0) - 1));
  return g.value(ad::add_diag(g, cov, ridge));
}

ad::Var interaction_info_gaussian(ad::Graph& g, const Tensor& x1, const Tensor& x2, ad::Var y,
                                  const GaussianProjections& proj, double ridge) {
  const std::size_t d = proj.dim();
  if (proj.x2.dim(0) != d || proj.y.dim(0) != d) throw DimensionError("projections must share their output dim");
  const Tensor& yv = g.value(y);
  if (yv.rank() != 2 || x1.rank() != 2 || x2.rank() != 2 || x1.dim(0) != yv.dim(0) || x2.dim(0) != yv.dim(0)) {
    throw DimensionError("interaction_info_gaussian: x1 " + shape_str(x1.shape()) + ", x2 " + shape_str(x2.shape()) +
                         ", y " + shape_str(yv.shape()));
  }
  const std::size_t n = yv.dim(0);
  if (n <= 3 * d + 2) {
    throw NumericError("interaction_info_gaussian needs more than " + std::to_string(3 * d + 2) + " samples, got " +
                       std::to_string(n));
  }
  if (!(ridge >= 0.0)) throw NumericError("ridge must be non-negative");

  ad::Var p1 = g.constant(project_rows(x1, proj.x1));
  ad::Var p2 = g.constant(project_rows(x2, proj.x2));
  ad::Var py = ad::matmul(g, y, ad::transpose(g, g.constant(proj.y)));
  ad::Var stacked = ad::center_cols(g, ad::concat_cols(g, {p1, p2, py}));
  ad::Var cov = ad::scale(g, ad::matmul(g, ad::transpose(g, stacked), stacked), 1.0 / static_cast<double>(n - 1));
  cov = ad::add_diag(g, cov, ridge);

  const auto i1 = range(0, d), i2 = range(d, 2 * d), iy = range(2 * d, 3 * d);
  ad::Var joint = gaussian_mi(g, cov, join(i1, i2), iy);
  ad::Var m2 = gaussian_mi(g, cov, i2, iy);
  ad::Var m1 = gaussian_mi(g, cov, i1, iy);
  return ad::sub(g, ad::sub(g, joint, m2), m1);
}

double interaction_info_gaussian(const SampleBatch& batch, const GaussianProjections& proj, double ridge) {
  batch.validate();
  ad::Graph g;
  ad::Var ii = interaction_info_gaussian(g, batch.x1, batch.x2, g.constant(batch.y), proj, ridge);
  return g.value(ii)[0];
}

}  // namespace pcvae::info

#pragma once

// Independent reference computations for the unit and acceptance tests.
// Nothing here calls into the library's numerical code, so agreement is a
// genuine cross-check rather than a tautology.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Joint pmf over (x1, x2, y) with y fastest, as nested arrays for clarity.
struct Joint3 {
  std::size_t a, b, c;
  std::vector<double> p;  // (i * b + j) * c + k

  double at(std::size_t i, std::size_t j, std::size_t k) const { return p[(i * b + j) * c + k]; }
};

inline double plogp_ratio(double pxy, double px, double py) {
  return pxy > 0 ? pxy * std::log2(pxy / (px * py)) : 0.0;
}

// I(X1;Y) by explicit marginalisation.
inline double mi_x1_y(const Joint3& J) {
  std::vector<double> pxy(J.a * J.c, 0.0), px(J.a, 0.0), py(J.c, 0.0);
  for (std::size_t i = 0; i < J.a; ++i)
    for (std::size_t j = 0; j < J.b; ++j)
      for (std::size_t k = 0; k < J.c; ++k) {
        pxy[i * J.c + k] += J.at(i, j, k);
        px[i] += J.at(i, j, k);
        py[k] += J.at(i, j, k);
      }
  double s = 0;
  for (std::size_t i = 0; i < J.a; ++i)
    for (std::size_t k = 0; k < J.c; ++k) s += plogp_ratio(pxy[i * J.c + k], px[i], py[k]);
  return s;
}

inline double mi_x2_y(const Joint3& J) {
  std::vector<double> pxy(J.b * J.c, 0.0), px(J.b, 0.0), py(J.c, 0.0);
  for (std::size_t i = 0; i < J.a; ++i)
    for (std::size_t j = 0; j < J.b; ++j)
      for (std::size_t k = 0; k < J.c; ++k) {
        pxy[j * J.c + k] += J.at(i, j, k);
        px[j] += J.at(i, j, k);
        py[k] += J.at(i, j, k);
      }
  double s = 0;
  for (std::size_t j = 0; j < J.b; ++j)
    for (std::size_t k = 0; k < J.c; ++k) s += plogp_ratio(pxy[j * J.c + k], px[j], py[k]);
  return s;
}

inline double mi_x1_x2(const Joint3& J) {
  std::vector<double> pxy(J.a * J.b, 0.0), px(J.a, 0.0), py(J.b, 0.0);
  for (std::size_t i = 0; i < J.a; ++i)
    for (std::size_t j = 0; j < J.b; ++j)
      for (std::size_t k = 0; k < J.c; ++k) {
        pxy[i * J.b + j] += J.at(i, j, k);
        px[i] += J.at(i, j, k);
        py[j] += J.at(i, j, k);
      }
  double s = 0;
  for (std::size_t i = 0; i < J.a; ++i)
    for (std::size_t j = 0; j < J.b; ++j) s += plogp_ratio(pxy[i * J.b + j], px[i], py[j]);
  return s;
}

// I(X1,X2;Y), treating the pair as one variable.
inline double mi_pair_y(const Joint3& J) {
  std::vector<double> pxx(J.a * J.b, 0.0), py(J.c, 0.0);
  for (std::size_t i = 0; i < J.a; ++i)
    for (std::size_t j = 0; j < J.b; ++j)
      for (std::size_t k = 0; k < J.c; ++k) {
        pxx[i * J.b + j] += J.at(i, j, k);
        py[k] += J.at(i, j, k);
      }
  double s = 0;
  for (std::size_t i = 0; i < J.a; ++i)
    for (std::size_t j = 0; j < J.b; ++j)
      for (std::size_t k = 0; k < J.c; ++k) s += plogp_ratio(J.at(i, j, k), pxx[i * J.b + j], py[k]);
  return s;
}

// I(X1;Y|X2) = sum p(x1,x2,y) log p(x1,y|x2) / (p(x1|x2) p(y|x2)).
inline double cmi_x1_y_given_x2(const Joint3& J) {
  double s = 0;
  for (std::size_t j = 0; j < J.b; ++j) {
    double pj = 0;
    std::vector<double> pi(J.a, 0.0), pk(J.c, 0.0);
    for (std::size_t i = 0; i < J.a; ++i)
      for (std::size_t k = 0; k < J.c; ++k) {
        pj += J.at(i, j, k);
        pi[i] += J.at(i, j, k);
        pk[k] += J.at(i, j, k);
      }
    if (pj <= 0) continue;
    for (std::size_t i = 0; i < J.a; ++i)
      for (std::size_t k = 0; k < J.c; ++k) {
        const double p = J.at(i, j, k);
        if (p > 0) s += p * std::log2(p * pj / (pi[i] * pk[k]));
      }
  }
  return s;
}

inline double cmi_x2_y_given_x1(const Joint3& J) {
  Joint3 swapped{J.b, J.a, J.c, std::vector<double>(J.p.size())};
  for (std::size_t i = 0; i < J.a; ++i)
    for (std::size_t j = 0; j < J.b; ++j)
      for (std::size_t k = 0; k < J.c; ++k) swapped.p[(j * J.a + i) * J.c + k] = J.at(i, j, k);
  return cmi_x1_y_given_x2(swapped);
}

inline Joint3 random_joint(std::mt19937_64& gen, std::size_t max_card = 4, bool sparse = false) {
  std::uniform_int_distribution<std::size_t> card(1, max_card);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Joint3 J{card(gen), card(gen), card(gen), {}};
  J.p.resize(J.a * J.b * J.c);
  double total = 0;
  for (double& v : J.p) {
    v = (sparse && u(gen) < 0.3) ? 0.0 : u(gen);
    total += v;
  }
  if (total == 0) {
    J.p[0] = 1;
    total = 1;
  }
  for (double& v : J.p) v /= total;
  return J;
}

// Bivariate normal MI by 2-D composite Simpson quadrature of
// p log(p / (px py)) over [-R, R]^2, in nats.
inline double bivariate_normal_mi_quadrature(double rho, int n = 800, double R = 9.0) {
  const double h = 2 * R / n;
  const double det = 1 - rho * rho;
  const double norm = 1.0 / (2 * std::numbers::pi * std::sqrt(det));
  auto w = [n](int i) { return (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
  double s = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = -R + i * h;
    for (int j = 0; j <= n; ++j) {
      const double y = -R + j * h;
      const double q = (x * x - 2 * rho * x * y + y * y) / det;
      const double p = norm * std::exp(-0.5 * q);
      const double px = std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi);
      const double py = std::exp(-0.5 * y * y) / std::sqrt(2 * std::numbers::pi);
      if (p > 0) s += w(i) * w(j) * p * std::log(p / (px * py));
    }
  }
  return s * h * h / 9.0;
}

// Direct scatter form of a single-batch transposed convolution.
// x [ci, ih, iw], w [ci, co, k, k], out [co, oh, ow].
inline std::vector<double> conv_transpose_scatter(const std::vector<double>& x, const std::vector<double>& w,
                                                  const std::vector<double>& bias, std::size_t ci, std::size_t co,
                                                  std::size_t ih, std::size_t iw, std::size_t k, std::size_t stride,
                                                  std::size_t pad, std::size_t oh, std::size_t ow) {
  std::vector<double> out(co * oh * ow, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t p = 0; p < oh * ow; ++p) out[o * oh * ow + p] = bias[o];
  for (std::size_t c = 0; c < ci; ++c)
    for (std::size_t y = 0; y < ih; ++y)
      for (std::size_t x0 = 0; x0 < iw; ++x0)
        for (std::size_t o = 0; o < co; ++o)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long oy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
              const long ox = static_cast<long>(x0 * stride + kx) - static_cast<long>(pad);
              if (oy < 0 || ox < 0 || oy >= static_cast<long>(oh) || ox >= static_cast<long>(ow)) continue;
              out[(o * oh + oy) * ow + ox] +=
                  x[(c * ih + y) * iw + x0] * w[((c * co + o) * k + ky) * k + kx];
            }
  return out;
}

inline double two_pass_population_std(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pcvae_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle

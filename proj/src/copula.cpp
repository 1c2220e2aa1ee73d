#include "vdc/copula.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vdc {

namespace {

// Gumbel copula G(w) = exp(-(sum (-log w_i)^nu)^(1/nu)).
double gumbel(std::span<const double> w, double nu) {
  double s = 0.0;
  for (double x : w) {
    if (x <= 0.0) return 0.0;
    if (x < 1.0) s += std::pow(-std::log(x), nu);
  }
  return std::exp(-std::pow(s, 1.0 / nu));
}

double survival_gumbel(std::span<const double> u, double nu) {
  const std::size_t m = u.size();
  if (m == 2) {
    const double w[2] = {1.0 - u[0], 1.0 - u[1]};
    return u[0] + u[1] - 1.0 + gumbel(w, nu);
  }
  // P(U_i <= u_i for all i) with U = 1 - V and V Gumbel distributed.
  double total = 0.0;
  std::vector<double> w(m);
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    int bits = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const bool in = (mask >> i) & 1u;
      bits += in;
      w[i] = in ? 1.0 - u[i] : 1.0;
    }
    total += (bits % 2 ? -1.0 : 1.0) * gumbel(w, nu);
  }
  return total;
}

double ali_mikhail_haq(std::span<const double> u, double theta) {
  if (u.size() == 2)
    return u[0] * u[1] / (1.0 - theta * (1.0 - u[0]) * (1.0 - u[1]));
  double prod = 1.0;
  for (double x : u) prod *= (1.0 - theta * (1.0 - x)) / x;
  return (1.0 - theta) / (prod - theta);
}

double clayton(std::span<const double> u, double theta) {
  double s = 1.0;
  for (double x : u) s += std::pow(x, -theta) - 1.0;
  return std::pow(s, -1.0 / theta);
}

}  // namespace

void CopulaParam::validate() const {
  switch (family) {
    case CopulaFamily::Independence: return;
    case CopulaFamily::SurvivalGumbel:
      if (!(std::isfinite(value) && value >= 1.0))
        throw std::invalid_argument("survival Gumbel parameter must be >= 1");
      return;
    case CopulaFamily::AliMikhailHaq:
      if (!(value >= -1.0 && value < 1.0))
        throw std::invalid_argument("AMH parameter must lie in [-1, 1)");
      return;
    case CopulaFamily::Clayton:
      if (!(std::isfinite(value) && value > 0.0))
        throw std::invalid_argument("Clayton parameter must be > 0");
      return;
  }
}

double copula_cdf(const CopulaParam& param, double u, double v) {
  const double args[2] = {u, v};
  return copula_cdf(param, args);
}

double copula_cdf(const CopulaParam& param, std::span<const double> u) {
  param.validate();
  if (u.empty()) throw std::invalid_argument("copula needs at least one argument");
  // Drop arguments equal to one (uniform margins); any zero grounds the value.
  std::vector<double> args;
  args.reserve(u.size());
  for (double x : u) {
    if (!(x >= 0.0 && x <= 1.0))
      throw std::invalid_argument("copula argument outside [0, 1]: " + std::to_string(x));
    if (x == 0.0) return 0.0;
    if (x < 1.0) args.push_back(x);
  }
  if (args.empty()) return 1.0;
  if (args.size() == 1) return args[0];

  double c = 0.0;
  switch (param.family) {
    case CopulaFamily::Independence:
      c = 1.0;
      for (double x : args) c *= x;
      break;
    case CopulaFamily::SurvivalGumbel: c = survival_gumbel(args, param.value); break;
    case CopulaFamily::AliMikhailHaq: c = ali_mikhail_haq(args, param.value); break;
    case CopulaFamily::Clayton: c = clayton(args, param.value); break;
  }
  return std::clamp(c, 0.0, 1.0);
}

std::size_t PmfTable::index(std::span<const int> y) const {
  if (y.size() != sizes.size()) throw std::invalid_argument("observation has wrong number of margins");
  std::size_t idx = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (y[k] < 0 || y[k] >= sizes[k])
      throw std::out_of_range("value " + std::to_string(y[k]) + " outside scale of margin " +
                              std::to_string(k));
    idx = idx * sizes[k] + y[k];
  }
  return idx;
}

std::vector<double> PmfTable::marginal(int margin) const {
  std::vector<double> out(sizes.at(margin), 0.0);
  std::size_t inner = 1;
  for (std::size_t k = margin + 1; k < sizes.size(); ++k) inner *= sizes[k];
  for (std::size_t i = 0; i < values.size(); ++i) out[(i / inner) % sizes[margin]] += values[i];
  return out;
}

PmfTable joint_pmf(const CopulaParam& param, const std::vector<std::vector<double>>& marginal_cdfs) {
  param.validate();
  const std::size_t m = marginal_cdfs.size();
  if (m == 0) throw std::invalid_argument("joint_pmf needs at least one margin");
  for (std::size_t k = 0; k < m; ++k) {
    const auto& F = marginal_cdfs[k];
    if (F.empty()) throw std::invalid_argument("empty CDF table for margin " + std::to_string(k));
    double prev = 0.0;
    for (double x : F) {
      if (!(x >= prev - 1e-15) || x > 1.0 + 1e-9)
        throw std::invalid_argument("CDF table of margin " + std::to_string(k) + " is not nondecreasing in [0, 1]");
      prev = x;
    }
    if (std::abs(F.back() - 1.0) > 1e-9)
      throw std::invalid_argument("CDF table of margin " + std::to_string(k) + " does not end at 1");
  }

  PmfTable table;
  table.sizes.resize(m);
  std::size_t cells = 1;
  for (std::size_t k = 0; k < m; ++k) {
    table.sizes[k] = static_cast<int>(marginal_cdfs[k].size());
    cells *= table.sizes[k];
  }
  table.values.assign(cells, 0.0);

  auto cdf_at = [&](std::size_t k, int y) {
    if (y < 0) return 0.0;
    return std::min(1.0, std::max(0.0, marginal_cdfs[k][y]));
  };

  std::vector<int> y(m, 0);
  if (param.family == CopulaFamily::Independence) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      double prod = 1.0;
      for (std::size_t k = 0; k < m; ++k) prod *= cdf_at(k, y[k]) - cdf_at(k, y[k] - 1);
      table.values[cell] = prod;
      for (int k = static_cast<int>(m) - 1; k >= 0 && ++y[k] == table.sizes[k]; --k) y[k] = 0;
    }
    return table;
  }

  // Joint CDF on the extended lattice {-1..L_k}, each point evaluated once.
  std::vector<int> ext(m);
  std::size_t ext_cells = 1;
  for (std::size_t k = 0; k < m; ++k) {
    ext[k] = table.sizes[k] + 1;
    ext_cells *= ext[k];
  }
  std::vector<double> joint_cdf(ext_cells);
  std::vector<double> args(m);
  std::vector<int> e(m, 0);
  for (std::size_t cell = 0; cell < ext_cells; ++cell) {
    for (std::size_t k = 0; k < m; ++k) args[k] = cdf_at(k, e[k] - 1);
    joint_cdf[cell] = copula_cdf(param, args);
    for (int k = static_cast<int>(m) - 1; k >= 0 && ++e[k] == ext[k]; --k) e[k] = 0;
  }

  bool clamped = false;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    double p = 0.0;
    for (unsigned mask = 0; mask < (1u << m); ++mask) {
      std::size_t idx = 0;
      int bits = 0;
      for (std::size_t k = 0; k < m; ++k) {
        const int shift = (mask >> k) & 1u;
        bits += shift;
        idx = idx * ext[k] + (y[k] + 1 - shift);
      }
      p += (bits % 2 ? -1.0 : 1.0) * joint_cdf[idx];
    }
    if (p < 0.0) {
      if (p < -1e-12)
        throw std::domain_error("copula produced a negative cell probability " + std::to_string(p));
      p = 0.0;
      clamped = true;
    }
    table.values[cell] = p;
    for (int k = static_cast<int>(m) - 1; k >= 0 && ++y[k] == table.sizes[k]; --k) y[k] = 0;
  }
  if (clamped) {
    double total = 0.0;
    for (double v : table.values) total += v;
    for (double& v : table.values) v /= total;
  }
  return table;
}

PmfTable joint_pmf(const CopulaParam& param, const std::vector<std::vector<double>>& marginal_cdfs,
                   const std::vector<std::vector<double>>& marginal_survivals) {
  PmfTable table = joint_pmf(param, marginal_cdfs);
  if (param.family != CopulaFamily::SurvivalGumbel || marginal_cdfs.size() != 2) return table;
  if (marginal_survivals.size() != 2) throw std::invalid_argument("need one survival table per margin");
  const auto& F1 = marginal_cdfs[0];
  const auto& F2 = marginal_cdfs[1];
  const auto& S1 = marginal_survivals[0];
  const auto& S2 = marginal_survivals[1];
  if (S1.size() != F1.size() || S2.size() != F2.size())
    throw std::invalid_argument("survival and CDF tables differ in length");

  // C(u, v) = u + v - 1 + G(1 - u, 1 - v) with G the Gumbel copula, so over a
  // cell the linear terms cancel and pmf(a, b) = sum of +-G(S1, S2) at the
  // corners, with S(-1) = 1. Each term is bounded by min(S1(a-1), S2(b-1)),
  // against min(F1(a), F2(b)) for the CDF form; use whichever is smaller.
  auto surv = [](const std::vector<double>& S, int y) { return y < 0 ? 1.0 : std::clamp(S[y], 0.0, 1.0); };
  const double nu = param.value;
  bool changed = false;
  for (int a = 0; a < table.sizes[0]; ++a) {
    for (int b = 0; b < table.sizes[1]; ++b) {
      const double lower_bound = std::min(F1[a], F2[b]);
      const double upper_bound = std::min(surv(S1, a - 1), surv(S2, b - 1));
      if (upper_bound >= lower_bound) continue;
      auto g = [&](int i, int j) {
        const double w[2] = {surv(S1, i), surv(S2, j)};
        return gumbel(w, nu);
      };
      double p = g(a - 1, b - 1) - g(a, b - 1) - g(a - 1, b) + g(a, b);
      if (p < 0.0) {
        if (p < -1e-12)
          throw std::domain_error("copula produced a negative cell probability " + std::to_string(p));
        p = 0.0;
      }
      table.values[static_cast<std::size_t>(a) * table.sizes[1] + b] = p;
      changed = true;
    }
  }
  if (changed) {
    double total = 0.0;
    for (double v : table.values) total += v;
    for (double& v : table.values) v /= total;
  }
  return table;
}

}  // namespace vdc

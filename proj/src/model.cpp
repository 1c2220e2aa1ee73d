#include "vdc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace vdc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double normal_log_density(double x, double sd) {
  const double z = x / sd;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

double log_sigmoid(double v) {
  return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

std::string to_string(CopulaFamily family) {
  switch (family) {
    case CopulaFamily::Independence: return "Independence";
    case CopulaFamily::SurvivalGumbel: return "SurvivalGumbel";
    case CopulaFamily::AliMikhailHaq: return "AliMikhailHaq";
    case CopulaFamily::Clayton: return "Clayton";
  }
  return "Independence";
}

CopulaFamily parse_copula_family(std::string_view name) {
  const std::string n = lower(name);
  if (n == "independence" || n == "none") return CopulaFamily::Independence;
  if (n == "survivalgumbel" || n == "gumbel") return CopulaFamily::SurvivalGumbel;
  if (n == "alimikhailhaq" || n == "amh") return CopulaFamily::AliMikhailHaq;
  if (n == "clayton") return CopulaFamily::Clayton;
  throw std::invalid_argument("unknown copula family '" + std::string(name) + "'");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::Hmm: return "hmm";
    case Variant::Hmmx: return "hmmx";
    case Variant::VdHmm: return "vd-hmm";
    case Variant::VdcHmmx: return "vdc-hmmx";
  }
  return "vdc-hmmx";
}

Variant parse_variant(std::string_view name) {
  const std::string n = lower(name);
  if (n == "hmm") return Variant::Hmm;
  if (n == "hmmx") return Variant::Hmmx;
  if (n == "vd-hmm" || n == "vdc-hmm") return Variant::VdHmm;
  if (n == "vdc-hmmx") return Variant::VdcHmmx;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  require(num_states >= 1, "num_states must be >= 1");
  require(num_margins >= 1, "num_margins must be >= 1");
  require(static_cast<int>(scale_max.size()) == num_margins,
          "scale_max must have one entry per margin");
  for (int k = 0; k < num_margins; ++k)
    require(scale_max[k] >= 1, "scale_max[" + std::to_string(k) + "] must be >= 1");
  require(duration_cap >= 1, "duration_cap must be >= 1");
  require(covariate_dim >= 0, "covariate_dim must be >= 0");
}

Variant ModelConfig::variant() const {
  if (use_duration) return use_covariates ? Variant::VdcHmmx : Variant::VdHmm;
  return use_covariates ? Variant::Hmmx : Variant::Hmm;
}

void ModelConfig::apply_variant(Variant v) {
  use_duration = (v == Variant::VdHmm || v == Variant::VdcHmmx);
  use_covariates = (v == Variant::Hmmx || v == Variant::VdcHmmx);
}

ParameterSet ParameterSet::defaults(const ModelConfig& config) {
  config.validate();
  const int S = config.num_states;
  ParameterSet p;
  p.num_states = S;
  p.num_margins = config.num_margins;
  p.covariate_dim = config.covariate_dim;
  p.initial_dist.assign(S, 1.0 / S);
  p.intercepts.assign(S * S, 0.0);
  p.duration_coefs.assign(S * S, 0.0);
  p.covariate_coefs.assign(S * S * config.covariate_dim, 0.0);
  p.emission_rates.resize(S * config.num_margins);
  for (int s = 0; s < S; ++s)
    for (int k = 0; k < config.num_margins; ++k) p.rate(s, k) = s + 1.0;
  switch (config.copula_family) {
    case CopulaFamily::Independence: break;
    case CopulaFamily::SurvivalGumbel: p.copula_params.assign(S, 1.5); break;
    case CopulaFamily::AliMikhailHaq: p.copula_params.assign(S, 0.3); break;
    case CopulaFamily::Clayton: p.copula_params.assign(S, 1.0); break;
  }
  return p;
}

void ParameterSet::validate(const ModelConfig& config) const {
  config.validate();
  const int S = config.num_states;
  const int m = config.num_margins;
  const int p = config.covariate_dim;
  require(num_states == S && num_margins == m && covariate_dim == p,
          "parameter dimensions do not match the model config");
  require(static_cast<int>(initial_dist.size()) == S, "initial_dist has wrong size");
  require(static_cast<int>(intercepts.size()) == S * S, "intercepts has wrong size");
  require(static_cast<int>(duration_coefs.size()) == S * S, "duration_coefs has wrong size");
  require(static_cast<int>(covariate_coefs.size()) == S * S * p,
          "covariate_coefs has wrong size");
  require(static_cast<int>(emission_rates.size()) == S * m, "emission_rates has wrong size");

  double total = 0.0;
  for (double w : initial_dist) {
    require(std::isfinite(w) && w >= 0.0, "initial_dist entries must be >= 0");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-9, "initial_dist must sum to 1");

  for (int j = 0; j < S; ++j) {
    require(intercept(j, j) == 0.0, "intercepts diagonal must be 0");
    require(duration_coef(j, j) == 0.0, "duration_coefs diagonal must be 0");
    for (double b : covariate_coef(j, j)) require(b == 0.0, "covariate_coefs diagonal must be 0");
  }
  for (double x : intercepts) require(std::isfinite(x), "intercepts must be finite");
  for (double x : duration_coefs) {
    require(std::isfinite(x), "duration_coefs must be finite");
    if (!config.use_duration) require(x == 0.0, "duration_coefs must be 0 without duration");
  }
  for (double x : covariate_coefs) {
    require(std::isfinite(x), "covariate_coefs must be finite");
    if (!config.use_covariates) require(x == 0.0, "covariate_coefs must be 0 without covariates");
  }
  for (double r : emission_rates)
    require(std::isfinite(r) && r > 0.0, "emission_rates must be > 0");
  for (int s = 1; s < S; ++s)
    require(rate(s - 1, 0) < rate(s, 0),
            "emission_rates of the first margin must be strictly increasing");

  if (!config.has_copula_params()) {
    require(copula_params.empty(), "copula_params must be empty for the independence copula");
    return;
  }
  require(static_cast<int>(copula_params.size()) == S, "copula_params has wrong size");
  for (double c : copula_params) {
    switch (config.copula_family) {
      case CopulaFamily::SurvivalGumbel:
        require(std::isfinite(c) && c >= 1.0, "survival Gumbel parameter must be >= 1");
        break;
      case CopulaFamily::AliMikhailHaq:
        require(c >= -1.0 && c < 1.0, "AMH parameter must lie in [-1, 1)");
        break;
      case CopulaFamily::Clayton:
        require(std::isfinite(c) && c > 0.0, "Clayton parameter must be > 0");
        break;
      case CopulaFamily::Independence: break;
    }
  }
}

CovariateBasis CovariateBasis::identity(int p) {
  CovariateBasis b;
  b.center.assign(p, 0.0);
  b.r.assign(p * p, 0.0);
  b.r_inverse.assign(p * p, 0.0);
  for (int i = 0; i < p; ++i) b.r[i * p + i] = b.r_inverse[i * p + i] = 1.0;
  return b;
}

double log_prior(const ParameterSet& params, const ModelConfig& config,
                 const PriorSpec& priors, const CovariateBasis* basis) {
  const int S = config.num_states;
  const int p = config.active_covariates();
  double lp = 0.0;

  const double a = priors.dirichlet_concentration;
  lp += std::lgamma(a * S) - S * std::lgamma(a);
  if (a != 1.0) {
    for (double w : params.initial_dist) {
      if (w <= 0.0) return kNegInf;
      lp += (a - 1.0) * std::log(w);
    }
  }

  const bool rebased = basis != nullptr && p > 0;
  if (rebased && basis->dim() != p)
    throw std::invalid_argument("covariate basis dimension does not match covariate_dim");

  std::vector<double> rotated(p);
  for (int j = 0; j < S; ++j) {
    for (int l = 0; l < S; ++l) {
      if (l == j) continue;
      double delta = params.intercept(j, l);
      auto beta = params.covariate_coef(j, l);
      if (rebased) {
        for (int c = 0; c < p; ++c) delta += basis->center[c] * beta[c];
        for (int r = 0; r < p; ++r) {
          double acc = 0.0;
          for (int c = r; c < p; ++c) acc += basis->r[r * p + c] * beta[c];
          rotated[r] = acc;
        }
      } else {
        for (int c = 0; c < p; ++c) rotated[c] = beta[c];
      }
      lp += normal_log_density(delta, priors.intercept_sd);
      if (config.use_duration)
        lp += normal_log_density(params.duration_coef(j, l), priors.duration_coef_sd);
      for (int c = 0; c < p; ++c) lp += normal_log_density(rotated[c], priors.covariate_coef_sd);
    }
  }

  for (double r : params.emission_rates) {
    if (r <= 0.0) return kNegInf;
    lp += std::numbers::ln2 + normal_log_density(r, priors.rate_sd);
  }

  for (double c : params.copula_params) {
    switch (config.copula_family) {
      case CopulaFamily::SurvivalGumbel:
        if (c < 1.0) return kNegInf;
        lp += std::numbers::ln2 + normal_log_density(c - 1.0, priors.gumbel_excess_sd);
        break;
      case CopulaFamily::AliMikhailHaq:
        if (c < -1.0 || c >= 1.0) return kNegInf;
        lp -= std::numbers::ln2;
        break;
      case CopulaFamily::Clayton:
        if (c <= 0.0) return kNegInf;
        lp += std::numbers::ln2 + normal_log_density(c, priors.clayton_sd);
        break;
      case CopulaFamily::Independence: break;
    }
  }
  return lp;
}

ParameterLayout::ParameterLayout(const ModelConfig& config) {
  const int S = config.num_states;
  const int off = S * (S - 1);
  int at = 0;
  initial = at; initial_size = S - 1; at += initial_size;
  intercepts = at; intercepts_size = off; at += intercepts_size;
  duration = at; duration_size = config.use_duration ? off : 0; at += duration_size;
  covariates = at; covariates_size = off * config.active_covariates(); at += covariates_size;
  rates = at; rates_size = S * config.num_margins; at += rates_size;
  copula = at; copula_size = config.has_copula_params() ? S : 0; at += copula_size;
  total = at;
}

int ParameterLayout::off_diagonal_index(int from, int to, int num_states) {
  return from * (num_states - 1) + (to < from ? to : to - 1);
}

int unconstrained_dim(const ModelConfig& config) { return ParameterLayout(config).total; }

std::vector<std::string> unconstrained_names(const ModelConfig& config) {
  const int S = config.num_states;
  const int p = config.active_covariates();
  const ParameterLayout layout(config);
  std::vector<std::string> names(layout.total);
  auto idx = [](int a) { return "[" + std::to_string(a) + "]"; };
  for (int s = 0; s + 1 < S; ++s) names[layout.initial + s] = "initial_dist.alr" + idx(s);
  for (int j = 0; j < S; ++j) {
    for (int l = 0; l < S; ++l) {
      if (l == j) continue;
      const int o = ParameterLayout::off_diagonal_index(j, l, S);
      names[layout.intercepts + o] = "intercepts" + idx(j) + idx(l);
      if (config.use_duration) names[layout.duration + o] = "duration_coefs" + idx(j) + idx(l);
      for (int c = 0; c < p; ++c)
        names[layout.covariates + o * p + c] = "covariate_coefs" + idx(j) + idx(l) + idx(c);
    }
  }
  for (int k = 0; k < config.num_margins; ++k)
    for (int s = 0; s < S; ++s)
      names[layout.rates + k * S + s] =
          (k == 0 ? "emission_rates.log_increment" : "emission_rates.log") + idx(s) + idx(k);
  const char* copula_name = config.copula_family == CopulaFamily::AliMikhailHaq
                                ? "copula_params.scaled_logit"
                            : config.copula_family == CopulaFamily::SurvivalGumbel
                                ? "copula_params.log_excess"
                                : "copula_params.log";
  for (int s = 0; s < layout.copula_size; ++s) names[layout.copula + s] = copula_name + idx(s);
  return names;
}

std::vector<double> to_unconstrained(const ParameterSet& params, const ModelConfig& config) {
  params.validate(config);
  const int S = config.num_states;
  const int p = config.active_covariates();
  const ParameterLayout layout(config);
  std::vector<double> v(layout.total);

  const double anchor = params.initial_dist[S - 1];
  for (int s = 0; s + 1 < S; ++s) {
    require(params.initial_dist[s] > 0.0 && anchor > 0.0,
            "initial_dist must be strictly positive to be transformed");
    v[layout.initial + s] = std::log(params.initial_dist[s]) - std::log(anchor);
  }
  for (int j = 0; j < S; ++j) {
    for (int l = 0; l < S; ++l) {
      if (l == j) continue;
      const int o = ParameterLayout::off_diagonal_index(j, l, S);
      v[layout.intercepts + o] = params.intercept(j, l);
      if (config.use_duration) v[layout.duration + o] = params.duration_coef(j, l);
      auto beta = params.covariate_coef(j, l);
      for (int c = 0; c < p; ++c) v[layout.covariates + o * p + c] = beta[c];
    }
  }
  for (int k = 0; k < config.num_margins; ++k) {
    for (int s = 0; s < S; ++s) {
      double x = params.rate(s, k);
      if (k == 0 && s > 0) x -= params.rate(s - 1, 0);
      v[layout.rates + k * S + s] = std::log(x);
    }
  }
  for (int s = 0; s < layout.copula_size; ++s) {
    const double c = params.copula_params[s];
    double& out = v[layout.copula + s];
    switch (config.copula_family) {
      case CopulaFamily::SurvivalGumbel:
        require(c > 1.0, "survival Gumbel parameter must be > 1 to be transformed");
        out = std::log(c - 1.0);
        break;
      case CopulaFamily::AliMikhailHaq:
        require(c > -1.0, "AMH parameter must be > -1 to be transformed");
        out = std::log1p(c) - std::log1p(-c);
        break;
      case CopulaFamily::Clayton: out = std::log(c); break;
      case CopulaFamily::Independence: break;
    }
  }
  return v;
}

ParameterSet from_unconstrained(std::span<const double> v, const ModelConfig& config) {
  config.validate();
  const int S = config.num_states;
  const int p = config.active_covariates();
  const ParameterLayout layout(config);
  if (static_cast<int>(v.size()) != layout.total)
    throw std::invalid_argument("unconstrained vector has dimension " + std::to_string(v.size()) +
                                ", expected " + std::to_string(layout.total));

  ParameterSet out;
  out.num_states = S;
  out.num_margins = config.num_margins;
  out.covariate_dim = config.covariate_dim;

  double shift = 0.0;
  for (int s = 0; s + 1 < S; ++s) shift = std::max(shift, v[layout.initial + s]);
  out.initial_dist.resize(S);
  double total = 0.0;
  for (int s = 0; s < S; ++s) {
    const double logit = s + 1 < S ? v[layout.initial + s] : 0.0;
    out.initial_dist[s] = std::exp(logit - shift);
    total += out.initial_dist[s];
  }
  for (double& w : out.initial_dist) w /= total;

  out.intercepts.assign(S * S, 0.0);
  out.duration_coefs.assign(S * S, 0.0);
  out.covariate_coefs.assign(S * S * config.covariate_dim, 0.0);
  for (int j = 0; j < S; ++j) {
    for (int l = 0; l < S; ++l) {
      if (l == j) continue;
      const int o = ParameterLayout::off_diagonal_index(j, l, S);
      out.intercept(j, l) = v[layout.intercepts + o];
      if (config.use_duration) out.duration_coef(j, l) = v[layout.duration + o];
      auto beta = out.covariate_coef(j, l);
      for (int c = 0; c < p; ++c) beta[c] = v[layout.covariates + o * p + c];
    }
  }
  out.emission_rates.resize(S * config.num_margins);
  for (int k = 0; k < config.num_margins; ++k) {
    for (int s = 0; s < S; ++s) {
      const double x = std::exp(v[layout.rates + k * S + s]);
      if (k == 0 && s > 0) {
        // An increment below the spacing of doubles at the previous level
        // would tie the two rates; bump to the next representable value.
        const double prev = out.rate(s - 1, 0);
        out.rate(s, k) = std::max(prev + x, std::nextafter(prev, std::numeric_limits<double>::infinity()));
      } else {
        out.rate(s, k) = x;
      }
    }
  }
  out.copula_params.resize(layout.copula_size);
  for (int s = 0; s < layout.copula_size; ++s) {
    const double u = v[layout.copula + s];
    switch (config.copula_family) {
      case CopulaFamily::SurvivalGumbel: out.copula_params[s] = 1.0 + std::exp(u); break;
      case CopulaFamily::AliMikhailHaq: out.copula_params[s] = std::tanh(0.5 * u); break;
      case CopulaFamily::Clayton: out.copula_params[s] = std::exp(u); break;
      case CopulaFamily::Independence: break;
    }
  }
  return out;
}

double log_jacobian(std::span<const double> v, const ModelConfig& config) {
  const int S = config.num_states;
  const ParameterLayout layout(config);
  if (static_cast<int>(v.size()) != layout.total)
    throw std::invalid_argument("unconstrained vector has wrong dimension");

  // Additive log-ratio map: |J| = prod_s pi_s.
  double shift = 0.0;
  for (int s = 0; s + 1 < S; ++s) shift = std::max(shift, v[layout.initial + s]);
  double log_total = 0.0;
  {
    double total = 0.0;
    for (int s = 0; s < S; ++s) total += std::exp((s + 1 < S ? v[layout.initial + s] : 0.0) - shift);
    log_total = shift + std::log(total);
  }
  double lj = 0.0;
  for (int s = 0; s < S; ++s) lj += (s + 1 < S ? v[layout.initial + s] : 0.0) - log_total;

  for (int i = 0; i < layout.rates_size; ++i) lj += v[layout.rates + i];
  for (int s = 0; s < layout.copula_size; ++s) {
    const double u = v[layout.copula + s];
    if (config.copula_family == CopulaFamily::AliMikhailHaq)
      lj += std::numbers::ln2 + log_sigmoid(u) + log_sigmoid(-u);
    else
      lj += u;
  }
  return lj;
}

nlohmann::json to_json(const ModelConfig& config) {
  return {{"num_states", config.num_states},
          {"num_margins", config.num_margins},
          {"scale_max", config.scale_max},
          {"duration_cap", config.duration_cap},
          {"copula_family", to_string(config.copula_family)},
          {"covariate_dim", config.covariate_dim},
          {"use_duration", config.use_duration},
          {"use_covariates", config.use_covariates}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_states = j.at("num_states").get<int>();
  c.num_margins = j.at("num_margins").get<int>();
  c.scale_max = j.at("scale_max").get<std::vector<int>>();
  c.duration_cap = j.value("duration_cap", 52);
  c.copula_family = parse_copula_family(j.at("copula_family").get<std::string>());
  c.covariate_dim = j.value("covariate_dim", 0);
  c.use_duration = j.value("use_duration", true);
  c.use_covariates = j.value("use_covariates", true);
  c.validate();
  return c;
}

nlohmann::json to_json(const ParameterSet& params) {
  const int S = params.num_states;
  nlohmann::json intercepts = nlohmann::json::array();
  nlohmann::json duration = nlohmann::json::array();
  nlohmann::json covariates = nlohmann::json::array();
  nlohmann::json rates = nlohmann::json::array();
  for (int j = 0; j < S; ++j) {
    std::vector<double> drow(S), wrow(S);
    nlohmann::json brow = nlohmann::json::array();
    for (int l = 0; l < S; ++l) {
      drow[l] = params.intercept(j, l);
      wrow[l] = params.duration_coef(j, l);
      auto beta = params.covariate_coef(j, l);
      brow.push_back(std::vector<double>(beta.begin(), beta.end()));
    }
    intercepts.push_back(drow);
    duration.push_back(wrow);
    covariates.push_back(brow);
    rates.push_back(std::vector<double>(params.emission_rates.begin() + j * params.num_margins,
                                        params.emission_rates.begin() + (j + 1) * params.num_margins));
  }
  return {{"initial_dist", params.initial_dist},
          {"intercepts", intercepts},
          {"duration_coefs", duration},
          {"covariate_coefs", covariates},
          {"emission_rates", rates},
          {"copula_params", params.copula_params}};
}

ParameterSet params_from_json(const nlohmann::json& j, const ModelConfig& config) {
  const int S = config.num_states;
  const int m = config.num_margins;
  const int p = config.covariate_dim;
  ParameterSet out = ParameterSet::defaults(config);
  out.initial_dist = j.at("initial_dist").get<std::vector<double>>();
  auto matrix = [&](const char* key, std::vector<double>& dst) {
    if (!j.contains(key)) return;
    const auto& rows = j.at(key);
    require(static_cast<int>(rows.size()) == S, std::string(key) + " must have num_states rows");
    for (int a = 0; a < S; ++a) {
      const auto row = rows[a].get<std::vector<double>>();
      require(static_cast<int>(row.size()) == S, std::string(key) + " rows must have num_states entries");
      for (int b = 0; b < S; ++b) dst[a * S + b] = row[b];
    }
  };
  matrix("intercepts", out.intercepts);
  matrix("duration_coefs", out.duration_coefs);
  if (j.contains("covariate_coefs") && p > 0) {
    const auto& rows = j.at("covariate_coefs");
    require(static_cast<int>(rows.size()) == S, "covariate_coefs must have num_states rows");
    for (int a = 0; a < S; ++a) {
      require(static_cast<int>(rows[a].size()) == S, "covariate_coefs rows must have num_states entries");
      for (int b = 0; b < S; ++b) {
        const auto beta = rows[a][b].get<std::vector<double>>();
        require(static_cast<int>(beta.size()) == p, "covariate_coefs vectors must have covariate_dim entries");
        std::copy(beta.begin(), beta.end(), out.covariate_coef(a, b).begin());
      }
    }
  }
  const auto& rates = j.at("emission_rates");
  require(static_cast<int>(rates.size()) == S, "emission_rates must have num_states rows");
  for (int s = 0; s < S; ++s) {
    const auto row = rates[s].get<std::vector<double>>();
    require(static_cast<int>(row.size()) == m, "emission_rates rows must have num_margins entries");
    for (int k = 0; k < m; ++k) out.rate(s, k) = row[k];
  }
  out.copula_params = j.value("copula_params", std::vector<double>{});
  out.validate(config);
  return out;
}

nlohmann::json model_document(const ModelConfig& config, const ParameterSet& params) {
  return {{"model", {{"config", to_json(config)}, {"params", to_json(params)}}}};
}

}  // namespace vdc

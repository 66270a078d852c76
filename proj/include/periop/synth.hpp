#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "periop/data_model.hpp"

namespace periop {

// Marginal families. Truncated-normal targets are the moments of the
// truncated distribution itself; the parent normal is solved for internally.
struct TruncatedNormal {
  double mean = 0, sd = 1;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};
struct LogNormal {
  double median = 1, log_sd = 0.5;
};
struct DiscreteValues {
  std::vector<double> values;
  std::vector<double> probs;
};
struct Bernoulli {
  double prevalence = 0.5;
};
struct Categorical {
  std::vector<double> probs;  // aligned with FeatureSpec::levels
};

using Marginal = std::variant<TruncatedNormal, LogNormal, DiscreteValues, Bernoulli, Categorical>;

double marginal_mean(const Marginal& m);
double marginal_sd(const Marginal& m);
// Range mapped onto [0, 1] when the feature enters an outcome mechanism.
std::pair<double, double> mechanism_range(const Marginal& m);

// Parent (mu, sigma) of a normal whose truncation to [lo, hi] has the
// requested mean and sd. Throws Error if the fixed point does not converge.
std::pair<double, double> solve_truncated_normal(const TruncatedNormal& t);

// Maximum-entropy distribution on `values` with the given mean and sd:
// p_k proportional to exp(a v_k + b v_k^2).
DiscreteValues max_entropy_discrete(std::vector<double> values, double mean, double sd);

struct Disruption {
  std::string up = "sd_nibp";
  std::string down = "avg_nibp";
  double beta = 1.5;
};

// Planted logistic risk:
//   logit P(y = 1) = intercept + sum_j coef_j u_j + beta (u_up - u_down)
// where u is a numeric feature mapped through mechanism_range and clipped to
// [0, 1], a binary feature as 0/1, or a "name=level" indicator.
struct OutcomeMechanism {
  double intercept = 0;
  std::vector<std::pair<std::string, double>> coefficients;
  std::optional<Disruption> disruption;
  double target_prevalence = 0.5;
  double target_auc = 0.5;
};

struct GenProfile {
  std::shared_ptr<const FeatureRegistry> registry = default_registry_ptr();
  std::string surgery = std::string(kAllSurgeries);
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::vector<Marginal> marginals;    // parallel to registry specs
  std::vector<double> surgery_mix;    // all-surgeries only; parallel to surgery_types
  std::vector<std::string> corr_variables;  // latent-copula variables
  Eigen::MatrixXd corr_targets;
  std::map<OutcomeKind, OutcomeMechanism> mechanisms;

  const Marginal& marginal(std::string_view feature) const;
};

// Profile for one surgery group (or kAllSurgeries) with every mechanism
// calibrated to its target prevalence and AUROC.
GenProfile default_profile(std::string_view surgery, std::size_t n, std::uint64_t seed);

// Throws ConfigError describing the first problem.
void validate(const GenProfile& profile);

struct RepairResult {
  Eigen::MatrixXd matrix;
  int passes = 0;  // 0 when the input was already positive definite
  double min_eigenvalue = 0;
};

// Nearest-PSD repair: clip eigenvalues to 1e-8 and rescale to unit diagonal,
// repeated until positive definite (at most max_passes). Throws Error naming
// the smallest eigenvalue on failure.
RepairResult repair_correlation(const Eigen::MatrixXd& c, int max_passes = 100);

// Rescales the mechanism's coefficients (direction fixed, disruption fixed)
// and intercept so that, on a fixed pilot sample, the expected prevalence and
// expected AUROC hit the targets.
void calibrate_mechanism(GenProfile& profile, OutcomeKind outcome);

// Row i is generated from its own stream, so any row range can be sampled
// independently and the result does not depend on the thread count.
Cohort sample_cohort(const GenProfile& profile);
Cohort sample_cohort(const GenProfile& profile, std::size_t n, std::uint64_t seed);

// Latent standard normals of the copula variables (n x k), the same draws
// sample_cohort transforms.
Eigen::MatrixXd sample_latent(const GenProfile& profile, std::size_t n, std::uint64_t seed);

// Planted linear predictor (log-odds) for each cohort row.
std::vector<double> planted_score(const GenProfile& profile, OutcomeKind outcome,
                                  const Cohort& cohort);

// Monte-Carlo AUROC of the planted score against freshly sampled labels.
double bayes_optimal_auc(const GenProfile& profile, OutcomeKind outcome, std::size_t n_mc,
                         std::uint64_t seed);

nlohmann::json to_json(const GenProfile& profile);
GenProfile profile_from_json(const nlohmann::json& j,
                             std::shared_ptr<const FeatureRegistry> reg = default_registry_ptr());

}  // namespace periop

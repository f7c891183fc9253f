#pragma once

#include <nlohmann/json.hpp>

#include "cdc/kl_optima.hpp"
#include "cdc/overestimation.hpp"
#include "cdc/tabular.hpp"

namespace cdc {

// Frozen numerical checks of the operator-contraction, overestimation and
// KL-optimum results. cmd_verify runs them at the default scales; the unit
// tests run reduced scales through the same code.
struct VerifyOptions {
  std::uint64_t seed = 71001;
  int mdp_count = 50;
  int pairs_per_mdp = 20;
  long mc_trials = 1000000;
  long ordering_draws = 200;
  long ordering_trials = 100000;
  int lemma1_instances = 20;
};

struct VerifyCheck {
  std::string name;
  bool pass = false;
  nlohmann::json stats;
};

// Contraction of the exact tabular operator: max empirical ratio over random
// MDPs and table pairs stays within gamma + 1e-9. eta/lambda/N sweep across
// MDPs so the penalized and plain paths are both covered.
inline VerifyCheck check_tabular_contraction(const VerifyOptions& opt) {
  VerifyCheck out;
  out.name = "tabular_contraction";
  const double gammas[3] = {0.5, 0.9, 0.99};
  const double etas[3] = {0.0, 0.5, 2.0};
  const double lambdas[2] = {0.0, 1.0};
  Rng rng = substream(opt.seed, "contraction");
  double worst_excess = -1.0;
  double worst_ratio = 0.0;
  bool pass = true;
  for (int i = 0; i < opt.mdp_count; ++i) {
    const int ns = 2 + int(rng.uniform_index(9));   // 2..10
    const int na = 2 + int(rng.uniform_index(4));   // 2..5
    const double gamma = gammas[i % 3];
    TabularMdp mdp = random_mdp(ns, na, gamma, rng);
    ContractionParams p;
    p.eta = etas[i % 3];
    p.lambda = lambdas[i % 2];
    p.n_candidates = 1 + int(rng.uniform_index(std::uint64_t(na)));
    p.ensemble_size = (i % 2) ? 4 : 1;
    const double ratio = contraction_check(mdp, opt.pairs_per_mdp, rng, p);
    worst_ratio = std::max(worst_ratio, ratio);
    worst_excess = std::max(worst_excess, ratio - gamma);
    if (ratio > gamma + 1e-9) pass = false;
  }
  out.pass = pass;
  out.stats = {{"mdps", opt.mdp_count},
               {"pairs_per_mdp", opt.pairs_per_mdp},
               {"worst_ratio", worst_ratio},
               {"worst_excess_over_gamma", worst_excess}};
  return out;
}

// E[max{0, q1, q2}] with q_i ~ U[-1,1] equals 5/12, within 3 SE.
inline VerifyCheck check_mc_anchor(const VerifyOptions& opt) {
  VerifyCheck out;
  out.name = "mc_anchor_m2";
  Rng rng = substream(opt.seed, "mc-anchor");
  const MeanSe est = oe_max_expectation(1.0, 2, 0.0, opt.mc_trials, rng);
  const double target = 5.0 / 12.0;
  out.pass = std::abs(est.mean - target) <= 3.0 * est.se;
  out.stats = {{"estimate", est.mean}, {"se", est.se}, {"target", target},
               {"trials", opt.mc_trials}};
  return out;
}

// Integral-derived closed form against Monte Carlo across the m/alpha/L1
// grid, within 4 SE everywhere.
inline VerifyCheck check_closed_form_grid(const VerifyOptions& opt) {
  VerifyCheck out;
  out.name = "closed_form_grid";
  Rng rng = substream(opt.seed, "cf-grid");
  const int ms[5] = {1, 2, 3, 5, 10};
  const double alphas[3] = {0.0, 0.1, 0.3};
  const double l1s[3] = {0.5, 1.0, 2.0};
  bool pass = true;
  double worst_z = 0.0;
  for (int m : ms)
    for (double alpha : alphas)
      for (double L1 : l1s) {
        const MeanSe est = oe_max_expectation(L1, m, alpha, opt.mc_trials, rng);
        const double cf = oe_closed_form(L1, m, alpha);
        const double z = std::abs(est.mean - cf) / std::max(est.se, 1e-300);
        worst_z = std::max(worst_z, z);
        if (z > 4.0) pass = false;
      }
  out.pass = pass;
  out.stats = {{"grid_points", 45}, {"worst_z", worst_z}, {"trials", opt.mc_trials}};
  return out;
}

// Large-m behavior: the expectation approaches L1*(1+alpha).
inline VerifyCheck check_large_m_limit(const VerifyOptions& opt) {
  VerifyCheck out;
  out.name = "large_m_limit";
  Rng rng = substream(opt.seed, "large-m");
  bool pass = true;
  nlohmann::json points = nlohmann::json::array();
  for (double alpha : {0.0, 0.1}) {
    const MeanSe est = oe_max_expectation(1.0, 200, alpha, opt.mc_trials, rng);
    const double limit = 1.0 * (1.0 + alpha);
    const bool ok = std::abs(est.mean - limit) <= 0.02;
    pass = pass && ok;
    points.push_back({{"alpha", alpha}, {"estimate", est.mean}, {"limit", limit}, {"ok", ok}});
  }
  out.pass = pass;
  out.stats = {{"m", 200}, {"points", points}};
  return out;
}

// The printed expanded variant of the closed form disagrees with the Monte
// Carlo definition (3/8 vs 5/12 at m=2); the integral-derived form does not.
// Recorded as its own check so the discrepancy stays documented.
inline VerifyCheck check_variant_mismatch(const VerifyOptions&) {
  VerifyCheck out;
  out.name = "closed_form_variant_mismatch_documented";
  const double target = 5.0 / 12.0;
  const double integral_form = oe_closed_form(1.0, 2, 0.0);
  const double variant_form = oe_closed_form_variant(1.0, 2, 0.0);
  out.pass = std::abs(integral_form - target) < 1e-12 && std::abs(variant_form - target) > 0.01;
  out.stats = {{"integral_form", integral_form},
               {"variant_form", variant_form},
               {"target", target}};
  return out;
}

// Ordering of the simulated overestimation errors under random parameter
// draws satisfying the validity conditions.
inline VerifyCheck check_ordering(const VerifyOptions& opt) {
  VerifyCheck out;
  out.name = "oe_ordering";
  Rng rng = substream(opt.seed, "ordering");
  long hold = 0;
  long draws = 0;
  long guard = 0;
  while (draws < opt.ordering_draws) {
    if (++guard > 100 * opt.ordering_draws) throw Error("ordering: rejection sampling stalled");
    const double eta = rng.uniform(0.1, 2.0);
    const double mu = rng.uniform(0.01, 0.5);
    const double alpha = rng.uniform(0.005, 0.3);
    const double L1 = rng.uniform(0.5, 2.0);
    const int m = 2 + int(rng.uniform_index(11));  // 2..12
    if (!theorem3_conditions(eta, mu, alpha, m)) continue;
    ++draws;
    const OeSimResult sim = oe_simulation(eta, mu, alpha, L1, m, opt.ordering_trials, rng);
    if (sim.cdc.mean <= sim.baseline.mean) ++hold;
  }
  const double frac = double(hold) / double(draws);
  out.pass = frac >= 0.95;
  out.stats = {{"draws", draws}, {"held", hold}, {"fraction", frac},
               {"trials_per_draw", opt.ordering_trials}};
  return out;
}

// Closed-form optima against the projected-gradient oracle, and the
// large-lambda collapse onto the behavior distribution.
inline VerifyCheck check_lemma1(const VerifyOptions& opt) {
  VerifyCheck out;
  out.name = "lemma1_optima";
  Rng rng = substream(opt.seed, "lemma1");
  const double lambdas[3] = {0.3, 1.0, 3.0};
  double worst_dev = 0.0;
  bool pass = true;
  for (int i = 0; i < opt.lemma1_instances; ++i) {
    const int n = 2 + int(rng.uniform_index(5));  // |A| in 2..6
    Eigen::VectorXd q(n), pb(n);
    for (int a = 0; a < n; ++a) q(a) = rng.uniform(-2.0, 2.0);
    double total = 0.0;
    for (int a = 0; a < n; ++a) {
      pb(a) = rng.uniform(0.05, 1.0);
      total += pb(a);
    }
    pb /= total;
    const auto res = lemma1_check(q, pb, lambdas[i % 3]);
    worst_dev = std::max({worst_dev, res.forward_dev, res.reverse_dev});
    if (res.forward_dev > 1e-6 || res.reverse_dev > 1e-6) pass = false;

    const auto fwd_limit = forward_kl_optimum(q, pb, 1e6);
    const auto rev_limit = reverse_kl_optimum(q, pb, 1e6);
    const double dev_limit = std::max((fwd_limit - pb).cwiseAbs().maxCoeff(),
                                      (rev_limit - pb).cwiseAbs().maxCoeff());
    if (dev_limit > 1e-4) pass = false;
  }
  out.pass = pass;
  out.stats = {{"instances", opt.lemma1_instances}, {"worst_dev", worst_dev}};
  return out;
}

inline std::vector<VerifyCheck> run_verify_suite(const VerifyOptions& opt = {}) {
  std::vector<VerifyCheck> checks;
  checks.push_back(check_tabular_contraction(opt));
  checks.push_back(check_mc_anchor(opt));
  checks.push_back(check_closed_form_grid(opt));
  checks.push_back(check_large_m_limit(opt));
  checks.push_back(check_variant_mismatch(opt));
  checks.push_back(check_ordering(opt));
  checks.push_back(check_lemma1(opt));
  return checks;
}

}  // namespace cdc

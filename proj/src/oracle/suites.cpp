#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "evfield/baselines.hpp"
#include "evfield/metrics.hpp"
#include "evfield/oracle.hpp"
#include "evfield/parallel.hpp"
#include "evfield/train.hpp"

namespace evfield::oracle {

namespace {

Ray random_ray(Rng& rng) {
  // Origin on a sphere of radius 3 aimed at a jittered point near the center.
  Vec3 o(rng.normal(), rng.normal(), rng.normal());
  o = 3.0 * o.normalized();
  const Vec3 target(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
  Ray r;
  r.origin = o;
  r.direction = (target - o).normalized();
  const auto hit = Aabb{}.intersect(r.origin, r.direction);
  r.near = hit->first;
  r.far = hit->second;
  return r;
}

}  // namespace

SuiteResult gradient_suite(std::uint64_t seed) {
  SuiteResult res{"gradient", false, {}};
  Rng rng(seed);
  FieldConfig fc;
  fc.pos_frequencies = 2;
  fc.dir_frequencies = 1;
  fc.trunk_depth = 2;
  fc.trunk_width = 8;
  Field field = Field::initialized(fc, rng);
  std::vector<Ray> rays;
  std::vector<double> targets;
  for (int i = 0; i < 4; ++i) {
    rays.push_back(random_ray(rng));
    for (int c = 0; c < 3; ++c) targets.push_back(rng.uniform());
  }
  const SampleBatch batch = sample_batch(rays, 8, &rng);
  TrainConfig tc;
  tc.objective = Objective::kEvidential;
  tc.lambda_reg = 0.1;
  const RenderSettings settings;
  const auto fn = [&](Tape& tape, ParamStore&) {
    const auto leaves = field.bind(tape);
    return batch_loss(tape, field, leaves, batch, targets, tc, settings).total;
  };
  const GradCheckResult g = check_gradients(field.params(), fn, 1e-5);
  res.passed = g.max_rel_error < 1e-4;
  std::ostringstream d;
  d << "max relative error " << g.max_rel_error << " at " << g.worst_param << "[" << g.worst_index
    << "] (analytic " << g.analytic << ", numeric " << g.numeric << "), " << field.params().scalar_count()
    << " parameters";
  res.detail = d.str();
  return res;
}

SuiteResult propagation_suite(std::uint64_t seed, std::size_t samples) {
  SuiteResult res{"propagation", true, {}};
  constexpr std::size_t kRays = 20, kPoints = 8;
  Rng rng(seed);
  struct Case {
    std::vector<double> weights;
    std::vector<NIGParams> points;
    PixelEvidential closed;
    MonteCarloMoments mc;
  };
  std::vector<Case> cases(kRays);
  const RenderSettings settings;
  for (auto& cs : cases) {
    std::vector<double> density(kPoints), delta(kPoints);
    for (std::size_t i = 0; i < kPoints; ++i) {
      density[i] = rng.uniform(0.0, 6.0);
      delta[i] = rng.uniform(0.05, 0.3);
    }
    cs.weights = compute_weights(density, delta);
    std::vector<PointPrediction> preds(kPoints);
    for (std::size_t i = 0; i < kPoints; ++i) {
      NIGParams p{rng.uniform(0.0, 1.0), rng.uniform(0.5, 5.0), rng.uniform(5.0, 10.0), 0.0};
      p.beta = rng.uniform(0.005, 0.05) * (p.alpha - 1.0);
      cs.points.push_back(p);
      const auto m = nig_moments(p);
      preds[i].mean_color = {p.gamma, p.gamma, p.gamma};
      preds[i].au = m.au;
      preds[i].eu = m.eu;
      preds[i].shape_score = rng.uniform(0.5, 3.0);
    }
    cs.closed = composite(cs.weights, preds, settings);
  }
  std::vector<Rng> streams;
  for (std::size_t r = 0; r < kRays; ++r) streams.push_back(rng.split(r));
  parallel_for(kRays, [&](std::size_t r) {
    cases[r].mc = mc_pixel_moments(cases[r].weights, cases[r].points, settings.background[0], samples, streams[r]);
  });

  double worst_z = 0.0, worst_identity = 0.0;
  std::size_t failures = 0;
  for (const auto& cs : cases) {
    const std::array<std::pair<double, Estimate>, 4> pairs{{{cs.closed.mean_color[0], cs.mc.mean},
                                                            {cs.closed.u, cs.mc.u},
                                                            {cs.closed.au, cs.mc.au},
                                                            {cs.closed.eu, cs.mc.eu}}};
    for (const auto& [closed, est] : pairs) {
      const double z = std::abs(closed - est.value) / est.std_error;
      worst_z = std::max(worst_z, z);
      if (!(z <= 3.0)) ++failures;
    }
    worst_identity = std::max(worst_identity, std::abs(cs.closed.u - (cs.closed.au + cs.closed.eu)) / cs.closed.u);
  }
  res.passed = failures == 0 && worst_identity <= 1e-12;
  std::ostringstream d;
  d << failures << " of " << 4 * kRays << " moments outside 3 SE (worst " << worst_z << " SE, " << samples
    << " samples/ray); U = AU + EU relative error " << worst_identity;
  res.detail = d.str();
  return res;
}

SuiteResult marginal_suite(std::uint64_t seed) {
  SuiteResult res{"marginal", true, {}};
  Rng rng(seed);
  double worst_density = 0.0, worst_nll = 0.0;
  for (int set = 0; set < 10; ++set) {
    const NIGParams p{rng.uniform(0.0, 1.0), rng.uniform(0.3, 5.0), rng.uniform(1.5, 8.0), rng.uniform(0.02, 1.0)};
    const StudentTParams t = nig_to_student_t(p);
    for (int k = 0; k < 20; ++k) {
      const double c = t.location + rng.uniform(-4.0, 4.0) * std::sqrt(t.scale2);
      const double quad = marginal_density_quadrature(c, p);
      const double closed = std::exp(student_t_logpdf(c, t.location, t.scale2, t.dof));
      worst_density = std::max(worst_density, std::abs(closed - quad));
      worst_nll = std::max(worst_nll, std::abs(nll_loss(c, p) + std::log(quad)));
    }
  }
  res.passed = worst_density <= 1e-5 && worst_nll <= 1e-6;
  std::ostringstream d;
  d << "200 points: max |density - quadrature| " << worst_density << ", max |NLL + log quadrature| " << worst_nll;
  res.detail = d.str();
  return res;
}

SuiteResult gaussian_limit_suite(std::uint64_t seed) {
  SuiteResult res{"gaussian-limit", true, {}};
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double c = rng.uniform(), gamma = rng.uniform(), sigma2 = rng.uniform(0.005, 0.5);
    const NIGParams p{gamma, 1e6, 1e6, sigma2 * (1e6 - 1.0)};
    const double gauss = 0.5 * std::log(2.0 * std::numbers::pi * sigma2) + (c - gamma) * (c - gamma) / (2.0 * sigma2);
    worst = std::max(worst, std::abs(nll_loss(c, p) - gauss));
    worst = std::max(worst, std::abs(gaussian_nll(c, gamma, sigma2) - gauss));
  }
  res.passed = worst <= 1e-3;
  res.detail = "100 draws: max |evidential NLL - Gaussian NLL| " + std::to_string(worst);
  return res;
}

SuiteResult ause_suite(std::uint64_t seed) {
  SuiteResult res{"ause", true, {}};
  Rng rng(seed);
  std::vector<double> error(6);
  for (double& e : error) e = rng.uniform(0.0, 1.0);
  const auto grid = default_fraction_grid();
  std::array<double, 6> ranks{1, 2, 3, 4, 5, 6};
  double worst = 0.0;
  std::size_t perms = 0;
  do {
    for (bool rmse : {true, false}) {
      const double fast = ause(ranks, error, rmse ? ErrorKind::kRmse : ErrorKind::kMae, grid);
      worst = std::max(worst, std::abs(fast - ause_brute_force(ranks, error, rmse, grid)));
    }
    ++perms;
  } while (std::next_permutation(ranks.begin(), ranks.end()));
  const double oracle_rmse = ause(error, error, ErrorKind::kRmse, grid);
  const double oracle_mae = ause(error, error, ErrorKind::kMae, grid);
  res.passed = perms == 720 && worst <= 1e-12 && oracle_rmse == 0.0 && oracle_mae == 0.0;
  std::ostringstream d;
  d << perms << " permutations: max |ause - brute force| " << worst << "; oracle ranking AUSE " << oracle_rmse
    << " (RMSE), " << oracle_mae << " (MAE)";
  res.detail = d.str();
  return res;
}

std::vector<SuiteResult> run_all_suites(std::uint64_t seed) {
  return {gradient_suite(seed), propagation_suite(seed + 1), marginal_suite(seed + 2), gaussian_limit_suite(seed + 3),
          ause_suite(seed + 4)};
}

}  // namespace evfield::oracle

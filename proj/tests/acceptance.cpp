// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include "atomfrac/analysis.hpp"
#include "atomfrac/scenario.hpp"

#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

using namespace atomfrac;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail, double seconds) {
  std::printf("%s  %-38s %s  [%.2f s]\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  failures += !ok;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct PresetRun {
  EvolutionSetup setup;
  EvolutionTrace trace;
  VerificationReport report;
  double seconds = 0.0;
  bool failed = false;
  std::string failure;
};

PresetRun run_setup(EvolutionSetup setup) {
  PresetRun r;
  const auto start = Clock::now();
  try {
    r.trace = run_evolution(setup);
  } catch (const EvolutionFailure& e) {
    r.failed = true;
    r.failure = e.what();
    r.trace = e.partial();
  }
  r.seconds = seconds_since(start);
  r.report = verify_trace(r.trace, setup.sys, setup.inter, setup.dissipation, setup.tau, setup.settings,
                          &setup.schedule);
  r.setup = std::move(setup);
  return r;
}

// Broken set at the end of the first phase in which the boundary displacement grows.
std::vector<int> broken_after_first_extension(const PresetRun& r) {
  const BoundarySchedule& s = r.setup.schedule;
  const StepRecord* last = &r.trace.steps.front();
  for (const StepRecord& rec : r.trace.steps) {
    if (rec.step > 0 && s.displacement(rec.time) <= s.displacement(last->time)) break;
    last = &rec;
  }
  return last->broken_bonds;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const Eigen::Map<const Vector> a(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::Map<const Vector> b(y.data(), static_cast<Eigen::Index>(y.size()));
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

struct StressSummary {
  double peak = 0.0;
  double pearson = 0.0;
  double post_ratio = 0.0;
  int fit_points = 0;
};

StressSummary summarize(const PresetRun& r) {
  const StressStrainCurve curve = stress_strain(r.trace, r.setup.sys, r.setup.inter, r.setup.schedule,
                                                r.setup.settings.tie_tol);
  StressSummary out;
  double peak_strain = 0.0;
  for (const auto& s : curve.samples) {
    if (s.stress > out.peak) {
      out.peak = s.stress;
      peak_strain = s.strain;
    }
  }
  std::vector<double> x, y;
  for (const auto& s : curve.samples) {
    if (s.strain <= 0.5 * peak_strain) {
      x.push_back(s.strain);
      y.push_back(s.stress);
    }
  }
  out.fit_points = static_cast<int>(x.size());
  out.pearson = x.size() >= 3 ? pearson(x, y) : 0.0;
  out.post_ratio = curve.samples.back().stress / out.peak;
  return out;
}

}  // namespace

int main() {
  std::printf("atomfrac acceptance suite\n");

  // presets, shared by the per-step criteria and the qualitative ones
  std::map<std::string, PresetRun> runs;
  double preset_seconds = 0.0;
  for (const std::string& name : preset_names()) {
    runs[name] = run_setup(build_setup(preset(name)));
    preset_seconds += runs[name].seconds;
    std::printf("      ran %-28s %4d steps, %3zu broken bonds%s  [%.2f s]\n", name.c_str(), runs[name].report.steps,
                runs[name].trace.steps.back().broken_bonds.size(), runs[name].failed ? ", SOLVER FAILURE" : "",
                runs[name].seconds);
  }
  bool any_failed = false;
  for (const auto& [name, r] : runs) {
    if (r.failed) {
      any_failed = true;
      std::printf("      %s: %s\n", name.c_str(), r.failure.c_str());
    }
  }

  // 50 randomized chains
  auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  std::vector<PresetRun> random_runs;
  for (int i = 0; i < 50; ++i) random_runs.push_back(run_setup(testing::random_chain(rng)));
  const double random_seconds = seconds_since(start);
  for (const auto& r : random_runs) any_failed |= r.failed;
  const double per_step_seconds = preset_seconds + random_seconds;

  {
    double worst = 0.0;
    for (const auto& [name, r] : runs) worst = std::max(worst, r.report.lift_identity_max_error);
    for (const auto& r : random_runs) worst = std::max(worst, r.report.lift_identity_max_error);
    report(!any_failed && worst <= 1e-12 && per_step_seconds < 60.0, "lift identity",
           fmt("max relative error %.3g over 7 presets + 50 random chains (tol 1e-12, < 60 s)", worst),
           per_step_seconds);
  }
  {
    double worst = INFINITY;
    for (const auto& [name, r] : runs) worst = std::min(worst, r.report.per_step_inequality_min_slack);
    report(!any_failed && worst >= -1e-10, "per-step a-priori inequality",
           fmt("min slack %.3g over all preset steps (tol -1e-10)", worst), preset_seconds);
  }
  {
    int violations = 0;
    for (const auto& [name, r] : runs) violations += !r.report.irreversibility_ok || !r.report.memory_consistent;
    for (const auto& r : random_runs) violations += !r.report.irreversibility_ok || !r.report.memory_consistent;
    report(!any_failed && violations == 0, "irreversibility", fmt("%.0f runs with violations", static_cast<double>(violations)),
           per_step_seconds);
  }
  {
    double worst_ratio = 0.0;
    for (const auto& [name, r] : runs) worst_ratio = std::max(worst_ratio, r.report.inclusion_residual_max / r.report.grad_tol);
    report(!any_failed && worst_ratio <= 1.0, "discrete inclusion residual",
           fmt("max residual / grad_tol = %.3g over all preset steps", worst_ratio), preset_seconds);
  }

  {
    start = Clock::now();
    const Interactions plain = Interactions::lennard_jones(1.0, 0.25, 1.2, 1.4, 1e-6);
    Interactions angles = plain;
    angles.three_body = TriplePotential{TripleKind::cosine_harmonic, 0.7, std::nullopt};
    const LatticeSystem chain = build_chain(6, 1.0);
    const LatticeSystem patch = build_triangular(3, 3, 1.0, true);
    double worst = 0.0;
    for (const auto& res : {testing::gradient_oracle(chain, plain, 100, 101),
                            testing::gradient_oracle(patch, plain, 100, 102),
                            testing::gradient_oracle(patch, angles, 100, 103)}) {
      worst = std::max(worst, res.worst_relative_error);
    }
    const double t = seconds_since(start);
    report(worst <= 1e-5 && t < 30.0, "gradient oracle",
           fmt("worst relative error %.3g vs central differences, 3 x 100 configurations", worst), t);
  }

  {
    start = Clock::now();
    bool ok = false;
    std::string detail;
    try {
      const Scenario s = parse_scenario(std::string(ATOMFRAC_SOURCE_DIR) + "/scenarios/elastic-chain.yaml");
      const TauStudyReport study = refine_tau_study(build_setup(s), {1.0 / 30, 1.0 / 60, 1.0 / 120, 1.0 / 240});
      const double base = study.rows.front().dissipation_sum;
      bool bounded = true;
      double ratio_max = 0.0, ratio_min = INFINITY;
      for (const auto& row : study.rows) {
        const double ratio = row.dissipation_sum / base;
        ratio_max = std::max(ratio_max, ratio);
        ratio_min = std::min(ratio_min, ratio);
        bounded &= ratio <= 2.0 && ratio >= 0.5;
      }
      char buf[256];
      std::snprintf(buf, sizeof buf, "distances %.3g > %.3g > %.3g, dissipation ratio in [%.4f, %.4f]",
                    study.rows[0].sup_distance_to_next, study.rows[1].sup_distance_to_next,
                    study.rows[2].sup_distance_to_next, ratio_min, ratio_max);
      detail = buf;
      ok = study.distances_decreasing && bounded;
    } catch (const std::exception& e) {
      detail = std::string("error: ") + e.what();
    }
    const double t = seconds_since(start);
    report(ok && t < 120.0, "tau refinement", detail, t);
  }

  {
    const PresetRun& l2 = runs["paper-1d-l2"];
    const auto first = broken_after_first_extension(l2);
    const int driven_bond = static_cast<int>(l2.setup.sys.bonds.size()) - 1;
    const auto& final_set = l2.trace.steps.back().broken_bonds;
    std::string detail = "broken after first extension: {";
    for (int b : first) detail += " " + std::to_string(b);
    detail += " }, driven-end bond " + std::to_string(driven_bond) + ", broken at end: " +
              std::to_string(final_set.size());
    report(!l2.failed && first == std::vector<int>{driven_bond} && final_set == first && l2.seconds < 10.0,
           "1D l2: last bond breaks", detail, l2.seconds);

    const PresetRun& kv = runs["paper-1d-kv"];
    const auto kv_first = broken_after_first_extension(kv);
    const auto& kv_final = kv.trace.steps.back().broken_bonds;
    detail = "broken after first extension: " + std::to_string(kv_first.size()) +
             (kv_first.size() == 1 ? " (bond " + std::to_string(kv_first[0]) + ")" : std::string()) +
             ", at end: " + std::to_string(kv_final.size());
    report(!kv.failed && kv_first.size() == 1 && kv_final == kv_first && kv.seconds < 10.0,
           "1D kelvin-voigt: one bond breaks", detail, kv.seconds);
  }

  {
    const PresetRun& diag = runs["paper-2d-diag-nu0.01"];
    const CrackDescriptor c = classify_crack(diag.trace, diag.setup.sys);
    const int cells = diag.setup.sys.atom_count();
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s, %.1f%% of %d midpoints on one line at %.0f deg, %d atoms", to_string(c.kind),
                  100 * c.fraction_on_line, c.broken_count, c.line_angle * 180 / 3.14159265358979, cells);
    report(!diag.failed && c.kind == CrackKind::single_line && c.fraction_on_line >= 0.9 && cells <= 150 &&
               diag.seconds < 300.0,
           "2D diagonal nu=0.01: single line", buf, diag.seconds);

    const PresetRun& nu1 = runs["paper-2d-horizontal-nu1"];
    const CrackDescriptor d = classify_crack(nu1.trace, nu1.setup.sys);
    std::snprintf(buf, sizeof buf, "%s, %.1f%% of %d midpoints on the best line, %d atoms", to_string(d.kind),
                  100 * d.fraction_on_line, d.broken_count, nu1.setup.sys.atom_count());
    report(!nu1.failed && d.kind != CrackKind::single_line && d.broken_count > 0 &&
               nu1.setup.sys.atom_count() <= 150 && nu1.seconds < 300.0,
           "2D kelvin-voigt nu=1: no single line", buf, nu1.seconds);
  }

  {
    const PresetRun& high = runs["paper-stress-strain-R1.2"];
    const PresetRun& low = runs["paper-stress-strain-R1.07"];
    const StressSummary a = summarize(high);
    const StressSummary b = summarize(low);
    const double t = high.seconds + low.seconds;
    char buf[300];
    std::snprintf(buf, sizeof buf,
                  "peak R1.07 %.4f < R1.2 %.4f; pearson %.4f / %.4f (%d / %d pts); post/peak %.4f / %.4f", b.peak,
                  a.peak, b.pearson, a.pearson, b.fit_points, a.fit_points, b.post_ratio, a.post_ratio);
    report(!high.failed && !low.failed && b.peak < a.peak && a.pearson >= 0.98 && b.pearson >= 0.98 &&
               a.post_ratio <= 0.05 && b.post_ratio <= 0.05 && t < 120.0,
           "stress-strain", buf, t);
  }

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASSED" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}

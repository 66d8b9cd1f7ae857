// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails or overruns its time budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amlab/cli/app.hpp"
#include "amlab/format.hpp"
#include "amlab/losses.hpp"
#include "amlab/margin_math.hpp"
#include "amlab/numeric.hpp"
#include "support/instances.hpp"
#include "support/metric_oracles.hpp"

namespace {

namespace fs = std::filesystem;
std::string format_sig(double v, int digits) { return amlab::format_significant(v, digits); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<Outcome()> check;
};

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path p(AMLAB_TEST_TMPDIR);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult amlab_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = amlab::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string config_path(const char* name) { return (fs::path(AMLAB_CONFIG_DIR) / name).string(); }

// Trains and evaluates one toy config; returns metrics.json, or throws with the CLI's stderr.
nlohmann::json train_and_eval(const std::string& config, std::uint64_t seed, const fs::path& out) {
  const std::vector<std::string> common{"--config", config, "--seed", std::to_string(seed), "--out",
                                        out.string()};
  for (const char* cmd : {"train", "eval"}) {
    std::vector<std::string> args{cmd};
    args.insert(args.end(), common.begin(), common.end());
    const CliResult r = amlab_cli(args);
    if (r.code != 0) throw std::runtime_error(std::string(cmd) + " exited " + std::to_string(r.code) + ": " + r.err);
  }
  return nlohmann::json::parse(slurp(out / "metrics.json"));
}

Outcome gradient_correctness() {
  const CliResult r = amlab_cli({"gradcheck", "--seeds", "5"});
  double worst = 0.0;
  std::size_t lines = 0;
  std::istringstream in(r.out);
  for (std::string line; std::getline(in, line); ++lines) {
    const auto pos = line.find("max_rel_error ");
    if (pos == std::string::npos) return {false, "unparsed line: " + line};
    worst = std::max(worst, std::stod(line.substr(pos + 14)));
  }
  const bool pass = r.code == 0 && lines == 4 && worst < 1e-4;
  return {pass, "4 variants x 5 seeds, max rel error " + format_sig(worst, 3) + " (exit " +
                    std::to_string(r.code) + ")"};
}

double max_abs_diff(const amlab::Matrix& a, const amlab::Matrix& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) {
    worst = std::max(worst, std::abs(a.data()[k] - b.data()[k]));
  }
  return worst;
}

Outcome reduction_identities() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = amlab::testing::random_instance(10, 8, 16, 1000 + seed, 2.0);
    const auto am = amlab::loss_forward_backward(inst.batch, inst.head, amlab::LossConfig::am_softmax(30.0, 0.0));
    const auto nf = amlab::loss_forward_backward(inst.batch, inst.head, amlab::LossConfig::normface(30.0));
    worst = std::max({worst, std::abs(am.loss - nf.loss), max_abs_diff(am.grad_features, nf.grad_features),
                      max_abs_diff(am.grad_weights, nf.grad_weights)});
  }
  double psi_worst = 0.0;
  for (int k = 0; k <= 2000; ++k) {
    const double c = -1.0 + k / 1000.0;
    psi_worst = std::max(psi_worst, std::abs(amlab::psi_am(c, 0.0) - c));
  }
  return {worst <= 1e-12 && psi_worst <= 1e-12,
          "20 instances, max |am(m=0) - normface| " + format_sig(worst, 3) + ", max |psi_am(c, 0) - c| " +
              format_sig(psi_worst, 3)};
}

Outcome margin_monotonicity() {
  const double grid[] = {0.0, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
  std::size_t violations = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = amlab::testing::random_instance(10, 8, 16, 2000 + seed);
    double prev = -INFINITY;
    for (double m : grid) {
      const double loss = amlab::loss_forward_backward(inst.batch, inst.head, amlab::LossConfig::am_softmax(30.0, m)).loss;
      if (loss < prev) ++violations;
      prev = loss;
    }
  }
  return {violations == 0, "20 instances x 7 margins, " + std::to_string(violations) + " decreases"};
}

Outcome psi_ordering() {
  std::size_t order_violations = 0;
  for (int deg = 1; deg < 90; ++deg) {
    const double t = amlab::deg_to_rad(deg);
    const double mid = amlab::psi_a_softmax(t, 4, 5.0);
    if (!(std::cos(t) >= mid && mid >= amlab::psi_a_softmax(t, 2, 0.0))) ++order_violations;
  }
  double gap = 0.0;
  int gap_deg = 0;
  for (int deg = 30; deg <= 90; ++deg) {
    const double t = amlab::deg_to_rad(deg);
    const double d = std::abs(amlab::psi_am(std::cos(t), 0.35) - amlab::psi_a_softmax(t, 4, 5.0));
    if (d > gap) {
      gap = d;
      gap_deg = deg;
    }
  }
  return {order_violations == 0 && gap <= 0.15,
          "ordering violations " + std::to_string(order_violations) + " on 1..89 deg; max |psi_am - psi_a(4,5)| " +
              format_sig(gap, 5) + " at " + std::to_string(gap_deg) + " deg (bound 0.15)"};
}

Outcome boundary_geometry() {
  const double m = 0.35;
  const amlab::Vec2 w1{1.0, 0.0}, w2{0.0, 1.0};
  const amlab::BoundaryGeometry g = amlab::am_boundary(w1, w2, m);
  auto dot = [](const amlab::Vec2& a, const amlab::Vec2& b) { return a[0] * b[0] + a[1] * b[1]; };
  const double e1 = std::abs(dot(w1, g.p1) - m - dot(w2, g.p1));
  const double e2 = std::abs(dot(w2, g.p2) - m - dot(w1, g.p2));
  const double em = std::abs((w1[0] - w2[0]) * g.p1[0] + (w1[1] - w2[1]) * g.p1[1] - m);

  // cos a - sin a - m falls monotonically on [0, pi/4].
  double lo = 0.0, hi = amlab::kPi / 4;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::cos(mid) - std::sin(mid) - m > 0.0 ? lo : hi) = mid;
  }
  const double angle = std::atan2(g.p1[1], g.p1[0]);
  const double e_angle = std::abs(angle - 0.5 * (lo + hi));
  const double deg = amlab::rad_to_deg(angle);
  const bool pass = e1 <= 1e-10 && e2 <= 1e-10 && em <= 1e-10 && e_angle <= 1e-10 && std::abs(deg - 30.675) <= 0.01;
  return {pass, "boundary residuals " + format_sig(std::max({e1, e2, em}), 3) + ", P1 " + format_sig(deg, 6) +
                    " deg, bisection gap " + format_sig(e_angle, 3) + " rad"};
}

Outcome gradnorm_behavior() {
  const fs::path out = scratch() / "gradnorm";
  train_and_eval(config_path("toy_am_softmax.json"), 1, out);
  const CliResult r = amlab_cli({"export", "gradnorm", "--out", out.string(), "--s", "30", "--norm-min", "1",
                                 "--norm-max", "100", "--norm-count", "201"});
  if (r.code != 0) return {false, "export gradnorm exited " + std::to_string(r.code) + ": " + r.err};

  std::istringstream csv(slurp(out / "gradnorm.csv"));
  std::string line;
  std::getline(csv, line);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  while (std::getline(csv, line)) {
    double norm, grad_fn;
    char comma;
    std::istringstream(line) >> norm >> comma >> grad_fn;
    const double x = std::log(norm), y = std::log(grad_fn);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const auto pos = r.out.find("cross at |f| = ");
  if (pos == std::string::npos) return {false, "slope " + format_sig(slope, 5) + ", curves never cross"};
  const double cross = std::stod(r.out.substr(pos + 15));
  return {std::abs(slope + 1.0) <= 0.01 && cross >= 25.0 && cross <= 35.0,
          "trained head, log-log slope " + format_sig(slope, 7) + ", crossing at |f| = " + format_sig(cross, 6)};
}

Outcome toy_trend() {
  int wins = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const std::string tag = std::to_string(seed);
    const auto sm = train_and_eval(config_path("toy_softmax.json"), seed, scratch() / ("trend_softmax_" + tag));
    const auto am = train_and_eval(config_path("toy_am_softmax.json"), seed, scratch() / ("trend_am_" + tag));
    const double sm_intra = sm["mean_intra_angle_deg"], am_intra = am["mean_intra_angle_deg"];
    const double sm_inter = sm["min_inter_center_angle_deg"], am_inter = am["min_inter_center_angle_deg"];
    const double sm_vr = sm["vr_at_far"]["0.01"], am_vr = am["vr_at_far"]["0.01"];
    const bool win = am_intra < sm_intra && am_inter > sm_inter && am_vr > sm_vr;
    wins += win ? 1 : 0;
    detail << (seed > 1 ? "; " : "") << "seed " << seed << " intra " << format_sig(sm_intra, 4) << "->"
           << format_sig(am_intra, 4) << " inter " << format_sig(sm_inter, 4) << "->" << format_sig(am_inter, 4)
           << " VR@1% " << format_sig(sm_vr, 4) << "->" << format_sig(am_vr, 4);
  }
  return {wins == 3, std::to_string(wins) + "/3 seeds favor am_softmax (" + detail.str() + ")"};
}

Outcome metric_oracles() {
  const auto tally = amlab::testing::run_metric_oracles(20261016, 500);
  return {tally.mismatches == 0,
          std::to_string(tally.instances) + " comparisons, " + std::to_string(tally.mismatches) + " mismatches" +
              (tally.mismatches ? " (first: " + tally.first_mismatch + ")" : "")};
}

Outcome determinism() {
  const std::string cfg = config_path("toy_am_softmax.json");
  for (const char* run : {"det_a", "det_b"}) {
    const CliResult r = amlab_cli({"train", "--config", cfg, "--seed", "7", "--out", (scratch() / run).string()});
    if (r.code != 0) return {false, std::string(run) + " exited " + std::to_string(r.code) + ": " + r.err};
  }
  std::string detail;
  bool pass = true;
  for (const char* f : {"history.csv", "checkpoint.bin"}) {
    const std::string a = slurp(scratch() / "det_a" / f);
    const bool same = !a.empty() && a == slurp(scratch() / "det_b" / f);
    pass = pass && same;
    detail += std::string(detail.empty() ? "" : ", ") + f + (same ? " identical (" + std::to_string(a.size()) + " bytes)" : " differs");
  }
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"gradient correctness", 30, gradient_correctness},
      {"reduction identities", 5, reduction_identities},
      {"margin monotonicity", 5, margin_monotonicity},
      {"psi ordering", 1, psi_ordering},
      {"boundary geometry", 1, boundary_geometry},
      {"gradnorm behavior", 10, gradnorm_behavior},
      {"toy embedding trend", 300, toy_trend},
      {"metric oracles", 30, metric_oracles},
      {"determinism", 120, determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = secs <= c.budget_seconds;
    const bool pass = o.pass && in_budget;
    failures += pass ? 0 : 1;
    std::printf("%s %s: %s [%.2fs of %.0fs%s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs,
                c.budget_seconds, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}

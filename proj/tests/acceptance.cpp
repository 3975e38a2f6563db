// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "checks.hpp"
#include "knoweeg/errors.hpp"
#include "knoweeg/forest.hpp"
#include "knoweeg/pipeline.hpp"
#include "knoweeg/stats.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace knoweeg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Synthetic eyes task through the command-line tool
// ---------------------------------------------------------------------------

struct EyesRun {
  std::uint64_t seed = 0;
  double accuracy = 0, auroc = 0, seconds = 0;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  std::vector<std::string> top10;
  bool ok = false;
  std::string error;
};

std::vector<EyesRun> eyes_runs;  // shared by the two end-to-end criteria

fs::path scratch_dir() {
  static const fs::path dir = fs::temp_directory_path() / ("knoweeg_acceptance_" + std::to_string(::getpid()));
  return dir;
}

void run_eyes_task() {
  const fs::path dir = scratch_dir();
  fs::create_directories(dir);
  json cfg = {{"synthetic", synthetic_spec_to_json(SyntheticSpec::eyes_task(600, 2.0))},
              {"test_fraction", 100.0 / 600.0},
              {"val_fraction", 0.2}};
  std::ofstream(dir / "eyes.json") << cfg.dump(2);

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EyesRun r;
    r.seed = seed;
    const fs::path out = dir / ("seed" + std::to_string(seed));
    const std::string cmd = std::string("\"") + KNOWEEG_CLI_PATH + "\" run-all --config \"" + (dir / "eyes.json").string() +
                            "\" --seed " + std::to_string(seed) + " --out \"" + out.string() + "\" >\"" +
                            (dir / "stdout.txt").string() + "\" 2>\"" + (dir / "stderr.txt").string() + "\"";
    const auto t0 = std::chrono::steady_clock::now();
    const int status = std::system(cmd.c_str());
    r.seconds = seconds_since(t0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      std::ifstream err(dir / "stderr.txt");
      std::getline(err, r.error);
      eyes_runs.push_back(r);
      continue;
    }
    const auto eval = json::parse(std::ifstream(out / "eval_report.json"));
    r.accuracy = eval.at("metric_scores").at("accuracy");
    r.auroc = eval.at("metric_scores").at("auroc");
    r.n_train = eval.at("splits").at("train");
    r.n_val = eval.at("splits").at("val");
    r.n_test = eval.at("splits").at("test");
    const auto explain = json::parse(std::ifstream(out / "explain_report.json"));
    for (const auto& f : explain.at("top_features")) {
      if (r.top10.size() == 10) break;
      r.top10.push_back(f.at("descriptor"));
    }
    r.ok = true;
    eyes_runs.push_back(r);
  }
}

Outcome eyes_end_to_end() {
  run_eyes_task();
  double min_acc = 1, min_auc = 1, max_s = 0;
  bool ok = true;
  std::string why;
  for (const auto& r : eyes_runs) {
    max_s = std::max(max_s, r.seconds);
    if (!r.ok) {
      ok = false;
      why += " seed " + std::to_string(r.seed) + " failed: " + r.error;
      continue;
    }
    min_acc = std::min(min_acc, r.accuracy);
    min_auc = std::min(min_auc, r.auroc);
    if (r.n_train != 400 || r.n_val != 100 || r.n_test != 100) {
      ok = false;
      why += " seed " + std::to_string(r.seed) + " split " + std::to_string(r.n_train) + "/" +
             std::to_string(r.n_val) + "/" + std::to_string(r.n_test);
    }
  }
  ok = ok && min_acc >= 0.90 && min_auc >= 0.95 && max_s <= 300.0;
  return {ok, "5 seeds, min accuracy " + fmt(min_acc) + " (>= 0.90), min AUROC " + fmt(min_auc) +
                  " (>= 0.95), slowest run " + fmt(max_s, 3) + " s (<= 300)" + why};
}

// O1/O2 channel (either end of a pair) or an alpha/gamma FPC column.
bool occipital_or_fpc_band(const std::string& text) {
  const auto d = FeatureDescriptor::parse(text);
  const bool band_ok = d.band == "alpha" || d.band == "gamma";
  if (d.kind == FeatureDescriptor::Kind::band_power && band_ok) return true;
  if (d.kind == FeatureDescriptor::Kind::pair && d.feature_id == "fpc" && band_ok) return true;
  for (const auto& ch : d.channels())
    if (ch == "O1" || ch == "O2") return true;
  return false;
}

Outcome explainability() {
  std::size_t good_seeds = 0;
  std::string counts;
  for (const auto& r : eyes_runs) {
    std::size_t n = 0;
    for (const auto& d : r.top10) n += occipital_or_fpc_band(d);
    good_seeds += r.ok && n >= 5;
    counts += (counts.empty() ? "" : ",") + std::to_string(n);
  }
  return {good_seeds >= 4, "qualifying features in top 10 per seed [" + counts + "], seeds with >= 5: " +
                               std::to_string(good_seeds) + "/5 (need 4)"};
}

// ---------------------------------------------------------------------------
// Statistical tests
// ---------------------------------------------------------------------------

Outcome statistics_suite() {
  bool ok = true;
  std::string detail;

  // Exact Mann-Whitney against full enumeration over every tie-free layout.
  std::size_t layouts = 0, exact_bad = 0;
  for (std::size_t n1 = 2; n1 <= 4; ++n1)
    for (std::size_t n2 = 2; n2 <= 4; ++n2) {
      const std::size_t n = n1 + n2;
      std::vector<bool> pick(n, false);
      std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(n1), true);
      do {
        std::vector<double> x, y;
        for (std::size_t i = 0; i < n; ++i) (pick[i] ? x : y).push_back(static_cast<double>(i));
        ++layouts;
        if (std::abs(stats::mann_whitney_u(x, y).p - oracle::mwu_enumeration_p(x, y)) > 1e-12) ++exact_bad;
      } while (std::prev_permutation(pick.begin(), pick.end()));
    }
  ok = ok && exact_bad == 0;
  detail += "exact MWU " + std::to_string(layouts - exact_bad) + "/" + std::to_string(layouts);

  // Normal approximation against a 1e5-shuffle permutation oracle.
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> nd;
  double worst = 0;
  for (int c = 0; c < 100; ++c) {
    const std::size_t n1 = 10 + gen() % 31, n2 = 10 + gen() % 31;
    const double shift = 0.8 * std::uniform_real_distribution<double>(0, 1)(gen);
    std::vector<double> x(n1), y(n2);
    for (auto& v : x) v = nd(gen) + shift;
    for (auto& v : y) v = nd(gen);
    if (c % 2) {
      for (auto& v : x) v = std::round(v * 2);
      for (auto& v : y) v = std::round(v * 2);
    }
    const double p = stats::mann_whitney_u(x, y).p;
    worst = std::max(worst, std::abs(p - oracle::mwu_permutation_p(x, y, 100000, 7000 + static_cast<std::uint64_t>(c))));
  }
  ok = ok && worst <= 0.02;
  detail += "; approx MWU max |dp| " + fmt(worst, 3) + " over 100 cases (<= 0.02)";

  const std::vector<std::vector<double>> kw{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  const double h = stats::kruskal_wallis(kw).statistic;
  ok = ok && std::abs(h - 7.2) <= 1e-12;
  detail += "; KW H " + fmt(h, 12);

  double by_worst = 0;
  for (int v = 0; v < 1000; ++v) {
    std::vector<double> p(1 + gen() % 200);
    for (auto& x : p) x = std::uniform_real_distribution<double>(0, 1)(gen);
    if (v % 3 == 0) p[gen() % p.size()] = p[0];   // ties
    if (v % 5 == 0) p[gen() % p.size()] = 1e-9;   // tiny values
    const auto got = stats::benjamini_yekutieli(p);
    const auto want = oracle::by_direct(p);
    for (std::size_t i = 0; i < p.size(); ++i) by_worst = std::max(by_worst, std::abs(got[i] - want[i]));
  }
  ok = ok && by_worst <= 1e-12;
  detail += "; BY max error " + fmt(by_worst, 3) + " over 1000 vectors";
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// Connectivity
// ---------------------------------------------------------------------------

Outcome connectivity_suite() {
  using namespace knoweeg::connectivity;
  bool ok = true;
  std::string detail;

  const auto d14 = checks::random_connectivity_dataset(500, Montage::emotiv14(), 1001);
  const auto d16 = checks::random_connectivity_dataset(500, Montage::tuh16(), 1002);
  const auto r14 = checks::connectivity_invariants(d14);
  const auto r16 = checks::connectivity_invariants(d16);
  ok = ok && r14.n_failures == 0 && r16.n_failures == 0;
  detail += "1000 samples, " + std::to_string(r14.checked + r16.checked) + " values, " +
            std::to_string(r14.n_failures + r16.n_failures) + " invariant violations";
  for (const auto& f : r14.failures) detail += " | " + f;
  for (const auto& f : r16.failures) detail += " | " + f;

  std::size_t count_bad = 0;
  for (auto m : all_metrics()) {
    const std::size_t want14 = m == Metric::correlation ? 182 : m == Metric::fpc ? 630 : 546;
    const std::size_t want16 = m == Metric::correlation ? 240 : m == Metric::fpc ? 816 : 720;
    count_bad += metric_descriptors(m, Montage::emotiv14()).size() != want14;
    count_bad += metric_descriptors(m, Montage::tuh16()).size() != want16;
  }
  ok = ok && count_bad == 0;
  detail += "; column counts " + std::string(count_bad == 0 ? "ok" : "wrong");

  double tone_worst = 0, same_worst = 0;
  struct Tone {
    double freq;
    Band band;
  };
  for (const auto& t : {Tone{6.0, Band::theta}, Tone{10.0, Band::alpha}, Tone{22.0, Band::beta}, Tone{34.0, Band::gamma}})
    for (double lag : {0.3, 0.9, -1.4, 2.6}) {
      const auto d = checks::lagged_pair(t.freq, lag, 0.0, 1);
      const auto set = spectral_metric(d, Metric::pli, spectral::default_plan(d.n_timesteps(), d.sample_rate()));
      tone_worst = std::max(tone_worst, std::abs(set.matrix.at(0, static_cast<std::size_t>(t.band)) - 1.0));
    }
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = checks::lagged_pair(10.0, 0.0, 0.5, seed, true);
    const auto set = spectral_metric(d, Metric::pli, spectral::default_plan(d.n_timesteps(), d.sample_rate()));
    for (double v : set.matrix.values) same_worst = std::max(same_worst, std::abs(v));
  }
  ok = ok && tone_worst <= 1e-9 && same_worst <= 1e-9;
  detail += "; lagged tone |PLI-1| " + fmt(tone_worst, 3) + ", identical |PLI| " + fmt(same_worst, 3);
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// Fusion Forest
// ---------------------------------------------------------------------------

FeatureMatrix noise_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, const std::string& prefix,
                           ModeTag tag, int levels = 0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  FeatureMatrix m;
  m.mode_tag = tag;
  m.n_samples = rows;
  for (std::size_t c = 0; c < cols; ++c)
    m.descriptors.push_back(FeatureDescriptor::electrode(prefix, "f" + std::to_string(c)));
  m.values.resize(rows * cols);
  for (auto& v : m.values) v = levels > 0 ? static_cast<double>(gen() % static_cast<unsigned>(levels)) : nd(gen);
  return m;
}

Outcome forest_suite() {
  using namespace knoweeg::forest;
  bool ok = true;
  std::string detail;

  struct SizeCase {
    std::size_t a, b, want_a, want_b;
  };
  std::size_t size_bad = 0;
  for (const auto& c : {SizeCase{100, 9, 10, 3}, SizeCase{10000, 100, 100, 10}, SizeCase{2, 2, 1, 1}}) {
    const auto fa = noise_matrix(12, c.a, 1, "A", ModeTag::per_electrode);
    const auto fb = noise_matrix(12, c.b, 2, "B", ModeTag::connectivity);
    std::vector<int> y(12);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
    const auto m = fit(fa, fb, y, 2, 10, 3);
    for (const auto& t : m.trees) size_bad += t.subset_a.size() != c.want_a || t.subset_b.size() != c.want_b;
  }
  ok = ok && size_bad == 0;
  detail += "subset sizes " + std::string(size_bad == 0 ? "exact" : "wrong");

  std::size_t root_ok = 0, sum_bad = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t rows = 10 + seed % 31, na = 3 + seed % 9, nb = 2 + seed % 7;
    const int levels = seed % 4 == 0 ? 3 : 0;
    const auto fa = noise_matrix(rows, na, 10 * seed + 1, "A", ModeTag::per_electrode, levels);
    const auto fb = noise_matrix(rows, nb, 10 * seed + 2, "B", ModeTag::connectivity, levels);
    const int k = 2 + static_cast<int>(seed % 3);
    std::mt19937_64 gen(seed);
    std::vector<int> y(rows);
    for (auto& v : y) v = static_cast<int>(gen() % static_cast<unsigned>(k));
    y[0] = 0;
    y[1] = 1;
    const auto m = fit(fa, fb, y, k, 4, seed);
    double s = 0;
    for (double v : m.importances) s += v;
    sum_bad += std::abs(s - 1.0) > 1e-12;

    std::vector<std::vector<double>> cols;
    for (std::size_t c = 0; c < na; ++c) cols.push_back(fa.column(c));
    for (std::size_t c = 0; c < nb; ++c) cols.push_back(fb.column(c));
    const auto draw = draw_tree(seed, 0, rows, na, nb);
    const auto& tree = m.trees[0];
    const auto want = oracle::best_root_split(cols, y, draw.weights, tree.feature_pool(), k);
    const auto& root = tree.nodes[0];
    bool match = false;
    if (want.optima.empty() || want.decrease <= 0.0) {
      match = root.is_leaf() || root.gain == 0.0;
    } else if (!root.is_leaf() && std::abs(root.gain - want.decrease) <= 1e-12 * std::max(1.0, want.decrease)) {
      for (const auto& [col, thr] : want.optima)
        match = match || (static_cast<std::size_t>(root.feature) == col && std::abs(root.threshold - thr) < 1e-12);
    }
    root_ok += match;
  }
  ok = ok && root_ok == 100 && sum_bad == 0;
  detail += "; root split matches oracle " + std::to_string(root_ok) + "/100; importance sums off by >1e-12: " +
            std::to_string(sum_bad);

  double unique = 0;
  for (std::size_t k = 0; k < 1000; ++k) {
    const auto d = draw_tree(99, k, 1000, 4, 4);
    std::size_t distinct = 0;
    for (auto w : d.weights) distinct += w > 0;
    unique += static_cast<double>(distinct) / 1000.0;
  }
  unique /= 1000.0;
  ok = ok && std::abs(unique - (1.0 - std::exp(-1.0))) <= 0.02;
  detail += "; bootstrap unique fraction " + fmt(unique) + " over 1000 trees";

  const auto fa = noise_matrix(200, 120, 5, "A", ModeTag::per_electrode);
  const auto fb = noise_matrix(200, 60, 6, "B", ModeTag::connectivity);
  std::vector<int> y(200);
  for (std::size_t r = 0; r < 200; ++r) y[r] = fa.at(r, 0) + fb.at(r, 0) > 0 ? 1 : 0;
  std::set<std::string> hashes;
  for (std::size_t threads : {1, 2, 8}) hashes.insert(model_hash(fit(fa, fb, y, 2, 100, 42, threads)));
  ok = ok && hashes.size() == 1;
  detail += "; model hash across 1/2/8 workers " + std::string(hashes.size() == 1 ? "identical" : "differs");
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// Filter
// ---------------------------------------------------------------------------

Outcome filter_suite() {
  bool ok = true;
  const double alpha = 0.05;
  std::size_t label_kept = 0, any_false_keep = 0, nest_bad = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    const std::size_t rows = 100, cols = 200;
    std::vector<int> y(rows);
    for (std::size_t r = 0; r < rows; ++r) y[r] = static_cast<int>(r % 2);
    std::shuffle(y.begin(), y.end(), gen);

    // Pure noise: any keep is a false keep.
    auto noise = noise_matrix(rows, cols, 500 + seed, "N", ModeTag::per_electrode);
    const auto rep = stats::compute_filter_report(noise, y, 2, alpha);
    any_false_keep += rep.n_kept() > 0;

    // Noise plus a label copy and a ladder of weak signals.
    auto mixed = noise;
    for (std::size_t r = 0; r < rows; ++r) {
      mixed.values[r * cols + 0] = static_cast<double>(y[r]);
      for (std::size_t c = 1; c < 20; ++c) mixed.values[r * cols + c] += 0.05 * static_cast<double>(c) * y[r];
    }
    const auto loose = stats::compute_filter_report(mixed, y, 2, 0.05);
    const auto strict = stats::compute_filter_report(mixed, y, 2, 0.01);
    label_kept += loose.entries[0].kept && strict.entries[0].kept;
    for (std::size_t c = 0; c < cols; ++c) nest_bad += strict.entries[c].kept && !loose.entries[c].kept;
  }
  const double rate = static_cast<double>(any_false_keep) / 50.0;
  ok = label_kept == 50 && rate <= alpha + 0.02 && nest_bad == 0;
  return {ok, "label copy kept in " + std::to_string(label_kept) + "/50; false-keep rate " + fmt(rate, 3) +
                  " (<= " + fmt(alpha + 0.02, 3) + "); kept(0.01) outside kept(0.05): " + std::to_string(nest_bad)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"eyes_task_end_to_end", eyes_end_to_end},
      {"explainability_recovery", explainability},
      {"statistical_oracles", statistics_suite},
      {"connectivity_invariants", connectivity_suite},
      {"fusion_forest", forest_suite},
      {"filter_correctness", filter_suite},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " (" << fmt(seconds_since(t0), 3) << " s): " << o.detail
              << std::endl;
  }
  std::error_code ec;
  fs::remove_all(scratch_dir(), ec);
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}

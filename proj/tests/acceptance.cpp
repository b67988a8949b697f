// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 1 5 10     run a subset
//
// Exit status is non-zero when a gating criterion fails. Criterion 9 is
// reported but never gates.
#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "deepjoint/checkpoint.hpp"
#include "deepjoint/experiments.hpp"
#include "deepjoint/optim.hpp"
#include "deepjoint/synth.hpp"
#include "support/gradient_suite.hpp"

using namespace deepjoint;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kExact = 1e-12;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::size_t> all_of(const Cohort& c) {
  std::vector<std::size_t> v(c.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Pinned configuration of the synthetic experiments (criteria 7, 8, 9).
ModelConfig experiment_model() {
  ModelConfig m;
  m.hidden_dim = 10;
  m.survival_layers = m.intensity_layers = m.missingness_layers = {50};
  return m;
}

TrainConfig experiment_training() {
  TrainConfig t;
  t.lr = 5e-3;
  t.batch_size = 128;
  t.alpha = 0.1;
  t.joint_epochs = 100;
  t.max_epochs = 200;
  t.patience = 10;
  t.val_fraction = 0.1;
  return t;
}

EvaluationConfig experiment_evaluation() {
  EvaluationConfig e;
  e.horizons = {7.0, 30.0};
  e.bootstrap = 100;
  e.test_fraction = 0.2;
  return e;
}

// 2000 patients per regime.
GeneratorConfig experiment_cohort(std::uint64_t seed) {
  GeneratorConfig g;
  g.n_patients = 4000;
  g.regime_b_fraction = 0.5;
  g.seed = seed;
  return g;
}

// 1 -------------------------------------------------------------------------------
Outcome gradient_suite_criterion() {
  const double start = cpu_seconds();
  const auto results = gradient_suite::run_all(100);
  const double cpu = cpu_seconds() - start;
  Outcome o;
  const auto worst = std::max_element(results.begin(), results.end(),
                                      [](const auto& a, const auto& b) { return a.worst < b.worst; });
  for (const auto& r : results) {
    if (!(r.worst <= kGradTol)) {
      o.pass = false;
      std::cout << "  over tolerance: " << r.name << " " << r.worst << "\n";
    }
  }
  o.pass = o.pass && cpu < 120.0;
  o.detail = std::to_string(results.size()) + " components x 100 seeds, worst " + worst->name + " " +
             fmt(worst->worst, 3) + " (tol 1e-4), cpu " + fmt(cpu, 3) + " s (limit 120)";
  return o;
}

// 2 -------------------------------------------------------------------------------
Outcome monotone_criterion() {
  Outcome o;
  std::size_t violations = 0, anchor_failures = 0;
  double worst_anchor = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Rng rng(derive_seed(2, "monotone", static_cast<std::uint64_t>(i)));
    std::uniform_int_distribution<int> width(1, 8), dim(1, 4), act(0, 2);
    const Activation acts[] = {Activation::tanh, Activation::softplus, Activation::sigmoid};
    const std::size_t d = static_cast<std::size_t>(dim(rng));
    std::vector<std::size_t> hidden{static_cast<std::size_t>(width(rng))};
    if (i % 2 == 1) hidden.push_back(static_cast<std::size_t>(width(rng)));
    PositiveMlp net({d, hidden, acts[act(rng)], 1, std::nullopt}, "I", rng);
    const Tensor h = oracle::random_tensor(1, d, rng, -3.0, 3.0);
    std::uniform_real_distribution<double> gap(0.0, 24.0);
    double e1 = gap(rng), e2 = gap(rng);
    if (e1 > e2) std::swap(e1, e2);
    const double anchor = std::abs(positive_mlp_forward(net, h, 0.0));
    worst_anchor = std::max(worst_anchor, anchor);
    if (!(anchor <= kExact)) ++anchor_failures;
    if (!(positive_mlp_forward(net, h, e1) <= positive_mlp_forward(net, h, e2) + kExact)) ++violations;
  }
  double nested = 0.0;
  for (int s = 0; s < 100; ++s) nested = std::max(nested, gradient_suite::temporal_loss_error(s));
  o.pass = violations == 0 && anchor_failures == 0 && nested <= kGradTol;
  o.detail = "10000 triples, " + std::to_string(violations) + " order violations, max |Lambda(h,0)| " +
             fmt(worst_anchor, 3) + "; nested l_I FD error " + fmt(nested, 3) + " (tol 1e-4)";
  return o;
}

// 3 -------------------------------------------------------------------------------
Outcome cox_criterion() {
  double worst_ll = 0.0, worst_breslow = 0.0;
  bool shape_ok = true;
  std::size_t tied = 0;
  for (int c = 0; c < 50; ++c) {
    Rng rng(derive_seed(3, "cox", static_cast<std::uint64_t>(c)));
    const std::size_t n = 2 + static_cast<std::size_t>(c) % 9;  // 2..10 patients
    const auto labels = oracle::random_labels(n, rng, 4);
    std::set<double> times;
    for (const auto& l : labels) tied += l.event && !times.insert(l.time).second;
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<double> eta(n);
    for (auto& e : eta) e = u(rng);
    if (std::none_of(labels.begin(), labels.end(), [](const auto& l) { return l.event; })) continue;
    worst_ll = std::max(worst_ll, std::abs(cox_partial_loglik(eta, labels) - oracle::cox_loglik(eta, labels)));
    const auto table = breslow_fit(eta, labels);
    const auto expected = oracle::breslow(eta, labels);
    if (table.event_times.size() != expected.size()) {
      shape_ok = false;
      continue;
    }
    std::size_t k = 0;
    for (const auto& [t, cum] : expected) {
      shape_ok = shape_ok && table.event_times[k] == t;
      worst_breslow = std::max(worst_breslow, std::abs(table.cumulative_baseline[k] - cum));
      ++k;
    }
  }
  Outcome o;
  o.pass = shape_ok && worst_ll <= kExact && worst_breslow <= kExact && tied > 0;
  o.detail = "50 cohorts (2..10 patients, " + std::to_string(tied) + " tied event times), max |dloglik| " +
             fmt(worst_ll, 3) + ", max |dBreslow| " + fmt(worst_breslow, 3) + " (tol 1e-12)";
  return o;
}

// 4 -------------------------------------------------------------------------------
struct ExpCurves {
  std::vector<double> rate;
  [[nodiscard]] std::size_t size() const { return rate.size(); }
  [[nodiscard]] double survival(std::size_t i, double t) const { return std::exp(-rate[i] * t); }
};

Outcome metrics_criterion() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (int c = 0; c < 50; ++c) {
    Rng rng(derive_seed(4, "metrics", static_cast<std::uint64_t>(c)));
    const std::size_t n = 2 + static_cast<std::size_t>(c) % 7;  // 2..8 patients
    const auto labels = oracle::random_labels(n, rng);
    ExpCurves curves;
    std::uniform_int_distribution<int> level(1, 4);
    for (std::size_t i = 0; i < n; ++i) curves.rate.push_back(0.1 * level(rng));
    const oracle::Curve oc = [&](std::size_t i, double t) { return curves.survival(i, t); };
    for (double h : {2.0, 4.0, 6.0}) {
      std::vector<double> risk;
      for (std::size_t i = 0; i < n; ++i) risk.push_back(1.0 - curves.survival(i, h));
      try {
        worst = std::max(worst, std::abs(cindex_td(risk, labels, h) - oracle::cindex(risk, labels, h)));
        worst = std::max(worst, std::abs(cindex_integrated(curves, labels, h) - oracle::integrated_cindex(oc, labels, h)));
        ++checked;
      } catch (const ContractError&) {
        // no comparable pair at this horizon
      }
      if (oracle::censoring_survival(labels, h, false) > 0.0) {
        worst = std::max(worst, std::abs(brier(curves, labels, h) - oracle::brier(oc, labels, h)));
        ++checked;
      }
    }
  }
  const std::vector<SurvivalLabel> labels{{1, true}, {2, true}, {3, false}, {4, true}, {5, false}};
  const double perfect = cindex_td(std::vector<double>{5, 4, 3, 2, 1}, labels, 10.0);
  const double ties = cindex_td(std::vector<double>(5, 0.3), labels, 10.0);
  Outcome o;
  o.pass = worst <= kExact && checked > 0 && perfect == 1.0 && ties == 0.5;
  o.detail = "50 cohorts (2..8 patients), " + std::to_string(checked) + " metric values, max deviation " +
             fmt(worst, 3) + " (tol 1e-12); perfect " + fmt(perfect, 17) + ", ties " + fmt(ties, 17);
  return o;
}

// 5 -------------------------------------------------------------------------------
Outcome exponential_recovery_criterion() {
  const double start = cpu_seconds();
  constexpr std::size_t n = 2000, d = 10;
  constexpr double rate = 0.5;  // per hour
  Rng rng(derive_seed(5, "exp-recovery"));
  std::exponential_distribution<double> gap(rate);
  PresenceRows rows;
  rows.gaps = Tensor(n, 1);
  for (auto& g : rows.gaps.data()) g = gap(rng);
  rows.next_mask = Tensor(n, 1);
  rows.intensity_weight = Tensor(n, 1, 1.0 / static_cast<double>(n));
  rows.missing_weight = Tensor(n, 1);
  rows.censored = Tensor(n, 1);
  const Tensor h(n, d, 0.5);  // constant embedding

  PositiveMlp head({d, {20}, Activation::tanh, 1, std::nullopt}, "I", rng);
  const auto params = head.parameters();
  AdamState state;
  const AdamConfig adam{2e-2, 0.9, 0.999, 1e-8, std::nullopt};
  double loss = 0.0;
  for (int step = 0; step < 1500; ++step) {
    ad::Graph g;
    ad::Var l = temporal_loss(head, g.constant(h), rows);
    loss = l.value().item();
    adam_step(params, g.backward(l), state, adam);
  }
  const Tensor h1(1, d, 0.5);
  double worst = 0.0;
  std::ostringstream os;
  for (double eps : {1.0, 2.0, 4.0}) {
    const double fitted = positive_mlp_forward(head, h1, eps);
    const double rel = std::abs(fitted - rate * eps) / (rate * eps);
    worst = std::max(worst, rel);
    os << " Lambda(" << eps << ")=" << fmt(fitted);
  }
  const double cpu = cpu_seconds() - start;
  Outcome o;
  o.pass = worst <= 0.15 && cpu < 300.0;
  o.detail = "n=2000, final l_I " + fmt(loss) + "," + os.str() + ", max rel error " + fmt(worst, 3) +
             " (tol 0.15), cpu " + fmt(cpu, 3) + " s (limit 300)";
  return o;
}

// 6 -------------------------------------------------------------------------------
Outcome degenerate_criterion() {
  GeneratorConfig gc;
  gc.n_patients = 300;
  gc.regime_b_fraction = 0.0;
  gc.seed = 6;
  const auto cohort = generate(gc).cohort;
  const auto members = all_of(cohort);
  ModelConfig m;
  m.hidden_dim = 6;
  m.survival_layers = m.intensity_layers = m.missingness_layers = {12};
  TrainConfig t;
  t.lr = 1e-2;
  t.batch_size = 64;
  t.alpha = 0.0;
  t.joint_epochs = 10;
  t.max_epochs = 15;
  t.patience = 4;
  t.val_fraction = 0.2;
  t.seed = 6;
  auto dj = fit_strategy(cohort, members, Strategy::deepjoint, m, t);
  auto ft = fit_strategy(cohort, members, Strategy::feature, m, t);
  bool alpha_ok = predict(dj.model, cohort, members).eta == predict(ft.model, cohort, members).eta &&
                  dj.model.breslow.cumulative_baseline == ft.model.breslow.cumulative_baseline;
  const auto ea = dj.model.encoder_parameters(), eb = ft.model.encoder_parameters();
  alpha_ok = alpha_ok && ea.size() == eb.size();
  for (std::size_t k = 0; alpha_ok && k < ea.size(); ++k) alpha_ok = ea[k]->value == eb[k]->value;

  bool grud_ok = true;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(6, "grud", static_cast<std::uint64_t>(seed)));
    Encoder d({CellKind::gru_d, 3, 5, 1}, "d", rng);
    Encoder plain({CellKind::gru, 6, 5, 1}, "g", rng);
    auto& dcell = std::get<GruDCell>(d.layers().front());
    for (auto* p : dcell.decay_parameters())
      for (auto& v : p->value.data()) v = 0.0;
    auto dp = dcell.gru().parameters();
    auto gp = std::get<GruCell>(plain.layers().front()).parameters();
    for (std::size_t k = 0; k < gp.size(); ++k) gp[k]->value = dp[k]->value;
    // Full observation: GRU-D input is [x, mask=1], which the plain GRU gets verbatim.
    SequenceBatch bd = gradient_suite::ragged_batch(3, rng, true);
    SequenceBatch bg = bd;
    for (std::size_t t = 0; t < bd.steps(); ++t) {
      bd.observed[t] = Tensor(3, 3, 1.0);
      Tensor x(3, 6);
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) {
          x(r, c) = bd.inputs[t](r, c);
          x(r, c + 3) = 1.0;
        }
      bg.inputs[t] = x;
    }
    ad::Graph g1, g2;
    const auto a = d.encode(g1, bd);
    const auto b = plain.encode(g2, bg);
    for (std::size_t t = 0; t < a.size(); ++t) grud_ok = grud_ok && a[t].value() == b[t].value();
  }
  Outcome o;
  o.pass = alpha_ok && grud_ok;
  o.detail = std::string("alpha=0 DeepJoint vs Feature (predictions, baseline, encoder weights) ") +
             (alpha_ok ? "bitwise equal" : "DIFFER") + "; GRU-D zero decay vs GRU over 20 seeds " +
             (grud_ok ? "bitwise equal" : "DIFFER");
  return o;
}

// 7 -------------------------------------------------------------------------------
Outcome null_shift_criterion() {
  auto g = experiment_cohort(7);
  g.shift_rho = 0.0;
  g.shift_beta = {0.0};
  const auto cohort = generate(g).cohort;
  const std::vector<Strategy> strategies(std::begin(kAllStrategies), std::end(kAllStrategies));
  const auto table =
      run_transfer(cohort, strategies, experiment_model(), experiment_training(), experiment_evaluation(), 7);
  std::cout << format_transfer_table(table);
  Outcome o;
  double worst_ratio = 0.0;
  for (const auto& r : table.rows) {
    const double ratio = r.difference() / r.difference_std();
    worst_ratio = std::max(worst_ratio, ratio);
    if (!(r.difference() <= 2.0 * r.difference_std())) {
      o.pass = false;
      std::cout << "  outside 2 std: " << to_string(r.strategy) << " target " << r.target << "\n";
    }
  }
  o.detail = std::to_string(table.rows.size()) + " strategy/regime rows, largest |difference| / std " +
             fmt(worst_ratio, 3) + " (limit 2)";
  return o;
}

// 8 -------------------------------------------------------------------------------
Outcome shift_criterion() {
  const double start = cpu_seconds();
  const std::vector<Strategy> strategies{Strategy::ignore, Strategy::resample, Strategy::deepjoint};
  std::map<Strategy, std::vector<double>> losses;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cohort = generate(experiment_cohort(seed)).cohort;
    const auto table = run_transfer(cohort, strategies, experiment_model(), experiment_training(),
                                    experiment_evaluation(), seed);
    std::cout << "  seed " << seed << "\n" << format_transfer_table(table);
    // One value per seed: the mean over both target regimes.
    std::map<Strategy, double> sum;
    for (const auto& r : table.rows) sum[r.strategy] += 0.5 * r.difference();
    for (const auto& [s, v] : sum) losses[s].push_back(v);
  }
  std::cout << "  median transfer loss:";
  for (Strategy s : strategies) std::cout << " " << to_string(s) << " " << fmt(median(losses[s]));
  std::cout << "\n";
  const double dj = median(losses[Strategy::deepjoint]);
  const double cpu = cpu_seconds() - start;
  Outcome o;
  o.pass = dj <= median(losses[Strategy::ignore]) && dj <= median(losses[Strategy::resample]) && cpu < 3600.0;
  o.detail = "5 seeds, median integrated C-index transfer loss deepjoint " + fmt(dj) + " vs ignore " +
             fmt(median(losses[Strategy::ignore])) + ", resample " + fmt(median(losses[Strategy::resample])) +
             "; cpu " + fmt(cpu, 4) + " s (limit 3600)";
  return o;
}

// 9 -------------------------------------------------------------------------------
Outcome perturbation_criterion() {
  std::map<Strategy, std::vector<double>> deltas;
  const PerturbConfig probe{PerturbKind::gap_jitter, 0.01, 5};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cohort = generate(experiment_cohort(seed)).cohort;
    const auto split = split_random(cohort.size(), 0.2, 0.0, derive_seed(seed, "split"));
    for (Strategy s : {Strategy::feature, Strategy::deepjoint}) {
      auto t = experiment_training();
      t.seed = seed;
      auto fit = fit_strategy(cohort, split.train, s, experiment_model(), t);
      const auto rep = run_perturb(fit.model, cohort, split.test, probe, t.alpha, derive_seed(seed, "perturb"));
      deltas[s].push_back(rep.delta.survival);
      std::cout << "  seed " << seed << " " << std::left << std::setw(10) << to_string(s) << std::right
                << " survival loss " << fmt(rep.baseline.survival) << "  delta " << fmt(rep.delta.survival, 3)
                << "\n";
    }
  }
  const double dj = median(deltas[Strategy::deepjoint]);
  const double ft = median(deltas[Strategy::feature]);
  Outcome o;
  o.pass = dj <= ft;
  o.detail = "r=0.01 gap jitter, 5 seeds, median survival-loss change deepjoint " + fmt(dj, 3) + " vs feature " +
             fmt(ft, 3);
  return o;
}

// 10 ------------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool run_cli(const std::string& args) {
  const std::string cmd = std::string(DEEPJOINT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

Outcome reproducibility_criterion() {
  const fs::path dir = fs::temp_directory_path() / "deepjoint_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "config.yaml";
  std::ofstream(cfg) << "seed: 10\n"
                        "generator: {n_patients: 400}\n"
                        "model: {hidden_dim: 5, survival_layers: [8], intensity_layers: [8], missingness_layers: [8]}\n"
                        "train: {lr: 0.01, batch_size: 64, joint_epochs: 5, max_epochs: 8, patience: 3}\n"
                        "evaluation: {horizons: [7, 30], bootstrap: 20}\n"
                        "search: {draws: 2, hidden_dim: [4, 5], nodes: [6], batch_size: [64]}\n"
                        "perturb: {copies: 2}\n";
  const std::string base = "--config " + cfg.string();
  const std::string cohort = (dir / "gen1" / "cohort.jsonl").string();
  const std::string with_cohort = base + " --cohort " + cohort;
  const std::string ckpt = " --checkpoint " + (dir / "train1" / "checkpoint.json").string() + " --split " +
                           (dir / "train1" / "split.json").string();
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "generate " + base},
      {"train", "train " + with_cohort + " --strategy deepjoint"},
      {"evaluate", "evaluate " + with_cohort + ckpt},
      {"transfer", "transfer " + with_cohort + " --strategy feature,deepjoint"},
      {"search", "search " + with_cohort + " --strategy feature"},
      {"perturb", "perturb " + with_cohort + ckpt},
  };
  Outcome o;
  std::vector<std::string> failed;
  for (const auto& [name, args] : commands) {
    bool same = true;
    for (const char* run : {"1", "2"}) {
      const fs::path out = dir / (name + run);
      if (!run_cli(args + " --out " + out.string())) {
        same = false;
        failed.push_back(name + " exited non-zero");
      }
    }
    if (!same) continue;
    // Identical manifests, and identical artifacts apart from the manifests' timings.
    const fs::path a = dir / (name + "1"), b = dir / (name + "2");
    same = without_timings(nlohmann::json::parse(slurp(a / "manifest.json"))) ==
           without_timings(nlohmann::json::parse(slurp(b / "manifest.json")));
    for (const auto& entry : fs::directory_iterator(a)) {
      if (entry.path().filename() == "manifest.json") continue;
      same = same && slurp(entry.path()) == slurp(b / entry.path().filename());
    }
    if (!same) failed.push_back(name + " differs between runs");
  }

  // Checkpoint round trips for every strategy.
  GeneratorConfig gc;
  gc.n_patients = 200;
  gc.seed = 10;
  const auto small = generate(gc).cohort;
  const auto members = all_of(small);
  ModelConfig m;
  m.hidden_dim = 4;
  m.survival_layers = m.intensity_layers = m.missingness_layers = {6};
  TrainConfig t;
  t.lr = 1e-2;
  t.batch_size = 64;
  t.joint_epochs = 3;
  t.max_epochs = 5;
  t.val_fraction = 0.2;
  std::size_t round_trips = 0;
  for (Strategy s : kAllStrategies) {
    auto fit = fit_strategy(small, members, s, m, t);
    auto loaded = checkpoint_from_json(nlohmann::json::parse(checkpoint_json(fit.model, t).dump()));
    const auto before = predict(fit.model, small, members);
    const auto after = predict(loaded.model, small, members);
    if (before.eta == after.eta && before.table.cumulative_baseline == after.table.cumulative_baseline)
      ++round_trips;
    else
      failed.push_back(std::string("checkpoint ") + std::string(to_string(s)));
  }
  o.pass = failed.empty();
  o.detail = std::to_string(commands.size()) + " commands re-run with identical manifests and artifacts, " +
             std::to_string(round_trips) + "/7 checkpoint round trips bitwise";
  for (const auto& f : failed) o.detail += "; " + f;
  fs::remove_all(dir);
  return o;
}

struct Criterion {
  int id;
  const char* title;
  bool gating;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient suite", true, gradient_suite_criterion},
      {2, "monotone intensity head", true, monotone_criterion},
      {3, "Cox and Breslow oracle", true, cox_criterion},
      {4, "metric oracles", true, metrics_criterion},
      {5, "exponential recovery", true, exponential_recovery_criterion},
      {6, "degenerate-config equivalence", true, degenerate_criterion},
      {7, "no-shift null", true, null_shift_criterion},
      {8, "shift experiment", true, shift_criterion},
      {9, "perturbation probe (not gating)", false, perturbation_criterion},
      {10, "reproducibility", true, reproducibility_criterion},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int gating_failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const Stopwatch clock;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.title << ": " << o.detail << " ["
              << fmt(clock.seconds(), 3) << " s]" << std::endl;
    if (!o.pass && c.gating) ++gating_failures;
  }
  return gating_failures == 0 ? 0 : 1;
}

#include "horizonlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "horizonlab/util.hpp"

namespace horizonlab::harness {
namespace {

constexpr std::uint64_t kEvalStream = 0x6576616c72756e73ull;   // "evalruns"
constexpr std::uint64_t kPhaseStream = 0x7068617365736571ull;  // "phaseseq"

void set_precision(std::ostream& os) {
  os << std::setprecision(17);
}

}  // namespace

std::vector<datasets::TaskInstance> select_tasks(
    const datasets::Manifest& manifest, const std::vector<std::string>& bands,
    const std::string& split) {
  if (split != "train" && split != "test" && split != "all") {
    throw std::invalid_argument("split must be train, test, or all; got \"" +
                                split + "\"");
  }
  std::unordered_set<std::string> wanted(bands.begin(), bands.end());
  std::vector<datasets::TaskInstance> out;
  for (const auto& inst : manifest.instances) {
    if (!wanted.empty() && wanted.count(inst.band) == 0) continue;
    if (split != "all" && inst.split != split) continue;
    out.push_back(inst);
  }
  return out;
}

Estimates estimate_success(const std::vector<std::vector<bool>>& outcomes) {
  if (outcomes.empty()) {
    throw std::invalid_argument("estimate_success: no instances");
  }
  const std::size_t k = outcomes.front().size();
  if (k == 0) throw std::invalid_argument("estimate_success: k must be >= 1");
  long long pass = 0, successes = 0;
  for (const auto& row : outcomes) {
    if (row.size() != k) {
      throw std::invalid_argument(
          "estimate_success: ragged outcome table (all instances need the "
          "same rollout count)");
    }
    bool any = false;
    for (bool b : row) {
      if (b) {
        ++successes;
        any = true;
      }
    }
    if (any) ++pass;
  }
  Estimates e;
  e.pass_at_k = static_cast<double>(pass) / static_cast<double>(outcomes.size());
  e.avg_at_k = static_cast<double>(successes) /
               static_cast<double>(outcomes.size() * k);
  return e;
}

EvalReport evaluate(const policy::SoftmaxSequencePolicy& policy,
                    const datasets::Manifest& manifest,
                    const EvalOptions& options) {
  if (options.k < 1) throw std::invalid_argument("evaluate: k must be >= 1");
  if (options.temperature <= 0.0) {
    throw std::invalid_argument("evaluate: temperature must be > 0");
  }

  EvalReport report;
  report.k = options.k;
  report.temperature = options.temperature;
  report.seed = options.seed;
  report.checkpoint_digest = options.checkpoint_digest;

  std::unordered_set<std::string> declared;
  for (const auto& band : manifest.bands) declared.insert(band.label);
  for (const auto& label : options.bands) {
    if (declared.count(label) == 0) {
      report.warnings.push_back("band \"" + label +
                                "\" is not declared in the manifest; skipped");
    }
  }

  const std::unordered_set<std::string> wanted(options.bands.begin(),
                                               options.bands.end());
  const int max_tokens =
      grammar::max_action_tokens(policy.gspec(), options.parse_mode);
  (void)max_tokens;  // rollout derives its own cap; kept for clarity of intent

  for (const auto& band : manifest.bands) {
    if (!wanted.empty() && wanted.count(band.label) == 0) continue;

    std::vector<const datasets::TaskInstance*> members;
    for (const auto& inst : manifest.instances) {
      if (inst.band != band.label) continue;
      if (options.split != "all" && inst.split != options.split) continue;
      members.push_back(&inst);
    }
    if (members.empty()) {
      report.warnings.push_back("band \"" + band.label + "\" has no " +
                                options.split + " instances; row omitted");
      continue;
    }

    std::vector<std::vector<bool>> outcomes;
    outcomes.reserve(members.size());
    double horizon_sum = 0.0;
    long long horizon_n = 0;
    double correct_sum = 0.0;
    long long correct_n = 0;

    for (const auto* inst : members) {
      const std::uint64_t id_hash = util::fnv1a(inst->id);
      std::vector<bool> row(options.k, false);
      for (int rep = 0; rep < options.k; ++rep) {
        auto environment = env::make_env(*inst, options.reward_mode);
        const int h =
            options.h_max > 0
                ? options.h_max
                : environment->default_budget(options.parse_mode.mode);
        auto rng = util::substream(options.seed, kEvalStream, id_hash,
                                   static_cast<std::uint64_t>(rep));
        rl::RolloutResult rr =
            rl::rollout(*environment, policy, options.parse_mode,
                        options.temperature, h, options.window, rng,
                        inst->id);
        if (rr.trajectory.outcome == core::Outcome::success) {
          row[rep] = true;
          horizon_sum += core::effective_horizon(rr.trajectory);
          ++horizon_n;
        }
        for (double c : rr.step_correctness) {
          if (c >= 0.0) {
            correct_sum += c;
            ++correct_n;
          }
        }
      }
      outcomes.push_back(std::move(row));
    }
    const Estimates est = estimate_success(outcomes);

    BandRow row;
    row.band = band.label;
    row.instances = static_cast<int>(members.size());
    row.pass_at_k = est.pass_at_k;
    row.avg_at_k = est.avg_at_k;
    row.mean_effective_horizon =
        horizon_n > 0 ? horizon_sum / static_cast<double>(horizon_n) : -1.0;
    row.step_accuracy =
        correct_n > 0 ? correct_sum / static_cast<double>(correct_n) : -1.0;
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_report_json(const std::filesystem::path& path,
                       const EvalReport& report) {
  nlohmann::json j;
  j["k"] = report.k;
  j["temperature"] = report.temperature;
  j["seed"] = report.seed;
  j["checkpoint_digest"] = report.checkpoint_digest;
  j["warnings"] = report.warnings;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : report.rows) {
    nlohmann::json r;
    r["band"] = row.band;
    r["instances"] = row.instances;
    r["pass_at_k"] = row.pass_at_k;
    r["avg_at_k"] = row.avg_at_k;
    r["mean_effective_horizon"] = row.mean_effective_horizon;
    r["step_accuracy"] = row.step_accuracy;
    j["rows"].push_back(std::move(r));
  }
  std::ofstream os(path);
  if (!os) {
    throw std::runtime_error("cannot write report: " + path.string());
  }
  os << j.dump(2) << '\n';
}

void write_report_csv(const std::filesystem::path& path,
                      const EvalReport& report) {
  std::ofstream os(path);
  if (!os) {
    throw std::runtime_error("cannot write report: " + path.string());
  }
  set_precision(os);
  os << "band,instances,pass_at_k,avg_at_k,mean_effective_horizon,"
        "step_accuracy\n";
  for (const auto& row : report.rows) {
    os << row.band << ',' << row.instances << ',' << row.pass_at_k << ','
       << row.avg_at_k << ',' << row.mean_effective_horizon << ','
       << row.step_accuracy << '\n';
  }
}

SweepReport horizon_sweep(const policy::SoftmaxSequencePolicy& primary,
                          const EvalOptions& primary_options,
                          const policy::SoftmaxSequencePolicy* baseline,
                          const EvalOptions* baseline_options,
                          const datasets::Manifest& manifest) {
  if ((baseline == nullptr) != (baseline_options == nullptr)) {
    throw std::invalid_argument(
        "horizon_sweep: baseline policy and options must be supplied "
        "together");
  }
  SweepReport out;
  out.primary = evaluate(primary, manifest, primary_options);
  if (baseline != nullptr) {
    out.baseline = evaluate(*baseline, manifest, *baseline_options);
    std::unordered_map<std::string, double> base_pass;
    for (const auto& row : out.baseline->rows) {
      base_pass[row.band] = row.pass_at_k;
    }
    for (const auto& row : out.primary.rows) {
      auto it = base_pass.find(row.band);
      if (it == base_pass.end()) continue;
      out.gaps.push_back(
          {row.band, row.pass_at_k, it->second, row.pass_at_k - it->second});
    }
  }
  return out;
}

void write_sweep_csv(const std::filesystem::path& path,
                     const SweepReport& report) {
  std::ofstream os(path);
  if (!os) {
    throw std::runtime_error("cannot write sweep: " + path.string());
  }
  set_precision(os);
  if (report.baseline.has_value()) {
    os << "band,primary_pass_at_k,baseline_pass_at_k,gap\n";
    for (const auto& g : report.gaps) {
      os << g.band << ',' << g.primary_pass << ',' << g.baseline_pass << ','
         << g.gap << '\n';
    }
  } else {
    os << "band,primary_pass_at_k\n";
    for (const auto& row : report.primary.rows) {
      os << row.band << ',' << row.pass_at_k << '\n';
    }
  }
}

std::vector<CurriculumPhase> parse_curriculum_phases(const std::string& text) {
  std::vector<CurriculumPhase> phases;
  std::stringstream segments(text);
  std::string segment;
  while (std::getline(segments, segment, ';')) {
    if (segment.empty()) {
      throw std::invalid_argument("curriculum plan has an empty phase");
    }
    CurriculumPhase phase;
    std::string bands_part = segment;
    auto at = segment.find('@');
    if (at != std::string::npos) {
      bands_part = segment.substr(0, at);
      const std::string iters = segment.substr(at + 1);
      std::size_t used = 0;
      int value = 0;
      try {
        value = std::stoi(iters, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != iters.size() || value <= 0) {
        throw std::invalid_argument("curriculum phase \"" + segment +
                                    "\": iterations must be a positive "
                                    "integer");
      }
      phase.iterations = value;
    }
    std::stringstream bands(bands_part);
    std::string label;
    while (std::getline(bands, label, ',')) {
      if (!label.empty()) phase.bands.push_back(label);
    }
    if (phase.bands.empty()) {
      throw std::invalid_argument("curriculum phase \"" + segment +
                                  "\" names no bands");
    }
    phases.push_back(std::move(phase));
  }
  if (phases.empty()) {
    throw std::invalid_argument("curriculum plan is empty");
  }
  return phases;
}

CurriculumResult run_curriculum(policy::SoftmaxSequencePolicy& policy,
                                const datasets::Manifest& manifest,
                                const CurriculumPlan& plan,
                                std::ostream* jsonl, std::ostream* csv) {
  if (plan.phases.empty()) {
    throw std::invalid_argument("curriculum plan has no phases");
  }
  CurriculumResult out;
  for (std::size_t i = 0; i < plan.phases.size(); ++i) {
    const auto& phase = plan.phases[i];
    auto tasks = select_tasks(manifest, phase.bands, "train");
    if (tasks.empty()) {
      throw std::invalid_argument("curriculum phase " + std::to_string(i) +
                                  " selects no training tasks");
    }
    rl::TrainerConfig trainer = plan.trainer;
    if (phase.iterations > 0) trainer.iterations = phase.iterations;
    // Distinct rollout streams per phase; otherwise phase 2 would replay
    // phase 1's iteration-indexed randomness.
    trainer.seed =
        util::mix(plan.trainer.seed, kPhaseStream, static_cast<std::uint64_t>(i));
    rl::TrainLog log = rl::train(policy, tasks, trainer, plan.advantage,
                                 plan.is_config, jsonl, csv);
    const bool failed =
        std::any_of(log.iterations.begin(), log.iterations.end(),
                    [](const rl::IterationMetrics& m) { return m.rolled_back; });
    out.phase_logs.push_back(std::move(log));
    if (failed) {
      out.aborted = true;
      out.aborted_phase = static_cast<int>(i);
      return out;
    }
  }
  EvalOptions final_eval = plan.final_eval;
  if (final_eval.bands.empty()) {
    final_eval.bands = plan.phases.back().bands;
  }
  out.final_report = evaluate(policy, manifest, final_eval);
  return out;
}

namespace {

void check(SelftestResult& result, bool ok, const std::string& what) {
  result.lines.push_back((ok ? "ok: " : "FAIL: ") + what);
  if (!ok) result.passed = false;
}

}  // namespace

SelftestResult selftest() {
  SelftestResult result;

  {  // Discounted return: one-pass backward sweep vs direct double sum.
    const std::vector<double> rewards = {0.0, -0.5, 0.0, 1.0, -0.5, 2.0};
    const double gamma = 0.995;
    bool ok = true;
    for (std::size_t t = 0; t < rewards.size(); ++t) {
      double direct = 0.0;
      for (std::size_t k = t; k < rewards.size(); ++k) {
        direct += std::pow(gamma, static_cast<double>(k - t)) * rewards[k];
      }
      if (std::abs(core::discounted_return(rewards, gamma, t) - direct) >
          1e-12) {
        ok = false;
      }
    }
    check(result, ok, "discounted return matches direct summation");
  }

  {  // Normalization: zero mean / unit population std, batch == one group.
    const std::vector<double> values = {3.0, -1.0, 4.0, 1.0, -5.0, 9.0};
    auto z = rl::normalize(values, rl::NormMode::batch, 1e-8);
    double mean = 0.0, var = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(z.size());
    for (double v : z) var += (v - mean) * (v - mean);
    var /= static_cast<double>(z.size());
    bool ok = std::abs(mean) < 1e-9 && std::abs(var - 1.0) < 1e-9;
    const std::vector<int> ids(values.size(), 7);
    auto zg = rl::normalize(values, rl::NormMode::group, 1e-8, ids);
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (z[i] != zg[i]) ok = false;
    }
    check(result, ok,
          "batch normalization is standard and bitwise-equal to a single "
          "group");
  }

  {  // Importance weights: identity, band mask, and truncation ceiling.
    rl::ISConfig cfg;
    const std::vector<double> lp(8, -1.25);
    auto same = rl::importance_weight(lp, lp, cfg);
    bool ok = !same.masked && !same.truncated &&
              std::abs(same.weight - 1.0) < 1e-12;

    std::vector<double> train(8, -1.25), behavior(8, -1.0);
    auto low = rl::importance_weight(train, behavior, cfg);  // ratio < c_low
    ok = ok && low.masked && low.weight == 0.0;

    // Per-token ratio 1.008 stays inside [0.995, 1.01] but the 200-token
    // product exceeds c_trunc, so the weight pins at the ceiling.
    std::vector<double> t200(200, 0.0), b200(200, 0.0);
    for (auto& v : t200) v = std::log(1.008);
    auto ceil = rl::importance_weight(t200, b200, cfg);
    ok = ok && !ceil.masked && ceil.truncated &&
         std::abs(ceil.weight - cfg.c_trunc) < 1e-12;
    check(result, ok, "importance weights obey band mask and ceiling");
  }

  {  // Grammar: canonical round trips in all three environments.
    bool ok = true;
    const grammar::ParseMode atomic{grammar::MacroMode::atomic, 1};
    const grammar::ParseMode flex2{grammar::MacroMode::flexible, 2};

    auto s = grammar::parse_action("value(3, r2c1)", grammar::sudoku_grammar(9),
                                   atomic);
    ok = ok && std::holds_alternative<grammar::MacroAction>(s) &&
         grammar::render_action(std::get<grammar::MacroAction>(s),
                                grammar::sudoku_grammar(9)) ==
             "value(3, r2c1)";

    auto r = grammar::parse_action("move(A, right, 2)",
                                   grammar::rushhour_grammar(), flex2);
    ok = ok && std::holds_alternative<grammar::MacroAction>(r) &&
         std::get<grammar::MacroAction>(r).atoms.size() == 2;

    auto c = grammar::parse_action("go(1); go(0)", grammar::chain_grammar(2),
                                   flex2);
    ok = ok && std::holds_alternative<grammar::MacroAction>(c) &&
         grammar::render_action(std::get<grammar::MacroAction>(c),
                                grammar::chain_grammar(2)) == "go(1); go(0)";
    check(result, ok, "action grammar round-trips canonical text");
  }

  {  // Fresh policy is exactly uniform; tokenization inverts.
    policy::SoftmaxSequencePolicy pi(grammar::chain_grammar(2), 1u << 8);
    const double h = pi.next_entropy("goal chain", {});
    bool ok =
        std::abs(h - std::log(static_cast<double>(pi.vocab_size()))) < 1e-12;
    auto toks = grammar::tokenize_action("go(1)", pi.vocab());
    ok = ok && grammar::detokenize(toks, pi.vocab()) == "go(1)";
    check(result, ok, "zero-weight policy is uniform and tokens invert");
  }

  {  // Softmax logit gradient rows sum to zero.
    const std::vector<double> probs = {0.1, 0.2, 0.3, 0.4};
    auto g = policy::logit_gradient(probs, 2, 1.7);
    double sum = 0.0;
    for (double v : g) sum += v;
    check(result, std::abs(sum) < 1e-12,
          "per-position logit gradient sums to zero");
  }

  return result;
}

}  // namespace horizonlab::harness

#include "horizonlab/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "horizonlab/util.hpp"

namespace horizonlab::rl {

namespace {
constexpr std::uint64_t kRolloutStream = 0x726f6c6c6f757421ull;
constexpr std::uint64_t kOrderStream = 0x7461736b6f726472ull;
}  // namespace

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "batch") return NormMode::batch;
  if (s == "group") return NormMode::group;
  if (s == "none") return NormMode::none;
  throw std::invalid_argument("unknown normalization mode: " + s);
}

std::string to_string(NormMode m) {
  switch (m) {
    case NormMode::batch:
      return "batch";
    case NormMode::group:
      return "group";
    case NormMode::none:
      return "none";
  }
  throw std::logic_error("unreachable norm mode");
}

void AdvantageConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in (0,1]");
  }
  if (alpha < 0.0) {
    throw std::invalid_argument("alpha must be nonnegative");
  }
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("epsilon must be positive");
  }
  if (normalization == NormMode::group && group_size < 1) {
    throw std::invalid_argument("group_size must be >= 1 in group mode");
  }
}

void ISConfig::validate() const {
  if (!(c_low > 0.0 && c_low <= 1.0)) {
    throw std::invalid_argument("c_low must lie in (0,1]");
  }
  if (c_high < 1.0) {
    throw std::invalid_argument("c_high must be >= 1");
  }
  if (c_trunc < 1.0) {
    throw std::invalid_argument("c_trunc must be >= 1");
  }
}

ISWeight importance_weight(std::span<const double> train_logprobs,
                           std::span<const double> behavior_logprobs,
                           const ISConfig& config) {
  if (train_logprobs.size() != behavior_logprobs.size()) {
    throw std::invalid_argument(
        "token count mismatch between train and behavior log-probabilities");
  }
  if (train_logprobs.empty()) {
    throw std::invalid_argument("importance weight over zero tokens");
  }
  double log_rho = 0.0;
  for (std::size_t i = 0; i < train_logprobs.size(); ++i) {
    if (!std::isfinite(train_logprobs[i]) ||
        !std::isfinite(behavior_logprobs[i])) {
      throw std::invalid_argument("non-finite log-probability");
    }
    log_rho += train_logprobs[i] - behavior_logprobs[i];
  }
  ISWeight w;
  w.rho_seq = std::exp(log_rho);
  w.rho_geo =
      std::exp(log_rho / static_cast<double>(train_logprobs.size()));
  if (w.rho_geo < config.c_low || w.rho_geo > config.c_high) {
    w.masked = true;
    w.weight = 0.0;
    return w;
  }
  if (w.rho_seq > config.c_trunc) {
    w.truncated = true;
    w.weight = config.c_trunc;
  } else {
    w.weight = w.rho_seq;
  }
  return w;
}

std::vector<double> normalize(std::span<const double> values, NormMode mode,
                              double epsilon,
                              std::span<const int> group_ids) {
  if (mode == NormMode::none) {
    return std::vector<double>(values.begin(), values.end());
  }
  if (values.empty()) {
    throw std::invalid_argument("normalize over empty values");
  }
  if (mode == NormMode::group && group_ids.size() != values.size()) {
    throw std::invalid_argument(
        "group normalization needs one group id per value");
  }
  // Batch mode is group mode with a single group; a shared code path keeps
  // the two bitwise-identical when every id coincides.
  auto id_of = [&](std::size_t i) {
    return mode == NormMode::batch ? 0 : group_ids[i];
  };
  struct Stat {
    double sum = 0.0;
    double sumsq = 0.0;
    long n = 0;
  };
  std::unordered_map<int, Stat> stats;
  for (std::size_t i = 0; i < values.size(); ++i) {
    Stat& s = stats[id_of(i)];
    s.sum += values[i];
    s.sumsq += values[i] * values[i];
    s.n += 1;
  }
  struct Moments {
    double mean = 0.0;
    double denom = 1.0;
  };
  std::unordered_map<int, Moments> moments;
  for (auto& [id, s] : stats) {
    double mean = s.sum / static_cast<double>(s.n);
    double var = s.sumsq / static_cast<double>(s.n) - mean * mean;
    if (var < 0.0) var = 0.0;  // rounding guard
    moments[id] = Moments{mean, std::max(std::sqrt(var), epsilon)};
  }
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Moments& m = moments[id_of(i)];
    out[i] = (values[i] - m.mean) / m.denom;
  }
  return out;
}

std::vector<Segment> segment_by_subgoal(const core::Trajectory& traj) {
  std::vector<Segment> segments;
  std::size_t begin = 0;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    if (!traj.steps[t].subgoal_events.empty()) {
      segments.push_back(Segment{begin, t + 1});
      begin = t + 1;
    }
  }
  if (begin < traj.steps.size()) {
    segments.push_back(Segment{begin, traj.steps.size()});
  }
  return segments;
}

std::vector<double> segmented_returns(const core::Trajectory& traj,
                                      double gamma) {
  std::vector<double> rewards;
  rewards.reserve(traj.steps.size());
  for (const core::Step& s : traj.steps) rewards.push_back(s.env_reward);
  std::vector<double> out(traj.steps.size(), 0.0);
  for (const Segment& seg : segment_by_subgoal(traj)) {
    std::span<const double> slice(rewards.data() + seg.begin,
                                  seg.end - seg.begin);
    std::vector<double> g = core::discounted_returns(slice, gamma);
    std::copy(g.begin(), g.end(), out.begin() + seg.begin);
  }
  return out;
}

StepRewards decompose_rewards(const core::Trajectory& traj, double gamma,
                              bool segment_subgoals) {
  StepRewards rewards;
  if (traj.steps.empty()) return rewards;
  if (segment_subgoals) {
    rewards.r_traj = segmented_returns(traj, gamma);
  } else {
    std::vector<double> env_rewards;
    env_rewards.reserve(traj.steps.size());
    for (const core::Step& s : traj.steps) {
      env_rewards.push_back(s.env_reward);
    }
    rewards.r_traj = core::discounted_returns(env_rewards, gamma);
  }
  rewards.r_step.reserve(traj.steps.size());
  for (const core::Step& s : traj.steps) {
    rewards.r_step.push_back(s.format_penalty + s.validity_penalty);
  }
  return rewards;
}

std::vector<double> mix_advantage(std::span<const double> r_traj_norm,
                                  std::span<const double> r_step_norm,
                                  double alpha) {
  if (r_traj_norm.size() != r_step_norm.size()) {
    throw std::invalid_argument("advantage component length mismatch");
  }
  std::vector<double> a(r_traj_norm.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = r_traj_norm[i] + alpha * r_step_norm[i];
  }
  return a;
}

AdvantageBatch compute_advantages(std::span<const core::Trajectory> trajs,
                                  const AdvantageConfig& config,
                                  bool segment_subgoals,
                                  std::span<const int> traj_group_ids) {
  config.validate();
  if (!traj_group_ids.empty() && traj_group_ids.size() != trajs.size()) {
    throw std::invalid_argument("one group id per trajectory required");
  }
  AdvantageBatch batch;
  batch.batch_size = trajs.size();
  std::vector<double> all_r_traj;
  std::vector<double> all_r_step;
  std::vector<int> step_groups;
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    StepRewards r = decompose_rewards(trajs[k], config.gamma,
                                      segment_subgoals);
    int gid = traj_group_ids.empty() ? 0 : traj_group_ids[k];
    for (std::size_t t = 0; t < r.r_traj.size(); ++t) {
      StepRecord rec;
      rec.traj_index = k;
      rec.turn = t;
      rec.group_id = gid;
      rec.r_traj = r.r_traj[t];
      rec.r_step = r.r_step[t];
      batch.records.push_back(rec);
      all_r_traj.push_back(r.r_traj[t]);
      all_r_step.push_back(r.r_step[t]);
      step_groups.push_back(gid);
    }
  }
  if (batch.records.empty()) return batch;
  std::vector<double> traj_norm =
      normalize(all_r_traj, config.normalization, config.epsilon, step_groups);
  std::vector<double> step_norm =
      normalize(all_r_step, config.normalization, config.epsilon, step_groups);
  std::vector<double> advantage =
      mix_advantage(traj_norm, step_norm, config.alpha);
  for (std::size_t i = 0; i < batch.records.size(); ++i) {
    batch.records[i].r_traj_norm = traj_norm[i];
    batch.records[i].r_step_norm = step_norm[i];
    batch.records[i].advantage = advantage[i];
  }
  return batch;
}

void TrainerConfig::validate(const AdvantageConfig& adv) const {
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (iterations == 0 && epochs < 1) {
    throw std::invalid_argument("epochs must be >= 1");
  }
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (minibatches < 1) {
    throw std::invalid_argument("minibatches must be >= 1");
  }
  if (batch_size % minibatches != 0) {
    throw std::invalid_argument("batch_size must be divisible by minibatches");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("temperature must be positive");
  }
  if (h_max < 0) throw std::invalid_argument("h_max must be >= 0");
  if (window < 0) throw std::invalid_argument("window must be >= 0");
  if (parse_mode.mode != grammar::MacroMode::atomic && parse_mode.n < 1) {
    throw std::invalid_argument("macro arity must be >= 1");
  }
  if (adv.normalization == NormMode::group &&
      batch_size % adv.group_size != 0) {
    throw std::invalid_argument("batch_size must be divisible by group_size");
  }
}

double TrainLog::final_success_rate() const {
  return iterations.empty() ? 0.0 : iterations.back().success_rate;
}

void write_metrics_jsonl(std::ostream& os, const IterationMetrics& m) {
  nlohmann::json j{{"iteration", m.iteration},
                   {"success_rate", m.success_rate},
                   {"entropy", m.entropy},
                   {"masked_fraction", m.masked_fraction},
                   {"truncated_fraction", m.truncated_fraction},
                   {"mean_abs_advantage", m.mean_abs_advantage},
                   {"mean_return", m.mean_return},
                   {"invalid_action_ratio", m.invalid_action_ratio},
                   {"format_error_ratio", m.format_error_ratio},
                   {"rolled_back", m.rolled_back}};
  os << j.dump() << "\n";
}

void write_metrics_csv_header(std::ostream& os) {
  os << "iteration,success_rate,entropy,masked_fraction,truncated_fraction,"
        "mean_abs_advantage,mean_return,invalid_action_ratio,"
        "format_error_ratio,rolled_back\n";
}

void write_metrics_csv_row(std::ostream& os, const IterationMetrics& m) {
  os << m.iteration << ',' << m.success_rate << ',' << m.entropy << ','
     << m.masked_fraction << ',' << m.truncated_fraction << ','
     << m.mean_abs_advantage << ',' << m.mean_return << ','
     << m.invalid_action_ratio << ',' << m.format_error_ratio << ','
     << (m.rolled_back ? 1 : 0) << "\n";
}

RolloutResult rollout(env::Env& environment,
                      const policy::SoftmaxSequencePolicy& behavior,
                      const grammar::ParseMode& parse_mode, double temperature,
                      int h_max, int window, std::mt19937_64& rng,
                      const std::string& task_id) {
  if (h_max < 1) throw std::invalid_argument("h_max must be >= 1");
  RolloutResult result;
  result.trajectory.task_id = task_id;
  result.trajectory.outcome = core::Outcome::budget_exhausted;
  const grammar::GrammarSpec& spec = environment.gspec();
  const int max_tokens = grammar::max_action_tokens(spec, parse_mode);
  std::vector<core::TurnRecord> history;
  const std::string goal = environment.goal_text();
  for (int turn = 0; turn < h_max; ++turn) {
    std::string obs = environment.observe();
    core::ObservationWindow win = core::build_window(history, window, goal);
    std::string context = core::render_context(win, obs);
    policy::Sampled sampled =
        behavior.sample_action(context, temperature, rng, max_tokens);
    std::string text = grammar::detokenize(sampled.tokens, behavior.vocab());
    grammar::ParseResult parsed = grammar::parse_action(text, spec, parse_mode);

    core::Step step;
    step.context = std::move(context);
    step.action_tokens = sampled.tokens;
    step.behavior_logprobs = sampled.logprobs;

    bool terminal = false;
    bool success = false;
    if (const auto* err = std::get_if<grammar::FormatError>(&parsed)) {
      (void)err;
      step.format_penalty = -0.5;
      result.format_errors += 1;
      result.step_correctness.push_back(-1.0);
    } else {
      const auto& macro = std::get<grammar::MacroAction>(parsed);
      env::StepResult sr = environment.apply_action(macro);
      int invalid = 0;
      for (bool v : sr.atom_valid) {
        if (!v) ++invalid;
      }
      result.atoms_total += static_cast<int>(sr.atom_valid.size());
      result.atoms_invalid += invalid;
      step.validity_penalty = -0.5 * invalid;
      step.env_reward = sr.reward;
      step.subgoal_events = std::move(sr.subgoal_events);
      result.step_correctness.push_back(sr.step_correctness);
      terminal = sr.terminal;
      success = sr.success;
    }
    history.push_back(core::TurnRecord{std::move(obs), "", text});
    result.trajectory.steps.push_back(std::move(step));
    if (terminal) {
      result.trajectory.outcome =
          success ? core::Outcome::success : core::Outcome::failure;
      break;
    }
  }
  return result;
}

TrainLog train(policy::SoftmaxSequencePolicy& policy,
               std::span<const datasets::TaskInstance> tasks,
               const TrainerConfig& trainer, const AdvantageConfig& advantage,
               const ISConfig& is_config, std::ostream* jsonl,
               std::ostream* csv) {
  advantage.validate();
  is_config.validate();
  trainer.validate(advantage);
  if (tasks.empty()) {
    throw std::invalid_argument("training requires at least one task");
  }
  const int B = trainer.batch_size;
  const int group =
      advantage.normalization == NormMode::group ? advantage.group_size : 1;
  const int tasks_per_iter = B / group;

  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), 0);
  {
    std::mt19937_64 shuffle_rng = util::substream(trainer.seed, kOrderStream);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
  }

  int total_iterations = trainer.iterations;
  if (total_iterations == 0) {
    long per_epoch =
        (static_cast<long>(tasks.size()) + tasks_per_iter - 1) /
        tasks_per_iter;
    total_iterations = static_cast<int>(trainer.epochs * per_epoch);
  }

  if (csv) write_metrics_csv_header(*csv);

  TrainLog log;
  std::size_t cursor = 0;
  for (int it = 0; it < total_iterations; ++it) {
    std::vector<double> snapshot = policy.weights();

    // Rollout phase against the frozen parameters.
    std::vector<core::Trajectory> trajs;
    std::vector<int> group_ids;
    trajs.reserve(B);
    IterationMetrics m;
    m.iteration = it;
    long atoms_total = 0;
    long atoms_invalid = 0;
    long format_errors = 0;
    double return_sum = 0.0;
    int successes = 0;
    for (int slot = 0; slot < B; ++slot) {
      const datasets::TaskInstance& task =
          tasks[order[(cursor + static_cast<std::size_t>(slot / group)) %
                      tasks.size()]];
      auto environment = env::make_env(task, trainer.reward_mode);
      int h = trainer.h_max > 0
                  ? trainer.h_max
                  : environment->default_budget(trainer.parse_mode.mode);
      std::mt19937_64 rng = util::substream(
          trainer.seed, kRolloutStream, static_cast<std::uint64_t>(it),
          static_cast<std::uint64_t>(slot));
      RolloutResult r =
          rollout(*environment, policy, trainer.parse_mode,
                  trainer.temperature, h, trainer.window, rng, task.id);
      r.trajectory.seed = util::mix(trainer.seed,
                                    static_cast<std::uint64_t>(it),
                                    static_cast<std::uint64_t>(slot));
      if (r.trajectory.outcome == core::Outcome::success) ++successes;
      atoms_total += r.atoms_total;
      atoms_invalid += r.atoms_invalid;
      format_errors += r.format_errors;
      for (const core::Step& s : r.trajectory.steps) {
        return_sum += s.env_reward;
      }
      trajs.push_back(std::move(r.trajectory));
      group_ids.push_back(slot / group);
    }
    cursor = (cursor + static_cast<std::size_t>(tasks_per_iter)) %
             tasks.size();

    m.success_rate = static_cast<double>(successes) / B;
    m.mean_return = return_sum / B;
    m.invalid_action_ratio =
        atoms_total > 0
            ? static_cast<double>(atoms_invalid) / atoms_total
            : 0.0;
    long turns = 0;
    for (const core::Trajectory& t : trajs) {
      turns += static_cast<long>(t.steps.size());
    }
    m.format_error_ratio =
        turns > 0 ? static_cast<double>(format_errors) / turns : 0.0;

    AdvantageBatch batch = compute_advantages(
        trajs, advantage, trainer.segment_subgoals, group_ids);
    double abs_sum = 0.0;
    for (const StepRecord& rec : batch.records) {
      abs_sum += std::abs(rec.advantage);
    }
    m.mean_abs_advantage =
        batch.records.empty() ? 0.0
                              : abs_sum / static_cast<double>(
                                              batch.records.size());

    // Entropy probe on the behavior policy that produced this batch.
    {
      std::vector<policy::EntropyProbe> probes;
      for (const StepRecord& rec : batch.records) {
        if (probes.size() >= 32) break;
        probes.push_back(policy::EntropyProbe{
            trajs[rec.traj_index].steps[rec.turn].context, {}});
      }
      m.entropy = probes.empty() ? 0.0 : policy::mean_entropy(policy, probes);
    }

    // Update phase: minibatch shards against frozen behavior logprobs.
    const int M = trainer.minibatches;
    const int shard_trajs = B / M;
    long weighted_steps = 0;
    long masked_steps = 0;
    long truncated_steps = 0;
    for (int shard = 0; shard < M && !m.rolled_back; ++shard) {
      std::size_t lo = static_cast<std::size_t>(shard) * shard_trajs;
      std::size_t hi = lo + shard_trajs;
      std::vector<policy::GradItem> items;
      std::vector<double> per_token;
      // Poisoned parameters surface first as non-finite log-probabilities,
      // before any gradient exists; both conditions trip the same rollback.
      bool non_finite = false;
      for (const StepRecord& rec : batch.records) {
        if (rec.traj_index < lo || rec.traj_index >= hi) continue;
        const core::Step& step = trajs[rec.traj_index].steps[rec.turn];
        policy.action_logprob(step.context, step.action_tokens, &per_token);
        for (double v : per_token) {
          if (!std::isfinite(v)) non_finite = true;
        }
        for (double v : step.behavior_logprobs) {
          if (!std::isfinite(v)) non_finite = true;
        }
        if (non_finite) break;
        ISWeight w =
            importance_weight(per_token, step.behavior_logprobs, is_config);
        ++weighted_steps;
        if (w.masked) ++masked_steps;
        if (w.truncated) ++truncated_steps;
        double coefficient = w.weight * rec.advantage;
        if (coefficient == 0.0) continue;
        items.push_back(policy::GradItem{step.context, step.action_tokens,
                                         coefficient});
      }
      policy::GradientAccumulator acc;
      acc.reset(policy.weights().size());
      if (!non_finite) accumulate_policy_gradient(policy, items, acc);
      if (non_finite || !acc.all_finite()) {
        policy.weights() = snapshot;
        m.rolled_back = true;
        break;
      }
      const double scale = trainer.learning_rate / shard_trajs;
      std::vector<double>& w = policy.weights();
      const std::vector<double>& g = acc.grad();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += scale * g[i];
    }
    m.masked_fraction =
        weighted_steps > 0
            ? static_cast<double>(masked_steps) / weighted_steps
            : 0.0;
    m.truncated_fraction =
        weighted_steps > 0
            ? static_cast<double>(truncated_steps) / weighted_steps
            : 0.0;

    if (jsonl) {
      write_metrics_jsonl(*jsonl, m);
      jsonl->flush();
    }
    if (csv) {
      write_metrics_csv_row(*csv, m);
      csv->flush();
    }
    log.iterations.push_back(m);
  }
  return log;
}

}  // namespace horizonlab::rl

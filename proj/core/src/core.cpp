#include "horizonlab/core.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace horizonlab::core {

void HorizonProfile::validate(int atoms_per_turn_bound) const {
  if (goal_distance < 0 || interaction_budget < 0) {
    throw std::domain_error("horizon profile: negative field");
  }
  if (!effective_horizon.has_value()) return;
  const int h = *effective_horizon;
  int lower = 1;
  if (atoms_per_turn_bound > 0) {
    lower = (goal_distance + atoms_per_turn_bound - 1) / atoms_per_turn_bound;
  }
  if (h < lower || h > interaction_budget) {
    std::ostringstream os;
    os << "horizon ordering violated: d=" << goal_distance << " lower bound "
       << lower << " h=" << h << " budget=" << interaction_budget;
    throw std::domain_error(os.str());
  }
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::failure: return "failure";
    case Outcome::budget_exhausted: return "budget_exhausted";
  }
  throw std::logic_error("unknown outcome");
}

Outcome outcome_from_string(const std::string& s) {
  if (s == "success") return Outcome::success;
  if (s == "failure") return Outcome::failure;
  if (s == "budget_exhausted") return Outcome::budget_exhausted;
  throw std::invalid_argument("unknown outcome: " + s);
}

double discounted_return(std::span<const double> rewards, double gamma,
                         std::size_t t) {
  if (rewards.empty()) throw std::domain_error("discounted_return: empty rewards");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::domain_error("discounted_return: gamma outside (0, 1]");
  }
  if (t >= rewards.size()) throw std::domain_error("discounted_return: t out of range");
  double g = 0.0;
  for (std::size_t k = rewards.size(); k-- > t;) {
    g = rewards[k] + gamma * g;
  }
  return g;
}

std::vector<double> discounted_returns(std::span<const double> rewards,
                                       double gamma) {
  if (rewards.empty()) throw std::domain_error("discounted_returns: empty rewards");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::domain_error("discounted_returns: gamma outside (0, 1]");
  }
  std::vector<double> out(rewards.size());
  double g = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    g = rewards[k] + gamma * g;
    out[k] = g;
  }
  return out;
}

int effective_horizon(const Trajectory& traj) {
  if (traj.outcome != Outcome::success) {
    throw std::domain_error("effective_horizon: trajectory did not succeed");
  }
  return static_cast<int>(traj.steps.size());
}

ObservationWindow build_window(const std::vector<TurnRecord>& history,
                               int window_size, std::string goal_text) {
  if (window_size < 0) throw std::domain_error("build_window: negative window");
  ObservationWindow w;
  w.window_size = window_size;
  w.goal_text = std::move(goal_text);
  const std::size_t keep =
      std::min<std::size_t>(history.size(), static_cast<std::size_t>(window_size));
  w.entries.assign(history.end() - keep, history.end());
  return w;
}

std::string render_context(const ObservationWindow& window,
                           std::string_view current_observation) {
  std::string out;
  out.reserve(64 + window.goal_text.size() + current_observation.size());
  out += "goal=";
  out += window.goal_text;
  for (const TurnRecord& e : window.entries) {
    out += "|obs=";
    out += e.observation;
    if (!e.reason.empty()) {
      out += ";why=";
      out += e.reason;
    }
    out += ";act=";
    out += e.action_text;
  }
  out += "|now=";
  out += current_observation;
  return out;
}

namespace {

nlohmann::json step_to_json(const Step& s) {
  return nlohmann::json{{"context", s.context},
                        {"action_tokens", s.action_tokens},
                        {"behavior_logprobs", s.behavior_logprobs},
                        {"env_reward", s.env_reward},
                        {"format_penalty", s.format_penalty},
                        {"validity_penalty", s.validity_penalty},
                        {"subgoal_events", s.subgoal_events}};
}

Step step_from_json(const nlohmann::json& j) {
  Step s;
  s.context = j.at("context").get<std::string>();
  s.action_tokens = j.at("action_tokens").get<std::vector<int>>();
  s.behavior_logprobs = j.at("behavior_logprobs").get<std::vector<double>>();
  s.env_reward = j.at("env_reward").get<double>();
  s.format_penalty = j.at("format_penalty").get<double>();
  s.validity_penalty = j.at("validity_penalty").get<double>();
  s.subgoal_events = j.at("subgoal_events").get<std::vector<int>>();
  if (s.action_tokens.size() != s.behavior_logprobs.size()) {
    throw std::invalid_argument("trajectory step: token/logprob length mismatch");
  }
  return s;
}

}  // namespace

void write_trajectories_jsonl(const std::filesystem::path& path,
                              std::span<const Trajectory> trajectories) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  for (const Trajectory& t : trajectories) {
    nlohmann::json j{{"task_id", t.task_id},
                     {"outcome", to_string(t.outcome)},
                     {"seed", t.seed}};
    nlohmann::json steps = nlohmann::json::array();
    for (const Step& s : t.steps) steps.push_back(step_to_json(s));
    j["steps"] = std::move(steps);
    out << j.dump() << '\n';
  }
}

std::vector<Trajectory> read_trajectories_jsonl(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for read: " + path.string());
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Trajectory t;
    t.task_id = j.at("task_id").get<std::string>();
    t.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    t.seed = j.at("seed").get<std::uint64_t>();
    for (const nlohmann::json& sj : j.at("steps")) {
      t.steps.push_back(step_from_json(sj));
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace horizonlab::core

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pleak/calibrate.hpp"
#include "pleak/smooth.hpp"

namespace pleak::advantage {

// Attacker's prior knowledge about one attribute.
struct Knowledge {
  enum Kind { Exact, Range, Total } kind = Exact;
  double lo = 0, hi = 0;  // Range
  long total = 1;         // Total: count of equally likely values
};

struct AttackerKnowledge {
  std::map<std::pair<std::string, std::string>, Knowledge> entries;  // (table, column)

  const Knowledge *find(const std::string &table, const std::string &column) const;
  sensderiv::RangeMap ranges() const;  // the Range entries, reused by the smooth engine
  std::string print() const;
};

struct Guess {
  enum Kind { Exact, Approx } kind = Exact;
  double radius = 0;  // Approx: within r units
};

struct LeakTarget {
  std::string table;
  std::string column;
  Guess guess;
};

struct SensitiveSpec {
  std::vector<LeakTarget> targets;
  double cost = 0;

  std::string print() const;
};

struct TargetReport {
  std::string table;
  std::string column;
  double prior = 0;
  double posterior = 0;
  double epsilon = 0;  // per-target epsilon before taking the pipeline minimum
};

struct AdvantageResult {
  double advantageBound = 0;
  double epsilon = 0;  // min over targets; inf marker when no noise is needed
  std::vector<TargetReport> targets;
  double output = 0;
  double noiseScale = 0;
  double relativeErrorPct = 0;
  double expectedCost = 0;
  std::map<std::string, double> tableSensitivity;  // smooth bounds per table
};

AttackerKnowledge parse_attacker(const std::string &attackerText);

std::pair<AttackerKnowledge, SensitiveSpec> parse_policy(const std::string &attackerText,
                                                         const std::string &sensitiveText);

// Probability that a uniform prior lands the guess: Range+Approx covers
// 2r/(hi-lo) of the interval; Total+Exact picks 1 of n values.
double prior_probability(const Knowledge &knowledge, const Guess &guess);

// epsilon = (1/r) ln((p+adv)(1-p) / (p(1-p-adv))); infinity marker when
// p + adv >= 1 (no noise needed to stay under the bound).
double advantage_to_epsilon(double adv, double prior, double radius);

// Inverse direction, used by the round-trip consistency check.
double posterior_from_epsilon(double epsilon, double prior, double radius);

AdvantageResult advantage_analysis(const sql::SqlWorkflow &wf, const std::string &targetTable,
                                   const AttackerKnowledge &knowledge,
                                   const SensitiveSpec &sensitive, double adv,
                                   sensderiv::SmoothParams params,
                                   bool betaFromEpsilon = true);

} // namespace pleak::advantage

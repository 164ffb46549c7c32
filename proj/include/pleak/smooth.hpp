#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pleak/norm.hpp"
#include "pleak/symexec.hpp"

namespace pleak::sensderiv {

struct SmoothParams {
  double epsilon = 1.0;
  double beta = 0.1;
  double gamma = 4.0;       // noise shape
  double sigmoidA = 10.0;   // sigmoid precision for predicate smoothing
  double confidence = 0.8;
  int gridPoints = 16;      // grid resolution per coordinate for smooth_bound

  // beta < epsilon / (gamma + 1) keeps the noise denominator positive.
  void validate() const;
};

inline constexpr double kBetaCap = 1e6;

struct Range {
  double lo = 0;
  double hi = 0;
};

// Attacker-known bounds per (table, column).
using RangeMap = std::map<std::pair<std::string, std::string>, Range>;

struct TableNorm {
  NormSpec spec;
  NormTree tree;
};
using NormSet = std::map<std::string, TableNorm>;

enum class ExecMode { Serial, Parallel };

// One sensitive cell of the instance.
struct Coordinate {
  std::string table;
  int row = 0;        // row index in the table instance
  int schemaCol = 0;  // column position in the table schema
  int normCol = 0;    // column position in the norm's cols list
};

// A query grounded over a concrete instance: a smooth real function of the
// sensitive cells. COUNT sums smoothed predicate products over joined rows,
// SUM weighs the summand in, MIN/MAX use a log-sum-exp envelope.
class GroundFunction {
public:
  GroundFunction();
  GroundFunction(GroundFunction &&) noexcept;
  GroundFunction &operator=(GroundFunction &&) noexcept;
  ~GroundFunction();

  double value(std::span<const double> x, ExecMode mode = ExecMode::Parallel) const;
  double value_and_gradient(std::span<const double> x, std::vector<double> &grad,
                            ExecMode mode = ExecMode::Parallel) const;

  const std::vector<Coordinate> &coordinates() const { return coords_; }
  const std::vector<double> &baseline() const { return baseline_; }
  sql::AggKind aggregation() const { return agg_; }
  long tuple_count() const { return tupleCount_; }

private:
  friend GroundFunction smooth_lower(const sql::SqlWorkflow &, const std::string &,
                                     const NormSet &, const RangeMap &, const SmoothParams &);

  struct TapeNode;
  struct Slot;
  struct Workspace;

  // Evaluates one joined tuple; returns the smooth condition S and value v,
  // optionally running the reverse sweep with the given seeds.
  void eval_tuple(long tuple, std::span<const double> x, Workspace &ws, double &condVal,
                  double &valVal) const;
  void reverse_tuple(Workspace &ws, double seedValue, double seedCond,
                     std::vector<double> &grad) const;
  template <typename Fn> void for_each_tuple(ExecMode mode, Fn &&fn) const;

  std::vector<TapeNode> tape_;
  int valueRoot_ = -1;  // -1 for COUNT (no summand)
  int condRoot_ = -1;
  std::vector<Slot> slots_;
  long tupleCount_ = 0;
  sql::AggKind agg_ = sql::AggKind::Count;
  double sigmoidA_ = 10.0;
  std::vector<Coordinate> coords_;
  std::vector<double> baseline_;
};

// Grounds the query producing `targetTable` over the workflow's instance.
// Plain SELECT targets are treated as COUNT (the analyzer counts output
// rows); aggregated targets keep their aggregation kind. Attributes feeding
// divisors must carry attacker ranges that exclude zero.
GroundFunction smooth_lower(const sql::SqlWorkflow &wf, const std::string &targetTable,
                            const NormSet &norms, const RangeMap &ranges,
                            const SmoothParams &params);

// Per-table derivative sensitivity: dual norms of the gradient blocks,
// combined per row and across rows by the dual of the declared table norm.
std::map<std::string, double> derivative_sensitivity(const GroundFunction &fn,
                                                     const NormSet &norms,
                                                     std::span<const double> x,
                                                     ExecMode mode = ExecMode::Parallel);
std::map<std::string, double> derivative_sensitivity(const GroundFunction &fn,
                                                     const NormSet &norms,
                                                     ExecMode mode = ExecMode::Parallel);

// Grid-search approximation of sup_{D'} c(D') * exp(-beta * d(D, D')): every
// sensitive coordinate sweeps `gridPoints` values inside its attacker range,
// one cell at a time, plus the unperturbed instance. Result is >= the
// derivative sensitivity at the instance itself.
std::map<std::string, double> smooth_bound(const GroundFunction &fn, const NormSet &norms,
                                           double beta, const RangeMap &ranges,
                                           const SmoothParams &params,
                                           ExecMode mode = ExecMode::Parallel);

} // namespace pleak::sensderiv

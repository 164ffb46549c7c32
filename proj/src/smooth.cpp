#include "pleak/smooth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace pleak::symexec;

namespace pleak::sensderiv {

void SmoothParams::validate() const {
  if (epsilon <= 0)
    fail(ErrorKind::InfeasibleSmoothness, "epsilon must be positive");
  if (beta < 0)
    fail(ErrorKind::InfeasibleSmoothness, "beta must be nonnegative");
  if (gamma <= 1)
    fail(ErrorKind::InfeasibleSmoothness, "gamma must exceed 1");
  if (sigmoidA <= 0)
    fail(ErrorKind::InfeasibleSmoothness, "sigmoid precision must be positive");
  if (!(confidence > 0 && confidence < 1))
    fail(ErrorKind::InfeasibleSmoothness, "confidence must lie in (0, 1)");
  if (gridPoints < 2)
    fail(ErrorKind::InfeasibleSmoothness, "grid needs at least 2 points");
  if (beta >= epsilon / (gamma + 1.0))
    fail(ErrorKind::InfeasibleSmoothness,
         "beta must stay below epsilon/(gamma+1) = " + std::to_string(epsilon / (gamma + 1.0)) +
             "; reduce beta or raise epsilon");
}

// --- tape ---------------------------------------------------------------

struct GroundFunction::Slot {
  std::string table;
  long rowCount = 0;
  std::vector<std::vector<double>> num;        // [schemaCol][row], NaN for text
  std::vector<std::vector<std::string>> text;  // [schemaCol][row], "" for numeric
  std::vector<std::vector<int>> coord;         // [schemaCol][row] -> coordinate or -1
};

struct GroundFunction::TapeNode {
  enum Op : std::uint8_t {
    Const,
    ConstText,
    Input,
    InputText,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Pow,
    CmpOrder,  // smoothed when an operand is sensitive
    CmpDiscrete,
    And,
    Or,
    Not,
    Sqrt,
    Abs,
    Least,
    Greatest,
  };
  Op op = Const;
  std::vector<int> kids;
  double cval = 0;
  std::string ctext;
  int slot = -1, col = -1;
  CmpOp cmp = CmpOp::Eq;
  bool textCmp = false;
};

struct GroundFunction::Workspace {
  std::vector<double> val;
  std::vector<char> sens;
  std::vector<const std::string *> str;
  std::vector<double> adj;
  std::vector<long> rows;
};

GroundFunction::GroundFunction() = default;
GroundFunction::GroundFunction(GroundFunction &&) noexcept = default;
GroundFunction &GroundFunction::operator=(GroundFunction &&) noexcept = default;
GroundFunction::~GroundFunction() = default;

namespace {

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline int cmp_values(double a, double b) { return a < b ? -1 : a > b ? 1 : 0; }

bool cmp_holds(CmpOp op, int c) {
  switch (op) {
  case CmpOp::Lt: return c < 0;
  case CmpOp::Le: return c <= 0;
  case CmpOp::Gt: return c > 0;
  case CmpOp::Ge: return c >= 0;
  case CmpOp::Eq: return c == 0;
  case CmpOp::Ne: return c != 0;
  }
  return false;
}

} // namespace

void GroundFunction::eval_tuple(long tuple, std::span<const double> x, Workspace &ws,
                                double &condVal, double &valVal) const {
  long rem = tuple;
  ws.rows.resize(slots_.size());
  for (size_t s = 0; s < slots_.size(); ++s) {
    ws.rows[s] = rem % slots_[s].rowCount;
    rem /= slots_[s].rowCount;
  }

  size_t n = tape_.size();
  ws.val.resize(n);
  ws.sens.assign(n, 0);
  ws.str.resize(n);

  for (size_t i = 0; i < n; ++i) {
    const TapeNode &t = tape_[i];
    switch (t.op) {
    case GroundFunction::TapeNode::Const:
      ws.val[i] = t.cval;
      break;
    case GroundFunction::TapeNode::ConstText:
      ws.str[i] = &t.ctext;
      break;
    case GroundFunction::TapeNode::Input: {
      const Slot &sl = slots_[t.slot];
      long row = ws.rows[t.slot];
      int k = sl.coord[t.col][row];
      if (k >= 0) {
        ws.val[i] = x[k];
        ws.sens[i] = 1;
      } else {
        ws.val[i] = sl.num[t.col][row];
      }
      break;
    }
    case GroundFunction::TapeNode::InputText: {
      const Slot &sl = slots_[t.slot];
      ws.str[i] = &sl.text[t.col][ws.rows[t.slot]];
      break;
    }
    case GroundFunction::TapeNode::Add:
      ws.val[i] = ws.val[t.kids[0]] + ws.val[t.kids[1]];
      ws.sens[i] = ws.sens[t.kids[0]] | ws.sens[t.kids[1]];
      break;
    case GroundFunction::TapeNode::Sub:
      ws.val[i] = ws.val[t.kids[0]] - ws.val[t.kids[1]];
      ws.sens[i] = ws.sens[t.kids[0]] | ws.sens[t.kids[1]];
      break;
    case GroundFunction::TapeNode::Mul:
      ws.val[i] = ws.val[t.kids[0]] * ws.val[t.kids[1]];
      ws.sens[i] = ws.sens[t.kids[0]] | ws.sens[t.kids[1]];
      break;
    case GroundFunction::TapeNode::Div: {
      double d = ws.val[t.kids[1]];
      if (d == 0)
        fail(ErrorKind::DivisionByZero, "division by zero while grounding the query");
      ws.val[i] = ws.val[t.kids[0]] / d;
      ws.sens[i] = ws.sens[t.kids[0]] | ws.sens[t.kids[1]];
      break;
    }
    case GroundFunction::TapeNode::Neg:
      ws.val[i] = -ws.val[t.kids[0]];
      ws.sens[i] = ws.sens[t.kids[0]];
      break;
    case GroundFunction::TapeNode::Pow:
      ws.val[i] = std::pow(ws.val[t.kids[0]], ws.val[t.kids[1]]);
      ws.sens[i] = ws.sens[t.kids[0]] | ws.sens[t.kids[1]];
      break;
    case GroundFunction::TapeNode::CmpOrder: {
      if (t.textCmp) {
        int c = ws.str[t.kids[0]]->compare(*ws.str[t.kids[1]]);
        ws.val[i] = cmp_holds(t.cmp, c) ? 1.0 : 0.0;
        break;
      }
      double a = ws.val[t.kids[0]], b = ws.val[t.kids[1]];
      if (ws.sens[t.kids[0]] || ws.sens[t.kids[1]]) {
        double margin = (t.cmp == CmpOp::Lt || t.cmp == CmpOp::Le) ? b - a : a - b;
        ws.val[i] = sigmoid(sigmoidA_ * margin);
        ws.sens[i] = 1;
      } else {
        ws.val[i] = cmp_holds(t.cmp, cmp_values(a, b)) ? 1.0 : 0.0;
      }
      break;
    }
    case GroundFunction::TapeNode::CmpDiscrete: {
      int c;
      if (t.textCmp)
        c = ws.str[t.kids[0]]->compare(*ws.str[t.kids[1]]);
      else
        c = cmp_values(ws.val[t.kids[0]], ws.val[t.kids[1]]);
      ws.val[i] = cmp_holds(t.cmp, c) ? 1.0 : 0.0;
      break;
    }
    case GroundFunction::TapeNode::And: {
      double p = 1;
      char s = 0;
      for (int k : t.kids) {
        p *= ws.val[k];
        s |= ws.sens[k];
      }
      ws.val[i] = p;
      ws.sens[i] = s;
      break;
    }
    case GroundFunction::TapeNode::Or: {
      double p = 1;
      char s = 0;
      for (int k : t.kids) {
        p *= 1.0 - ws.val[k];
        s |= ws.sens[k];
      }
      ws.val[i] = 1.0 - p;
      ws.sens[i] = s;
      break;
    }
    case GroundFunction::TapeNode::Not:
      ws.val[i] = 1.0 - ws.val[t.kids[0]];
      ws.sens[i] = ws.sens[t.kids[0]];
      break;
    case GroundFunction::TapeNode::Sqrt: {
      double a = ws.val[t.kids[0]];
      ws.val[i] = a > 0 ? std::sqrt(a) : 0.0;
      ws.sens[i] = ws.sens[t.kids[0]];
      break;
    }
    case GroundFunction::TapeNode::Abs:
      ws.val[i] = std::fabs(ws.val[t.kids[0]]);
      ws.sens[i] = ws.sens[t.kids[0]];
      break;
    case GroundFunction::TapeNode::Least:
    case GroundFunction::TapeNode::Greatest: {
      double best = ws.val[t.kids[0]];
      char s = ws.sens[t.kids[0]];
      for (size_t k = 1; k < t.kids.size(); ++k) {
        double v = ws.val[t.kids[k]];
        best = t.op == GroundFunction::TapeNode::Least ? std::min(best, v) : std::max(best, v);
        s |= ws.sens[t.kids[k]];
      }
      ws.val[i] = best;
      ws.sens[i] = s;
      break;
    }
    }
  }
  condVal = ws.val[condRoot_];
  valVal = valueRoot_ >= 0 ? ws.val[valueRoot_] : 1.0;
}

void GroundFunction::reverse_tuple(Workspace &ws, double seedValue, double seedCond,
                                   std::vector<double> &grad) const {
  size_t n = tape_.size();
  ws.adj.assign(n, 0.0);
  if (valueRoot_ >= 0)
    ws.adj[valueRoot_] += seedValue;
  ws.adj[condRoot_] += seedCond;

  for (size_t ri = n; ri-- > 0;) {
    double a = ws.adj[ri];
    if (a == 0)
      continue;
    const TapeNode &t = tape_[ri];
    switch (t.op) {
    case GroundFunction::TapeNode::Const:
    case GroundFunction::TapeNode::ConstText:
    case GroundFunction::TapeNode::InputText:
    case GroundFunction::TapeNode::CmpDiscrete:
      break;
    case GroundFunction::TapeNode::Input: {
      const Slot &sl = slots_[t.slot];
      int k = sl.coord[t.col][ws.rows[t.slot]];
      if (k >= 0)
        grad[k] += a;
      break;
    }
    case GroundFunction::TapeNode::Add:
      ws.adj[t.kids[0]] += a;
      ws.adj[t.kids[1]] += a;
      break;
    case GroundFunction::TapeNode::Sub:
      ws.adj[t.kids[0]] += a;
      ws.adj[t.kids[1]] -= a;
      break;
    case GroundFunction::TapeNode::Mul:
      ws.adj[t.kids[0]] += a * ws.val[t.kids[1]];
      ws.adj[t.kids[1]] += a * ws.val[t.kids[0]];
      break;
    case GroundFunction::TapeNode::Div: {
      double d = ws.val[t.kids[1]];
      ws.adj[t.kids[0]] += a / d;
      ws.adj[t.kids[1]] -= a * ws.val[t.kids[0]] / (d * d);
      break;
    }
    case GroundFunction::TapeNode::Neg:
      ws.adj[t.kids[0]] -= a;
      break;
    case GroundFunction::TapeNode::Pow: {
      double base = ws.val[t.kids[0]], exp = ws.val[t.kids[1]];
      if (base != 0)
        ws.adj[t.kids[0]] += a * exp * std::pow(base, exp - 1.0);
      if (base > 0)
        ws.adj[t.kids[1]] += a * ws.val[ri] * std::log(base);
      break;
    }
    case GroundFunction::TapeNode::CmpOrder: {
      if (t.textCmp || !ws.sens[ri])
        break;
      double v = ws.val[ri];
      double dmargin = a * sigmoidA_ * v * (1.0 - v);
      if (t.cmp == CmpOp::Lt || t.cmp == CmpOp::Le) {
        ws.adj[t.kids[1]] += dmargin;
        ws.adj[t.kids[0]] -= dmargin;
      } else {
        ws.adj[t.kids[0]] += dmargin;
        ws.adj[t.kids[1]] -= dmargin;
      }
      break;
    }
    case GroundFunction::TapeNode::And: {
      // d(prod)/d(kid) = prod of the others
      int zeros = 0, zeroKid = -1;
      double nz = 1;
      for (int k : t.kids) {
        if (ws.val[k] == 0) {
          ++zeros;
          zeroKid = k;
        } else {
          nz *= ws.val[k];
        }
      }
      if (zeros == 0) {
        for (int k : t.kids)
          ws.adj[k] += a * nz / ws.val[k];
      } else if (zeros == 1) {
        ws.adj[zeroKid] += a * nz;
      }
      break;
    }
    case GroundFunction::TapeNode::Or: {
      int ones = 0, oneKid = -1;
      double nz = 1;
      for (int k : t.kids) {
        double c = 1.0 - ws.val[k];
        if (c == 0) {
          ++ones;
          oneKid = k;
        } else {
          nz *= c;
        }
      }
      if (ones == 0) {
        for (int k : t.kids)
          ws.adj[k] += a * nz / (1.0 - ws.val[k]);
      } else if (ones == 1) {
        ws.adj[oneKid] += a * nz;
      }
      break;
    }
    case GroundFunction::TapeNode::Not:
      ws.adj[t.kids[0]] -= a;
      break;
    case GroundFunction::TapeNode::Sqrt:
      if (ws.val[ri] > 0)
        ws.adj[t.kids[0]] += a * 0.5 / ws.val[ri];
      break;
    case GroundFunction::TapeNode::Abs:
      ws.adj[t.kids[0]] += ws.val[t.kids[0]] >= 0 ? a : -a;
      break;
    case GroundFunction::TapeNode::Least:
    case GroundFunction::TapeNode::Greatest:
      for (int k : t.kids)
        if (ws.val[k] == ws.val[ri]) {
          ws.adj[k] += a;
          break;
        }
      break;
    }
  }
}

double GroundFunction::value(std::span<const double> x, ExecMode mode) const {
  std::vector<double> grad;
  return value_and_gradient(x, grad, mode);
}

double GroundFunction::value_and_gradient(std::span<const double> x, std::vector<double> &grad,
                                          ExecMode mode) const {
  grad.assign(coords_.size(), 0.0);
  bool isExtremum = agg_ == sql::AggKind::Min || agg_ == sql::AggKind::Max;
  if (tupleCount_ == 0) {
    if (isExtremum)
      fail(ErrorKind::EmptyAggregate, "MIN/MAX over an empty join");
    return 0.0;
  }

#ifdef _OPENMP
  bool parallel = mode == ExecMode::Parallel && !omp_in_parallel();
#else
  bool parallel = false;
#endif

  if (!isExtremum) {
    // COUNT: sum of smoothed conditions. SUM: condition-weighted summand.
    double total = 0;
    auto body = [&](long t, Workspace &ws, double &lt, std::vector<double> &lg) {
      double S, v;
      eval_tuple(t, x, ws, S, v);
      if (S == 0)
        return;
      if (agg_ == sql::AggKind::Sum) {
        lt += S * v;
        reverse_tuple(ws, S, v, lg);
      } else {
        lt += S;
        reverse_tuple(ws, 0.0, 1.0, lg);
      }
    };
    if (parallel) {
#ifdef _OPENMP
#pragma omp parallel
      {
        Workspace ws;
        std::vector<double> lg(coords_.size(), 0.0);
        double lt = 0;
#pragma omp for schedule(static) nowait
        for (long t = 0; t < tupleCount_; ++t)
          body(t, ws, lt, lg);
#pragma omp critical
        {
          total += lt;
          for (size_t i = 0; i < grad.size(); ++i)
            grad[i] += lg[i];
        }
      }
#endif
    } else {
      Workspace ws;
      body(0, ws, total, grad);
      for (long t = 1; t < tupleCount_; ++t)
        body(t, ws, total, grad);
    }
    return total;
  }

  // MIN/MAX: f = sign * (1/a) * ln sum S_i * exp(sign * a * v_i), computed
  // with a max shift. Three sweeps: shift, normalizer, gradient.
  double sign = agg_ == sql::AggKind::Min ? -1.0 : 1.0;
  double shift = -std::numeric_limits<double>::infinity();
  {
    auto body = [&](long t, Workspace &ws, double &lm) {
      double S, v;
      eval_tuple(t, x, ws, S, v);
      if (S <= 0)
        return;
      lm = std::max(lm, std::log(S) + sign * sigmoidA_ * v);
    };
    if (parallel) {
#ifdef _OPENMP
#pragma omp parallel
      {
        Workspace ws;
        double lm = -std::numeric_limits<double>::infinity();
#pragma omp for schedule(static) nowait
        for (long t = 0; t < tupleCount_; ++t)
          body(t, ws, lm);
#pragma omp critical
        shift = std::max(shift, lm);
      }
#endif
    } else {
      Workspace ws;
      for (long t = 0; t < tupleCount_; ++t)
        body(t, ws, shift);
    }
  }
  if (std::isinf(shift))
    fail(ErrorKind::EmptyAggregate, "MIN/MAX over a join whose condition never holds");

  double norm = 0;
  {
    auto body = [&](long t, Workspace &ws, double &ln) {
      double S, v;
      eval_tuple(t, x, ws, S, v);
      if (S <= 0)
        return;
      ln += std::exp(std::log(S) + sign * sigmoidA_ * v - shift);
    };
    if (parallel) {
#ifdef _OPENMP
#pragma omp parallel
      {
        Workspace ws;
        double ln = 0;
#pragma omp for schedule(static) nowait
        for (long t = 0; t < tupleCount_; ++t)
          body(t, ws, ln);
#pragma omp critical
        norm += ln;
      }
#endif
    } else {
      Workspace ws;
      for (long t = 0; t < tupleCount_; ++t)
        body(t, ws, norm);
    }
  }

  {
    auto body = [&](long t, Workspace &ws, std::vector<double> &lg) {
      double S, v;
      eval_tuple(t, x, ws, S, v);
      if (S <= 0)
        return;
      double u = std::exp(std::log(S) + sign * sigmoidA_ * v - shift) / norm;
      if (u == 0)
        return;
      // d f = sum_i u_i * (dv_i + sign * dS_i / (a * S_i))
      reverse_tuple(ws, u, sign * u / (sigmoidA_ * S), lg);
    };
    if (parallel) {
#ifdef _OPENMP
#pragma omp parallel
      {
        Workspace ws;
        std::vector<double> lg(coords_.size(), 0.0);
#pragma omp for schedule(static) nowait
        for (long t = 0; t < tupleCount_; ++t)
          body(t, ws, lg);
#pragma omp critical
        for (size_t i = 0; i < grad.size(); ++i)
          grad[i] += lg[i];
      }
#endif
    } else {
      Workspace ws;
      for (long t = 0; t < tupleCount_; ++t)
        body(t, ws, grad);
    }
  }
  return sign * (shift + std::log(norm)) / sigmoidA_;
}

// --- grounding ---------------------------------------------------------

namespace {

struct IntervalCtx {
  const DagBuilder &dag;
  const RangeMap &ranges;
  const sql::SqlWorkflow &wf;
};

struct Interval {
  double lo, hi;
};

Interval interval_of(const IntervalCtx &ctx, NodeId id) {
  const DagNode &n = ctx.dag.node(id);
  auto child = [&](size_t i) { return interval_of(ctx, n.children[i]); };
  switch (n.kind) {
  case DagKind::Const: {
    if (std::holds_alternative<std::string>(n.constant))
      return {0, 0};
    double v = as_double(n.constant);
    return {v, v};
  }
  case DagKind::InputAttr: {
    auto it = ctx.ranges.find({n.table, n.column});
    if (it == ctx.ranges.end())
      fail(ErrorKind::MissingAttackerBound,
           "attribute " + n.table + "." + n.column +
               " feeds a divisor; declare an attacker range for it");
    return {it->second.lo, it->second.hi};
  }
  case DagKind::Arith: {
    switch (n.arith) {
    case ArithOp::Neg: {
      Interval a = child(0);
      return {-a.hi, -a.lo};
    }
    case ArithOp::Add: {
      Interval a = child(0), b = child(1);
      return {a.lo + b.lo, a.hi + b.hi};
    }
    case ArithOp::Sub: {
      Interval a = child(0), b = child(1);
      return {a.lo - b.hi, a.hi - b.lo};
    }
    case ArithOp::Mul: {
      Interval a = child(0), b = child(1);
      double c[4] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
      return {*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
    }
    case ArithOp::Div: {
      Interval a = child(0), b = child(1);
      if (b.lo <= 0 && b.hi >= 0)
        fail(ErrorKind::MissingAttackerBound,
             "a divisor may reach zero within the declared attacker ranges");
      double c[4] = {a.lo / b.lo, a.lo / b.hi, a.hi / b.lo, a.hi / b.hi};
      return {*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
    }
    case ArithOp::Pow: {
      Interval a = child(0), b = child(1);
      if (b.lo != b.hi)
        fail(ErrorKind::MissingAttackerBound, "cannot bound a divisor with a variable exponent");
      double p = b.lo;
      double c[2] = {std::pow(a.lo, p), std::pow(a.hi, p)};
      Interval r{std::min(c[0], c[1]), std::max(c[0], c[1])};
      if (a.lo < 0 && a.hi > 0 && p > 0 && std::fmod(p, 2.0) == 0)
        r.lo = 0;  // even power spans zero
      return r;
    }
    }
    break;
  }
  case DagKind::FuncApp: {
    if (n.func == "sqrt") {
      Interval a = child(0);
      return {std::sqrt(std::max(0.0, a.lo)), std::sqrt(std::max(0.0, a.hi))};
    }
    if (n.func == "abs") {
      Interval a = child(0);
      if (a.lo >= 0)
        return a;
      if (a.hi <= 0)
        return {-a.hi, -a.lo};
      return {0, std::max(-a.lo, a.hi)};
    }
    if (n.func == "least" || n.func == "greatest") {
      Interval r = child(0);
      for (size_t i = 1; i < n.children.size(); ++i) {
        Interval c = child(i);
        if (n.func == "least")
          r = {std::min(r.lo, c.lo), std::min(r.hi, c.hi)};
        else
          r = {std::max(r.lo, c.lo), std::max(r.hi, c.hi)};
      }
      return r;
    }
    break;
  }
  case DagKind::Cmp:
  case DagKind::Bool:
    return {0, 1};
  default:
    break;
  }
  fail(ErrorKind::MissingAttackerBound, "cannot bound a divisor expression");
}

} // namespace

GroundFunction smooth_lower(const sql::SqlWorkflow &wf, const std::string &targetTable,
                            const NormSet &norms, const RangeMap &ranges,
                            const SmoothParams &params) {
  if (params.sigmoidA <= 0)
    fail(ErrorKind::InfeasibleSmoothness, "sigmoid precision must be positive");

  auto runs = model::enumerate_runs(*wf.processModel);
  DagBuilder dag;
  auto provs = symbolic_run(wf, runs[0], {targetTable}, dag, 0);
  if (provs.empty())
    fail(ErrorKind::Binding, "target \"" + targetTable + "\" produced no columns");

  NodeId root = dag.simplify(provs[0].root);
  const DagNode &rootN = dag.node(root);

  GroundFunction fn;
  fn.sigmoidA_ = params.sigmoidA;

  NodeId valueId = kNoNode, condId = kNoNode;
  std::vector<RowBinding> scope;
  const DagNode &valueBranch = dag.node(rootN.children[0]);
  if (valueBranch.kind == DagKind::Agg) {
    fn.agg_ = valueBranch.agg;
    valueId = fn.agg_ == sql::AggKind::Count ? kNoNode : valueBranch.children[0];
    condId = valueBranch.children[1];
    scope = valueBranch.scope;
  } else {
    if (rootN.distinct)
      fail(ErrorKind::UnsupportedAggregation,
           "smooth analysis does not support DISTINCT; use local sensitivity instead");
    fn.agg_ = sql::AggKind::Count;  // the analyzer counts output rows
    condId = rootN.children[1];
    scope = rootN.scope;
  }
  std::vector<NodeId> roots{condId};
  if (valueId != kNoNode)
    roots.push_back(valueId);
  for (NodeId id : dag.reachable(roots))
    if (dag.node(id).kind == DagKind::Agg || dag.node(id).kind == DagKind::Filter)
      fail(ErrorKind::UnsupportedAggregation,
           "nested aggregation is not supported by the smooth engine");

  // Sensitive coordinates from the declared norms.
  std::map<std::string, std::map<std::pair<int, int>, int>> coordOf;  // table -> (row, schemaCol) -> k
  for (const auto &[table, tn] : norms) {
    if (!tn.spec.has_sensitive_cols())
      continue;
    auto dit = wf.data.find(table);
    if (dit == wf.data.end())
      fail(ErrorKind::Binding, "no instance data for normed table \"" + table + "\"");
    int rowCount = static_cast<int>(dit->second.rows.size());
    for (int row : tn.spec.sensitive_rows(rowCount)) {
      for (size_t nc = 0; nc < tn.tree.colSchemaIndex.size(); ++nc) {
        int sc = tn.tree.colSchemaIndex[nc];
        Coordinate c{table, row, sc, static_cast<int>(nc)};
        coordOf[table][{row, sc}] = static_cast<int>(fn.coords_.size());
        fn.coords_.push_back(c);
        fn.baseline_.push_back(as_double(dit->second.rows[row][sc]));
      }
    }
  }

  // Slots and instance data.
  std::unordered_map<int, int> symToSlot;
  fn.tupleCount_ = 1;
  for (const auto &rb : scope) {
    auto dit = wf.data.find(rb.table);
    if (dit == wf.data.end())
      fail(ErrorKind::Binding, "no instance data for table \"" + rb.table + "\"");
    const sql::TableData &td = dit->second;
    GroundFunction::Slot slot;
    slot.table = rb.table;
    slot.rowCount = static_cast<long>(td.rows.size());
    size_t ncols = td.schema.columns.size();
    slot.num.assign(ncols, {});
    slot.text.assign(ncols, {});
    slot.coord.assign(ncols, {});
    for (size_t c = 0; c < ncols; ++c) {
      bool isText = td.schema.columns[c].second == ColType::Text;
      slot.num[c].resize(td.rows.size(), 0.0);
      slot.text[c].resize(isText ? td.rows.size() : 0);
      slot.coord[c].assign(td.rows.size(), -1);
      for (size_t r = 0; r < td.rows.size(); ++r) {
        if (isText)
          slot.text[c][r] = std::get<std::string>(td.rows[r][c]);
        else
          slot.num[c][r] = as_double(td.rows[r][c]);
        auto tit = coordOf.find(rb.table);
        if (tit != coordOf.end()) {
          auto cit = tit->second.find({static_cast<int>(r), static_cast<int>(c)});
          if (cit != tit->second.end())
            slot.coord[c][r] = cit->second;
        }
      }
    }
    if (slot.rowCount == 0) {
      fn.tupleCount_ = 0;
    } else if (fn.tupleCount_ > 0) {
      if (fn.tupleCount_ > 100000000L / slot.rowCount)
        fail(ErrorKind::Evaluation, "join too large to ground");
      fn.tupleCount_ *= slot.rowCount;
    }
    symToSlot[rb.rowSym] = static_cast<int>(fn.slots_.size());
    fn.slots_.push_back(std::move(slot));
  }
  if (scope.empty())
    fn.tupleCount_ = 1;

  // Divisor feasibility: every division must stay away from zero under the
  // declared attacker ranges.
  {
    IntervalCtx ictx{dag, ranges, wf};
    for (NodeId id : dag.reachable(roots)) {
      const DagNode &n = dag.node(id);
      if (n.kind == DagKind::Arith && n.arith == ArithOp::Div) {
        Interval iv = interval_of(ictx, n.children[1]);
        if (iv.lo <= 0 && iv.hi >= 0)
          fail(ErrorKind::MissingAttackerBound,
               "a divisor may reach zero within the declared attacker ranges");
      }
    }
  }

  // Compile the DAG into a tape (ids ascend children-first, so a single pass
  // in id order works).
  std::unordered_map<NodeId, int> tapeIndex;
  std::vector<NodeId> order = dag.reachable(roots);
  for (NodeId id : order) {
    const DagNode &n = dag.node(id);
    GroundFunction::TapeNode t;
    for (NodeId c : n.children)
      t.kids.push_back(tapeIndex.at(c));
    switch (n.kind) {
    case DagKind::Const:
      if (std::holds_alternative<std::string>(n.constant)) {
        t.op = GroundFunction::TapeNode::ConstText;
        t.ctext = std::get<std::string>(n.constant);
      } else {
        t.op = GroundFunction::TapeNode::Const;
        t.cval = as_double(n.constant);
      }
      break;
    case DagKind::InputAttr: {
      auto sit = symToSlot.find(n.rowSym);
      if (sit == symToSlot.end())
        fail(ErrorKind::Evaluation, "attribute outside the aggregation scope");
      const sql::TableSchema &schema = wf.schemas.at(n.table);
      int sc = schema.column_index(n.column);
      t.op = n.attrType == ColType::Text ? GroundFunction::TapeNode::InputText : GroundFunction::TapeNode::Input;
      t.slot = sit->second;
      t.col = sc;
      break;
    }
    case DagKind::Arith:
      switch (n.arith) {
      case ArithOp::Add: t.op = GroundFunction::TapeNode::Add; break;
      case ArithOp::Sub: t.op = GroundFunction::TapeNode::Sub; break;
      case ArithOp::Mul: t.op = GroundFunction::TapeNode::Mul; break;
      case ArithOp::Div: t.op = GroundFunction::TapeNode::Div; break;
      case ArithOp::Pow: t.op = GroundFunction::TapeNode::Pow; break;
      case ArithOp::Neg: t.op = GroundFunction::TapeNode::Neg; break;
      }
      break;
    case DagKind::Cmp: {
      bool order_cmp = n.cmp == CmpOp::Lt || n.cmp == CmpOp::Le || n.cmp == CmpOp::Gt ||
                       n.cmp == CmpOp::Ge;
      // Equality is discrete: it cannot be moved by epsilon-sized nudges, so
      // it stays a constant under smoothing.
      t.op = order_cmp ? GroundFunction::TapeNode::CmpOrder : GroundFunction::TapeNode::CmpDiscrete;
      t.cmp = n.cmp;
      t.textCmp = dag.node(n.children[0]).kind == DagKind::InputAttr
                      ? dag.node(n.children[0]).attrType == ColType::Text
                      : dag.node(n.children[0]).kind == DagKind::Const &&
                            std::holds_alternative<std::string>(dag.node(n.children[0]).constant);
      break;
    }
    case DagKind::Bool:
      t.op = n.boolean == BoolOp::And ? GroundFunction::TapeNode::And
             : n.boolean == BoolOp::Or ? GroundFunction::TapeNode::Or
                                       : GroundFunction::TapeNode::Not;
      break;
    case DagKind::FuncApp:
      if (n.func == "sqrt")
        t.op = GroundFunction::TapeNode::Sqrt;
      else if (n.func == "abs")
        t.op = GroundFunction::TapeNode::Abs;
      else if (n.func == "least")
        t.op = GroundFunction::TapeNode::Least;
      else if (n.func == "greatest")
        t.op = GroundFunction::TapeNode::Greatest;
      else
        fail(ErrorKind::Evaluation, "unknown builtin \"" + n.func + "\"");
      break;
    default:
      fail(ErrorKind::Evaluation, "unexpected node kind in ground query");
    }
    tapeIndex[id] = static_cast<int>(fn.tape_.size());
    fn.tape_.push_back(std::move(t));
  }
  fn.condRoot_ = tapeIndex.at(condId);
  fn.valueRoot_ = valueId == kNoNode ? -1 : tapeIndex.at(valueId);
  return fn;
}

// --- sensitivity ---------------------------------------------------------

std::map<std::string, double> derivative_sensitivity(const GroundFunction &fn,
                                                     const NormSet &norms,
                                                     std::span<const double> x, ExecMode mode) {
  std::vector<double> grad;
  fn.value_and_gradient(x, grad, mode);

  std::map<std::string, double> out;
  for (const auto &[table, tn] : norms) {
    if (!tn.spec.has_sensitive_cols()) {
      out[table] = 0.0;
      continue;
    }
    // gradient blocks per sensitive row
    std::map<int, std::vector<double>> rows;
    for (size_t k = 0; k < fn.coordinates().size(); ++k) {
      const Coordinate &c = fn.coordinates()[k];
      if (c.table != table)
        continue;
      auto &block = rows[c.row];
      if (block.empty())
        block.assign(tn.tree.cols.size(), 0.0);
      block[c.normCol] = grad[k];
    }
    std::vector<double> duals;
    for (const auto &[row, block] : rows)
      duals.push_back(tn.tree.row_dual(block));
    out[table] = duals.empty() ? 0.0 : tn.tree.table_dual(duals);
  }
  return out;
}

std::map<std::string, double> derivative_sensitivity(const GroundFunction &fn,
                                                     const NormSet &norms, ExecMode mode) {
  return derivative_sensitivity(fn, norms, fn.baseline(), mode);
}

std::map<std::string, double> smooth_bound(const GroundFunction &fn, const NormSet &norms,
                                           double beta, const RangeMap &ranges,
                                           const SmoothParams &params, ExecMode mode) {
  beta = std::min(beta, kBetaCap);
  std::map<std::string, double> best = derivative_sensitivity(fn, norms, ExecMode::Serial);

  const auto &coords = fn.coordinates();
  struct GridPoint {
    size_t coord;
    double value;
    double distance;
  };
  std::vector<GridPoint> points;
  for (size_t k = 0; k < coords.size(); ++k) {
    const Coordinate &c = coords[k];
    const TableNorm &tn = norms.at(c.table);
    auto rit = ranges.find({c.table, tn.tree.cols[c.normCol]});
    if (rit == ranges.end())
      fail(ErrorKind::MissingAttackerBound,
           "sensitive attribute " + c.table + "." + tn.tree.cols[c.normCol] +
               " needs an attacker range for the smooth bound");
    double lo = rit->second.lo, hi = rit->second.hi;
    for (int g = 0; g < params.gridPoints; ++g) {
      double v = lo + (hi - lo) * g / (params.gridPoints - 1);
      std::vector<double> deltas(tn.tree.cols.size(), 0.0);
      deltas[c.normCol] = std::fabs(v - fn.baseline()[k]);
      // a one-cell change moves one row; the table distance equals that row's
      // distance for both combiner kinds
      double d = tn.tree.row_distance(deltas);
      points.push_back({k, v, d});
    }
  }

  std::vector<std::map<std::string, double>> results(points.size());
  auto eval_point = [&](size_t i) {
    std::vector<double> x(fn.baseline().begin(), fn.baseline().end());
    x[points[i].coord] = points[i].value;
    auto sens = derivative_sensitivity(fn, norms, x, ExecMode::Serial);
    double factor = std::exp(-beta * points[i].distance);
    for (auto &[table, s] : sens)
      s *= factor;
    results[i] = std::move(sens);
  };

#ifdef _OPENMP
  if (mode == ExecMode::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < points.size(); ++i)
      eval_point(i);
  } else {
    for (size_t i = 0; i < points.size(); ++i)
      eval_point(i);
  }
#else
  for (size_t i = 0; i < points.size(); ++i)
    eval_point(i);
#endif

  for (const auto &r : results)
    for (const auto &[table, s] : r) {
      auto it = best.find(table);
      if (it == best.end() || s > it->second)
        best[table] = s;
    }
  return best;
}

} // namespace pleak::sensderiv

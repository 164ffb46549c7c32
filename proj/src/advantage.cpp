#include "pleak/advantage.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include "pleak/sens_local.hpp"

namespace pleak::advantage {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct PolicyLexer {
  std::string text;
  size_t i = 0;
  int line = 1, col = 1;

  void advance() {
    if (text[i] == '\n') { ++line; col = 1; } else ++col;
    ++i;
  }
  void skip_ws() {
    while (i < text.size()) {
      if (text[i] == '#') {
        while (i < text.size() && text[i] != '\n')
          advance();
        continue;
      }
      if (!std::isspace(static_cast<unsigned char>(text[i])))
        break;
      advance();
    }
  }
  bool done() {
    skip_ws();
    return i >= text.size();
  }
  bool eat(char c) {
    skip_ws();
    if (i < text.size() && text[i] == c) {
      advance();
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c))
      fail(ErrorKind::PolicySyntax, std::string("expected '") + c + "'", line, col);
  }
  std::string ident() {
    skip_ws();
    if (i >= text.size() || !(std::isalpha(static_cast<unsigned char>(text[i])) || text[i] == '_'))
      fail(ErrorKind::PolicySyntax, "expected identifier", line, col);
    std::string s;
    while (i < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_')) {
      s += text[i];
      advance();
    }
    return s;
  }
  double number() {
    skip_ws();
    size_t start = i;
    if (i < text.size() && (text[i] == '-' || text[i] == '+'))
      advance();
    bool any = false;
    while (i < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) {
      advance();
      any = true;
    }
    if (!any)
      fail(ErrorKind::PolicySyntax, "expected number", line, col);
    return std::stod(text.substr(start, i - start));
  }
};

std::pair<std::string, std::string> qualified(PolicyLexer &lx) {
  std::string table = lx.ident();
  lx.expect('.');
  std::string col = lx.ident();
  return {table, col};
}

} // namespace

const Knowledge *AttackerKnowledge::find(const std::string &table,
                                         const std::string &column) const {
  auto it = entries.find({table, column});
  return it == entries.end() ? nullptr : &it->second;
}

sensderiv::RangeMap AttackerKnowledge::ranges() const {
  sensderiv::RangeMap out;
  for (const auto &[key, k] : entries)
    if (k.kind == Knowledge::Range)
      out[key] = {k.lo, k.hi};
  return out;
}

std::string AttackerKnowledge::print() const {
  std::ostringstream os;
  for (const auto &[key, k] : entries) {
    os << key.first << "." << key.second << " ";
    switch (k.kind) {
    case Knowledge::Exact: os << "exact"; break;
    case Knowledge::Range: os << "range " << k.lo << " " << k.hi; break;
    case Knowledge::Total: os << "total " << k.total; break;
    }
    os << ";\n";
  }
  return os.str();
}

std::string SensitiveSpec::print() const {
  std::ostringstream os;
  os << "leak ";
  for (size_t i = 0; i < targets.size(); ++i) {
    if (i)
      os << ", ";
    os << targets[i].table << "." << targets[i].column << " ";
    if (targets[i].guess.kind == Guess::Exact)
      os << "exact";
    else
      os << "approx " << targets[i].guess.radius;
  }
  os << " cost " << cost << ";\n";
  return os.str();
}

AttackerKnowledge parse_attacker(const std::string &attackerText) {
  AttackerKnowledge knowledge;
  PolicyLexer lx{attackerText};
  while (!lx.done()) {
    auto [table, col] = qualified(lx);
    std::string kw = lx.ident();
    Knowledge k;
    if (kw == "exact") {
      k.kind = Knowledge::Exact;
    } else if (kw == "range") {
      k.kind = Knowledge::Range;
      k.lo = lx.number();
      k.hi = lx.number();
      if (k.lo >= k.hi)
        fail(ErrorKind::PolicySyntax, "range needs lo < hi", lx.line, lx.col);
    } else if (kw == "total") {
      k.kind = Knowledge::Total;
      double n = lx.number();
      if (n < 1 || n != std::floor(n))
        fail(ErrorKind::PolicySyntax, "total needs an integer >= 1", lx.line, lx.col);
      k.total = static_cast<long>(n);
    } else {
      fail(ErrorKind::PolicySyntax, "expected exact, range or total", lx.line, lx.col);
    }
    lx.expect(';');
    knowledge.entries[{table, col}] = k;
  }
  return knowledge;
}

std::pair<AttackerKnowledge, SensitiveSpec> parse_policy(const std::string &attackerText,
                                                         const std::string &sensitiveText) {
  AttackerKnowledge knowledge = parse_attacker(attackerText);
  SensitiveSpec sensitive;
  {
    PolicyLexer lx{sensitiveText};
    bool seen = false;
    while (!lx.done()) {
      std::string kw = lx.ident();
      if (kw != "leak")
        fail(ErrorKind::PolicySyntax, "expected \"leak\"", lx.line, lx.col);
      if (seen)
        fail(ErrorKind::PolicySyntax, "only one leak statement is supported", lx.line, lx.col);
      seen = true;
      while (true) {
        LeakTarget t;
        auto [table, col] = qualified(lx);
        t.table = table;
        t.column = col;
        std::string g = lx.ident();
        if (g == "exact") {
          t.guess.kind = Guess::Exact;
        } else if (g == "approx") {
          t.guess.kind = Guess::Approx;
          t.guess.radius = lx.number();
          if (t.guess.radius <= 0)
            fail(ErrorKind::PolicySyntax, "approx needs r > 0", lx.line, lx.col);
        } else {
          fail(ErrorKind::PolicySyntax, "expected exact or approx", lx.line, lx.col);
        }
        sensitive.targets.push_back(std::move(t));
        if (!lx.eat(','))
          break;
      }
      std::string costKw = lx.ident();
      if (costKw != "cost")
        fail(ErrorKind::PolicySyntax, "expected \"cost\"", lx.line, lx.col);
      sensitive.cost = lx.number();
      if (sensitive.cost < 0)
        fail(ErrorKind::PolicySyntax, "cost must be nonnegative", lx.line, lx.col);
      lx.expect(';');
    }
    if (!seen)
      fail(ErrorKind::PolicySyntax, "sensitive policy needs a leak statement");
  }
  return {std::move(knowledge), std::move(sensitive)};
}

double prior_probability(const Knowledge &knowledge, const Guess &guess) {
  switch (knowledge.kind) {
  case Knowledge::Exact:
    return 1.0;  // the attacker already knows the value
  case Knowledge::Range:
    if (guess.kind != Guess::Approx)
      fail(ErrorKind::PolicyMismatch,
           "an exact guess against range knowledge has zero prior; use approx");
    return std::min(1.0, 2.0 * guess.radius / (knowledge.hi - knowledge.lo));
  case Knowledge::Total:
    if (guess.kind != Guess::Exact)
      fail(ErrorKind::PolicyMismatch, "approx guesses make no sense for discrete knowledge");
    return 1.0 / static_cast<double>(knowledge.total);
  }
  fail(ErrorKind::PolicyMismatch, "bad knowledge entry");
}

double advantage_to_epsilon(double adv, double p, double r) {
  if (!(adv > 0))
    return 0.0;
  if (p <= 0)
    fail(ErrorKind::PolicyMismatch, "prior must be positive");
  if (r <= 0)
    fail(ErrorKind::PolicyMismatch, "guess radius must be positive");
  if (p + adv >= 1)
    return kInf;  // the bound is vacuous; no noise needed
  return std::log((p + adv) * (1 - p) / (p * (1 - p - adv))) / r;
}

double posterior_from_epsilon(double epsilon, double p, double r) {
  if (std::isinf(epsilon))
    return 1.0;
  double x = std::exp(epsilon * r);
  return x * p / (1 - p + x * p);
}

AdvantageResult advantage_analysis(const sql::SqlWorkflow &wf, const std::string &targetTable,
                                   const AttackerKnowledge &knowledge,
                                   const SensitiveSpec &sensitive, double adv,
                                   sensderiv::SmoothParams params, bool betaFromEpsilon) {
  if (adv < 0 || adv > 1)
    fail(ErrorKind::PolicyMismatch, "advantage bound must lie in [0, 1]");
  if (sensitive.targets.empty())
    fail(ErrorKind::PolicyMismatch, "no sensitive targets declared");

  AdvantageResult result;
  result.advantageBound = adv;

  // Per-target priors and epsilons.
  double minEps = kInf;
  for (const auto &t : sensitive.targets) {
    const Knowledge *k = knowledge.find(t.table, t.column);
    if (!k)
      fail(ErrorKind::PolicyMismatch,
           "attacker knowledge does not cover " + t.table + "." + t.column);
    TargetReport rep;
    rep.table = t.table;
    rep.column = t.column;
    rep.prior = prior_probability(*k, t.guess);
    rep.posterior = std::min(1.0, rep.prior + adv);
    double radius = t.guess.kind == Guess::Approx ? t.guess.radius : 1.0;
    rep.epsilon = adv > 0 ? advantage_to_epsilon(adv, rep.prior, radius) : 0.0;
    minEps = std::min(minEps, rep.epsilon);
    result.targets.push_back(rep);
    result.expectedCost += sensitive.cost * rep.posterior;
  }

  // Endpoints resolve without running the pipeline.
  if (adv == 0) {
    result.epsilon = 0;
    result.relativeErrorPct = kInf;
    return result;
  }
  if (adv >= 1 || std::isinf(minEps)) {
    result.epsilon = kInf;
    result.noiseScale = 0;
    result.relativeErrorPct = 0;
    return result;
  }
  result.epsilon = minEps;

  // Synthesize per-table norms from the continuous targets: distance 1 means
  // one guess radius of movement in one attribute of one row.
  sensderiv::NormSet norms;
  std::map<std::string, std::vector<const LeakTarget *>> perTable;
  for (const auto &t : sensitive.targets)
    if (t.guess.kind == Guess::Approx)
      perTable[t.table].push_back(&t);

  for (const auto &[table, targets] : perTable) {
    auto sit = wf.schemas.find(table);
    if (sit == wf.schemas.end())
      fail(ErrorKind::Binding, "sensitive target table \"" + table + "\" is not in the workflow");
    sensderiv::NormSpec spec;
    spec.allRows = true;
    std::ostringstream normText;
    normText << "rows: all;\ncols: ";
    for (size_t i = 0; i < targets.size(); ++i)
      normText << (i ? ", " : "") << targets[i]->column;
    normText << ";\n";
    for (size_t i = 0; i < targets.size(); ++i)
      normText << "v" << i << " = scaleNorm " << (1.0 / targets[i]->guess.radius) << " "
               << targets[i]->column << ";\n";
    if (targets.size() == 1) {
      normText << "return lp 1.0 v0;\n";
    } else {
      normText << "z = linf";
      for (size_t i = 0; i < targets.size(); ++i)
        normText << " v" << i;
      normText << ";\nreturn lp 1.0 z;\n";
    }
    sensderiv::TableNorm tn;
    tn.spec = sensderiv::parse_norm(normText.str());
    tn.tree = sensderiv::compile_norm(tn.spec, sit->second);
    norms[table] = std::move(tn);
  }

  params.epsilon = minEps;
  if (betaFromEpsilon)
    params.beta = minEps / 10.0;  // safely below epsilon / (gamma + 1)
  params.validate();

  sensderiv::RangeMap ranges = knowledge.ranges();
  auto fn = sensderiv::smooth_lower(wf, targetTable, norms, ranges, params);
  result.tableSensitivity = sensderiv::smooth_bound(fn, norms, params.beta, ranges, params);

  double S = 0;
  for (const auto &[table, s] : result.tableSensitivity)
    S = std::max(S, s);

  // Concrete output for the relative-error denominator.
  sql::Database evaluated = wf.evaluate_all();
  const sql::TableData &out = evaluated.at(targetTable);
  double y;
  if (fn.aggregation() == sql::AggKind::Count &&
      (out.schema.columns.size() != 1 || out.schema.columns[0].first != "count"))
    y = static_cast<double>(out.rows.size());
  else
    y = out.rows.empty() ? 0.0 : as_double(out.rows[0][0]);
  result.output = y;

  auto cal = sensderiv::calibrate_noise(S, y, params);
  result.noiseScale = cal.noiseScale;
  result.relativeErrorPct = cal.relativeErrorPct;
  return result;
}

} // namespace pleak::advantage

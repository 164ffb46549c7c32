#include "pleak/norm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace pleak::sensderiv {

namespace {

struct NormLexer {
  std::string text;
  size_t i = 0;
  int line = 1, col = 1;

  void skip_ws() {
    while (i < text.size()) {
      char c = text[i];
      if (c == '#') {  // comment to end of line
        while (i < text.size() && text[i] != '\n')
          advance();
        continue;
      }
      if (!std::isspace(static_cast<unsigned char>(c)))
        break;
      advance();
    }
  }
  void advance() {
    if (text[i] == '\n') { ++line; col = 1; } else ++col;
    ++i;
  }
  bool done() {
    skip_ws();
    return i >= text.size();
  }
  char peek() {
    skip_ws();
    return i < text.size() ? text[i] : '\0';
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
      fail(ErrorKind::NormSyntax, std::string("expected '") + c + "'", line, col);
  }
  std::string ident() {
    skip_ws();
    if (i >= text.size() || !(std::isalpha(static_cast<unsigned char>(text[i])) || text[i] == '_'))
      fail(ErrorKind::NormSyntax, "expected identifier", line, col);
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
    while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) {
      advance();
      any = true;
    }
    if (!any)
      fail(ErrorKind::NormSyntax, "expected number", line, col);
    return std::stod(text.substr(start, i - start));
  }
  long integer() {
    double v = number();
    if (v != std::floor(v))
      fail(ErrorKind::NormSyntax, "expected integer", line, col);
    return static_cast<long>(v);
  }
};

} // namespace

NormSpec parse_norm(const std::string &text) {
  NormLexer lx{text};
  NormSpec spec;

  // rows: all | i (, i)*
  std::string kw = lx.ident();
  if (kw != "rows")
    fail(ErrorKind::NormSyntax, "norm must start with \"rows:\"", lx.line, lx.col);
  lx.expect(':');
  if (lx.peek() == 'a' || lx.peek() == 'A') {
    std::string w = lx.ident();
    if (w != "all")
      fail(ErrorKind::NormSyntax, "expected \"all\" or row indices", lx.line, lx.col);
    spec.allRows = true;
  } else {
    spec.allRows = false;
    spec.rowIndices.push_back(static_cast<int>(lx.integer()));
    while (lx.eat(','))
      spec.rowIndices.push_back(static_cast<int>(lx.integer()));
    for (int r : spec.rowIndices)
      if (r < 0)
        fail(ErrorKind::NormInvalid, "row indices must be nonnegative", lx.line, lx.col);
  }
  lx.expect(';');

  // cols: none | id (, id)*
  kw = lx.ident();
  if (kw != "cols")
    fail(ErrorKind::NormSyntax, "expected \"cols:\"", lx.line, lx.col);
  lx.expect(':');
  std::string first = lx.ident();
  if (first != "none") {
    spec.cols.push_back(first);
    while (lx.eat(','))
      spec.cols.push_back(lx.ident());
  }
  lx.expect(';');

  // optional G: float ;
  // then bindings and return
  while (!lx.done()) {
    std::string name = lx.ident();
    if (name == "G") {
      lx.expect(':');
      double g = lx.number();
      if (g <= 0)
        fail(ErrorKind::NormInvalid, "G must be positive", lx.line, lx.col);
      spec.G = g;
      lx.expect(';');
      continue;
    }
    if (name == "return") {
      std::string comb = lx.ident();
      if (comb == "linf") {
        spec.returnCombiner.kind = NormSpec::Combiner::Linf;
      } else if (comb == "lp") {
        spec.returnCombiner.kind = NormSpec::Combiner::Lp;
        spec.returnCombiner.p = lx.number();
        if (spec.returnCombiner.p < 1)
          fail(ErrorKind::NormInvalid, "return lp requires p >= 1", lx.line, lx.col);
      } else {
        fail(ErrorKind::NormSyntax, "return combiner must be linf or lp", lx.line, lx.col);
      }
      spec.returnBinding = lx.ident();
      lx.expect(';');
      if (!lx.done())
        fail(ErrorKind::NormSyntax, "content after return statement", lx.line, lx.col);
      break;
    }
    // binding: name = (lp p args... | scaleNorm c arg | linf args...) ;
    lx.expect('=');
    NormSpec::Binding b;
    b.name = name;
    std::string op = lx.ident();
    if (op == "lp") {
      b.kind = NormSpec::Binding::Lp;
      b.p = lx.number();
      if (b.p < 1)
        fail(ErrorKind::NormInvalid, "lp requires p >= 1", lx.line, lx.col);
      b.args.push_back(lx.ident());
      while (lx.peek() != ';')
        b.args.push_back(lx.ident());
    } else if (op == "scaleNorm") {
      b.kind = NormSpec::Binding::Scale;
      b.scale = lx.number();
      if (b.scale <= 0)
        fail(ErrorKind::NormInvalid, "scaleNorm requires a positive factor", lx.line, lx.col);
      b.args.push_back(lx.ident());
    } else if (op == "linf") {
      b.kind = NormSpec::Binding::Linf;
      b.args.push_back(lx.ident());
      while (lx.peek() != ';')
        b.args.push_back(lx.ident());
    } else {
      fail(ErrorKind::NormSyntax, "expected lp, scaleNorm or linf", lx.line, lx.col);
    }
    lx.expect(';');
    for (const auto &existing : spec.bindings)
      if (existing.name == b.name)
        fail(ErrorKind::NormInvalid, "binding \"" + b.name + "\" defined twice", lx.line, lx.col);
    spec.bindings.push_back(std::move(b));
  }

  if (spec.cols.empty()) {
    if (!spec.bindings.empty() || !spec.returnBinding.empty())
      fail(ErrorKind::NormInvalid,
           "a norm with cols: none cannot declare bindings or a return combiner");
  } else {
    if (spec.returnBinding.empty())
      fail(ErrorKind::NormInvalid, "a norm with sensitive columns needs a return statement");
    bool found = false;
    for (const auto &b : spec.bindings)
      found = found || b.name == spec.returnBinding;
    if (!found)
      fail(ErrorKind::NormInvalid,
           "return references undefined binding \"" + spec.returnBinding + "\"");
  }
  std::set<std::string> colSet(spec.cols.begin(), spec.cols.end());
  if (colSet.size() != spec.cols.size())
    fail(ErrorKind::NormInvalid, "duplicate sensitive column");

  // every binding argument must resolve to an earlier binding or a declared
  // sensitive column
  std::set<std::string> known = colSet;
  for (const auto &b : spec.bindings) {
    for (const auto &a : b.args)
      if (!known.count(a))
        fail(ErrorKind::NormInvalid,
             "\"" + a + "\" is neither a defined binding nor a declared sensitive column");
    known.insert(b.name);
  }
  return spec;
}

std::string NormSpec::print() const {
  std::ostringstream os;
  os << "rows: ";
  if (allRows) {
    os << "all";
  } else {
    for (size_t i = 0; i < rowIndices.size(); ++i)
      os << (i ? ", " : "") << rowIndices[i];
  }
  os << ";\ncols: ";
  if (cols.empty()) {
    os << "none";
  } else {
    for (size_t i = 0; i < cols.size(); ++i)
      os << (i ? ", " : "") << cols[i];
  }
  os << ";\n";
  if (G)
    os << "G: " << *G << ";\n";
  for (const auto &b : bindings) {
    os << b.name << " = ";
    switch (b.kind) {
    case Binding::Lp:
      os << "lp " << b.p;
      break;
    case Binding::Scale:
      os << "scaleNorm " << b.scale;
      break;
    case Binding::Linf:
      os << "linf";
      break;
    }
    for (const auto &a : b.args)
      os << " " << a;
    os << ";\n";
  }
  if (!returnBinding.empty()) {
    os << "return ";
    if (returnCombiner.kind == Combiner::Linf)
      os << "linf";
    else
      os << "lp " << returnCombiner.p;
    os << " " << returnBinding << ";\n";
  }
  return os.str();
}

std::vector<int> NormSpec::sensitive_rows(int rowCount) const {
  std::vector<int> rows;
  if (allRows) {
    for (int i = 0; i < rowCount; ++i)
      rows.push_back(i);
    return rows;
  }
  for (int r : rowIndices)
    if (r < rowCount)
      rows.push_back(r);
  return rows;
}

namespace {

NormTree::Node build_node(const NormSpec &spec, const std::string &ref,
                          std::set<std::string> &usedCols, std::set<std::string> &activeStack) {
  // A reference resolves to a binding first, then to a sensitive column.
  for (const auto &b : spec.bindings) {
    if (b.name != ref)
      continue;
    if (!activeStack.insert(ref).second)
      fail(ErrorKind::NormInvalid, "binding \"" + ref + "\" references itself");
    NormTree::Node n;
    switch (b.kind) {
    case NormSpec::Binding::Lp:
      n.kind = NormTree::Node::Lp;
      n.p = b.p;
      break;
    case NormSpec::Binding::Scale:
      n.kind = NormTree::Node::Scale;
      n.scale = b.scale;
      break;
    case NormSpec::Binding::Linf:
      n.kind = NormTree::Node::Linf;
      break;
    }
    for (const auto &a : b.args)
      n.children.push_back(build_node(spec, a, usedCols, activeStack));
    activeStack.erase(ref);
    return n;
  }
  auto it = std::find(spec.cols.begin(), spec.cols.end(), ref);
  if (it == spec.cols.end())
    fail(ErrorKind::NormInvalid,
         "\"" + ref + "\" is neither a binding nor a declared sensitive column");
  if (!usedCols.insert(ref).second)
    fail(ErrorKind::NormInvalid, "column \"" + ref + "\" used more than once in the norm");
  NormTree::Node n;
  n.kind = NormTree::Node::Column;
  n.colPos = static_cast<int>(it - spec.cols.begin());
  return n;
}

double dual_exponent(double p) {
  // 1/p + 1/q = 1
  if (p == 1)
    return std::numeric_limits<double>::infinity();
  if (std::isinf(p))
    return 1;
  return p / (p - 1);
}

double lp_combine(const std::vector<double> &vals, double p) {
  if (std::isinf(p)) {
    double m = 0;
    for (double v : vals)
      m = std::max(m, v);
    return m;
  }
  if (p == 1) {
    double s = 0;
    for (double v : vals)
      s += v;
    return s;
  }
  double s = 0;
  for (double v : vals)
    s += std::pow(v, p);
  return std::pow(s, 1.0 / p);
}

double node_distance(const NormTree::Node &n, const std::vector<double> &absDeltas) {
  switch (n.kind) {
  case NormTree::Node::Column:
    return absDeltas[n.colPos];
  case NormTree::Node::Scale:
    return n.scale * node_distance(n.children[0], absDeltas);
  case NormTree::Node::Lp: {
    std::vector<double> vals;
    for (const auto &c : n.children)
      vals.push_back(node_distance(c, absDeltas));
    return lp_combine(vals, n.p);
  }
  case NormTree::Node::Linf: {
    std::vector<double> vals;
    for (const auto &c : n.children)
      vals.push_back(node_distance(c, absDeltas));
    return lp_combine(vals, std::numeric_limits<double>::infinity());
  }
  }
  return 0;
}

double node_dual(const NormTree::Node &n, const std::vector<double> &grad) {
  switch (n.kind) {
  case NormTree::Node::Column:
    return std::fabs(grad[n.colPos]);
  case NormTree::Node::Scale:
    // ||x|| = c * ||x||' has dual ||g||* = ||g||'* / c
    return node_dual(n.children[0], grad) / n.scale;
  case NormTree::Node::Lp: {
    std::vector<double> vals;
    for (const auto &c : n.children)
      vals.push_back(node_dual(c, grad));
    return lp_combine(vals, dual_exponent(n.p));
  }
  case NormTree::Node::Linf: {
    std::vector<double> vals;
    for (const auto &c : n.children)
      vals.push_back(node_dual(c, grad));
    return lp_combine(vals, 1.0);  // dual of max is sum
  }
  }
  return 0;
}

} // namespace

NormTree compile_norm(const NormSpec &spec, const sql::TableSchema &schema) {
  NormTree tree;
  tree.combiner = spec.returnCombiner;
  tree.cols = spec.cols;
  for (const auto &c : spec.cols) {
    int idx = schema.column_index(c);
    if (idx < 0)
      fail(ErrorKind::NormInvalid,
           "sensitive column \"" + c + "\" does not exist in table " + schema.name);
    if (!is_numeric(schema.columns[idx].second))
      fail(ErrorKind::NormInvalid,
           "sensitive column \"" + c + "\" of table " + schema.name + " is not numeric");
    tree.colSchemaIndex.push_back(idx);
  }
  if (spec.cols.empty())
    return tree;  // cardinality-only norm; no binding tree

  std::set<std::string> usedCols, activeStack;
  tree.root = build_node(spec, spec.returnBinding, usedCols, activeStack);
  if (usedCols.size() != spec.cols.size())
    for (const auto &c : spec.cols)
      if (!usedCols.count(c))
        fail(ErrorKind::NormInvalid,
             "sensitive column \"" + c + "\" is not used by the return norm");
  return tree;
}

double NormTree::row_distance(const std::vector<double> &absDeltas) const {
  return node_distance(root, absDeltas);
}

double NormTree::row_dual(const std::vector<double> &grad) const {
  return node_dual(root, grad);
}

double NormTree::table_distance(const std::vector<double> &rowDistances) const {
  if (combiner.kind == NormSpec::Combiner::Linf)
    return lp_combine(rowDistances, std::numeric_limits<double>::infinity());
  return lp_combine(rowDistances, combiner.p);
}

double NormTree::table_dual(const std::vector<double> &rowDuals) const {
  // Dual of the row combiner: linf -> sum, lp p -> lq.
  if (combiner.kind == NormSpec::Combiner::Linf)
    return lp_combine(rowDuals, 1.0);
  return lp_combine(rowDuals, dual_exponent(combiner.p));
}

} // namespace pleak::sensderiv

#include "cfl/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>

#include "cfl/errors.hpp"

namespace cfl {

const double* TableDef::find(const std::vector<double>& key) const {
  for (const auto& [k, v] : rows) {
    if (k == key) return &v;
  }
  return nullptr;
}

Expression Expression::constant(double v) {
  Expression e;
  e.nodes_.clear();
  e.root_ = e.add_node({Kind::Constant, v, -1, -1, "", -1});
  return e;
}

Expression Expression::ref(const std::string& name) {
  Expression e;
  e.nodes_.clear();
  e.root_ = e.add_node({Kind::Ref, 0.0, -1, -1, name, -1});
  return e;
}

int Expression::absorb(const Expression& other) {
  const int node_off = static_cast<int>(nodes_.size());
  const int table_off = static_cast<int>(tables_.size());
  for (const auto& t : other.tables_) tables_.push_back(t);
  for (auto n : other.nodes_) {
    if (n.a >= 0) n.a += node_off;
    if (n.b >= 0) n.b += node_off;
    if (n.table >= 0) n.table += table_off;
    nodes_.push_back(std::move(n));
  }
  return other.root_ + node_off;
}

Expression Expression::add(const Expression& a, const Expression& b) {
  Expression e = a;
  Node n;
  n.kind = Kind::Add;
  n.a = e.root_;
  n.b = e.absorb(b);
  e.root_ = e.add_node(std::move(n));
  return e;
}

Expression Expression::sub(const Expression& a, const Expression& b) {
  return add(a, neg(b));
}

Expression Expression::mul(const Expression& a, const Expression& b) {
  Expression e = a;
  Node n;
  n.kind = Kind::Mul;
  n.a = e.root_;
  n.b = e.absorb(b);
  e.root_ = e.add_node(std::move(n));
  return e;
}

Expression Expression::neg(const Expression& a) {
  Expression e = a;
  Node n;
  n.kind = Kind::Neg;
  n.a = e.root_;
  e.root_ = e.add_node(std::move(n));
  return e;
}

Expression Expression::min(const Expression& a, const Expression& b) {
  Expression e = a;
  Node n;
  n.kind = Kind::Min;
  n.a = e.root_;
  n.b = e.absorb(b);
  e.root_ = e.add_node(std::move(n));
  return e;
}

Expression Expression::max(const Expression& a, const Expression& b) {
  Expression e = a;
  Node n;
  n.kind = Kind::Max;
  n.a = e.root_;
  n.b = e.absorb(b);
  e.root_ = e.add_node(std::move(n));
  return e;
}

Expression Expression::indicator(const Expression& a) {
  Expression e = a;
  Node n;
  n.kind = Kind::Indicator;
  n.a = e.root_;
  e.root_ = e.add_node(std::move(n));
  return e;
}

Expression Expression::table_lookup(TableDef table) {
  Expression e;
  e.nodes_.clear();
  e.tables_.push_back(std::move(table));
  Node n;
  n.kind = Kind::TableLookup;
  n.table = 0;
  e.root_ = e.add_node(std::move(n));
  return e;
}

double Expression::eval(const std::function<double(const std::string&)>& lookup) const {
  std::function<double(int)> go = [&](int i) -> double {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.kind) {
      case Kind::Constant:
        return n.value;
      case Kind::Ref:
        return lookup(n.name);
      case Kind::Add:
        return go(n.a) + go(n.b);
      case Kind::Mul:
        return go(n.a) * go(n.b);
      case Kind::Neg:
        return -go(n.a);
      case Kind::Min:
        return std::fmin(go(n.a), go(n.b));
      case Kind::Max:
        return std::fmax(go(n.a), go(n.b));
      case Kind::Indicator:
        return go(n.a) > 0.0 ? 1.0 : 0.0;
      case Kind::TableLookup: {
        const TableDef& t = tables_[static_cast<std::size_t>(n.table)];
        std::vector<double> key;
        key.reserve(t.inputs.size());
        for (const auto& in : t.inputs) key.push_back(lookup(in));
        if (const double* v = t.find(key)) return *v;
        std::ostringstream os;
        os << "(";
        for (std::size_t j = 0; j < key.size(); ++j) os << (j ? "," : "") << key[j];
        os << ")";
        throw MissingTableEntry("no row for inputs " + os.str());
      }
    }
    return 0.0;
  };
  return go(root_);
}

std::vector<std::string> Expression::references() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto push = [&](const std::string& s) {
    if (seen.insert(s).second) out.push_back(s);
  };
  for (const auto& n : nodes_) {
    if (n.kind == Kind::Ref) push(n.name);
    if (n.kind == Kind::TableLookup) {
      for (const auto& in : tables_[static_cast<std::size_t>(n.table)].inputs) push(in);
    }
  }
  return out;
}

bool Expression::references_name(const std::string& name) const {
  for (const auto& n : nodes_) {
    if (n.kind == Kind::Ref && n.name == name) return true;
    if (n.kind == Kind::TableLookup) {
      for (const auto& in : tables_[static_cast<std::size_t>(n.table)].inputs) {
        if (in == name) return true;
      }
    }
  }
  return false;
}

Expression Expression::substitute(const std::string& name, double value) const {
  Expression e = *this;
  for (auto& n : e.nodes_) {
    if (n.kind == Kind::Ref && n.name == name) {
      n.kind = Kind::Constant;
      n.value = value;
      n.name.clear();
    }
  }
  for (auto& t : e.tables_) {
    for (std::size_t j = 0; j < t.inputs.size();) {
      if (t.inputs[j] != name) {
        ++j;
        continue;
      }
      // Specialize: keep rows whose j-th key equals `value`, drop the input.
      std::vector<std::pair<std::vector<double>, double>> rows;
      for (auto& [k, v] : t.rows) {
        if (k[j] == value) {
          std::vector<double> nk = k;
          nk.erase(nk.begin() + static_cast<std::ptrdiff_t>(j));
          rows.emplace_back(std::move(nk), v);
        }
      }
      t.rows = std::move(rows);
      t.inputs.erase(t.inputs.begin() + static_cast<std::ptrdiff_t>(j));
    }
  }
  return e;
}

Expression Expression::rename_refs(const std::map<std::string, std::string>& renames) const {
  Expression e = *this;
  for (auto& n : e.nodes_) {
    if (n.kind == Kind::Ref) {
      auto it = renames.find(n.name);
      if (it != renames.end()) n.name = it->second;
    }
  }
  for (auto& t : e.tables_) {
    for (auto& in : t.inputs) {
      auto it = renames.find(in);
      if (it != renames.end()) in = it->second;
    }
  }
  return e;
}

std::string Expression::to_string() const {
  std::function<std::string(int)> go = [&](int i) -> std::string {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.kind) {
      case Kind::Constant: {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%g", n.value);
        return buf;
      }
      case Kind::Ref:
        return n.name;
      case Kind::Add:
        return "(" + go(n.a) + " + " + go(n.b) + ")";
      case Kind::Mul:
        return "(" + go(n.a) + " * " + go(n.b) + ")";
      case Kind::Neg:
        return "(-" + go(n.a) + ")";
      case Kind::Min:
        return "min(" + go(n.a) + ", " + go(n.b) + ")";
      case Kind::Max:
        return "max(" + go(n.a) + ", " + go(n.b) + ")";
      case Kind::Indicator:
        return "indicator(" + go(n.a) + " > 0)";
      case Kind::TableLookup: {
        const TableDef& t = tables_[static_cast<std::size_t>(n.table)];
        std::string s = "table(";
        for (std::size_t j = 0; j < t.inputs.size(); ++j) s += (j ? ", " : "") + t.inputs[j];
        return s + ")";
      }
    }
    return "?";
  };
  return go(root_);
}

// ---------------------------------------------------------------------------
// Parser: expr := term (('+'|'-') term)* ; term := unary ('*' unary)* ;
// unary := '-' unary | primary ; primary := number | ident | call | '(' expr ')'.
// Inside indicator(...), "a > b" desugars to indicator(a - b).

namespace {

struct Parser {
  const std::string& text;
  const std::map<std::string, double>& params;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, "column " + std::to_string(pos + 1) + " of \"" + text + "\"");
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  Expression parse_expr() {
    Expression e = parse_term();
    while (true) {
      if (eat('+')) {
        e = Expression::add(e, parse_term());
      } else if (eat('-')) {
        e = Expression::sub(e, parse_term());
      } else {
        return e;
      }
    }
  }

  Expression parse_term() {
    Expression e = parse_unary();
    while (eat('*')) e = Expression::mul(e, parse_unary());
    return e;
  }

  Expression parse_unary() {
    if (eat('-')) return Expression::neg(parse_unary());
    return parse_primary();
  }

  Expression parse_primary() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of expression");
    const char c = text[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = text.c_str() + pos;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos += static_cast<std::size_t>(end - begin);
      return Expression::constant(v);
    }
    if (c == '(') {
      ++pos;
      Expression e = parse_expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos;
      while (pos < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
        ++pos;
      std::string ident = text.substr(start, pos - start);
      if (peek() == '(') {
        if (ident == "min" || ident == "max") {
          eat('(');
          Expression a = parse_expr();
          if (!eat(',')) fail("expected ',' in " + ident);
          Expression b = parse_expr();
          if (!eat(')')) fail("expected ')'");
          return ident == "min" ? Expression::min(a, b) : Expression::max(a, b);
        }
        if (ident == "indicator") {
          eat('(');
          Expression a = parse_expr();
          if (eat('>')) {
            Expression b = parse_expr();
            a = Expression::sub(a, b);
          }
          if (!eat(')')) fail("expected ')'");
          return Expression::indicator(a);
        }
        fail("unknown function '" + ident + "'");
      }
      auto it = params.find(ident);
      if (it != params.end()) return Expression::constant(it->second);
      return Expression::ref(ident);
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

}  // namespace

Expression Expression::parse(const std::string& text, const std::map<std::string, double>& params) {
  Parser p{text, params};
  Expression e = p.parse_expr();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing input");
  return e;
}

}  // namespace cfl

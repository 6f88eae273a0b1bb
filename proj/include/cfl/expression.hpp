#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace cfl {

// Finite lookup table: maps tuples of input values to a real output.
// Keys are compared exactly; discrete values are produced, never computed,
// so exact comparison is sound.
struct TableDef {
  std::vector<std::string> inputs;
  std::vector<std::pair<std::vector<double>, double>> rows;

  const double* find(const std::vector<double>& key) const;
};

// Immutable expression tree over constants, named references (noise or
// endogenous variables; classification happens against the owning model),
// add, mul, neg, min, max, indicator(. > 0) and table lookups.
class Expression {
public:
  enum class Kind { Constant, Ref, Add, Mul, Neg, Min, Max, Indicator, TableLookup };

  struct Node {
    Kind kind = Kind::Constant;
    double value = 0.0;  // Constant
    int a = -1, b = -1;  // children
    std::string name;    // Ref
    int table = -1;      // TableLookup
  };

  Expression() { root_ = add_node({Kind::Constant, 0.0, -1, -1, "", -1}); }

  static Expression constant(double v);
  static Expression ref(const std::string& name);
  static Expression add(const Expression& a, const Expression& b);
  static Expression sub(const Expression& a, const Expression& b);
  static Expression mul(const Expression& a, const Expression& b);
  static Expression neg(const Expression& a);
  static Expression min(const Expression& a, const Expression& b);
  static Expression max(const Expression& a, const Expression& b);
  static Expression indicator(const Expression& a);  // 1{a > 0}
  static Expression table_lookup(TableDef table);

  // Parses infix text like "alpha*T + U_X" or "indicator(X1 + U_T > 0)".
  // Identifiers bound in `params` are folded to constants.
  static Expression parse(const std::string& text,
                          const std::map<std::string, double>& params = {});

  double eval(const std::function<double(const std::string&)>& lookup) const;

  // Referenced names (refs and table inputs), unique, in first-use order.
  std::vector<std::string> references() const;
  bool references_name(const std::string& name) const;

  // Replaces every reference to `name` by the constant `value`. Tables with
  // `name` among their inputs are specialized to the matching rows.
  Expression substitute(const std::string& name, double value) const;

  // Renames references (and table inputs) according to the map; names absent
  // from the map are untouched.
  Expression rename_refs(const std::map<std::string, std::string>& renames) const;

  std::string to_string() const;

  const std::vector<Node>& nodes() const { return nodes_; }
  int root() const { return root_; }
  const std::vector<TableDef>& tables() const { return tables_; }

private:
  int add_node(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }
  // Appends `other`'s arena into this one, returning the new root index.
  int absorb(const Expression& other);

  std::vector<Node> nodes_;
  std::vector<TableDef> tables_;
  int root_ = -1;
};

}  // namespace cfl

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlens/model.hpp"

namespace crowdlens {

/// Identifier bound per place to its carrying capacity.
inline constexpr std::string_view kCapacityIdentifier = "capacity";

enum class BinaryOp : char { Add = '+', Sub = '-', Mul = '*', Div = '/' };

/// Immutable arithmetic expression tree. Copies share structure.
class Expr {
 public:
  enum class Kind { Number, MetricRef, Neg, Binary };

  /// `value` must be finite and non-negative; negation is a separate node.
  static Expr number(double value);
  static Expr metric_ref(std::string id);
  static Expr neg(Expr operand);
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs);

  Kind kind() const;
  double number() const;
  const std::string& ref_id() const;
  BinaryOp op() const;
  const Expr& operand() const;
  const Expr& lhs() const;
  const Expr& rhs() const;

  /// Structural equality.
  bool operator==(const Expr& other) const;

  /// Canonical text: minimal parentheses, single spaces around binary
  /// operators, shortest round-trip number literals.
  std::string to_string() const;

  /// Distinct identifiers in order of first appearance.
  std::vector<std::string> references() const;

  std::size_t depth() const;

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

/// Recursive-descent parser. `*` and `/` bind tighter than `+` and `-`; all
/// binary operators are left associative; unary minus binds tightest.
/// Throws ParseError carrying the 0-based byte offset of the offending token.
Expr parse_expression(std::string_view text);

class UnboundIdentifierError : public Error {
 public:
  explicit UnboundIdentifierError(const std::string& id)
      : Error("unbound identifier '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

/// Postfix program over numbered slots, one slot per distinct identifier.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  explicit CompiledExpr(const Expr& expr);

  const std::vector<std::string>& slots() const { return slots_; }

  /// `slot_values[i]` binds `slots()[i]`. Missing operands, division by zero
  /// and non-finite intermediates all yield missing.
  Value run(std::span<const Value> slot_values) const;

 private:
  enum class Op : std::uint8_t { Push, Load, Neg, Add, Sub, Mul, Div };
  struct Instr {
    Op op;
    std::uint32_t slot = 0;
    double literal = 0.0;
  };
  std::vector<Instr> program_;
  std::vector<std::string> slots_;
  std::size_t max_stack_ = 0;
};

using Bindings = std::map<std::string, Value, std::less<>>;

/// Throws UnboundIdentifierError when an identifier has no entry in
/// `bindings` (an entry holding missing is fine).
Value evaluate(const Expr& expr, const Bindings& bindings);

/// Evaluation order for metric definitions: base metrics first in declared
/// order, then derived metrics so that each follows its dependencies, ties
/// broken by declaration order. Throws CycleError or UnknownMetricError.
std::vector<std::string> resolve_metric_graph(std::span<const MetricDef> defs);

/// Validated, parsed and ordered metric definitions.
class MetricCatalog {
 public:
  MetricCatalog() = default;
  /// Throws ConfigError on bad ids/caps, ParseError on bad expressions, and
  /// the resolve_metric_graph errors.
  explicit MetricCatalog(std::vector<MetricDef> defs);

  const std::vector<MetricDef>& defs() const { return defs_; }
  const std::vector<std::string>& evaluation_order() const { return order_; }
  std::size_t size() const { return defs_.size(); }

  std::optional<std::size_t> find(std::string_view id) const;
  /// Throws UnknownMetricError.
  std::size_t index_of(std::string_view id) const;
  const MetricDef& def(std::size_t index) const { return defs_[index]; }

  /// For derived metrics: the compiled expression and, per slot, the metric
  /// index it reads (nullopt for `capacity`).
  const CompiledExpr& compiled(std::size_t index) const { return compiled_[index]; }
  const std::vector<std::optional<std::size_t>>& slot_metrics(std::size_t index) const {
    return slot_metrics_[index];
  }

  /// Base metrics a metric ultimately reads (itself when base).
  const std::vector<std::size_t>& base_dependencies(std::size_t index) const {
    return base_deps_[index];
  }

  /// Derived metrics that transitively depend on `base_index`.
  std::vector<std::size_t> dependents_of(std::size_t base_index) const;

 private:
  std::vector<MetricDef> defs_;
  std::vector<std::string> order_;
  std::vector<CompiledExpr> compiled_;
  std::vector<std::vector<std::optional<std::size_t>>> slot_metrics_;
  std::vector<std::vector<std::size_t>> base_deps_;
};

bool is_identifier(std::string_view text);

}  // namespace crowdlens

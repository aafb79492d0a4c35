#include "crowdlens/expr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <set>
#include <unordered_map>
#include <variant>

namespace crowdlens {

struct Expr::Node {
  Kind kind;
  double number = 0.0;
  std::string id;
  BinaryOp op = BinaryOp::Add;
  std::optional<Expr> lhs;  // also the Neg operand
  std::optional<Expr> rhs;
};

Expr Expr::number(double value) {
  if (!std::isfinite(value) || value < 0.0)
    throw Error("number literal must be finite and non-negative");
  auto n = std::make_shared<Node>();
  n->kind = Kind::Number;
  n->number = value;
  return Expr(std::move(n));
}

Expr Expr::metric_ref(std::string id) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::MetricRef;
  n->id = std::move(id);
  return Expr(std::move(n));
}

Expr Expr::neg(Expr operand) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Neg;
  n->lhs = std::move(operand);
  return Expr(std::move(n));
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Binary;
  n->op = op;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return Expr(std::move(n));
}

Expr::Kind Expr::kind() const { return node_->kind; }
double Expr::number() const { return node_->number; }
const std::string& Expr::ref_id() const { return node_->id; }
BinaryOp Expr::op() const { return node_->op; }
const Expr& Expr::operand() const { return *node_->lhs; }
const Expr& Expr::lhs() const { return *node_->lhs; }
const Expr& Expr::rhs() const { return *node_->rhs; }

bool Expr::operator==(const Expr& other) const {
  if (node_ == other.node_) return true;
  if (kind() != other.kind()) return false;
  switch (kind()) {
    case Kind::Number:
      return number() == other.number();
    case Kind::MetricRef:
      return ref_id() == other.ref_id();
    case Kind::Neg:
      return operand() == other.operand();
    case Kind::Binary:
      return op() == other.op() && lhs() == other.lhs() && rhs() == other.rhs();
  }
  return false;
}

namespace {

int precedence(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Binary:
      return (e.op() == BinaryOp::Add || e.op() == BinaryOp::Sub) ? 1 : 2;
    case Expr::Kind::Neg:
      return 3;
    default:
      return 4;
  }
}

void print(const Expr& e, std::string& out) {
  auto child = [&out](const Expr& c, bool parens) {
    if (parens) out += '(';
    print(c, out);
    if (parens) out += ')';
  };
  switch (e.kind()) {
    case Expr::Kind::Number: {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof buf, e.number());
      out.append(buf, res.ptr);
      break;
    }
    case Expr::Kind::MetricRef:
      out += e.ref_id();
      break;
    case Expr::Kind::Neg:
      out += '-';
      child(e.operand(), precedence(e.operand()) < 3);
      break;
    case Expr::Kind::Binary: {
      int p = precedence(e);
      child(e.lhs(), precedence(e.lhs()) < p);
      out += ' ';
      out += static_cast<char>(e.op());
      out += ' ';
      child(e.rhs(), precedence(e.rhs()) <= p);
      break;
    }
  }
}

void collect_refs(const Expr& e, std::vector<std::string>& out) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      break;
    case Expr::Kind::MetricRef:
      if (std::find(out.begin(), out.end(), e.ref_id()) == out.end()) out.push_back(e.ref_id());
      break;
    case Expr::Kind::Neg:
      collect_refs(e.operand(), out);
      break;
    case Expr::Kind::Binary:
      collect_refs(e.lhs(), out);
      collect_refs(e.rhs(), out);
      break;
  }
}

}  // namespace

std::string Expr::to_string() const {
  std::string out;
  print(*this, out);
  return out;
}

std::vector<std::string> Expr::references() const {
  std::vector<std::string> out;
  collect_refs(*this, out);
  return out;
}

std::size_t Expr::depth() const {
  switch (kind()) {
    case Kind::Number:
    case Kind::MetricRef:
      return 1;
    case Kind::Neg:
      return 1 + operand().depth();
    case Kind::Binary:
      return 1 + std::max(lhs().depth(), rhs().depth());
  }
  return 1;
}

bool is_identifier(std::string_view text) {
  if (text.empty()) return false;
  auto alpha = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(text[0])) return false;
  return std::all_of(text.begin() + 1, text.end(), [&](char c) { return alpha(c) || digit(c); });
}

// ---------------------------------------------------------------------------
// Parser

namespace {

constexpr std::size_t kMaxNesting = 512;

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse() {
    skip_ws();
    if (pos_ == text_.size()) throw ParseError("empty expression", 0);
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("syntax error at offset " + std::to_string(pos_) + ": " + msg, pos_);
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                   text_[pos_] == '\n' || text_[pos_] == '\r'))
      ++pos_;
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  Expr parse_sum() {
    Expr lhs = parse_product();
    for (;;) {
      if (peek('+') || peek('-')) {
        auto op = static_cast<BinaryOp>(text_[pos_++]);
        lhs = Expr::binary(op, std::move(lhs), parse_product());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_product() {
    Expr lhs = parse_unary();
    for (;;) {
      if (peek('*') || peek('/')) {
        auto op = static_cast<BinaryOp>(text_[pos_++]);
        lhs = Expr::binary(op, std::move(lhs), parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (++depth_ > kMaxNesting) fail("expression nested too deeply");
    Expr e = peek('-') ? (++pos_, Expr::neg(parse_unary())) : parse_primary();
    --depth_;
    return e;
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ == text_.size()) fail("unexpected end of expression");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      if (!peek(')')) fail(pos_ == text_.size() ? "missing ')'" : "expected ')'");
      ++pos_;
      return e;
    }
    if ((c >= '0' && c <= '9') || c == '.') return parse_number();
    if (is_identifier(text_.substr(pos_, 1))) {
      std::size_t start = pos_;
      while (pos_ < text_.size() && is_identifier(text_.substr(start, pos_ - start + 1))) ++pos_;
      return Expr::metric_ref(std::string(text_.substr(start, pos_ - start)));
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Expr parse_number() {
    std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') ++pos_, ++n;
      return n;
    };
    std::size_t mantissa = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) {
      pos_ = start;
      fail("malformed number");
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (digits() == 0) fail("malformed exponent");
    }
    double value = 0.0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (res.ec != std::errc() || !std::isfinite(value)) {
      pos_ = start;
      fail("number literal out of range");
    }
    return Expr::number(value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t depth_ = 0;
};

}  // namespace

Expr parse_expression(std::string_view text) { return Parser(text).parse(); }

// ---------------------------------------------------------------------------
// Compilation and evaluation

CompiledExpr::CompiledExpr(const Expr& expr) {
  std::size_t depth = 0;
  std::function<void(const Expr&)> emit = [&](const Expr& e) {
    switch (e.kind()) {
      case Expr::Kind::Number:
        program_.push_back({Op::Push, 0, e.number()});
        max_stack_ = std::max(max_stack_, ++depth);
        break;
      case Expr::Kind::MetricRef: {
        auto it = std::find(slots_.begin(), slots_.end(), e.ref_id());
        auto slot = static_cast<std::uint32_t>(it - slots_.begin());
        if (it == slots_.end()) slots_.push_back(e.ref_id());
        program_.push_back({Op::Load, slot, 0.0});
        max_stack_ = std::max(max_stack_, ++depth);
        break;
      }
      case Expr::Kind::Neg:
        emit(e.operand());
        program_.push_back({Op::Neg});
        break;
      case Expr::Kind::Binary: {
        emit(e.lhs());
        emit(e.rhs());
        Op op = Op::Add;
        switch (e.op()) {
          case BinaryOp::Add: op = Op::Add; break;
          case BinaryOp::Sub: op = Op::Sub; break;
          case BinaryOp::Mul: op = Op::Mul; break;
          case BinaryOp::Div: op = Op::Div; break;
        }
        program_.push_back({op});
        --depth;
        break;
      }
    }
  };
  emit(expr);
}

Value CompiledExpr::run(std::span<const Value> slot_values) const {
  // Missing is absorbing, so any missing input decides the result up front.
  for (std::size_t i = 0; i < slots_.size(); ++i)
    if (i >= slot_values.size() || !slot_values[i]) return std::nullopt;

  double small[32];
  std::vector<double> big;
  double* stack = small;
  if (max_stack_ > std::size(small)) {
    big.resize(max_stack_);
    stack = big.data();
  }
  std::size_t sp = 0;
  for (const auto& ins : program_) {
    switch (ins.op) {
      case Op::Push:
        stack[sp++] = ins.literal;
        continue;
      case Op::Load:
        stack[sp++] = *slot_values[ins.slot];
        continue;
      case Op::Neg:
        stack[sp - 1] = -stack[sp - 1];
        continue;
      default:
        break;
    }
    double b = stack[--sp];
    double& a = stack[sp - 1];
    switch (ins.op) {
      case Op::Add: a = a + b; break;
      case Op::Sub: a = a - b; break;
      case Op::Mul: a = a * b; break;
      case Op::Div:
        if (b == 0.0) return std::nullopt;
        a = a / b;
        break;
      default: break;
    }
    if (!std::isfinite(a)) return std::nullopt;
  }
  return stack[0];
}

Value evaluate(const Expr& expr, const Bindings& bindings) {
  CompiledExpr program(expr);
  std::vector<Value> values;
  values.reserve(program.slots().size());
  for (const auto& id : program.slots()) {
    auto it = bindings.find(id);
    if (it == bindings.end()) throw UnboundIdentifierError(id);
    values.push_back(it->second);
  }
  return program.run(values);
}

// ---------------------------------------------------------------------------
// Metric dependency graph

std::vector<std::string> resolve_metric_graph(std::span<const MetricDef> defs) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < defs.size(); ++i) index.emplace(defs[i].id, i);

  std::vector<std::vector<std::size_t>> deps(defs.size());
  for (std::size_t i = 0; i < defs.size(); ++i) {
    if (!defs[i].is_derived()) continue;
    for (const auto& ref : parse_expression(*defs[i].expression).references()) {
      if (ref == kCapacityIdentifier) continue;
      auto it = index.find(ref);
      if (it == index.end()) throw UnknownMetricError(ref);
      deps[i].push_back(it->second);
    }
  }

  std::vector<std::string> order;
  std::vector<bool> placed(defs.size(), false);
  for (std::size_t i = 0; i < defs.size(); ++i)
    if (!defs[i].is_derived()) {
      order.push_back(defs[i].id);
      placed[i] = true;
    }

  for (bool progress = true; progress;) {
    progress = false;
    for (std::size_t i = 0; i < defs.size(); ++i) {
      if (placed[i]) continue;
      if (std::all_of(deps[i].begin(), deps[i].end(), [&](std::size_t d) { return placed[d]; })) {
        order.push_back(defs[i].id);
        placed[i] = true;
        progress = true;
        break;  // restart so ties resolve by declaration order
      }
    }
  }

  if (order.size() == defs.size()) return order;

  // Every unplaced metric has an unplaced dependency; walking those edges
  // from any unplaced node must revisit a node, which closes a cycle.
  std::size_t start = 0;
  while (placed[start]) ++start;
  std::vector<std::size_t> path;
  std::vector<int> pos_in_path(defs.size(), -1);
  std::size_t cur = start;
  while (pos_in_path[cur] < 0) {
    pos_in_path[cur] = static_cast<int>(path.size());
    path.push_back(cur);
    for (std::size_t d : deps[cur])
      if (!placed[d]) {
        cur = d;
        break;
      }
  }
  std::vector<std::string> cycle;
  for (std::size_t k = static_cast<std::size_t>(pos_in_path[cur]); k < path.size(); ++k)
    cycle.push_back(defs[path[k]].id);
  throw CycleError(std::move(cycle));
}

MetricCatalog::MetricCatalog(std::vector<MetricDef> defs) : defs_(std::move(defs)) {
  std::set<std::string, std::less<>> seen;
  for (const auto& d : defs_) {
    if (!is_identifier(d.id)) throw ConfigError("metric id '" + d.id + "' is not an identifier");
    if (d.id == kCapacityIdentifier)
      throw ConfigError("metric id 'capacity' is reserved for the per-place capacity");
    if (!seen.insert(d.id).second) throw ConfigError("duplicate metric id '" + d.id + "'");
    if (!(d.cap > 0.0) || !std::isfinite(d.cap))
      throw ConfigError("metric '" + d.id + "': cap must be positive");
  }
  order_ = resolve_metric_graph(defs_);

  compiled_.resize(defs_.size());
  slot_metrics_.resize(defs_.size());
  base_deps_.resize(defs_.size());
  for (const auto& id : order_) {
    std::size_t i = index_of(id);
    if (!defs_[i].is_derived()) {
      base_deps_[i] = {i};
      continue;
    }
    compiled_[i] = CompiledExpr(parse_expression(*defs_[i].expression));
    std::set<std::size_t> bases;
    for (const auto& slot : compiled_[i].slots()) {
      if (slot == kCapacityIdentifier) {
        slot_metrics_[i].push_back(std::nullopt);
        continue;
      }
      std::size_t dep = index_of(slot);
      slot_metrics_[i].push_back(dep);
      bases.insert(base_deps_[dep].begin(), base_deps_[dep].end());
    }
    base_deps_[i].assign(bases.begin(), bases.end());
  }
}

std::optional<std::size_t> MetricCatalog::find(std::string_view id) const {
  for (std::size_t i = 0; i < defs_.size(); ++i)
    if (defs_[i].id == id) return i;
  return std::nullopt;
}

std::size_t MetricCatalog::index_of(std::string_view id) const {
  auto i = find(id);
  if (!i) throw UnknownMetricError(std::string(id));
  return *i;
}

std::vector<std::size_t> MetricCatalog::dependents_of(std::size_t base_index) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < defs_.size(); ++i)
    if (defs_[i].is_derived() &&
        std::find(base_deps_[i].begin(), base_deps_[i].end(), base_index) != base_deps_[i].end())
      out.push_back(i);
  return out;
}

}  // namespace crowdlens

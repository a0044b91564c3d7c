#include "snap/add.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace snap::add {

std::string primed_name(std::string_view base) { return std::string(base) + kPrime; }

namespace {

constexpr std::size_t kKidBlock = 1 << 16;

std::uint64_t leaf_bits(double v) {
  if (v == 0.0) v = 0.0;  // fold -0 into +0
  return std::bit_cast<std::uint64_t>(v);
}

struct PairHash {
  std::size_t operator()(const std::pair<NodeId, NodeId>& p) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{p.first} << 32) | p.second);
  }
};

}  // namespace

std::size_t Manager::KeyHash::operator()(const Key& k) const noexcept {
  std::size_t h = std::hash<std::uint32_t>{}(k.var);
  for (NodeId c : k.kids) h ^= std::hash<std::uint32_t>{}(c) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

Manager::Manager() = default;

Manager::~Manager() {
  for (auto& c : chunks_) delete[] c.load();
}

VarId Manager::declare(std::string name, std::vector<std::string> values, Slice slice) {
  if (name.empty()) throw AddError("variable name must not be empty");
  if (values.empty()) throw AddError("variable '" + name + "' has no values");
  std::vector<std::string> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw AddError("variable '" + name + "' has duplicate values");
  if (by_name_.count(name)) throw AddError("variable '" + name + "' declared twice");
  VarId id = static_cast<VarId>(vars_.size());
  by_name_.emplace(name, id);
  vars_.push_back({std::move(name), std::move(values), slice});
  return id;
}

std::pair<VarId, VarId> Manager::declare_pair(const std::string& base,
                                               const std::vector<std::string>& values) {
  VarId cur = declare(base, values, Slice::current);
  VarId pri = declare(primed_name(base), values, Slice::primed);
  return {cur, pri};
}

std::optional<VarId> Manager::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

VarId Manager::require(std::string_view name) const {
  auto v = find(name);
  if (!v) throw AddError("unknown variable '" + std::string(name) + "'");
  return *v;
}

std::size_t Manager::value_index(VarId v, std::string_view value) const {
  const auto& vals = vars_.at(v).values;
  auto it = std::find(vals.begin(), vals.end(), value);
  if (it == vals.end())
    throw AddError("unknown value '" + std::string(value) + "' for variable '" + vars_[v].name + "'");
  return static_cast<std::size_t>(it - vals.begin());
}

NodeId Manager::push_locked(Node n) {
  std::size_t id = count_.load(std::memory_order_relaxed);
  std::size_t chunk = id >> kChunkBits;
  if (chunk >= kMaxChunks) throw AddError("decision diagram node table exhausted");
  Node* block = chunks_[chunk].load(std::memory_order_relaxed);
  if (!block) {
    block = new Node[kChunkSize];
    chunks_[chunk].store(block, std::memory_order_release);
  }
  block[id & (kChunkSize - 1)] = n;
  count_.store(id + 1, std::memory_order_release);
  return static_cast<NodeId>(id);
}

const NodeId* Manager::store_kids_locked(std::span<const NodeId> kids) {
  if (kid_blocks_.empty() || kid_block_used_ + kids.size() > kKidBlock) {
    kid_blocks_.push_back(std::make_unique<NodeId[]>(std::max(kKidBlock, kids.size())));
    kid_block_used_ = 0;
  }
  NodeId* dst = kid_blocks_.back().get() + kid_block_used_;
  std::copy(kids.begin(), kids.end(), dst);
  kid_block_used_ += kids.size();
  return dst;
}

NodeId Manager::leaf(double value) {
  if (!std::isfinite(value)) throw AddError("decision diagram leaves must be finite");
  if (value == 0.0) value = 0.0;
  std::lock_guard lock(mu_);
  auto [it, inserted] = leaves_.try_emplace(leaf_bits(value), 0);
  if (inserted) it->second = push_locked(Node{kLeafVar, 0, value, nullptr});
  return it->second;
}

NodeId Manager::node(VarId v, std::span<const NodeId> children) {
  if (v >= vars_.size()) throw AddError("node over undeclared variable");
  if (children.size() != vars_[v].values.size())
    throw AddError("node over '" + vars_[v].name + "' needs one child per value");
  if (std::all_of(children.begin(), children.end(), [&](NodeId c) { return c == children[0]; }))
    return children[0];
  for (NodeId c : children) {
    VarId t = top(c);
    if (t != kLeafVar && t <= v) throw AddError("child violates variable order");
  }
  Key key{v, std::vector<NodeId>(children.begin(), children.end())};
  std::lock_guard lock(mu_);
  auto it = unique_.find(key);
  if (it != unique_.end()) return it->second;
  const NodeId* kids = store_kids_locked(children);
  NodeId id = push_locked(Node{v, static_cast<std::uint32_t>(children.size()), 0.0, kids});
  unique_.emplace(std::move(key), id);
  return id;
}

// ---------------------------------------------------------------------------

Add Add::constant(std::shared_ptr<Manager> mgr, double c) {
  NodeId n = mgr->leaf(c);
  return Add(std::move(mgr), n);
}

Add Add::indicator(std::shared_ptr<Manager> mgr, VarId v, std::size_t value) {
  std::size_t n = mgr->arity(v);
  if (value >= n) throw AddError("indicator value out of range for '" + mgr->var(v).name + "'");
  NodeId zero = mgr->leaf(0.0);
  NodeId one = mgr->leaf(1.0);
  std::vector<NodeId> kids(n, zero);
  kids[value] = one;
  NodeId r = mgr->node(v, kids);
  return Add(std::move(mgr), r);
}

Add Add::indicator(std::shared_ptr<Manager> mgr, std::string_view var, std::string_view value) {
  VarId v = mgr->require(var);
  std::size_t k = mgr->value_index(v, value);
  return indicator(std::move(mgr), v, k);
}

double Add::evaluate(std::span<const std::uint32_t> assignment) const {
  NodeId n = root_;
  while (!mgr_->is_leaf(n)) {
    VarId v = mgr_->top(n);
    if (v >= assignment.size()) throw AddError("assignment does not cover '" + mgr_->var(v).name + "'");
    auto kids = mgr_->children(n);
    std::uint32_t k = assignment[v];
    if (k >= kids.size()) throw AddError("assignment value out of range for '" + mgr_->var(v).name + "'");
    n = kids[k];
  }
  return mgr_->value(n);
}

namespace {

template <class Visit>
void visit_dag(const Manager& m, NodeId root, Visit&& visit) {
  std::vector<NodeId> stack{root};
  std::unordered_map<NodeId, bool> seen;
  while (!stack.empty()) {
    NodeId n = stack.back();
    stack.pop_back();
    if (!seen.emplace(n, true).second) continue;
    visit(n);
    if (!m.is_leaf(n))
      for (NodeId c : m.children(n)) stack.push_back(c);
  }
}

}  // namespace

std::vector<VarId> Add::support() const {
  std::vector<VarId> out;
  visit_dag(*mgr_, root_, [&](NodeId n) {
    if (!mgr_->is_leaf(n)) out.push_back(mgr_->top(n));
  });
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t Add::dag_size() const {
  std::size_t count = 0;
  visit_dag(*mgr_, root_, [&](NodeId) { ++count; });
  return count;
}

double Add::min_leaf() const {
  double m = INFINITY;
  visit_dag(*mgr_, root_, [&](NodeId n) {
    if (mgr_->is_leaf(n)) m = std::min(m, mgr_->value(n));
  });
  return m;
}

double Add::max_leaf() const {
  double m = -INFINITY;
  visit_dag(*mgr_, root_, [&](NodeId n) {
    if (mgr_->is_leaf(n)) m = std::max(m, mgr_->value(n));
  });
  return m;
}

// ---------------------------------------------------------------------------

namespace {

double combine(Op op, double x, double y) {
  switch (op) {
    case Op::multiply: return x * y;
    case Op::add: return x + y;
    case Op::max: return std::max(x, y);
    case Op::min: return std::min(x, y);
    case Op::subtract: return x - y;
    case Op::divide:
      if (y == 0.0) throw AddError("division by zero in decision diagram");
      return x / y;
  }
  return 0.0;
}

bool commutative(Op op) {
  return op == Op::multiply || op == Op::add || op == Op::max || op == Op::min;
}

class Apply {
 public:
  Apply(Manager& m, Op op) : m_(m), op_(op) {}

  NodeId run(NodeId f, NodeId g) {
    bool lf = m_.is_leaf(f), lg = m_.is_leaf(g);
    if (lf && lg) return m_.leaf(combine(op_, m_.value(f), m_.value(g)));
    if (auto s = shortcut(f, g, lf, lg)) return *s;
    std::pair<NodeId, NodeId> key = (commutative(op_) && g < f) ? std::pair{g, f} : std::pair{f, g};
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    VarId tf = m_.top(f), tg = m_.top(g);
    VarId v = std::min(tf, tg);
    std::size_t n = m_.arity(v);
    std::vector<NodeId> kids(n);
    for (std::size_t k = 0; k < n; ++k) {
      NodeId fk = tf == v ? m_.children(f)[k] : f;
      NodeId gk = tg == v ? m_.children(g)[k] : g;
      kids[k] = run(fk, gk);
    }
    NodeId r = m_.node(v, kids);
    memo_.emplace(key, r);
    return r;
  }

 private:
  std::optional<NodeId> shortcut(NodeId f, NodeId g, bool lf, bool lg) {
    auto is = [&](NodeId n, bool leaf, double c) { return leaf && m_.value(n) == c; };
    switch (op_) {
      case Op::multiply:
        if (is(f, lf, 0.0) || is(g, lg, 1.0)) return f;
        if (is(g, lg, 0.0) || is(f, lf, 1.0)) return g;
        break;
      case Op::add:
        if (is(f, lf, 0.0)) return g;
        if (is(g, lg, 0.0)) return f;
        break;
      case Op::subtract:
        if (is(g, lg, 0.0)) return f;
        break;
      case Op::divide:
        if (is(g, lg, 1.0)) return f;
        break;
      default:
        break;
    }
    if (f == g && (op_ == Op::max || op_ == Op::min)) return f;
    return std::nullopt;
  }

  Manager& m_;
  Op op_;
  std::unordered_map<std::pair<NodeId, NodeId>, NodeId, PairHash> memo_;
};

void require_same(const Add& a, const Add& b) {
  if (!a.valid() || !b.valid()) throw AddError("operation on an empty diagram handle");
  if (&a.manager() != &b.manager()) throw AddError("diagrams belong to different managers");
}

}  // namespace

Add apply(Op op, const Add& a, const Add& b) {
  require_same(a, b);
  Apply ap(a.manager(), op);
  return Add(a.manager_ptr(), ap.run(a.root(), b.root()));
}

Add restrict(const Add& a, VarId v, std::size_t value) {
  Manager& m = a.manager();
  if (v >= m.num_vars()) throw AddError("restrict on undeclared variable");
  if (value >= m.arity(v)) throw AddError("restrict value out of range for '" + m.var(v).name + "'");
  std::unordered_map<NodeId, NodeId> memo;
  std::function<NodeId(NodeId)> rec = [&](NodeId n) -> NodeId {
    if (m.is_leaf(n) || m.top(n) > v) return n;
    if (m.top(n) == v) return m.children(n)[value];
    if (auto it = memo.find(n); it != memo.end()) return it->second;
    auto src = m.children(n);
    std::vector<NodeId> kids(src.size());
    for (std::size_t k = 0; k < src.size(); ++k) kids[k] = rec(src[k]);
    NodeId r = m.node(m.top(n), kids);
    memo.emplace(n, r);
    return r;
  };
  return Add(a.manager_ptr(), rec(a.root()));
}

Add sum_out(const Add& a, VarId v) {
  Manager& m = a.manager();
  if (v >= m.num_vars()) throw AddError("sum_out on undeclared variable");
  const double n_vals = static_cast<double>(m.arity(v));
  Apply adder(m, Op::add);
  Apply scaler(m, Op::multiply);
  const NodeId factor = m.leaf(n_vals);
  std::unordered_map<NodeId, NodeId> memo;
  std::function<NodeId(NodeId)> rec = [&](NodeId n) -> NodeId {
    if (m.is_leaf(n) || m.top(n) > v) return scaler.run(n, factor);
    if (auto it = memo.find(n); it != memo.end()) return it->second;
    NodeId r;
    auto src = m.children(n);
    if (m.top(n) == v) {
      r = src[0];
      for (std::size_t k = 1; k < src.size(); ++k) r = adder.run(r, src[k]);
    } else {
      std::vector<NodeId> kids(src.size());
      for (std::size_t k = 0; k < src.size(); ++k) kids[k] = rec(src[k]);
      r = m.node(m.top(n), kids);
    }
    memo.emplace(n, r);
    return r;
  };
  return Add(a.manager_ptr(), rec(a.root()));
}

namespace {

// Path to the first leaf (in value order) satisfying pred, rendered as
// "var=value, ...".
std::optional<std::string> find_context(const Manager& m, NodeId root,
                                        const std::function<bool(double)>& pred) {
  std::vector<std::pair<VarId, std::size_t>> path;
  std::function<bool(NodeId)> rec = [&](NodeId n) -> bool {
    if (m.is_leaf(n)) return pred(m.value(n));
    auto kids = m.children(n);
    for (std::size_t k = 0; k < kids.size(); ++k) {
      path.emplace_back(m.top(n), k);
      if (rec(kids[k])) return true;
      path.pop_back();
    }
    return false;
  };
  if (!rec(root)) return std::nullopt;
  std::ostringstream os;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) os << ", ";
    const auto& d = m.var(path[i].first);
    os << d.name << '=' << d.values[path[i].second];
  }
  return os.str();
}

}  // namespace

Add normalize_over(const Add& a, VarId v) {
  Add total = sum_out(a, v);
  if (auto ctx = find_context(total.manager(), total.root(), [](double x) { return !(x > 0.0); }))
    throw ZeroMassError(*ctx);
  return apply(Op::divide, a, total);
}

Add map_leaves(const Add& a, const std::function<double(double)>& f) {
  Manager& m = a.manager();
  std::unordered_map<NodeId, NodeId> memo;
  std::function<NodeId(NodeId)> rec = [&](NodeId n) -> NodeId {
    if (auto it = memo.find(n); it != memo.end()) return it->second;
    NodeId r;
    if (m.is_leaf(n)) {
      r = m.leaf(f(m.value(n)));
    } else {
      auto src = m.children(n);
      std::vector<NodeId> kids(src.size());
      for (std::size_t k = 0; k < src.size(); ++k) kids[k] = rec(src[k]);
      r = m.node(m.top(n), kids);
    }
    memo.emplace(n, r);
    return r;
  };
  return Add(a.manager_ptr(), rec(a.root()));
}

Add tabulate(std::shared_ptr<Manager> mgr, std::span<const VarId> vars,
             const std::function<double(const Assignment&)>& f) {
  std::vector<VarId> order(vars.begin(), vars.end());
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  Assignment asg(mgr->num_vars(), 0);
  std::function<NodeId(std::size_t)> rec = [&](std::size_t depth) -> NodeId {
    if (depth == order.size()) return mgr->leaf(f(asg));
    VarId v = order[depth];
    std::vector<NodeId> kids(mgr->arity(v));
    for (std::size_t k = 0; k < kids.size(); ++k) {
      asg[v] = static_cast<std::uint32_t>(k);
      kids[k] = rec(depth + 1);
    }
    asg[v] = 0;
    return mgr->node(v, kids);
  };
  NodeId r = rec(0);
  return Add(std::move(mgr), r);
}

}  // namespace snap::add

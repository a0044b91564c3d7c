#pragma once

// Hash-consed algebraic decision diagrams over named finite-domain variables.
//
// A Manager owns the variable declarations and the node table. Variables are
// ordered by declaration; a node over variable v only has children whose top
// variable comes later in that order. Nodes are reduced (no node with all
// children identical) and interned, so two diagrams for the same function are
// the same node.
//
// Node creation is serialized by an internal mutex; reading nodes is lock
// free. Variable declaration must not race with diagram operations.

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace snap::add {

enum class Slice { current, primed };

using VarId = std::uint32_t;
using NodeId = std::uint32_t;

inline constexpr VarId kLeafVar = 0xffffffffu;
inline constexpr char kPrime = '\'';

struct VariableDecl {
  std::string name;  // primed variables carry the prime marker
  std::vector<std::string> values;
  Slice slice = Slice::current;
};

std::string primed_name(std::string_view base);

class AddError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by normalize_over when some context has no mass.
class ZeroMassError : public AddError {
 public:
  ZeroMassError(std::string context)
      : AddError("zero mass in context {" + context + "}"), context_(std::move(context)) {}
  const std::string& context() const { return context_; }

 private:
  std::string context_;
};

class Manager {
 public:
  Manager();
  Manager(const Manager&) = delete;
  Manager& operator=(const Manager&) = delete;
  ~Manager();

  VarId declare(std::string name, std::vector<std::string> values, Slice slice = Slice::current);
  // Declares `base` and `base'` adjacent in the order; returns {current, primed}.
  std::pair<VarId, VarId> declare_pair(const std::string& base, const std::vector<std::string>& values);

  std::size_t num_vars() const { return vars_.size(); }
  const VariableDecl& var(VarId v) const { return vars_.at(v); }
  std::size_t arity(VarId v) const { return vars_[v].values.size(); }
  std::optional<VarId> find(std::string_view name) const;
  VarId require(std::string_view name) const;
  std::size_t value_index(VarId v, std::string_view value) const;

  NodeId leaf(double value);
  // Reduces and interns. `children.size()` must equal arity(v) and every child
  // must be a leaf or have a top variable after v.
  NodeId node(VarId v, std::span<const NodeId> children);

  bool is_leaf(NodeId n) const { return get(n).var == kLeafVar; }
  double value(NodeId n) const { return get(n).value; }
  VarId top(NodeId n) const { return get(n).var; }
  std::span<const NodeId> children(NodeId n) const {
    const Node& x = get(n);
    return {x.kids, x.arity};
  }
  std::size_t node_count() const { return count_.load(std::memory_order_acquire); }

 private:
  struct Node {
    VarId var = kLeafVar;
    std::uint32_t arity = 0;
    double value = 0.0;
    const NodeId* kids = nullptr;
  };
  struct Key {
    VarId var;
    std::vector<NodeId> kids;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };

  static constexpr unsigned kChunkBits = 16;
  static constexpr std::size_t kChunkSize = std::size_t{1} << kChunkBits;
  static constexpr std::size_t kMaxChunks = 1u << 14;

  const Node& get(NodeId n) const {
    return chunks_[n >> kChunkBits].load(std::memory_order_acquire)[n & (kChunkSize - 1)];
  }
  NodeId push_locked(Node n);
  const NodeId* store_kids_locked(std::span<const NodeId> kids);

  std::vector<VariableDecl> vars_;
  std::unordered_map<std::string, VarId> by_name_;

  std::mutex mu_;
  std::array<std::atomic<Node*>, kMaxChunks> chunks_{};
  std::atomic<std::size_t> count_{0};
  std::unordered_map<std::uint64_t, NodeId> leaves_;
  std::unordered_map<Key, NodeId, KeyHash> unique_;
  std::vector<std::unique_ptr<NodeId[]>> kid_blocks_;
  std::size_t kid_block_used_ = 0;
};

// One value index per declared variable, indexed by VarId.
using Assignment = std::vector<std::uint32_t>;

// Immutable handle to a diagram root.
class Add {
 public:
  Add() = default;
  Add(std::shared_ptr<Manager> mgr, NodeId root) : mgr_(std::move(mgr)), root_(root) {}

  static Add constant(std::shared_ptr<Manager> mgr, double c);
  static Add indicator(std::shared_ptr<Manager> mgr, VarId v, std::size_t value);
  static Add indicator(std::shared_ptr<Manager> mgr, std::string_view var, std::string_view value);

  bool valid() const { return mgr_ != nullptr; }
  NodeId root() const { return root_; }
  Manager& manager() const { return *mgr_; }
  const std::shared_ptr<Manager>& manager_ptr() const { return mgr_; }

  bool is_constant() const { return mgr_->is_leaf(root_); }
  double constant_value() const { return mgr_->value(root_); }
  double evaluate(std::span<const std::uint32_t> assignment) const;
  // Variables the function depends on, in order.
  std::vector<VarId> support() const;
  std::size_t dag_size() const;
  double min_leaf() const;
  double max_leaf() const;

  friend bool operator==(const Add& a, const Add& b) {
    return a.mgr_ == b.mgr_ && a.root_ == b.root_;
  }

 private:
  std::shared_ptr<Manager> mgr_;
  NodeId root_ = 0;
};

enum class Op { multiply, add, max, min, subtract, divide };

Add apply(Op op, const Add& a, const Add& b);
Add restrict(const Add& a, VarId v, std::size_t value);
Add sum_out(const Add& a, VarId v);
// a / sum_out(a, v). Throws ZeroMassError naming the first context whose sum
// is not strictly positive.
Add normalize_over(const Add& a, VarId v);
// Applies f to every leaf.
Add map_leaves(const Add& a, const std::function<double(double)>& f);

inline Add operator*(const Add& a, const Add& b) { return apply(Op::multiply, a, b); }
inline Add operator+(const Add& a, const Add& b) { return apply(Op::add, a, b); }
inline Add operator-(const Add& a, const Add& b) { return apply(Op::subtract, a, b); }

// Builds the diagram of f over `vars` (any order); f sees an Assignment in
// which only the listed variables are meaningful.
Add tabulate(std::shared_ptr<Manager> mgr, std::span<const VarId> vars,
             const std::function<double(const Assignment&)>& f);

}  // namespace snap::add

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace abmsim::ad {

/// Named, box-constrained parameter vector. Scalars are size-1 vectors.
struct Param {
  Param() = default;
  Param(std::string name, std::vector<double> value, double lo, double hi);
  Param(std::string name, double value, double lo, double hi)
      : Param(std::move(name), std::vector<double>{value}, lo, hi) {}

  std::size_t size() const noexcept { return value.size(); }
  double scalar() const;
  /// Project every entry into [lo, hi].
  void clamp() noexcept;

  std::string name;
  std::vector<double> value;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> grad;
};

/// Ordered parameter collection with lookup by name.
class ParamSet {
 public:
  Param& add(Param p);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const noexcept;

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

 private:
  std::vector<Param> params_;
};

/// d(output)/d(param) keyed by parameter name.
using Gradients = std::map<std::string, std::vector<double>>;

class Tape;

/// Handle to a (vector-valued) node on a tape. Scalars have size 1.
///
/// Handles are tied to one tape generation; using one after Tape::clear()
/// raises UsageError.
class TapeValue {
 public:
  TapeValue() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t node_id() const;
  std::size_t size() const;
  std::span<const double> values() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double scalar() const;

 private:
  friend class Tape;
  TapeValue(Tape* tape, std::size_t id, std::uint32_t gen) noexcept
      : tape_(tape), id_(id), generation_(gen) {}
  void check() const;

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint32_t generation_ = 0;
};

/// Reverse-mode tape over vector-valued nodes.
///
/// Nodes are appended in evaluation order; each non-leaf node carries a
/// pullback that accumulates its adjoint into its parents' adjoints.
class Tape {
 public:
  using Adjoints = std::vector<std::vector<double>>;
  using Pullback = std::function<void(const Tape&, std::size_t self, Adjoints& adj)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  TapeValue constant(std::vector<double> value);
  TapeValue constant(double value) { return constant(std::vector<double>{value}); }
  TapeValue param(const Param& p);

  /// Append an interior node. Parents must live on this tape.
  TapeValue record(const char* op, std::vector<double> value,
                   std::initializer_list<TapeValue> parents, Pullback pullback);
  TapeValue record(const char* op, std::vector<double> value,
                   const std::vector<TapeValue>& parents, Pullback pullback);

  /// Gradient of a scalar output w.r.t. every Param placed on the tape.
  /// The tape is not modified and may be differentiated again.
  Gradients backward(const TapeValue& output) const;

  /// Drop all nodes; outstanding handles become stale.
  void clear();

  std::size_t size() const noexcept { return nodes_.size(); }
  std::uint32_t generation() const noexcept { return generation_; }
  const std::vector<double>& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t parent(std::size_t id, std::size_t k) const { return nodes_[id].parents[k]; }
  const char* op(std::size_t id) const { return nodes_[id].op; }

 private:
  friend class TapeValue;

  struct Node {
    const char* op = "const";
    std::vector<double> value;
    std::vector<std::size_t> parents;
    Pullback pullback;
    int param = -1;
  };

  TapeValue push(Node node);

  std::vector<Node> nodes_;
  std::vector<std::string> param_names_;
  std::uint32_t generation_ = 1;
};

}  // namespace abmsim::ad

#include "abmsim/core/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "abmsim/core/error.hpp"

namespace abmsim::ad {

Param::Param(std::string n, std::vector<double> v, double l, double h)
    : name(std::move(n)), value(std::move(v)), lo(l), hi(h), grad(value.size(), 0.0) {
  if (!(lo <= hi)) throw DomainError("param '" + name + "': empty bounds");
  for (double x : value)
    if (!(x >= lo && x <= hi))
      throw DomainError("param '" + name + "': value outside bounds");
}

double Param::scalar() const {
  if (value.size() != 1) throw UsageError("param '" + name + "' is not scalar");
  return value[0];
}

void Param::clamp() noexcept {
  for (double& x : value) x = std::clamp(x, lo, hi);
}

Param& ParamSet::add(Param p) {
  if (contains(p.name)) throw UsageError("duplicate param '" + p.name + "'");
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamSet::at(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw UsageError("unknown param '" + name + "'");
}

const Param& ParamSet::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw UsageError("unknown param '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const noexcept {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Param& p) { return p.name == name; });
}

void TapeValue::check() const {
  if (tape_ == nullptr) throw UsageError("empty TapeValue");
  if (generation_ != tape_->generation_ || id_ >= tape_->nodes_.size())
    throw UsageError("TapeValue belongs to a cleared tape generation");
}

Tape& TapeValue::tape() const {
  check();
  return *tape_;
}

std::size_t TapeValue::node_id() const {
  check();
  return id_;
}

std::size_t TapeValue::size() const {
  check();
  return tape_->nodes_[id_].value.size();
}

std::span<const double> TapeValue::values() const {
  check();
  return tape_->nodes_[id_].value;
}

double TapeValue::scalar() const {
  check();
  const auto& v = tape_->nodes_[id_].value;
  if (v.size() != 1) throw UsageError("TapeValue is not scalar");
  return v[0];
}

TapeValue Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return TapeValue(this, nodes_.size() - 1, generation_);
}

TapeValue Tape::constant(std::vector<double> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

TapeValue Tape::param(const Param& p) {
  Node n;
  n.op = "param";
  n.value = p.value;
  auto it = std::find(param_names_.begin(), param_names_.end(), p.name);
  if (it == param_names_.end()) {
    param_names_.push_back(p.name);
    n.param = static_cast<int>(param_names_.size() - 1);
  } else {
    n.param = static_cast<int>(it - param_names_.begin());
  }
  return push(std::move(n));
}

TapeValue Tape::record(const char* op, std::vector<double> value,
                       std::initializer_list<TapeValue> parents, Pullback pullback) {
  return record(op, std::move(value), std::vector<TapeValue>(parents), std::move(pullback));
}

TapeValue Tape::record(const char* op, std::vector<double> value,
                       const std::vector<TapeValue>& parents, Pullback pullback) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.parents.reserve(parents.size());
  for (const auto& p : parents) {
    if (&p.tape() != this) throw UsageError(std::string(op) + ": operands on different tapes");
    n.parents.push_back(p.id_);
  }
  n.pullback = std::move(pullback);
  return push(std::move(n));
}

void Tape::clear() {
  nodes_.clear();
  param_names_.clear();
  ++generation_;
}

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string describe(const Tape& t, std::size_t id) {
  std::ostringstream os;
  os << "node " << id << " (" << t.op(id) << ")";
  return os.str();
}

}  // namespace

Gradients Tape::backward(const TapeValue& output) const {
  if (output.tape_ != this) throw UsageError("backward: output is not on this tape");
  output.check();
  const std::size_t out = output.id_;
  if (nodes_[out].value.size() != 1) throw UsageError("backward: output must be scalar");

  std::vector<char> live(out + 1, 0);
  live[out] = 1;
  for (std::size_t i = out + 1; i-- > 0;) {
    if (!live[i]) continue;
    for (std::size_t p : nodes_[i].parents) live[p] = 1;
  }
  for (std::size_t i = 0; i <= out; ++i)
    if (live[i] && !all_finite(nodes_[i].value))
      throw NumericError("backward: non-finite value at " + describe(*this, i));

  Adjoints adj(out + 1);
  for (std::size_t i = 0; i <= out; ++i)
    if (live[i]) adj[i].assign(nodes_[i].value.size(), 0.0);
  adj[out][0] = 1.0;

  for (std::size_t i = out + 1; i-- > 0;) {
    if (!live[i] || !nodes_[i].pullback) continue;
    if (!all_finite(adj[i]))
      throw NumericError("backward: non-finite adjoint at " + describe(*this, i));
    nodes_[i].pullback(*this, i, adj);
  }

  Gradients grads;
  for (const auto& name : param_names_) grads[name];
  for (std::size_t i = 0; i <= out; ++i) {
    const Node& n = nodes_[i];
    if (n.param < 0) continue;
    auto& g = grads[param_names_[n.param]];
    if (g.empty()) g.assign(n.value.size(), 0.0);
    if (!live[i]) continue;
    if (!all_finite(adj[i]))
      throw NumericError("backward: non-finite gradient for param '" +
                         param_names_[n.param] + "'");
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += adj[i][k];
  }
  return grads;
}

}  // namespace abmsim::ad

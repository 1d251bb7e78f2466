#include "abmsim/popgen/ipf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "abmsim/core/error.hpp"

namespace abmsim {

double MarginalTable::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), 0.0);
}

void MarginalTable::validate() const {
  if (bins.empty()) throw SchemaError("marginal '" + axis + "': no bins");
  if (bins.size() != counts.size())
    throw SchemaError("marginal '" + axis + "': bins and counts differ in length");
  std::unordered_set<std::string> seen;
  for (const auto& b : bins)
    if (!seen.insert(b).second) throw SchemaError("marginal '" + axis + "': duplicate bin '" + b + "'");
  for (double c : counts)
    if (!(c >= 0.0) || !std::isfinite(c))
      throw SchemaError("marginal '" + axis + "': counts must be finite and nonnegative");
  if (!(total() > 0.0)) throw SchemaError("marginal '" + axis + "': zero total");
}

std::vector<std::size_t> JointTable::shape() const {
  std::vector<std::size_t> s;
  s.reserve(labels.size());
  for (const auto& l : labels) s.push_back(l.size());
  return s;
}

std::size_t JointTable::axis_index(const std::string& axis) const {
  for (std::size_t i = 0; i < axes.size(); ++i)
    if (axes[i] == axis) return i;
  throw SchemaError("joint table has no axis '" + axis + "'");
}

double JointTable::total() const noexcept { return std::accumulate(cells.begin(), cells.end(), 0.0); }

namespace {

// stride of `axis` and its extent in a row-major layout
std::pair<std::size_t, std::size_t> stride_of(const JointTable& t, std::size_t axis) {
  std::size_t stride = 1;
  for (std::size_t k = t.labels.size(); k-- > axis + 1;) stride *= t.labels[k].size();
  return {stride, t.labels[axis].size()};
}

void check_shape(const JointTable& t) {
  if (t.axes.size() != t.labels.size()) throw SchemaError("joint table: axes/labels mismatch");
  std::size_t n = 1;
  for (const auto& l : t.labels) n *= l.size();
  if (n != t.cells.size() || n == 0) throw SchemaError("joint table: cell count does not match shape");
  for (double c : t.cells)
    if (!(c >= 0.0) || !std::isfinite(c)) throw SchemaError("joint table: negative or non-finite cell");
}

// Target counts reordered to the joint's label order for one axis.
struct AxisTarget {
  std::size_t axis;
  std::vector<double> counts;
};

}  // namespace

std::vector<double> JointTable::marginal(std::size_t axis) const {
  const auto [stride, extent] = stride_of(*this, axis);
  std::vector<double> m(extent, 0.0);
  for (std::size_t i = 0; i < cells.size(); ++i) m[(i / stride) % extent] += cells[i];
  return m;
}

JointTable JointTable::ones_like(const std::vector<MarginalTable>& marginals) {
  JointTable t;
  std::size_t n = 1;
  for (const auto& m : marginals) {
    t.axes.push_back(m.axis);
    t.labels.push_back(m.bins);
    n *= m.bins.size();
  }
  t.cells.assign(n, 1.0);
  return t;
}

namespace {

std::vector<AxisTarget> align(const JointTable& t, const std::vector<MarginalTable>& marginals) {
  std::vector<AxisTarget> out;
  std::unordered_set<std::size_t> used;
  for (const auto& m : marginals) {
    m.validate();
    const std::size_t ax = t.axis_index(m.axis);
    if (!used.insert(ax).second) throw SchemaError("duplicate marginal for axis '" + m.axis + "'");
    const auto& labels = t.labels[ax];
    if (labels.size() != m.bins.size())
      throw SchemaError("marginal '" + m.axis + "': bin count does not match joint axis");
    AxisTarget target{ax, std::vector<double>(labels.size(), 0.0)};
    for (std::size_t b = 0; b < m.bins.size(); ++b) {
      auto it = std::find(labels.begin(), labels.end(), m.bins[b]);
      if (it == labels.end())
        throw SchemaError("marginal '" + m.axis + "': unknown bin '" + m.bins[b] + "'");
      target.counts[static_cast<std::size_t>(it - labels.begin())] = m.counts[b];
    }
    out.push_back(std::move(target));
  }
  return out;
}

double residual_of(const JointTable& t, const std::vector<AxisTarget>& targets) {
  const double total = t.total();
  double r = 0.0;
  for (const auto& tg : targets) {
    const auto cur = t.marginal(tg.axis);
    const double ttot = std::accumulate(tg.counts.begin(), tg.counts.end(), 0.0);
    for (std::size_t b = 0; b < cur.size(); ++b) {
      const double c = total > 0 ? cur[b] / total : 0.0;
      r = std::max(r, std::abs(c - tg.counts[b] / ttot));
    }
  }
  return r;
}

}  // namespace

double ipf_residual(const JointTable& table, const std::vector<MarginalTable>& marginals) {
  check_shape(table);
  return residual_of(table, align(table, marginals));
}

IpfResult ipf_fit(const JointTable& seed, std::vector<MarginalTable> marginals, double tol,
                  std::size_t max_iter) {
  check_shape(seed);
  if (marginals.empty()) throw SchemaError("ipf_fit: no marginals");
  IpfResult res;

  double mean_total = 0.0;
  for (const auto& m : marginals) {
    m.validate();
    mean_total += m.total();
  }
  mean_total /= static_cast<double>(marginals.size());
  for (auto& m : marginals) {
    const double tot = m.total();
    if (std::abs(tot - mean_total) > 1e-6 * mean_total) {
      std::ostringstream os;
      os << "marginal '" << m.axis << "' total " << tot << " rescaled to " << mean_total;
      res.warnings.push_back(os.str());
      for (double& c : m.counts) c *= mean_total / tot;
    }
  }

  const auto targets = align(seed, marginals);
  res.table = seed;
  auto& cells = res.table.cells;
  if (!(res.table.total() > 0.0)) throw InfeasibleError("ipf_fit: seed table is all zero");

  for (const auto& tg : targets) {
    const auto cur = res.table.marginal(tg.axis);
    for (std::size_t b = 0; b < cur.size(); ++b)
      if (tg.counts[b] > 0.0 && cur[b] == 0.0)
        throw InfeasibleError("ipf_fit: bin '" + res.table.labels[tg.axis][b] + "' of axis '" +
                              res.table.axes[tg.axis] + "' has positive target but no seed support");
  }

  res.residual_history.push_back(residual_of(res.table, targets));
  while (res.residual() > tol) {
    if (res.iterations >= max_iter)
      throw ConvergenceError("ipf_fit: no convergence after " + std::to_string(max_iter) +
                                 " sweeps, residual " + std::to_string(res.residual()),
                             res.residual());
    for (const auto& tg : targets) {
      const auto [stride, extent] = stride_of(res.table, tg.axis);
      const auto cur = res.table.marginal(tg.axis);
      std::vector<double> factor(extent, 0.0);
      for (std::size_t b = 0; b < extent; ++b) factor[b] = cur[b] > 0 ? tg.counts[b] / cur[b] : 0.0;
      for (std::size_t i = 0; i < cells.size(); ++i) cells[i] *= factor[(i / stride) % extent];
    }
    ++res.iterations;
    res.residual_history.push_back(residual_of(res.table, targets));
  }
  return res;
}

}  // namespace abmsim

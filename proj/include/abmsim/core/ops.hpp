#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "abmsim/core/csr.hpp"
#include "abmsim/core/tape.hpp"

// Differentiable vector operations on the tape. Binary elementwise ops
// broadcast a size-1 operand against a size-n operand.
namespace abmsim::ad {

TapeValue add(const TapeValue& a, const TapeValue& b);
TapeValue sub(const TapeValue& a, const TapeValue& b);
TapeValue mul(const TapeValue& a, const TapeValue& b);
TapeValue div(const TapeValue& a, const TapeValue& b);

TapeValue neg(const TapeValue& a);
TapeValue exp(const TapeValue& a);
TapeValue log(const TapeValue& a);
TapeValue sigmoid(const TapeValue& a);
TapeValue tanh(const TapeValue& a);
TapeValue square(const TapeValue& a);
TapeValue one_minus(const TapeValue& a);
TapeValue scale(const TapeValue& a, double c);
TapeValue shift(const TapeValue& a, double c);
/// Hard clamp; zero gradient outside [lo, hi].
TapeValue clamp(const TapeValue& a, double lo, double hi);
/// Clamp whose gradient passes through unchanged (straight-through).
TapeValue clamp_st(const TapeValue& a, double lo, double hi);
/// Multiply by a constant vector without placing it on the tape.
TapeValue mul_const(const TapeValue& a, std::shared_ptr<const std::vector<double>> c);

TapeValue sum(const TapeValue& a);
TapeValue mean(const TapeValue& a);
TapeValue dot(const TapeValue& a, const TapeValue& b);

/// y[i] = a[index[i]].
TapeValue gather(const TapeValue& a, std::shared_ptr<const std::vector<std::uint32_t>> index);
/// y = M a for a sparse matrix M.
TapeValue spmv(std::shared_ptr<const Csr> m, const TapeValue& a);
/// y = W x with W stored row-major as rows x (x.size()).
TapeValue matvec(const TapeValue& w, const TapeValue& x, std::size_t rows);

TapeValue slice(const TapeValue& a, std::size_t offset, std::size_t len);
TapeValue concat(const std::vector<TapeValue>& parts);
TapeValue broadcast(const TapeValue& scalar, std::size_t n);
/// Sums of consecutive non-overlapping windows; a trailing partial window is dropped.
TapeValue window_sum(const TapeValue& a, std::size_t window);
TapeValue softmax(const TapeValue& a);
/// mean((a - b)^2)
TapeValue mse(const TapeValue& a, const TapeValue& b);

inline TapeValue operator+(const TapeValue& a, const TapeValue& b) { return add(a, b); }
inline TapeValue operator-(const TapeValue& a, const TapeValue& b) { return sub(a, b); }
inline TapeValue operator*(const TapeValue& a, const TapeValue& b) { return mul(a, b); }
inline TapeValue operator/(const TapeValue& a, const TapeValue& b) { return div(a, b); }
inline TapeValue operator-(const TapeValue& a) { return neg(a); }
inline TapeValue operator+(const TapeValue& a, double c) { return shift(a, c); }
inline TapeValue operator+(double c, const TapeValue& a) { return shift(a, c); }
inline TapeValue operator-(const TapeValue& a, double c) { return shift(a, -c); }
inline TapeValue operator-(double c, const TapeValue& a) { return shift(neg(a), c); }
inline TapeValue operator*(const TapeValue& a, double c) { return scale(a, c); }
inline TapeValue operator*(double c, const TapeValue& a) { return scale(a, c); }
inline TapeValue operator/(const TapeValue& a, double c) { return scale(a, 1.0 / c); }

}  // namespace abmsim::ad

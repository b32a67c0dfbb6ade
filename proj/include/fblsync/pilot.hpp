#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fblsync/config.hpp"

namespace fbl {

// Maximal-length sequence of length 2^m - 1 over {0,1}, Fibonacci LFSR with a
// primitive feedback polynomial, all-ones initial state.
inline std::vector<int> m_sequence(int m) {
  // Primitive polynomial taps (bit positions, 1-based) for degrees 2..12.
  static const std::vector<std::vector<int>> taps = {
      {},           // m = 0 unused
      {1},          // m = 1: degenerate, period 1
      {2, 1},       {3, 2},       {4, 3},    {5, 3},
      {6, 5},       {7, 6},       {8, 6, 5, 4},
      {9, 5},       {10, 7},      {11, 9},   {12, 11, 10, 4}};
  if (m < 1 || m >= static_cast<int>(taps.size()))
    throw std::invalid_argument("m-sequence degree out of range");
  if (m == 1) return {1};
  const int period = (1 << m) - 1;
  std::uint32_t state = (1u << m) - 1;
  std::vector<int> bits(period);
  for (int i = 0; i < period; ++i) {
    bits[i] = static_cast<int>(state & 1u);
    std::uint32_t fb = 0;
    for (int t : taps[m]) fb ^= (state >> (m - t)) & 1u;
    state = (state >> 1) | (fb << (m - 1));
  }
  return bits;
}

// BPSK pilot sequence of length np with squared norm np * rho. Lengths of the
// form 2^m - 1 give a full m-sequence; other lengths use a truncated
// m-sequence of the next larger period.
inline PilotSequence make_pilot_sequence(int np, double rho) {
  if (np < 0) throw std::invalid_argument("np must be >= 0");
  PilotSequence p;
  if (np == 0) return p;
  int m = 1;
  while ((1 << m) - 1 < np) ++m;
  const auto bits = m_sequence(m);
  const double a = std::sqrt(rho);
  p.symbols.resize(np);
  for (int i = 0; i < np; ++i) p.symbols[i] = bits[i] ? a : -a;
  return p;
}

}  // namespace fbl

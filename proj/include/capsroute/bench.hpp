#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace capsroute {

struct RoutingShape {
  std::size_t batch = 1;
  std::size_t n_in = 1152;
  std::size_t n_out = 2;
  std::size_t d_out = 16;
};

// One row per (shape, r); attention ignores r, so its time repeats across r.
struct RoutingBenchRow {
  RoutingShape shape;
  int iterations = 0;
  double dynamic_seconds = 0.0;    // median per call
  double attention_seconds = 0.0;  // median per call
};

// Both methods run on the same random votes, forward only, no tape.
std::vector<RoutingBenchRow> bench_routing(std::span<const RoutingShape> shapes, std::span<const int> r_values,
                                           std::size_t repeats, std::uint64_t seed = 10);

// "batch,n_in,n_out,d_out,r,dynamic_seconds,attention_seconds" with a header row.
std::string routing_table_csv(const std::vector<RoutingBenchRow>& rows);

}  // namespace capsroute

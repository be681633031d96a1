#include "capsroute/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "capsroute/errors.hpp"
#include "capsroute/rng.hpp"
#include "capsroute/routing.hpp"

namespace capsroute {

namespace {

template <typename F>
double median_seconds(std::size_t repeats, F&& call) {
  std::vector<double> times;
  times.reserve(repeats);
  call();  // warm-up
  for (std::size_t k = 0; k < repeats; ++k) {
    const auto start = std::chrono::steady_clock::now();
    call();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  return n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

}  // namespace

std::vector<RoutingBenchRow> bench_routing(std::span<const RoutingShape> shapes, std::span<const int> r_values,
                                           std::size_t repeats, std::uint64_t seed) {
  if (repeats == 0) throw ConfigError("bench repeats must be positive");
  std::vector<RoutingBenchRow> rows;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const RoutingShape& shape = shapes[s];
    Rng rng(stream_key(seed, 0x62656e6368, s));
    Tensor votes(Shape{shape.batch, shape.n_in, shape.n_out, shape.d_out});
    for (double& v : votes.data()) v = 0.1 * rng.normal();
    RoutingSpec spec;
    spec.projection.weight = Tensor(Shape{shape.d_out});
    for (double& v : spec.projection.weight.data()) v = rng.uniform(-1.0, 1.0) / std::sqrt(double(shape.d_out));
    spec.projection.bias = Tensor(Shape{1});

    const double attention = median_seconds(repeats, [&] { attention_routing(votes, spec); });
    for (int r : r_values) {
      RoutingBenchRow row;
      row.shape = shape;
      row.iterations = r;
      row.dynamic_seconds = median_seconds(repeats, [&] { dynamic_routing(votes, r); });
      row.attention_seconds = attention;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string routing_table_csv(const std::vector<RoutingBenchRow>& rows) {
  std::ostringstream os;
  os << "batch,n_in,n_out,d_out,r,dynamic_seconds,attention_seconds\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.shape.batch << ',' << r.shape.n_in << ',' << r.shape.n_out << ',' << r.shape.d_out << ',' << r.iterations;
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", r.dynamic_seconds, r.attention_seconds);
    os << buf;
  }
  return os.str();
}

}  // namespace capsroute

#include "contir/data/kmeans.hpp"

#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "contir/error.hpp"
#include "contir/random.hpp"

namespace contir::data {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

Points plus_plus_seeds(const Points& points, std::size_t k, Rng& rng) {
  const std::size_t m = points.size();
  Points seeds{points[rng.below(m)]};
  std::vector<double> d2(m);
  while (seeds.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : seeds) best = std::min(best, sq_dist(points[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = m - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < m; ++i) {
        if (d2[i] <= 0.0) continue;
        if (target < d2[i]) {
          pick = i;
          break;
        }
        target -= d2[i];
        pick = i;  // rounding fallback: last point with positive mass
      }
    } else {
      pick = rng.below(m);  // every point coincides with a seed
    }
    seeds.push_back(points[pick]);
  }
  return seeds;
}

}  // namespace

KMeansResult kmeans(const Points& points, std::size_t k, std::size_t max_iter, std::uint64_t seed) {
  const std::size_t m = points.size();
  if (k == 0) throw DomainError("kmeans: k must be >= 1");
  if (k > m) throw DomainError("kmeans: k=" + std::to_string(k) + " exceeds " +
                               std::to_string(m) + " points");
  if (max_iter == 0) throw DomainError("kmeans: max_iter must be >= 1");
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ShapeError("kmeans: points differ in dimension");
  }

  Rng rng(seed);
  KMeansResult r;
  r.centroids = plus_plus_seeds(points, k, rng);
  r.assignments.assign(m, k);  // k = unassigned
  std::vector<double> dist(m);

  auto assign = [&] {
    bool changed = false;
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t best = 0;
      double bd = sq_dist(points[i], r.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(points[i], r.centroids[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      changed = changed || r.assignments[i] != best;
      r.assignments[i] = best;
      dist[i] = bd;
    }
    return changed;
  };

  auto update = [&] {
    std::vector<std::size_t> count(k, 0);
    Points sum(k, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      ++count[r.assignments[i]];
      for (std::size_t j = 0; j < dim; ++j) sum[r.assignments[i]][j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) {
        // re-seed at the point farthest from its own centroid
        std::size_t far = 0;
        for (std::size_t i = 1; i < m; ++i) {
          if (dist[i] > dist[far]) far = i;
        }
        r.centroids[c] = points[far];
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) r.centroids[c][j] = sum[c][j] / static_cast<double>(count[c]);
    }
  };

  auto inertia = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += sq_dist(points[i], r.centroids[r.assignments[i]]);
    return s;
  };

  assign();
  while (r.iterations < max_iter) {
    update();
    ++r.iterations;
    r.inertia_trace.push_back(inertia());
    if (!assign()) break;
  }
  r.inertia = inertia();
  return r;
}

KMeansResult kmeans_best_of(const Points& points, std::size_t k, std::size_t max_iter,
                            std::uint64_t seed, std::size_t restarts) {
  if (restarts == 0) throw DomainError("kmeans: restarts must be >= 1");
  KMeansResult best;
  for (std::size_t i = 0; i < restarts; ++i) {
    KMeansResult r = kmeans(points, k, max_iter, derive_seed(seed, i));
    if (i == 0 || r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

TopicDistanceMatrix topic_distance_matrix(const Points& centroids) {
  if (centroids.empty()) throw DomainError("topic distances: no centroids");
  TopicDistanceMatrix m{centroids, {}};
  const std::size_t k = centroids.size();
  m.distance.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t a = 0; a < k; ++a) {
    if (centroids[a].size() != centroids[0].size()) {
      throw ShapeError("topic distances: centroids differ in dimension");
    }
    for (std::size_t b = a + 1; b < k; ++b) {
      m.distance[a][b] = m.distance[b][a] = sq_dist(centroids[a], centroids[b]);
    }
  }
  return m;
}

void write_distance_csv(std::ostream& out, const TopicDistanceMatrix& m) {
  const std::size_t k = m.distance.size();
  out << "topic";
  for (std::size_t b = 1; b <= k; ++b) out << ',' << b;
  out << '\n';
  char buf[40];
  for (std::size_t a = 0; a < k; ++a) {
    out << a + 1;
    for (std::size_t b = 0; b < k; ++b) {
      std::snprintf(buf, sizeof buf, "%.10g", m.distance[a][b]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

std::vector<std::vector<double>> read_distance_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("topic,", 0) != 0) {
    throw DataError("distance CSV: missing header");
  }
  std::vector<std::vector<double>> d;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::logic_error&) {
        throw DataError("distance CSV: bad value '" + cell + "'");
      }
    }
    d.push_back(std::move(row));
  }
  for (const auto& row : d) {
    if (row.size() != d.size()) throw DataError("distance CSV: matrix is not square");
  }
  return d;
}

}  // namespace contir::data

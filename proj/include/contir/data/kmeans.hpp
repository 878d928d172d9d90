#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace contir::data {

using Points = std::vector<std::vector<double>>;

struct KMeansResult {
  std::vector<std::size_t> assignments;
  Points centroids;
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::vector<double> inertia_trace;  // after each Lloyd iteration
};

/// Lloyd iterations from k-means++ seeding. Stops when assignments no longer
/// change or after max_iter. An empty cluster is re-seeded at the point
/// farthest from its centroid. Throws DomainError if k > m or k == 0.
KMeansResult kmeans(const Points& points, std::size_t k, std::size_t max_iter, std::uint64_t seed);

/// Lowest-inertia result over `restarts` seeded runs.
KMeansResult kmeans_best_of(const Points& points, std::size_t k, std::size_t max_iter,
                            std::uint64_t seed, std::size_t restarts = 10);

struct TopicDistanceMatrix {
  Points centroids;
  std::vector<std::vector<double>> distance;  // squared Euclidean
};

TopicDistanceMatrix topic_distance_matrix(const Points& centroids);

/// Header `topic,1..k`, then one row per topic.
void write_distance_csv(std::ostream& out, const TopicDistanceMatrix& m);
std::vector<std::vector<double>> read_distance_csv(std::istream& in);

}  // namespace contir::data

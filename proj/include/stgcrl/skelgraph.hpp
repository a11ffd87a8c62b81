#pragma once

// Skeleton topology, the root/centripetal/centrifugal adjacency split with
// symmetric normalization, and the edge-cut partitioning of an ST-graph
// feature into S subgraphs along time or body parts.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "stgcrl/numcore/errors.hpp"
#include "stgcrl/numcore/ops.hpp"
#include "stgcrl/numcore/tensor.hpp"

namespace stgcrl {

struct SkeletonTopology {
  std::size_t num_joints = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // undirected
  std::size_t center_joint = 0;
  std::vector<std::vector<std::size_t>> body_part_groups;  // may be empty

  /// 25-joint Kinect v2 layout (NTU RGB+D joint order, zero-based). The center
  /// is the spine-shoulder joint; groups are trunk, left arm, right arm, left
  /// leg, right leg.
  static SkeletonTopology ntu25() {
    SkeletonTopology t;
    t.num_joints = 25;
    const std::pair<int, int> one_based[] = {{1, 2},   {2, 21},  {3, 21},  {4, 3},   {5, 21},
                                             {6, 5},   {7, 6},   {8, 7},   {9, 21},  {10, 9},
                                             {11, 10}, {12, 11}, {13, 1},  {14, 13}, {15, 14},
                                             {16, 15}, {17, 1},  {18, 17}, {19, 18}, {20, 19},
                                             {22, 23}, {23, 8},  {24, 25}, {25, 12}};
    for (auto [a, b] : one_based) t.edges.emplace_back(a - 1, b - 1);
    t.center_joint = 20;
    t.body_part_groups = {{0, 1, 2, 3, 20}, {4, 5, 6, 7, 21, 22}, {8, 9, 10, 11, 23, 24},
                          {12, 13, 14, 15}, {16, 17, 18, 19}};
    return t;
  }

  /// Path 0-1-...-(n-1), no groups.
  static SkeletonTopology chain(std::size_t n, std::size_t center) {
    SkeletonTopology t;
    t.num_joints = n;
    for (std::size_t i = 0; i + 1 < n; ++i) t.edges.emplace_back(i, i + 1);
    t.center_joint = center;
    return t;
  }

  /// Throws ContractViolation unless indices are valid, the graph is
  /// connected and the body-part groups (if any) partition the joints.
  void validate() const {
    require(num_joints >= 1, "topology: need at least one joint");
    require(center_joint < num_joints, "topology: center joint out of range");
    for (auto [a, b] : edges)
      require(a < num_joints && b < num_joints && a != b,
              "topology: invalid edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
    for (std::size_t d : hop_distances())
      require(d != unreachable, "topology: skeleton graph is disconnected");
    if (!body_part_groups.empty()) {
      std::vector<int> seen(num_joints, 0);
      for (const auto& g : body_part_groups) {
        require(!g.empty(), "topology: empty body-part group");
        for (std::size_t j : g) {
          require(j < num_joints, "topology: body-part joint out of range");
          ++seen[j];
        }
      }
      for (int c : seen) require(c == 1, "topology: body-part groups must partition the joints");
    }
  }

  static constexpr std::size_t unreachable = std::numeric_limits<std::size_t>::max();

  /// Breadth-first hop distance of every joint from the center joint.
  std::vector<std::size_t> hop_distances() const {
    std::vector<std::vector<std::size_t>> nbr(num_joints);
    for (auto [a, b] : edges) {
      nbr[a].push_back(b);
      nbr[b].push_back(a);
    }
    std::vector<std::size_t> dist(num_joints, unreachable);
    std::queue<std::size_t> q;
    dist[center_joint] = 0;
    q.push(center_joint);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v : nbr[u])
        if (dist[v] == unreachable) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
    }
    return dist;
  }

  Tensor adjacency() const {
    Tensor a({num_joints, num_joints}, 0.0);
    for (auto [i, j] : edges) a.at(i, j) = a.at(j, i) = 1.0;
    return a;
  }
};

/// Lambda^{-1/2} A Lambda^{-1/2} with Lambda_ii = sum_j A_ij + alpha.
inline Tensor normalize_adjacency(const Tensor& a, double alpha = 0.001) {
  require(a.rank() == 2 && a.dim(0) == a.dim(1), "normalize_adjacency: square matrix required");
  require(alpha > 0.0, "normalize_adjacency: alpha must be positive");
  const std::size_t m = a.dim(0);
  std::vector<double> inv_sqrt(m);
  for (std::size_t i = 0; i < m; ++i) {
    double deg = alpha;
    for (std::size_t j = 0; j < m; ++j) {
      require(a.at(i, j) >= 0.0, "normalize_adjacency: negative entry");
      deg += a.at(i, j);
    }
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  Tensor out({m, m}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = inv_sqrt[i] * a.at(i, j) * inv_sqrt[j];
  return out;
}

enum class Partition : std::size_t { root = 0, centripetal = 1, centrifugal = 2 };

struct SpatialPartitions {
  Tensor root, centripetal, centrifugal;
  std::array<Tensor, 3> normalized;  // indexed by Partition
  double alpha = 0.001;

  const Tensor& raw(Partition p) const {
    switch (p) {
      case Partition::root: return root;
      case Partition::centripetal: return centripetal;
      default: return centrifugal;
    }
  }
};

/// Centripetal (i,j): j adjacent to i and strictly closer to the center.
/// Every other directed neighbor pair is centrifugal. Root is the identity.
inline SpatialPartitions build_partitions(const SkeletonTopology& topo, double alpha = 0.001) {
  topo.validate();
  require(alpha > 0.0, "build_partitions: alpha must be positive");
  const std::size_t m = topo.num_joints;
  const auto dist = topo.hop_distances();
  SpatialPartitions p;
  p.alpha = alpha;
  p.root = Tensor({m, m}, 0.0);
  p.centripetal = Tensor({m, m}, 0.0);
  p.centrifugal = Tensor({m, m}, 0.0);
  for (std::size_t i = 0; i < m; ++i) p.root.at(i, i) = 1.0;
  auto assign = [&](std::size_t i, std::size_t j) {
    (dist[j] < dist[i] ? p.centripetal : p.centrifugal).at(i, j) = 1.0;
  };
  for (auto [a, b] : topo.edges) {
    assign(a, b);
    assign(b, a);
  }
  p.normalized = {normalize_adjacency(p.root, alpha), normalize_adjacency(p.centripetal, alpha),
                  normalize_adjacency(p.centrifugal, alpha)};
  return p;
}

enum class PartitionAxis { temporal, spatial };

/// Contiguous [begin, end) frame blocks; the first (T mod S) blocks get the
/// extra frame.
inline std::vector<std::pair<std::size_t, std::size_t>> temporal_segments(std::size_t frames, std::size_t S) {
  require(S >= 1 && S <= frames, "temporal_segments: need 1 <= S <= T'");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t base = frames / S, extra = frames % S;
  std::size_t begin = 0;
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

/// Joint index sets for spatial partitioning: the declared body-part groups,
/// or balanced contiguous index ranges when the topology declares none.
inline std::vector<std::vector<std::size_t>> spatial_segments(const SkeletonTopology& topo, std::size_t S) {
  if (!topo.body_part_groups.empty()) {
    require(S == topo.body_part_groups.size(),
            "spatial_segments: S=" + std::to_string(S) + " but topology declares " +
                std::to_string(topo.body_part_groups.size()) + " body-part groups");
    return topo.body_part_groups;
  }
  std::vector<std::vector<std::size_t>> out;
  for (auto [b, e] : temporal_segments(topo.num_joints, S)) {
    std::vector<std::size_t> g;
    for (std::size_t j = b; j < e; ++j) g.push_back(j);
    out.push_back(std::move(g));
  }
  return out;
}

struct STGraphFeature {
  Tensor values;  // T' x M x C
  const SkeletonTopology* topology = nullptr;
  std::size_t frame_stride = 1;
  std::size_t subgraph_index = 0;
};

/// Splits an ST-graph feature into S subgraphs by cutting edges along one axis.
inline std::vector<STGraphFeature> partition_stgraph(const STGraphFeature& f, PartitionAxis axis, std::size_t S) {
  require(f.values.rank() == 3, "partition_stgraph: feature must be T'xMxC");
  require(f.topology != nullptr, "partition_stgraph: feature carries no topology");
  const std::size_t T = f.values.dim(0), M = f.values.dim(1), C = f.values.dim(2);
  std::vector<STGraphFeature> out;
  if (axis == PartitionAxis::temporal) {
    std::size_t s = 0;
    for (auto [b, e] : temporal_segments(T, S)) {
      std::vector<double> d(f.values.data().begin() + static_cast<std::ptrdiff_t>(b * M * C),
                            f.values.data().begin() + static_cast<std::ptrdiff_t>(e * M * C));
      out.push_back({Tensor({e - b, M, C}, std::move(d)), f.topology, f.frame_stride, s++});
    }
  } else {
    require(S >= 1 && S <= M, "partition_stgraph: need 1 <= S <= M");
    std::size_t s = 0;
    for (const auto& joints : spatial_segments(*f.topology, S)) {
      Tensor v({T, joints.size(), C}, 0.0);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < joints.size(); ++k)
          for (std::size_t c = 0; c < C; ++c) v.at(t, k, c) = f.values.at(t, joints[k], c);
      out.push_back({std::move(v), f.topology, f.frame_stride, s++});
    }
  }
  return out;
}

/// Differentiable counterpart on a tape value h (T'xMxC).
inline std::vector<Var> partition_stgraph(Var h, const SkeletonTopology& topo, PartitionAxis axis, std::size_t S) {
  require(h.value().rank() == 3, "partition_stgraph: feature must be T'xMxC");
  std::vector<Var> out;
  if (axis == PartitionAxis::temporal) {
    for (auto [b, e] : temporal_segments(h.value().dim(0), S)) out.push_back(ops::slice_rows(h, b, e));
  } else {
    require(S >= 1 && S <= h.value().dim(1), "partition_stgraph: need 1 <= S <= M");
    for (auto& joints : spatial_segments(topo, S)) out.push_back(ops::gather_joints(h, joints));
  }
  return out;
}

}  // namespace stgcrl

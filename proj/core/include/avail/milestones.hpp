#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "avail/common.hpp"
#include "avail/env.hpp"

namespace avail::milestones {

struct TaskId {
  int index = 0;
  std::string name;
};

struct Vertex {
  TaskId task;
  std::vector<env::Observation> examples;
  int next_label = 0;  // index of the task to practice after succeeding here
};

/// Directed milestone graph; every vertex must have an outgoing edge.
struct MilestoneGraph {
  std::vector<Vertex> vertices;

  int size() const { return static_cast<int>(vertices.size()); }
  const Vertex& vertex(int i) const { return vertices.at(i); }
  Vertex& vertex(int i) { return vertices.at(i); }
  int index_of(std::string_view name) const;  // -1 when absent
  std::vector<std::pair<int, int>> edges() const;
  void validate() const;

  /// Examples of one vertex as a rows-are-samples matrix.
  Eigen::MatrixXd examples_matrix(int i) const;
};

/// Build a graph from (task, next_task) name pairs. A next_task without its
/// own entry would be a sink, which Definition-style validation rejects.
MilestoneGraph build_graph(const std::vector<std::pair<std::string, std::string>>& edges);

/// reach -> reposition -> pickup -> reach
MilestoneGraph default_valve3_graph();

struct AugmentConfig {
  double sigma = 0.02;
  bool clip_to_valid = false;
};

/// Adds N(0, sigma^2) noise to every continuous component; the held flag is
/// never noised. Clips positions/grip back into their valid ranges on demand.
env::Observation augment(const env::Observation& obs, const AugmentConfig& cfg,
                         const env::EnvConfig& env_cfg, Rng& rng);

/// Row-wise augmentation of a batch (rows are observations).
Eigen::MatrixXd augment_batch(const Eigen::MatrixXd& rows, const AugmentConfig& cfg,
                              const env::EnvConfig& env_cfg, Rng& rng);

/// Samples n observations uniformly from the task's success set, `margin`
/// (fraction) inside the predicate boundary. Throws ValidationError for tasks
/// without a sampler and after 10^6 rejected draws.
std::vector<env::Observation> generate_examples(const MilestoneGraph& graph, int task_index,
                                                int n, const env::EnvConfig& env_cfg,
                                                double margin, std::uint64_t seed);

/// Fills every vertex of the graph with per_task examples.
void populate_examples(MilestoneGraph& graph, int per_task, const env::EnvConfig& env_cfg,
                       double margin, std::uint64_t seed);

/// Object on the table, away from the center, not held: the state a
/// forward-backward controller's backward task restores.
std::vector<env::Observation> sample_off_center_table_states(int n,
                                                             const env::EnvConfig& env_cfg,
                                                             double margin, std::uint64_t seed);

/// Self-describing record file: task table, edge labels, one row-major
/// observation matrix per task.
void save_graph(const MilestoneGraph& graph, const std::string& path);
MilestoneGraph load_graph(const std::string& path);

}  // namespace avail::milestones

#include "avail/milestones.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace avail::milestones {

using Eigen::MatrixXd;
using Eigen::Vector3d;

int MilestoneGraph::index_of(std::string_view name) const {
  for (int i = 0; i < size(); ++i)
    if (vertices[i].task.name == name) return i;
  return -1;
}

std::vector<std::pair<int, int>> MilestoneGraph::edges() const {
  std::vector<std::pair<int, int>> e;
  e.reserve(vertices.size());
  for (int i = 0; i < size(); ++i) e.emplace_back(i, vertices[i].next_label);
  return e;
}

void MilestoneGraph::validate() const {
  if (vertices.empty()) throw ValidationError("milestone graph: no vertices");
  std::set<std::string> names;
  for (int i = 0; i < size(); ++i) {
    const Vertex& v = vertices[i];
    if (v.task.index != i) throw ValidationError("milestone graph: non-dense task indices");
    if (!names.insert(v.task.name).second)
      throw ValidationError("milestone graph: duplicate task '" + v.task.name + "'");
    if (v.next_label < 0 || v.next_label >= size())
      throw ValidationError("milestone graph: vertex '" + v.task.name +
                            "' has a dangling next-task label");
  }
}

MatrixXd MilestoneGraph::examples_matrix(int i) const {
  const auto& ex = vertex(i).examples;
  MatrixXd m(static_cast<long>(ex.size()), env::kObservationDim);
  for (size_t r = 0; r < ex.size(); ++r) m.row(static_cast<long>(r)) = ex[r].transpose();
  return m;
}

MilestoneGraph build_graph(const std::vector<std::pair<std::string, std::string>>& edges) {
  if (edges.empty()) throw ValidationError("build_graph: empty task list");
  MilestoneGraph g;
  for (const auto& [task, next] : edges) {
    if (g.index_of(task) >= 0) throw ValidationError("build_graph: duplicate task '" + task + "'");
    Vertex v;
    v.task.index = g.size();
    v.task.name = task;
    g.vertices.push_back(std::move(v));
    (void)next;
  }
  for (size_t i = 0; i < edges.size(); ++i) {
    const int target = g.index_of(edges[i].second);
    if (target < 0)
      throw ValidationError("build_graph: '" + edges[i].second +
                            "' has no outgoing edge (sink vertex violates the no-sink rule)");
    g.vertices[i].next_label = target;
  }
  g.validate();
  return g;
}

MilestoneGraph default_valve3_graph() {
  return build_graph({{"reach", "reposition"}, {"reposition", "pickup"}, {"pickup", "reach"}});
}

env::Observation augment(const env::Observation& obs, const AugmentConfig& cfg,
                         const env::EnvConfig& env_cfg, Rng& rng) {
  env::Observation out = obs;
  for (int i = 0; i < 7; ++i) out(i) += cfg.sigma * normal_sample(rng);
  if (cfg.clip_to_valid) {
    const double hw = env_cfg.arena_half_width;
    out(0) = std::clamp(out(0), -hw, hw);
    out(1) = std::clamp(out(1), -hw, hw);
    out(2) = std::clamp(out(2), 0.0, env_cfg.arena_height);
    out(3) = std::clamp(out(3), 0.0, 1.0);
    out(4) = std::clamp(out(4), -hw, hw);
    out(5) = std::clamp(out(5), -hw, hw);
    out(6) = std::clamp(out(6), 0.0, env_cfg.arena_height);
  }
  return out;
}

MatrixXd augment_batch(const MatrixXd& rows, const AugmentConfig& cfg,
                       const env::EnvConfig& env_cfg, Rng& rng) {
  MatrixXd out(rows.rows(), rows.cols());
  for (long r = 0; r < rows.rows(); ++r) {
    env::Observation obs = rows.row(r).transpose();
    out.row(r) = augment(obs, cfg, env_cfg, rng).transpose();
  }
  return out;
}

namespace {

constexpr long kMaxDraws = 1000000;

Vector3d sample_in_ball(Rng& rng, const Vector3d& center, double radius) {
  for (;;) {
    Vector3d p{uniform_range(rng, -radius, radius), uniform_range(rng, -radius, radius),
               uniform_range(rng, -radius, radius)};
    if (p.norm() <= radius) return center + p;
  }
}

bool hand_in_arena(const env::EnvConfig& cfg, const Vector3d& hand) {
  return std::abs(hand.x()) <= cfg.arena_half_width &&
         std::abs(hand.y()) <= cfg.arena_half_width && hand.z() >= 0.0 &&
         hand.z() <= cfg.arena_height;
}

// Object uniform over the tether disk area restricted to [r_min, r_max].
Eigen::Vector2d sample_annulus(Rng& rng, double r_min, double r_max) {
  const double u = uniform_double(rng);
  const double r = std::sqrt(r_min * r_min + u * (r_max * r_max - r_min * r_min));
  const double theta = uniform_range(rng, 0.0, 2.0 * M_PI);
  return {r * std::cos(theta), r * std::sin(theta)};
}

/// One posed success-set state per call; nullopt-style via bool.
bool sample_success_state(env::Phase phase, const env::EnvConfig& cfg, double margin, Rng& rng,
                          env::EnvState& out) {
  const double inner = (1.0 - margin) * cfg.success_radius;
  const double outer = (1.0 + margin) * cfg.success_radius;
  env::EnvState s;
  switch (phase) {
    case env::Phase::Reach: {
      // a reach pose is only meaningful while the object still needs
      // repositioning, so the object stays clear of the centered region
      if (outer >= cfg.tether_radius) return false;
      s.obj_pos.head<2>() = sample_annulus(rng, outer, cfg.tether_radius);
      s.obj_pos.z() = 0.0;
      s.hand_pos = sample_in_ball(rng, s.obj_pos, inner);
      if (!hand_in_arena(cfg, s.hand_pos)) return false;
      s.grip = uniform_double(rng);
      s.held = false;
      break;
    }
    case env::Phase::Reposition: {
      // the pose that ends a drag: valve at the center, still in the grasp
      s.obj_pos.head<2>() = sample_annulus(rng, 0.0, inner);
      s.obj_pos.z() = 0.0;
      const double grasp = (1.0 - margin) * cfg.grasp_radius;
      Eigen::Vector2d off = sample_annulus(rng, 0.0, grasp);
      s.hand_pos = s.obj_pos + Vector3d(off.x(), off.y(), uniform_range(rng, 0.0, grasp));
      if (!hand_in_arena(cfg, s.hand_pos)) return false;
      s.grip = uniform_range(rng, 0.5, 1.0);
      s.held = true;
      break;
    }
    case env::Phase::Pickup: {
      s.obj_pos = sample_in_ball(rng, cfg.pickup_target(), inner);
      if (s.obj_pos.z() <= 0.0 || s.obj_pos.z() > cfg.arena_height) return false;
      const double grasp = (1.0 - margin) * cfg.grasp_radius;
      Eigen::Vector2d off = sample_annulus(rng, 0.0, grasp);
      s.hand_pos = s.obj_pos + Vector3d(off.x(), off.y(), uniform_range(rng, -grasp, grasp));
      if (!hand_in_arena(cfg, s.hand_pos)) return false;
      s.grip = uniform_range(rng, 0.5, 1.0);
      s.held = true;
      break;
    }
  }
  out = s;
  return true;
}

}  // namespace

std::vector<env::Observation> generate_examples(const MilestoneGraph& graph, int task_index,
                                                int n, const env::EnvConfig& env_cfg,
                                                double margin, std::uint64_t seed) {
  if (task_index < 0 || task_index >= graph.size())
    throw ValidationError("generate_examples: task not in graph");
  if (n < 0) throw ValidationError("generate_examples: negative count");
  const env::Phase phase = env::phase_from_name(graph.vertex(task_index).task.name);

  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(task_index)));
  std::vector<env::Observation> out;
  out.reserve(static_cast<size_t>(n));
  long draws = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++draws > kMaxDraws)
      throw ValidationError("generate_examples: rejection sampling exceeded 10^6 draws");
    env::EnvState s;
    if (!sample_success_state(phase, env_cfg, margin, rng, s)) continue;
    if (!env::success(env_cfg, s, phase)) continue;
    out.push_back(env::observe(s));
  }
  return out;
}

void populate_examples(MilestoneGraph& graph, int per_task, const env::EnvConfig& env_cfg,
                       double margin, std::uint64_t seed) {
  for (int i = 0; i < graph.size(); ++i)
    graph.vertex(i).examples = generate_examples(graph, i, per_task, env_cfg, margin, seed);
}

std::vector<env::Observation> sample_off_center_table_states(int n,
                                                             const env::EnvConfig& env_cfg,
                                                             double margin, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x0ffce17eULL));
  const double outer = (1.0 + margin) * env_cfg.success_radius;
  std::vector<env::Observation> out;
  out.reserve(static_cast<size_t>(n));
  long draws = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++draws > kMaxDraws)
      throw ValidationError("sample_off_center_table_states: rejection sampling exhausted");
    env::EnvState s;
    s.obj_pos.head<2>() = sample_annulus(rng, outer, env_cfg.tether_radius);
    s.obj_pos.z() = 0.0;
    s.hand_pos = sample_in_ball(rng, s.obj_pos, (1.0 - margin) * env_cfg.success_radius);
    if (!hand_in_arena(env_cfg, s.hand_pos)) continue;
    s.grip = uniform_double(rng);
    s.held = false;
    out.push_back(env::observe(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Record file

namespace {

constexpr char kMilestoneMagic[8] = {'A', 'V', 'A', 'I', 'L', 'M', 'S', '1'};

void write_string(std::ofstream& out, const std::string& s) {
  const std::uint32_t n = static_cast<std::uint32_t>(s.size());
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(s.data(), n);
}

std::string read_string(std::ifstream& in) {
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 4);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("milestone record truncated");
  return s;
}

}  // namespace

void save_graph(const MilestoneGraph& graph, const std::string& path) {
  graph.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_graph: cannot open " + path);
  out.write(kMilestoneMagic, 8);
  const std::uint32_t k = static_cast<std::uint32_t>(graph.size());
  out.write(reinterpret_cast<const char*>(&k), 4);
  for (const auto& v : graph.vertices) {
    write_string(out, v.task.name);
    const std::uint32_t next = static_cast<std::uint32_t>(v.next_label);
    out.write(reinterpret_cast<const char*>(&next), 4);
  }
  for (const auto& v : graph.vertices) {
    const std::uint32_t n = static_cast<std::uint32_t>(v.examples.size());
    const std::uint32_t dim = env::kObservationDim;
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    for (const auto& obs : v.examples)
      out.write(reinterpret_cast<const char*>(obs.data()), sizeof(double) * env::kObservationDim);
  }
  if (!out) throw IoError("save_graph: write failed for " + path);
}

MilestoneGraph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_graph: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMilestoneMagic, 8) != 0)
    throw IoError("load_graph: bad magic in " + path);
  std::uint32_t k = 0;
  in.read(reinterpret_cast<char*>(&k), 4);
  MilestoneGraph g;
  for (std::uint32_t i = 0; i < k; ++i) {
    Vertex v;
    v.task.index = static_cast<int>(i);
    v.task.name = read_string(in);
    std::uint32_t next = 0;
    in.read(reinterpret_cast<char*>(&next), 4);
    v.next_label = static_cast<int>(next);
    g.vertices.push_back(std::move(v));
  }
  for (auto& v : g.vertices) {
    std::uint32_t n = 0, dim = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&dim), 4);
    if (!in || dim != env::kObservationDim) throw IoError("load_graph: bad observation dim");
    v.examples.resize(n);
    for (auto& obs : v.examples) {
      in.read(reinterpret_cast<char*>(obs.data()), sizeof(double) * env::kObservationDim);
      if (!in) throw IoError("load_graph: record truncated");
    }
  }
  g.validate();
  return g;
}

}  // namespace avail::milestones

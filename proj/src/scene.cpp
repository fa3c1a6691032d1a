#include "eqmap/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "eqmap/rng.hpp"
#include "json.hpp"

namespace eqmap {

namespace fs = std::filesystem;

SceneDims dims_from(const RunConfig& cfg) {
  return SceneDims{cfg.t_in, cfg.t_out, cfg.n_agents, cfg.q_lanes, cfg.l_points};
}

std::string fmt9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

double quantize9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return std::strtod(buf, nullptr);
}

namespace {

double dist(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

// indices of the up-to `keep` entries nearest the ego, in original order
std::vector<size_t> nearest_keep(const std::vector<double>& d, size_t keep) {
  std::vector<size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return d[a] < d[b]; });
  if (order.size() > keep) order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

Scene pad_scene(const RawScene& raw, const SceneDims& d) {
  int ego_count = 0;
  for (const RawAgent& a : raw.agents) ego_count += a.is_ego ? 1 : 0;
  if (ego_count != 1)
    throw DataError("scene " + raw.id + ": expected exactly one ego, found " +
                    std::to_string(ego_count));
  for (const RawAgent& a : raw.agents) {
    if (static_cast<int>(a.history.size()) != d.t_in)
      throw DataError("scene " + raw.id + ": agent " + a.id + " has " +
                      std::to_string(a.history.size()) + " history steps, expected " +
                      std::to_string(d.t_in));
    if (!a.future.empty() && static_cast<int>(a.future.size()) != d.t_out)
      throw DataError("scene " + raw.id + ": agent " + a.id + " has " +
                      std::to_string(a.future.size()) + " future steps, expected " +
                      std::to_string(d.t_out));
  }
  for (const LanePolyline& l : raw.lanes)
    if (static_cast<int>(l.points.size()) != d.l_points)
      throw DataError("scene " + raw.id + ": lane " + l.id + " has " +
                      std::to_string(l.points.size()) + " points, expected " +
                      std::to_string(d.l_points));

  Vec2 ego_cur;
  for (const RawAgent& a : raw.agents)
    if (a.is_ego) ego_cur = a.history.back();

  // drop the farthest neighbors when over capacity (ego always kept)
  std::vector<size_t> kept_agents;
  {
    std::vector<double> dd(raw.agents.size());
    for (size_t i = 0; i < raw.agents.size(); ++i)
      dd[i] = raw.agents[i].is_ego ? -1.0 : dist(raw.agents[i].history.back(), ego_cur);
    kept_agents = nearest_keep(dd, static_cast<size_t>(d.n_agents));
  }
  std::vector<size_t> kept_lanes;
  {
    std::vector<double> dd(raw.lanes.size());
    for (size_t i = 0; i < raw.lanes.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec2& p : raw.lanes[i].points) best = std::min(best, dist(p, ego_cur));
      dd[i] = best;
    }
    kept_lanes = nearest_keep(dd, static_cast<size_t>(d.q_lanes));
  }

  Scene s;
  s.id = raw.id;
  s.agent_ids.assign(static_cast<size_t>(d.n_agents), "");
  s.agents.assign(static_cast<size_t>(d.n_agents),
                  std::vector<Vec2>(static_cast<size_t>(d.t_in)));
  s.agent_valid.assign(static_cast<size_t>(d.n_agents), false);
  s.lanes.assign(static_cast<size_t>(d.q_lanes), LanePolyline{});
  s.lane_valid.assign(static_cast<size_t>(d.q_lanes), false);
  for (auto& l : s.lanes) l.points.assign(static_cast<size_t>(d.l_points), Vec2());

  int slot = 0;
  for (size_t i : kept_agents) {
    const RawAgent& a = raw.agents[i];
    s.agent_ids[static_cast<size_t>(slot)] = a.id;
    s.agents[static_cast<size_t>(slot)] = a.history;
    s.agent_valid[static_cast<size_t>(slot)] = true;
    if (a.is_ego) {
      s.ego = slot;
      s.ego_future = a.future;
    }
    ++slot;
  }
  slot = 0;
  for (size_t i : kept_lanes) {
    s.lanes[static_cast<size_t>(slot)] = raw.lanes[i];
    s.lane_valid[static_cast<size_t>(slot)] = true;
    ++slot;
  }
  return s;
}

namespace {

struct Row {
  std::string type, entity, role;
  int index;
  Vec2 p;
};

Row parse_row(const std::string& line, const std::string& path, int lineno) {
  auto fail = [&](const std::string& msg) -> DataError {
    return DataError(path + " line " + std::to_string(lineno) + ": " + msg);
  };
  std::vector<std::string> f;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      f.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  f.push_back(cur);
  if (f.size() != 6) throw fail("expected 6 comma-separated fields, got " + std::to_string(f.size()));
  Row r;
  r.type = f[0];
  r.entity = f[1];
  r.role = f[2];
  if (r.type != "agent" && r.type != "lane") throw fail("unknown record_type '" + r.type + "'");
  if (r.type == "agent" && r.role != "ego" && r.role != "neighbor")
    throw fail("agent role must be ego or neighbor, got '" + r.role + "'");
  if (r.type == "lane" && r.role != "-") throw fail("lane role must be '-', got '" + r.role + "'");
  if (r.entity.empty()) throw fail("empty entity_id");
  try {
    size_t pos = 0;
    r.index = std::stoi(f[3], &pos);
    if (pos != f[3].size() || r.index < 0) throw std::invalid_argument(f[3]);
  } catch (const std::exception&) {
    throw fail("bad index '" + f[3] + "'");
  }
  auto num = [&](const std::string& v, const char* name) {
    try {
      size_t pos = 0;
      double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw fail(std::string("bad ") + name + " '" + v + "'");
    }
  };
  double x = num(f[4], "x"), y = num(f[5], "y");
  try {
    r.p = Vec2(x, y);
  } catch (const std::exception&) {
    throw fail("non-finite coordinate");
  }
  return r;
}

}  // namespace

Scene load_scene(const std::string& path, const SceneDims& d) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open scene file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": empty file");
  {
    std::string hdr = line;
    if (!hdr.empty() && hdr.back() == '\r') hdr.pop_back();
    if (hdr != "record_type,entity_id,role,index,x,y")
      throw DataError(path + " line 1: bad header '" + hdr + "'");
  }

  struct Entity {
    std::string role;
    std::map<int, Vec2> steps;
  };
  std::vector<std::string> agent_order, lane_order;
  std::map<std::string, Entity> agents, lanes;

  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    Row r = parse_row(line, path, lineno);
    auto& table = r.type == "agent" ? agents : lanes;
    auto& order = r.type == "agent" ? agent_order : lane_order;
    auto it = table.find(r.entity);
    if (it == table.end()) {
      order.push_back(r.entity);
      it = table.emplace(r.entity, Entity{r.role, {}}).first;
    } else if (it->second.role != r.role) {
      throw DataError(path + " line " + std::to_string(lineno) + ": entity " + r.entity +
                      " changes role");
    }
    if (!it->second.steps.emplace(r.index, r.p).second)
      throw DataError(path + " line " + std::to_string(lineno) + ": duplicate index " +
                      std::to_string(r.index) + " for entity " + r.entity);
  }

  RawScene raw;
  raw.id = fs::path(path).stem().string();
  for (const std::string& id : agent_order) {
    const Entity& e = agents.at(id);
    RawAgent a;
    a.id = id;
    a.is_ego = e.role == "ego";
    int expect = a.is_ego && static_cast<int>(e.steps.size()) > d.t_in ? d.t_in + d.t_out : d.t_in;
    if (static_cast<int>(e.steps.size()) != expect)
      throw DataError(path + ": agent " + id + " has " + std::to_string(e.steps.size()) +
                      " steps, expected " + std::to_string(expect));
    for (int t = 0; t < expect; ++t) {
      auto it = e.steps.find(t);
      if (it == e.steps.end())
        throw DataError(path + ": agent " + id + " is missing step " + std::to_string(t));
      if (t < d.t_in)
        a.history.push_back(it->second);
      else
        a.future.push_back(it->second);
    }
    raw.agents.push_back(std::move(a));
  }
  for (const std::string& id : lane_order) {
    const Entity& e = lanes.at(id);
    LanePolyline l;
    l.id = id;
    if (static_cast<int>(e.steps.size()) != d.l_points)
      throw DataError(path + ": lane " + id + " has " + std::to_string(e.steps.size()) +
                      " points, expected " + std::to_string(d.l_points));
    for (int j = 0; j < d.l_points; ++j) {
      auto it = e.steps.find(j);
      if (it == e.steps.end())
        throw DataError(path + ": lane " + id + " is missing waypoint " + std::to_string(j));
      l.points.push_back(it->second);
    }
    raw.lanes.push_back(std::move(l));
  }
  if (agent_order.empty()) throw DataError(path + ": scene has no ego track");
  return pad_scene(raw, d);
}

void save_scene(const Scene& s, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open scene file for writing: " + path);
  os << "record_type,entity_id,role,index,x,y\n";
  for (size_t i = 0; i < s.agents.size(); ++i) {
    if (!s.agent_valid[i]) continue;
    bool is_ego = static_cast<int>(i) == s.ego;
    const char* role = is_ego ? "ego" : "neighbor";
    for (size_t t = 0; t < s.agents[i].size(); ++t)
      os << "agent," << s.agent_ids[i] << ',' << role << ',' << t << ',' << fmt9(s.agents[i][t].x)
         << ',' << fmt9(s.agents[i][t].y) << '\n';
    if (is_ego)
      for (size_t t = 0; t < s.ego_future.size(); ++t)
        os << "agent," << s.agent_ids[i] << ',' << role << ',' << s.agents[i].size() + t << ','
           << fmt9(s.ego_future[t].x) << ',' << fmt9(s.ego_future[t].y) << '\n';
  }
  for (size_t q = 0; q < s.lanes.size(); ++q) {
    if (!s.lane_valid[q]) continue;
    for (size_t j = 0; j < s.lanes[q].points.size(); ++j)
      os << "lane," << s.lanes[q].id << ",-," << j << ',' << fmt9(s.lanes[q].points[j].x) << ','
         << fmt9(s.lanes[q].points[j].y) << '\n';
  }
  if (!os) throw DataError("scene write failed: " + path);
}

Scene transform_scene(const Scene& s, const RigidTransform& g) {
  Scene out = s;
  for (size_t a = 0; a < out.agents.size(); ++a) {
    if (!out.agent_valid[a]) continue;
    for (Vec2& p : out.agents[a]) p = g.apply(p);
  }
  for (size_t q = 0; q < out.lanes.size(); ++q) {
    if (!out.lane_valid[q]) continue;
    for (Vec2& p : out.lanes[q].points) p = g.apply(p);
  }
  for (Vec2& p : out.ego_future) p = g.apply(p);
  return out;
}

SplitResult split(const std::vector<Scene>& scenes, double r_train, double r_val, double r_test,
                  uint64_t seed) {
  if (scenes.empty()) throw DataError("split: no scenes");
  if (std::abs(r_train + r_val + r_test - 1.0) > 1e-9)
    throw DataError("split: ratios must sum to 1");
  std::vector<size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).fork("split");
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.next_int(static_cast<int>(i)))]);
  size_t n = scenes.size();
  size_t n_train = static_cast<size_t>(std::llround(r_train * static_cast<double>(n)));
  size_t n_val = static_cast<size_t>(std::llround(r_val * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  SplitResult out;
  for (size_t i = 0; i < n; ++i) {
    const Scene& s = scenes[order[i]];
    if (i < n_train)
      out.train.push_back(s);
    else if (i < n_train + n_val)
      out.val.push_back(s);
    else
      out.test.push_back(s);
  }
  return out;
}

void write_dataset(const std::string& dir, const SplitResult& splits, const RunConfig& cfg) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["config"] = canonical_text(cfg);
  manifest["config_hash"] = config_hash(cfg);
  manifest["seed"] = cfg.seed;
  auto emit = [&](const char* name, const std::vector<Scene>& part) {
    std::vector<std::string> ids;
    for (const Scene& s : part) {
      save_scene(s, (fs::path(dir) / (s.id + ".csv")).string());
      ids.push_back(s.id);
    }
    manifest["splits"][name] = ids;
  };
  emit("train", splits.train);
  emit("val", splits.val);
  emit("test", splits.test);
  std::ofstream os(fs::path(dir) / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw DataError("no manifest.json in " + dir);
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const std::exception& e) {
    throw DataError(std::string("bad manifest.json: ") + e.what());
  }
  Dataset out;
  out.gen_config = parse_config_text(manifest.at("config").get<std::string>());
  SceneDims d = dims_from(out.gen_config);
  auto read = [&](const char* name, std::vector<Scene>& part) {
    for (const auto& id : manifest.at("splits").at(name)) {
      std::string sid = id.get<std::string>();
      part.push_back(load_scene((fs::path(dir) / (sid + ".csv")).string(), d));
    }
  };
  read("train", out.train);
  read("val", out.val);
  read("test", out.test);
  return out;
}

}  // namespace eqmap

#include "graspred/trial.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "graspred/errors.hpp"
#include "graspred/numeric.hpp"
#include "graspred/parallel.hpp"

namespace graspred {

namespace {

using nlohmann::json;

void check_finite(const Vec3& v, std::size_t frame, const char* field) {
  if (!v.finite()) {
    throw ValidationError("frame " + std::to_string(frame) + ": non-finite " + field);
  }
}

void check_hand(const HandFrame& h, std::size_t frame, const char* side) {
  const std::pair<const Vec3*, const char*> pts[] = {
      {&h.palm_center, "palm_center"}, {&h.tip_thumb, "tip_thumb"},
      {&h.tip_index, "tip_index"},     {&h.tip_middle, "tip_middle"},
      {&h.tip_ring, "tip_ring"},       {&h.tip_pinky, "tip_pinky"},
      {&h.prox_thumb, "prox_thumb"},   {&h.prox_index, "prox_index"},
      {&h.index_local_z, "index_local_z"}};
  for (const auto& [p, name] : pts) {
    if (!p->finite()) {
      throw ValidationError("frame " + std::to_string(frame) + ": non-finite " +
                            std::string(side) + "." + name);
    }
  }
  if (std::abs(h.index_local_z.norm() - 1.0) > 1e-6) {
    throw ValidationError("frame " + std::to_string(frame) + ": " + std::string(side) +
                          ".index_local_z is not unit length");
  }
}

}  // namespace

void validate_trial(const Trial& trial) {
  if (trial.meta.user_id.empty() || trial.meta.task.empty() || trial.meta.object.empty() ||
      trial.meta.size.empty() || trial.meta.trial_id.empty()) {
    throw ValidationError("trial " + trial.meta.trial_id + ": empty meta label");
  }
  if (trial.meta.size != "Small" && trial.meta.size != "Medium" && trial.meta.size != "Large") {
    throw ValidationError("trial " + trial.meta.trial_id + ": size must be Small, Medium or Large");
  }
  if (trial.frames.size() < 2) {
    throw ValidationError("trial " + trial.meta.trial_id + ": fewer than 2 frames");
  }
  for (std::size_t i = 0; i < trial.frames.size(); ++i) {
    const Frame& f = trial.frames[i];
    if (!std::isfinite(f.t)) {
      throw ValidationError("frame " + std::to_string(i) + ": non-finite t");
    }
    if (f.t < 0.0) {
      throw ValidationError("frame " + std::to_string(i) + ": negative t");
    }
    if (i > 0 && f.t <= trial.frames[i - 1].t) {
      throw ValidationError("frame " + std::to_string(i) + ": t not strictly increasing");
    }
    check_finite(f.object_center, i, "object_center");
    check_hand(f.right, i, "right");
    if (f.left) check_hand(*f.left, i, "left");
  }
  const double t0 = trial.frames.front().t;
  const double t1 = trial.frames.back().t;
  if (!(trial.meta.grasp_time > t0 && trial.meta.grasp_time <= t1)) {
    throw ValidationError("trial " + trial.meta.trial_id +
                          ": grasp_time outside (first frame t, last frame t]");
  }
}

HandFrame lerp_hand(const HandFrame& a, const HandFrame& b, double u) {
  HandFrame h;
  h.palm_center = lerp(a.palm_center, b.palm_center, u);
  h.tip_thumb = lerp(a.tip_thumb, b.tip_thumb, u);
  h.tip_index = lerp(a.tip_index, b.tip_index, u);
  h.tip_middle = lerp(a.tip_middle, b.tip_middle, u);
  h.tip_ring = lerp(a.tip_ring, b.tip_ring, u);
  h.tip_pinky = lerp(a.tip_pinky, b.tip_pinky, u);
  h.prox_thumb = lerp(a.prox_thumb, b.prox_thumb, u);
  h.prox_index = lerp(a.prox_index, b.prox_index, u);
  // renormalize so the interpolated axis stays unit
  Vec3 z = lerp(a.index_local_z, b.index_local_z, u);
  const double n = z.norm();
  h.index_local_z = n > 0.0 ? z / n : a.index_local_z;
  return h;
}

HandFrame right_hand_at(const Trial& trial, double t) {
  const auto& fs = trial.frames;
  if (fs.empty()) throw TooFewFrames("right_hand_at: trial has no frames");
  if (t <= fs.front().t) return fs.front().right;
  if (t >= fs.back().t) return fs.back().right;
  // first frame with frame.t >= t
  auto it = std::lower_bound(fs.begin(), fs.end(), t,
                             [](const Frame& f, double v) { return f.t < v; });
  if (it->t == t) return it->right;
  const Frame& hi = *it;
  const Frame& lo = *(it - 1);
  const double u = (t - lo.t) / (hi.t - lo.t);
  return lerp_hand(lo.right, hi.right, u);
}

double palm_travel_distance(const Trial& trial) {
  double d = 0.0;
  for (std::size_t i = 1; i < trial.frames.size(); ++i) {
    d += distance(trial.frames[i].right.palm_center, trial.frames[i - 1].right.palm_center);
  }
  return d;
}

// ---------------------------------------------------------------------------
// JSON I/O
// ---------------------------------------------------------------------------

namespace {

std::string escape_json(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

void append_vec3(std::string& out, const Vec3& v) {
  out += '[';
  out += format_sig9(v.x);
  out += ',';
  out += format_sig9(v.y);
  out += ',';
  out += format_sig9(v.z);
  out += ']';
}

void append_hand(std::string& out, const HandFrame& h) {
  out += "{\"palm_center\":";
  append_vec3(out, h.palm_center);
  out += ",\"tip_thumb\":";
  append_vec3(out, h.tip_thumb);
  out += ",\"tip_index\":";
  append_vec3(out, h.tip_index);
  out += ",\"tip_middle\":";
  append_vec3(out, h.tip_middle);
  out += ",\"tip_ring\":";
  append_vec3(out, h.tip_ring);
  out += ",\"tip_pinky\":";
  append_vec3(out, h.tip_pinky);
  out += ",\"prox_thumb\":";
  append_vec3(out, h.prox_thumb);
  out += ",\"prox_index\":";
  append_vec3(out, h.prox_index);
  out += ",\"index_local_z\":";
  append_vec3(out, h.index_local_z);
  out += '}';
}

Vec3 parse_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError(where + ": expected [x,y,z]");
  }
  for (const auto& c : j) {
    if (!c.is_number()) throw ParseError(where + ": non-numeric component");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

HandFrame parse_hand(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected hand object");
  auto field = [&](const char* name) {
    auto it = j.find(name);
    if (it == j.end()) throw ParseError(where + ": missing " + name);
    return parse_vec3(*it, where + "." + name);
  };
  HandFrame h;
  h.palm_center = field("palm_center");
  h.tip_thumb = field("tip_thumb");
  h.tip_index = field("tip_index");
  h.tip_middle = field("tip_middle");
  h.tip_ring = field("tip_ring");
  h.tip_pinky = field("tip_pinky");
  h.prox_thumb = field("prox_thumb");
  h.prox_index = field("prox_index");
  h.index_local_z = field("index_local_z");
  return h;
}

}  // namespace

std::string trial_to_json(const Trial& trial) {
  std::string out;
  out.reserve(256 + trial.frames.size() * 640);
  out += "{\n  \"meta\": {\n";
  out += "    \"user_id\": \"" + escape_json(trial.meta.user_id) + "\",\n";
  out += "    \"task\": \"" + escape_json(trial.meta.task) + "\",\n";
  out += "    \"object\": \"" + escape_json(trial.meta.object) + "\",\n";
  out += "    \"size\": \"" + escape_json(trial.meta.size) + "\",\n";
  out += "    \"grasp_time\": " + format_sig9(trial.meta.grasp_time) + ",\n";
  out += "    \"trial_id\": \"" + escape_json(trial.meta.trial_id) + "\"\n";
  out += "  },\n  \"frames\": [\n";
  for (std::size_t i = 0; i < trial.frames.size(); ++i) {
    const Frame& f = trial.frames[i];
    out += "    {\"t\":";
    out += format_sig9(f.t);
    out += ",\"object_center\":";
    append_vec3(out, f.object_center);
    out += ",\"right\":";
    append_hand(out, f.right);
    out += ",\"left\":";
    if (f.left) {
      append_hand(out, *f.left);
    } else {
      out += "null";
    }
    out += '}';
    if (i + 1 < trial.frames.size()) out += ',';
    out += '\n';
  }
  out += "  ]\n}\n";
  return out;
}

Trial trial_from_json(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("meta") || !doc.contains("frames")) {
    throw ParseError(origin + ": expected {meta, frames}");
  }

  Trial trial;
  const json& m = doc["meta"];
  try {
    trial.meta.user_id = m.at("user_id").get<std::string>();
    trial.meta.task = m.at("task").get<std::string>();
    trial.meta.object = m.at("object").get<std::string>();
    trial.meta.size = m.at("size").get<std::string>();
    trial.meta.grasp_time = m.at("grasp_time").get<double>();
    trial.meta.trial_id = m.at("trial_id").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(origin + ": meta: " + e.what());
  }

  const json& frames = doc["frames"];
  if (!frames.is_array()) throw ParseError(origin + ": frames must be an array");
  trial.frames.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const json& jf = frames[i];
    const std::string where = origin + ": frame " + std::to_string(i);
    if (!jf.is_object()) throw ParseError(where + ": expected object");
    Frame f;
    auto it = jf.find("t");
    if (it == jf.end() || !it->is_number()) throw ParseError(where + ": missing numeric t");
    f.t = it->get<double>();
    it = jf.find("object_center");
    if (it == jf.end()) throw ParseError(where + ": missing object_center");
    f.object_center = parse_vec3(*it, where + ".object_center");
    it = jf.find("right");
    if (it == jf.end()) throw ParseError(where + ": missing right hand");
    f.right = parse_hand(*it, where + ".right");
    it = jf.find("left");
    if (it != jf.end() && !it->is_null()) {
      f.left = parse_hand(*it, where + ".left");
    }
    trial.frames.push_back(std::move(f));
  }

  validate_trial(trial);
  return trial;
}

Trial load_trial(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return trial_from_json(ss.str(), path.filename().string());
}

void write_trial(const Trial& trial, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << trial_to_json(trial);
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> paths;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().string().ends_with(".trial.json")) {
      paths.push_back(entry.path());
    }
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(paths.begin(), paths.end());

  Dataset ds;
  ds.provenance = dir.string();
  ds.trials.resize(paths.size());
  parallel_for(paths.size(), [&](std::size_t i) { ds.trials[i] = load_trial(paths[i]); });

  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    auto [it, inserted] = seen.emplace(ds.trials[i].meta.trial_id, i);
    if (!inserted) {
      throw ValidationError("duplicate trial_id '" + ds.trials[i].meta.trial_id + "' in " +
                            paths[it->second].string() + " and " + paths[i].string());
    }
  }
  return ds;
}

SummaryStats dataset_summary(const Dataset& ds) {
  if (ds.trials.empty()) throw EmptyDataset("dataset_summary: no trials");

  SummaryStats s;
  s.trial_count = ds.trials.size();
  s.frames_min = ds.trials.front().frames.size();
  s.frames_max = s.frames_min;
  double frame_sum = 0.0;
  double travel_sum = 0.0;
  s.travel_min = palm_travel_distance(ds.trials.front());
  s.travel_max = s.travel_min;
  std::map<std::size_t, std::size_t> hist;
  std::map<std::string, std::size_t> per_user;

  for (const Trial& t : ds.trials) {
    const std::size_t n = t.frames.size();
    s.frames_min = std::min(s.frames_min, n);
    s.frames_max = std::max(s.frames_max, n);
    frame_sum += static_cast<double>(n);
    hist[(n / SummaryStats::frame_histogram_bin) * SummaryStats::frame_histogram_bin]++;
    const double travel = palm_travel_distance(t);
    s.travel_min = std::min(s.travel_min, travel);
    s.travel_max = std::max(s.travel_max, travel);
    travel_sum += travel;
    per_user[t.meta.user_id]++;
  }
  s.frames_mean = frame_sum / static_cast<double>(s.trial_count);
  s.travel_mean = travel_sum / static_cast<double>(s.trial_count);
  s.frame_histogram.assign(hist.begin(), hist.end());
  s.trials_per_user.assign(per_user.begin(), per_user.end());
  return s;
}

}  // namespace graspred

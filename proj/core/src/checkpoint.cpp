#include "sfe/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <torch/serialize.h>
#include <torch/torch.h>

#include "sfe/errors.hpp"

namespace fs = std::filesystem;

namespace sfe::checkpoint {

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + p.string());
  f << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw InvalidInput("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

fs::path component_dir(const fs::path& run, const std::string& component) { return run / component; }

fs::path step_dir(const fs::path& run, const std::string& component, std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08lld", static_cast<long long>(step));
  return component_dir(run, component) / buf;
}

std::string provenance_line(const Meta& meta) {
  std::ostringstream os;
  os << kVersion << " component=" << meta.component << " step=" << meta.step << " seed=" << meta.seed
     << " config=" << hex64(meta.config_hash) << " optimizer=" << meta.optimizer;
  return os.str();
}

fs::path save(const fs::path& run, const Meta& meta, const Contents& contents, const config::RunConfig& cfg) {
  const auto final_dir = step_dir(run, meta.component, meta.step);
  const auto tmp = final_dir.parent_path() / (final_dir.filename().string() + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  torch::serialize::OutputArchive archive;
  for (const auto& [name, m] : contents.modules) {
    torch::serialize::OutputArchive sub;
    m->save(sub);
    archive.write("module/" + name, sub);
  }
  for (const auto& [name, o] : contents.optimizers) {
    torch::serialize::OutputArchive sub;
    o->save(sub);
    archive.write("optim/" + name, sub);
  }
  for (const auto& [name, t] : contents.tensors) archive.write("tensor/" + name, t);
  archive.save_to((tmp / "bundle.pt").string());

  nlohmann::ordered_json j;
  j["component"] = meta.component;
  j["step"] = meta.step;
  j["arch"] = meta.arch;
  j["seed"] = meta.seed;
  j["optimizer"] = meta.optimizer;
  j["config_hash"] = hex64(meta.config_hash);
  j["metrics"] = meta.metrics;
  if (!meta.frozen.empty()) {
    auto& f = j["frozen"];
    for (const auto& [name, sums] : meta.frozen) f[name] = {hex64(sums.first), hex64(sums.second)};
  }
  write_text(tmp / "meta.json", j.dump(2) + "\n");
  write_text(tmp / "config.json", cfg.to_json());
  write_text(tmp / "provenance.txt", provenance_line(meta) + "\n");

  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
  return final_dir;
}

std::optional<fs::path> latest(const fs::path& run, const std::string& component) {
  const auto dir = component_dir(run, component);
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<fs::path> best;
  std::string best_name;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (!e.is_directory() || name.size() != 8 || name.find_first_not_of("0123456789") != std::string::npos) continue;
    if (!fs::exists(e.path() / "bundle.pt") || !fs::exists(e.path() / "meta.json")) continue;
    if (!best || name > best_name) {
      best = e.path();
      best_name = name;
    }
  }
  return best;
}

Meta read_meta(const fs::path& bundle_dir) {
  Meta m;
  try {
    const auto j = nlohmann::json::parse(read_text(bundle_dir / "meta.json"));
    m.component = j.at("component").get<std::string>();
    m.step = j.at("step").get<std::int64_t>();
    m.arch = j.at("arch").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.optimizer = j.at("optimizer").get<std::string>();
    m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    m.metrics = j.at("metrics").get<std::map<std::string, double>>();
    if (j.contains("frozen")) {
      for (const auto& [name, sums] : j.at("frozen").items()) {
        m.frozen[name] = {std::stoull(sums.at(0).get<std::string>(), nullptr, 16),
                          std::stoull(sums.at(1).get<std::string>(), nullptr, 16)};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed checkpoint metadata in " + bundle_dir.string() + ": " + e.what());
  }
  return m;
}

Meta load(const fs::path& bundle_dir, Contents& contents, const std::string& expected_arch) {
  auto meta = read_meta(bundle_dir);
  if (meta.arch != expected_arch) {
    throw InvalidInput("checkpoint " + bundle_dir.string() + " was written for a different architecture");
  }
  torch::serialize::InputArchive archive;
  try {
    archive.load_from((bundle_dir / "bundle.pt").string());
    for (auto& [name, m] : contents.modules) {
      torch::serialize::InputArchive sub;
      archive.read("module/" + name, sub);
      m->load(sub);
    }
    for (auto& [name, o] : contents.optimizers) {
      torch::serialize::InputArchive sub;
      archive.read("optim/" + name, sub);
      o->load(sub);
    }
    for (auto& [name, t] : contents.tensors) archive.read("tensor/" + name, t);
  } catch (const c10::Error& e) {
    throw InvalidInput("cannot load checkpoint " + bundle_dir.string() + ": " + e.what_without_backtrace());
  }
  return meta;
}

std::string bundle_id(const fs::path& bundle_dir) {
  const auto bytes = read_text(bundle_dir / "bundle.pt");
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return hex64(h);
}

MetricsLog::MetricsLog(fs::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
}

void MetricsLog::append(const MetricRecord& r) const {
  nlohmann::ordered_json j;
  j["component"] = r.component;
  j["step"] = r.step;
  for (const auto& [k, v] : r.values) j[k] = v;
  std::ofstream f(path_, std::ios::app);
  if (!f) throw RuntimeFailure("cannot append to " + path_.string());
  f << j.dump() << "\n";
}

std::vector<MetricRecord> MetricsLog::read(const std::string& component) const {
  std::vector<MetricRecord> out;
  std::ifstream f(path_);
  if (!f) return out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MetricRecord r;
      r.component = j.at("component").get<std::string>();
      r.step = j.at("step").get<std::int64_t>();
      for (const auto& [k, v] : j.items()) {
        if (k != "component" && k != "step") r.values[k] = v.get<double>();
      }
      if (component.empty() || r.component == component) out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("malformed metrics log " + path_.string() + ": " + e.what());
    }
  }
  return out;
}

void MetricsLog::truncate(const std::string& component, std::int64_t from_step) const {
  if (!fs::exists(path_)) return;
  std::vector<std::string> keep;
  {
    std::ifstream f(path_);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (j.at("component").get<std::string>() == component && j.at("step").get<std::int64_t>() >= from_step) continue;
      keep.push_back(line);
    }
  }
  std::ofstream f(path_, std::ios::trunc);
  for (const auto& l : keep) f << l << "\n";
}

}  // namespace sfe::checkpoint

// SPDX-License-Identifier: Apache-2.0
#include "mbev/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

#include <json.hpp>

namespace mbev {

namespace {

constexpr char kMagic[8] = {'M', 'B', 'E', 'V', '-', 'D', 'S', '1'};
constexpr uint32_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_bytes(std::FILE* f, const void* p, size_t n) {
  MBEV_CHECK(std::fwrite(p, 1, n, f) == n, Err::TruncatedFile, "short write");
}
void read_bytes(std::FILE* f, void* p, size_t n, const char* what) {
  MBEV_CHECK(std::fread(p, 1, n, f) == n, Err::TruncatedFile,
             std::string("file truncated while reading ") + what);
}
void write_u32(std::FILE* f, uint32_t v) { write_bytes(f, &v, 4); }
uint32_t read_u32(std::FILE* f, const char* what) {
  uint32_t v = 0;
  read_bytes(f, &v, 4, what);
  return v;
}
void write_u64(std::FILE* f, uint64_t v) { write_bytes(f, &v, 8); }
uint64_t read_u64(std::FILE* f, const char* what) {
  uint64_t v = 0;
  read_bytes(f, &v, 8, what);
  return v;
}

nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json j;
  j["id"] = s.scene_id;
  j["ego"] = {{"dpsi", s.ego_motion.dpsi},
              {"dx", s.ego_motion.dx},
              {"dy", s.ego_motion.dy}};
  auto& objs = j["objects"] = nlohmann::json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"c", {o.center.x, o.center.y, o.center.z}},
                    {"s", {o.length, o.width, o.height}},
                    {"yaw", o.yaw},
                    {"v", {o.vx, o.vy}},
                    {"k", o.class_id}});
  }
  return j;
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.scene_id = j.at("id").get<int>();
  s.ego_motion.dpsi = j.at("ego").at("dpsi").get<double>();
  s.ego_motion.dx = j.at("ego").at("dx").get<double>();
  s.ego_motion.dy = j.at("ego").at("dy").get<double>();
  for (const auto& oj : j.at("objects")) {
    Object3D o;
    o.center = {oj.at("c")[0].get<double>(), oj.at("c")[1].get<double>(),
                oj.at("c")[2].get<double>()};
    o.length = oj.at("s")[0].get<double>();
    o.width = oj.at("s")[1].get<double>();
    o.height = oj.at("s")[2].get<double>();
    o.yaw = oj.at("yaw").get<double>();
    o.vx = oj.at("v")[0].get<double>();
    o.vy = oj.at("v")[1].get<double>();
    o.class_id = oj.at("k").get<int>();
    s.objects.push_back(o);
  }
  return s;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
  MBEV_CHECK(!ds.scenes.empty(), Err::BadConfig, "refusing to write an empty dataset");
  MBEV_CHECK(ds.scenes.size() == ds.frames.size(), Err::ShapeMismatch,
             "scene/frame count mismatch");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  MBEV_CHECK(f != nullptr, Err::TruncatedFile, "cannot open " + path + " for writing");

  write_bytes(f.get(), kMagic, 8);
  write_u32(f.get(), kVersion);
  write_u32(f.get(), uint32_t(ds.scenes.size()));
  write_u32(f.get(), kViews);
  write_u32(f.get(), kTimesteps);
  write_u32(f.get(), uint32_t(ds.height));
  write_u32(f.get(), uint32_t(ds.width));
  const size_t tensor_elems =
      size_t(kViews) * kTimesteps * ds.height * ds.width * 3;
  for (const auto& frame : ds.frames) {
    MBEV_CHECK(frame.data.size() == tensor_elems, Err::ShapeMismatch,
               "frame tensor size mismatch");
    write_bytes(f.get(), frame.data.data(), tensor_elems * sizeof(float));
  }
  nlohmann::json manifest;
  auto& scenes = manifest["scenes"] = nlohmann::json::array();
  for (const auto& s : ds.scenes) scenes.push_back(scene_to_json(s));
  const std::string text = manifest.dump();
  write_u64(f.get(), text.size());
  write_bytes(f.get(), text.data(), text.size());
}

Dataset read_dataset(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  MBEV_CHECK(f != nullptr, Err::TruncatedFile, "cannot open " + path);

  char magic[8];
  read_bytes(f.get(), magic, 8, "magic");
  MBEV_CHECK(std::memcmp(magic, kMagic, 8) == 0, Err::BadMagic,
             "not a dataset file: bad magic");
  const uint32_t version = read_u32(f.get(), "version");
  MBEV_CHECK(version == kVersion, Err::VersionMismatch,
             "unsupported dataset version " + std::to_string(version));
  const uint32_t n_scenes = read_u32(f.get(), "scene count");
  const uint32_t v = read_u32(f.get(), "view count");
  const uint32_t t = read_u32(f.get(), "timestep count");
  const uint32_t h = read_u32(f.get(), "image height");
  const uint32_t w = read_u32(f.get(), "image width");
  MBEV_CHECK(v == kViews && t == kTimesteps, Err::VersionMismatch,
             "dataset view/timestep layout mismatch");

  Dataset ds;
  ds.height = int(h);
  ds.width = int(w);
  const size_t tensor_elems = size_t(v) * t * h * w * 3;
  ds.frames.resize(n_scenes);
  for (auto& frame : ds.frames) {
    frame.height = int(h);
    frame.width = int(w);
    frame.data.resize(tensor_elems);
    read_bytes(f.get(), frame.data.data(), tensor_elems * sizeof(float),
               "image tensor");
  }
  const uint64_t manifest_len = read_u64(f.get(), "manifest length");
  std::string text(manifest_len, '\0');
  read_bytes(f.get(), text.data(), manifest_len, "manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Err::TruncatedFile, std::string("manifest parse failure: ") + e.what());
  }
  for (const auto& sj : manifest.at("scenes")) ds.scenes.push_back(scene_from_json(sj));
  MBEV_CHECK(ds.scenes.size() == n_scenes, Err::TruncatedFile,
             "manifest scene count disagrees with header");
  return ds;
}

}  // namespace mbev

// SPDX-License-Identifier: Apache-2.0
#include "mbev/model.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace mbev {

namespace {

constexpr char kMagic[8] = {'M', 'B', 'E', 'V', '-', 'C', 'K', '1'};
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
             std::string("checkpoint truncated while reading ") + what);
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

}  // namespace

void save_checkpoint(const std::string& path, Model& model,
                     const CheckpointMeta& meta) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  MBEV_CHECK(f != nullptr, Err::TruncatedFile, "cannot open " + path + " for writing");
  write_bytes(f.get(), kMagic, 8);
  write_u32(f.get(), kVersion);
  const std::string cfg = dump_experiment_config(model.config());
  write_u32(f.get(), uint32_t(cfg.size()));
  write_bytes(f.get(), cfg.data(), cfg.size());
  write_u64(f.get(), uint64_t(meta.epoch));
  write_u64(f.get(), meta.rng_state);
  const auto params = model.parameters();
  write_u32(f.get(), uint32_t(params.size()));
  for (const auto* p : params) {
    write_u32(f.get(), uint32_t(p->name.size()));
    write_bytes(f.get(), p->name.data(), p->name.size());
    write_u32(f.get(), 2);
    write_u32(f.get(), uint32_t(p->rows));
    write_u32(f.get(), uint32_t(p->cols));
    write_bytes(f.get(), p->v.data(), p->v.size() * sizeof(float));
  }
}

Model load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  MBEV_CHECK(f != nullptr, Err::MissingCheckpoint, "missing checkpoint " + path);
  char magic[8];
  read_bytes(f.get(), magic, 8, "magic");
  MBEV_CHECK(std::memcmp(magic, kMagic, 8) == 0, Err::BadMagic,
             "not a checkpoint file: bad magic");
  const uint32_t version = read_u32(f.get(), "version");
  MBEV_CHECK(version == kVersion, Err::VersionMismatch,
             "unsupported checkpoint version " + std::to_string(version));
  const uint32_t cfg_len = read_u32(f.get(), "config length");
  std::string cfg_text(cfg_len, '\0');
  read_bytes(f.get(), cfg_text.data(), cfg_len, "config snapshot");
  CheckpointMeta m;
  m.epoch = int(read_u64(f.get(), "epoch"));
  m.rng_state = read_u64(f.get(), "rng state");
  if (meta) *meta = m;

  Model model(parse_experiment_config(cfg_text), /*init_seed=*/0);
  auto params = model.parameters();
  const uint32_t n = read_u32(f.get(), "tensor count");
  MBEV_CHECK(n == params.size(), Err::VersionMismatch,
             "checkpoint tensor count does not match the model");
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t name_len = read_u32(f.get(), "tensor name length");
    std::string name(name_len, '\0');
    read_bytes(f.get(), name.data(), name_len, "tensor name");
    const uint32_t rank = read_u32(f.get(), "tensor rank");
    MBEV_CHECK(rank == 2, Err::VersionMismatch, "unexpected tensor rank");
    const uint32_t rows = read_u32(f.get(), "tensor rows");
    const uint32_t cols = read_u32(f.get(), "tensor cols");
    nn::ParamTensor<float>* target = nullptr;
    for (auto* p : params)
      if (p->name == name) {
        target = p;
        break;
      }
    MBEV_CHECK(target != nullptr, Err::VersionMismatch,
               "checkpoint holds unknown tensor " + name);
    MBEV_CHECK(int(rows) == target->rows && int(cols) == target->cols,
               Err::ShapeMismatch, "tensor shape mismatch for " + name);
    read_bytes(f.get(), target->v.data(), target->v.size() * sizeof(float),
               "tensor data");
  }
  return model;
}

bool checkpoint_exists(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (f) std::fclose(f);
  return f != nullptr;
}

}  // namespace mbev

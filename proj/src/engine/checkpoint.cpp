#include "tssl/engine/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace tssl::engine {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

void put_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t get_u32(std::istream& is, const char* what) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  TSSL_CHECK_CODE(is.good(), "io", "checkpoint truncated while reading " << what);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  TSSL_CHECK_CODE(os.good(), "io", "cannot open checkpoint for writing: " << path.string());
  os.write("TSSL", 4);
  put_u32(os, kCheckpointVersion);
  for (const auto& e : params) {
    put_u32(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const auto& shape = e.tensor.shape();
    put_u32(os, static_cast<uint32_t>(shape.size()));
    for (int d : shape) put_u32(os, static_cast<uint32_t>(d));
    const auto data = e.tensor.data();
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  os.flush();
  TSSL_CHECK_CODE(os.good(), "io", "failed writing checkpoint: " << path.string());
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  TSSL_CHECK_CODE(is.good(), "io", "cannot open checkpoint: " << path.string());
  char magic[4] = {};
  is.read(magic, 4);
  TSSL_CHECK_CODE(is.good() && std::memcmp(magic, "TSSL", 4) == 0, "io",
                  "not a checkpoint file (bad magic): " << path.string());
  const uint32_t version = get_u32(is, "version");
  TSSL_CHECK_CODE(version == kCheckpointVersion, "io",
                  "unsupported checkpoint version " << version);

  ParamSet out;
  while (true) {
    uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), sizeof name_len);
    if (is.eof()) break;
    TSSL_CHECK_CODE(is.good(), "io", "checkpoint truncated while reading entry header");
    TSSL_CHECK_CODE(name_len > 0 && name_len < 4096, "io",
                    "implausible checkpoint name length " << name_len);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    TSSL_CHECK_CODE(is.good(), "io", "checkpoint truncated while reading name");
    const uint32_t rank = get_u32(is, "rank");
    TSSL_CHECK_CODE(rank <= 8, "io", "implausible tensor rank " << rank);
    Shape shape(rank);
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(get_u32(is, "extent"));
      numel *= shape[i];
    }
    std::vector<float> data(static_cast<size_t>(numel));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    TSSL_CHECK_CODE(is.good() || (is.eof() && is.gcount() ==
                                                  static_cast<std::streamsize>(data.size() *
                                                                               sizeof(float))),
                    "io", "checkpoint truncated while reading payload of '" << name << "'");
    out.add(std::move(name), Tensor::from_data(std::move(shape), std::move(data), false));
  }
  return out;
}

uint64_t file_fingerprint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  TSSL_CHECK_CODE(is.good(), "io", "cannot open file for fingerprint: " << path.string());
  char buf[65536];
  uint64_t h = 0xcbf29ce484222325ULL;
  while (is.good()) {
    is.read(buf, sizeof buf);
    h = fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
  }
  return h;
}

}  // namespace tssl::engine

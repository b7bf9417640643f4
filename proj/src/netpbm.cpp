#include "tssl/netpbm.hpp"

#include <cmath>
#include <fstream>

namespace tssl::netpbm {

namespace {

uint8_t quantize(float v) {
  TSSL_CHECK(std::isfinite(v), "cannot quantize non-finite pixel value");
  const long q = std::lround(static_cast<double>(v) * 255.0);
  return static_cast<uint8_t>(std::clamp(q, 0L, 255L));
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& is, const std::filesystem::path& path) {
  std::string tok;
  int c = is.get();
  while (is.good()) {
    if (c == '#') {
      while (is.good() && c != '\n') c = is.get();
      c = is.get();
      continue;
    }
    if (!std::isspace(c)) break;
    c = is.get();
  }
  while (is.good() && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = is.get();
  }
  TSSL_CHECK_CODE(!tok.empty(), "io", "malformed netpbm header in " << path.string());
  return tok;
}

int parse_dim(const std::string& tok, const std::filesystem::path& path) {
  size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  TSSL_CHECK_CODE(pos == tok.size() && v > 0, "io",
                  "invalid netpbm header field '" << tok << "' in " << path.string());
  return v;
}

struct Header {
  int width, height, maxval;
};

Header read_header(std::istream& is, const char* magic, const std::filesystem::path& path) {
  const std::string m = next_token(is, path);
  TSSL_CHECK_CODE(m == magic, "io",
                  path.string() << ": expected " << magic << " file, got '" << m << "'");
  Header h;
  h.width = parse_dim(next_token(is, path), path);
  h.height = parse_dim(next_token(is, path), path);
  h.maxval = parse_dim(next_token(is, path), path);
  TSSL_CHECK_CODE(h.maxval == 255, "io",
                  path.string() << ": only 8-bit netpbm is supported, maxval " << h.maxval);
  return h;
}

std::vector<uint8_t> read_payload(std::istream& is, size_t n, const std::filesystem::path& path) {
  std::vector<uint8_t> buf(n);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  TSSL_CHECK_CODE(is.gcount() == static_cast<std::streamsize>(n), "io",
                  path.string() << ": truncated pixel payload");
  return buf;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const engine::Tensor& image) {
  TSSL_CHECK(image.rank() == 3 && image.dim(0) == 3,
             "write_ppm expects [3,H,W], got " << engine::shape_str(image.shape()));
  const int H = image.dim(1), W = image.dim(2);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  TSSL_CHECK_CODE(os.good(), "io", "cannot open for writing: " << path.string());
  os << "P6\n" << W << " " << H << "\n255\n";
  const float* src = image.data().data();
  const size_t plane = static_cast<size_t>(H) * W;
  std::vector<uint8_t> row(static_cast<size_t>(W) * 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[static_cast<size_t>(x) * 3 + c] =
            quantize(src[static_cast<size_t>(c) * plane + static_cast<size_t>(y) * W + x]);
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  os.flush();
  TSSL_CHECK_CODE(os.good(), "io", "failed writing " << path.string());
}

engine::Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  TSSL_CHECK_CODE(is.good(), "io", "cannot open: " << path.string());
  const Header h = read_header(is, "P6", path);
  const size_t plane = static_cast<size_t>(h.height) * h.width;
  const auto buf = read_payload(is, plane * 3, path);
  std::vector<float> data(plane * 3);
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      const size_t p = static_cast<size_t>(y) * h.width + x;
      for (int c = 0; c < 3; ++c) {
        data[static_cast<size_t>(c) * plane + p] =
            static_cast<float>(buf[p * 3 + static_cast<size_t>(c)]) / 255.0f;
      }
    }
  }
  return engine::Tensor::from_data({3, h.height, h.width}, std::move(data), false);
}

void write_pgm(const std::filesystem::path& path, const engine::IntMask& mask) {
  TSSL_CHECK(mask.shape.size() == 2,
             "write_pgm expects [H,W], got " << engine::shape_str(mask.shape));
  const int H = mask.shape[0], W = mask.shape[1];
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  TSSL_CHECK_CODE(os.good(), "io", "cannot open for writing: " << path.string());
  os << "P5\n" << W << " " << H << "\n255\n";
  std::vector<uint8_t> buf(mask.v.size());
  for (size_t i = 0; i < mask.v.size(); ++i) {
    const int32_t v = mask.v[i];
    TSSL_CHECK(v >= 0 && v <= 255, "mask value " << v << " does not fit 8-bit storage");
    buf[i] = static_cast<uint8_t>(v);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  os.flush();
  TSSL_CHECK_CODE(os.good(), "io", "failed writing " << path.string());
}

engine::IntMask read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  TSSL_CHECK_CODE(is.good(), "io", "cannot open: " << path.string());
  const Header h = read_header(is, "P5", path);
  const auto buf = read_payload(is, static_cast<size_t>(h.height) * h.width, path);
  engine::IntMask mask;
  mask.shape = {h.height, h.width};
  mask.v.assign(buf.begin(), buf.end());
  return mask;
}

}  // namespace tssl::netpbm

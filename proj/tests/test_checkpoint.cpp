#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "tssl/engine/checkpoint.hpp"

using namespace tssl::engine;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  const fs::path dir = fs::temp_directory_path() / "tssl_ckpt_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round-trip is bit-exact, order preserved") {
    tssl::Rng rng(1);
    ParamSet ps;
    ps.add("f.conv1.weight", testutil::rand_tensor({4, 3, 3, 3}, rng, -2, 2, true));
    ps.add("f.conv1.bias", testutil::rand_tensor({4}, rng, -2, 2, true));
    ps.add("teacher.f.head.weight", testutil::rand_tensor({2, 4, 1, 1}, rng, -2, 2, false));

    const fs::path path = tmp_dir() / "roundtrip.tssl";
    save_checkpoint(path, ps);
    const ParamSet loaded = load_checkpoint(path);

    REQUIRE(loaded.size() == ps.size());
    for (size_t i = 0; i < ps.size(); ++i) {
      CHECK(loaded.at(i).name == ps.at(i).name);
      CHECK(loaded.at(i).tensor.shape() == ps.at(i).tensor.shape());
      const auto a = ps.at(i).tensor.data(), b = loaded.at(i).tensor.data();
      for (size_t j = 0; j < a.size(); ++j) {
        // bit-exact, not approximately equal
        CHECK(std::memcmp(&a[j], &b[j], sizeof(float)) == 0);
      }
    }

    // save(load(x)) reproduces the file byte for byte
    const fs::path path2 = tmp_dir() / "roundtrip2.tssl";
    save_checkpoint(path2, loaded);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    CHECK(file_fingerprint(path) == file_fingerprint(path2));
  }

  TEST_CASE("special float values survive") {
    ParamSet ps;
    Tensor t = Tensor::from_data({4}, {0.0f, -0.0f, std::numeric_limits<float>::denorm_min(),
                                       std::numeric_limits<float>::max()});
    ps.add("t", t);
    const fs::path path = tmp_dir() / "special.tssl";
    save_checkpoint(path, ps);
    const ParamSet back = load_checkpoint(path);
    const auto v = back.at(0).tensor.data();
    CHECK(std::memcmp(&v[0], &t.data()[0], 4 * sizeof(float)) == 0);
  }

  TEST_CASE("corrupt files are rejected with io errors") {
    const fs::path dir = tmp_dir();
    const fs::path missing = dir / "nope.tssl";
    CHECK_THROWS_AS(load_checkpoint(missing), tssl::Error);

    const fs::path bad_magic = dir / "bad_magic.tssl";
    std::ofstream(bad_magic, std::ios::binary) << "NOPE" << std::string(16, '\0');
    CHECK_THROWS_AS(load_checkpoint(bad_magic), tssl::Error);

    // truncate a valid checkpoint mid-payload
    ParamSet ps;
    ps.add("w", Tensor::from_data({8}, std::vector<float>(8, 1.0f)));
    const fs::path good = dir / "good.tssl";
    save_checkpoint(good, ps);
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const fs::path cut = dir / "cut.tssl";
    std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() - 5);
    CHECK_THROWS_AS(load_checkpoint(cut), tssl::Error);

    try {
      load_checkpoint(cut);
      FAIL("unreachable");
    } catch (const tssl::Error& e) {
      CHECK(e.code() == "io");
    }
  }

  TEST_CASE("fingerprint changes when a byte changes") {
    const fs::path dir = tmp_dir();
    const fs::path a = dir / "fp_a.bin", b = dir / "fp_b.bin";
    std::ofstream(a, std::ios::binary) << "same same but";
    std::ofstream(b, std::ios::binary) << "same same but";
    CHECK(file_fingerprint(a) == file_fingerprint(b));
    std::ofstream(b, std::ios::binary) << "same same bUt";
    CHECK(file_fingerprint(a) != file_fingerprint(b));
  }
}

#include "tssl/common.hpp"

#include <cstdlib>
#include <thread>

namespace tssl {

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

int resolved_thread_count() {
  int n = 0;
  if (const char* env = std::getenv("TSSL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    TSSL_CHECK_CODE(end != env && *end == '\0' && v >= 0, "config",
                    "TSSL_THREADS must be a non-negative integer, got '" << env << "'");
    n = static_cast<int>(v);
  }
  if (n == 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
  }
  return n;
}

}  // namespace tssl

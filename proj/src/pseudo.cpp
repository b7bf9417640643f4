#include "tssl/pseudo.hpp"

#include <fstream>

#include "tssl/netpbm.hpp"

namespace tssl::trainer {

void PseudoMaskStore::add(const std::string& id, engine::IntMask mask) {
  TSSL_CHECK(!id.empty(), "pseudo-mask id must be non-empty");
  TSSL_CHECK(find(id) == nullptr, "duplicate pseudo-mask id '" << id << "'");
  masks_.emplace_back(id, std::move(mask));
}

const engine::IntMask* PseudoMaskStore::find(const std::string& id) const {
  for (const auto& [mid, mask] : masks_) {
    if (mid == id) return &mask;
  }
  return nullptr;
}

void PseudoMaskStore::require_complete(const data::TrainView& view) const {
  for (const auto& s : view.samples) {
    const auto* m = find(s.id);
    TSSL_CHECK_CODE(m != nullptr, "sequencing",
                    "pseudo-mask store (tag '" << tag_ << "') has no mask for sample '" << s.id
                                               << "'");
    TSSL_CHECK_CODE(m->shape == engine::Shape({view.height, view.width}), "sequencing",
                    "pseudo-mask for '" << s.id << "' has shape " << engine::shape_str(m->shape)
                                        << ", expected [" << view.height << "," << view.width
                                        << "]");
  }
}

void PseudoMaskStore::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  TSSL_CHECK_CODE(std::filesystem::is_directory(dir), "io",
                  "cannot create pseudo-mask directory " << dir.string());
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  TSSL_CHECK_CODE(manifest.good(), "io", "cannot write " << (dir / "manifest.txt").string());
  manifest << "tag " << tag_ << "\n";
  manifest << "checkpoint " << checkpoint_hex_ << "\n";
  for (const auto& [id, mask] : masks_) {
    netpbm::write_pgm(dir / (id + ".pgm"), mask);
    manifest << "mask " << id << "\n";
  }
  manifest.flush();
  TSSL_CHECK_CODE(manifest.good(), "io", "failed writing " << (dir / "manifest.txt").string());
}

PseudoMaskStore PseudoMaskStore::load(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  TSSL_CHECK_CODE(manifest.good(), "sequencing",
                  "no pseudo-mask store at " << dir.string()
                                             << " (run the producing stage first)");
  PseudoMaskStore store;
  std::string line;
  size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "tag") {
      ls >> store.tag_;
    } else if (key == "checkpoint") {
      ls >> store.checkpoint_hex_;
    } else if (key == "mask") {
      std::string id;
      ls >> id;
      TSSL_CHECK_CODE(!id.empty(), "io",
                      (dir / "manifest.txt").string() << ":" << line_no << ": empty mask id");
      store.add(id, netpbm::read_pgm(dir / (id + ".pgm")));
    } else {
      TSSL_CHECK_CODE(false, "io", (dir / "manifest.txt").string()
                                       << ":" << line_no << ": unknown entry '" << key << "'");
    }
  }
  TSSL_CHECK_CODE(!store.tag_.empty(), "io",
                  (dir / "manifest.txt").string() << ": missing 'tag' line");
  return store;
}

}  // namespace tssl::trainer

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tssl/data.hpp"
#include "tssl/engine/tensor.hpp"

namespace tssl::trainer {

// Pseudo-masks produced by one generation pass, keyed by sample id, plus
// provenance (which pass produced them and a fingerprint of the checkpoint
// used). Persisted as a directory of PGM masks and a manifest.
class PseudoMaskStore {
 public:
  PseudoMaskStore() = default;
  PseudoMaskStore(std::string tag, std::string checkpoint_hex)
      : tag_(std::move(tag)), checkpoint_hex_(std::move(checkpoint_hex)) {}

  const std::string& tag() const { return tag_; }
  const std::string& checkpoint_hex() const { return checkpoint_hex_; }
  size_t size() const { return masks_.size(); }

  void add(const std::string& id, engine::IntMask mask);
  const engine::IntMask* find(const std::string& id) const;
  const std::vector<std::pair<std::string, engine::IntMask>>& entries() const { return masks_; }

  // Sequencing error unless every id in the view has a mask of the right size.
  void require_complete(const data::TrainView& view) const;

  void save(const std::filesystem::path& dir) const;
  static PseudoMaskStore load(const std::filesystem::path& dir);

 private:
  std::string tag_;
  std::string checkpoint_hex_;
  std::vector<std::pair<std::string, engine::IntMask>> masks_;
};

}  // namespace tssl::trainer

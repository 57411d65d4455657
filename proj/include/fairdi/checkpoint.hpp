#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "fairdi/nnkernel.hpp"

namespace fairdi {

inline constexpr int kCheckpointVersion = 1;

// On-disk model state. A head-only checkpoint (teacher, student) names the
// backbone checkpoint it was trained on through backbone_ref.
struct Checkpoint {
  std::string kind;  // "backbone", "teacher", "student", "erm", ...
  std::optional<DenseNet> backbone;
  std::optional<Head> head;
  std::uint64_t seed = 0;
  std::string backbone_ref;
  std::optional<int> group;
};

nlohmann::json net_to_json(const DenseNet& net);
DenseNet net_from_json(const nlohmann::json& j);
nlohmann::json head_to_json(const Head& head);
Head head_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fairdi

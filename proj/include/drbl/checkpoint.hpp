#ifndef DRBL_CHECKPOINT_HPP
#define DRBL_CHECKPOINT_HPP

#include <filesystem>
#include <iosfwd>
#include <string>

#include "drbl/training.hpp"

namespace drbl {

inline constexpr const char* kArtifactVersion = "1.0.0";
inline constexpr int kCheckpointFormat = 1;

/// Line-oriented text dump of parameters, buffers, Adam moments, step and
/// epoch counters and the generator state. Reals are written as C99 hex
/// floats, so the file is exact and independent of host byte order.
///
///   drbl-checkpoint 1
///   artifact-version 1.0.0
///   epochs-done <n>
///   adam-step <t>
///   rng <engine state>
///   section <params|buffers|adam-m|adam-v> <count>
///   <path> <rank> <dims...> <values...>
///   end
std::string serialize_checkpoint(const TrainState& state);
TrainState parse_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

} // namespace drbl

#endif // DRBL_CHECKPOINT_HPP

#pragma once

// Network checkpoints: `<name>.manifest` (key=value: kind, layer widths,
// activations, feature_dim, seed, parameter shapes) next to `<name>.bin`, the
// concatenation of all parameter values as little-endian IEEE-754 doubles in
// manifest order. Loading reproduces every parameter bit-exactly.

#include <cstdint>
#include <filesystem>
#include <string>

#include "hidfd/kvfile.hpp"
#include "hidfd/models.hpp"

namespace hidfd {

void save_checkpoint(const std::filesystem::path& dir, const std::string& name,
                     const Classifier& net, std::uint64_t seed);
void save_checkpoint(const std::filesystem::path& dir, const std::string& name,
                     const AdcDiscriminator& net, std::uint64_t seed);
void save_checkpoint(const std::filesystem::path& dir, const std::string& name,
                     const ConditionalGenerator& net, std::uint64_t seed);

Classifier load_classifier(const std::filesystem::path& dir, const std::string& name);
AdcDiscriminator load_discriminator(const std::filesystem::path& dir, const std::string& name);
ConditionalGenerator load_generator(const std::filesystem::path& dir, const std::string& name);

KeyValues read_checkpoint_manifest(const std::filesystem::path& dir, const std::string& name);

// FNV-1a 64 over the raw parameter bytes; stable across save/load.
std::uint64_t parameter_hash(const std::vector<const Parameter*>& params);

}  // namespace hidfd

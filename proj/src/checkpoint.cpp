#include "hidfd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hidfd/errors.hpp"

namespace hidfd {
namespace {

std::filesystem::path manifest_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / (name + ".manifest");
}

std::filesystem::path values_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / (name + ".bin");
}

std::uint64_t to_le(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little) {
    return bits;
  } else {
    return __builtin_bswap64(bits);
  }
}

std::string join_widths(const std::vector<std::size_t>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) out += (i ? "," : "") + std::to_string(widths[i]);
  return out;
}

std::string join_activations(const std::vector<Activation>& acts) {
  std::string out;
  for (std::size_t i = 0; i < acts.size(); ++i) out += (i ? "," : "") + activation_name(acts[i]);
  return out;
}

std::vector<std::size_t> parse_widths(const std::string& s, const std::string& origin) {
  std::vector<std::size_t> out;
  for (const auto& tok : split(s, ',')) out.push_back(parse_u64(tok, origin + " widths"));
  return out;
}

std::vector<Activation> parse_activations(const std::string& s) {
  std::vector<Activation> out;
  for (const auto& tok : split(s, ',')) out.push_back(parse_activation(tok));
  return out;
}

void write_checkpoint(const std::filesystem::path& dir, const std::string& name, KeyValues meta,
                      const std::vector<const Parameter*>& params) {
  std::filesystem::create_directories(dir);
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    meta.emplace_back("param." + std::to_string(i),
                      params[i]->name + ":" + shape_string(params[i]->value.shape()));
    total += params[i]->value.size();
  }
  meta.emplace_back("param_count", std::to_string(params.size()));
  meta.emplace_back("value_count", std::to_string(total));
  write_text_file(manifest_path(dir, name), format_key_values(meta));

  std::ofstream out(values_path(dir, name), std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint: " + values_path(dir, name).string());
  for (const Parameter* p : params) {
    for (double v : p->value.data()) {
      const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
  if (!out) throw ConfigError("short write: " + values_path(dir, name).string());
}

void read_values(const std::filesystem::path& dir, const std::string& name, const KeyValues& meta,
                 const std::vector<Parameter*>& params) {
  const std::string origin = manifest_path(dir, name).string();
  const auto count = parse_u64(require_value(meta, "param_count", origin), "param_count");
  if (count != params.size()) {
    throw ConfigError(origin + ": " + std::to_string(count) + " parameters recorded, architecture has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string expect = params[i]->name + ":" + shape_string(params[i]->value.shape());
    const std::string& got = require_value(meta, "param." + std::to_string(i), origin);
    if (got != expect) throw ConfigError(origin + ": parameter " + got + " expected " + expect);
  }
  std::ifstream in(values_path(dir, name), std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint values: " + values_path(dir, name).string());
  for (Parameter* p : params) {
    for (double& v : p->value.data()) {
      std::uint64_t bits = 0;
      if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
        throw ConfigError("truncated checkpoint: " + values_path(dir, name).string());
      }
      v = std::bit_cast<double>(to_le(bits));
    }
    p->zero_grad();
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ConfigError("trailing data in checkpoint: " + values_path(dir, name).string());
  }
}

void require_kind(const KeyValues& meta, const std::string& kind, const std::string& origin) {
  const std::string& got = require_value(meta, "kind", origin);
  if (got != kind) throw ConfigError(origin + ": expected kind " + kind + ", found " + got);
}

FeatureNetwork feature_network_from(const KeyValues& meta, const std::string& prefix,
                                    const std::string& name, const std::string& origin) {
  return FeatureNetwork(name, parse_widths(require_value(meta, prefix + "widths", origin), origin),
                        parse_activations(require_value(meta, prefix + "activations", origin)));
}

std::string network_name(const FeatureNetwork& net) {
  const std::string& n = net.layers().front().weight.name;
  return n.substr(0, n.find('.'));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const std::string& name,
                     const Classifier& net, std::uint64_t seed) {
  KeyValues meta{{"kind", "classifier"},
                 {"seed", std::to_string(seed)},
                 {"phi.name", network_name(net.phi)},
                 {"phi.widths", join_widths(net.phi.widths())},
                 {"phi.activations", join_activations(net.phi.activations())},
                 {"feature_dim", std::to_string(net.phi.feature_dim())},
                 {"num_classes", std::to_string(net.head.num_classes())},
                 {"head_bias", net.head.bias ? "1" : "0"},
                 {"head_frozen", net.head.frozen() ? "1" : "0"}};
  write_checkpoint(dir, name, std::move(meta), net.parameters());
}

void save_checkpoint(const std::filesystem::path& dir, const std::string& name,
                     const AdcDiscriminator& net, std::uint64_t seed) {
  KeyValues meta{{"kind", "adc_discriminator"},
                 {"seed", std::to_string(seed)},
                 {"phi.name", network_name(net.phi)},
                 {"phi.widths", join_widths(net.phi.widths())},
                 {"phi.activations", join_activations(net.phi.activations())},
                 {"feature_dim", std::to_string(net.phi.feature_dim())},
                 {"num_classes", std::to_string(net.num_classes())}};
  write_checkpoint(dir, name, std::move(meta), net.parameters());
}

void save_checkpoint(const std::filesystem::path& dir, const std::string& name,
                     const ConditionalGenerator& net, std::uint64_t seed) {
  KeyValues meta{{"kind", "conditional_generator"},
                 {"seed", std::to_string(seed)},
                 {"body.name", network_name(net.body)},
                 {"body.widths", join_widths(net.body.widths())},
                 {"body.activations", join_activations(net.body.activations())},
                 {"num_classes", std::to_string(net.num_classes())},
                 {"z_dim", std::to_string(net.z_dim())},
                 {"embed_dim", std::to_string(net.embed_dim())}};
  write_checkpoint(dir, name, std::move(meta), net.parameters());
}

KeyValues read_checkpoint_manifest(const std::filesystem::path& dir, const std::string& name) {
  return read_key_values(manifest_path(dir, name));
}

Classifier load_classifier(const std::filesystem::path& dir, const std::string& name) {
  const KeyValues meta = read_checkpoint_manifest(dir, name);
  const std::string origin = manifest_path(dir, name).string();
  require_kind(meta, "classifier", origin);
  FeatureNetwork phi =
      feature_network_from(meta, "phi.", require_value(meta, "phi.name", origin), origin);
  const auto classes = parse_u64(require_value(meta, "num_classes", origin), "num_classes");
  const bool bias = require_value(meta, "head_bias", origin) == "1";
  Classifier net(std::move(phi), ClassifierHead(parse_u64(require_value(meta, "feature_dim", origin), "feature_dim"),
                                                classes, bias));
  read_values(dir, name, meta, net.parameters());
  if (require_value(meta, "head_frozen", origin) == "1") net.freeze_head();
  return net;
}

AdcDiscriminator load_discriminator(const std::filesystem::path& dir, const std::string& name) {
  const KeyValues meta = read_checkpoint_manifest(dir, name);
  const std::string origin = manifest_path(dir, name).string();
  require_kind(meta, "adc_discriminator", origin);
  FeatureNetwork phi =
      feature_network_from(meta, "phi.", require_value(meta, "phi.name", origin), origin);
  AdcDiscriminator net(std::move(phi),
                       parse_u64(require_value(meta, "num_classes", origin), "num_classes"));
  read_values(dir, name, meta, net.parameters());
  return net;
}

ConditionalGenerator load_generator(const std::filesystem::path& dir, const std::string& name) {
  const KeyValues meta = read_checkpoint_manifest(dir, name);
  const std::string origin = manifest_path(dir, name).string();
  require_kind(meta, "conditional_generator", origin);
  FeatureNetwork body =
      feature_network_from(meta, "body.", require_value(meta, "body.name", origin), origin);
  ConditionalGenerator net(parse_u64(require_value(meta, "num_classes", origin), "num_classes"),
                           parse_u64(require_value(meta, "z_dim", origin), "z_dim"),
                           parse_u64(require_value(meta, "embed_dim", origin), "embed_dim"),
                           std::move(body));
  read_values(dir, name, meta, net.parameters());
  return net;
}

std::uint64_t parameter_hash(const std::vector<const Parameter*>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter* p : params) {
    for (double v : p->value.data()) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace hidfd

#include "hidfd/config.hpp"

#include <functional>

#include "hidfd/errors.hpp"

namespace hidfd {
namespace {

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::vector<std::size_t> parse_sizes(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  for (const auto& part : split(s, ',')) out.push_back(parse_u64(part, what));
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  if (s.empty()) return out;
  for (const auto& part : split(s, ',')) out.push_back(parse_double(part, what));
  return out;
}

bool parse_bool(const std::string& s, const std::string& what) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(what + ": expected true or false, got '" + s + "'");
}

template <class T>
Field size_field(std::string key, T ExperimentConfig::*outer, std::size_t T::*inner) {
  return {key, [=](const ExperimentConfig& c) { return std::to_string(c.*outer.*inner); },
          [=](ExperimentConfig& c, const std::string& v) { c.*outer.*inner = parse_u64(v, key); }};
}

template <class T>
Field double_field(std::string key, T ExperimentConfig::*outer, double T::*inner) {
  return {key, [=](const ExperimentConfig& c) { return format_double(c.*outer.*inner); },
          [=](ExperimentConfig& c, const std::string& v) { c.*outer.*inner = parse_double(v, key); }};
}

template <class T>
Field bool_field(std::string key, T ExperimentConfig::*outer, bool T::*inner) {
  return {key, [=](const ExperimentConfig& c) { return std::string(c.*outer.*inner ? "true" : "false"); },
          [=](ExperimentConfig& c, const std::string& v) { c.*outer.*inner = parse_bool(v, key); }};
}

Field top_size(std::string key, std::size_t ExperimentConfig::*m) {
  return {key, [=](const ExperimentConfig& c) { return std::to_string(c.*m); },
          [=](ExperimentConfig& c, const std::string& v) { c.*m = parse_u64(v, key); }};
}

Field top_double(std::string key, double ExperimentConfig::*m) {
  return {key, [=](const ExperimentConfig& c) { return format_double(c.*m); },
          [=](ExperimentConfig& c, const std::string& v) { c.*m = parse_double(v, key); }};
}

Field top_sizes(std::string key, std::vector<std::size_t> ExperimentConfig::*m) {
  return {key, [=](const ExperimentConfig& c) { return join_sizes(c.*m); },
          [=](ExperimentConfig& c, const std::string& v) { c.*m = parse_sizes(v, key); }};
}

void add_distill_fields(std::vector<Field>& f, const std::string& prefix,
                        DistillConfig ExperimentConfig::*m) {
  f.push_back(size_field(prefix + ".epochs", m, &DistillConfig::epochs));
  f.push_back(size_field(prefix + ".batch_size", m, &DistillConfig::batch_size));
  f.push_back(double_field(prefix + ".momentum", m, &DistillConfig::momentum));
  f.push_back(double_field(prefix + ".weight_decay", m, &DistillConfig::weight_decay));
  const std::string lr = prefix + ".lr";
  f.push_back({lr, [=](const ExperimentConfig& c) { return format_double((c.*m).schedule.initial); },
               [=](ExperimentConfig& c, const std::string& v) {
                 (c.*m).schedule.initial = parse_double(v, lr);
               }});
  const std::string factor = prefix + ".lr_factor";
  f.push_back({factor,
               [=](const ExperimentConfig& c) { return format_double((c.*m).schedule.factor); },
               [=](ExperimentConfig& c, const std::string& v) {
                 (c.*m).schedule.factor = parse_double(v, factor);
               }});
  const std::string ms = prefix + ".lr_milestones";
  f.push_back({ms,
               [=](const ExperimentConfig& c) {
                 return join_doubles((c.*m).schedule.milestone_fractions);
               },
               [=](ExperimentConfig& c, const std::string& v) {
                 (c.*m).schedule.milestone_fractions = parse_doubles(v, ms);
               }});
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    using C = ExperimentConfig;
    f.push_back({"seed", [](const C& c) { return std::to_string(c.seed); },
                 [](C& c, const std::string& v) { c.seed = parse_u64(v, "seed"); }});
    f.push_back({"out", [](const C& c) { return c.out; },
                 [](C& c, const std::string& v) { c.out = v; }});

    f.push_back(top_size("data.num_classes", &C::num_classes));
    f.push_back(top_size("data.dim", &C::data_dim));
    f.push_back(top_size("data.per_class", &C::per_class));
    f.push_back(top_double("data.spread", &C::spread));
    f.push_back(top_double("data.covariance", &C::covariance));
    f.push_back(top_double("data.test_fraction", &C::test_fraction));
    f.push_back(top_double("rho", &C::rho));
    f.push_back(top_double("imbalance_ratio", &C::imbalance_ratio));

    f.push_back(top_sizes("teacher.hidden", &C::teacher_hidden));
    f.push_back(top_sizes("student.hidden", &C::student_hidden));
    f.push_back(top_size("feature_dim", &C::feature_dim));
    add_distill_fields(f, "teacher", &C::teacher);

    f.push_back(size_field("gan.z_dim", &C::gan_arch, &GanArchitecture::z_dim));
    f.push_back(size_field("gan.embed_dim", &C::gan_arch, &GanArchitecture::embed_dim));
    f.push_back({"gan.generator_hidden",
                 [](const C& c) { return join_sizes(c.gan_arch.generator_hidden); },
                 [](C& c, const std::string& v) {
                   c.gan_arch.generator_hidden = parse_sizes(v, "gan.generator_hidden");
                 }});
    f.push_back({"gan.discriminator_hidden",
                 [](const C& c) { return join_sizes(c.gan_arch.discriminator_hidden); },
                 [](C& c, const std::string& v) {
                   c.gan_arch.discriminator_hidden = parse_sizes(v, "gan.discriminator_hidden");
                 }});
    f.push_back(double_field("gan.lambda_d", &C::gan, &GanTrainConfig::lambda_d));
    f.push_back(double_field("gan.lambda_g", &C::gan, &GanTrainConfig::lambda_g));
    f.push_back(double_field("gan.q", &C::gan, &GanTrainConfig::q));
    f.push_back(double_field("gan.gamma", &C::gan, &GanTrainConfig::gamma));
    f.push_back(double_field("gan.lr_g", &C::gan, &GanTrainConfig::lr_g));
    f.push_back(double_field("gan.lr_d", &C::gan, &GanTrainConfig::lr_d));
    f.push_back(double_field("gan.beta1", &C::gan, &GanTrainConfig::beta1));
    f.push_back(double_field("gan.beta2", &C::gan, &GanTrainConfig::beta2));
    f.push_back(size_field("gan.epochs", &C::gan, &GanTrainConfig::epochs));
    f.push_back(size_field("gan.batch_size", &C::gan, &GanTrainConfig::batch_size));
    f.push_back(double_field("gan.initial_frequency", &C::gan, &GanTrainConfig::initial_frequency));
    f.push_back(double_field("gan.frequency_floor", &C::gan, &GanTrainConfig::frequency_floor));
    f.push_back({"gan.frequency_source",
                 [](const C& c) {
                   return std::string(c.gan.frequency_source == FrequencySource::teacher
                                          ? "teacher"
                                          : "conditioning");
                 },
                 [](C& c, const std::string& v) {
                   if (v == "teacher") {
                     c.gan.frequency_source = FrequencySource::teacher;
                   } else if (v == "conditioning") {
                     c.gan.frequency_source = FrequencySource::conditioning;
                   } else {
                     throw ConfigError("gan.frequency_source: expected teacher or conditioning, got '" +
                                       v + "'");
                   }
                 }});
    f.push_back(bool_field("gan.disable_blend", &C::gan, &GanTrainConfig::disable_blend));
    f.push_back(bool_field("gan.disable_trans", &C::gan, &GanTrainConfig::disable_trans));
    f.push_back(bool_field("gan.disable_reg", &C::gan, &GanTrainConfig::disable_reg));
    f.push_back(bool_field("gan.invert_blend_gate", &C::gan, &GanTrainConfig::invert_blend_gate));
    f.push_back(size_field("gan.eval_per_class", &C::gan, &GanTrainConfig::eval_per_class));
    f.push_back(top_size("synthetic_per_class", &C::synthetic_per_class));

    f.push_back(size_field("student.inflation", &C::student, &DistillConfig::inflation));
    add_distill_fields(f, "student", &C::student);
    f.push_back(top_size("tvd_bins", &C::tvd_bins));
    return f;
  }();
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (num_classes < 2) throw ConfigError("data.num_classes must be at least 2");
  if (data_dim == 0) throw ConfigError("data.dim must be positive");
  if (per_class == 0) throw ConfigError("data.per_class must be positive");
  if (!(covariance > 0.0)) throw ConfigError("data.covariance must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("data.test_fraction must lie in (0, 1)");
  }
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in (0, 1]");
  if (!(imbalance_ratio >= 1.0)) throw ConfigError("imbalance_ratio must be at least 1");
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (synthetic_per_class == 0) throw ConfigError("synthetic_per_class must be positive");
  if (tvd_bins == 0) throw ConfigError("tvd_bins must be positive");
  if (out.empty()) throw ConfigError("out must not be empty");
  teacher.validate();
  student.validate();
  gan.validate();
}

KeyValues to_key_values(const ExperimentConfig& config) {
  KeyValues kv;
  for (const Field& f : fields()) kv.emplace_back(f.key, f.get(config));
  return kv;
}

ExperimentConfig apply_key_values(ExperimentConfig base, const KeyValues& kv,
                                  const std::string& origin) {
  for (const auto& [key, value] : kv) {
    const Field* field = nullptr;
    for (const Field& f : fields()) {
      if (f.key == key) field = &f;
    }
    if (!field) throw ConfigError(origin + ": unknown key '" + key + "'");
    field->set(base, value);
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return apply_key_values(ExperimentConfig{}, read_key_values(path), path.string());
}

std::string format_config(const ExperimentConfig& config) {
  return format_key_values(to_key_values(config));
}

ExperimentConfig apply_override(ExperimentConfig config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  return apply_key_values(std::move(config),
                          {{assignment.substr(0, eq), assignment.substr(eq + 1)}}, "--set");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace hidfd

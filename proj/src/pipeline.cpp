#include "hidfd/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include "hidfd/checkpoint.hpp"
#include "hidfd/errors.hpp"

namespace hidfd {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kDataDir = "data";
const char* kCkptDir = "checkpoints";

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

json config_json(const ExperimentConfig& config) {
  json j = json::object();
  for (const auto& [k, v] : to_key_values(config)) {
    if (k != "out") j[k] = v;
  }
  return j;
}

json hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::size_t> counts_json(const Dataset& d) { return d.class_counts(); }

// Rethrows with the phase name prepended, keeping the error category.
template <class Fn>
auto with_phase(const std::string& phase, Fn&& fn) {
  try {
    return fn();
  } catch (const DivergenceError&) {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(phase + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(phase, e.what());
  } catch (const DomainError& e) {
    throw DomainError(phase + ": " + e.what());
  } catch (const ContractError& e) {
    throw ContractError(phase + ": " + e.what());
  }
}

FeatureNetwork relu_network(const std::string& name, std::size_t in,
                            const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng) {
  std::vector<std::size_t> widths{in};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  return FeatureNetwork(name, widths, std::vector<Activation>(widths.size() - 1, Activation::relu),
                        rng);
}

GanArchitecture architecture(const ExperimentConfig& c) {
  GanArchitecture a = c.gan_arch;
  a.data_dim = c.data_dim;
  a.num_classes = c.num_classes;
  a.feature_dim = c.feature_dim;
  return a;
}

json gan_metrics_json(const GanEpochMetrics& m) {
  return {{"epoch", m.epoch},       {"adc_d", m.adc_d},
          {"blend", m.blend},       {"trans", m.trans},
          {"loss_d", m.loss_d},     {"adc_g", m.adc_g},
          {"reg", m.reg},           {"loss_g", m.loss_g},
          {"blend_rate", m.blend_rate}, {"d_real_acc", m.d_real_acc},
          {"d_fake_acc", m.d_fake_acc}, {"histogram", m.histogram},
          {"entropy", m.entropy},   {"min_frequency", m.min_frequency},
          {"tracker", m.tracker}};
}

std::vector<double> teacher_histogram(const Classifier& teacher, const Dataset& d) {
  return class_histogram(teacher.predict(d.features_tensor()), d.num_classes());
}

double min_of(const std::vector<double>& v) {
  double m = v.empty() ? 0.0 : v.front();
  for (double x : v) m = std::min(m, x);
  return m;
}

}  // namespace

PhaseSeeds phase_seeds(std::uint64_t master) {
  PhaseSeeds s;
  s.data = derive_seed(master, "data");
  s.split = derive_seed(master, "split");
  s.collected = derive_seed(master, "collected");
  s.teacher_init = derive_seed(master, "teacher-init");
  s.teacher = derive_seed(master, "pretrain-teacher");
  s.gan = derive_seed(master, "train-gan");
  s.synthetic = derive_seed(master, "synthetic");
  s.mix = derive_seed(master, "mix");
  s.student_init = derive_seed(master, "student-init");
  s.student = derive_seed(master, "distill");
  s.baseline_init = derive_seed(master, "baseline-init");
  s.baseline = derive_seed(master, "baseline");
  return s;
}

json seeds_json(const PhaseSeeds& s) {
  return {{"data", s.data},
          {"split", s.split},
          {"collected", s.collected},
          {"teacher_init", s.teacher_init},
          {"teacher", s.teacher},
          {"gan", s.gan},
          {"synthetic", s.synthetic},
          {"mix", s.mix},
          {"student_init", s.student_init},
          {"student", s.student},
          {"baseline_init", s.baseline_init},
          {"baseline", s.baseline}};
}

Pipeline::Pipeline(ExperimentConfig config)
    : config_(std::move(config)), out_(config_.out), seeds_(phase_seeds(config_.seed)) {
  config_.validate();
}

void Pipeline::ensure_manifest() {
  const fs::path path = out_ / "manifest.json";
  const json snapshot = config_json(config_);
  if (fs::exists(path)) {
    const json existing = read_json(path);
    if (existing.value("config", json()) != snapshot) {
      throw ConfigError(path.string() + " was written for a different configuration");
    }
    return;
  }
  json m;
  m["library_version"] = kLibraryVersion;
  m["master_seed"] = config_.seed;
  m["config"] = snapshot;
  m["seeds"] = seeds_json(seeds_);
  m["artifacts"] = {
      {"data", {"data/train.csv", "data/test.csv", "data/collected.csv", "data/synthetic.csv",
                "data/hybrid.csv"}},
      {"checkpoints",
       {"checkpoints/teacher", "checkpoints/generator", "checkpoints/discriminator",
        "checkpoints/student", "checkpoints/baseline"}},
      {"metrics", "metrics.jsonl"},
      {"timings", "timings.json"},
      {"report", "report.json"}};
  write_json(path, m);
}

template <class Fn>
json Pipeline::timed(const std::string& phase, Fn&& fn) {
  ensure_manifest();
  const auto t0 = std::chrono::steady_clock::now();
  json summary = with_phase(phase, fn);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const fs::path tpath = out_ / "timings.json";
  json timings = fs::exists(tpath) ? read_json(tpath) : json::object();
  timings[phase] = secs;
  write_json(tpath, timings);
  write_phase(phase, summary);
  return summary;
}

void Pipeline::log_metric(const json& line) {
  std::ofstream out(out_ / "metrics.jsonl", std::ios::app);
  out << line.dump() << "\n";
}

void Pipeline::write_phase(const std::string& phase, const json& summary) {
  write_json(out_ / ("phase_" + phase + ".json"), summary);
}

json Pipeline::pretrain_teacher() {
  return timed("pretrain_teacher", [&] {
    const ExperimentConfig& c = config_;
    GaussianMixtureSpec spec;
    spec.num_classes = c.num_classes;
    spec.per_class.assign(c.num_classes, c.per_class);
    spec.means = default_means(c.num_classes, c.data_dim, c.spread);
    spec.covariance_scale = c.covariance;
    const Dataset original = make_gaussian_mixture(spec, seeds_.data);
    const TrainTestSplit split = stratified_split(original, c.test_fraction, seeds_.split);
    const auto weights = geometric_profile(c.num_classes, c.imbalance_ratio);
    const Dataset collected = sample_collected(split.train, c.rho, weights, seeds_.collected);
    write_csv(out_ / kDataDir / "train.csv", split.train);
    write_csv(out_ / kDataDir / "test.csv", split.test);
    write_csv(out_ / kDataDir / "collected.csv", collected);

    Rng init(seeds_.teacher_init);
    FeatureNetwork phi = relu_network("teacher", c.data_dim, c.teacher_hidden, c.feature_dim, init);
    ClassifierHead head(c.feature_dim, c.num_classes, true, init);
    DistillConfig tc = c.teacher;
    tc.seed = seeds_.teacher;
    Classifier teacher = train_cross_entropy(
        tc, Classifier(std::move(phi), std::move(head)), split.train, split.test,
        [&](const ClassifierEpochMetrics& m) {
          log_metric({{"phase", "pretrain_teacher"},
                      {"epoch", m.epoch},
                      {"lr", m.lr},
                      {"loss", m.loss},
                      {"accuracy", m.accuracy}});
        },
        "pretrain_teacher");
    teacher.freeze_head();
    save_checkpoint(out_ / kCkptDir, "teacher", teacher, seeds_.teacher);

    json s;
    s["teacher_accuracy"] = evaluate(teacher, split.test);
    s["teacher_hash"] = hex(parameter_hash(std::as_const(teacher).parameters()));
    s["train_size"] = split.train.size();
    s["test_size"] = split.test.size();
    s["collected_size"] = collected.size();
    s["collected_counts"] = counts_json(collected);
    s["train_checksum"] = hex(dataset_checksum(split.train));
    s["collected_checksum"] = hex(dataset_checksum(collected));
    return s;
  });
}

json Pipeline::train_gan() {
  return timed("train_gan", [&] {
    const ExperimentConfig& c = config_;
    const Classifier teacher = load_classifier(out_ / kCkptDir, "teacher");
    const Dataset collected =
        read_csv(out_ / kDataDir / "collected.csv", c.num_classes, Provenance::collected);
    GanTrainConfig gc = c.gan;
    gc.seed = seeds_.gan;
    GanResult result = hidfd::train_gan(gc, architecture(c), teacher, collected,
                                        [&](const GanEpochMetrics& m) {
                                          json line = gan_metrics_json(m);
                                          line["phase"] = "train_gan";
                                          log_metric(line);
                                        });
    save_checkpoint(out_ / kCkptDir, "generator", result.generator, seeds_.gan);
    save_checkpoint(out_ / kCkptDir, "discriminator", result.discriminator, seeds_.gan);

    // The same draw distill() trains on, labelled by the teacher.
    const std::vector<std::size_t> counts(c.num_classes, c.synthetic_per_class);
    const Dataset synthetic = generate_synthetic(result.generator, counts, seeds_.synthetic);
    const auto hist = teacher_histogram(teacher, synthetic);

    json s;
    s["final"] = gan_metrics_json(result.metrics.back());
    s["synthetic_histogram"] = hist;
    s["synthetic_entropy"] = entropy(hist);
    s["synthetic_min_frequency"] = min_of(hist);
    s["generator_hash"] = hex(parameter_hash(std::as_const(result.generator).parameters()));
    s["teacher_hash"] = hex(parameter_hash(std::as_const(teacher).parameters()));
    return s;
  });
}

json Pipeline::distill() {
  return timed("distill", [&] {
    const ExperimentConfig& c = config_;
    const Classifier teacher = load_classifier(out_ / kCkptDir, "teacher");
    const ConditionalGenerator generator = load_generator(out_ / kCkptDir, "generator");
    const Dataset collected =
        read_csv(out_ / kDataDir / "collected.csv", c.num_classes, Provenance::collected);
    const Dataset test = read_csv(out_ / kDataDir / "test.csv", c.num_classes, Provenance::original);

    const std::vector<std::size_t> counts(c.num_classes, c.synthetic_per_class);
    const Dataset synthetic = generate_synthetic(generator, counts, seeds_.synthetic);
    const std::size_t n = c.student.inflation > 0
                              ? c.student.inflation
                              : default_inflation(synthetic.size(), collected.size());
    const HybridDataset hybrid = mix(inflate(collected, n), synthetic, n, seeds_.mix);
    write_csv(out_ / kDataDir / "synthetic.csv", synthetic);
    write_csv(out_ / kDataDir / "hybrid.csv", hybrid.data);

    Rng init(seeds_.student_init);
    DistillConfig sc = c.student;
    sc.seed = seeds_.student;
    StudentResult student = train_student(
        sc, teacher, make_student(teacher, c.student_hidden, init), hybrid, test,
        [&](const DistillEpochMetrics& m) {
          log_metric({{"phase", "distill"},
                      {"epoch", m.epoch},
                      {"lr", m.lr},
                      {"align", m.align},
                      {"accuracy", m.accuracy},
                      {"feature_gap", m.feature_gap}});
        });
    save_checkpoint(out_ / kCkptDir, "student", student.student, seeds_.student);

    // Collected-only baseline: same student shape, own head, cross-entropy.
    Rng binit(seeds_.baseline_init);
    FeatureNetwork bphi =
        relu_network("baseline", c.data_dim, c.student_hidden, c.feature_dim, binit);
    ClassifierHead bhead(c.feature_dim, c.num_classes, true, binit);
    DistillConfig bc = c.student;
    bc.seed = seeds_.baseline;
    const Classifier baseline = train_cross_entropy(
        bc, Classifier(std::move(bphi), std::move(bhead)), collected, test,
        [&](const ClassifierEpochMetrics& m) {
          log_metric({{"phase", "baseline"},
                      {"epoch", m.epoch},
                      {"lr", m.lr},
                      {"loss", m.loss},
                      {"accuracy", m.accuracy}});
        },
        "baseline");
    save_checkpoint(out_ / kCkptDir, "baseline", baseline, seeds_.baseline);

    const TvdRecord tvd = tvd_report(collected, synthetic, hybrid, c.tvd_bins);
    const auto& last = student.metrics.back();
    json s;
    s["inflation"] = hybrid.inflation;
    s["alpha"] = hybrid.alpha;
    s["synthetic_size"] = synthetic.size();
    s["hybrid_size"] = hybrid.data.size();
    s["student_accuracy"] = evaluate(student.student, test);
    s["baseline_accuracy"] = evaluate(baseline, test);
    s["teacher_accuracy"] = evaluate(teacher, test);
    s["final_align"] = last.align;
    s["feature_gap"] = last.feature_gap;
    s["final_lr"] = last.lr;
    s["teacher_hash"] = hex(parameter_hash(std::as_const(teacher).parameters()));
    s["student_head_matches_teacher"] =
        student.student.head.weight.value == teacher.head.weight.value &&
        student.student.head.bias.has_value() == teacher.head.bias.has_value() &&
        (!teacher.head.bias || student.student.head.bias->value == teacher.head.bias->value);
    s["tvd"] = {{"bins", tvd.bins},
                {"lower", tvd.lower},
                {"upper", tvd.upper},
                {"tvd_collected_synthetic", tvd.tvd_pq},
                {"tvd_hybrid_collected", tvd.tvd_up},
                {"tvd_hybrid_synthetic", tvd.tvd_uq},
                {"bound_slack", tvd.bound_slack},
                {"identity_residual", tvd.identity_residual}};
    return s;
  });
}

json Pipeline::report() {
  json r;
  r["library_version"] = kLibraryVersion;
  r["master_seed"] = config_.seed;
  r["config"] = config_json(config_);
  r["seeds"] = seeds_json(seeds_);
  for (const char* phase : {"pretrain_teacher", "train_gan", "distill"}) {
    const fs::path p = out_ / ("phase_" + std::string(phase) + ".json");
    if (!fs::exists(p)) throw ConfigError("report: missing " + p.string() + "; run " + phase + " first");
    r[phase] = read_json(p);
  }
  r["teacher_hash_stable"] =
      r["pretrain_teacher"]["teacher_hash"] == r["train_gan"]["teacher_hash"] &&
      r["pretrain_teacher"]["teacher_hash"] == r["distill"]["teacher_hash"];
  write_json(out_ / "report.json", r);
  return r;
}

json Pipeline::run_all() {
  fs::create_directories(out_);
  fs::remove(out_ / "metrics.jsonl");
  fs::remove(out_ / "timings.json");
  pretrain_teacher();
  train_gan();
  distill();
  return report();
}

void copy_phase_artifacts(const fs::path& from, const fs::path& to, bool include_gan) {
  fs::create_directories(to / kDataDir);
  fs::create_directories(to / kCkptDir);
  for (const char* f : {"train.csv", "test.csv", "collected.csv"}) {
    fs::copy_file(from / kDataDir / f, to / kDataDir / f, fs::copy_options::overwrite_existing);
  }
  std::vector<std::string> names{"teacher"};
  std::vector<std::string> phases{"pretrain_teacher"};
  if (include_gan) {
    names.insert(names.end(), {"generator", "discriminator"});
    phases.push_back("train_gan");
  }
  for (const auto& n : names) {
    for (const char* ext : {".manifest", ".bin"}) {
      fs::copy_file(from / kCkptDir / (n + ext), to / kCkptDir / (n + ext),
                    fs::copy_options::overwrite_existing);
    }
  }
  for (const auto& p : phases) {
    const std::string f = "phase_" + p + ".json";
    fs::copy_file(from / f, to / f, fs::copy_options::overwrite_existing);
  }
}

namespace {

bool teacher_ready(const fs::path& out) {
  return fs::exists(out / "phase_pretrain_teacher.json");
}

}  // namespace

json ablate(const ExperimentConfig& base) {
  Pipeline root(base);
  if (!teacher_ready(root.out())) root.pretrain_teacher();

  struct Variant {
    const char* name;
    const char* key;
  };
  const Variant variants[] = {{"full", nullptr},
                              {"no_blend", "gan.disable_blend"},
                              {"no_trans", "gan.disable_trans"},
                              {"no_reg", "gan.disable_reg"},
                              {"invert_gate", "gan.invert_blend_gate"}};
  json summary = json::array();
  for (const Variant& v : variants) {
    ExperimentConfig c = base;
    if (v.key) c = apply_override(c, std::string(v.key) + "=true");
    c.out = (fs::path(base.out) / "ablate" / v.name).string();
    fs::create_directories(c.out);
    fs::remove(fs::path(c.out) / "metrics.jsonl");
    copy_phase_artifacts(root.out(), c.out, false);
    Pipeline p(c);
    const json gan = p.train_gan();
    const json dist = p.distill();
    p.report();
    summary.push_back({{"variant", v.name},
                       {"student_accuracy", dist["student_accuracy"]},
                       {"baseline_accuracy", dist["baseline_accuracy"]},
                       {"synthetic_entropy", gan["synthetic_entropy"]},
                       {"synthetic_min_frequency", gan["synthetic_min_frequency"]},
                       {"synthetic_histogram", gan["synthetic_histogram"]},
                       {"tvd_collected_synthetic", dist["tvd"]["tvd_collected_synthetic"]}});
  }
  json out = {{"master_seed", base.seed}, {"variants", summary}};
  write_json(fs::path(base.out) / "ablation.json", out);
  return out;
}

json sweep(const ExperimentConfig& base, const std::string& key,
           const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  const bool distill_only = key.rfind("student.", 0) == 0 || key == "synthetic_per_class" ||
                            key == "tvd_bins";
  Pipeline root(base);
  if (distill_only) {
    if (!teacher_ready(root.out())) root.pretrain_teacher();
    if (!fs::exists(root.out() / "phase_train_gan.json")) root.train_gan();
  }
  json rows = json::array();
  for (const auto& value : values) {
    ExperimentConfig c = apply_override(base, key + "=" + value);
    c.out = (fs::path(base.out) / "sweep" / (key + "=" + value)).string();
    fs::create_directories(c.out);
    json report;
    if (distill_only) {
      fs::remove(fs::path(c.out) / "metrics.jsonl");
      copy_phase_artifacts(root.out(), c.out, true);
      Pipeline p(c);
      p.distill();
      report = p.report();
    } else {
      report = Pipeline(c).run_all();
    }
    rows.push_back({{"value", value},
                    {"student_accuracy", report["distill"]["student_accuracy"]},
                    {"baseline_accuracy", report["distill"]["baseline_accuracy"]},
                    {"teacher_accuracy", report["distill"]["teacher_accuracy"]},
                    {"alpha", report["distill"]["alpha"]},
                    {"inflation", report["distill"]["inflation"]}});
  }
  json out = {{"key", key}, {"master_seed", base.seed}, {"runs", rows}};
  write_json(fs::path(base.out) / "sweep.json", out);
  return out;
}

std::string summarize_report(const json& r) {
  std::ostringstream os;
  const json& t = r.at("pretrain_teacher");
  const json& g = r.at("train_gan");
  const json& d = r.at("distill");
  auto num = [](const json& j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", j.get<double>());
    return std::string(buf);
  };
  os << "master seed         " << r.at("master_seed").get<std::uint64_t>() << "\n";
  os << "teacher accuracy    " << num(t.at("teacher_accuracy")) << "\n";
  os << "collected counts    " << t.at("collected_counts").dump() << "\n";
  os << "synthetic min freq  " << num(g.at("synthetic_min_frequency")) << "\n";
  os << "synthetic entropy   " << num(g.at("synthetic_entropy")) << "\n";
  os << "inflation N         " << d.at("inflation").get<std::size_t>() << "\n";
  os << "alpha               " << num(d.at("alpha")) << "\n";
  os << "student accuracy    " << num(d.at("student_accuracy")) << "\n";
  os << "baseline accuracy   " << num(d.at("baseline_accuracy")) << "\n";
  os << "TVD(P,Q)            " << num(d.at("tvd").at("tvd_collected_synthetic")) << "\n";
  os << "TVD(U,Q) slack      " << num(d.at("tvd").at("bound_slack")) << "\n";
  os << "teacher hash stable " << (r.at("teacher_hash_stable").get<bool>() ? "yes" : "no") << "\n";
  return os.str();
}

}  // namespace hidfd

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "rgbt/error.hpp"
#include "rgbt/experiment.hpp"
#include "rgbt/text_io.hpp"

namespace rgbt {

namespace {

struct Field {
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
  std::function<bool()> active = [] { return true; };
};

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  if (!text::parse_double(v, out) || !std::isfinite(out))
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(v) + "'");
  return out;
}

long long to_int(std::string_view key, std::string_view v, long long lo) {
  long long out = 0;
  if (!text::parse_int(v, out)) throw ConfigError(std::string(key), "expected an integer, got '" + std::string(v) + "'");
  if (out < lo) throw ConfigError(std::string(key), "must be >= " + std::to_string(lo));
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(std::string(key), "expected a boolean, got '" + std::string(v) + "'");
}

std::vector<std::string_view> to_list(std::string_view v) {
  std::vector<std::string_view> out;
  for (auto part : text::split(v, ',')) {
    part = text::trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

char to_delimiter(std::string_view key, std::string_view v) {
  if (v == "tab") return '\t';
  if (v == "comma") return ',';
  if (v == "space") return ' ';
  if (v == "semicolon") return ';';
  if (v == "pipe") return '|';
  if (v.size() == 1) return v[0];
  throw ConfigError(std::string(key), "unknown delimiter '" + std::string(v) + "'");
}

std::string delimiter_name(char c) {
  switch (c) {
    case '\t': return "tab";
    case ',': return "comma";
    case ' ': return "space";
    case ';': return "semicolon";
    case '|': return "pipe";
    default: return std::string(1, c);
  }
}

template <class E, class P>
E to_enum(std::string_view key, std::string_view v, P parse) {
  try {
    return parse(v);
  } catch (const Error&) {
    throw ConfigError(std::string(key), "unknown value '" + std::string(v) + "'");
  }
}

std::string fmt(double v) { return text::format_double(v); }

template <class T>
std::string join_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, Variant>) out += variant_name(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

std::map<std::string, Field, std::less<>> fields(ExperimentConfig& c) {
  std::map<std::string, Field, std::less<>> f;
  auto& d = c.data;
  auto& t = c.train;
  const auto raw_file = [&c] { return !c.data.path.empty() && c.data.format == DataFormat::kRaw; };
  const auto synthetic = [&c] { return c.data.path.empty(); };

  auto real = [&f](const std::string& key, double& ref, std::function<bool()> active = [] { return true; }) {
    f[key] = {[&ref, key](std::string_view v) { ref = to_double(key, v); }, [&ref] { return fmt(ref); }, std::move(active)};
  };
  auto count = [&f](const std::string& key, auto& ref, long long lo, std::function<bool()> active = [] { return true; }) {
    using T = std::remove_reference_t<decltype(ref)>;
    f[key] = {[&ref, key, lo](std::string_view v) { ref = static_cast<T>(to_int(key, v, lo)); },
              [&ref] { return std::to_string(ref); }, std::move(active)};
  };
  auto flag = [&f](const std::string& key, bool& ref, std::function<bool()> active = [] { return true; }) {
    f[key] = {[&ref, key](std::string_view v) { ref = to_bool(key, v); }, [&ref] { return std::string(ref ? "true" : "false"); },
              std::move(active)};
  };

  f["data.path"] = {[&d](std::string_view v) { d.path = std::string(v); }, [&d] { return d.path; }};
  f["data.format"] = {[&d](std::string_view v) {
                        if (v == "raw") d.format = DataFormat::kRaw;
                        else if (v == "dump") d.format = DataFormat::kDump;
                        else throw ConfigError("data.format", "expected raw or dump");
                      },
                      [&d] { return std::string(d.format == DataFormat::kRaw ? "raw" : "dump"); },
                      [&c] { return !c.data.path.empty(); }};
  f["data.columns"] = {[&d](std::string_view v) {
                         d.columns = std::string(v);
                         try {
                           (void)Schema::from_names(d.columns, d.delimiter);
                         } catch (const Error& e) {
                           throw ConfigError("data.columns", e.what());
                         }
                       },
                       [&d] { return d.columns; }, raw_file};
  f["data.delimiter"] = {[&d](std::string_view v) { d.delimiter = to_delimiter("data.delimiter", v); },
                         [&d] { return delimiter_name(d.delimiter); }, raw_file};
  flag("data.header", d.header, raw_file);
  count("data.classes", d.classes, 2);
  count("data.synthetic.users", d.synthetic.users, 1, synthetic);
  count("data.synthetic.items", d.synthetic.items, 1, synthetic);
  count("data.synthetic.interactions", d.synthetic.interactions, 1, synthetic);
  count("data.synthetic.factors", d.synthetic.factors, 1, synthetic);
  real("data.synthetic.bias_scale", d.synthetic.bias_scale, synthetic);
  real("data.synthetic.jitter", d.synthetic.jitter, synthetic);
  real("data.synthetic.popularity", d.synthetic.popularity_exponent, synthetic);
  count("data.synthetic.seed", d.synthetic.seed, 0, synthetic);
  f["data.synthetic.shares"] = {[&d](std::string_view v) {
                                  d.synthetic.class_shares.clear();
                                  for (auto s : to_list(v)) d.synthetic.class_shares.push_back(to_double("data.synthetic.shares", s));
                                },
                                [&d] {
                                  std::string out;
                                  for (double s : d.synthetic.class_shares) out += (out.empty() ? "" : ",") + fmt(s);
                                  return out;
                                },
                                synthetic};
  const auto split_active = [&c] { return c.data.format == DataFormat::kRaw || c.data.path.empty(); };
  real("split.train", d.split.train, split_active);
  real("split.validation", d.split.validation, split_active);
  real("split.test", d.split.test, split_active);
  f["test_filter.kind"] = {[&d](std::string_view v) { d.filter.kind = to_enum<TestFilter::Kind>("test_filter.kind", v, parse_filter_kind); },
                           [&d] { return std::string(filter_kind_name(d.filter.kind)); }};
  real("test_filter.threshold", d.filter.threshold, [&c] { return c.data.filter.kind != TestFilter::Kind::kNone; });

  f["noise.kind"] = {[&c](std::string_view v) {
                       if (v == "none") c.noise.kind.reset();
                       else c.noise.kind = to_enum<NoiseKind>("noise.kind", v, parse_noise_kind);
                     },
                     [&c] { return c.noise.kind ? std::string(noise_kind_name(*c.noise.kind)) : std::string("none"); }};
  real("noise.eta", c.noise.eta, [&c] { return c.noise.kind.has_value(); });
  f["noise.truth_path"] = {[&c](std::string_view v) { c.noise.truth_path = std::string(v); },
                           [&c] { return c.noise.truth_path; }, [&c] { return !c.noise.kind; }};

  count("model.dim", t.dim, 1);
  real("model.embedding_scale", t.embedding_scale);
  real("model.transition_prior", t.transition_prior);
  f["model.score"] = {[&t](std::string_view v) {
                        if (v == "top_class") t.score_kind = kernels::ScoreKind::kTopClass;
                        else if (v == "expected_rating") t.score_kind = kernels::ScoreKind::kExpectedRating;
                        else throw ConfigError("model.score", "expected top_class or expected_rating");
                      },
                      [&t] { return std::string(t.score_kind == kernels::ScoreKind::kTopClass ? "top_class" : "expected_rating"); }};

  real("train.lambda", t.loss.lambda);
  count("train.batch_size", t.loss.batch_size, 1);
  count("train.epochs", t.loss.epochs, 0);
  f["train.variants"] = {[&c](std::string_view v) {
                           c.variants.clear();
                           for (auto s : to_list(v)) c.variants.push_back(to_enum<Variant>("train.variants", s, parse_variant));
                         },
                         [&c] { return join_list(c.variants); }};
  f["train.optimizer"] = {[&t](std::string_view v) {
                            if (v == "adam") t.optimizer = OptimizerConfig::Kind::kAdam;
                            else if (v == "sgd") t.optimizer = OptimizerConfig::Kind::kSgd;
                            else throw ConfigError("train.optimizer", "expected adam or sgd");
                          },
                          [&t] { return std::string(t.optimizer == OptimizerConfig::Kind::kAdam ? "adam" : "sgd"); }};
  real("train.lr_w", t.lr_w);
  real("train.lr_theta", t.lr_theta);
  count("train.refresh_interval", t.refresh_interval, 1);
  count("train.patience", t.patience, 0);
  f["train.weighting"] = {[&t](std::string_view v) { t.weighting = to_enum<Weighting>("train.weighting", v, parse_weighting); },
                          [&t] { return std::string(weighting_name(t.weighting)); }};
  flag("train.include_self", t.include_self);
  f["train.backend"] = {[&t](std::string_view v) {
                          if (v == "serial") t.backend = kernels::Backend::kSerial;
                          else if (v == "parallel") t.backend = kernels::Backend::kParallel;
                          else throw ConfigError("train.backend", "expected serial or parallel");
                        },
                        [&t] { return std::string(t.backend == kernels::Backend::kSerial ? "serial" : "parallel"); }};

  real("gmm.tol", t.gmm.tol);
  count("gmm.max_iter", t.gmm.max_iter, 1);
  real("gmm.regularization", t.gmm.regularization);

  real("schedule.rho0", t.schedule.rho0);
  real("schedule.gamma", t.schedule.gamma);
  real("schedule.rho_min", t.schedule.rho_min);
  real("schedule.tau0", t.schedule.tau0);
  real("schedule.tau_gamma", t.schedule.tau_gamma);

  f["eval.ks"] = {[&c](std::string_view v) {
                    c.ks.clear();
                    for (auto s : to_list(v)) c.ks.push_back(static_cast<int>(to_int("eval.ks", s, 1)));
                  },
                  [&c] { return join_list(c.ks); }};
  f["run.seeds"] = {[&c](std::string_view v) {
                      c.seeds.clear();
                      for (auto s : to_list(v)) c.seeds.push_back(static_cast<std::uint64_t>(to_int("run.seeds", s, 0)));
                    },
                    [&c] { return join_list(c.seeds); }};
  f["run.out"] = {[&c](std::string_view v) { c.out = std::string(v); }, [&c] { return c.out; }, [] { return false; }};
  return f;
}

}  // namespace

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
  auto table = fields(config);
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(std::string(key), "unknown key");
  it->second.set(text::trim(value));
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    set_config_value(config, text::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  validate_config(config);
  return config;
}

void validate_config(const ExperimentConfig& c) {
  const auto& d = c.data;
  if (d.path.empty()) {
    SyntheticSpec s = d.synthetic;
    s.classes = d.classes;
    try {
      s.validate();
    } catch (const Error& e) {
      throw ConfigError("data.synthetic", e.what());
    }
  }
  const double sum = d.split.train + d.split.validation + d.split.test;
  if (d.split.train < 0 || d.split.validation < 0 || d.split.test < 0 || std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split", "ratios must be non-negative and sum to 1");
  if (d.split.train <= 0) throw ConfigError("split.train", "must be > 0");
  if (c.noise.kind && !(c.noise.eta >= 0.0 && c.noise.eta < 1.0))
    throw ConfigError("noise.eta", "must lie in [0, 1)");
  if (!(c.train.loss.lambda > 0)) throw ConfigError("train.lambda", "must be > 0");
  if (!(c.train.lr_w > 0)) throw ConfigError("train.lr_w", "must be > 0");
  if (!(c.train.lr_theta > 0)) throw ConfigError("train.lr_theta", "must be > 0");
  if (!(c.train.embedding_scale >= 0)) throw ConfigError("model.embedding_scale", "must be >= 0");
  if (!(c.train.transition_prior >= 0 && c.train.transition_prior < 1))
    throw ConfigError("model.transition_prior", "must lie in [0, 1)");
  if (!(c.train.gmm.tol > 0)) throw ConfigError("gmm.tol", "must be > 0");
  if (!(c.train.gmm.regularization >= 0)) throw ConfigError("gmm.regularization", "must be >= 0");
  try {
    c.train.schedule.validate();
  } catch (const Error& e) {
    throw ConfigError("schedule", e.what());
  }
  if (c.variants.empty()) throw ConfigError("train.variants", "at least one variant is required");
  if (c.ks.empty()) throw ConfigError("eval.ks", "at least one cut-off is required");
  if (c.seeds.empty()) throw ConfigError("run.seeds", "at least one seed is required");
}

std::string canonical_config(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  std::string out;
  for (const auto& [key, field] : fields(copy))
    if (field.active()) out += key + '=' + field.get() + '\n';
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  std::ostringstream ss;
  ss << std::hex;
  ss.width(16);
  ss.fill('0');
  ss << hash;
  return ss.str();
}

}  // namespace rgbt

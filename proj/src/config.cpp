#include "bdrlab/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "bdrlab/error.hpp"
#include "bdrlab/rng.hpp"

namespace bdrlab {

std::string to_string(Generator g) {
  switch (g) {
    case Generator::Gaussian:
      return "gaussian";
    case Generator::Rings:
      return "rings";
    case Generator::Idx:
      return "idx";
  }
  return "?";
}

Generator parse_generator(const std::string& text) {
  if (text == "gaussian") return Generator::Gaussian;
  if (text == "rings") return Generator::Rings;
  if (text == "idx") return Generator::Idx;
  throw ArgumentError("unknown generator '" + text + "' (expected gaussian, rings or idx)");
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (res.ec != std::errc{}) throw NumericError("cannot format number");
  return {buf.data(), res.ptr};
}

void ExperimentConfig::validate() const {
  train.validate();
  if (variants.empty()) throw ArgumentError("experiment needs at least one loss variant");
  if (seeds.empty()) throw ArgumentError("experiment needs at least one seed");
  if (out.empty()) throw ArgumentError("output directory must not be empty");
  if (dataset.generator != Generator::Idx && (dataset.classes == 0 || dataset.per_class == 0)) {
    throw ArgumentError("dataset needs positive classes and per_class");
  }
  if (dataset.generator == Generator::Idx && (dataset.images.empty() || dataset.labels.empty())) {
    throw ArgumentError("idx dataset needs both images and labels paths");
  }
}

namespace {

// A typed field: text -> value (throws ArgumentError on bad text) and back.
struct Field {
  std::string_view section;
  std::string_view key;
  std::function<void(ExperimentConfig&, const std::string&)> read;
  std::function<std::string(const ExperimentConfig&)> write;
};

std::size_t to_size(const std::string& text) {
  std::size_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ArgumentError("expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t to_u64(const std::string& text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ArgumentError("expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double to_double(const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ArgumentError("expected a number, got '" + text + "'");
  }
  if (!std::isfinite(v)) throw ArgumentError("number must be finite, got '" + text + "'");
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ArgumentError("empty list element in '" + text + "'");
    items.push_back(item);
  }
  if (items.empty()) throw ArgumentError("list must not be empty");
  return items;
}

template <class T, class F>
std::string join(const std::vector<T>& values, F&& fmt) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ", ";
    s += fmt(values[i]);
  }
  return s;
}

#define SIZE_FIELD(sec, name, member)                                                          \
  Field {                                                                                      \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_size(v); },       \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }                     \
  }
#define DOUBLE_FIELD(sec, name, member)                                                        \
  Field {                                                                                      \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_double(v); },     \
        [](const ExperimentConfig& c) { return format_double(c.member); }                      \
  }
#define STRING_FIELD(sec, name, member)                                                        \
  Field {                                                                                      \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = v; },                \
        [](const ExperimentConfig& c) { return c.member; }                                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      Field{"dataset", "generator", [](ExperimentConfig& c, const std::string& v) { c.dataset.generator = parse_generator(v); },
            [](const ExperimentConfig& c) { return to_string(c.dataset.generator); }},
      SIZE_FIELD("dataset", "classes", dataset.classes),
      SIZE_FIELD("dataset", "per_class", dataset.per_class),
      SIZE_FIELD("dataset", "dim", dataset.dim),
      DOUBLE_FIELD("dataset", "separation", dataset.separation),
      DOUBLE_FIELD("dataset", "noise", dataset.noise),
      STRING_FIELD("dataset", "images", dataset.images),
      STRING_FIELD("dataset", "labels", dataset.labels),

      SIZE_FIELD("protocol", "base", base),
      SIZE_FIELD("protocol", "step", step),

      Field{"memory", "mode", [](ExperimentConfig& c, const std::string& v) { c.train.memory.mode = parse_budget_mode(v); },
            [](const ExperimentConfig& c) { return to_string(c.train.memory.mode); }},
      SIZE_FIELD("memory", "per_class", train.memory.per_class),
      SIZE_FIELD("memory", "total", train.memory.total),
      Field{"memory", "selection",
            [](ExperimentConfig& c, const std::string& v) { c.train.memory.selection = parse_selection(v); },
            [](const ExperimentConfig& c) { return to_string(c.train.memory.selection); }},

      SIZE_FIELD("train", "epochs", train.epochs),
      SIZE_FIELD("train", "batch_size", train.batch_size),
      DOUBLE_FIELD("train", "learning_rate", train.learning_rate),
      DOUBLE_FIELD("train", "momentum", train.momentum),
      DOUBLE_FIELD("train", "weight_decay", train.weight_decay),
      DOUBLE_FIELD("train", "lr_decay_fraction", train.lr_decay_fraction),
      DOUBLE_FIELD("train", "lr_decay_factor", train.lr_decay_factor),
      Field{"train", "hidden",
            [](ExperimentConfig& c, const std::string& v) {
              c.train.hidden.clear();
              if (v == "none") return;
              for (const auto& item : split_list(v)) c.train.hidden.push_back(to_size(item));
            },
            [](const ExperimentConfig& c) {
              return c.train.hidden.empty() ? std::string("none")
                                            : join(c.train.hidden, [](std::size_t w) { return std::to_string(w); });
            }},
      DOUBLE_FIELD("train", "lambda", train.distill_weight),
      DOUBLE_FIELD("train", "temperature", train.temperature),
      SIZE_FIELD("train", "hessian_iters", train.hessian_iters),
      Field{"train", "variance_source",
            [](ExperimentConfig& c, const std::string& v) { c.train.variance_source = parse_variance_source(v); },
            [](const ExperimentConfig& c) { return to_string(c.train.variance_source); }},

      DOUBLE_FIELD("bdr", "m", train.bdr.m),
      DOUBLE_FIELD("bdr", "m_prime", train.bdr.m_prime),
      DOUBLE_FIELD("bdr", "beta", train.bdr.beta),
      DOUBLE_FIELD("bdr", "tau", train.bdr.tau),

      Field{"experiment", "variants",
            [](ExperimentConfig& c, const std::string& v) {
              c.variants.clear();
              for (const auto& item : split_list(v)) c.variants.push_back(parse_loss_variant(item));
            },
            [](const ExperimentConfig& c) {
              return join(c.variants, [](LossVariant x) { return to_string(x); });
            }},
      Field{"experiment", "seeds",
            [](ExperimentConfig& c, const std::string& v) {
              c.seeds.clear();
              for (const auto& item : split_list(v)) c.seeds.push_back(to_u64(item));
            },
            [](const ExperimentConfig& c) {
              return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
            }},
      STRING_FIELD("experiment", "out", out),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef STRING_FIELD

constexpr std::array<std::string_view, 6> kSections{"dataset", "protocol", "memory", "train", "bdr", "experiment"};

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::string section;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view raw = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const auto first = raw.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || raw[first] == '#') {
      if (eol == text.size()) break;
      continue;
    }
    const std::size_t col = first + 1;
    if (raw[first] == '[') {
      const auto close = raw.find(']', first);
      if (close == std::string_view::npos) throw ConfigError("unterminated section header", line_no, col);
      if (!trim(raw.substr(close + 1)).empty()) throw ConfigError("trailing text after section header", line_no, close + 2);
      section = trim(raw.substr(first + 1, close - first - 1));
      bool known = false;
      for (auto s : kSections) known = known || s == section;
      if (!known) throw ConfigError("unknown section [" + section + "]", line_no, col + 1);
    } else {
      const auto eq = raw.find('=', first);
      if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no, col);
      const std::string key = trim(raw.substr(first, eq - first));
      if (key.empty()) throw ConfigError("missing key before '='", line_no, col);
      if (section.empty()) throw ConfigError("key '" + key + "' appears before any section", line_no, col);
      const Field* field = nullptr;
      for (const Field& f : fields())
        if (f.section == section && f.key == key) field = &f;
      if (!field) throw ConfigError("unknown key '" + key + "' in section [" + section + "]", line_no, col);
      if (!seen.emplace(section, key).second) throw ConfigError("duplicate key '" + key + "'", line_no, col);
      const auto value_start = raw.find_first_not_of(" \t", eq + 1);
      const std::string value = value_start == std::string_view::npos ? std::string() : trim(raw.substr(value_start));
      const std::size_t value_col = value_start == std::string_view::npos ? eq + 2 : value_start + 1;
      if (value.empty()) throw ConfigError("missing value for key '" + key + "'", line_no, value_col);
      try {
        field->read(config, value);
      } catch (const ArgumentError& e) {
        throw ConfigError("key '" + key + "': " + e.what(), line_no, value_col);
      }
    }
    if (eol == text.size()) break;
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  std::string_view current;
  for (const Field& f : fields()) {
    if (f.section != current) {
      if (!current.empty()) out += '\n';
      out += "[" + std::string(f.section) + "]\n";
      current = f.section;
    }
    const std::string value = f.write(config);
    if (value.empty()) continue;  // unset optional paths
    out += std::string(f.key) + " = " + value + "\n";
  }
  return out;
}

PhaseStream build_stream(const ExperimentConfig& config, std::uint64_t seed) {
  const Rng data_rng = Rng(seed).split("dataset");
  const std::uint64_t draw_seed = data_rng.split("draw").next_u64();
  const std::uint64_t split_seed = data_rng.split("split").next_u64();
  const DatasetSpec& d = config.dataset;
  LabeledSet data;
  switch (d.generator) {
    case Generator::Gaussian:
      data = make_gaussian_mixture(d.classes, d.per_class, d.dim, d.separation, draw_seed);
      break;
    case Generator::Rings:
      data = make_rings(d.classes, d.per_class, d.noise, draw_seed);
      break;
    case Generator::Idx:
      data = load_idx(d.images, d.labels);
      break;
  }
  return split_phases(data, config.base, config.step, split_seed);
}

}  // namespace bdrlab

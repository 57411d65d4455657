#include "fairdi/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fairdi/csv.hpp"
#include "fairdi/error.hpp"
#include "fairdi/rng.hpp"

namespace fairdi {
namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// The three unit directions the generator writes into: two class-signal axes
// and one group-shift axis. Image mode spreads each over a quadrant.
struct Axes {
  std::vector<double> signal_a;
  std::vector<double> signal_b;
  std::vector<double> shift;
};

Axes make_axes(const GenSpec& spec) {
  const std::size_t d = spec.input_dim();
  Axes ax{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  if (spec.image_side == 0) {
    ax.signal_a[0] = 1.0;
    ax.signal_b[1] = 1.0;
    ax.shift[2] = 1.0;
    return ax;
  }
  const std::size_t s = spec.image_side;
  const std::size_t h = s / 2;
  const double v = 1.0 / static_cast<double>(h);  // 1 / sqrt(h*h)
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < h; ++c) {
      ax.signal_a[r * s + c] = v;                    // top-left
      ax.signal_b[(s - 1 - r) * s + (s - 1 - c)] = v;  // bottom-right
      ax.shift[r * s + (s - 1 - c)] = v;             // top-right
    }
  }
  return ax;
}

double difficulty(const GenSpec& spec, std::size_t g) {
  return spec.bias_strength * static_cast<double>(g) / static_cast<double>(spec.n_groups - 1);
}

std::vector<double> direction(const Axes& ax, double angle) {
  std::vector<double> u(ax.signal_a.size());
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = ca * ax.signal_a[i] + sa * ax.signal_b[i];
  return u;
}

std::vector<std::size_t> group_counts(const GenSpec& spec) {
  std::vector<std::size_t> counts(spec.n_groups);
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < spec.n_groups; ++g) {
    const double exact = spec.group_proportions[g] * static_cast<double>(spec.n_samples);
    counts[g] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[g];
    rema.emplace_back(exact - std::floor(exact), g);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < spec.n_samples; ++i, ++assigned) ++counts[rema[i % rema.size()].second];
  return counts;
}

std::string feature_name(const Dataset& ds, std::size_t i) {
  if (ds.image_side == 0) return "f" + std::to_string(i);
  return "px" + std::to_string(i / ds.image_side) + "_" + std::to_string(i % ds.image_side);
}

}  // namespace

void GenSpec::validate() const {
  if (n_samples == 0) throw Error(ErrorCode::invalid_spec, "n_samples must be positive");
  if (n_groups < 2) throw Error(ErrorCode::invalid_spec, "n_groups must be at least 2");
  if (group_proportions.size() != n_groups) {
    throw Error(ErrorCode::invalid_spec, "group_proportions must have n_groups entries");
  }
  double sum = 0.0;
  for (const double p : group_proportions) {
    if (!(p >= 0.0)) throw Error(ErrorCode::invalid_spec, "group proportions must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::invalid_spec, "group proportions must sum to 1");
  if (image_side == 0 && n_features < 3) throw Error(ErrorCode::invalid_spec, "n_features must be at least 3");
  if (image_side == 1) throw Error(ErrorCode::invalid_spec, "image_side must be at least 2");
  if (!(base_separation > 0.0) || !std::isfinite(base_separation)) {
    throw Error(ErrorCode::invalid_spec, "base_separation must be positive");
  }
  if (!(bias_strength >= 0.0) || !std::isfinite(bias_strength)) {
    throw Error(ErrorCode::invalid_spec, "bias_strength must be nonnegative");
  }
  if (bias_strength > 1.0) throw Error(ErrorCode::invalid_spec, "bias_strength above 1 gives negative separation");
  if (!(label_noise >= 0.0 && label_noise <= 0.5)) throw Error(ErrorCode::invalid_spec, "label_noise must be in [0, 0.5]");
  if (label_noise * (1.0 + bias_strength) > 0.5) {
    throw Error(ErrorCode::invalid_spec, "flip rate of the hardest group exceeds 0.5");
  }
  if (!std::isfinite(max_rotation)) throw Error(ErrorCode::invalid_spec, "max_rotation must be finite");
  if (!std::isfinite(group_shift)) throw Error(ErrorCode::invalid_spec, "group_shift must be finite");
}

double bayes_auc(double separation, double flip_rate) {
  return flip_rate + (1.0 - 2.0 * flip_rate) * std_normal_cdf(separation / std::numbers::sqrt2);
}

double analytic_score(const GenSpec& spec, const Sample& sample) {
  const Axes ax = make_axes(spec);
  const auto u = direction(ax, difficulty(spec, static_cast<std::size_t>(sample.attribute)) * spec.max_rotation);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * sample.features[i];
  return s;
}

GeneratedData generate(const GenSpec& spec) {
  spec.validate();
  const Axes ax = make_axes(spec);
  const std::size_t d = spec.input_dim();
  const auto counts = group_counts(spec);

  GeneratedData out;
  out.dataset.feature_dim = d;
  out.dataset.image_side = spec.image_side;
  std::vector<std::vector<double>> dirs;
  for (std::size_t g = 0; g < spec.n_groups; ++g) {
    const double t = difficulty(spec, g);
    GroupOracle o;
    o.group = static_cast<int>(g);
    o.count = counts[g];
    o.separation = spec.base_separation * (1.0 - t);
    o.flip_rate = spec.label_noise * (1.0 + t);
    o.rotation = t * spec.max_rotation;
    o.shift = t * spec.group_shift;
    o.bayes_auc = bayes_auc(o.separation, o.flip_rate);
    out.oracle.push_back(o);
    dirs.push_back(direction(ax, o.rotation));
  }

  std::vector<int> attrs;
  for (std::size_t g = 0; g < spec.n_groups; ++g) attrs.insert(attrs.end(), counts[g], static_cast<int>(g));
  Rng rng(derive_seed(spec.seed, "datagen"));
  rng.shuffle(attrs);

  out.dataset.samples.reserve(spec.n_samples);
  for (const int g : attrs) {
    const GroupOracle& o = out.oracle[static_cast<std::size_t>(g)];
    Sample s;
    s.attribute = g;
    const int clean = rng.uniform() < 0.5 ? 1 : 0;
    const double sign = clean == 1 ? 0.5 : -0.5;
    s.features.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      s.features[i] = rng.normal() + sign * o.separation * dirs[static_cast<std::size_t>(g)][i] + o.shift * ax.shift[i];
    }
    s.label = rng.uniform() < o.flip_rate ? 1 - clean : clean;
    out.dataset.samples.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::string text;
  for (std::size_t i = 0; i < ds.feature_dim; ++i) text += feature_name(ds, i) + ",";
  text += "label,attribute\n";
  for (const auto& s : ds.samples) {
    for (const double v : s.features) text += format_double(v) + ",";
    text += std::to_string(s.label) + "," + std::to_string(s.attribute) + "\n";
  }
  write_text_file(path, text);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::string src = path.string();
  const std::size_t c_label = t.column("label", src);
  const std::size_t c_attr = t.column("attribute", src);

  Dataset ds;
  std::vector<std::size_t> feature_cols;
  const bool image = !t.header.empty() && t.header[0].rfind("px", 0) == 0;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i != c_label && i != c_attr) feature_cols.push_back(i);
  }
  ds.feature_dim = feature_cols.size();
  if (ds.feature_dim == 0) throw Error(ErrorCode::parse_error, src + ": no feature columns");
  if (image) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(ds.feature_dim))));
    if (side * side != ds.feature_dim) throw Error(ErrorCode::parse_error, src + ": pixel columns do not form a square");
    ds.image_side = side;
  }
  for (std::size_t i = 0; i < feature_cols.size(); ++i) {
    const std::string expected = feature_name(ds, i);
    if (t.header[feature_cols[i]] != expected) {
      throw Error(ErrorCode::parse_error, src + ": missing column '" + expected + "'");
    }
  }

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t ln = t.line_numbers[r];
    Sample s;
    for (const std::size_t c : feature_cols) s.features.push_back(parse_double_field(row[c], src, ln));
    const long long label = parse_int_field(row[c_label], src, ln);
    if (label != 0 && label != 1) {
      throw Error(ErrorCode::parse_error, src + ":" + std::to_string(ln) + ": label must be 0 or 1, got '" +
                                              row[c_label] + "'");
    }
    const long long attr = parse_int_field(row[c_attr], src, ln);
    if (attr < 0) {
      throw Error(ErrorCode::parse_error, src + ":" + std::to_string(ln) + ": unknown attribute '" + row[c_attr] + "'");
    }
    s.label = static_cast<int>(label);
    s.attribute = static_cast<int>(attr);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

nlohmann::json spec_to_json(const GenSpec& s) {
  return {{"n_samples", s.n_samples},
          {"n_features", s.n_features},
          {"image_side", s.image_side},
          {"n_groups", s.n_groups},
          {"group_proportions", s.group_proportions},
          {"base_separation", s.base_separation},
          {"bias_strength", s.bias_strength},
          {"label_noise", s.label_noise},
          {"max_rotation", s.max_rotation},
          {"group_shift", s.group_shift},
          {"seed", s.seed}};
}

GenSpec spec_from_json(const nlohmann::json& j, GenSpec s) {
  try {
    if (j.contains("n_samples")) s.n_samples = j.at("n_samples").get<std::size_t>();
    if (j.contains("n_features")) s.n_features = j.at("n_features").get<std::size_t>();
    if (j.contains("image_side")) s.image_side = j.at("image_side").get<std::size_t>();
    if (j.contains("n_groups")) s.n_groups = j.at("n_groups").get<std::size_t>();
    if (j.contains("group_proportions")) s.group_proportions = j.at("group_proportions").get<std::vector<double>>();
    if (j.contains("base_separation")) s.base_separation = j.at("base_separation").get<double>();
    if (j.contains("bias_strength")) s.bias_strength = j.at("bias_strength").get<double>();
    if (j.contains("label_noise")) s.label_noise = j.at("label_noise").get<double>();
    if (j.contains("max_rotation")) s.max_rotation = j.at("max_rotation").get<double>();
    if (j.contains("group_shift")) s.group_shift = j.at("group_shift").get<double>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("generator spec: ") + e.what());
  }
  return s;
}

nlohmann::json oracle_to_json(const std::vector<GroupOracle>& oracle) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& o : oracle) {
    groups.push_back({{"group", o.group},
                      {"count", o.count},
                      {"separation", o.separation},
                      {"flip_rate", o.flip_rate},
                      {"rotation", o.rotation},
                      {"shift", o.shift},
                      {"bayes_auc", o.bayes_auc}});
  }
  return {{"groups", groups}};
}

}  // namespace fairdi
